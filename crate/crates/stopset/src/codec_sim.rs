//! Encoders, interleavers, the BEC and iterative constituent MAP erasure decoding.
//!
//! A [`CodeInstance`] is turned into a [`Graph`]: a flat array of binary
//! variables (information bits, every constituent's output sequence) plus a
//! list of two-state chains. Information bits are shared by every constituent
//! that reads them, so repetition and branch equality constraints are implicit.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::enumerators::{Constituent, EnsembleSpec, Family};
use crate::{Error, Result};

/// Edge `(from, input, output, to)`.
pub type Edge = (u8, u8, u8, u8);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrellisModule {
    pub edges: Vec<Edge>,
    pub extended: bool,
}

impl TrellisModule {
    /// 1/(1+D): state is the last output.
    pub fn accumulator(extended: bool) -> Self {
        let mut edges = vec![(0, 0, 0, 0), (0, 1, 1, 1), (1, 0, 1, 1), (1, 1, 0, 0)];
        if extended {
            edges.push((1, 1, 1, 1));
        }
        TrellisModule { edges, extended }
    }

    /// 1+D: state is the last input.
    pub fn feedforward(extended: bool) -> Self {
        let mut edges = vec![(0, 0, 0, 0), (0, 1, 1, 1), (1, 0, 1, 0), (1, 1, 0, 1)];
        if extended {
            edges.push((1, 1, 1, 1));
        }
        TrellisModule { edges, extended }
    }

    pub fn for_kind(kind: Constituent, extended: bool) -> Self {
        match kind {
            Constituent::Feedforward => Self::feedforward(extended),
            _ => Self::accumulator(extended),
        }
    }

    /// The unique edge with the given start state and labels, if any.
    pub fn step(&self, from: u8, input: u8, output: u8) -> Option<u8> {
        self.edges.iter().find(|e| e.0 == from && e.1 == input && e.2 == output).map(|e| e.3)
    }
}

/// Concrete member of an ensemble.
///
/// RMA: `interleavers[l]` has length N and maps stage `l` input position
/// `perm[j]` to output `j` of the previous stage (`in[perm[j]] = prev[j]`).
/// HCC: `q` branch permutations of length K followed by the inner one of length M.
#[derive(Clone, Debug, Serialize)]
pub struct CodeInstance {
    pub spec: EnsembleSpec,
    pub k: usize,
    pub interleavers: Vec<Vec<usize>>,
    /// surviving positions of the last accumulator output, sorted
    pub puncture: Option<Vec<usize>>,
    pub seed: u64,
    /// chains end in the zero state (only used by the oracles)
    pub terminated: bool,
}

pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

pub fn random_permutation<R: Rng>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

impl CodeInstance {
    /// Interleaver lengths implied by the spec and information length.
    pub fn interleaver_lengths(spec: &EnsembleSpec, k: usize) -> Vec<usize> {
        let n = spec.q * k;
        match spec.family {
            Family::Rma => vec![n; spec.l],
            Family::Hcc => {
                let inner = (0..spec.q).filter(|&b| !spec.to_channel(b)).count() * k;
                let mut v = vec![k; spec.q];
                v.push(inner);
                v
            }
        }
    }

    pub fn new(spec: &EnsembleSpec, k: usize, interleavers: Vec<Vec<usize>>, puncture: Option<Vec<usize>>) -> Result<Self> {
        spec.validate()?;
        let lens = Self::interleaver_lengths(spec, k);
        if interleavers.len() != lens.len() {
            return Err(Error::InvalidSpec(format!("expected {} interleavers, got {}", lens.len(), interleavers.len())));
        }
        for (p, &len) in interleavers.iter().zip(&lens) {
            let mut seen = vec![false; len];
            if p.len() != len || p.iter().any(|&i| i >= len || std::mem::replace(&mut seen[i], true)) {
                return Err(Error::InvalidSpec(format!("interleaver is not a permutation of 0..{len}")));
            }
        }
        if let Some(pp) = &puncture {
            let n = spec.q * k;
            let m = spec.lambda.times(n).ok_or_else(|| Error::InvalidSpec("lambda*N not integral".into()))?;
            if pp.len() != m || pp.windows(2).any(|w| w[0] >= w[1]) || pp.iter().any(|&i| i >= n) {
                return Err(Error::InvalidSpec(format!("puncture pattern must be {m} sorted positions")));
            }
        }
        Ok(CodeInstance { spec: spec.clone(), k, interleavers, puncture, seed: 0, terminated: false })
    }

    /// Uniformly random interleavers (and puncturing) from `seed`.
    pub fn random(spec: &EnsembleSpec, n: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        if n == 0 || n % spec.q != 0 {
            return Err(Error::InvalidSpec(format!("q = {} does not divide N = {n}", spec.q)));
        }
        let k = n / spec.q;
        let mut rng = rng_stream(seed, 0);
        let perms = Self::interleaver_lengths(spec, k).into_iter().map(|len| random_permutation(len, &mut rng)).collect();
        let puncture = if spec.lambda.is_one() {
            None
        } else {
            let m = spec.lambda.times(n).ok_or_else(|| Error::InvalidSpec("lambda*N not integral".into()))?;
            let mut keep = random_permutation(n, &mut rng);
            keep.truncate(m);
            keep.sort_unstable();
            Some(keep)
        };
        let mut inst = Self::new(spec, k, perms, puncture)?;
        inst.seed = seed;
        Ok(inst)
    }

    pub fn graph(&self) -> Graph {
        Graph::build(self)
    }

    pub fn transmitted_len(&self) -> usize {
        self.graph().transmitted.len()
    }
}

#[derive(Clone, Debug)]
pub struct Chain {
    pub kind: Constituent,
    /// variable index of each input position
    pub inputs: Vec<usize>,
    pub outputs: Vec<usize>,
}

/// Variable-level view of a code instance.
#[derive(Clone, Debug)]
pub struct Graph {
    pub n_vars: usize,
    pub info: Vec<usize>,
    /// topologically ordered
    pub chains: Vec<Chain>,
    pub transmitted: Vec<usize>,
    pub terminated: bool,
}

impl Graph {
    pub fn build(inst: &CodeInstance) -> Graph {
        let spec = &inst.spec;
        let k = inst.k;
        let info: Vec<usize> = (0..k).collect();
        let mut n_vars = k;
        let mut chains = Vec::new();
        let fresh = |len: usize, n_vars: &mut usize| -> Vec<usize> {
            let v: Vec<usize> = (*n_vars..*n_vars + len).collect();
            *n_vars += len;
            v
        };
        let transmitted = match spec.family {
            Family::Rma => {
                let n = spec.q * k;
                let mut prev: Vec<usize> = (0..n).map(|j| info[j / spec.q]).collect();
                for perm in &inst.interleavers {
                    let mut inputs = vec![0; n];
                    for (j, &p) in perm.iter().enumerate() {
                        inputs[p] = prev[j];
                    }
                    let outputs = fresh(n, &mut n_vars);
                    prev = outputs.clone();
                    chains.push(Chain { kind: Constituent::Accumulator, inputs, outputs });
                }
                match &inst.puncture {
                    Some(keep) => keep.iter().map(|&i| prev[i]).collect(),
                    None => prev,
                }
            }
            Family::Hcc => {
                let mut direct = Vec::new();
                let mut to_inner = Vec::new();
                for (b, kind) in spec.hcc_branches().into_iter().enumerate() {
                    let perm = &inst.interleavers[b];
                    let mut inputs = vec![0; k];
                    for (i, &p) in perm.iter().enumerate() {
                        inputs[p] = info[i];
                    }
                    let outputs = if kind == Constituent::Identity {
                        inputs
                    } else {
                        let outputs = fresh(k, &mut n_vars);
                        chains.push(Chain { kind, inputs, outputs: outputs.clone() });
                        outputs
                    };
                    if spec.to_channel(b) {
                        direct.extend(outputs);
                    } else {
                        to_inner.extend(outputs);
                    }
                }
                let perm = inst.interleavers.last().unwrap();
                let mut inputs = vec![0; to_inner.len()];
                for (j, &p) in perm.iter().enumerate() {
                    inputs[p] = to_inner[j];
                }
                let outputs = fresh(inputs.len(), &mut n_vars);
                chains.push(Chain { kind: Constituent::Accumulator, inputs, outputs: outputs.clone() });
                direct.extend(outputs);
                direct
            }
        };
        Graph { n_vars, info, chains, transmitted, terminated: inst.terminated }
    }

    /// Values of every variable for the given information bits.
    pub fn encode_all(&self, info_bits: &[u8]) -> Vec<u8> {
        let mut v = vec![0u8; self.n_vars];
        for (&i, &b) in self.info.iter().zip(info_bits) {
            v[i] = b & 1;
        }
        for c in &self.chains {
            let mut s = 0u8;
            for (&i, &o) in c.inputs.iter().zip(&c.outputs) {
                let u = v[i];
                v[o] = u ^ s;
                s = if c.kind == Constituent::Feedforward { u } else { v[o] };
            }
        }
        v
    }
}

/// Transmitted codeword for `info_bits` (length K).
pub fn encode(inst: &CodeInstance, info_bits: &[u8]) -> Result<Vec<u8>> {
    if info_bits.len() != inst.k {
        return Err(Error::Range(format!("expected {} information bits, got {}", inst.k, info_bits.len())));
    }
    let g = inst.graph();
    let v = g.encode_all(info_bits);
    Ok(g.transmitted.iter().map(|&i| v[i]).collect())
}

/// Sorted erased positions of a transmitted word.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize)]
pub struct ErasurePattern {
    pub erased: Vec<usize>,
}

impl ErasurePattern {
    pub fn new(mut erased: Vec<usize>) -> Self {
        erased.sort_unstable();
        erased.dedup();
        ErasurePattern { erased }
    }
}

pub fn bec_transmit<R: Rng>(len: usize, p: f64, rng: &mut R) -> ErasurePattern {
    ErasurePattern { erased: (0..len).filter(|_| rng.gen::<f64>() < p).collect() }
}

/// Symbol knowledge for one chain position: `None` is an erasure.
pub type Known = Option<u8>;

/// Exact MAP erasure resolution on a two-state chain (basic trellis).
///
/// A symbol is resolved iff every trellis path consistent with the known
/// symbols carries the same value there. Returns the updated input and
/// output knowledge.
pub fn constituent_map_erase(
    trellis: &TrellisModule,
    ins: &[Known],
    outs: &[Known],
    terminated: bool,
) -> Result<(Vec<Known>, Vec<Known>)> {
    let n = ins.len();
    let ok = |e: &Edge, k: usize| ins[k].map_or(true, |v| v == e.1) && outs[k].map_or(true, |v| v == e.2);
    // reachable state sets as bitmasks over {0,1}
    let mut fwd = vec![0u8; n + 1];
    fwd[0] = 1;
    for k in 0..n {
        for e in &trellis.edges {
            if fwd[k] >> e.0 & 1 == 1 && ok(e, k) {
                fwd[k + 1] |= 1 << e.3;
            }
        }
    }
    let mut bwd = vec![0u8; n + 1];
    bwd[n] = if terminated { 1 } else { 3 };
    for k in (0..n).rev() {
        for e in &trellis.edges {
            if bwd[k + 1] >> e.3 & 1 == 1 && ok(e, k) {
                bwd[k] |= 1 << e.0;
            }
        }
    }
    if fwd[n] & bwd[n] == 0 {
        return Err(Error::Inconsistent("no trellis path matches the known symbols".into()));
    }
    let mut new_in = ins.to_vec();
    let mut new_out = outs.to_vec();
    for k in 0..n {
        // label masks seen on edges lying on a complete path
        let (mut seen_in, mut seen_out) = (0u8, 0u8);
        for e in &trellis.edges {
            if fwd[k] >> e.0 & 1 == 1 && bwd[k + 1] >> e.3 & 1 == 1 && ok(e, k) {
                seen_in |= 1 << e.1;
                seen_out |= 1 << e.2;
            }
        }
        if new_in[k].is_none() && seen_in != 3 {
            new_in[k] = Some(seen_in >> 1);
        }
        if new_out[k].is_none() && seen_out != 3 {
            new_out[k] = Some(seen_out >> 1);
        }
    }
    Ok((new_in, new_out))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DecodeResult {
    /// erased transmitted positions left unresolved
    pub residual: Vec<usize>,
    pub iterations: usize,
    pub success: bool,
    /// every resolved value matched the reference codeword
    pub values_ok: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Schedule {
    RoundRobin,
    Reversed,
}

/// Round-robin activation of every constituent eraser until a full sweep
/// resolves nothing. `all_values` is the full variable assignment of the
/// transmitted codeword (see [`Graph::encode_all`]).
pub fn iterative_decode(inst: &CodeInstance, pattern: &ErasurePattern, all_values: &[u8]) -> DecodeResult {
    decode_graph(&inst.graph(), pattern, all_values, Schedule::RoundRobin)
}

pub fn decode_graph(g: &Graph, pattern: &ErasurePattern, all_values: &[u8], schedule: Schedule) -> DecodeResult {
    let mut known: Vec<Known> = vec![None; g.n_vars];
    let mut erased_mask = vec![false; g.transmitted.len()];
    for &e in &pattern.erased {
        erased_mask[e] = true;
    }
    for (t, &v) in g.transmitted.iter().enumerate() {
        if !erased_mask[t] {
            known[v] = Some(all_values[v]);
        }
    }
    let order: Vec<usize> = match schedule {
        Schedule::RoundRobin => (0..g.chains.len()).collect(),
        Schedule::Reversed => (0..g.chains.len()).rev().collect(),
    };
    let trellises: Vec<TrellisModule> = g.chains.iter().map(|c| TrellisModule::for_kind(c.kind, false)).collect();
    let mut iterations = 0;
    let mut values_ok = true;
    loop {
        iterations += 1;
        let mut changed = false;
        for &ci in &order {
            let c = &g.chains[ci];
            let ins: Vec<Known> = c.inputs.iter().map(|&i| known[i]).collect();
            let outs: Vec<Known> = c.outputs.iter().map(|&i| known[i]).collect();
            let (ni, no) = match constituent_map_erase(&trellises[ci], &ins, &outs, g.terminated) {
                Ok(r) => r,
                Err(_) => {
                    values_ok = false;
                    continue;
                }
            };
            for (vars, (old, new)) in [(&c.inputs, (&ins, &ni)), (&c.outputs, (&outs, &no))] {
                for (j, &var) in vars.iter().enumerate() {
                    if old[j].is_none() && new[j].is_some() && known[var].is_none() {
                        known[var] = new[j];
                        values_ok &= new[j] == Some(all_values[var]);
                        changed = true;
                    }
                }
            }
        }
        let done = pattern.erased.iter().all(|&t| known[g.transmitted[t]].is_some());
        if !changed || done {
            break;
        }
    }
    let residual: Vec<usize> = pattern.erased.iter().copied().filter(|&t| known[g.transmitted[t]].is_none()).collect();
    DecodeResult { success: residual.is_empty(), residual, iterations, values_ok }
}

#[derive(Clone, Debug, Serialize)]
pub struct McRow {
    pub p: f64,
    pub trials: usize,
    pub fer: f64,
    pub fer_ci_low: f64,
    pub fer_ci_high: f64,
    pub avg_residual: f64,
}

/// 95% Wilson score interval.
pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054;
    let nf = n as f64;
    let ph = successes as f64 / nf;
    let den = 1.0 + z * z / nf;
    let centre = (ph + z * z / (2.0 * nf)) / den;
    let half = z * (ph * (1.0 - ph) / nf + z * z / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Frame erasure rate over a grid of channel erasure probabilities.
///
/// With `fixed = None` every trial draws fresh interleavers (ensemble
/// average); otherwise the given instance is reused.
pub fn monte_carlo(
    spec: &EnsembleSpec,
    n: usize,
    p_grid: &[f64],
    trials: usize,
    seed: u64,
    fixed: Option<&CodeInstance>,
) -> Result<Vec<McRow>> {
    use rayon::prelude::*;
    let fixed_graph = fixed.map(|i| i.graph());
    let mut rows = Vec::new();
    for (pi, &p) in p_grid.iter().enumerate() {
        let outcomes: Vec<Result<(bool, usize)>> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let stream = ((pi as u64) << 40) | t as u64;
                let mut rng = rng_stream(seed, stream + 1);
                let g = match &fixed_graph {
                    Some(g) => g.clone(),
                    None => CodeInstance::random(spec, n, rng.gen())?.graph(),
                };
                let info: Vec<u8> = (0..g.info.len()).map(|_| rng.gen_range(0..2)).collect();
                let vals = g.encode_all(&info);
                let pat = bec_transmit(g.transmitted.len(), p, &mut rng);
                let r = decode_graph(&g, &pat, &vals, Schedule::RoundRobin);
                Ok((!r.success, r.residual.len()))
            })
            .collect();
        let mut fails = 0;
        let mut resid = 0usize;
        for o in outcomes {
            let (f, r) = o?;
            fails += f as usize;
            resid += r;
        }
        let (lo, hi) = wilson(fails, trials);
        rows.push(McRow {
            p,
            trials,
            fer: fails as f64 / trials as f64,
            fer_ci_low: lo,
            fer_ci_high: hi,
            avg_residual: resid as f64 / trials as f64,
        });
    }
    Ok(rows)
}
