//! Exhaustive desk-scale oracles.
//!
//! Everything here works on support sets, never on symbol values: a support
//! assignment marks which variables of a code instance belong to a stopping
//! set, and a constituent accepts a pair of input/output supports iff the label
//! sequences trace a path of its extended trellis.

use std::collections::{HashMap, HashSet};

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;

use crate::codec_sim::{CodeInstance, Graph, TrellisModule};
use crate::enumerators::{Constituent, EnsembleSpec};
use crate::{Error, Result};

/// Input and output supports as bitmasks (bit i = position i).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SupportPair {
    pub input: u32,
    pub output: u32,
}

/// Union closure of the codeword support pairs of a terminated accumulator
/// (or its transpose, the feedforward code) of length `n`.
pub fn closure_support_pairs(kind: Constituent, n: usize) -> Result<HashSet<SupportPair>> {
    if n > 12 || n == 0 {
        return Err(Error::Guard(format!("closure oracle needs 1 <= N <= 12, got {n}")));
    }
    let mut gens = Vec::new();
    for u in 0u32..1 << n {
        // terminated: final accumulator state x_N = parity(u) must be 0
        if u.count_ones() % 2 == 1 {
            continue;
        }
        let mut x = 0u32;
        let mut s = 0u32;
        for k in 0..n {
            s ^= u >> k & 1;
            x |= s << k;
        }
        gens.push(SupportPair { input: u, output: x });
    }
    if kind == Constituent::Feedforward {
        for g in gens.iter_mut() {
            *g = SupportPair { input: g.output, output: g.input };
        }
    } else if kind == Constituent::Identity {
        return Err(Error::Guard("closure oracle covers accumulator and feedforward codes".into()));
    }
    let mut fam: HashSet<SupportPair> = HashSet::new();
    fam.insert(SupportPair { input: 0, output: 0 });
    for g in &gens {
        let add: Vec<SupportPair> =
            fam.iter().map(|p| SupportPair { input: p.input | g.input, output: p.output | g.output }).collect();
        fam.extend(add);
    }
    Ok(fam)
}

/// Counts of a support-pair family by (|W|, |S|).
pub fn pair_counts(fam: &HashSet<SupportPair>, n: usize) -> Vec<Vec<u64>> {
    let mut t = vec![vec![0u64; n + 1]; n + 1];
    for p in fam {
        t[p.input.count_ones() as usize][p.output.count_ones() as usize] += 1;
    }
    t
}

/// Does the extended trellis accept this pair of label sequences?
pub fn accepts(trellis: &TrellisModule, ins: &[bool], outs: &[bool], terminated: bool) -> bool {
    let mut s = 0u8;
    for (a, b) in ins.iter().zip(outs) {
        match trellis.step(s, *a as u8, *b as u8) {
            Some(t) => s = t,
            None => return false,
        }
    }
    !terminated || s == 0
}

/// Union of all accepted pairs whose supports lie within the given bounds.
fn max_pair_within(trellis: &TrellisModule, in_ok: &[bool], out_ok: &[bool], terminated: bool) -> (Vec<bool>, Vec<bool>) {
    let n = in_ok.len();
    let allowed = |e: &(u8, u8, u8, u8), k: usize| (e.1 == 0 || in_ok[k]) && (e.2 == 0 || out_ok[k]);
    let mut fwd = vec![0u8; n + 1];
    fwd[0] = 1;
    for k in 0..n {
        for e in &trellis.edges {
            if fwd[k] >> e.0 & 1 == 1 && allowed(e, k) {
                fwd[k + 1] |= 1 << e.3;
            }
        }
    }
    let mut bwd = vec![0u8; n + 1];
    bwd[n] = if terminated { 1 } else { 3 };
    for k in (0..n).rev() {
        for e in &trellis.edges {
            if bwd[k + 1] >> e.3 & 1 == 1 && allowed(e, k) {
                bwd[k] |= 1 << e.0;
            }
        }
    }
    let mut win = vec![false; n];
    let mut wout = vec![false; n];
    for k in 0..n {
        for e in &trellis.edges {
            if fwd[k] >> e.0 & 1 == 1 && bwd[k + 1] >> e.3 & 1 == 1 && allowed(e, k) {
                win[k] |= e.1 == 1;
                wout[k] |= e.2 == 1;
            }
        }
    }
    (win, wout)
}

/// Largest support assignment over all variables whose transmitted part lies
/// inside `bound` (greatest fixpoint of per-constituent pair acceptance).
pub fn greatest_chain(g: &Graph, bound: &[bool]) -> Vec<bool> {
    let mut on = vec![true; g.n_vars];
    for (t, &v) in g.transmitted.iter().enumerate() {
        on[v] = bound[t];
    }
    let trellises: Vec<TrellisModule> = g.chains.iter().map(|c| TrellisModule::for_kind(c.kind, true)).collect();
    loop {
        let mut changed = false;
        for (c, tr) in g.chains.iter().zip(&trellises) {
            let in_ok: Vec<bool> = c.inputs.iter().map(|&v| on[v]).collect();
            let out_ok: Vec<bool> = c.outputs.iter().map(|&v| on[v]).collect();
            let (win, wout) = max_pair_within(tr, &in_ok, &out_ok, g.terminated);
            for (vars, keep) in [(&c.inputs, &win), (&c.outputs, &wout)] {
                for (j, &v) in vars.iter().enumerate() {
                    if on[v] && !keep[j] {
                        on[v] = false;
                        changed = true;
                    }
                }
            }
        }
        if !changed {
            return on;
        }
    }
}

fn guard(g: &Graph) -> Result<()> {
    if g.transmitted.len() > 18 {
        return Err(Error::Guard(format!("stopping-set oracle limited to 18 transmitted positions, got {}", g.transmitted.len())));
    }
    Ok(())
}

fn mask_of(len: usize, set: &[usize]) -> Result<Vec<bool>> {
    let mut m = vec![false; len];
    for &i in set {
        if i >= len {
            return Err(Error::Range(format!("position {i} outside 0..{len}")));
        }
        m[i] = true;
    }
    Ok(m)
}

/// Definition-1 membership: a consistent support chain ends exactly on `s`.
pub fn is_stopping_set(inst: &CodeInstance, s: &[usize]) -> Result<bool> {
    let g = inst.graph();
    guard(&g)?;
    Ok(is_stopping_in(&g, &mask_of(g.transmitted.len(), s)?))
}

fn is_stopping_in(g: &Graph, s: &[bool]) -> bool {
    let on = greatest_chain(g, s);
    g.transmitted.iter().enumerate().all(|(t, &v)| on[v] == s[t])
}

/// Unique maximum stopping set inside `e`, by exhaustive search over subsets.
pub fn max_stopping_set_within(inst: &CodeInstance, e: &[usize]) -> Result<Vec<usize>> {
    let g = inst.graph();
    guard(&g)?;
    let mut e = e.to_vec();
    e.sort_unstable();
    e.dedup();
    if e.len() > 18 {
        return Err(Error::Guard(format!("|E| = {} exceeds 18", e.len())));
    }
    let n = g.transmitted.len();
    let mut union = 0u32;
    let mut mask = vec![false; n];
    for sub in 0u32..1 << e.len() {
        if sub & !union == 0 && sub != 0 {
            // already inside the union; it may still be a stopping set but adds nothing
            continue;
        }
        for (i, &p) in e.iter().enumerate() {
            mask[p] = sub >> i & 1 == 1;
        }
        if is_stopping_in(&g, &mask) {
            union |= sub;
        }
    }
    let best: Vec<usize> = e.iter().enumerate().filter(|(i, _)| union >> i & 1 == 1).map(|(_, &p)| p).collect();
    let m = mask_of(n, &best)?;
    if !is_stopping_in(&g, &m) {
        return Err(Error::Inconsistent("union of maximal stopping subsets is not a stopping set".into()));
    }
    Ok(best)
}

/// Enumerates every output support accepted together with a fixed input
/// support; `cap` bounds the output size.
fn accepted_outputs(trellis: &TrellisModule, ins: &[bool], terminated: bool, cap: usize) -> Vec<Vec<bool>> {
    fn rec(
        t: &TrellisModule,
        ins: &[bool],
        term: bool,
        cap: usize,
        k: usize,
        s: u8,
        cur: &mut Vec<bool>,
        used: usize,
        out: &mut Vec<Vec<bool>>,
    ) {
        if k == ins.len() {
            if !term || s == 0 {
                out.push(cur.clone());
            }
            return;
        }
        for e in &t.edges {
            if e.0 == s && e.1 == ins[k] as u8 && used + e.2 as usize <= cap {
                cur.push(e.2 == 1);
                rec(t, ins, term, cap, k + 1, e.3, cur, used + e.2 as usize, out);
                cur.pop();
            }
        }
    }
    let mut out = Vec::new();
    rec(trellis, ins, terminated, cap, 0, 0, &mut Vec::with_capacity(ins.len()), 0, &mut out);
    out
}

/// Number of support chains of a concrete instance by transmitted size
/// (sizes above `max_size` are not enumerated).
pub fn chain_counts(inst: &CodeInstance, max_size: usize) -> Result<Vec<u64>> {
    let g = inst.graph();
    if g.n_vars > 128 {
        return Err(Error::Guard(format!("{} variables exceed the 128-bit chain oracle", g.n_vars)));
    }
    if g.info.len() > 16 {
        return Err(Error::Guard("information length above 16".into()));
    }
    let trellises: Vec<TrellisModule> = g.chains.iter().map(|c| TrellisModule::for_kind(c.kind, true)).collect();
    let tx_bits: u128 = g.transmitted.iter().fold(0, |m, &v| m | 1 << v);
    // variables still needed after chain i (inputs of later chains, transmitted)
    let mut live_after = vec![tx_bits; g.chains.len()];
    for i in (0..g.chains.len()).rev() {
        let later: u128 = g.chains[i + 1..].iter().flat_map(|c| c.inputs.iter()).fold(0, |m, &v| m | 1 << v);
        live_after[i] = tx_bits | later;
    }
    let last_chain_outputs: u128 = g.chains.last().map_or(0, |c| c.outputs.iter().fold(0, |m, &v| m | 1 << v));
    let mut states: HashMap<u128, u64> = HashMap::new();
    for w in 0u32..1 << g.info.len() {
        let m = g.info.iter().enumerate().fold(0u128, |m, (i, &v)| if w >> i & 1 == 1 { m | 1 << v } else { m });
        *states.entry(m).or_default() += 1;
    }
    for (ci, c) in g.chains.iter().enumerate() {
        let last = ci + 1 == g.chains.len();
        let mut next: HashMap<u128, u64> = HashMap::new();
        for (m, cnt) in states {
            let ins: Vec<bool> = c.inputs.iter().map(|&v| m >> v & 1 == 1).collect();
            let already = (m & tx_bits & !last_chain_outputs).count_ones() as usize;
            let cap = if last { max_size.saturating_sub(already) } else { usize::MAX };
            if already > max_size {
                continue;
            }
            for outs in accepted_outputs(&trellises[ci], &ins, g.terminated, cap) {
                let mm = c.outputs.iter().zip(&outs).fold(m, |acc, (&v, &b)| if b { acc | 1 << v } else { acc });
                *next.entry(mm & live_after[ci]).or_default() += cnt;
            }
        }
        states = next;
    }
    let mut counts = vec![0u64; g.transmitted.len() + 1];
    for (m, cnt) in states {
        let h = (m & tx_bits).count_ones() as usize;
        if h <= max_size {
            counts[h] += cnt;
        }
    }
    Ok(counts)
}

/// Distinct stopping sets of a concrete instance by size (all 2^N subsets).
pub fn stopping_set_counts(inst: &CodeInstance) -> Result<Vec<u64>> {
    let g = inst.graph();
    let n = g.transmitted.len();
    if n > 16 {
        return Err(Error::Guard(format!("subset enumeration limited to N <= 16, got {n}")));
    }
    let mut counts = vec![0u64; n + 1];
    let mut mask = vec![false; n];
    for s in 0u32..1 << n {
        for (i, b) in mask.iter_mut().enumerate() {
            *b = s >> i & 1 == 1;
        }
        if is_stopping_in(&g, &mask) {
            counts[s.count_ones() as usize] += 1;
        }
    }
    Ok(counts)
}

/// Heap's algorithm over all permutations of 0..n.
pub fn all_permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut out = vec![a.clone()];
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Ensemble average of support-chain counts over every interleaver tuple,
/// with terminated constituents (the uniform-interleaver semantics).
pub fn exhaustive_ensemble_ssef(spec: &EnsembleSpec, n: usize) -> Result<Vec<BigRational>> {
    spec.validate()?;
    if !spec.lambda.is_one() {
        return Err(Error::Guard("exhaustive oracle does not cover puncturing".into()));
    }
    if n == 0 || n % spec.q != 0 || n > 12 {
        return Err(Error::Guard(format!("exhaustive oracle needs q | N <= 12, got N = {n}")));
    }
    let k = n / spec.q;
    let lens = CodeInstance::interleaver_lengths(spec, k);
    if lens.iter().any(|&l| l > 8) {
        return Err(Error::Guard("interleavers longer than 8 need sampled mode".into()));
    }
    let perm_sets: Vec<Vec<Vec<usize>>> = lens.iter().map(|&l| all_permutations(l)).collect();
    let total: usize = perm_sets.iter().map(|p| p.len()).product();
    if total > 2_000_000 {
        return Err(Error::Guard(format!("{total} interleaver tuples exceed the exhaustive budget")));
    }
    let mut sums = vec![0u64; n + 1];
    let mut idx = vec![0usize; perm_sets.len()];
    loop {
        let perms: Vec<Vec<usize>> = idx.iter().zip(&perm_sets).map(|(&i, s)| s[i].clone()).collect();
        let mut inst = CodeInstance::new(spec, k, perms, None)?;
        inst.terminated = true;
        for (s, c) in sums.iter_mut().zip(chain_counts(&inst, n)?) {
            *s += c;
        }
        // odometer over the tuple
        let mut d = 0;
        while d < idx.len() {
            idx[d] += 1;
            if idx[d] < perm_sets[d].len() {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
        if d == idx.len() {
            break;
        }
    }
    let den = BigInt::from(total);
    Ok(sums.into_iter().map(|s| BigRational::new(BigInt::from(BigUint::from(s)), den.clone())).collect())
}

/// Sample mean and standard error of the chain counts over random interleavers.
#[derive(Clone, Debug)]
pub struct SampledSsef {
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub samples: usize,
}

pub fn sampled_ensemble_ssef(spec: &EnsembleSpec, n: usize, samples: usize, seed: u64, max_size: usize) -> Result<SampledSsef> {
    use rayon::prelude::*;
    let rows: Vec<Result<Vec<u64>>> = (0..samples)
        .into_par_iter()
        .map(|s| {
            let mut inst = CodeInstance::random(spec, n, seed.wrapping_add(s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))?;
            inst.terminated = true;
            chain_counts(&inst, max_size)
        })
        .collect();
    let m = spec.lambda.times(n).unwrap_or(n);
    let mut sum = vec![0f64; m + 1];
    let mut sq = vec![0f64; m + 1];
    for r in rows {
        for (h, c) in r?.into_iter().enumerate() {
            sum[h] += c as f64;
            sq[h] += (c as f64).powi(2);
        }
    }
    let ns = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / ns).collect();
    let stderr = sq
        .iter()
        .zip(&mean)
        .map(|(q, mu)| ((q / ns - mu * mu).max(0.0) * ns / (ns - 1.0).max(1.0) / ns).sqrt())
        .collect();
    Ok(SampledSsef { mean, stderr, samples })
}

/// Exact rational sum helper for tests and the CLI.
pub fn rational_sum(v: &[BigRational]) -> BigRational {
    v.iter().fold(BigRational::zero(), |a, b| a + b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closure_n2() {
        let fam = closure_support_pairs(Constituent::Accumulator, 2).unwrap();
        let want: HashSet<SupportPair> =
            [SupportPair { input: 0, output: 0 }, SupportPair { input: 0b11, output: 0b01 }].into_iter().collect();
        assert_eq!(fam, want);
        let ff = closure_support_pairs(Constituent::Feedforward, 2).unwrap();
        assert!(ff.contains(&SupportPair { input: 0b01, output: 0b11 }));
        assert!(closure_support_pairs(Constituent::Accumulator, 13).is_err());
    }

    #[test]
    fn closure_is_union_closed() {
        let fam = closure_support_pairs(Constituent::Accumulator, 6).unwrap();
        for a in &fam {
            for b in &fam {
                assert!(fam.contains(&SupportPair { input: a.input | b.input, output: a.output | b.output }));
            }
        }
    }

    #[test]
    fn extended_acceptance_matches_closure() {
        // the extended trellis accepts exactly the closure pairs
        let n = 6;
        let fam = closure_support_pairs(Constituent::Accumulator, n).unwrap();
        let t = TrellisModule::accumulator(true);
        for w in 0u32..1 << n {
            for s in 0u32..1 << n {
                let ins: Vec<bool> = (0..n).map(|i| w >> i & 1 == 1).collect();
                let outs: Vec<bool> = (0..n).map(|i| s >> i & 1 == 1).collect();
                assert_eq!(accepts(&t, &ins, &outs, true), fam.contains(&SupportPair { input: w, output: s }));
            }
        }
    }

    #[test]
    fn permutations_complete() {
        let p = all_permutations(4);
        assert_eq!(p.len(), 24);
        let set: HashSet<Vec<usize>> = p.into_iter().collect();
        assert_eq!(set.len(), 24);
    }

    #[test]
    fn empty_and_singletons() {
        let inst = CodeInstance::random(&EnsembleSpec::rma(3, 2), 18, 5).unwrap();
        assert!(is_stopping_set(&inst, &[]).unwrap());
        for i in 0..18 {
            assert!(!is_stopping_set(&inst, &[i]).unwrap());
        }
        assert_eq!(max_stopping_set_within(&inst, &[]).unwrap(), Vec::<usize>::new());
    }

    #[test]
    fn full_erasure_is_stopping() {
        let inst = CodeInstance::random(&EnsembleSpec::rma(3, 2), 12, 2).unwrap();
        let all: Vec<usize> = (0..12).collect();
        assert!(is_stopping_set(&inst, &all).unwrap());
    }
}
