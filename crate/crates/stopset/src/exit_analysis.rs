//! EXIT functions on the BEC and iterative decoding thresholds.
//!
//! Everything is tracked as erasure probabilities internally (`1 - MI`); the
//! public curve functions speak mutual information.

use rand::Rng;
use serde::Serialize;

use crate::codec_sim::{constituent_map_erase, rng_stream, Known, TrellisModule};
use crate::enumerators::{Constituent, EnsembleSpec};
use crate::{Error, Family, Result};

/// `1 - prod(1 - I_i)`.
pub fn mi_combine(values: &[f64]) -> Result<f64> {
    let mut e = 1.0;
    for &v in values {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Range(format!("mutual information {v} not in [0,1]")));
        }
        e *= 1.0 - v;
    }
    Ok(1.0 - e)
}

/// Extrinsic MI on each replica of a length-`q` repetition code.
pub fn exit_repetition(q: usize, i_ax: f64) -> f64 {
    1.0 - (1.0 - i_ax).powi(q as i32 - 1)
}

/// Erasure version of the accumulator EXIT: `(e_u, e_x)` from the a-priori
/// erasure probabilities. `f` is the steady-state probability that the
/// state is unknown after a forward pass; its equation is linear so the
/// smallest root is explicit.
fn acc_erasure(qu: f64, qx: f64) -> (f64, f64) {
    let d = 1.0 - qx * (1.0 - qu);
    let f = if d > 0.0 { qx * qu / d } else { 1.0 };
    (1.0 - (1.0 - f) * (1.0 - f), (1.0 - (1.0 - f) * (1.0 - qu)).powi(2))
}

/// The 1+D code has the accumulator's constraint `u_k + x_k + x_{k-1} = 0`
/// with the roles of `u` and `x` swapped.
fn ff_erasure(qu: f64, qx: f64) -> (f64, f64) {
    let (ex, eu) = acc_erasure(qx, qu);
    (eu, ex)
}

fn constituent_erasure(kind: Constituent, qu: f64, qx: f64) -> (f64, f64) {
    match kind {
        Constituent::Accumulator => acc_erasure(qu, qx),
        Constituent::Feedforward => ff_erasure(qu, qx),
        Constituent::Identity => (qx, qu),
    }
}

/// `(I_eu, I_ex)` of the 1/(1+D) accumulator.
pub fn exit_accumulator(i_au: f64, i_ax: f64) -> (f64, f64) {
    let (eu, ex) = acc_erasure(1.0 - i_au, 1.0 - i_ax);
    (1.0 - eu, 1.0 - ex)
}

/// `(I_eu, I_ex)` of the 1+D code.
pub fn exit_feedforward(i_au: f64, i_ax: f64) -> (f64, f64) {
    let (eu, ex) = ff_erasure(1.0 - i_au, 1.0 - i_ax);
    (1.0 - eu, 1.0 - ex)
}

pub const FIXED_POINT_TOL: f64 = 1e-12;
pub const MAX_SWEEPS: usize = 10_000;

/// Message state of the whole decoder as erasure probabilities.
#[derive(Clone, Debug)]
enum Evolution {
    /// `up[l]`: extrinsic of stage `l+1` on its input, `down[l]`: a-priori
    /// erasure on the input of stage `l+1` (stage 0 is the repetition code).
    Rma { q: usize, up: Vec<f64>, down: Vec<f64> },
    /// per-branch `(e_u, e_x)` plus the inner accumulator's input extrinsic
    Hcc { kinds: Vec<Constituent>, to_channel: Vec<bool>, eu: Vec<f64>, ex: Vec<f64>, inner_eu: f64 },
}

impl Evolution {
    fn new(spec: &EnsembleSpec) -> Evolution {
        match spec.family {
            Family::Rma => Evolution::Rma { q: spec.q, up: vec![1.0; spec.l], down: vec![1.0; spec.l] },
            Family::Hcc => Evolution::Hcc {
                kinds: spec.hcc_branches(),
                to_channel: (0..spec.q).map(|i| spec.to_channel(i)).collect(),
                eu: vec![1.0; spec.q],
                ex: vec![1.0; spec.q],
                inner_eu: 1.0,
            },
        }
    }

    /// One sweep of the outer part with the given a-priori erasure on the
    /// outer code symbols and channel erasure `p` for directly transmitted
    /// branches. Returns the averaged outer extrinsic erasure on its code
    /// symbols.
    fn outer_sweep(&mut self, qx_outer: f64, p: f64) -> f64 {
        match self {
            Evolution::Rma { q, up, down } => {
                let l = up.len();
                down[0] = up[0].powi(*q as i32 - 1);
                if l == 1 {
                    return down[0];
                }
                // outer accumulators 1..l-1
                for s in 1..l {
                    let qx = if s + 1 < l { up[s] } else { qx_outer };
                    let (eu, ex) = acc_erasure(down[s - 1], qx);
                    up[s - 1] = eu;
                    down[s] = ex;
                }
                down[l - 1]
            }
            Evolution::Hcc { kinds, to_channel, eu, ex, .. } => {
                for i in 0..kinds.len() {
                    let qu: f64 = (0..kinds.len()).filter(|&j| j != i).map(|j| eu[j]).product();
                    let qx = if to_channel[i] { p } else { qx_outer };
                    (eu[i], ex[i]) = constituent_erasure(kinds[i], qu, qx);
                }
                let (mut s, mut c) = (0.0, 0);
                for i in 0..kinds.len() {
                    if !to_channel[i] {
                        s += ex[i];
                        c += 1;
                    }
                }
                s / c as f64
            }
        }
    }

    /// Inner accumulator extrinsic on its input, stored for the next sweep.
    fn inner_sweep(&mut self, qu_inner: f64, p: f64) -> f64 {
        let (eu, _) = acc_erasure(qu_inner, p);
        match self {
            Evolution::Rma { up, .. } => {
                let l = up.len();
                up[l - 1] = eu;
            }
            Evolution::Hcc { inner_eu, .. } => *inner_eu = eu,
        }
        eu
    }

    /// All messages, for convergence checks.
    fn state(&self) -> Vec<f64> {
        match self {
            Evolution::Rma { up, down, .. } => up.iter().chain(down).copied().collect(),
            Evolution::Hcc { eu, ex, inner_eu, .. } => eu.iter().chain(ex).chain([inner_eu]).copied().collect(),
        }
    }

    fn inner_extrinsic(&self) -> f64 {
        match self {
            Evolution::Rma { up, .. } => up[up.len() - 1],
            Evolution::Hcc { inner_eu, .. } => *inner_eu,
        }
    }

    /// Erasure probability of the information bits after combining all
    /// incoming extrinsics.
    fn info_erasure(&self) -> f64 {
        match self {
            Evolution::Rma { q, up, .. } => up[0].powi(*q as i32),
            Evolution::Hcc { eu, .. } => eu.iter().product(),
        }
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExitCurve {
    /// a-priori MI grid
    pub grid: Vec<f64>,
    /// extrinsic MI per grid point
    pub values: Vec<f64>,
    pub label: String,
    /// internal sweeps used per grid point (outer curves only)
    pub sweeps: Vec<usize>,
    pub converged: bool,
}

/// EXIT curve of the outer structure (repeat + outer accumulators, or the
/// parallel branches) against the a-priori MI on its code symbols, with the
/// outer part iterated internally to a fixed point. Branches sent straight
/// to the channel see erasure `p_ch`; the curve averages over the branches
/// that feed the inner accumulator.
pub fn compound_outer_exit(spec: &EnsembleSpec, p_ch: f64, grid: &[f64]) -> Result<ExitCurve> {
    spec.validate()?;
    let mut values = Vec::with_capacity(grid.len());
    let mut sweeps = Vec::with_capacity(grid.len());
    let mut converged = true;
    for &ia in grid {
        if !(0.0..=1.0).contains(&ia) {
            return Err(Error::Range(format!("a-priori MI {ia} not in [0,1]")));
        }
        let mut ev = Evolution::new(spec);
        let mut prev = ev.state();
        let mut n = 0;
        let mut out = 1.0;
        while n < MAX_SWEEPS {
            out = ev.outer_sweep(1.0 - ia, p_ch);
            n += 1;
            let now = ev.state();
            if max_diff(&now, &prev) < FIXED_POINT_TOL {
                break;
            }
            prev = now;
        }
        converged &= n < MAX_SWEEPS;
        values.push(1.0 - out);
        sweeps.push(n);
    }
    Ok(ExitCurve { grid: grid.to_vec(), values, label: "outer".into(), sweeps, converged })
}

/// EXIT curve of the inner accumulator: extrinsic MI on its input versus the
/// a-priori MI on its input, with the channel on its output.
pub fn inner_exit(p_ch: f64, grid: &[f64]) -> ExitCurve {
    let values = grid.iter().map(|&ia| exit_accumulator(ia, 1.0 - p_ch).0).collect();
    ExitCurve { grid: grid.to_vec(), values, label: "inner".into(), sweeps: vec![], converged: true }
}

#[derive(Clone, Debug, Serialize)]
pub struct Evolved {
    pub success: bool,
    pub sweeps: usize,
    pub info_erasure: f64,
}

/// Full message-passing evolution of the whole decoder at channel erasure `p`.
pub fn evolve(spec: &EnsembleSpec, p: f64) -> Evolved {
    let mut ev = Evolution::new(spec);
    let mut prev = ev.state();
    for sweep in 1..=MAX_SWEEPS {
        let qx = ev.inner_extrinsic();
        let out = ev.outer_sweep(qx, p);
        ev.inner_sweep(out, p);
        let e = ev.info_erasure();
        if e <= 1e-6 {
            return Evolved { success: true, sweeps: sweep, info_erasure: e };
        }
        let now = ev.state();
        if max_diff(&now, &prev) < FIXED_POINT_TOL {
            return Evolved { success: false, sweeps: sweep, info_erasure: e };
        }
        prev = now;
    }
    Evolved { success: false, sweeps: MAX_SWEEPS, info_erasure: ev.info_erasure() }
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdResult {
    pub spec: String,
    pub p_star: f64,
    /// evolution sweeps at the final lower bracket
    pub iterations: usize,
    pub bisections: usize,
    pub tolerance: f64,
}

/// Largest channel erasure probability for which decoding succeeds, by
/// bisection to width `1e-5`.
pub fn threshold(spec: &EnsembleSpec) -> Result<ThresholdResult> {
    spec.validate()?;
    if !spec.lambda.is_one() {
        return Err(Error::InvalidSpec("thresholds are computed for unpunctured ensembles".into()));
    }
    let tolerance = 1e-5;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut iterations = evolve(spec, lo).sweeps;
    let mut bisections = 0;
    while hi - lo > tolerance {
        let mid = 0.5 * (lo + hi);
        let r = evolve(spec, mid);
        if r.success {
            lo = mid;
            iterations = r.sweeps;
        } else {
            hi = mid;
        }
        bisections += 1;
    }
    Ok(ThresholdResult { spec: spec.to_string(), p_star: lo, iterations, bisections, tolerance })
}

/// Monte Carlo estimate of one constituent's extrinsic erasure
/// probabilities, with a standard error from batch means.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct McExit {
    pub eu: f64,
    pub eu_sigma: f64,
    pub ex: f64,
    pub ex_sigma: f64,
}

/// Simulate a length-`n` chain of `kind` with independently erased inputs
/// (probability `qu`) and outputs (`qx`) and decode it exactly.
///
/// The extrinsic value of a symbol does not depend on its own observation,
/// so the extrinsic erasure rate is the residual rate among symbols whose
/// own observation was erased.
pub fn mc_exit(kind: Constituent, qu: f64, qx: f64, n: usize, seed: u64) -> Result<McExit> {
    let trellis = TrellisModule::for_kind(kind, false);
    let mut rng = rng_stream(seed, 0);
    let u: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
    let mut x = vec![0u8; n];
    let mut s = 0u8;
    for k in 0..n {
        let edge = trellis.edges.iter().find(|e| e.0 == s && e.1 == u[k]).expect("complete trellis");
        x[k] = edge.2;
        s = edge.3;
    }
    let ins: Vec<Known> = u.iter().map(|&b| (!rng.gen_bool(qu)).then_some(b)).collect();
    let outs: Vec<Known> = x.iter().map(|&b| (!rng.gen_bool(qx)).then_some(b)).collect();
    let (ri, ro) = constituent_map_erase(&trellis, &ins, &outs, false)?;
    let (eu, eu_sigma) = batch_rate(&ins, &ri);
    let (ex, ex_sigma) = batch_rate(&outs, &ro);
    Ok(McExit { eu, eu_sigma, ex, ex_sigma })
}

/// Fraction of erased-a-priori symbols left unresolved, with a batch-means
/// standard error (neighbouring symbols are correlated along the chain).
fn batch_rate(before: &[Known], after: &[Known]) -> (f64, f64) {
    const BATCHES: usize = 200;
    let len = before.len() / BATCHES;
    let mut rates = Vec::new();
    let (mut tot_e, mut tot_r) = (0usize, 0usize);
    for b in 0..BATCHES {
        let (mut e, mut r) = (0usize, 0usize);
        for k in b * len..(b + 1) * len {
            if before[k].is_none() {
                e += 1;
                r += after[k].is_none() as usize;
            }
        }
        tot_e += e;
        tot_r += r;
        if e > 0 {
            rates.push((r as f64 / e as f64, e as f64));
        }
    }
    if tot_e == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = tot_r as f64 / tot_e as f64;
    // ratio estimator over batches
    let m = rates.len() as f64;
    let wbar = tot_e as f64 / m;
    let var = rates.iter().map(|(r, w)| (w / wbar * (r - mean)).powi(2)).sum::<f64>() / (m * (m - 1.0));
    (mean, var.sqrt())
}

/// Closed-form erasure pair for comparison with [`mc_exit`].
pub fn closed_form_erasure(kind: Constituent, qu: f64, qx: f64) -> (f64, f64) {
    constituent_erasure(kind, qu, qx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_examples() {
        assert!((mi_combine(&[0.5, 0.5]).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(mi_combine(&[1.0, 0.3]).unwrap(), 1.0);
        assert!((mi_combine(&[0.0, 0.3]).unwrap() - 0.3).abs() < 1e-15);
        assert!(mi_combine(&[1.2]).is_err());
    }

    #[test]
    fn repetition_examples() {
        assert_eq!(exit_repetition(3, 0.0), 0.0);
        assert_eq!(exit_repetition(3, 1.0), 1.0);
        assert!((exit_repetition(3, 0.5) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn accumulator_examples() {
        assert_eq!(exit_accumulator(1.0, 0.3), (1.0, 1.0));
        assert_eq!(exit_accumulator(0.2, 1.0).0, 1.0);
        let (eu, _) = exit_accumulator(0.5, 0.5);
        assert!((eu - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(exit_feedforward(0.0, 0.0), (0.0, 0.0));
        assert_eq!(exit_feedforward(1.0, 0.2).1, 1.0);
    }

    #[test]
    fn curves_are_monotone() {
        let g: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
        for f in [exit_accumulator, exit_feedforward] {
            for &a in &g {
                for w in g.windows(2) {
                    let (x0, y0) = f(a, w[0]);
                    let (x1, y1) = f(a, w[1]);
                    assert!(x1 >= x0 - 1e-15 && y1 >= y0 - 1e-15);
                    let (x0, y0) = f(w[0], a);
                    let (x1, y1) = f(w[1], a);
                    assert!(x1 >= x0 - 1e-15 && y1 >= y0 - 1e-15);
                    assert!((0.0..=1.0).contains(&x1) && (0.0..=1.0).contains(&y1));
                }
            }
        }
    }

    #[test]
    fn outer_curve_endpoints() {
        for s in ["rma:q=3,L=2", "rma:q=3,L=3", "hcc:type=1,q=4", "hcc:type=4,q=4"] {
            let spec: EnsembleSpec = s.parse().unwrap();
            let c = compound_outer_exit(&spec, 0.5, &[0.0, 0.5, 1.0]).unwrap();
            assert!(c.converged);
            assert!((c.values[2] - 1.0).abs() < 1e-12, "{s} {:?}", c);
            if !s.contains("type=4") {
                assert_eq!(c.values[0], 0.0, "{s}");
            }
        }
        let spec: EnsembleSpec = "hcc:type=4,q=4".parse().unwrap();
        let c = compound_outer_exit(&spec, 0.5, &[0.3, 0.5, 0.7]).unwrap();
        assert!(c.sweeps.iter().all(|&n| n < 100), "{:?}", c.sweeps);
    }

    #[test]
    fn raa_threshold() {
        let t = threshold(&EnsembleSpec::rma(3, 2)).unwrap();
        assert!((t.p_star - 0.4965).abs() < 1e-3, "{}", t.p_star);
    }

    #[test]
    fn type1_matches_raa() {
        for q in [3, 4] {
            let a = threshold(&EnsembleSpec::rma(q, 2)).unwrap().p_star;
            let b = threshold(&EnsembleSpec::hcc(1, q)).unwrap().p_star;
            assert!((a - b).abs() < 2e-5, "{q}: {a} {b}");
        }
    }

    #[test]
    fn monte_carlo_spot_check() {
        let m = mc_exit(Constituent::Accumulator, 0.5, 0.5, 20_000, 3).unwrap();
        let (eu, ex) = closed_form_erasure(Constituent::Accumulator, 0.5, 0.5);
        assert!((m.eu - eu).abs() < 4.0 * m.eu_sigma, "{m:?} {eu}");
        assert!((m.ex - ex).abs() < 4.0 * m.ex_sigma, "{m:?} {ex}");
    }
}
