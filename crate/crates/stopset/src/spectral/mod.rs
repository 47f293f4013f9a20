//! Asymptotic spectral shape of stopping-set sizes and the growth-rate
//! coefficient rho0.
//!
//! Two independent maximisers are run for every RMA point: the traced
//! stationary branches of [`stationary`] and multi-start coordinate ascent
//! over the support fractions with the gamma maximisation done in closed
//! form ([`acc::phi_acc`]). HCC points use ascent over the full variable set
//! and over a reduced, branch-symmetric set.

pub mod acc;
pub mod ascent;
pub mod hcc;
pub mod stationary;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::Serialize;

pub use acc::{phi_acc, psi};
use ascent::{multi_start, Problem};
use hcc::HccShape;
use stationary::{Chain, Output, Sweep};

use crate::enumerators::{EnsembleSpec, Family};
use crate::numerics::{h2, scaled_h};
use crate::{Error, Result};

/// Support fractions of one RMA chain: `betas[0]` is the input weight and
/// `betas[L]` the output; `gammas[l-1]` belongs to stage `l`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpectralPointVars {
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl SpectralPointVars {
    pub fn stages(&self) -> usize {
        self.gammas.len()
    }

    pub fn rho(&self) -> f64 {
        *self.betas.last().unwrap()
    }

    pub fn is_feasible(&self, tol: f64) -> bool {
        if self.betas.len() != self.gammas.len() + 1 || self.gammas.is_empty() {
            return false;
        }
        let unit = |x: f64| x >= -tol && x <= 1.0 + tol;
        if !self.betas.iter().chain(&self.gammas).all(|&x| unit(x)) {
            return false;
        }
        self.gammas.iter().enumerate().all(|(i, &g)| {
            let (p, b) = (self.betas[i], self.betas[i + 1]);
            g >= (p - b).max(0.0) - tol && g <= b.min(1.0 - b).min(p / 2.0) + tol
        })
    }
}

/// The RMA objective with explicit gammas.
pub fn f_rma(v: &SpectralPointVars, q: usize) -> Result<f64> {
    if !v.is_feasible(1e-12) {
        return Err(Error::Domain(format!("infeasible spectral point {v:?}")));
    }
    let mut f = h2(v.betas[0]) / q as f64;
    for (i, &g) in v.gammas.iter().enumerate() {
        let (p, b) = (v.betas[i], v.betas[i + 1]);
        f += acc::acc_terms(p, b, g) - h2(p);
    }
    Ok(f)
}

fn dh(x: f64) -> f64 {
    ((1.0 - x) / x).ln()
}

/// Gradient of [`f_rma`] with respect to `(beta_0..beta_{L-1}, gamma_1..gamma_L)`
/// at an interior point.
pub fn grad_f_rma(v: &SpectralPointVars, q: usize) -> Vec<f64> {
    let l = v.stages();
    let mut g = vec![0.0; 2 * l];
    g[0] = dh(v.betas[0]) / q as f64;
    for s in 0..l {
        let (p, b, c) = (v.betas[s], v.betas[s + 1], v.gammas[s]);
        // input side of stage s+1
        g[s] += ((b - p + c) / (p - 2.0 * c)).ln() - dh(p);
        // output side
        if s + 1 < l {
            g[s + 1] += (b / (b - c)).ln() - ((1.0 - b) / (1.0 - b - c)).ln() + ((b - c) / (b - p + c)).ln();
        }
        g[l + s] = acc::acc_dgamma(p, b, c);
    }
    g
}

/// Which maximiser(s) to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Stationary,
    Ascent,
    Both,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub method: Method,
    pub starts: usize,
    pub seed: u64,
    pub sweep_points: usize,
    pub agree_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { method: Method::Both, starts: 64, seed: 0x5eed, sweep_points: 3000, agree_tol: 1e-6 }
    }
}

/// One spectral evaluation with diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct RsResult {
    pub rho: f64,
    pub value: f64,
    /// value from the first method (stationary branches, or the symmetric
    /// reduction for HCC)
    pub method_a: Option<f64>,
    /// value from multi-start ascent
    pub method_b: Option<f64>,
    pub disagreement: bool,
    /// maximiser of the reported value
    pub argmax: Vec<f64>,
    /// reported maximiser is an interior stationary point of the full objective
    pub interior: bool,
}

fn combine(rho: f64, a: Option<(f64, Vec<f64>, bool)>, b: Option<(f64, Vec<f64>)>, tol: f64) -> RsResult {
    let va = a.as_ref().map(|x| x.0);
    let vb = b.as_ref().map(|x| x.0);
    let disagreement = matches!((va, vb), (Some(x), Some(y)) if (x - y).abs() > tol);
    let (value, argmax, interior) = match (a, b) {
        (Some(a), Some(b)) => {
            // ties go to the stationary candidate, which carries the interior flag
            if a.0 >= b.0 - 1e-12 {
                a
            } else {
                (b.0, b.1, false)
            }
        }
        (Some(a), None) => a,
        (None, Some(b)) => (b.0, b.1, false),
        (None, None) => (f64::NEG_INFINITY, vec![], false),
    };
    RsResult { rho, value, method_a: va, method_b: vb, disagreement, argmax, interior }
}

/// RMA spectral shape evaluator with the traced branches cached.
pub struct RmaSolver {
    pub q: usize,
    pub l: usize,
    pub opts: SolveOptions,
    sweeps: Vec<Sweep>,
}

impl RmaSolver {
    pub fn new(q: usize, l: usize, opts: SolveOptions) -> Result<RmaSolver> {
        if q < 2 || l == 0 {
            return Err(Error::InvalidSpec(format!("RMA needs q >= 2 and L >= 1, got q={q} L={l}")));
        }
        let sweeps = if opts.method == Method::Ascent {
            vec![]
        } else {
            let mut chains = vec![Chain::full(q, l)];
            chains.extend((1..l).map(Chain::truncated));
            chains.into_iter().map(|c| Sweep::new(c, opts.sweep_points)).collect()
        };
        Ok(RmaSolver { q, l, opts, sweeps })
    }

    /// Number of traced branch segments per chain (diagnostics).
    pub fn segment_count(&self) -> Vec<usize> {
        self.sweeps.iter().map(|s| s.segments.values().map(|v| v.len()).sum()).collect()
    }

    pub fn from_spec(spec: &EnsembleSpec, opts: SolveOptions) -> Result<RmaSolver> {
        spec.validate()?;
        if spec.family != Family::Rma {
            return Err(Error::InvalidSpec("expected an rma ensemble".into()));
        }
        RmaSolver::new(spec.q, spec.l, opts)
    }

    /// Best stationary candidate with fixed `beta_L` (plain output map) or
    /// fixed punctured fraction; the all-vanishing point (value 0) is always
    /// a candidate. Returns `(value, betas ++ gammas, interior)`.
    fn stationary(&self, target: f64, out: Output) -> (f64, Vec<f64>, bool) {
        let l = self.l;
        let mut best = (0.0, vec![0.0; 2 * l + 1], false);
        if let Output::Plain = out {
            best.1[l] = target;
        }
        for sw in &self.sweeps {
            let pad = l - sw.chain.stages;
            for c in sw.candidates(target, out) {
                if c.value > best.0 {
                    let mut x = vec![0.0; pad];
                    x.extend(&c.betas);
                    x.extend(std::iter::repeat(0.0).take(pad));
                    x.extend(&c.gammas);
                    best = (c.value, x, c.interior && pad == 0);
                }
            }
        }
        best
    }

    fn plain_objective(&self, rho: f64) -> impl Fn(&[f64]) -> f64 + '_ {
        move |x: &[f64]| {
            let mut f = h2(x[0]) / self.q as f64;
            for s in 0..self.l {
                let r = if s + 1 < self.l { x[s + 1] } else { rho };
                f += psi(x[s], r);
            }
            f
        }
    }

    fn chain_constraints(&self, dim: usize) -> Vec<(Vec<f64>, f64)> {
        (1..dim)
            .map(|s| {
                let mut a = vec![0.0; dim];
                a[s - 1] = 1.0;
                a[s] = -2.0;
                (a, 0.0)
            })
            .collect()
    }

    fn rng(&self, rho: f64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.opts.seed);
        r.set_stream(rho.to_bits());
        r
    }

    /// Spectral shape at `rho`.
    pub fn eval(&self, rho: f64) -> RsResult {
        let a = (self.opts.method != Method::Ascent).then(|| self.stationary(rho, Output::Plain));
        let b = (self.opts.method != Method::Stationary).then(|| {
            let mut cons = self.chain_constraints(self.l);
            let mut last = vec![0.0; self.l];
            last[self.l - 1] = 1.0;
            cons.push((last, 2.0 * rho));
            let p = Problem::new(self.l, cons);
            let (v, mut x) = multi_start(&p, &self.plain_objective(rho), self.opts.starts, &mut self.rng(rho), &[]);
            x.push(rho);
            (v, with_gammas(x))
        });
        combine(rho, a, b, self.opts.agree_tol)
    }

    /// Spectral shape after random puncturing to a fraction `lambda` of the
    /// inner code output, at normalised punctured size `rho_p`.
    pub fn eval_punctured(&self, lambda: f64, rho_p: f64) -> RsResult {
        if lambda >= 1.0 {
            return self.eval(rho_p);
        }
        let (lo, hi) = (lambda * rho_p, 1.0 - lambda * (1.0 - rho_p));
        let punct = |b: f64| (scaled_h(b, lambda * rho_p) + scaled_h(1.0 - b, lambda * (1.0 - rho_p)) - h2(lambda)) / lambda;
        let a = (self.opts.method != Method::Ascent).then(|| {
            let mut best = self.stationary(rho_p, Output::Punctured { lambda });
            for b in [lo, hi] {
                let (v, x, _) = self.stationary(b, Output::Plain);
                // the plain candidate set always contains the vanishing chain
                let v = v / lambda + punct(b);
                if v > best.0 {
                    best = (v, x, false);
                }
            }
            best
        });
        let b = (self.opts.method != Method::Stationary).then(|| {
            let dim = self.l + 1;
            let mut cons = self.chain_constraints(dim);
            let mut e = vec![0.0; dim];
            e[self.l] = 1.0;
            cons.push((e.clone(), hi));
            e[self.l] = -1.0;
            cons.push((e, -lo));
            let mut anchor = vec![0.0; dim];
            anchor[self.l] = rho_p.clamp(lo, hi);
            let p = Problem::new(dim, cons).with_anchor(anchor);
            let obj = |x: &[f64]| {
                let mut f = h2(x[0]) / self.q as f64;
                for s in 0..self.l {
                    f += psi(x[s], x[s + 1]);
                }
                f / lambda + punct(x[self.l])
            };
            let (v, x) = multi_start(&p, &obj, self.opts.starts, &mut self.rng(rho_p), &[]);
            (v, with_gammas(x))
        });
        combine(rho_p, a, b, self.opts.agree_tol)
    }
}

/// Appends the inner maximisers `gamma_1..gamma_L` to `beta_0..beta_L`.
fn with_gammas(mut x: Vec<f64>) -> Vec<f64> {
    let g: Vec<f64> = x.windows(2).map(|w| phi_acc(w[0], w[1]).map_or(f64::NAN, |p| p.1)).collect();
    x.extend(g);
    x
}

/// `r_s` of an RMA ensemble at one point with default options.
pub fn r_s_rma(q: usize, l: usize, rho: f64) -> Result<RsResult> {
    Ok(RmaSolver::new(q, l, SolveOptions::default())?.eval(rho))
}

/// Punctured `r_s` at one point with default options.
pub fn r_s_rma_punctured(q: usize, l: usize, lambda: f64, rho_p: f64) -> Result<RsResult> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::Domain(format!("lambda = {lambda} not in (0,1]")));
    }
    Ok(RmaSolver::new(q, l, SolveOptions::default())?.eval_punctured(lambda, rho_p))
}

/// HCC spectral shape evaluator.
pub struct HccSolver {
    pub shape: HccShape,
    pub opts: SolveOptions,
}

impl HccSolver {
    pub fn new(spec: &EnsembleSpec, opts: SolveOptions) -> Result<HccSolver> {
        Ok(HccSolver { shape: HccShape::from_spec(spec)?, opts })
    }

    pub fn eval(&self, rho: f64) -> RsResult {
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed);
        rng.set_stream(rho.to_bits());
        // a: reduced (symmetric) layout, b: full layout, independent starts
        let a = (self.opts.method != Method::Ascent).then(|| {
            let (p, idx) = self.shape.symmetric(rho);
            let f = |x: &[f64]| self.shape.value_at(rho, &idx, x);
            let (v, x) = multi_start(&p, &f, self.opts.starts, &mut rng, &[]);
            (v, lift(&idx, &x, &self.shape), false)
        });
        let b = (self.opts.method != Method::Stationary).then(|| {
            let (p, idx) = self.shape.asymmetric(rho);
            let f = |x: &[f64]| self.shape.value_at(rho, &idx, x);
            let (v, x) = multi_start(&p, &f, self.opts.starts, &mut rng, &[]);
            (v, lift(&idx, &x, &self.shape))
        });
        combine(rho, a, b, self.opts.agree_tol)
    }
}

/// `[alpha, beta per branch]` from a reduced variable vector.
fn lift(index: &[usize], x: &[f64], shape: &HccShape) -> Vec<f64> {
    let mut v = vec![x[0]];
    for (i, &j) in index.iter().enumerate() {
        v.push(if shape.kinds[i] == crate::enumerators::Constituent::Identity { x[0] } else { x[j] });
    }
    v
}

pub fn r_s_hcc(spec: &EnsembleSpec, rho: f64) -> Result<RsResult> {
    Ok(HccSolver::new(spec, SolveOptions::default())?.eval(rho))
}

/// Any ensemble, plain or punctured, behind one interface.
pub enum Solver {
    Rma(RmaSolver, f64),
    Hcc(HccSolver),
}

impl Solver {
    pub fn new(spec: &EnsembleSpec, opts: SolveOptions) -> Result<Solver> {
        match spec.family {
            Family::Rma => Ok(Solver::Rma(RmaSolver::from_spec(spec, opts)?, spec.lambda.value())),
            Family::Hcc => {
                if !spec.lambda.is_one() {
                    return Err(Error::InvalidSpec("puncturing is only supported for rma".into()));
                }
                Ok(Solver::Hcc(HccSolver::new(spec, opts)?))
            }
        }
    }

    /// Same as [`Solver::new`] with an explicit puncturing fraction.
    pub fn with_lambda(spec: &EnsembleSpec, lambda: f64, opts: SolveOptions) -> Result<Solver> {
        if !(lambda > 0.0 && lambda <= 1.0) {
            return Err(Error::Domain(format!("lambda = {lambda} not in (0,1]")));
        }
        match Solver::new(&EnsembleSpec { lambda: crate::enumerators::Frac::ONE, ..spec.clone() }, opts)? {
            Solver::Rma(s, _) => Ok(Solver::Rma(s, lambda)),
            Solver::Hcc(_) if lambda < 1.0 => Err(Error::InvalidSpec("puncturing is only supported for rma".into())),
            s => Ok(s),
        }
    }

    pub fn eval(&self, rho: f64) -> RsResult {
        match self {
            Solver::Rma(s, lambda) => s.eval_punctured(*lambda, rho),
            Solver::Hcc(s) => s.eval(rho),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Rho0Options {
    pub step: f64,
    pub width: f64,
    pub tol_zero: f64,
    pub tol_pos: f64,
    pub rho_max: f64,
}

impl Default for Rho0Options {
    fn default() -> Self {
        Rho0Options { step: 1e-3, width: 1e-5, tol_zero: 1e-6, tol_pos: 1e-4, rho_max: 0.5 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Rho0 {
    /// `None` when the curve is already above `tol_pos` at the first grid point
    pub rho0: Option<f64>,
    /// the curve never exceeded `tol_pos` below `rho_max`
    pub never_positive: bool,
    pub evaluations: Vec<RsResult>,
}

impl Rho0 {
    pub fn disagreements(&self) -> usize {
        self.evaluations.iter().filter(|r| r.disagreement).count()
    }

    pub fn display(&self) -> String {
        match self.rho0 {
            Some(r) => format!("{r:.4}"),
            None => "none".into(),
        }
    }
}

/// Growth-rate coefficient: the end of the zero region of the curve.
pub fn extract_rho0<F: FnMut(f64) -> RsResult>(mut f: F, o: &Rho0Options) -> Rho0 {
    let mut evals = Vec::new();
    let mut eval = |x: f64, evals: &mut Vec<RsResult>| {
        let r = f(x);
        let v = r.value;
        evals.push(r);
        v
    };
    if eval(o.step, &mut evals) > o.tol_pos {
        return Rho0 { rho0: None, never_positive: false, evaluations: evals };
    }
    let mut zero_at = if evals[0].value <= o.tol_zero { o.step } else { 0.0 };
    let mut k = 2;
    loop {
        let x = k as f64 * o.step;
        if x >= o.rho_max {
            return Rho0 { rho0: Some(zero_at), never_positive: true, evaluations: evals };
        }
        let v = eval(x, &mut evals);
        if v > o.tol_pos {
            let (mut a, mut b) = (zero_at, x);
            while b - a > o.width {
                let m = 0.5 * (a + b);
                if eval(m, &mut evals) > o.tol_zero {
                    b = m;
                } else {
                    a = m;
                }
            }
            return Rho0 { rho0: Some(0.5 * (a + b)), never_positive: false, evaluations: evals };
        }
        if v <= o.tol_zero {
            zero_at = x;
        }
        k += 1;
    }
}

/// Sampled spectral shape with its growth-rate coefficient.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralCurve {
    pub spec: String,
    pub lambda: f64,
    pub points: Vec<RsResult>,
    pub rho0: Option<Rho0>,
}

impl SpectralCurve {
    pub fn compute(spec: &EnsembleSpec, lambda: f64, grid: &[f64], opts: SolveOptions) -> Result<SpectralCurve> {
        use rayon::prelude::*;
        let solver = Solver::with_lambda(spec, lambda, opts)?;
        let points = grid.par_iter().map(|&r| solver.eval(r)).collect();
        Ok(SpectralCurve { spec: spec.to_string(), lambda, points, rho0: None })
    }

    pub fn min_value(&self) -> f64 {
        self.points.iter().map(|p| p.value).fold(f64::INFINITY, f64::min)
    }
}

/// Uniform grid `[lo, hi]` with spacing `step`.
pub fn rho_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_matches_grid() {
        for &(u, r) in &[(0.1, 0.3), (0.5, 0.4), (0.02, 0.01), (0.9, 0.6), (0.3, 0.9)] {
            let (v, _) = phi_acc(u, r).unwrap();
            let g = acc::phi_acc_grid(u, r, 200_000).unwrap();
            assert!(v >= g - 1e-12 && v - g < 1e-8, "u={u} r={r} {v} {g}");
        }
        assert!(phi_acc(0.5, 0.2).is_none());
        assert_eq!(psi(0.5, 0.2), f64::NEG_INFINITY);
    }

    #[test]
    fn stationary_and_ascent_agree_mid_range() {
        let s = RmaSolver::new(3, 2, SolveOptions { starts: 16, ..Default::default() }).unwrap();
        let r = s.eval(0.3);
        assert!(r.value > 0.0);
        assert!(!r.disagreement, "{r:?}");
    }
}
