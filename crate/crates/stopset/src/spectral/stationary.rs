//! Stationary-point sweep for the RMA exponent.
//!
//! The first-order conditions chain together: fixing the first free support
//! fraction determines `gamma_1` as an affine function of `beta_1`, stationarity
//! in `gamma_l` is a cubic in `beta_l`, and stationarity in `beta_l` gives the
//! affine map for `gamma_{l+1}`. At every stage the maximiser may instead sit
//! on one of four faces of the gamma interval, each giving a linear equation.
//! Sweeping the starting value traces curves `(beta_L, f)`; the exponent at a
//! given `rho` is the best curve crossing.

use std::collections::HashMap;

use super::acc::acc_terms;
use crate::numerics::{h2, scaled_h};

const FEAS_TOL: f64 = 1e-11;
/// Samples added on each side of a fold edge: halving offsets and a uniform split.
const FOLD_OFFSETS: usize = 30;
const FOLD_UNIFORM: usize = 16;
/// Distance below which two branches are taken to meet at a fold.
const FOLD_MEET: f64 = 1e-4;
/// Upper bound on segment ends inspected for branches born in folds.
const MAX_FOLD_EDGES: usize = 200_000;

/// Which condition pins `gamma_l` at a stage.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    /// stationarity in gamma (root of the cubic, by rank)
    Interior(u8),
    /// gamma = 1 - beta
    OneMinusBeta,
    /// gamma = beta
    Beta,
    /// gamma = beta_prev - beta
    PrevMinusBeta,
    /// gamma = beta_prev / 2
    HalfPrev,
}

impl Face {
    fn digit(self) -> u64 {
        match self {
            Face::Interior(k) => k as u64,
            Face::OneMinusBeta => 3,
            Face::Beta => 4,
            Face::PrevMinusBeta => 5,
            Face::HalfPrev => 6,
        }
    }
}

/// One end point of a traced branch.
#[derive(Clone, Debug)]
pub struct Leaf {
    pub code: u64,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    /// objective value with the last support fraction as output
    pub value: f64,
    /// face multiplier of the last stage (as for an intermediate stage)
    pub e_last: f64,
    pub interior: bool,
}

impl Leaf {
    /// Every gamma clear of its bounds; at the corners where several faces
    /// meet the cubic has a near-double root and its root ranks flicker.
    fn strictly_interior(&self) -> bool {
        self.interior
            && self.gammas.iter().enumerate().all(|(s, &g)| {
                let (p, b) = (self.betas[s], self.betas[s + 1]);
                let lo = (p - b).max(0.0);
                let hi = b.min(1.0 - b).min(p / 2.0);
                g - lo > FOLD_MEET && hi - g > FOLD_MEET
            })
    }

    /// Same stationary point up to the square-root separation left by
    /// refining a fold.
    fn meets(&self, other: &Leaf) -> bool {
        if !other.strictly_interior() {
            return false;
        }
        let close = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| (x - y).abs() <= FOLD_MEET);
        self.code != other.code && close(&self.betas, &other.betas) && close(&self.gammas, &other.gammas)
    }

    pub fn beta_last(&self) -> f64 {
        *self.betas.last().unwrap()
    }
}

// ascending-coefficient polynomials of degree <= 3
type Poly = [f64; 4];

fn pmul(a: &Poly, b: &Poly) -> Poly {
    let mut r = [0.0; 4];
    for i in 0..4 {
        for j in 0..4 - i {
            r[i + j] += a[i] * b[j];
        }
    }
    r
}

fn padd(a: &Poly, b: &Poly, s: f64) -> Poly {
    [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2], a[3] + s * b[3]]
}

fn peval(p: &Poly, x: f64) -> f64 {
    ((p[3] * x + p[2]) * x + p[1]) * x + p[0]
}

fn bisect_root(p: &Poly, mut a: f64, mut b: f64) -> f64 {
    let mut fa = peval(p, a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = peval(p, m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Real roots of a cubic inside `[0, 1]`, ascending. Splits the interval at the
/// critical points so each piece is monotone, then bisects.
pub fn cubic_roots_unit(p: &Poly) -> Vec<f64> {
    let scale = p.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if scale == 0.0 {
        return vec![];
    }
    let p = [p[0] / scale, p[1] / scale, p[2] / scale, p[3] / scale];
    let mut cuts = vec![0.0, 1.0];
    let (a, b, c) = (3.0 * p[3], 2.0 * p[2], p[1]);
    if a.abs() > 1e-300 {
        let disc = b * b - 4.0 * a * c;
        if disc >= 0.0 {
            let sq = disc.sqrt();
            let qq = -0.5 * (b + b.signum() * sq);
            for r in [qq / a, if qq != 0.0 { c / qq } else { f64::NAN }] {
                if r > 0.0 && r < 1.0 {
                    cuts.push(r);
                }
            }
        }
    } else if b.abs() > 1e-300 {
        let r = -c / b;
        if r > 0.0 && r < 1.0 {
            cuts.push(r);
        }
    }
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let mut roots: Vec<f64> = Vec::new();
    for w in cuts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        let (f0, f1) = (peval(&p, x0), peval(&p, x1));
        if f0 == 0.0 {
            roots.push(x0);
        } else if (f0 < 0.0) != (f1 < 0.0) && f1 != 0.0 {
            roots.push(bisect_root(&p, x0, x1));
        }
    }
    if peval(&p, 1.0) == 0.0 {
        roots.push(1.0);
    }
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    roots
}

/// The cubic in `beta` obtained from stationarity in `gamma` once
/// `gamma = c - d beta` is substituted.
fn stage_cubic(p: f64, c: f64, d: f64) -> Poly {
    let g: Poly = [c, -d, 0.0, 0.0];
    let e: Poly = [p - 2.0 * c, 2.0 * d, 0.0, 0.0];
    let x: Poly = [0.0, 1.0, 0.0, 0.0];
    let one_minus_g: Poly = [1.0 - c, d, 0.0, 0.0];
    let gg = pmul(&g, &g);
    let ee = pmul(&e, &e);
    let t1 = pmul(&x, &padd(&gg, &ee, 1.0));
    let t2 = pmul(&one_minus_g, &ee);
    let t3 = pmul(&gg, &[c - p, -d, 0.0, 0.0]);
    padd(&padd(&t1, &t2, -1.0), &t3, 1.0)
}

fn feasible(p: f64, b: f64, g: f64) -> bool {
    if !(b > 0.0 && b < 1.0) || !g.is_finite() {
        return false;
    }
    let lo = (p - b).max(0.0);
    let hi = b.min(1.0 - b).min(p / 2.0);
    g >= lo - FEAS_TOL && g <= hi + FEAS_TOL && p <= 2.0 * b + FEAS_TOL
}

fn clamp_gamma(p: f64, b: f64, g: f64) -> f64 {
    let lo = (p - b).max(0.0);
    let hi = b.min(1.0 - b).min(p / 2.0).max(lo);
    g.clamp(lo, hi)
}

/// exp of minus the total derivative of the stage terms (including -H(beta))
/// with respect to `beta` along the given face.
fn face_e(face: Face, p: f64, b: f64, g: f64) -> f64 {
    let sq = |x: f64| x * x;
    match face {
        Face::Interior(_) | Face::HalfPrev => sq(1.0 - b) * (b + g - p) / (sq(b) * (1.0 - b - g)),
        Face::OneMinusBeta => sq(p - 2.0 + 2.0 * b) / sq(b),
        Face::Beta => sq(1.0 - b) / sq(1.0 - 2.0 * b),
        Face::PrevMinusBeta => sq(2.0 * b - p) * sq(1.0 - b) / (sq(b) * sq(p - b)),
    }
}

/// Candidate `(face, beta, gamma)` triples for one stage.
fn stage_candidates(p: f64, c: f64, d: f64) -> Vec<(Face, f64, f64)> {
    let mut out = Vec::with_capacity(7);
    for (k, b) in cubic_roots_unit(&stage_cubic(p, c, d)).into_iter().enumerate() {
        out.push((Face::Interior(k as u8), b, c - d * b));
    }
    if (1.0 - d).abs() > 1e-300 {
        let b = (1.0 - c) / (1.0 - d);
        out.push((Face::OneMinusBeta, b, 1.0 - b));
        let b = (p - c) / (1.0 - d);
        out.push((Face::PrevMinusBeta, b, p - b));
    }
    let b = c / (1.0 + d);
    out.push((Face::Beta, b, b));
    if d.abs() > 1e-300 {
        let b = (c - p / 2.0) / d;
        out.push((Face::HalfPrev, b, p / 2.0));
    }
    out.retain(|&(_, b, g)| feasible(p, b, g));
    // faces often meet (e.g. beta = p/2 puts gamma on three faces at once);
    // keep one representative, preferring the interior root
    let mut uniq: Vec<(Face, f64, f64)> = Vec::with_capacity(out.len());
    for c in out {
        if !uniq.iter().any(|u| (u.1 - c.1).abs() <= 1e-12 && (u.2 - c.2).abs() <= 1e-12) {
            uniq.push(c);
        }
    }
    uniq
}

/// A family of stationary branches: `stages` accumulators after a free start
/// weighted by `start_weight * H(beta_start)` whose own stationarity uses
/// the exponent `start_exp`.
#[derive(Clone, Copy, Debug)]
pub struct Chain {
    pub stages: usize,
    pub start_weight: f64,
    pub start_exp: f64,
}

impl Chain {
    /// Full chain of an RMA code with repetition factor `q`.
    pub fn full(q: usize, stages: usize) -> Chain {
        Chain { stages, start_weight: 1.0 / q as f64, start_exp: (q as f64 - 1.0) / q as f64 }
    }

    /// Chain whose first accumulators carry no support; the surviving tail
    /// starts at an unconstrained accumulator output.
    pub fn truncated(stages: usize) -> Chain {
        Chain { stages, start_weight: 0.0, start_exp: 1.0 }
    }

    fn next_cd(e: f64, b: f64) -> (f64, f64) {
        if e.is_infinite() {
            (b / 2.0, 0.0)
        } else {
            ((1.0 + e) * b / (1.0 + 2.0 * e), 1.0 / (1.0 + 2.0 * e))
        }
    }

    /// All stationary branches reachable from `b0`; with `path` set, only the
    /// branch whose code matches.
    pub fn shoot(&self, b0: f64, path: Option<u64>, out: &mut Vec<Leaf>) {
        if !(b0 > 0.0 && b0 < 1.0) {
            return;
        }
        let t = ((1.0 - b0) / b0).powf(self.start_exp);
        let (c, d) = Self::next_cd(t, b0);
        let digits = path.map(decode);
        let mut betas = vec![b0];
        let mut gammas = vec![];
        let v0 = self.start_weight * h2(b0);
        self.dfs(c, d, v0, 1, true, &mut betas, &mut gammas, digits.as_deref(), out);
    }

    #[allow(clippy::too_many_arguments)]
    fn dfs(
        &self,
        c: f64,
        d: f64,
        value: f64,
        code: u64,
        interior: bool,
        betas: &mut Vec<f64>,
        gammas: &mut Vec<f64>,
        digits: Option<&[u64]>,
        out: &mut Vec<Leaf>,
    ) {
        let depth = gammas.len();
        let p = *betas.last().unwrap();
        for (face, b, g) in stage_candidates(p, c, d) {
            if let Some(ds) = digits {
                if ds[depth] != face.digit() {
                    continue;
                }
            }
            let g = clamp_gamma(p, b, g);
            let v = value + acc_terms(p, b, g) - h2(p);
            let e = face_e(face, p, b, g);
            let code = code * 8 + face.digit();
            let inter = interior && matches!(face, Face::Interior(_));
            betas.push(b);
            gammas.push(g);
            if depth + 1 == self.stages {
                out.push(Leaf {
                    code,
                    betas: betas.clone(),
                    gammas: gammas.clone(),
                    value: v,
                    e_last: e,
                    interior: inter,
                });
            } else if e.is_finite() || e == f64::INFINITY {
                let (c2, d2) = Self::next_cd(e, b);
                if c2.is_finite() && d2.is_finite() {
                    self.dfs(c2, d2, v, code, inter, betas, gammas, digits, out);
                }
            }
            betas.pop();
            gammas.pop();
        }
    }
}

fn decode(mut code: u64) -> Vec<u64> {
    let mut d = vec![];
    while code > 1 {
        d.push(code % 8);
        code /= 8;
    }
    d.reverse();
    d
}

/// Output map from a leaf to the quantity held fixed by the caller
/// (plain `beta_L`, or the punctured weight fraction) and the objective.
#[derive(Clone, Copy, Debug)]
pub enum Output {
    Plain,
    Punctured { lambda: f64 },
}

impl Output {
    fn puncture_x(leaf: &Leaf, lambda: f64) -> f64 {
        let b = leaf.beta_last();
        // the output fraction has no -H(beta_L) of its own, unlike the
        // intermediate stages the face multipliers were written for
        let e = leaf.e_last * b / (1.0 - b);
        if e.is_infinite() {
            b
        } else {
            b * (e * (1.0 - b) - (1.0 - b - lambda)) / (b + e * (1.0 - b))
        }
    }

    /// The held-fixed quantity, defined even where the leaf is infeasible
    /// for this output so that crossings can be bracketed.
    pub fn key(&self, leaf: &Leaf) -> f64 {
        match *self {
            Output::Plain => leaf.beta_last(),
            Output::Punctured { lambda } => Self::puncture_x(leaf, lambda) / lambda,
        }
    }

    /// Key and objective, `None` when the leaf violates the output constraints.
    pub fn map(&self, leaf: &Leaf) -> Option<(f64, f64)> {
        let b = leaf.beta_last();
        match *self {
            Output::Plain => Some((b, leaf.value)),
            Output::Punctured { lambda } => {
                let x = Self::puncture_x(leaf, lambda);
                let y = lambda - x;
                if !(x >= 0.0 && x <= b + FEAS_TOL && y >= -FEAS_TOL && y <= 1.0 - b + FEAS_TOL) {
                    return None;
                }
                let x = x.clamp(0.0, b);
                let y = (lambda - x).clamp(0.0, 1.0 - b);
                let v = (leaf.value + scaled_h(b, x) + scaled_h(1.0 - b, y) - h2(lambda)) / lambda;
                Some((x / lambda, v))
            }
        }
    }
}

/// Grid of starting values, dense near both ends.
pub fn start_grid(points: usize) -> Vec<f64> {
    let n_lo = points * 2 / 3;
    let n_hi = points - n_lo;
    let mut g = Vec::with_capacity(points);
    for i in 0..n_lo {
        g.push(1e-10 * (0.5f64 / 1e-10).powf(i as f64 / (n_lo - 1) as f64));
    }
    for i in (0..n_hi).rev() {
        let s = 1e-10 * (0.5f64 / 1e-10).powf(i as f64 / (n_hi - 1) as f64);
        let v = 1.0 - s;
        if v > *g.last().unwrap() {
            g.push(v);
        }
    }
    g
}

/// Traced branches of one chain over a grid of starting values.
///
/// Each branch code is stored as contiguous segments of samples. Branches
/// appear and vanish in folds between grid points, so every segment end is
/// pushed out to the fold by bisection; otherwise crossings on the short
/// stretch next to a fold would have no bracketing samples.
pub struct Sweep {
    pub chain: Chain,
    pub segments: HashMap<u64, Vec<Vec<(f64, Leaf)>>>,
}

/// A stationary candidate at a requested output value.
#[derive(Clone, Debug)]
pub struct Candidate {
    pub value: f64,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub interior: bool,
    pub code: u64,
}

impl Sweep {
    pub fn new(chain: Chain, points: usize) -> Sweep {
        let grid = start_grid(points);
        let mut sweep = Sweep { chain, segments: HashMap::new() };
        let mut edges = Vec::new();
        for (code, seg) in sweep.trace(&grid, &mut edges) {
            sweep.segments.entry(code).or_default().push(seg);
        }
        // A branch born in a fold can be shorter than the grid spacing and
        // fall between two samples. It meets its parent at the fold, so every
        // branch present at a segment end but not covered there is traced
        // from that end; flickering root ranks elsewhere are not followed.
        let mut seen = 0;
        while seen < edges.len() && seen < MAX_FOLD_EDGES {
            let (e, beyond, ref parent) = edges[seen];
            let parent = parent.clone();
            seen += 1;
            let mut here = Vec::new();
            sweep.chain.shoot(e, None, &mut here);
            for leaf in here {
                if !leaf.meets(&parent) || sweep.covers(leaf.code, e) {
                    continue;
                }
                let k = grid.partition_point(|&x| x < e);
                let far = if beyond < e { grid.get(k).copied().unwrap_or(1.0) } else { grid[k.saturating_sub(1)] };
                if let Some(seg) = sweep.follow(leaf, e, far, &mut edges) {
                    sweep.segments.entry(seg.1).or_default().push(seg.0);
                }
            }
        }
        sweep
    }

    fn covers(&self, code: u64, x: f64) -> bool {
        self.segments.get(&code).is_some_and(|segs| {
            segs.iter().any(|s| {
                let (a, b) = (s[0].0, s.last().unwrap().0);
                a.min(b) - 1e-13 <= x && x <= a.max(b) + 1e-13
            })
        })
    }

    /// Samples one branch from `start` towards `far`, densest next to `start`,
    /// and refines the point where it vanishes.
    fn follow(&self, leaf: Leaf, start: f64, far: f64, edges: &mut Vec<(f64, f64, Leaf)>) -> Option<(Vec<(f64, Leaf)>, u64)> {
        let code = leaf.code;
        let mut ts: Vec<f64> = (1..=FOLD_OFFSETS).map(|j| 0.5f64.powi((FOLD_OFFSETS - j + 1) as i32)).collect();
        ts.extend((1..=FOLD_UNIFORM).map(|j| j as f64 / FOLD_UNIFORM as f64).filter(|t| *t > 0.5));
        let mut seg = vec![(start, leaf)];
        let mut last = start;
        for t in ts {
            let x = start + (far - start) * t;
            if x == last {
                continue;
            }
            match self.shoot_one(x, code) {
                Some(l) => {
                    seg.push((x, l));
                    last = x;
                }
                None => {
                    if let Some(e) = self.edge(code, x, last) {
                        edges.push((e.0, x, e.1.clone()));
                        seg.push(e);
                    }
                    break;
                }
            }
        }
        if seg.len() < 2 {
            return None;
        }
        if far < start {
            seg.reverse();
        }
        Some((seg, code))
    }

    /// Segments of every branch sampled on `grid`, with the ends refined to
    /// where the branch vanishes; refined ends are appended to `edges`
    /// together with the grid point beyond them.
    fn trace(&self, grid: &[f64], edges: &mut Vec<(f64, f64, Leaf)>) -> Vec<(u64, Vec<(f64, Leaf)>)> {
        let mut series: HashMap<u64, Vec<(usize, Leaf)>> = HashMap::new();
        let mut buf = Vec::new();
        for (i, &b0) in grid.iter().enumerate() {
            buf.clear();
            self.chain.shoot(b0, None, &mut buf);
            for leaf in buf.drain(..) {
                series.entry(leaf.code).or_default().push((i, leaf));
            }
        }
        let mut out = Vec::new();
        for (code, s) in series {
            let mut i = 0;
            while i < s.len() {
                let j0 = i;
                i += 1;
                while i < s.len() && s[i].0 == s[i - 1].0 + 1 {
                    i += 1;
                }
                let (first, last) = (s[j0].0, s[i - 1].0);
                let mut seg: Vec<(f64, Leaf)> = s[j0..i].iter().map(|(k, l)| (grid[*k], l.clone())).collect();
                if first > 0 {
                    if let Some(e) = self.edge(code, grid[first - 1], grid[first]) {
                        edges.push((e.0, grid[first - 1], e.1.clone()));
                        seg.insert(0, e);
                    }
                }
                if last + 1 < grid.len() {
                    if let Some(e) = self.edge(code, grid[last + 1], grid[last]) {
                        edges.push((e.0, grid[last + 1], e.1.clone()));
                        seg.push(e);
                    }
                }
                out.push((code, seg));
            }
        }
        out
    }

    fn shoot_one(&self, b0: f64, code: u64) -> Option<Leaf> {
        let mut v = Vec::with_capacity(1);
        self.chain.shoot(b0, Some(code), &mut v);
        v.into_iter().next()
    }

    /// Last point towards `absent` where the branch still exists, starting
    /// from `present`.
    fn edge(&self, code: u64, absent: f64, present: f64) -> Option<(f64, Leaf)> {
        let (mut out, mut inn) = (absent, present);
        let mut best = None;
        for _ in 0..60 {
            let m = 0.5 * (out + inn);
            if m == out || m == inn {
                break;
            }
            match self.shoot_one(m, code) {
                Some(l) => {
                    inn = m;
                    best = Some((m, l));
                }
                None => out = m,
            }
        }
        best
    }

    /// All branch crossings of `target` under the given output map.
    pub fn candidates(&self, target: f64, out: Output) -> Vec<Candidate> {
        let mut res = Vec::new();
        for (&code, segs) in &self.segments {
            for seg in segs {
                let mut prev: Option<(f64, f64)> = None;
                for (b0, leaf) in seg {
                    let k = out.key(leaf) - target;
                    let cur = k.is_finite().then_some(k);
                    if let (Some((x0, k0)), Some(k1)) = (prev, cur) {
                        if k0 == 0.0 || (k0 < 0.0) != (k1 < 0.0) || k1 == 0.0 {
                            if let Some(c) = self.refine(code, x0, *b0, k0, target, out) {
                                res.push(c);
                            }
                        }
                    }
                    prev = cur.map(|k| (*b0, k));
                }
            }
        }
        res
    }

    fn refine(&self, code: u64, mut a: f64, mut b: f64, ka: f64, target: f64, out: Output) -> Option<Candidate> {
        let key = |x: f64| {
            self.shoot_one(x, code).map(|l| (out.key(&l) - target, l))
        };
        let neg_a = ka < 0.0;
        let mut best: Option<(f64, Leaf)> = None;
        for _ in 0..100 {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let Some((k, l)) = key(m) else { break };
            if !k.is_finite() {
                break;
            }
            let done = k == 0.0;
            if (k < 0.0) == neg_a {
                a = m;
            } else {
                b = m;
            }
            if best.as_ref().map_or(true, |x| k.abs() <= x.0.abs()) {
                best = Some((k, l));
            }
            if done {
                break;
            }
        }
        let (k, l) = best?;
        if k.abs() > 1e-9 * target.max(1e-3) {
            return None;
        }
        let (_, v) = out.map(&l)?;
        Some(Candidate { value: v, betas: l.betas, gammas: l.gammas, interior: l.interior, code })
    }

    /// Value at a fixed output taken directly from the traced branches.
    pub fn best_at(&self, target: f64, out: Output) -> Option<Candidate> {
        self.candidates(target, out)
            .into_iter()
            .max_by(|x, y| x.value.partial_cmp(&y.value).unwrap())
    }
}
