//! Multi-start projected coordinate ascent under linear constraints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Box `[0,1]^dim` intersected with rows `a . x <= b`.
#[derive(Clone, Debug)]
pub struct Problem {
    pub dim: usize,
    pub constraints: Vec<(Vec<f64>, f64)>,
    /// feasible point used as the start of the ray move; the origin unless set
    pub anchor: Vec<f64>,
}

const SLACK: f64 = 1e-15;

impl Problem {
    pub fn new(dim: usize, constraints: Vec<(Vec<f64>, f64)>) -> Problem {
        Problem { dim, constraints, anchor: vec![0.0; dim] }
    }

    pub fn with_anchor(mut self, anchor: Vec<f64>) -> Problem {
        self.anchor = anchor;
        self
    }

    /// Largest `t` with `anchor + t (x - anchor)` feasible.
    fn ray_limit(&self, x: &[f64]) -> f64 {
        let d: Vec<f64> = x.iter().zip(&self.anchor).map(|(x, a)| x - a).collect();
        let mut t = f64::INFINITY;
        for (i, &di) in d.iter().enumerate() {
            if di > 0.0 {
                t = t.min((1.0 - self.anchor[i]) / di);
            } else if di < 0.0 {
                t = t.min(-self.anchor[i] / di);
            }
        }
        for (a, b) in &self.constraints {
            let ad: f64 = a.iter().zip(&d).map(|(a, d)| a * d).sum();
            if ad > 0.0 {
                let a0: f64 = a.iter().zip(&self.anchor).map(|(a, x)| a * x).sum();
                t = t.min((b - a0) / ad);
            }
        }
        t.max(1.0)
    }

    /// Feasible interval for coordinate `i` with the others fixed.
    pub fn interval(&self, x: &[f64], i: usize) -> Option<(f64, f64)> {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for (a, b) in &self.constraints {
            if a[i] == 0.0 {
                continue;
            }
            let rest: f64 = a.iter().zip(x).enumerate().filter(|(j, _)| *j != i).map(|(_, (a, x))| a * x).sum();
            let bound = (b - rest) / a[i];
            if a[i] > 0.0 {
                hi = hi.min(bound);
            } else {
                lo = lo.max(bound);
            }
        }
        if lo <= hi + SLACK {
            Some((lo, hi.max(lo)))
        } else {
            None
        }
    }

    pub fn feasible(&self, x: &[f64]) -> bool {
        x.iter().all(|&v| (-SLACK..=1.0 + SLACK).contains(&v))
            && self
                .constraints
                .iter()
                .all(|(a, b)| a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>() <= b + 1e-12)
    }

    /// Random feasible point: a few Gibbs passes of uniform coordinate draws
    /// inside the current feasible interval, starting from the anchor; half
    /// the points are then pulled towards the anchor by a log-uniform factor
    /// so small supports get sampled too. `stratum` in [0,1) spreads the
    /// first draw.
    pub fn sample(&self, rng: &mut ChaCha8Rng, stratum: f64) -> Vec<f64> {
        let mut x = self.anchor.clone();
        let mut first = true;
        for _ in 0..4 {
            let mut order: Vec<usize> = (0..self.dim).collect();
            for i in (1..order.len()).rev() {
                order.swap(i, rng.gen_range(0..=i));
            }
            for &i in &order {
                // moving one coordinate inside its interval keeps x feasible
                let Some((lo, hi)) = self.interval(&x, i) else { continue };
                let u: f64 = if first { stratum } else { rng.gen() };
                first = false;
                x[i] = lo + (hi - lo) * u;
            }
        }
        if rng.gen_bool(0.5) {
            let t = 10f64.powf(-8.0 * rng.gen::<f64>());
            for (xi, a) in x.iter_mut().zip(&self.anchor) {
                *xi = a + t * (*xi - a);
            }
        }
        x
    }
}

const CGOLD: f64 = 0.381_966_011_250_105_1;

/// Brent's method (golden section with parabolic steps) maximising `f` on
/// `[a, b]` from the interior guess `x`.
fn brent_max<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, x0: f64, fx0: f64) -> (f64, f64) {
    let (mut x, mut w, mut v) = (x0, x0, x0);
    let (mut fx, mut fw, mut fv) = (-fx0, -fx0, -fx0);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let xm = 0.5 * (a + b);
        let tol1 = 3e-9 * x.abs() + 1e-300;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            if p.abs() < (0.5 * q * e).abs() && p > q * (a - x) && p < q * (b - x) {
                e = d;
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = -f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            (v, w, x) = (w, x, u);
            (fv, fw, fx) = (fw, fx, fu);
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                (v, w) = (w, u);
                (fv, fw) = (fw, fu);
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, -fx)
}

/// Maximise a one-dimensional function on `[lo, hi]`: coarse scan (geometric
/// near `lo`, uniform elsewhere) followed by Brent's method on the best cell.
pub fn max_1d<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, keep: f64) -> (f64, f64) {
    let mut best = (keep, f(keep));
    if hi - lo <= 0.0 {
        let v = f(lo);
        return if v > best.1 { (lo, v) } else { best };
    }
    let mut xs: Vec<f64> = (0..=16).map(|k| lo + (hi - lo) * k as f64 / 16.0).collect();
    for k in 1..10 {
        xs.push(lo + (hi - lo) * 10f64.powi(-(k as i32)) / 16.0);
    }
    xs.push(keep);
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let vals: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut ib = 0;
    for i in 0..xs.len() {
        if vals[i] > vals[ib] {
            ib = i;
        }
    }
    if vals[ib] > best.1 {
        best = (xs[ib], vals[ib]);
    }
    if vals[ib].is_finite() {
        let (a, b) = (xs[ib.saturating_sub(1)], xs[(ib + 1).min(xs.len() - 1)]);
        let r = brent_max(&mut f, a, b, xs[ib], vals[ib]);
        if r.1 > best.1 {
            best = r;
        }
    }
    best
}

/// Ray move: best point on the segment from the anchor through `x` and on
/// to the boundary. Reaches vanishing-support limits that single
/// coordinates only approach geometrically.
fn ray_move<F: Fn(&[f64]) -> f64>(p: &Problem, f: &F, x: &mut [f64], val: f64) -> f64 {
    let tmax = p.ray_limit(x);
    if !tmax.is_finite() {
        return val;
    }
    let base = x.to_vec();
    let mut y = x.to_vec();
    let (t, v) = max_1d(
        |t| {
            for i in 0..y.len() {
                y[i] = p.anchor[i] + t * (base[i] - p.anchor[i]);
            }
            f(&y)
        },
        0.0,
        tmax,
        1.0,
    );
    if v > val {
        for i in 0..x.len() {
            x[i] = (p.anchor[i] + t * (base[i] - p.anchor[i])).clamp(0.0, 1.0);
        }
        return v;
    }
    val
}

/// Coordinate ascent from `x`; returns the final value. Ray moves are only
/// tried at the end and when the point is visibly creeping towards the
/// anchor: doing them unconditionally would
/// drag every start with a negative value straight to the anchor before it
/// had a chance to climb towards a small positive maximum.
pub fn ascend<F: Fn(&[f64]) -> f64>(p: &Problem, f: &F, x: &mut [f64]) -> f64 {
    let mut val = f(x);
    let dist = |x: &[f64]| x.iter().zip(&p.anchor).map(|(x, a)| (x - a).abs()).sum::<f64>();
    let mut last_dist = dist(x);
    for sweep in 1..=200 {
        let start = val;
        for i in 0..p.dim {
            let Some((lo, hi)) = p.interval(x, i) else { continue };
            let keep = x[i].clamp(lo, hi);
            let mut y = x.to_vec();
            let (xi, v) = max_1d(
                |t| {
                    y[i] = t;
                    f(&y)
                },
                lo,
                hi,
                keep,
            );
            if v >= val {
                x[i] = xi;
                val = v;
            }
        }
        if !(val - start > 1e-14 * val.abs().max(1.0)) {
            break;
        }
        if sweep % 8 == 0 {
            // creeping: the point keeps shrinking towards the anchor
            let d = dist(x);
            if val < 0.0 && d < 0.5 * last_dist {
                val = ray_move(p, f, x, val);
                if val >= 0.0 {
                    break;
                }
            }
            last_dist = d;
        }
    }
    ray_move(p, f, x, val)
}

/// Best result of coordinate ascent from the anchor, the given extra starts
/// and `starts` stratified random feasible points.
pub fn multi_start<F: Fn(&[f64]) -> f64>(
    p: &Problem,
    f: &F,
    starts: usize,
    rng: &mut ChaCha8Rng,
    extra: &[Vec<f64>],
) -> (f64, Vec<f64>) {
    let mut pool: Vec<Vec<f64>> = vec![p.anchor.clone()];
    pool.extend(extra.iter().filter(|x| p.feasible(x)).cloned());
    for s in 0..starts {
        let stratum = (s as f64 + rng.gen::<f64>()) / starts as f64;
        pool.push(p.sample(rng, stratum));
    }
    let mut best = (f64::NEG_INFINITY, vec![0.0; p.dim]);
    for mut x in pool {
        let v = ascend(p, f, &mut x);
        if v > best.0 {
            best = (v, x);
        }
    }
    best
}
