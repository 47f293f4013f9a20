//! The single-accumulator exponent and its closed-form inner maximisation.

use crate::numerics::{h2, scaled_h};

/// Objective of the inner supremum over `gamma` for an accumulator with
/// normalised input support `u` and output support `r`.
#[inline]
pub fn acc_terms(u: f64, r: f64, g: f64) -> f64 {
    scaled_h(r, g) + scaled_h(1.0 - r, g) + scaled_h(r - g, u - 2.0 * g)
}

/// Feasible gamma interval, `None` when empty.
#[inline]
pub fn gamma_range(u: f64, r: f64) -> Option<(f64, f64)> {
    let lo = (u - r).max(0.0);
    let hi = r.min(1.0 - r).min(u / 2.0);
    if lo <= hi + 1e-15 {
        Some((lo, hi.max(lo)))
    } else {
        None
    }
}

#[inline]
fn ln0(x: f64) -> f64 {
    if x <= 0.0 {
        f64::NEG_INFINITY
    } else {
        x.ln()
    }
}

/// d/dgamma of [`acc_terms`]; strictly decreasing on the feasible interval.
#[inline]
pub fn acc_dgamma(u: f64, r: f64, g: f64) -> f64 {
    let a = ln0(1.0 - r - g) + 2.0 * ln0(u - 2.0 * g);
    let b = 2.0 * ln0(g) + ln0(r - u + g);
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return 0.0;
    }
    a - b
}

/// `sup_gamma acc_terms(u, r, gamma)` and its maximiser, or `None` when the
/// feasible interval is empty (u > 2r).
///
/// The objective is concave in gamma, so the maximiser is the unique zero of
/// the derivative, found by safeguarded Newton inside the bracket.
pub fn phi_acc(u: f64, r: f64) -> Option<(f64, f64)> {
    if !(0.0..=1.0).contains(&r) || u < 0.0 || u > 1.0 {
        return None;
    }
    let (lo, hi) = gamma_range(u, r)?;
    if hi - lo <= 1e-300 || u == 0.0 {
        return Some((acc_terms(u, r, lo), lo));
    }
    // acc_dgamma > 0 iff (1-r-g)(u-2g)^2 > g^2 (r-u+g), i.e. iff
    // h(g) = u - 2g - g sqrt((r-u+g)/(1-r-g)) > 0; h is monotone and close to
    // linear, so Newton from u/(2 + s(u/2)) converges in a few steps
    let poly = |g: f64| (1.0 - r - g) * (u - 2.0 * g).powi(2) - g * g * (r - u + g);
    if poly(hi) >= 0.0 {
        return Some((acc_terms(u, r, hi), hi));
    }
    if poly(lo) <= 0.0 {
        return Some((acc_terms(u, r, lo), lo));
    }
    let h = |g: f64| {
        let (a, c) = (1.0 - r - g, (r - u + g).max(0.0));
        let s = (c / a).sqrt();
        (u - 2.0 * g - g * s, -2.0 - s - g * (a + c) / (2.0 * s * a * a))
    };
    let (mut a, mut b) = (lo, hi);
    let den = 1.0 - r - 0.5 * u;
    let s0 = if den > 0.0 { ((r - 0.5 * u).max(0.0) / den).sqrt() } else { 0.0 };
    let mut x = u / (2.0 + s0);
    if !(x > a && x < b) {
        x = 0.5 * (a + b);
    }
    for _ in 0..200 {
        let (v, dv) = h(x);
        if v > 0.0 {
            a = x;
        } else {
            b = x;
        }
        if v == 0.0 || b - a <= 4.0 * f64::EPSILON * b {
            break;
        }
        let step = v / dv;
        // check before the bracket test: a converged step can round onto it
        if step.abs() <= 1e-14 * x {
            break;
        }
        x = if x - step > a && x - step < b { x - step } else { 0.5 * (a + b) };
    }
    Some((acc_terms(u, r, x), x))
}

/// Accumulator exponent minus the input entropy (the recursion kernel).
#[inline]
pub fn psi(u: f64, r: f64) -> f64 {
    match phi_acc(u, r) {
        Some((v, _)) => v - h2(u),
        None => f64::NEG_INFINITY,
    }
}

/// Brute-force grid maximum of the inner objective; test oracle only.
pub fn phi_acc_grid(u: f64, r: f64, points: usize) -> Option<f64> {
    let (lo, hi) = gamma_range(u, r)?;
    let mut best = f64::NEG_INFINITY;
    for i in 0..=points {
        let g = lo + (hi - lo) * i as f64 / points as f64;
        best = best.max(acc_terms(u, r, g));
    }
    Some(best)
}
