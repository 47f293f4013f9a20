//! Finite-length lower bounds on the stopping distance.
//!
//! By the union bound, the fraction of codes in the ensemble with a nonempty
//! stopping set smaller than `hbar` is at most `sum_{h < hbar} s[h]`. Picking
//! the largest `hbar` whose partial sum stays below `epsilon` gives a size
//! that at least a fraction `1 - epsilon` of the codes reach.

use num_rational::BigRational;
use num_traits::Zero;
use rayon::prelude::*;
use serde::Serialize;

use crate::enumerators::{ensemble_ssef, log_ssef_rma, ssef, EnsembleEnumerator, EnsembleSpec};
use crate::numerics::{log_sum_exp, rational_to_f64};
use crate::{Error, Family, Result};

#[derive(Clone, Debug, Serialize)]
pub struct BoundPoint {
    /// block length the enumerator was built for
    pub n: usize,
    pub epsilon: f64,
    pub h_bar: usize,
    /// the bound sum at `h_bar`, exact when available
    #[serde(skip)]
    pub tail_exact: Option<BigRational>,
    pub tail: f64,
    /// even the `h = 1` term exceeds epsilon
    pub flagged: bool,
}

/// `sum_{h=1}^{hbar-1} s[h]`, exactly. `hbar` may be `N + 1` for the full sum.
pub fn failure_bound(e: &EnsembleEnumerator, h_bar: usize) -> Result<BigRational> {
    let s = ssef(e);
    let n = s.len() - 1;
    if h_bar == 0 || h_bar > n + 1 {
        return Err(Error::Range(format!("hbar = {h_bar} not in 1..={}", n + 1)));
    }
    Ok(s[1..h_bar].iter().fold(BigRational::zero(), |acc, x| acc + x))
}

/// Natural log of the same partial sum from a log-domain SSEF.
pub fn failure_bound_ln(ln_ssef: &[f64], h_bar: usize) -> Result<f64> {
    let n = ln_ssef.len() - 1;
    if h_bar == 0 || h_bar > n + 1 {
        return Err(Error::Range(format!("hbar = {h_bar} not in 1..={}", n + 1)));
    }
    Ok(log_sum_exp(ln_ssef[1..h_bar].iter().copied()))
}

fn check_eps(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("epsilon = {epsilon} not in (0,1)")))
    }
}

/// Largest `hbar` whose failure bound is at most `epsilon`.
pub fn hmin_quantile(e: &EnsembleEnumerator, epsilon: f64) -> Result<BoundPoint> {
    check_eps(epsilon)?;
    let s = ssef(e);
    let eps = BigRational::from_float(epsilon).ok_or_else(|| Error::Domain("epsilon".into()))?;
    let mut sum = BigRational::zero();
    let mut h_bar = 1;
    for x in &s[1..] {
        let next = &sum + x;
        if next > eps {
            break;
        }
        sum = next;
        h_bar += 1;
    }
    Ok(BoundPoint {
        n: e.n,
        epsilon,
        h_bar,
        tail: rational_to_f64(&sum),
        tail_exact: Some(sum),
        flagged: h_bar == 1,
    })
}

/// [`hmin_quantile`] on a log-domain SSEF.
pub fn hmin_quantile_ln(n: usize, ln_ssef: &[f64], epsilon: f64) -> Result<BoundPoint> {
    check_eps(epsilon)?;
    let ln_eps = epsilon.ln();
    let mut sum = f64::NEG_INFINITY;
    let mut h_bar = 1;
    for &x in &ln_ssef[1..] {
        let next = log_sum_exp([sum, x]);
        if next > ln_eps {
            break;
        }
        sum = next;
        h_bar += 1;
    }
    Ok(BoundPoint { n, epsilon, h_bar, tail_exact: None, tail: sum.exp(), flagged: h_bar == 1 })
}

#[derive(Clone, Copy, Debug)]
pub struct SweepOptions {
    pub epsilon: f64,
    /// largest N evaluated with exact rationals; RMA above this uses logs
    pub exact_max: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { epsilon: 0.5, exact_max: 512 }
    }
}

/// One bound point per block length, in the order given.
pub fn bound_sweep(spec: &EnsembleSpec, ns: &[usize], opts: SweepOptions) -> Result<Vec<BoundPoint>> {
    check_eps(opts.epsilon)?;
    ns.par_iter()
        .map(|&n| {
            if spec.family == Family::Rma && n > opts.exact_max {
                let e = log_ssef_rma(spec, n)?;
                let mut p = hmin_quantile_ln(e.n, &e.ln_ssef, opts.epsilon)?;
                p.n = n;
                Ok(p)
            } else {
                let e = ensemble_ssef(spec, n)?;
                let mut p = hmin_quantile(&e, opts.epsilon)?;
                p.n = n;
                Ok(p)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(s: &[i64]) -> EnsembleEnumerator {
        let ssef: Vec<BigRational> = s.iter().map(|&x| BigRational::from_integer(x.into())).collect();
        EnsembleEnumerator { spec: EnsembleSpec::rma(3, 1), n: s.len() - 1, iossef: None, ssef }
    }

    #[test]
    fn empty_and_full_sums() {
        let e = ensemble_ssef(&EnsembleSpec::rma(3, 2), 12).unwrap();
        assert!(failure_bound(&e, 1).unwrap().is_zero());
        let full: BigRational = e.ssef[1..].iter().sum();
        assert_eq!(failure_bound(&e, 13).unwrap(), full);
        assert!(failure_bound(&e, 0).is_err());
        assert!(failure_bound(&e, 14).is_err());
    }

    #[test]
    fn first_term_too_large_is_flagged() {
        let p = hmin_quantile(&fake(&[1, 2, 0, 0]), 0.5).unwrap();
        assert_eq!(p.h_bar, 1);
        assert!(p.flagged);
        assert!(p.tail_exact.unwrap().is_zero());
    }

    #[test]
    fn quantile_is_maximal() {
        let e = ensemble_ssef(&EnsembleSpec::rma(3, 2), 48).unwrap();
        let p = hmin_quantile(&e, 0.5).unwrap();
        let eps = BigRational::from_float(0.5).unwrap();
        assert!(failure_bound(&e, p.h_bar).unwrap() <= eps);
        assert!(p.h_bar > e.n || failure_bound(&e, p.h_bar + 1).unwrap() > eps);
        assert!(!p.flagged);
    }

    #[test]
    fn singleton_sweep_matches_quantile() {
        let spec = EnsembleSpec::rma(3, 2);
        let p = bound_sweep(&spec, &[12], SweepOptions::default()).unwrap();
        let q = hmin_quantile(&ensemble_ssef(&spec, 12).unwrap(), 0.5).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!((p[0].h_bar, p[0].n), (q.h_bar, 12));
    }

    #[test]
    fn log_path_agrees_with_exact() {
        for (q, l, n) in [(3, 2, 96), (4, 3, 128), (2, 3, 100)] {
            let spec = EnsembleSpec::rma(q, l);
            let e = ensemble_ssef(&spec, n).unwrap();
            let le = log_ssef_rma(&spec, n).unwrap();
            for h in [2, n / 4, n / 2, n + 1] {
                let a = rational_to_f64(&failure_bound(&e, h).unwrap());
                let b = failure_bound_ln(&le.ln_ssef, h).unwrap().exp();
                assert!(a == b || ((a - b) / a).abs() < 1e-9, "{q} {l} {n} {h}: {a} {b}");
            }
            assert_eq!(hmin_quantile(&e, 0.5).unwrap().h_bar, hmin_quantile_ln(n, &le.ln_ssef, 0.5).unwrap().h_bar);
        }
    }

    #[test]
    fn bad_epsilon() {
        let e = fake(&[1, 0, 0]);
        assert!(hmin_quantile(&e, 0.0).is_err());
        assert!(hmin_quantile(&e, 1.0).is_err());
    }
}
