use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stopset::enumerators::EnsembleSpec;
use stopset::spectral::acc::phi_acc_grid;
use stopset::spectral::*;

fn quick() -> SolveOptions {
    SolveOptions { starts: 16, ..Default::default() }
}

/// Random interior point: every entropy argument strictly inside (0,1).
fn interior_point(rng: &mut ChaCha8Rng, l: usize) -> SpectralPointVars {
    loop {
        let betas: Vec<f64> = (0..=l).map(|_| rng.gen_range(0.05..0.6)).collect();
        let mut gammas = Vec::new();
        let mut ok = true;
        for s in 0..l {
            let (p, b) = (betas[s], betas[s + 1]);
            let lo = (p - b).max(0.0);
            let hi = b.min(1.0 - b).min(p / 2.0);
            if hi - lo < 0.02 {
                ok = false;
                break;
            }
            gammas.push(rng.gen_range(lo + 0.01 * (hi - lo)..hi - 0.01 * (hi - lo)));
        }
        if ok {
            return SpectralPointVars { betas, gammas };
        }
    }
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let h = 1e-6;
    for k in 0..100 {
        let l = 2 + k % 3;
        let q = 2 + k % 5;
        let v = interior_point(&mut rng, l);
        let g = grad_f_rma(&v, q);
        for i in 0..2 * l {
            let bump = |d: f64| {
                let mut w = v.clone();
                if i < l {
                    w.betas[i] += d;
                } else {
                    w.gammas[i - l] += d;
                }
                f_rma(&w, q).unwrap()
            };
            let fd = (bump(h) - bump(-h)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-5 * fd.abs().max(1.0), "point {k} coord {i}: {fd} vs {}", g[i]);
        }
    }
}

#[test]
fn vanishing_support_limit() {
    let v = SpectralPointVars { betas: vec![1e-12, 2e-12, 4e-12], gammas: vec![0.0, 1e-12] };
    assert!(f_rma(&v, 3).unwrap().abs() < 1e-9);
    let bad = SpectralPointVars { betas: vec![0.5, 0.1, 0.2], gammas: vec![0.0, 0.0] };
    assert!(f_rma(&bad, 3).is_err());
}

#[test]
fn psi_equals_dense_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    while checked < 50 {
        let (u, r): (f64, f64) = (rng.gen_range(0.01..0.99), rng.gen_range(0.01..0.99));
        let Some(g) = phi_acc_grid(u, r, 100_000) else { continue };
        let v = phi_acc(u, r).unwrap().0;
        assert!(v >= g - 1e-12 && v - g <= 1e-8, "u={u} r={r}: {v} vs grid {g}");
        checked += 1;
    }
}

#[test]
fn psi_increasing_in_rho() {
    for u in [0.01, 0.1, 0.3, 0.6] {
        let mut last = f64::NEG_INFINITY;
        for k in 1..500 {
            let r = k as f64 / 1000.0;
            let v = psi(u, r);
            if v == f64::NEG_INFINITY {
                assert_eq!(last, f64::NEG_INFINITY, "feasible set must be an interval, u={u} r={r}");
                continue;
            }
            assert!(v > last, "u={u} r={r}");
            last = v;
        }
    }
}

#[test]
fn psi_slope_negative_near_zero_input() {
    for u in [1e-4, 1e-6, 1e-8] {
        assert!(psi(u, 0.05) / u < 0.0, "u={u}");
    }
}

#[test]
fn rma_examples() {
    let two = RmaSolver::new(2, 2, quick()).unwrap().eval(0.05);
    assert!(two.value > 0.0, "{two:?}");
    let three = RmaSolver::new(3, 2, quick()).unwrap();
    assert!(three.eval(0.05).value.abs() <= 1e-6);
    let mid = three.eval(0.3);
    assert!(mid.value > 0.0);
    for (q, l) in [(2, 3), (3, 2), (4, 3), (5, 4)] {
        let r = RmaSolver::new(q, l, quick()).unwrap().eval(0.3);
        let (a, b) = (r.method_a.unwrap(), r.method_b.unwrap());
        assert!((a - b).abs() <= 1e-6, "q={q} L={l}: {a} vs {b}");
    }
}

#[test]
fn interior_argmax_is_stationary() {
    let mut seen = 0;
    for (q, l) in [(3, 2), (4, 2), (2, 3), (4, 3)] {
        let s = RmaSolver::new(q, l, quick()).unwrap();
        for rho in [0.2, 0.3, 0.4] {
            let r = s.eval(rho);
            if !r.interior {
                continue;
            }
            seen += 1;
            let v = SpectralPointVars { betas: r.argmax[..=l].to_vec(), gammas: r.argmax[l + 1..].to_vec() };
            let g = grad_f_rma(&v, q);
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(norm < 1e-8, "q={q} L={l} rho={rho}: |grad| = {norm:e}");
        }
    }
    assert!(seen > 0, "no interior maximiser encountered");
}

#[test]
fn identity_puncturing_is_plain() {
    let s = RmaSolver::new(3, 2, quick()).unwrap();
    for rho in [0.05, 0.15, 0.3, 0.45] {
        let (a, b) = (s.eval(rho).value, s.eval_punctured(1.0, rho).value);
        assert!((a - b).abs() <= 1e-8);
    }
}

#[test]
fn type1_equals_raa_with_symmetric_argmax() {
    let hcc = HccSolver::new(&EnsembleSpec::hcc(1, 4), quick()).unwrap();
    let rma = RmaSolver::new(4, 2, quick()).unwrap();
    for rho in [0.05, 0.1, 0.2, 0.3, 0.4] {
        let (a, b) = (hcc.eval(rho), rma.eval(rho));
        assert!((a.value - b.value).abs() <= 1e-6, "rho={rho}: {} vs {}", a.value, b.value);
        if a.value > 1e-4 {
            let betas = &a.argmax[1..];
            let spread = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                - betas.iter().cloned().fold(f64::INFINITY, f64::min);
            assert!(spread <= 1e-5, "rho={rho}: {betas:?}");
        }
    }
}

#[test]
fn curves_are_nonnegative() {
    let grid = rho_grid(0.01, 0.49, 0.04);
    for spec in [EnsembleSpec::rma(3, 2), EnsembleSpec::rma(2, 4), EnsembleSpec::hcc(4, 4)] {
        let c = SpectralCurve::compute(&spec, 1.0, &grid, quick()).unwrap();
        assert!(c.min_value() >= -1e-6, "{spec}");
    }
    let c = SpectralCurve::compute(&EnsembleSpec::rma(4, 3), 0.75, &grid, quick()).unwrap();
    assert!(c.min_value() >= -1e-6);
}

#[test]
fn extraction_on_synthetic_curves() {
    let o = Rho0Options::default();
    let ramp = |c: f64| move |x: f64| RsResult {
        rho: x,
        value: (x - c).max(0.0),
        method_a: None,
        method_b: None,
        disagreement: false,
        argmax: vec![],
        interior: false,
    };
    let r = extract_rho0(ramp(0.1234), &o);
    assert!((r.rho0.unwrap() - 0.1234).abs() < 2e-5);
    assert!(extract_rho0(ramp(-0.01), &o).rho0.is_none());
    let flat = extract_rho0(ramp(0.9), &o);
    assert!(flat.never_positive);
}

#[test]
fn branch_born_between_sweep_samples() {
    // past rho ~ 0.4895 the maximiser of q=2 L=3 lies on a stationary branch
    // that exists only over a start interval shorter than the sweep spacing
    let s = RmaSolver::new(2, 3, quick()).unwrap();
    for rho in [0.488, 0.49, 0.5] {
        let r = s.eval(rho);
        let (a, b) = (r.method_a.unwrap(), r.method_b.unwrap());
        assert!((a - b).abs() <= 1e-6, "rho={rho}: {a} vs {b}");
    }
}
