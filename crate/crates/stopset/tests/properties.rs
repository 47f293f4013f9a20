use num_rational::BigRational;
use proptest::prelude::*;
use rand::Rng;
use stopset::brute_force::is_stopping_set;
use stopset::codec_sim::*;
use stopset::enumerators::{ensemble_ssef, EnsembleSpec};
use stopset::finite_bounds::{failure_bound, hmin_quantile};
use stopset::numerics::{binom, h2};

fn small_code(seed: u64) -> (CodeInstance, Vec<u8>) {
    let inst = CodeInstance::random(&EnsembleSpec::rma(3, 2), 12, seed).unwrap();
    let mut rng = rng_stream(seed, 1);
    let info: Vec<u8> = (0..inst.k).map(|_| rng.gen_range(0..2)).collect();
    let vals = inst.graph().encode_all(&info);
    (inst, vals)
}

fn mask_to_set(mask: u32, len: usize) -> Vec<usize> {
    (0..len).filter(|i| mask >> i & 1 == 1).collect()
}

proptest! {
    #[test]
    fn binom_symmetry_and_pascal(n in 1u64..200, k in 0i64..200) {
        prop_assume!(k as u64 <= n);
        prop_assert_eq!(binom(n, k), binom(n, n as i64 - k));
        prop_assert_eq!(binom(n, k), binom(n - 1, k) + binom(n - 1, k - 1));
    }

    #[test]
    fn entropy_concave(a in 0.0f64..1.0, b in 0.0f64..1.0, t in 0.0f64..1.0) {
        let m = t * a + (1.0 - t) * b;
        prop_assert!(h2(m) >= t * h2(a) + (1.0 - t) * h2(b) - 1e-12);
        prop_assert!((h2(a) - h2(1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn more_erasures_never_help(seed in 0u64..500, e in 0u32..4096, extra in 0u32..4096) {
        let (inst, vals) = small_code(seed);
        let g = inst.graph();
        let small = decode_graph(&g, &ErasurePattern::new(mask_to_set(e, 12)), &vals, Schedule::RoundRobin);
        let big = decode_graph(&g, &ErasurePattern::new(mask_to_set(e | extra, 12)), &vals, Schedule::RoundRobin);
        prop_assert!(small.residual.iter().all(|x| big.residual.contains(x)));
        prop_assert!(small.values_ok && big.values_ok);
    }

    #[test]
    fn schedule_does_not_matter(seed in 0u64..500, e in 0u32..4096) {
        let (inst, vals) = small_code(seed);
        let g = inst.graph();
        let pat = ErasurePattern::new(mask_to_set(e, 12));
        let a = decode_graph(&g, &pat, &vals, Schedule::RoundRobin);
        let b = decode_graph(&g, &pat, &vals, Schedule::Reversed);
        prop_assert_eq!(a.residual, b.residual);
    }

    #[test]
    fn union_of_stopping_sets_is_stopping(seed in 0u64..200, e1 in 0u32..4096, e2 in 0u32..4096) {
        // residuals are stopping sets, so this exercises the union property on real ones
        let (inst, vals) = small_code(seed);
        let g = inst.graph();
        let r1 = decode_graph(&g, &ErasurePattern::new(mask_to_set(e1, 12)), &vals, Schedule::RoundRobin).residual;
        let r2 = decode_graph(&g, &ErasurePattern::new(mask_to_set(e2, 12)), &vals, Schedule::RoundRobin).residual;
        prop_assert!(is_stopping_set(&inst, &r1).unwrap());
        let mut u = r1.clone();
        u.extend(&r2);
        u.sort_unstable();
        u.dedup();
        prop_assert!(is_stopping_set(&inst, &u).unwrap());
    }
}

#[test]
fn failure_bound_monotone_in_hbar() {
    for spec in [EnsembleSpec::rma(3, 2), EnsembleSpec::rma(2, 3), EnsembleSpec::hcc(4, 3)] {
        let e = ensemble_ssef(&spec, 24).unwrap();
        let mut last = BigRational::from_integer(0.into());
        for h in 1..=25 {
            let b = failure_bound(&e, h).unwrap();
            assert!(b >= last, "{spec} hbar={h}");
            last = b;
        }
        // a larger epsilon can only allow a larger hbar
        let mut prev = 0;
        for eps in [0.01, 0.1, 0.3, 0.5, 0.9] {
            let hb = hmin_quantile(&e, eps).unwrap().h_bar;
            assert!(hb >= prev);
            prev = hb;
        }
    }
}
