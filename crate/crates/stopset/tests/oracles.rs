use num_bigint::BigUint;
use num_traits::Zero;
use rand::Rng;

use stopset::brute_force::*;
use stopset::codec_sim::*;
use stopset::enumerators::*;
use stopset::numerics::rational_to_f64;

#[test]
fn accumulator_table_equals_closure_counts() {
    for n in 1..=8 {
        let t = siosef_accumulator(n);
        let c = pair_counts(&closure_support_pairs(Constituent::Accumulator, n).unwrap(), n);
        for w in 0..=n {
            for h in 0..=n {
                assert_eq!(t.entries[w][h], BigUint::from(c[w][h]), "N={n} w={w} h={h}");
            }
        }
        let f = siosef_feedforward(n);
        let cf = pair_counts(&closure_support_pairs(Constituent::Feedforward, n).unwrap(), n);
        for w in 0..=n {
            for h in 0..=n {
                assert_eq!(f.entries[w][h], BigUint::from(cf[w][h]));
            }
        }
    }
}

#[test]
fn accumulator_output_lower_bound() {
    let t = siosef_accumulator(40);
    for w in 0..=40usize {
        for h in 0..w.div_ceil(2) {
            assert!(t.entries[w][h].is_zero());
        }
    }
}

#[test]
fn ra_enumerator_equals_exhaustive_average() {
    let spec = EnsembleSpec::rma(3, 1);
    let exact = iossef_rma(&spec, 6).unwrap();
    let oracle = exhaustive_ensemble_ssef(&spec, 6).unwrap();
    assert_eq!(ssef(&exact), oracle);
}

#[test]
fn raa_enumerator_equals_exhaustive_average() {
    let spec = EnsembleSpec::rma(3, 2);
    let exact = ssef_rma(&spec, 6).unwrap();
    let oracle = exhaustive_ensemble_ssef(&spec, 6).unwrap();
    assert_eq!(exact.ssef, oracle);
}

#[test]
fn hcc_reduced_instances_equal_exhaustive_average() {
    for t in 1..=4u8 {
        let spec = EnsembleSpec::hcc(t, 2);
        let exact = iossef_hcc(&spec, 6).unwrap();
        let oracle = exhaustive_ensemble_ssef(&spec, 6).unwrap();
        assert_eq!(exact.ssef, oracle, "type-{t}");
    }
}

#[test]
fn decoder_residual_is_max_stopping_set() {
    let spec = EnsembleSpec::rma(3, 2);
    let inst = CodeInstance::random(&spec, 18, 2024).unwrap();
    let g = inst.graph();
    let mut rng = rng_stream(99, 0);
    for &p in &[0.3, 0.5, 0.7] {
        for _ in 0..40 {
            let info: Vec<u8> = (0..inst.k).map(|_| rng.gen_range(0..2)).collect();
            let vals = g.encode_all(&info);
            let pat = bec_transmit(18, p, &mut rng);
            let r = iterative_decode(&inst, &pat, &vals);
            assert!(r.values_ok);
            let m = max_stopping_set_within(&inst, &pat.erased).unwrap();
            assert_eq!(r.residual, m, "p={p} E={:?}", pat.erased);
        }
    }
}

#[test]
fn chains_versus_distinct_sets() {
    // ensemble averages count support chains; distinct stopping sets can be fewer
    let spec = EnsembleSpec::rma(3, 1);
    let perms = all_permutations(6);
    let mut chains = vec![0u64; 7];
    let mut sets = vec![0u64; 7];
    for p in perms {
        let mut inst = CodeInstance::new(&spec, 2, vec![p], None).unwrap();
        inst.terminated = true;
        for (a, b) in chains.iter_mut().zip(chain_counts(&inst, 6).unwrap()) {
            *a += b;
        }
        for (a, b) in sets.iter_mut().zip(stopping_set_counts(&inst).unwrap()) {
            *a += b;
        }
    }
    assert!(chains.iter().zip(&sets).all(|(c, s)| c >= s));
    let e = iossef_rma(&spec, 6).unwrap();
    let f: Vec<f64> = ssef(&e).iter().map(rational_to_f64).collect();
    for h in 0..=6 {
        assert!((f[h] - chains[h] as f64 / 720.0).abs() < 1e-12);
    }
}

#[test]
fn failure_bound_equals_sampled_small_set_count() {
    // hBar = 4 at N = 12: average number of nonempty stopping sets of size <= 3
    let spec = EnsembleSpec::rma(3, 2);
    let e = ensemble_ssef(&spec, 12).unwrap();
    let exact = rational_to_f64(&stopset::finite_bounds::failure_bound(&e, 4).unwrap());
    let s = sampled_ensemble_ssef(&spec, 12, 20_000, 5, 3).unwrap();
    let mean: f64 = s.mean[1..=3].iter().sum();
    let sigma: f64 = s.stderr[1..=3].iter().sum();
    assert!(exact > 0.0);
    assert!((mean - exact).abs() <= 3.0 * sigma, "{mean} vs {exact} (sigma {sigma})");
}
