//! Randomized invariants across regimes.

use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semrd_core::instances::{random_diagonalizable_model, random_model, random_spd};
use semrd_core::{
    cumulative_precision, loewner_leq, posterior_given_modalities, recoverability, solve_direct_given_rate,
    solve_full, solve_full_diagonal, solve_remote_given_rate, Modality, ModalityStack,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn full_information_dominates(seed in any::<u64>(), k in 1usize..=4, diag in any::<bool>(), r in 0.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = if diag { random_diagonalizable_model(&mut rng, k) } else { random_model(&mut rng, k) };
        let f = solve_full(&m, r).unwrap().distortion;
        let d = solve_direct_given_rate(&m, r).unwrap().distortion;
        let rm = solve_remote_given_rate(&m, r).unwrap().distortion;
        prop_assert!(f <= d.min(rm) + 1e-6, "full {} direct {} remote {}", f, d, rm);
    }

    #[test]
    fn full_zero_rate_is_prior_moment(seed in any::<u64>(), k in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_diagonalizable_model(&mut rng, k);
        let s = solve_full_diagonal(&m, 0.0).unwrap();
        prop_assert!((s.distortion - m.prior_semantic_moment()).abs() <= 1e-9);
    }

    #[test]
    fn direct_entropy_budget(seed in any::<u64>(), k in 1usize..=5, r in 0.0f64..6.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, k);
        let s = solve_direct_given_rate(&m, r).unwrap();
        let logdet: f64 = s.k_star.as_symmetric().eigen().values.iter().map(|v| v.ln()).sum();
        let floor = m.sigma_x().log_det() - 2.0 * r;
        prop_assert!(logdet >= floor - 1e-9);
        if s.eigenvalues.iter().any(|&l| l > 1e-9) {
            prop_assert!((logdet - floor).abs() <= 1e-9);
        }
    }

    #[test]
    fn appending_modalities_never_hurts(seed in any::<u64>(), k in 1usize..=4, count in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let sx = random_spd(&mut rng, k, 0.3, 3.0);
        let mut mods = Vec::new();
        let mut prev = sx.as_symmetric().clone();
        let mut prev_g = 0.0;
        for _ in 0..count {
            let h = DMatrix::from_fn(1, k, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            mods.push(Modality::new(h, random_spd(&mut rng, 1, 0.1, 2.0)).unwrap());
            let stack = ModalityStack::new(k, mods.clone()).unwrap();
            let (post, s) = posterior_given_modalities(&sx, &cumulative_precision(&stack)).unwrap();
            prop_assert!(loewner_leq(post.as_symmetric(), &prev, 1e-10).unwrap());
            let g = recoverability(&sx, &s).unwrap().factor;
            prop_assert!(g >= prev_g - 1e-12 && g <= 1.0);
            prev = post.as_symmetric().clone();
            prev_g = g;
        }
    }
}
