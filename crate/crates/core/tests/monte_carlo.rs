//! Battery of Monte Carlo checks on random instances.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semrd_core::instances::random_model;
use semrd_core::{simulate_direct, solve_direct_given_rate};

#[test]
fn z_scores_look_standard_normal() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut flagged = Vec::new();
    for i in 0..50u64 {
        let k = rng.random_range(1..=4);
        let m = random_model(&mut rng, k);
        let r = rng.random_range(0.0..3.0);
        let s = solve_direct_given_rate(&m, r).unwrap();
        let rep = simulate_direct(&m, &s.k_star, 100_000, 7000 + i).unwrap();
        if rep.z_score.abs() > 3.0 {
            flagged.push((m, s, i));
        }
    }
    assert!(flagged.len() <= 2, "{} instances with |z| > 3", flagged.len());
    for (m, s, i) in flagged {
        let rep = simulate_direct(&m, &s.k_star, 10_000_000, 9000 + i).unwrap();
        assert!(rep.z_score.abs() <= 4.0, "instance {i} re-run z = {}", rep.z_score);
    }
}
