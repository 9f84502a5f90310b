//! Direct regime: the encoder observes `X`.

use nalgebra::{DMatrix, DVector};

use crate::curve::{check_grid, RdCurve, RdPoint, Regime};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::model::{PosteriorCovariance, SemanticModel};
use crate::waterfill::WaterfillSolution;

#[derive(Debug, Clone)]
pub struct DirectSolution {
    pub k_star: PosteriorCovariance,
    /// Rate actually spent, in nats.
    pub rate: f64,
    pub distortion: f64,
    /// Eigenvalues of `A_X = Σ_X^{1/2} W̃ Σ_X^{1/2}`, ascending.
    pub eigenvalues: DVector<f64>,
    /// Matching eigenvectors of `A_X`.
    pub eigen_basis: DMatrix<f64>,
    pub allocations: WaterfillSolution,
}

pub(crate) fn direct_design(model: &SemanticModel) -> Result<Design> {
    Design::new(model.sigma_x(), model.effective_weight())
}

fn package(
    model: &SemanticModel,
    design: &Design,
    k: PosteriorCovariance,
    sol: WaterfillSolution,
) -> DirectSolution {
    let eig = design.normalized().eigen();
    DirectSolution {
        k_star: k,
        rate: sol.achieved_rate,
        distortion: model.offset_distortion() + sol.achieved_trace,
        eigenvalues: eig.values.clone(),
        eigen_basis: eig.vectors.clone(),
        allocations: sol,
    }
}

/// Minimal encoder distortion at the given rate.
pub fn solve_direct_given_rate(model: &SemanticModel, rate: f64) -> Result<DirectSolution> {
    let design = direct_design(model)?;
    solve_with(model, &design, rate)
}

fn solve_with(model: &SemanticModel, design: &Design, rate: f64) -> Result<DirectSolution> {
    let (k, sol) = design.at_rate(rate)?;
    Ok(package(model, design, k, sol))
}

/// Minimal rate reaching encoder distortion `d_e`.
pub fn solve_direct_given_distortion(model: &SemanticModel, d_e: f64) -> Result<DirectSolution> {
    let design = direct_design(model)?;
    let offset = model.offset_distortion();
    let (k, sol) = design.at_budget(d_e - offset).map_err(|e| match e {
        Error::Infeasible { floor, .. } => Error::Infeasible {
            budget: d_e,
            floor: offset + floor,
        },
        other => other,
    })?;
    Ok(package(model, &design, k, sol))
}

/// One point per grid rate, in grid order.
pub fn direct_curve(model: &SemanticModel, rate_grid: &[f64]) -> Result<RdCurve> {
    check_grid(rate_grid)?;
    let design = direct_design(model)?;
    let points = rate_grid
        .iter()
        .map(|&r| {
            let s = solve_with(model, &design, r)?;
            Ok(RdPoint {
                rate: r,
                distortion: s.distortion,
                regime: Regime::Direct,
                water_level: s.allocations.water_level,
                active_modes: s.allocations.active_set.len(),
                interior: None,
                covariance: s.k_star.matrix().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RdCurve::new(Regime::Direct, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{identity_model, random_model, scalar_model};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn classical_reduction() {
        for k in [1usize, 2, 4] {
            let m = identity_model(k);
            for r in [0.0, 0.5, 1.0, 2.0, 5.0] {
                let s = solve_direct_given_rate(&m, r).unwrap();
                let expected = k as f64 * (-2.0 * r / k as f64).exp();
                assert_relative_eq!(s.distortion, expected, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn negative_mode_is_never_compressed() {
        // w̃ = 2b - 1 = -0.5
        let m = scalar_model(1.0, 0.25, 0.0, 1.0);
        let c0 = 0.75f64 * 0.75;
        for r in [0.0, 1.0, 10.0] {
            let s = solve_direct_given_rate(&m, r).unwrap();
            assert_eq!(s.k_star.matrix(), m.sigma_x().matrix());
            assert_relative_eq!(s.distortion, c0 - 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_rate_returns_prior_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random_model(&mut rng, 3);
        let s = solve_direct_given_rate(&m, 0.0).unwrap();
        assert_eq!(s.k_star.matrix(), m.sigma_x().matrix());
        assert!((s.distortion - m.prior_semantic_moment()).abs() <= 1e-12);
    }

    #[test]
    fn scalar_inverse_curve() {
        let m = scalar_model(1.0, 1.0, 0.0, 1.0);
        for d in [0.05, 0.3, 0.9, 1.0] {
            let s = solve_direct_given_distortion(&m, d).unwrap();
            assert_relative_eq!(s.rate, 0.5 * (1.0 / d).ln(), epsilon = 1e-14);
        }
    }

    #[test]
    fn loose_target_costs_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = random_model(&mut rng, 3);
        let top = m.prior_semantic_moment();
        let s = solve_direct_given_distortion(&m, top + 0.1).unwrap();
        assert_eq!(s.rate, 0.0);
        assert_eq!(s.k_star.matrix(), m.sigma_x().matrix());
    }

    #[test]
    fn unreachable_target_is_infeasible() {
        let m = scalar_model(1.0, 0.25, 0.0, 1.0);
        assert!(matches!(
            solve_direct_given_distortion(&m, 0.0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn rate_and_distortion_solvers_are_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 1..=5 {
            let m = random_model(&mut rng, k);
            for r in [0.1, 0.7, 2.5] {
                let fwd = solve_direct_given_rate(&m, r).unwrap();
                if fwd.allocations.active_set.is_empty() {
                    continue;
                }
                let back = solve_direct_given_distortion(&m, fwd.distortion).unwrap();
                assert!((back.rate - r).abs() <= 1e-9, "k={k} r={r} back={}", back.rate);
            }
        }
    }

    #[test]
    fn optimizer_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for k in 1..=5 {
            let m = random_model(&mut rng, k);
            let r = 1.3;
            let s = solve_direct_given_rate(&m, r).unwrap();
            let sq = m.sigma_x().sqrt();
            let u = &s.eigen_basis;
            let d = DMatrix::from_diagonal(&DVector::from_vec(s.allocations.allocations.clone()));
            let rebuilt = sq.matrix() * u * d * u.transpose() * sq.matrix();
            assert!((rebuilt - s.k_star.matrix()).norm() <= 1e-9);
            let direct = m.offset_distortion()
                + m.effective_weight().trace_product(s.k_star.matrix());
            assert!((direct - s.distortion).abs() <= 1e-9);

            // entropy budget
            let eig = s.k_star.as_symmetric().eigen();
            let logdet: f64 = eig.values.iter().map(|v| v.ln()).sum();
            let floor = m.sigma_x().log_det() - 2.0 * r;
            assert!(logdet >= floor - 1e-9);
            if s.eigenvalues.iter().any(|&l| l > 1e-9) {
                assert!((logdet - floor).abs() <= 1e-9);
            }

            // nonpositive directions stay at the prior
            let isq = m.sigma_x().inv_sqrt();
            let inner = u.transpose() * isq.matrix() * s.k_star.matrix() * isq.matrix() * u;
            let eps = crate::waterfill::eig_tolerance(s.eigenvalues.as_slice());
            for (i, &l) in s.eigenvalues.iter().enumerate() {
                if l <= eps {
                    assert!((inner[(i, i)] - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn curve_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random_model(&mut rng, 2);
        let c = direct_curve(&m, &[0.0]).unwrap();
        assert_eq!(c.len(), 1);
        assert!((c.points()[0].distortion - m.prior_semantic_moment()).abs() <= 1e-12);

        for k in [1usize, 3] {
            let c = direct_curve(&identity_model(k), &[0.0, 1.0, 2.0]).unwrap();
            let kf = k as f64;
            for (p, r) in c.points().iter().zip([0.0, 1.0, 2.0]) {
                assert_relative_eq!(p.distortion, kf * (-2.0 * r / kf).exp(), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn curve_is_nonincreasing_for_psd_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let grid: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let mut checked = 0;
        while checked < 10 {
            let m = random_model(&mut rng, 3);
            if m.effective_weight().min_eigenvalue() < 0.0 {
                continue;
            }
            checked += 1;
            let c = direct_curve(&m, &grid).unwrap();
            for w in c.points().windows(2) {
                assert!(w[1].distortion <= w[0].distortion + 1e-12);
            }
        }
    }
}
