//! Distortion as a function of a total information budget `R_tot`, for
//! encoders that spend rate across several processing steps.
//!
//! Distortions here are the pure program value `min tr(W̃ K)` and exclude the
//! `tr(W_e C_0)` offset.

use crate::direct::direct_design;
use crate::error::{Error, Result};
use crate::model::SemanticModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingPoint {
    /// Total budget `R_tot` in nats.
    pub budget: f64,
    pub distortion: f64,
    /// No direction is saturated at the prior: `ν* < λ_min(A_X)`.
    pub interior: bool,
    pub water_level: f64,
    pub active_modes: usize,
    /// `k (det Σ_X det W̃)^{1/k} e^{−2R/k}`, evaluated when `interior`.
    pub closed_form: Option<f64>,
}

/// Optimal `tr(W̃ K)` at total budget `r_tot`.
pub fn d_opt(model: &SemanticModel, r_tot: f64) -> Result<ScalingPoint> {
    let design = direct_design(model)?;
    let (_, sol) = design.at_rate(r_tot)?;
    let lambdas = design.lambdas();
    let lambda_min = lambdas[0];
    let interior = lambda_min > 0.0 && sol.water_level < lambda_min;
    let closed_form = interior.then(|| {
        let k = lambdas.len() as f64;
        let log_det: f64 = model.sigma_x().log_det() + log_det_weight(model);
        k * ((log_det - 2.0 * r_tot) / k).exp()
    });
    Ok(ScalingPoint {
        budget: r_tot,
        distortion: sol.achieved_trace,
        interior,
        water_level: sol.water_level,
        active_modes: sol.active_set.len(),
        closed_form,
    })
}

fn log_det_weight(model: &SemanticModel) -> f64 {
    model.effective_weight().eigen().values.iter().map(|v| v.ln()).sum()
}

/// Points `L = 1..=steps_max` at `R_tot = L · per_step_rate`.
pub fn scaling_curve(model: &SemanticModel, per_step_rate: f64, steps_max: usize) -> Result<Vec<ScalingPoint>> {
    if !(per_step_rate > 0.0) || !per_step_rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "per-step rate must be positive and finite, got {per_step_rate}"
        )));
    }
    if steps_max == 0 {
        return Err(Error::InvalidArgument("steps must be at least 1".into()));
    }
    (1..=steps_max).map(|l| d_opt(model, l as f64 * per_step_rate)).collect()
}

/// Smallest budget from which every direction is compressed below its prior.
pub fn interior_onset(model: &SemanticModel) -> Result<f64> {
    let w = model.effective_weight();
    if w.min_eigenvalue() <= 0.0 {
        return Err(Error::NotApplicable(format!(
            "effective weight has a nonpositive eigenvalue ({:e}); the interior law never holds",
            w.min_eigenvalue()
        )));
    }
    let design = direct_design(model)?;
    let k = model.dim() as f64;
    let lambda_min = design.lambdas()[0];
    let onset = 0.5 * (model.sigma_x().log_det() + log_det_weight(model) - k * lambda_min.ln());
    Ok(onset.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::direct::solve_direct_given_rate;
    use crate::instances::{identity_model, random_model, scalar_model};
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// `Σ_X = diag(4, 1)`, `W̃ = I`: `A_X` has eigenvalues (4, 1).
    fn four_one() -> SemanticModel {
        SemanticModel::from_raw(
            DMatrix::from_diagonal(&nalgebra::dvector![4.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::zeros(2, 2),
            DMatrix::identity(2, 2),
            DMatrix::identity(2, 2),
        )
        .unwrap()
    }

    #[test]
    fn identity_examples() {
        let p = d_opt(&identity_model(2), 1.0).unwrap();
        assert_relative_eq!(p.distortion, 2.0 * (-1.0f64).exp(), epsilon = 1e-14);
        assert!(p.interior);
        assert_relative_eq!(p.water_level, (-1.0f64).exp(), epsilon = 1e-14);
        assert_relative_eq!(p.closed_form.unwrap(), p.distortion, epsilon = 1e-12);
        assert_eq!(interior_onset(&identity_model(3)).unwrap(), 0.0);

        let curve = scaling_curve(&identity_model(1), 1.0, 4).unwrap();
        for (l, p) in curve.iter().enumerate() {
            assert_relative_eq!(p.distortion, (-2.0 * (l + 1) as f64).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn zero_budget_is_trace_of_normalized_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let m = random_model(&mut rng, 3);
        let p = d_opt(&m, 0.0).unwrap();
        let tr = m.effective_weight().trace_product(m.sigma_x().matrix());
        assert!((p.distortion - tr).abs() <= 1e-12);
    }

    #[test]
    fn matches_direct_minus_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for k in 1..=5 {
            let m = random_model(&mut rng, k);
            for r in [0.0, 0.3, 1.0, 4.0] {
                let p = d_opt(&m, r).unwrap();
                let d = solve_direct_given_rate(&m, r).unwrap().distortion - m.offset_distortion();
                assert!((p.distortion - d).abs() <= 1e-12 * (1.0 + d.abs()));
                if let Some(cf) = p.closed_form {
                    assert!((cf - p.distortion).abs() <= 1e-9 * (1.0 + cf.abs()));
                }
            }
        }
    }

    #[test]
    fn onset_examples() {
        assert_relative_eq!(interior_onset(&four_one()).unwrap(), 2f64.ln(), epsilon = 1e-14);
        assert!(matches!(
            interior_onset(&scalar_model(1.0, 0.25, 0.0, 1.0)),
            Err(Error::NotApplicable(_))
        ));
    }

    #[test]
    fn onset_separates_regimes() {
        let mut rng = ChaCha8Rng::seed_from_u64(62);
        let mut seen = 0;
        while seen < 10 {
            let m = random_model(&mut rng, 3);
            let Ok(onset) = interior_onset(&m) else { continue };
            seen += 1;
            if onset > 1e-6 {
                assert!(!d_opt(&m, onset * (1.0 - 1e-6)).unwrap().interior);
            }
            assert!(d_opt(&m, onset + 1e-6).unwrap().interior);
        }
    }

    #[test]
    fn saturated_regime_follows_active_mode() {
        let m = four_one();
        for r in [0.05, 0.1, 0.5] {
            let p = d_opt(&m, r).unwrap();
            assert!(!p.interior);
            assert_relative_eq!(p.distortion, 4.0 * (-2.0 * r).exp() + 1.0, epsilon = 1e-12);
        }
        // grid over the larger mode; the smaller one absorbs what is left
        let r = 0.1;
        let best = (1..=1000)
            .map(|i| {
                let d1 = i as f64 * 1e-3;
                let d2 = (-2.0 * r - d1.ln()).exp();
                if d2 > 1.0 {
                    f64::INFINITY
                } else {
                    4.0 * d1 + d2
                }
            })
            .fold(f64::INFINITY, f64::min);
        let p = d_opt(&m, r).unwrap();
        assert!(p.distortion <= best + 1e-12);
        assert!(best - p.distortion <= 4.0 * 1e-3);
    }

    #[test]
    fn curve_is_piecewise_exponential() {
        let m = four_one();
        let onset = interior_onset(&m).unwrap();
        let step = 0.1;
        let curve = scaling_curve(&m, step, 30).unwrap();
        for (l, p) in curve.iter().enumerate() {
            assert_eq!(p, &d_opt(&m, (l + 1) as f64 * step).unwrap());
        }
        for w in curve.windows(2) {
            let slope = (w[1].distortion.ln() - w[0].distortion.ln()) / step;
            if w[0].budget > onset {
                assert!((slope + 2.0 / 2.0).abs() <= 1e-9);
            } else if w[1].budget < onset {
                assert!((slope + 1.0).abs() > 1e-3);
            }
        }
    }

    #[test]
    fn rejects_bad_steps() {
        assert!(scaling_curve(&identity_model(1), 0.0, 3).is_err());
        assert!(scaling_curve(&identity_model(1), 1.0, 0).is_err());
    }
}
