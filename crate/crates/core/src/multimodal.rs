//! Encoders that see `X` only through conditionally independent noisy
//! modalities `Z_j = H_j X + W_j`.

use nalgebra::{DMatrix, DVector};

use crate::curve::{check_grid, RdCurve, RdPoint, Regime};
use crate::design::ALLOCATION_FLOOR;
use crate::direct::solve_direct_given_rate;
use crate::error::{Error, Result};
use crate::matrix::{psd_tolerance, symmetrize, Eigen, SpdMatrix, SymmetricMatrix};
use crate::model::SemanticModel;
use crate::waterfill::solve_min_trace_given_rate;

/// Observation map `H` (`p × k`) with noise covariance `R ≻ 0` (`p × p`).
#[derive(Debug, Clone)]
pub struct Modality {
    h: DMatrix<f64>,
    r: SpdMatrix,
}

impl Modality {
    pub fn new(h: DMatrix<f64>, r: SpdMatrix) -> Result<Self> {
        if h.nrows() != r.dim() {
            return Err(Error::DimensionMismatch {
                expected: r.dim(),
                found: h.nrows(),
            }
            .in_field("h"));
        }
        if h.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite.in_field("h"));
        }
        Ok(Modality { h, r })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &SpdMatrix {
        &self.r
    }

    /// `Hᵀ R⁻¹ H`.
    pub fn precision(&self) -> DMatrix<f64> {
        self.h.transpose() * self.r.inverse().matrix() * &self.h
    }
}

/// Ordered modalities over a `k`-dimensional state; may be empty.
#[derive(Debug, Clone)]
pub struct ModalityStack {
    k: usize,
    modalities: Vec<Modality>,
}

impl ModalityStack {
    pub fn new(k: usize, modalities: Vec<Modality>) -> Result<Self> {
        for m in &modalities {
            if m.h.ncols() != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: m.h.ncols(),
                }
                .in_field("h"));
            }
        }
        Ok(ModalityStack { k, modalities })
    }

    pub fn empty(k: usize) -> Self {
        ModalityStack {
            k,
            modalities: Vec::new(),
        }
    }

    /// `m` copies of one modality.
    pub fn repeated(k: usize, modality: Modality, m: usize) -> Result<Self> {
        Self::new(k, vec![modality; m])
    }

    pub fn dim(&self) -> usize {
        self.k
    }

    pub fn modalities(&self) -> &[Modality] {
        &self.modalities
    }

    pub fn len(&self) -> usize {
        self.modalities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modalities.is_empty()
    }

    /// The first `m` modalities.
    pub fn prefix(&self, m: usize) -> ModalityStack {
        ModalityStack {
            k: self.k,
            modalities: self.modalities[..m.min(self.len())].to_vec(),
        }
    }
}

/// `J_m = Σ_j H_jᵀ R_j⁻¹ H_j`.
pub fn cumulative_precision(stack: &ModalityStack) -> SymmetricMatrix {
    let k = stack.dim();
    let j = stack
        .modalities
        .iter()
        .fold(DMatrix::zeros(k, k), |acc, m| acc + m.precision());
    SymmetricMatrix::psd(j).expect("sum of congruences of PD matrices is PSD")
}

/// `Σ_{X|Z} = (Σ_X⁻¹ + J)⁻¹` and the recoverable part `Σ_S = Σ_X − Σ_{X|Z}`.
pub fn posterior_given_modalities(
    sigma_x: &SpdMatrix,
    j_m: &SymmetricMatrix,
) -> Result<(SpdMatrix, SymmetricMatrix)> {
    if j_m.dim() != sigma_x.dim() {
        return Err(Error::DimensionMismatch {
            expected: sigma_x.dim(),
            found: j_m.dim(),
        });
    }
    let info = SpdMatrix::new(sigma_x.inverse().matrix() + j_m.matrix())?;
    let post = info.inverse();
    let s = SymmetricMatrix::psd(symmetrize(&(sigma_x.matrix() - post.matrix())))?;
    Ok((post, s))
}

#[derive(Debug, Clone)]
pub struct Recoverability {
    /// `Γ = Σ_X^{-1/2} Σ_S Σ_X^{-1/2}`.
    pub gamma: SymmetricMatrix,
    /// Eigenvalues of `Γ`, ascending, in `[0, 1]`.
    pub eigenvalues: Vec<f64>,
    /// Geometric mean `(Π γ_i)^{1/k}`.
    pub factor: f64,
}

pub fn recoverability(sigma_x: &SpdMatrix, sigma_s: &SymmetricMatrix) -> Result<Recoverability> {
    let isq = sigma_x.inv_sqrt();
    let gamma = SymmetricMatrix::new(isq.matrix() * sigma_s.matrix() * isq.matrix())?;
    let tol = psd_tolerance(1.0);
    let eig = gamma.eigen();
    let violation = (-eig.min()).max(eig.max() - 1.0);
    if violation > tol {
        return Err(Error::InfeasiblePosterior { violation });
    }
    // Roundoff-level modes are unobserved directions: `γ = 0` there.
    let eigenvalues: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| if v <= tol { 0.0 } else { v.min(1.0) })
        .collect();
    let factor = if eigenvalues.contains(&0.0) {
        0.0
    } else {
        (eigenvalues.iter().map(|v| v.ln()).sum::<f64>() / eigenvalues.len() as f64).exp()
    };
    Ok(Recoverability {
        gamma,
        eigenvalues,
        factor,
    })
}

#[derive(Debug, Clone)]
pub struct MultimodalSolution {
    pub distortion: f64,
    /// `tr(W̃ Σ_{X|Z})`.
    pub posterior_term: f64,
    /// `Δ_m(R)`: the excess from compressing the recoverable part.
    pub excess: f64,
    pub water_level: f64,
    pub active_modes: usize,
    pub recoverability_factor: f64,
    /// Error covariance of `X` given the message: `Σ_{X|Z} + K_S`.
    pub k_x: DMatrix<f64>,
}

/// Waterfilling of `W̃` over the range of `Σ_S`; directions outside it carry
/// neither rate nor excess.
pub fn solve_multimodal(model: &SemanticModel, stack: &ModalityStack, rate: f64) -> Result<MultimodalSolution> {
    if stack.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: stack.dim(),
        });
    }
    let j = cumulative_precision(stack);
    let (post, s) = posterior_given_modalities(model.sigma_x(), &j)?;
    let rec = recoverability(model.sigma_x(), &s)?;
    let w = model.effective_weight();
    let posterior_term = w.trace_product(post.matrix());

    let eig = s.eigen();
    let cut = psd_tolerance(eig.max_abs());
    let keep: Vec<usize> = (0..eig.dim()).filter(|&i| eig.values[i] > cut).collect();
    let (excess, water_level, active_modes, k_s) = if keep.is_empty() {
        if !(rate >= 0.0) || !rate.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rate must be finite and nonnegative, got {rate}"
            )));
        }
        (0.0, 0.0, 0, DMatrix::zeros(model.dim(), model.dim()))
    } else {
        let p = eig.vectors.select_columns(&keep);
        let root = DVector::from_iterator(keep.len(), keep.iter().map(|&i| eig.values[i].sqrt()));
        let colored = &p * DMatrix::from_diagonal(&root);
        let a = Eigen::of(&symmetrize(&(colored.transpose() * w.matrix() * &colored)));
        let sol = solve_min_trace_given_rate(a.values.as_slice(), rate)?;
        let d: Vec<f64> = sol.allocations.iter().map(|v| v.max(ALLOCATION_FLOOR)).collect();
        let basis = &colored * &a.vectors;
        let k_s = symmetrize(&(&basis * DMatrix::from_diagonal(&DVector::from_vec(d)) * basis.transpose()));
        (sol.achieved_trace, sol.water_level, sol.active_set.len(), k_s)
    };
    Ok(MultimodalSolution {
        distortion: model.offset_distortion() + posterior_term + excess,
        posterior_term,
        excess,
        water_level,
        active_modes,
        recoverability_factor: rec.factor,
        k_x: post.matrix() + k_s,
    })
}

pub fn multimodal_distortion(model: &SemanticModel, stack: &ModalityStack, rate: f64) -> Result<f64> {
    Ok(solve_multimodal(model, stack, rate)?.distortion)
}

/// Multimodal distortion minus the direct-regime distortion at the same rate.
pub fn gap_to_direct(model: &SemanticModel, stack: &ModalityStack, rate: f64) -> Result<f64> {
    Ok(multimodal_distortion(model, stack, rate)? - solve_direct_given_rate(model, rate)?.distortion)
}

pub fn multimodal_curve(model: &SemanticModel, stack: &ModalityStack, rate_grid: &[f64]) -> Result<RdCurve> {
    check_grid(rate_grid)?;
    let points = rate_grid
        .iter()
        .map(|&r| {
            let s = solve_multimodal(model, stack, r)?;
            Ok(RdPoint {
                rate: r,
                distortion: s.distortion,
                regime: Regime::Multimodal,
                water_level: s.water_level,
                active_modes: s.active_modes,
                interior: None,
                covariance: s.k_x,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RdCurve::new(Regime::Multimodal, points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{identity_model, random_model};
    use crate::matrix::loewner_leq;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(k: usize, r: f64) -> Modality {
        Modality::new(DMatrix::identity(k, k), SpdMatrix::from_diagonal(&vec![r; k]).unwrap()).unwrap()
    }

    fn first_axis(k: usize) -> Modality {
        let mut h = DMatrix::zeros(1, k);
        h[(0, 0)] = 1.0;
        Modality::new(h, SpdMatrix::identity(1)).unwrap()
    }

    fn random_modality<R: Rng>(rng: &mut R, k: usize) -> Modality {
        let p = rng.random_range(1..=k);
        let h = DMatrix::from_fn(p, k, |_, _| rng.random_range(-1.0..1.0));
        Modality::new(h, crate::instances::random_spd(rng, p, 0.2, 2.0)).unwrap()
    }

    #[test]
    fn precision_examples() {
        let j = cumulative_precision(&ModalityStack::new(3, vec![unit(3, 4.0)]).unwrap());
        assert!((j.matrix() - DMatrix::identity(3, 3) * 0.25).norm() <= 1e-15);
        let j5 = cumulative_precision(&ModalityStack::repeated(3, unit(3, 4.0), 5).unwrap());
        assert!((j5.matrix() - j.matrix() * 5.0).norm() <= 1e-14);
        let j1 = cumulative_precision(&ModalityStack::new(3, vec![first_axis(3)]).unwrap());
        let eig = j1.eigen();
        assert_eq!(eig.values.iter().filter(|v| v.abs() > 1e-12).count(), 1);
        assert_eq!(cumulative_precision(&ModalityStack::empty(2)).matrix(), &DMatrix::zeros(2, 2));
    }

    #[test]
    fn posterior_examples() {
        let sx = SpdMatrix::identity(2);
        let r = 3.0;
        let j = SymmetricMatrix::from_diagonal(&[1.0 / r, 1.0 / r]);
        let (post, s) = posterior_given_modalities(&sx, &j).unwrap();
        assert!((post.matrix() - DMatrix::identity(2, 2) * (r / (1.0 + r))).norm() <= 1e-15);
        assert!((s.matrix() - DMatrix::identity(2, 2) * (1.0 / (1.0 + r))).norm() <= 1e-15);
        let rec = recoverability(&sx, &s).unwrap();
        assert_relative_eq!(rec.factor, 1.0 / (1.0 + r), epsilon = 1e-15);

        let (post, s) = posterior_given_modalities(&sx, &SymmetricMatrix::zeros(2)).unwrap();
        assert_eq!(post.matrix(), sx.matrix());
        assert_eq!(s.matrix(), &DMatrix::zeros(2, 2));

        let full = recoverability(&sx, sx.as_symmetric()).unwrap();
        assert_relative_eq!(full.factor, 1.0, epsilon = 1e-15);
        let j1 = cumulative_precision(&ModalityStack::new(2, vec![first_axis(2)]).unwrap());
        let (_, s1) = posterior_given_modalities(&sx, &j1).unwrap();
        assert_eq!(recoverability(&sx, &s1).unwrap().factor, 0.0);
    }

    #[test]
    fn identical_unit_modalities() {
        let k = 3;
        let sx = SpdMatrix::identity(k);
        let mut prev = sx.as_symmetric().clone();
        let mut prev_g = 0.0;
        for m in 1..=50 {
            let stack = ModalityStack::repeated(k, unit(k, 1.0), m).unwrap();
            let (post, s) = posterior_given_modalities(&sx, &cumulative_precision(&stack)).unwrap();
            let mf = m as f64;
            assert!((post.matrix() - DMatrix::identity(k, k) / (1.0 + mf)).norm() <= 1e-12);
            assert!(loewner_leq(post.as_symmetric(), &prev, 1e-10).unwrap());
            let g = recoverability(&sx, &s).unwrap().factor;
            assert_relative_eq!(g, mf / (mf + 1.0), epsilon = 1e-12);
            assert!(g >= prev_g && g > 0.0 && g < 1.0);
            prev = post.as_symmetric().clone();
            prev_g = g;
        }
    }

    #[test]
    fn random_stacks_are_loewner_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for k in 1..=4 {
            let sx = crate::instances::random_spd(&mut rng, k, 0.3, 3.0);
            let mut mods = Vec::new();
            let mut prev = sx.as_symmetric().clone();
            let mut prev_g = 0.0;
            for _ in 0..8 {
                mods.push(random_modality(&mut rng, k));
                let stack = ModalityStack::new(k, mods.clone()).unwrap();
                let (post, s) = posterior_given_modalities(&sx, &cumulative_precision(&stack)).unwrap();
                assert!(loewner_leq(post.as_symmetric(), &prev, 1e-10).unwrap());
                let g = recoverability(&sx, &s).unwrap().factor;
                assert!(g >= prev_g - 1e-12);
                prev = post.as_symmetric().clone();
                prev_g = g;
            }
        }
    }

    #[test]
    fn empty_stack_is_zero_rate_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let m = random_model(&mut rng, 3);
        let zero = solve_direct_given_rate(&m, 0.0).unwrap().distortion;
        for r in [0.0, 1.0, 5.0] {
            let d = multimodal_distortion(&m, &ModalityStack::empty(3), r).unwrap();
            assert!((d - zero).abs() <= 1e-12);
            let gap = gap_to_direct(&m, &ModalityStack::empty(3), r).unwrap();
            assert!((gap - (zero - solve_direct_given_rate(&m, r).unwrap().distortion)).abs() <= 1e-12);
        }
    }

    #[test]
    fn precise_sensor_recovers_direct() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        for k in 1..=4 {
            let m = random_model(&mut rng, k);
            // Precision 1e10 per axis; `R = 1e-10 I` itself sits on the PD cutoff.
            let sharp = Modality::new(DMatrix::identity(k, k) * 1e5, SpdMatrix::identity(k)).unwrap();
            let stack = ModalityStack::new(k, vec![sharp]).unwrap();
            for r in [0.3, 1.0, 2.0] {
                let d = multimodal_distortion(&m, &stack, r).unwrap();
                let direct = solve_direct_given_rate(&m, r).unwrap().distortion;
                assert!((d - direct).abs() <= 1e-8, "k={k} r={r} {d} {direct}");
            }
        }
    }

    #[test]
    fn many_unit_modalities_close_the_gap() {
        let k = 2;
        let m = identity_model(k);
        let mut prev = f64::INFINITY;
        for count in [10, 100, 1000] {
            let stack = ModalityStack::repeated(k, unit(k, 1.0), count).unwrap();
            let gap = gap_to_direct(&m, &stack, 1.0).unwrap();
            assert!(gap >= 0.0 && gap < prev);
            assert!(gap <= k as f64 / (count as f64 + 1.0) + 1e-12);
            prev = gap;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn unobserved_direction_keeps_a_gap() {
        let k = 2;
        let m = identity_model(k);
        for count in [1, 10, 1000] {
            let stack = ModalityStack::repeated(k, first_axis(k), count).unwrap();
            let mf = count as f64;
            for r in [0.5, 1.0, 3.0] {
                let d = multimodal_distortion(&m, &stack, r).unwrap();
                let expect = 1.0 + 1.0 / (mf + 1.0) + mf / (mf + 1.0) * (-2.0 * r).exp();
                assert!((d - expect).abs() <= 1e-12);
                let gap = gap_to_direct(&m, &stack, r).unwrap();
                assert!(gap >= (1.0 - (-r).exp()).powi(2) - 1e-12);
            }
        }
    }

    #[test]
    fn total_error_covariance_matches_distortion() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        for k in 1..=4 {
            let m = random_model(&mut rng, k);
            let stack = ModalityStack::new(k, (0..3).map(|_| random_modality(&mut rng, k)).collect()).unwrap();
            let s = solve_multimodal(&m, &stack, 0.8).unwrap();
            let rebuilt = m.offset_distortion() + m.effective_weight().trace_product(&s.k_x);
            assert!((rebuilt - s.distortion).abs() <= 1e-9);
        }
    }

    #[test]
    fn dimension_errors() {
        assert!(Modality::new(DMatrix::zeros(2, 3), SpdMatrix::identity(1)).is_err());
        assert!(ModalityStack::new(2, vec![unit(3, 1.0)]).is_err());
        assert!(solve_multimodal(&identity_model(2), &ModalityStack::empty(3), 1.0).is_err());
    }
}
