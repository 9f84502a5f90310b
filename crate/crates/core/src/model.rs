//! The semantic model `Θ = BX + V` and the Gaussian identities shared by all
//! regimes.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{
    symmetrize, Eigen, SpdMatrix, SymmetricMatrix, LOEWNER_RELATIVE_TOLERANCE,
};

/// Problem instance: state prior `Σ_X`, semantic map `B`, semantic noise
/// `Σ_V`, encoder weight `W_e` and decoder weight `W_d`.
///
/// `W_d` is validated and kept, but no distortion depends on it: the decoder's
/// best response is the conditional mean whatever its weight.
#[derive(Debug, Clone)]
pub struct SemanticModel {
    sigma_x: SpdMatrix,
    b: DMatrix<f64>,
    sigma_v: SymmetricMatrix,
    w_e: SpdMatrix,
    w_d: SpdMatrix,
    w_tilde: SymmetricMatrix,
    c0: SymmetricMatrix,
}

impl SemanticModel {
    pub fn new(
        sigma_x: SpdMatrix,
        b: DMatrix<f64>,
        sigma_v: SymmetricMatrix,
        w_e: SpdMatrix,
        w_d: SpdMatrix,
    ) -> Result<Self> {
        let k = sigma_x.dim();
        if b.nrows() != b.ncols() {
            return Err(Error::NotSquare {
                rows: b.nrows(),
                cols: b.ncols(),
            }
            .in_field("b"));
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite.in_field("b"));
        }
        for (field, dim) in [
            ("b", b.nrows()),
            ("sigma_v", sigma_v.dim()),
            ("w_e", w_e.dim()),
            ("w_d", w_d.dim()),
        ] {
            if dim != k {
                return Err(Error::DimensionMismatch {
                    expected: k,
                    found: dim,
                }
                .in_field(field));
            }
        }
        let sigma_v_eig = sigma_v.eigen();
        if sigma_v_eig.min() < -crate::matrix::psd_tolerance(sigma_v_eig.max_abs()) {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: sigma_v_eig.min(),
            }
            .in_field("sigma_v"));
        }
        let w_tilde = compute_effective_weight(w_e.matrix(), &b);
        let c0 = compute_semantic_offset(sigma_x.matrix(), &b, sigma_v.matrix());
        Ok(SemanticModel {
            sigma_x,
            b,
            sigma_v,
            w_e,
            w_d,
            w_tilde,
            c0,
        })
    }

    /// Validates raw row-major blocks; errors name the offending field.
    pub fn from_raw(
        sigma_x: DMatrix<f64>,
        b: DMatrix<f64>,
        sigma_v: DMatrix<f64>,
        w_e: DMatrix<f64>,
        w_d: DMatrix<f64>,
    ) -> Result<Self> {
        let sigma_x = SpdMatrix::new(sigma_x).map_err(|e| e.in_field("sigma_x"))?;
        let sigma_v = SymmetricMatrix::psd(sigma_v).map_err(|e| e.in_field("sigma_v"))?;
        let w_e = SpdMatrix::new(w_e).map_err(|e| e.in_field("w_e"))?;
        let w_d = SpdMatrix::new(w_d).map_err(|e| e.in_field("w_d"))?;
        Self::new(sigma_x, b, sigma_v, w_e, w_d)
    }

    pub fn dim(&self) -> usize {
        self.sigma_x.dim()
    }

    pub fn sigma_x(&self) -> &SpdMatrix {
        &self.sigma_x
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_v(&self) -> &SymmetricMatrix {
        &self.sigma_v
    }

    pub fn w_e(&self) -> &SpdMatrix {
        &self.w_e
    }

    pub fn w_d(&self) -> &SpdMatrix {
        &self.w_d
    }

    /// `W̃ = W_e B + Bᵀ W_e − W_e`.
    pub fn effective_weight(&self) -> &SymmetricMatrix {
        &self.w_tilde
    }

    /// `C_0 = (B − I) Σ_X (B − I)ᵀ + Σ_V`.
    pub fn semantic_offset(&self) -> &SymmetricMatrix {
        &self.c0
    }

    /// `tr(W_e C_0)`: the part of the encoder's loss no message can change.
    pub fn offset_distortion(&self) -> f64 {
        self.c0.trace_product(self.w_e.matrix())
    }

    /// `Cov(Θ) = B Σ_X Bᵀ + Σ_V`.
    pub fn semantic_covariance(&self) -> SymmetricMatrix {
        let m = &self.b * self.sigma_x.matrix() * self.b.transpose() + self.sigma_v.matrix();
        SymmetricMatrix::from_entries(symmetrize(&m))
    }

    /// `tr(W_e Cov(Θ))`, the loss when nothing is sent.
    pub fn prior_semantic_moment(&self) -> f64 {
        self.semantic_covariance().trace_product(self.w_e.matrix())
    }
}

fn compute_effective_weight(w_e: &DMatrix<f64>, b: &DMatrix<f64>) -> SymmetricMatrix {
    let wb = w_e * b;
    let k = wb.nrows();
    // wb[(i,j)] + wb[(j,i)] is bitwise symmetric, so no averaging is needed.
    let m = DMatrix::from_fn(k, k, |i, j| wb[(i, j)] + wb[(j, i)] - w_e[(i, j)]);
    SymmetricMatrix::from_entries(symmetrize(&m))
}

fn compute_semantic_offset(
    sigma_x: &DMatrix<f64>,
    b: &DMatrix<f64>,
    sigma_v: &DMatrix<f64>,
) -> SymmetricMatrix {
    let k = b.nrows();
    let bm = b - DMatrix::<f64>::identity(k, k);
    let m = &bm * sigma_x * bm.transpose() + sigma_v;
    SymmetricMatrix::from_entries(symmetrize(&m))
}

/// `W̃` of a model.
pub fn effective_weight(model: &SemanticModel) -> SymmetricMatrix {
    model.effective_weight().clone()
}

/// `C_0` of a model.
pub fn semantic_offset(model: &SemanticModel) -> SymmetricMatrix {
    model.semantic_offset().clone()
}

/// `prior^{1/2} · w · prior^{1/2}`; its spectrum drives every waterfilling solve.
pub fn normalized_weight(prior: &SpdMatrix, w: &SymmetricMatrix) -> Result<SymmetricMatrix> {
    if prior.dim() != w.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: w.dim(),
        });
    }
    let s = prior.sqrt();
    let m = s.matrix() * w.matrix() * s.matrix();
    Ok(SymmetricMatrix::from_entries(symmetrize(&m)))
}

/// Posterior error covariance `K` with `0 ⪯ K ⪯ prior`.
#[derive(Debug, Clone)]
pub struct PosteriorCovariance {
    k: SymmetricMatrix,
    prior: SpdMatrix,
}

impl PosteriorCovariance {
    /// Checks `0 ⪯ K ⪯ prior` to within `ε_loewner = 1e-9 · ‖prior‖₂`.
    pub fn new(k: DMatrix<f64>, prior: &SpdMatrix) -> Result<Self> {
        let k = SymmetricMatrix::new(k)?;
        if k.dim() != prior.dim() {
            return Err(Error::DimensionMismatch {
                expected: prior.dim(),
                found: k.dim(),
            });
        }
        let tol = loewner_tolerance(prior);
        let lower = k.min_eigenvalue();
        let upper = Eigen::of(&symmetrize(&(prior.matrix() - k.matrix()))).min();
        let violation = (-lower).max(-upper);
        if violation > tol {
            return Err(Error::InfeasiblePosterior { violation });
        }
        Ok(PosteriorCovariance {
            k,
            prior: prior.clone(),
        })
    }

    /// `K = prior`: nothing has been communicated.
    pub fn uninformed(prior: &SpdMatrix) -> Self {
        PosteriorCovariance {
            k: prior.as_symmetric().clone(),
            prior: prior.clone(),
        }
    }

    /// `prior^{1/2} U diag(d) Uᵀ prior^{1/2}` for allocations `d ∈ (0, 1]`.
    pub(crate) fn from_normalized(
        prior: &SpdMatrix,
        prior_sqrt: &SpdMatrix,
        basis: &DMatrix<f64>,
        allocations: &[f64],
    ) -> Result<Self> {
        let inner = Eigen {
            values: nalgebra::DVector::from_column_slice(allocations),
            vectors: basis.clone(),
        }
        .map(|v| v);
        let k = prior_sqrt.matrix() * inner * prior_sqrt.matrix();
        Self::new(symmetrize(&k), prior)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.k.matrix()
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.k
    }

    pub fn prior(&self) -> &SpdMatrix {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.k.dim()
    }

    /// `prior^{-1/2} K prior^{-1/2}`, with spectrum in `[0, 1]`.
    pub fn normalized(&self) -> SymmetricMatrix {
        let s = self.prior.inv_sqrt();
        SymmetricMatrix::from_entries(symmetrize(&(s.matrix() * self.k.matrix() * s.matrix())))
    }

    /// `½ log(det prior / det K)` in nats.
    pub fn rate(&self) -> Result<f64> {
        rate_lower_bound(&self.prior, self)
    }

    pub(crate) fn same_prior(&self, prior: &SpdMatrix) -> bool {
        if self.prior.dim() != prior.dim() {
            return false;
        }
        let scale = prior.matrix().norm().max(f64::MIN_POSITIVE);
        (self.prior.matrix() - prior.matrix()).norm() <= 1e-12 * scale
    }
}

pub(crate) fn loewner_tolerance(prior: &SpdMatrix) -> f64 {
    LOEWNER_RELATIVE_TOLERANCE * prior.spectral_norm()
}

/// Mutual-information lower bound `½ log(det prior / det K)` in nats.
pub fn rate_lower_bound(prior: &SpdMatrix, k: &PosteriorCovariance) -> Result<f64> {
    if prior.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: prior.dim(),
            found: k.dim(),
        });
    }
    let eig = k.as_symmetric().eigen();
    if eig.min() <= 0.0 {
        return Err(Error::SingularPosterior);
    }
    let log_det_k: f64 = eig.values.iter().map(|v| v.ln()).sum();
    Ok(0.5 * (prior.log_det() - log_det_k))
}

/// Encoder distortion in the direct regime: `tr(W_e C_0) + tr(W̃ K_X)`.
pub fn direct_distortion(model: &SemanticModel, k_x: &PosteriorCovariance) -> Result<f64> {
    if !k_x.same_prior(model.sigma_x()) {
        return Err(Error::PriorMismatch);
    }
    Ok(model.offset_distortion() + model.effective_weight().trace_product(k_x.matrix()))
}
