//! Validated symmetric matrices.
//!
//! Every covariance and weight in the crate passes through [`SymmetricMatrix`]
//! or [`SpdMatrix`]. Inputs are symmetrized once as `(A + Aᵀ)/2` and then
//! frozen. The eigendecomposition is the only factorization used anywhere, so
//! semidefinite inputs with exact zero eigenvalues follow the same code path
//! as definite ones.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative eigenvalue threshold for definiteness checks.
pub const PSD_RELATIVE_TOLERANCE: f64 = 1e-10;

/// Relative (to the prior's spectral norm) tolerance for Loewner feasibility.
pub const LOEWNER_RELATIVE_TOLERANCE: f64 = 1e-9;

/// `ε_psd = 1e-10 · max(1, max |λ|)`.
pub fn psd_tolerance(max_abs_eigenvalue: f64) -> f64 {
    PSD_RELATIVE_TOLERANCE * max_abs_eigenvalue.max(1.0)
}

/// Eigendecomposition with eigenvalues in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    pub fn of(m: &DMatrix<f64>) -> Self {
        let se = SymmetricEigen::new(m.clone());
        let n = se.eigenvalues.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
        let values = DVector::from_iterator(n, order.iter().map(|&i| se.eigenvalues[i]));
        let mut vectors = DMatrix::zeros(n, n);
        for (c, &i) in order.iter().enumerate() {
            vectors.set_column(c, &se.eigenvectors.column(i));
        }
        Eigen { values, vectors }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `U · diag(f(λ)) · Uᵀ`, symmetrized.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
        let scaled = DVector::from_iterator(self.dim(), self.values.iter().map(|&v| f(v)));
        let mut left = self.vectors.clone();
        for (mut col, s) in left.column_iter_mut().zip(scaled.iter()) {
            col *= *s;
        }
        symmetrize(&(left * self.vectors.transpose()))
    }
}

/// `(A + Aᵀ)/2`. Exactly symmetric inputs come back unchanged.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            m[(i, i)]
        } else {
            (m[(i, j)] + m[(j, i)]) / 2.0
        }
    })
}

fn check_square(raw: &DMatrix<f64>) -> Result<()> {
    if raw.nrows() != raw.ncols() {
        return Err(Error::NotSquare {
            rows: raw.nrows(),
            cols: raw.ncols(),
        });
    }
    if raw.nrows() == 0 {
        return Err(Error::Empty);
    }
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(())
}

/// Dense real symmetric matrix with a lazily cached eigendecomposition.
#[derive(Debug, Clone)]
pub struct SymmetricMatrix {
    entries: DMatrix<f64>,
    eigen: OnceLock<Eigen>,
}

impl PartialEq for SymmetricMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl SymmetricMatrix {
    /// Symmetrizes a square matrix. No definiteness requirement.
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        check_square(&raw)?;
        Ok(Self::from_entries(symmetrize(&raw)))
    }

    /// Symmetrizes and requires positive semidefiniteness. Eigenvalues in
    /// `(-ε_psd, 0)` are clipped to zero.
    pub fn psd(raw: DMatrix<f64>) -> Result<Self> {
        let sym = Self::new(raw)?;
        let eig = sym.eigen();
        let tol = psd_tolerance(eig.max_abs());
        if eig.min() <= -tol {
            return Err(Error::NotPositiveSemidefinite {
                min_eigenvalue: eig.min(),
            });
        }
        if eig.min() < 0.0 {
            let clipped = Eigen {
                values: eig.values.map(|v| v.max(0.0)),
                vectors: eig.vectors.clone(),
            };
            let entries = clipped.map(|v| v);
            let out = Self::from_entries(entries);
            let _ = out.eigen.set(clipped);
            return Ok(out);
        }
        Ok(sym)
    }

    /// Wraps entries that are already exactly symmetric.
    pub(crate) fn from_entries(entries: DMatrix<f64>) -> Self {
        debug_assert_eq!(entries, entries.transpose());
        SymmetricMatrix {
            entries,
            eigen: OnceLock::new(),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self::from_entries(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_entries(DMatrix::identity(dim, dim))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self::from_entries(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn eigen(&self) -> &Eigen {
        self.eigen.get_or_init(|| Eigen::of(&self.entries))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().min()
    }

    pub fn trace(&self) -> f64 {
        self.entries.trace()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.entries.norm()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigen().max_abs()
    }

    /// `tr(self · other)` for a square `other` of the same size.
    pub fn trace_product(&self, other: &DMatrix<f64>) -> f64 {
        self.entries.dot(&other.transpose())
    }

    pub fn is_positive_definite(&self) -> bool {
        let eig = self.eigen();
        eig.min() > psd_tolerance(eig.max_abs())
    }
}

/// Symmetric positive-definite matrix; eigendata is computed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    base: SymmetricMatrix,
}

impl SpdMatrix {
    pub fn new(raw: DMatrix<f64>) -> Result<Self> {
        let base = SymmetricMatrix::new(raw)?;
        Self::from_symmetric(base)
    }

    pub fn from_symmetric(base: SymmetricMatrix) -> Result<Self> {
        let eig = base.eigen();
        if eig.min() <= psd_tolerance(eig.max_abs()) {
            return Err(Error::NotPositiveDefinite {
                min_eigenvalue: eig.min(),
            });
        }
        Ok(SpdMatrix { base })
    }

    /// Builds `U diag(λ) Uᵀ` from trusted eigendata (all `λ > 0`).
    pub(crate) fn from_eigen(eigen: Eigen) -> Self {
        let base = SymmetricMatrix::from_entries(eigen.map(|v| v));
        let _ = base.eigen.set(eigen);
        SpdMatrix { base }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_eigen(Eigen {
            values: DVector::from_element(dim, 1.0),
            vectors: DMatrix::identity(dim, dim),
        })
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.base.matrix()
    }

    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        &self.base
    }

    pub fn eigen(&self) -> &Eigen {
        self.base.eigen()
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigen().values
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigen().vectors
    }

    pub fn trace(&self) -> f64 {
        self.base.trace()
    }

    pub fn spectral_norm(&self) -> f64 {
        self.eigen().max()
    }

    pub fn log_det(&self) -> f64 {
        self.eigenvalues().iter().map(|v| v.ln()).sum()
    }

    /// Principal square root `U diag(√λ) Uᵀ`.
    pub fn sqrt(&self) -> SpdMatrix {
        self.spectral_map(f64::sqrt)
    }

    pub fn inv_sqrt(&self) -> SpdMatrix {
        self.spectral_map(|v| 1.0 / v.sqrt())
    }

    pub fn inverse(&self) -> SpdMatrix {
        self.spectral_map(|v| 1.0 / v)
    }

    fn spectral_map(&self, f: impl Fn(f64) -> f64) -> SpdMatrix {
        let eig = self.eigen();
        Self::from_eigen(Eigen {
            values: eig.values.map(f),
            vectors: eig.vectors.clone(),
        })
    }

    /// `U · diag(√λ)`: maps standard normals to samples with this covariance.
    pub fn coloring(&self) -> DMatrix<f64> {
        let eig = self.eigen();
        let mut c = eig.vectors.clone();
        for (mut col, v) in c.column_iter_mut().zip(eig.values.iter()) {
            col *= v.sqrt();
        }
        c
    }
}

/// Principal square root of an SPD matrix.
pub fn matrix_sqrt(s: &SpdMatrix) -> SpdMatrix {
    s.sqrt()
}

/// `a ⪯ b` in Loewner order: `λ_min(b - a) ≥ -tol`.
pub fn loewner_leq(a: &SymmetricMatrix, b: &SymmetricMatrix, tol: f64) -> Result<bool> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let diff = symmetrize(&(b.matrix() - a.matrix()));
    Ok(Eigen::of(&diff).min() >= -tol)
}

/// A validated covariance: definite when requested, otherwise semidefinite.
#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    Definite(SpdMatrix),
    Semidefinite(SymmetricMatrix),
}

impl Covariance {
    pub fn as_symmetric(&self) -> &SymmetricMatrix {
        match self {
            Covariance::Definite(s) => s.as_symmetric(),
            Covariance::Semidefinite(s) => s,
        }
    }
}

/// Symmetrizes `raw` and checks its spectrum against `ε_psd`.
pub fn validate_covariance(raw: DMatrix<f64>, require_pd: bool) -> Result<Covariance> {
    if require_pd {
        SpdMatrix::new(raw).map(Covariance::Definite)
    } else {
        SymmetricMatrix::psd(raw).map(Covariance::Semidefinite)
    }
}

/// `U · diag(√λ_+)` for a PSD matrix, clipping tiny negatives to zero.
pub(crate) fn psd_coloring(m: &SymmetricMatrix) -> DMatrix<f64> {
    let eig = m.eigen();
    let mut c = eig.vectors.clone();
    for (mut col, v) in c.column_iter_mut().zip(eig.values.iter()) {
        col *= v.max(0.0).sqrt();
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn relative_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
        (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn identity_is_accepted() {
        let s = SpdMatrix::new(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(s.eigenvalues().as_slice(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn indefinite_matrix_reports_its_negative_eigenvalue() {
        let err = SpdMatrix::new(dmatrix![1.0, 2.0; 2.0, 1.0]).unwrap_err();
        match err {
            Error::NotPositiveDefinite { min_eigenvalue } => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn input_is_symmetrized_once() {
        let s = SpdMatrix::new(dmatrix![1.0, 1e-13; 0.0, 1.0]).unwrap();
        assert_eq!(s.matrix()[(0, 1)], 5e-14);
        assert_eq!(s.matrix()[(1, 0)], 5e-14);
    }

    #[test]
    fn non_square_and_non_finite_are_rejected() {
        let err = SymmetricMatrix::new(DMatrix::zeros(2, 3)).unwrap_err();
        assert_eq!(err, Error::NotSquare { rows: 2, cols: 3 });
        let err = SymmetricMatrix::new(dmatrix![1.0, f64::NAN; 0.0, 1.0]).unwrap_err();
        assert_eq!(err, Error::NonFinite);
    }

    #[test]
    fn validate_covariance_dispatches_on_definiteness() {
        let pd = validate_covariance(DMatrix::identity(3, 3), true).unwrap();
        assert!(matches!(pd, Covariance::Definite(_)));
        assert_eq!(pd.as_symmetric().eigen().values.as_slice(), &[1.0, 1.0, 1.0]);
        let bad = validate_covariance(dmatrix![1.0, 2.0; 2.0, 1.0], true);
        match bad {
            Err(Error::NotPositiveDefinite { min_eigenvalue }) => {
                assert_relative_eq!(min_eigenvalue, -1.0, epsilon = 1e-12)
            }
            other => panic!("{other:?}"),
        }
        let semi = validate_covariance(dmatrix![1.0, 0.0; 0.0, 0.0], false).unwrap();
        assert!(matches!(semi, Covariance::Semidefinite(_)));
        assert!(validate_covariance(dmatrix![1.0, 0.0; 0.0, 0.0], true).is_err());
        assert!(matches!(
            validate_covariance(DMatrix::zeros(2, 3), false),
            Err(Error::NotSquare { .. })
        ));
    }

    #[test]
    fn psd_clips_tiny_negative_eigenvalues() {
        let m = dmatrix![1.0, 1.0; 1.0, 1.0 - 1e-14];
        let s = SymmetricMatrix::psd(m).unwrap();
        assert!(s.min_eigenvalue() >= 0.0);
        assert!(SymmetricMatrix::psd(dmatrix![1.0, 0.0; 0.0, -1e-3]).is_err());
    }

    #[test]
    fn sqrt_examples() {
        let s = matrix_sqrt(&SpdMatrix::identity(3));
        assert_eq!(s.matrix(), &DMatrix::<f64>::identity(3, 3));
        let s = matrix_sqrt(&SpdMatrix::from_diagonal(&[4.0, 9.0]).unwrap());
        assert_relative_eq!(s.matrix()[(0, 0)], 2.0, epsilon = 1e-15);
        assert_relative_eq!(s.matrix()[(1, 1)], 3.0, epsilon = 1e-15);
        assert_eq!(s.matrix()[(0, 1)], 0.0);
    }

    #[test]
    fn sqrt_round_trips_random_spd_up_to_dim_16() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for k in 1..=16 {
            let g = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() - 0.5);
            let raw = &g * g.transpose() + DMatrix::identity(k, k) * 0.1;
            let s = SpdMatrix::new(raw).unwrap();
            let r = matrix_sqrt(&s);
            let back = r.matrix() * r.matrix();
            assert!(relative_frobenius(&back, s.matrix()) <= 1e-10, "k={k}");
            let recon = s.eigen().map(|v| v);
            assert!(relative_frobenius(&recon, s.matrix()) <= 1e-10);
        }
    }

    #[test]
    fn loewner_examples() {
        let a = SymmetricMatrix::new(dmatrix![2.0, 0.3; 0.3, 1.0]).unwrap();
        assert!(loewner_leq(&a, &a, 0.0).unwrap());
        let d12 = SymmetricMatrix::from_diagonal(&[1.0, 2.0]);
        let d22 = SymmetricMatrix::from_diagonal(&[2.0, 2.0]);
        let d13 = SymmetricMatrix::from_diagonal(&[1.0, 3.0]);
        assert!(loewner_leq(&d12, &d22, 0.0).unwrap());
        assert!(!loewner_leq(&d13, &d22, 0.0).unwrap());
        assert!(!loewner_leq(&d22, &d13, 0.0).unwrap());
        let d3 = SymmetricMatrix::identity(3);
        assert!(matches!(
            loewner_leq(&d12, &d3, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
