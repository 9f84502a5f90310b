//! Seeded random problem instances for tests, oracles and verification.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::matrix::{symmetrize, Eigen, SpdMatrix, SymmetricMatrix};
use crate::model::SemanticModel;

/// Orthogonal matrix from the eigenvectors of a random symmetric matrix.
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, k: usize) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    Eigen::of(&symmetrize(&(&g + g.transpose()))).vectors
}

/// `U diag(λ) Uᵀ` with `λ` uniform in `[lo, hi)` and a random orthogonal `U`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, k: usize, lo: f64, hi: f64) -> SpdMatrix {
    let u = random_orthogonal(rng, k);
    let values: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    spd_in_basis(&u, &values)
}

fn spd_in_basis(u: &DMatrix<f64>, values: &[f64]) -> SpdMatrix {
    let raw = u * DMatrix::from_diagonal(&DVector::from_column_slice(values)) * u.transpose();
    SpdMatrix::new(raw).expect("positive spectrum")
}

/// General instance: dense covariances, `B = I + perturbation`, `Σ_V ≻ 0`.
/// The effective weight is indefinite on a fair share of draws.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, k: usize) -> SemanticModel {
    let sigma_x = random_spd(rng, k, 0.3, 3.0);
    let b = DMatrix::identity(k, k) + DMatrix::from_fn(k, k, |_, _| rng.random_range(-0.6..0.6));
    let sigma_v = random_spd(rng, k, 0.05, 1.0);
    let w_e = random_spd(rng, k, 0.3, 2.0);
    let w_d = random_spd(rng, k, 0.3, 2.0);
    SemanticModel::new(sigma_x, b, sigma_v.as_symmetric().clone(), w_e, w_d)
        .expect("consistent dimensions")
}

/// Instance whose `Σ_X`, `B`, `Σ_V`, `W_e` share one random eigenbasis.
/// Every `b_i > 0.6`, so the effective weight and the remote weight are PD.
pub fn random_diagonalizable_model<R: Rng + ?Sized>(rng: &mut R, k: usize) -> SemanticModel {
    let u = random_orthogonal(rng, k);
    let mut draw = |lo: f64, hi: f64| -> Vec<f64> { (0..k).map(|_| rng.random_range(lo..hi)).collect() };
    let sx = draw(0.3, 3.0);
    let b = draw(0.6, 1.5);
    let sv = draw(0.05, 1.0);
    let we = draw(0.3, 2.0);
    let b = u.clone() * DMatrix::from_diagonal(&DVector::from_vec(b)) * u.transpose();
    SemanticModel::new(
        spd_in_basis(&u, &sx),
        symmetrize(&b),
        spd_in_basis(&u, &sv).as_symmetric().clone(),
        spd_in_basis(&u, &we),
        SpdMatrix::identity(k),
    )
    .expect("consistent dimensions")
}

/// `Σ_X = I`, `B = I`, `Σ_V = 0`, `W_e = W_d = I`.
pub fn identity_model(k: usize) -> SemanticModel {
    SemanticModel::new(
        SpdMatrix::identity(k),
        DMatrix::identity(k, k),
        SymmetricMatrix::zeros(k),
        SpdMatrix::identity(k),
        SpdMatrix::identity(k),
    )
    .expect("consistent dimensions")
}

/// One-dimensional model with `Σ_X = σ²`, `B = b`, `Σ_V = τ²`, `W_e = w`.
pub fn scalar_model(sigma2: f64, b: f64, tau2: f64, w: f64) -> SemanticModel {
    SemanticModel::from_raw(
        DMatrix::from_element(1, 1, sigma2),
        DMatrix::from_element(1, 1, b),
        DMatrix::from_element(1, 1, tau2),
        DMatrix::from_element(1, 1, w),
        DMatrix::from_element(1, 1, 1.0),
    )
    .expect("valid scalar model")
}
