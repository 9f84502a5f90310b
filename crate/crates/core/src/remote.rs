//! Remote regime: the encoder observes only `Θ`.

use nalgebra::{DMatrix, DVector};

use crate::curve::{check_grid, RdCurve, RdPoint, Regime};
use crate::design::Design;
use crate::error::{Error, Result};
use crate::matrix::{symmetrize, SpdMatrix, SymmetricMatrix};
use crate::model::{PosteriorCovariance, SemanticModel};
use crate::waterfill::WaterfillSolution;

/// Second-order statistics of the remote problem.
#[derive(Debug, Clone)]
pub struct RemoteStats {
    /// `Σ_Θ = B Σ_X Bᵀ + Σ_V`.
    pub sigma_theta: SpdMatrix,
    /// `L_X = Σ_X Bᵀ Σ_Θ⁻¹`, so `E[X | Θ] = L_X Θ`.
    pub l_x: DMatrix<f64>,
    /// `L_V = Σ_V Σ_Θ⁻¹`.
    pub l_v: DMatrix<f64>,
    /// Weight on `K_Θ` in the encoder's loss.
    pub q: SymmetricMatrix,
    /// Loss with `Θ` known exactly at the decoder.
    pub d_inf: f64,
}

#[derive(Debug, Clone)]
pub struct RemoteSolution {
    pub k_theta_star: PosteriorCovariance,
    pub rate: f64,
    pub distortion: f64,
    /// `distortion − d_inf`.
    pub excess: f64,
    /// Eigenvalues of `A_Θ = Σ_Θ^{1/2} Q Σ_Θ^{1/2}`, ascending.
    pub eigenvalues: DVector<f64>,
    pub eigen_basis: DMatrix<f64>,
    pub allocations: WaterfillSolution,
    /// True when `A_Θ` has a nonpositive eigenvalue; those directions are
    /// left at the prior.
    pub nonpositive_modes: bool,
}

pub fn remote_statistics(model: &SemanticModel) -> Result<RemoteStats> {
    let sigma_theta = SpdMatrix::from_symmetric(model.semantic_covariance()).map_err(|e| {
        match e {
            Error::NotPositiveDefinite { min_eigenvalue } => {
                Error::SingularObservation { min_eigenvalue }
            }
            other => other,
        }
    })?;
    let inv = sigma_theta.inverse();
    let l_x = model.sigma_x().matrix() * model.b().transpose() * inv.matrix();
    let l_v = model.sigma_v().matrix() * inv.matrix();
    let w_e = model.w_e().matrix();
    let w_tilde = model.effective_weight().matrix();
    let cross = l_x.transpose() * w_e * &l_v;
    let q = l_x.transpose() * w_tilde * &l_x + &cross + cross.transpose();
    let q = SymmetricMatrix::from_entries(symmetrize(&q));
    let k = model.dim();
    let resid = DMatrix::<f64>::identity(k, k) - &l_x;
    let d_inf = (w_e * &resid * sigma_theta.matrix() * resid.transpose()).trace();
    Ok(RemoteStats {
        sigma_theta,
        l_x,
        l_v,
        q,
        d_inf,
    })
}

struct RemoteProblem {
    stats: RemoteStats,
    design: Design,
}

impl RemoteProblem {
    fn new(model: &SemanticModel) -> Result<Self> {
        let stats = remote_statistics(model)?;
        let design = Design::new(&stats.sigma_theta, &stats.q)?;
        Ok(RemoteProblem { stats, design })
    }

    fn package(&self, k: PosteriorCovariance, sol: WaterfillSolution) -> RemoteSolution {
        let eig = self.design.normalized().eigen();
        let excess = sol.achieved_trace;
        RemoteSolution {
            k_theta_star: k,
            rate: sol.achieved_rate,
            distortion: self.stats.d_inf + excess,
            excess,
            eigenvalues: eig.values.clone(),
            eigen_basis: eig.vectors.clone(),
            allocations: sol,
            nonpositive_modes: self.design.has_nonpositive_modes(),
        }
    }

    fn at_rate(&self, rate: f64) -> Result<RemoteSolution> {
        let (k, sol) = self.design.at_rate(rate)?;
        Ok(self.package(k, sol))
    }
}

pub fn solve_remote_given_rate(model: &SemanticModel, rate: f64) -> Result<RemoteSolution> {
    RemoteProblem::new(model)?.at_rate(rate)
}

pub fn solve_remote_given_distortion(model: &SemanticModel, d_e: f64) -> Result<RemoteSolution> {
    let p = RemoteProblem::new(model)?;
    let d_inf = p.stats.d_inf;
    let (k, sol) = p.design.at_budget(d_e - d_inf).map_err(|e| match e {
        Error::Infeasible { floor, .. } => Error::Infeasible {
            budget: d_e,
            floor: d_inf + floor,
        },
        other => other,
    })?;
    Ok(p.package(k, sol))
}

pub fn remote_curve(model: &SemanticModel, rate_grid: &[f64]) -> Result<RdCurve> {
    check_grid(rate_grid)?;
    let p = RemoteProblem::new(model)?;
    let points = rate_grid
        .iter()
        .map(|&r| {
            let s = p.at_rate(r)?;
            Ok(RdPoint {
                rate: r,
                distortion: s.distortion,
                regime: Regime::Remote,
                water_level: s.allocations.water_level,
                active_modes: s.allocations.active_set.len(),
                interior: None,
                covariance: s.k_theta_star.matrix().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RdCurve::new(Regime::Remote, points)
}
