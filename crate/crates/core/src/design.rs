//! Shared reconstruction step: waterfill on the spectrum of the normalized
//! weight `prior^{1/2} W prior^{1/2}` and map allocations back to a posterior.

use nalgebra::DMatrix;

use crate::error::Result;
use crate::matrix::{SpdMatrix, SymmetricMatrix};
use crate::model::{normalized_weight, PosteriorCovariance};
use crate::waterfill::{
    eig_tolerance, solve_min_rate_given_budget, solve_min_trace_given_rate, WaterfillSolution,
};

/// Smallest allocation used when rebuilding a posterior, so it stays PD.
pub(crate) const ALLOCATION_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone)]
pub(crate) struct Design {
    prior: SpdMatrix,
    prior_sqrt: SpdMatrix,
    normalized: SymmetricMatrix,
}

impl Design {
    pub(crate) fn new(prior: &SpdMatrix, weight: &SymmetricMatrix) -> Result<Self> {
        let normalized = normalized_weight(prior, weight)?;
        Ok(Design {
            prior: prior.clone(),
            prior_sqrt: prior.sqrt(),
            normalized,
        })
    }

    pub(crate) fn normalized(&self) -> &SymmetricMatrix {
        &self.normalized
    }

    /// Eigenvalues of the normalized weight, ascending.
    pub(crate) fn lambdas(&self) -> &[f64] {
        self.normalized.eigen().values.as_slice()
    }

    pub(crate) fn basis(&self) -> &DMatrix<f64> {
        &self.normalized.eigen().vectors
    }

    pub(crate) fn has_nonpositive_modes(&self) -> bool {
        let eps = eig_tolerance(self.lambdas());
        self.lambdas().iter().any(|&l| l <= eps)
    }

    pub(crate) fn at_rate(&self, rate: f64) -> Result<(PosteriorCovariance, WaterfillSolution)> {
        let sol = solve_min_trace_given_rate(self.lambdas(), rate)?;
        Ok((self.reconstruct(&sol)?, sol))
    }

    pub(crate) fn at_budget(
        &self,
        budget: f64,
    ) -> Result<(PosteriorCovariance, WaterfillSolution)> {
        let sol = solve_min_rate_given_budget(self.lambdas(), budget)?;
        Ok((self.reconstruct(&sol)?, sol))
    }

    fn reconstruct(&self, sol: &WaterfillSolution) -> Result<PosteriorCovariance> {
        if sol.active_set.is_empty() {
            return Ok(PosteriorCovariance::uninformed(&self.prior));
        }
        let d: Vec<f64> = sol
            .allocations
            .iter()
            .map(|v| v.max(ALLOCATION_FLOOR))
            .collect();
        PosteriorCovariance::from_normalized(&self.prior, &self.prior_sqrt, self.basis(), &d)
    }
}
