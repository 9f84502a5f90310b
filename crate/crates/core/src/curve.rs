//! Sampled trade-off curves.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    Direct,
    Remote,
    Full,
    Multimodal,
    Scaling,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Direct => "direct",
            Regime::Remote => "remote",
            Regime::Full => "full",
            Regime::Multimodal => "multimodal",
            Regime::Scaling => "scaling",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdPoint {
    pub rate: f64,
    pub distortion: f64,
    pub regime: Regime,
    pub water_level: f64,
    pub active_modes: usize,
    /// Set only where an interior/saturated distinction exists.
    pub interior: Option<bool>,
    pub covariance: DMatrix<f64>,
}

/// Points with strictly increasing rates.
#[derive(Debug, Clone, PartialEq)]
pub struct RdCurve {
    regime: Regime,
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(regime: Regime, points: Vec<RdPoint>) -> Result<Self> {
        check_grid(&points.iter().map(|p| p.rate).collect::<Vec<_>>())?;
        Ok(RdCurve { regime, points })
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Rate grids must be nonempty, finite, nonnegative and strictly increasing.
pub fn check_grid(rates: &[f64]) -> Result<()> {
    if rates.is_empty() {
        return Err(Error::InvalidArgument("rate grid is empty".into()));
    }
    for (i, &r) in rates.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "rate grid entry {i} is {r}; rates must be finite and nonnegative"
            )));
        }
        if i > 0 && r <= rates[i - 1] {
            return Err(Error::InvalidArgument(format!(
                "rate grid must be strictly increasing (entry {i})"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(check_grid(&[0.0, 1.0, 2.0]).is_ok());
        assert!(check_grid(&[]).is_err());
        assert!(check_grid(&[1.0, 1.0]).is_err());
        assert!(check_grid(&[-0.1]).is_err());
        assert!(check_grid(&[f64::NAN]).is_err());
    }
}
