//! Rate grids and display units.

use std::f64::consts::LN_2;

use clap::ValueEnum;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Nats,
    Bits,
}

impl Units {
    pub fn to_nats(self, x: f64) -> f64 {
        match self {
            Units::Nats => x,
            Units::Bits => x * LN_2,
        }
    }

    pub fn display(self, nats: f64) -> f64 {
        match self {
            Units::Nats => nats,
            Units::Bits => nats / LN_2,
        }
    }

    /// Column name with the unit suffix, e.g. `rate_bits`.
    pub fn column(self, stem: &str) -> String {
        match self {
            Units::Nats => format!("{stem}_nats"),
            Units::Bits => format!("{stem}_bits"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GridKind {
    Linear,
    Geometric,
}

/// Parses `a:b:n`, a comma list, or a single value.
pub fn parse_rates(text: &str, kind: GridKind) -> CliResult<Vec<f64>> {
    let bad = |msg: String| CliError::Input(format!("--rates: {msg}"));
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| bad(format!("`{}` is not a number", s.trim())))
    };
    let parts: Vec<&str> = text.split(':').collect();
    let rates = match parts.as_slice() {
        [a, b, n] => {
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n
                .trim()
                .parse()
                .map_err(|_| bad(format!("point count `{}` is not a positive integer", n.trim())))?;
            if n == 0 {
                return Err(bad("point count must be at least 1".into()));
            }
            spaced(a, b, n, kind).map_err(bad)?
        }
        [_] => text.split(',').map(num).collect::<CliResult<Vec<_>>>()?,
        _ => return Err(bad(format!("expected a:b:n or a comma list, got `{text}`"))),
    };
    for (i, &r) in rates.iter().enumerate() {
        if !r.is_finite() || r < 0.0 {
            return Err(bad(format!("entry {i} is {r}; rates must be finite and nonnegative")));
        }
        if i > 0 && r <= rates[i - 1] {
            return Err(bad("rates must be strictly increasing".into()));
        }
    }
    Ok(rates)
}

fn spaced(a: f64, b: f64, n: usize, kind: GridKind) -> Result<Vec<f64>, String> {
    if n == 1 {
        return Ok(vec![a]);
    }
    if !(a < b) {
        return Err(format!("start {a} must be below end {b}"));
    }
    let last = (n - 1) as f64;
    let mut out: Vec<f64> = match kind {
        GridKind::Linear => (0..n).map(|i| a + (b - a) * (i as f64 / last)).collect(),
        GridKind::Geometric => {
            if !(a > 0.0) {
                return Err("a geometric grid needs a positive start".into());
            }
            let ratio = (b / a).ln();
            (0..n).map(|i| a * (ratio * i as f64 / last).exp()).collect()
        }
    };
    out[n - 1] = b;
    Ok(out)
}
