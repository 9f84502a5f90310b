//! Solver-vs-oracle and solver-vs-Monte-Carlo checks on one model.

use semrd_core::{
    joint_model, remote_statistics, solve_direct_given_rate, solve_full, solve_logdet_program, solve_remote_given_rate,
    Error, OracleOptions, OracleResult, SemanticModel,
};

use crate::commands::{run_simulation, SimRegime};
use crate::grid::Units;
use crate::table::{Cell, Table};

pub const ORACLE_GAP: f64 = 1e-6;
pub const ORACLE_KKT: f64 = 1e-6;
pub const DOMINANCE_SLACK: f64 = 1e-6;
pub const MAX_Z: f64 = 4.0;
pub const RATE_GAP: f64 = 0.02;

#[derive(Debug, Clone)]
pub struct VerifyOptions {
    /// Rates in nats.
    pub rates: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
}

enum Outcome {
    Value(f64),
    Skip,
    Failed,
}

struct Checks {
    table: Table,
    units: Units,
    failed: usize,
}

impl Checks {
    fn add(&mut self, check: &str, regime: &str, rate: f64, outcome: Outcome, threshold: f64) {
        let (value, status) = match outcome {
            Outcome::Value(v) if v <= threshold => (Cell::Real(v), "pass"),
            Outcome::Value(v) => (Cell::Real(v), "fail"),
            Outcome::Skip => (Cell::Missing, "skip"),
            Outcome::Failed => (Cell::Missing, "error"),
        };
        if matches!(status, "fail" | "error") {
            self.failed += 1;
        }
        self.table.push(vec![
            check.into(),
            regime.into(),
            self.units.display(rate).into(),
            value,
            threshold.into(),
            status.into(),
        ]);
    }
}

/// Distortions per regime at one rate; `None` when the regime does not apply.
struct Solved {
    direct: Option<f64>,
    remote: Option<f64>,
    full: Option<f64>,
}

fn gap(closed: f64, oracle: &OracleResult) -> f64 {
    (closed - oracle.objective).abs() / (1.0 + oracle.objective.abs())
}

fn oracle_rows(c: &mut Checks, regime: &str, rate: f64, closed: Option<f64>, oracle: Result<OracleResult, Error>) {
    match oracle {
        Ok(o) => {
            if let Some(closed) = closed {
                c.add("oracle_gap", regime, rate, Outcome::Value(gap(closed, &o)), ORACLE_GAP);
            }
            c.add(
                "oracle_kkt",
                regime,
                rate,
                Outcome::Value(o.kkt_residual.max(o.logdet_residual)),
                ORACLE_KKT,
            );
        }
        Err(_) => {
            c.add("oracle_gap", regime, rate, Outcome::Failed, ORACLE_GAP);
        }
    }
}

fn solve_at(c: &mut Checks, m: &SemanticModel, rate: f64) -> Solved {
    let opts = OracleOptions::default();
    let offset = m.offset_distortion();

    let direct = solve_direct_given_rate(m, rate).ok();
    let o = solve_logdet_program(m.effective_weight(), m.sigma_x(), rate, &opts);
    oracle_rows(c, "direct", rate, direct.as_ref().map(|s| s.distortion - offset), o);

    let remote = match remote_statistics(m) {
        Ok(st) => {
            let s = solve_remote_given_rate(m, rate).ok();
            let o = solve_logdet_program(&st.q, &st.sigma_theta, rate, &opts);
            oracle_rows(c, "remote", rate, s.as_ref().map(|s| s.excess), o);
            s.map(|s| s.distortion)
        }
        Err(_) => {
            c.add("oracle_gap", "remote", rate, Outcome::Skip, ORACLE_GAP);
            None
        }
    };

    let full = match joint_model(m) {
        Ok(j) => match solve_full(m, rate) {
            Ok(s) if s.blocks.is_some() => {
                let o = solve_logdet_program(&j.w_bar, &j.sigma_w, rate, &opts);
                oracle_rows(c, "full", rate, Some(s.distortion - offset), o);
                Some(s.distortion)
            }
            Ok(s) => {
                let kkt = s.kkt_residual.map_or(Outcome::Failed, Outcome::Value);
                c.add("oracle_kkt", "full", rate, kkt, ORACLE_KKT);
                Some(s.distortion)
            }
            Err(_) => {
                c.add("oracle_kkt", "full", rate, Outcome::Failed, ORACLE_KKT);
                None
            }
        },
        Err(_) => {
            c.add("oracle_gap", "full", rate, Outcome::Skip, ORACLE_GAP);
            None
        }
    };

    Solved {
        direct: direct.map(|s| s.distortion),
        remote,
        full,
    }
}

fn monte_carlo(c: &mut Checks, m: &SemanticModel, regime: SimRegime, rate: f64, opts: &VerifyOptions) {
    match run_simulation(m, regime, rate, opts.samples, opts.seed) {
        Ok((r, _)) => {
            c.add("mc_z", regime.name(), rate, Outcome::Value(r.z_score.abs()), MAX_Z);
            c.add(
                "mc_rate",
                regime.name(),
                rate,
                Outcome::Value((r.empirical_rate - r.target_rate).abs()),
                RATE_GAP,
            );
        }
        Err(_) => c.add("mc_z", regime.name(), rate, Outcome::Failed, MAX_Z),
    }
}

/// Returns the check table and the number of failed checks.
pub fn verify(model: &SemanticModel, opts: &VerifyOptions, units: Units) -> (Table, usize) {
    let mut c = Checks {
        table: Table::new("verify", &["check", "regime", "rate", "value", "threshold", "status"]),
        units,
        failed: 0,
    };
    for &rate in &opts.rates {
        let solved = solve_at(&mut c, model, rate);
        match (solved.full, solved.direct) {
            (Some(full), Some(direct)) => {
                let best = solved.remote.map_or(direct, |r| r.min(direct));
                c.add("dominance", "full", rate, Outcome::Value(full - best), DOMINANCE_SLACK);
            }
            _ => c.add("dominance", "full", rate, Outcome::Skip, DOMINANCE_SLACK),
        }
        monte_carlo(&mut c, model, SimRegime::Direct, rate, opts);
        if solved.remote.is_some() {
            monte_carlo(&mut c, model, SimRegime::Remote, rate, opts);
        }
        if solved.full.is_some() {
            monte_carlo(&mut c, model, SimRegime::Full, rate, opts);
        }
    }
    let failed = c.failed;
    c.table.meta("failed", failed);
    c.table.meta("samples", opts.samples);
    c.table.meta("seed", Cell::Int(opts.seed));
    (c.table, failed)
}
