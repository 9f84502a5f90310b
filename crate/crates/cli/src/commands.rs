//! One function per subcommand; each returns the table to print.

use clap::ValueEnum;
use nalgebra::DMatrix;

use semrd_core::{
    direct_curve, full_curve, full_infinite_rate_limit, interior_onset, remote_curve,
    remote_statistics, scaling_curve, simulate_direct, simulate_full, simulate_remote, solve_direct_given_distortion,
    solve_direct_given_rate, solve_full, solve_full_diagonal_given_distortion, solve_multimodal,
    solve_remote_given_distortion, solve_remote_given_rate, d_opt, EmpiricalReport, Error, RdCurve, ScalingPoint,
    SemanticModel,
};

use crate::error::{CliError, CliResult};
use crate::grid::Units;
use crate::model_file::ModelFile;
use crate::table::{Cell, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SimRegime {
    Direct,
    Remote,
    Full,
}

impl SimRegime {
    pub fn name(self) -> &'static str {
        match self {
            SimRegime::Direct => "direct",
            SimRegime::Remote => "remote",
            SimRegime::Full => "full",
        }
    }
}

/// Either a rate grid in nats or a target distortion.
#[derive(Debug, Clone, PartialEq)]
pub enum Request {
    Rates(Vec<f64>),
    Distortion(f64),
}

fn curve_columns(units: Units) -> [String; 4] {
    [
        units.column("rate"),
        "distortion".into(),
        "water_level".into(),
        "active_modes".into(),
    ]
}

fn curve_table(command: &str, units: Units) -> Table {
    let cols = curve_columns(units);
    Table::new(command, &cols.iter().map(String::as_str).collect::<Vec<_>>())
}

fn push_curve(table: &mut Table, curve: &RdCurve, units: Units) {
    for p in curve.points() {
        table.push(vec![
            units.display(p.rate).into(),
            p.distortion.into(),
            p.water_level.into(),
            p.active_modes.into(),
        ]);
    }
}

pub fn direct(file: &ModelFile, req: &Request, units: Units) -> CliResult<Table> {
    let m = &file.model;
    let mut t = curve_table("direct", units);
    match req {
        Request::Rates(rates) => push_curve(&mut t, &direct_curve(m, rates)?, units),
        Request::Distortion(d) => {
            let s = solve_direct_given_distortion(m, *d)?;
            t.push(vec![
                units.display(s.rate).into(),
                s.distortion.into(),
                s.allocations.water_level.into(),
                s.allocations.active_set.len().into(),
            ]);
        }
    }
    t.meta("offset_distortion", m.offset_distortion());
    Ok(t)
}

pub fn remote(file: &ModelFile, req: &Request, units: Units) -> CliResult<Table> {
    let m = &file.model;
    let stats = remote_statistics(m)?;
    let mut t = curve_table("remote", units);
    match req {
        Request::Rates(rates) => push_curve(&mut t, &remote_curve(m, rates)?, units),
        Request::Distortion(d) => {
            let s = solve_remote_given_distortion(m, *d)?;
            t.push(vec![
                units.display(s.rate).into(),
                s.distortion.into(),
                s.allocations.water_level.into(),
                s.allocations.active_set.len().into(),
            ]);
        }
    }
    t.meta("d_inf", stats.d_inf);
    t.meta("nonpositive_modes", solve_remote_given_rate(m, 0.0)?.nonpositive_modes);
    Ok(t)
}

pub fn full(file: &ModelFile, req: &Request, units: Units) -> CliResult<Table> {
    let m = &file.model;
    let mut t = curve_table("full", units);
    match req {
        Request::Rates(rates) => push_curve(&mut t, &full_curve(m, rates)?, units),
        Request::Distortion(d) => {
            let s = solve_full_diagonal_given_distortion(m, *d)?;
            t.push(vec![
                units.display(s.rate).into(),
                s.distortion.into(),
                s.water_level.into(),
                s.active_modes.into(),
            ]);
        }
    }
    match full_infinite_rate_limit(m) {
        Ok(limit) => {
            t.meta("method", "closed_form");
            t.meta("infinite_rate_limit", limit);
        }
        Err(Error::NotJointlyDiagonalizable { .. }) => t.meta("method", "oracle"),
        Err(e) => return Err(e.into()),
    }
    Ok(t)
}

pub fn multimodal(file: &ModelFile, rates: &[f64], prefixes: bool, units: Units) -> CliResult<Table> {
    let m = &file.model;
    let stack = file
        .modalities
        .as_ref()
        .ok_or_else(|| CliError::Input("modalities: missing key (required by the multimodal command)".into()))?;
    let rate_col = units.column("rate");
    let mut t = Table::new(
        "multimodal",
        &[
            "modalities",
            &rate_col,
            "distortion",
            "posterior_term",
            "excess",
            "gap_to_direct",
            "recoverability",
            "water_level",
            "active_modes",
        ],
    );
    let counts: Vec<usize> = if prefixes { (0..=stack.len()).collect() } else { vec![stack.len()] };
    let direct: Vec<f64> = rates
        .iter()
        .map(|&r| Ok(solve_direct_given_rate(m, r)?.distortion))
        .collect::<CliResult<_>>()?;
    for count in counts {
        let sub = stack.prefix(count);
        for (&r, &d_direct) in rates.iter().zip(&direct) {
            let s = solve_multimodal(m, &sub, r)?;
            t.push(vec![
                count.into(),
                units.display(r).into(),
                s.distortion.into(),
                s.posterior_term.into(),
                s.excess.into(),
                (s.distortion - d_direct).into(),
                s.recoverability_factor.into(),
                s.water_level.into(),
                s.active_modes.into(),
            ]);
        }
    }
    Ok(t)
}

pub enum Budgets {
    Steps { per_step: f64, steps: usize },
    Rates(Vec<f64>),
}

pub fn scaling(file: &ModelFile, budgets: &Budgets, units: Units) -> CliResult<Table> {
    let m = &file.model;
    let budget_col = units.column("budget");
    let mut t = Table::new(
        "scaling",
        &[
            "steps",
            &budget_col,
            "d_program",
            "d_semantic",
            "interior",
            "water_level",
            "active_modes",
            "closed_form",
        ],
    );
    let points: Vec<(Option<usize>, ScalingPoint)> = match budgets {
        Budgets::Steps { per_step, steps } => scaling_curve(m, *per_step, *steps)?
            .into_iter()
            .enumerate()
            .map(|(i, p)| (Some(i + 1), p))
            .collect(),
        Budgets::Rates(rates) => rates
            .iter()
            .map(|&r| Ok((None, d_opt(m, r)?)))
            .collect::<CliResult<_>>()?,
    };
    let offset = m.offset_distortion();
    for (steps, p) in points {
        t.push(vec![
            steps.into(),
            units.display(p.budget).into(),
            p.distortion.into(),
            (p.distortion + offset).into(),
            p.interior.into(),
            p.water_level.into(),
            p.active_modes.into(),
            p.closed_form.into(),
        ]);
    }
    match interior_onset(m) {
        Ok(onset) => t.meta(&units.column("interior_onset"), units.display(onset)),
        Err(Error::NotApplicable(_)) => t.meta(&units.column("interior_onset"), Cell::Missing),
        Err(e) => return Err(e.into()),
    }
    t.meta("offset_distortion", offset);
    Ok(t)
}

/// Solves the regime at `rate` and simulates its optimal test channel.
pub fn run_simulation(
    model: &SemanticModel,
    regime: SimRegime,
    rate: f64,
    samples: usize,
    seed: u64,
) -> CliResult<(EmpiricalReport, Option<f64>)> {
    Ok(match regime {
        SimRegime::Direct => {
            let s = solve_direct_given_rate(model, rate)?;
            (simulate_direct(model, &s.k_star, samples, seed)?, None)
        }
        SimRegime::Remote => {
            let s = solve_remote_given_rate(model, rate)?;
            (simulate_remote(model, &s.k_theta_star, samples, seed)?, None)
        }
        SimRegime::Full => {
            let s = solve_full(model, rate)?;
            let report = simulate_full(model, &s.k_w_star, samples, seed)?;
            let k = model.dim();
            let target: DMatrix<f64> = s.k_w_star.matrix().view((0, k), (k, k)).into_owned();
            let err = report.cross_cov.as_ref().map(|c| (c - target).amax());
            (report, err)
        }
    })
}

pub fn simulate(
    file: &ModelFile,
    regime: SimRegime,
    rate: f64,
    samples: usize,
    seed: u64,
    units: Units,
) -> CliResult<Table> {
    let rate_col = units.column("rate");
    let target_col = units.column("target_rate");
    let empirical_col = units.column("empirical_rate");
    let mut t = Table::new(
        "simulate",
        &[
            "regime",
            &rate_col,
            "samples",
            "seed",
            "analytic",
            "empirical",
            "standard_error",
            "z_score",
            &target_col,
            &empirical_col,
            "cross_cov_error",
        ],
    );
    let (r, cross) = run_simulation(&file.model, regime, rate, samples, seed)?;
    t.push(vec![
        regime.name().into(),
        units.display(rate).into(),
        r.n_samples.into(),
        Cell::Int(r.seed),
        r.analytic_value.into(),
        r.empirical_value.into(),
        r.standard_error.into(),
        r.z_score.into(),
        units.display(r.target_rate).into(),
        units.display(r.empirical_rate).into(),
        cross.into(),
    ]);
    Ok(t)
}
