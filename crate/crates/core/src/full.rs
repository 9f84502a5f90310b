//! Full-information regime: the encoder observes `(X, V)` and designs the
//! joint posterior of `W = (X, V)`.

use nalgebra::{DMatrix, Matrix2, Vector2};

use crate::curve::{check_grid, RdCurve, RdPoint, Regime};
use crate::design::ALLOCATION_FLOOR;
use crate::error::{Error, Result};
use crate::matrix::{psd_tolerance, symmetrize, Eigen, SpdMatrix, SymmetricMatrix};
use crate::model::{PosteriorCovariance, SemanticModel};
use crate::oracle::{solve_logdet_program, OracleOptions};
use crate::waterfill::{solve_min_rate_given_budget, solve_min_trace_given_rate, WaterfillSolution};

/// Off-diagonal mass, relative to the Frobenius norm, accepted by
/// [`solve_full`] when deciding whether the closed form applies.
pub const ASSUMPTION_TOLERANCE: f64 = 1e-9;

/// Joint prior `Σ_W = blkdiag(Σ_X, Σ_V)` and weight `W̄ = [[W̃, W_e], [W_e, 0]]`.
#[derive(Debug, Clone)]
pub struct JointModel {
    pub sigma_w: SpdMatrix,
    pub w_bar: SymmetricMatrix,
}

/// Closed-form data for direction `i` of the shared basis.
#[derive(Debug, Clone, PartialEq)]
pub struct PersuasionBlock {
    /// `σ_i`, `τ_i`: standard deviations of `X` and `V` along the direction.
    pub sigma: f64,
    pub tau: f64,
    pub b: f64,
    pub w: f64,
    /// `w(2b − 1)`.
    pub w_tilde: f64,
    pub a_plus: f64,
    pub a_minus: f64,
    pub delta_star: f64,
    /// Columns are the unit eigenvectors for `a_plus` and `a_minus`.
    pub rotation: Matrix2<f64>,
}

#[derive(Debug, Clone)]
pub struct FullSolution {
    pub k_w_star: PosteriorCovariance,
    /// Rate actually spent, in nats.
    pub rate: f64,
    pub distortion: f64,
    pub water_level: f64,
    pub active_modes: usize,
    /// Present when the closed form was used.
    pub blocks: Option<Vec<PersuasionBlock>>,
    /// Stationarity certificate when the oracle was used.
    pub kkt_residual: Option<f64>,
}

pub fn joint_model(model: &SemanticModel) -> Result<JointModel> {
    let k = model.dim();
    let sv = model.sigma_v().eigen();
    if sv.min() <= psd_tolerance(sv.max_abs()) {
        return Err(Error::SemanticNoiseSingular {
            min_eigenvalue: sv.min(),
        });
    }
    let mut sigma = DMatrix::zeros(2 * k, 2 * k);
    sigma.view_mut((0, 0), (k, k)).copy_from(model.sigma_x().matrix());
    sigma.view_mut((k, k), (k, k)).copy_from(model.sigma_v().matrix());
    let mut w = DMatrix::zeros(2 * k, 2 * k);
    w.view_mut((0, 0), (k, k)).copy_from(model.effective_weight().matrix());
    w.view_mut((0, k), (k, k)).copy_from(model.w_e().matrix());
    w.view_mut((k, 0), (k, k)).copy_from(model.w_e().matrix());
    Ok(JointModel {
        sigma_w: SpdMatrix::new(sigma)?,
        w_bar: SymmetricMatrix::new(w)?,
    })
}

/// Finds an orthogonal `U` with `UᵀΣ_X U`, `UᵀΣ_V U`, `UᵀBU`, `UᵀW_e U` all
/// diagonal up to off-diagonal mass `tol · ‖M‖_F`.
///
/// Eigenspaces of `Σ_X` that are degenerate within that tolerance are split
/// by `Σ_V`, then by `B`, then by `W_e`. Columns follow ascending `Σ_X`.
pub fn check_assumption1(model: &SemanticModel, tol: f64) -> Result<DMatrix<f64>> {
    let b = model.b();
    let b_norm = b.norm();
    let asym = 0.5 * (b - b.transpose()).norm();
    if asym > tol * b_norm {
        return Err(Error::NotJointlyDiagonalizable {
            matrix: "b",
            off_diagonal: asym / b_norm,
        });
    }
    let b_sym = symmetrize(b);
    let checks: [(&'static str, &DMatrix<f64>); 4] = [
        ("sigma_x", model.sigma_x().matrix()),
        ("sigma_v", model.sigma_v().matrix()),
        ("b", &b_sym),
        ("w_e", model.w_e().matrix()),
    ];

    let eig = model.sigma_x().eigen();
    let mut u = eig.vectors.clone();
    let cols: Vec<usize> = (0..model.dim()).collect();
    let tie = tol * model.sigma_x().matrix().norm();
    let refiners: Vec<&DMatrix<f64>> = checks[1..].iter().map(|c| c.1).collect();
    refine(&mut u, &cols, eig.values.as_slice(), tie, &refiners, tol);

    for (name, m) in checks {
        let scale = m.norm();
        let off = off_diagonal_mass(&(u.transpose() * m * &u));
        if off > tol * scale {
            return Err(Error::NotJointlyDiagonalizable {
                matrix: name,
                off_diagonal: off / scale,
            });
        }
    }
    Ok(u)
}

fn off_diagonal_mass(m: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                s += m[(i, j)] * m[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Re-diagonalizes every cluster of (ascending) `values` whose neighbours lie
/// within `tie`, using the next matrix in `rest`.
fn refine(u: &mut DMatrix<f64>, cols: &[usize], values: &[f64], tie: f64, rest: &[&DMatrix<f64>], tol: f64) {
    let Some((&next, rest)) = rest.split_first() else {
        return;
    };
    let mut start = 0;
    while start < cols.len() {
        let mut end = start + 1;
        while end < cols.len() && values[end] - values[end - 1] <= tie {
            end += 1;
        }
        if end - start > 1 {
            let group = &cols[start..end];
            let sub = u.select_columns(group);
            let eig = Eigen::of(&symmetrize(&(sub.transpose() * next * &sub)));
            let rotated = sub * &eig.vectors;
            for (j, &c) in group.iter().enumerate() {
                u.set_column(c, &rotated.column(j));
            }
            refine(u, group, eig.values.as_slice(), tol * next.norm(), rest, tol);
        }
        start = end;
    }
}

/// Eigenpairs of `[[t, c], [c, 0]]` with `c ≠ 0`, by the quadratic formula.
/// The larger-magnitude root is formed first and the other follows from the
/// product `−c²`, so neither suffers cancellation.
fn block_eigen(t: f64, c: f64) -> (f64, f64, Matrix2<f64>) {
    let disc = t.hypot(2.0 * c);
    let (a_plus, a_minus) = if t >= 0.0 {
        let p = 0.5 * (t + disc);
        (p, -c * c / p)
    } else {
        let m = 0.5 * (t - disc);
        (-c * c / m, m)
    };
    let e_plus = Vector2::new(a_plus, c).normalize();
    let e_minus = Vector2::new(a_minus, c).normalize();
    (a_plus, a_minus, Matrix2::from_columns(&[e_plus, e_minus]))
}

struct Blocks {
    u: DMatrix<f64>,
    blocks: Vec<PersuasionBlock>,
}

fn diagonal_blocks(model: &SemanticModel) -> Result<Blocks> {
    joint_model(model)?;
    let u = check_assumption1(model, ASSUMPTION_TOLERANCE)?;
    let diag = |m: &DMatrix<f64>| (u.transpose() * m * &u).diagonal();
    let sx = diag(model.sigma_x().matrix());
    let sv = diag(model.sigma_v().matrix());
    let bb = diag(&symmetrize(model.b()));
    let we = diag(model.w_e().matrix());
    let blocks = (0..model.dim())
        .map(|i| {
            let (sigma, tau, b, w) = (sx[i].sqrt(), sv[i].sqrt(), bb[i], we[i]);
            let w_tilde = w * (2.0 * b - 1.0);
            let (a_plus, a_minus, rotation) = block_eigen(w_tilde * sigma * sigma, w * sigma * tau);
            PersuasionBlock {
                sigma,
                tau,
                b,
                w,
                w_tilde,
                a_plus,
                a_minus,
                delta_star: 1.0,
                rotation,
            }
        })
        .collect();
    Ok(Blocks { u, blocks })
}

fn assemble(model: &SemanticModel, parts: Blocks, sol: WaterfillSolution) -> Result<FullSolution> {
    let Blocks { u, mut blocks } = parts;
    let k = model.dim();
    let joint = joint_model(model)?;
    let mut inner = DMatrix::zeros(2 * k, 2 * k);
    let mut tail = 0.0;
    for (i, blk) in blocks.iter_mut().enumerate() {
        blk.delta_star = sol.allocations[i];
        tail += blk.a_minus + blk.a_plus * blk.delta_star;
        let d = Matrix2::new(blk.sigma, 0.0, 0.0, blk.tau);
        let kept = Matrix2::new(blk.delta_star.max(ALLOCATION_FLOOR), 0.0, 0.0, 1.0);
        let kb = d * blk.rotation * kept * blk.rotation.transpose() * d;
        inner[(i, i)] = kb[(0, 0)];
        inner[(i, k + i)] = kb[(0, 1)];
        inner[(k + i, i)] = kb[(1, 0)];
        inner[(k + i, k + i)] = kb[(1, 1)];
    }
    let k_w = if sol.active_set.is_empty() {
        PosteriorCovariance::uninformed(&joint.sigma_w)
    } else {
        let mut ubar = DMatrix::zeros(2 * k, 2 * k);
        ubar.view_mut((0, 0), (k, k)).copy_from(&u);
        ubar.view_mut((k, k), (k, k)).copy_from(&u);
        PosteriorCovariance::new(symmetrize(&(&ubar * inner * ubar.transpose())), &joint.sigma_w)?
    };
    Ok(FullSolution {
        k_w_star: k_w,
        rate: sol.achieved_rate,
        distortion: model.offset_distortion() + tail,
        water_level: sol.water_level,
        active_modes: sol.active_set.len(),
        blocks: Some(blocks),
        kkt_residual: None,
    })
}

/// Closed form under a shared eigenbasis: waterfilling on the positive block
/// eigenvalues `a_i⁺`, with the unit allocation on each `a_i⁻` direction.
pub fn solve_full_diagonal(model: &SemanticModel, rate: f64) -> Result<FullSolution> {
    let parts = diagonal_blocks(model)?;
    let a_plus: Vec<f64> = parts.blocks.iter().map(|b| b.a_plus).collect();
    let sol = solve_min_trace_given_rate(&a_plus, rate)?;
    assemble(model, parts, sol)
}

/// Minimal rate reaching encoder distortion `d_e` under a shared eigenbasis.
pub fn solve_full_diagonal_given_distortion(model: &SemanticModel, d_e: f64) -> Result<FullSolution> {
    let parts = diagonal_blocks(model)?;
    let a_plus: Vec<f64> = parts.blocks.iter().map(|b| b.a_plus).collect();
    let floor = model.offset_distortion() + parts.blocks.iter().map(|b| b.a_minus).sum::<f64>();
    let sol = solve_min_rate_given_budget(&a_plus, d_e - floor).map_err(|e| match e {
        Error::Infeasible { .. } => Error::Infeasible { budget: d_e, floor },
        other => other,
    })?;
    assemble(model, parts, sol)
}

/// Any model with `Σ_V ≻ 0`, through the log-det oracle on `(W̄, Σ_W)`.
pub fn solve_full_general(model: &SemanticModel, rate: f64) -> Result<FullSolution> {
    solve_full_general_with(model, rate, &OracleOptions::default())
}

pub fn solve_full_general_with(model: &SemanticModel, rate: f64, opts: &OracleOptions) -> Result<FullSolution> {
    let joint = joint_model(model)?;
    let res = solve_logdet_program(&joint.w_bar, &joint.sigma_w, rate, opts)?;
    if !res.converged {
        return Err(Error::OracleNotConverged {
            iterations: res.iterations,
            kkt_residual: res.kkt_residual,
        });
    }
    let normalized = res.k_opt.normalized();
    let active_modes = normalized.eigen().values.iter().filter(|&&v| v < 1.0 - 1e-9).count();
    let spent = rate.min(res.k_opt.rate()?);
    Ok(FullSolution {
        distortion: model.offset_distortion() + res.objective,
        rate: if active_modes == 0 { 0.0 } else { spent },
        k_w_star: res.k_opt,
        water_level: 0.5 * res.multiplier,
        active_modes,
        blocks: None,
        kkt_residual: Some(res.kkt_residual),
    })
}

/// Closed form when a shared eigenbasis exists, otherwise the oracle.
pub fn solve_full(model: &SemanticModel, rate: f64) -> Result<FullSolution> {
    match solve_full_diagonal(model, rate) {
        Err(Error::NotJointlyDiagonalizable { .. }) => solve_full_general(model, rate),
        other => other,
    }
}

/// `tr(W_e C_0) + Σ a_i⁻`: distortion as the rate grows without bound.
pub fn full_infinite_rate_limit(model: &SemanticModel) -> Result<f64> {
    let parts = diagonal_blocks(model)?;
    Ok(model.offset_distortion() + parts.blocks.iter().map(|b| b.a_minus).sum::<f64>())
}

pub fn full_curve(model: &SemanticModel, rate_grid: &[f64]) -> Result<RdCurve> {
    check_grid(rate_grid)?;
    let points = rate_grid
        .iter()
        .map(|&r| {
            let s = solve_full(model, r)?;
            Ok(RdPoint {
                rate: r,
                distortion: s.distortion,
                regime: Regime::Full,
                water_level: s.water_level,
                active_modes: s.active_modes,
                interior: None,
                covariance: s.k_w_star.matrix().clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    RdCurve::new(Regime::Full, points)
}
