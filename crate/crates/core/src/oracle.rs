//! Generic solver for `min tr(a K)` subject to `log det K ≥ log det Σ − 2R`
//! and `0 ⪯ K ⪯ Σ`.
//!
//! Works in the normalized variable `K̃ = Σ^{-1/2} K Σ^{-1/2}` with
//! `A = Σ^{1/2} a Σ^{1/2}`. The log-det constraint is dualized with one
//! multiplier `η`. For fixed `η` the box-constrained inner problem is solved
//! by a projected, preconditioned fixed point
//! `K̃ ← clip[δ, 1](K̃ − (2/η) K̃ G K̃)` on the gradient `G = A − (η/2) K̃⁻¹`,
//! safeguarded by a line search, and `η` is bisected in log space until the
//! constraint is met.
//!
//! Eigenvalues of `K̃` carry absolute rounding error, so the log-det residual
//! degrades like `ε / min κ` at very high rates.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::matrix::{symmetrize, Eigen, SpdMatrix, SymmetricMatrix};
use crate::model::{normalized_weight, PosteriorCovariance};
use crate::waterfill::eig_tolerance;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub max_inner_iterations: usize,
    pub max_bisections: usize,
    /// Lower clip for eigenvalues of `K̃`.
    pub eigen_floor: f64,
    pub kkt_tolerance: f64,
    pub constraint_tolerance: f64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_inner_iterations: 10_000,
            max_bisections: 200,
            eigen_floor: 1e-12,
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    pub k_opt: PosteriorCovariance,
    /// `tr(a K)`.
    pub objective: f64,
    /// Projected stationarity residual relative to `‖A‖_F`.
    pub kkt_residual: f64,
    /// Violation of the log-det constraint; when the constraint binds, the
    /// absolute gap `|log det K̃ + 2R|`.
    pub logdet_residual: f64,
    /// Multiplier `η` of the log-det constraint; the water level is `η/2`.
    pub multiplier: f64,
    /// Total inner iterations across all bisection steps.
    pub iterations: usize,
    pub bisections: usize,
    /// Some eigenvalue of `K̃` sits on the artificial floor.
    pub floored: bool,
    pub converged: bool,
}

/// Inner solves stop once the projected gradient is at rounding level, or
/// when neither it nor the objective has improved for a while: near the optimum, rotations between
/// a bound direction and a free one are only weakly determined and rounding
/// noise can feed them.
const INNER_KKT_TARGET: f64 = 1e-14;
const INNER_PATIENCE: usize = 25;

struct Inner {
    k: DMatrix<f64>,
    eig: Eigen,
    iterations: usize,
}

/// Solves the program for one weight `a` and prior `sigma` at `rate` nats.
pub fn solve_logdet_program(
    a: &SymmetricMatrix,
    sigma: &SpdMatrix,
    rate: f64,
    opts: &OracleOptions,
) -> Result<OracleResult> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "rate must be finite and nonnegative, got {rate}"
        )));
    }
    let n = sigma.dim();
    let a_norm = normalized_weight(sigma, a)?;
    let am = a_norm.matrix();
    let scale = a_norm.frobenius_norm();

    if rate == 0.0 || scale == 0.0 {
        let k_opt = PosteriorCovariance::uninformed(sigma);
        let top = a_norm.eigen().max().max(0.0);
        return Ok(OracleResult {
            objective: a.trace_product(sigma.matrix()),
            k_opt,
            kkt_residual: 0.0,
            logdet_residual: 0.0,
            multiplier: 2.0 * top,
            iterations: 0,
            bisections: 0,
            floored: false,
            converged: true,
        });
    }

    let target = -2.0 * rate;
    let mut state = DMatrix::<f64>::identity(n, n);
    let mut iterations = 0usize;
    let solve = |eta: f64, warm: &DMatrix<f64>, iterations: &mut usize| -> Result<Inner> {
        let r = inner_solve(am, eta, warm, opts)?;
        *iterations += r.iterations;
        Ok(r)
    };
    let logdet = |e: &Eigen| -> f64 { e.values.iter().map(|v| v.ln()).sum() };

    // With no positive direction in `A` the prior is optimal and the log-det
    // constraint is slack. Otherwise the constraint binds: as `η → 0` the
    // positive directions collapse and `log det K̃ → −∞`.
    let top = a_norm.eigen().max();
    let mut lo = (1e-14 * scale).ln();
    let mut hi = (2.0 * scale).ln();
    let (best, best_eta, bisections, active) = if top <= eig_tolerance(a_norm.eigen().values.as_slice()) {
        let inner = Inner {
            k: DMatrix::identity(n, n),
            eig: Eigen::of(&DMatrix::identity(n, n)),
            iterations: 0,
        };
        (inner, 2.0 * top.max(0.0), 0, false)
    } else {
        let mut best = solve(hi.exp(), &state, &mut iterations)?;
        let mut best_eta = hi.exp();
        let mut bisections = 0;
        while bisections < opts.max_bisections {
            if hi - lo <= 1e-15 * hi.abs().max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            let r = solve(mid.exp(), &state, &mut iterations)?;
            bisections += 1;
            let phi = logdet(&r.eig) - target;
            state = r.k.clone();
            if phi >= 0.0 {
                hi = mid;
                best_eta = mid.exp();
                let done = phi <= 1e-12;
                best = r;
                if done {
                    break;
                }
            } else {
                lo = mid;
            }
        }
        (best, best_eta, bisections, true)
    };

    let phi = logdet(&best.eig) - target;
    let (kkt_residual, floored) = kkt(am, &best.eig, best_eta, opts.eigen_floor, scale);
    // On the floor the target may lie below what is representable; only a
    // violation counts then.
    let logdet_residual = if active && !floored { phi.abs() } else { (-phi).max(0.0) };
    let converged = kkt_residual <= opts.kkt_tolerance && logdet_residual <= opts.constraint_tolerance;

    let is_identity = best.eig.values.iter().all(|&v| v == 1.0);
    let k_opt = if is_identity {
        PosteriorCovariance::uninformed(sigma)
    } else {
        let s = sigma.sqrt();
        PosteriorCovariance::new(symmetrize(&(s.matrix() * &best.k * s.matrix())), sigma)?
    };
    Ok(OracleResult {
        objective: a.trace_product(k_opt.matrix()),
        k_opt,
        kkt_residual,
        logdet_residual,
        multiplier: best_eta,
        iterations,
        bisections,
        floored,
        converged,
    })
}

fn clip(m: &DMatrix<f64>, floor: f64) -> (DMatrix<f64>, Eigen) {
    let e = Eigen::of(m);
    let clipped = Eigen {
        values: e.values.map(|v| v.clamp(floor, 1.0)),
        vectors: e.vectors,
    };
    (clipped.map(|v| v), clipped)
}

fn inner_objective(a: &DMatrix<f64>, k: &DMatrix<f64>, eig: &Eigen, eta: f64) -> f64 {
    a.dot(k) - 0.5 * eta * eig.values.iter().map(|v| v.ln()).sum::<f64>()
}

fn log_mass(eig: &Eigen) -> f64 {
    eig.values.iter().map(|v| v.ln().abs()).sum()
}

fn inner_solve(a: &DMatrix<f64>, eta: f64, warm: &DMatrix<f64>, opts: &OracleOptions) -> Result<Inner> {
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let (mut k, mut eig) = clip(warm, opts.eigen_floor);
    let mut f = inner_objective(a, &k, &eig, eta);
    let mut best_res = kkt(a, &eig, eta, opts.eigen_floor, scale).0;
    let mut best = (k.clone(), eig.clone());
    let mut since_best = 0;
    for it in 1..=opts.max_inner_iterations {
        if best_res <= INNER_KKT_TARGET || since_best >= INNER_PATIENCE {
            return Ok(Inner {
                k: best.0,
                eig: best.1,
                iterations: it - 1,
            });
        }
        let direction = reduced_newton_step(a, &eig, eta, opts.eigen_floor) - &k;
        // A step is taken when it lowers the objective, or when it keeps the
        // objective within rounding and lowers the residual. The backtracked
        // step competes with exact minimization over the eigenvalues in the
        // current basis.
        let res_now = kkt(a, &eig, eta, opts.eigen_floor, scale).0;
        let noise = 64.0 * f64::EPSILON * (f.abs() + scale * k.nrows() as f64 + eta * log_mass(&eig));
        let acceptable = |cand_f: f64, cand_eig: &Eigen| {
            cand_f < f - noise
                || (cand_f <= f + noise && kkt(a, cand_eig, eta, opts.eigen_floor, scale).0 < res_now)
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let (cand, cand_eig) = clip(&(&k + &direction * t), opts.eigen_floor);
            let cand_f = inner_objective(a, &cand, &cand_eig, eta);
            if acceptable(cand_f, &cand_eig) {
                accepted = Some((cand, cand_eig, cand_f));
                break;
            }
            t *= 0.5;
        }
        let (cand, cand_eig) = clip(&coordinate_step(a, &eig, eta, opts.eigen_floor), opts.eigen_floor);
        let cand_f = inner_objective(a, &cand, &cand_eig, eta);
        if acceptable(cand_f, &cand_eig) && accepted.as_ref().is_none_or(|s| cand_f < s.2) {
            accepted = Some((cand, cand_eig, cand_f));
        }
        let Some((next, next_eig, next_f)) = accepted else {
            since_best = INNER_PATIENCE;
            continue;
        };
        let descended = next_f < f - noise;
        k = next;
        eig = next_eig;
        f = next_f;
        let res = kkt(a, &eig, eta, opts.eigen_floor, scale).0;
        if res < best_res || descended {
            since_best = 0;
        } else {
            since_best += 1;
        }
        if res < best_res {
            best_res = res;
            best = (k.clone(), eig.clone());
        }
    }
    if best_res <= opts.kkt_tolerance {
        return Ok(Inner {
            k: best.0,
            eig: best.1,
            iterations: opts.max_inner_iterations,
        });
    }
    Err(Error::OracleNotConverged {
        iterations: opts.max_inner_iterations,
        kkt_residual: best_res,
    })
}

/// One preconditioned step `K̃ − (2/η) K̃ G K̃` on `G = A − (η/2) K̃⁻¹`,
/// written in the eigenbasis of `K̃`.
///
/// The part of `G` pushing into an active bound is dropped. Pairs mixing a
/// bound direction with another class use the Jacobi rotation that annihilates
/// their coupling in `A` whenever it is the shorter step: near the optimum the
/// plain preconditioned step overshoots there by `(A_ff − A_bb) / (A_ff − η/2)`,
/// which is unbounded. Between two free directions the two updates coincide
/// at the optimum.
fn reduced_newton_step(a: &DMatrix<f64>, eig: &Eigen, eta: f64, floor: f64) -> DMatrix<f64> {
    let n = eig.dim();
    let side = classify(eig, floor);
    let mut basis = eig.vectors.clone();
    let kappa = &eig.values;

    // Inside a bound eigenspace the basis is free; align it with `A`.
    for class in [Side::Upper, Side::Lower] {
        let idx: Vec<usize> = (0..n).filter(|&i| side[i] == class).collect();
        if idx.len() < 2 {
            continue;
        }
        let sub = DMatrix::from_fn(n, idx.len(), |r, c| basis[(r, idx[c])]);
        let block = symmetrize(&(sub.transpose() * a * &sub));
        let rotated = &sub * Eigen::of(&block).vectors;
        for (c, &i) in idx.iter().enumerate() {
            basis.set_column(i, &rotated.column(c));
        }
    }

    let b = symmetrize(&(basis.transpose() * a * &basis));
    let step = 2.0 / eta;
    let mut inner = DMatrix::zeros(n, n);
    for i in 0..n {
        let g = b[(i, i)] - 0.5 * eta / kappa[i];
        let g = match side[i] {
            Side::Upper => g.max(0.0),
            Side::Lower => g.min(0.0),
            Side::Free => g,
        };
        inner[(i, i)] = (kappa[i] - step * kappa[i] * kappa[i] * g).clamp(floor, 1.0);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let newton = step * kappa[i] * kappa[j];
            let gain = match (side[i], side[j]) {
                (Side::Free, Side::Free) => newton,
                (x, y) if x == y => 0.0,
                _ => {
                    let jacobi = -(kappa[i] - kappa[j]) / (b[(i, i)] - b[(j, j)]);
                    if jacobi.is_finite() && jacobi > 0.0 {
                        jacobi.min(newton)
                    } else {
                        newton
                    }
                }
            };
            let cap = 0.5 * (inner[(i, i)] * inner[(j, j)]).sqrt();
            let c = (-gain * b[(i, j)]).clamp(-cap, cap);
            inner[(i, j)] = c;
            inner[(j, i)] = c;
        }
    }
    symmetrize(&(&basis * inner * basis.transpose()))
}

/// Exact minimizer over the eigenvalues with the eigenvectors held fixed.
fn coordinate_step(a: &DMatrix<f64>, eig: &Eigen, eta: f64, floor: f64) -> DMatrix<f64> {
    let b = eig.vectors.transpose() * a * &eig.vectors;
    let values = (0..eig.dim()).map(|i| {
        let bii = b[(i, i)];
        if bii <= 0.5 * eta {
            1.0
        } else {
            (0.5 * eta / bii).max(floor)
        }
    });
    Eigen {
        values: nalgebra::DVector::from_iterator(eig.dim(), values),
        vectors: eig.vectors.clone(),
    }
    .map(|v| v)
}

fn gradient_in_basis(a: &DMatrix<f64>, eig: &Eigen, eta: f64) -> DMatrix<f64> {
    let mut g = eig.vectors.transpose() * a * &eig.vectors;
    for i in 0..eig.dim() {
        g[(i, i)] -= 0.5 * eta / eig.values[i];
    }
    symmetrize(&g)
}

fn classify(eig: &Eigen, floor: f64) -> Vec<Side> {
    eig.values
        .iter()
        .map(|&v| {
            if v >= 1.0 - 1e-10 {
                Side::Upper
            } else if v <= floor * (1.0 + 1e-6) {
                Side::Lower
            } else {
                Side::Free
            }
        })
        .collect()
}

#[derive(Clone, Copy, PartialEq)]
enum Side {
    Upper,
    Lower,
    Free,
}

/// Projected stationarity residual of `A − (η/2) K̃⁻¹` in the eigenbasis of
/// `K̃`: eigen-directions at the upper bound may carry a nonpositive block,
/// floored ones a nonnegative block, everything else must vanish.
fn kkt(a: &DMatrix<f64>, eig: &Eigen, eta: f64, floor: f64, scale: f64) -> (f64, bool) {
    let n = eig.dim();
    let side = classify(eig, floor);
    let g = gradient_in_basis(a, eig, eta);
    let mut sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            if side[i] != side[j] || side[i] == Side::Free {
                sq += g[(i, j)] * g[(i, j)];
            }
        }
    }
    for class in [Side::Upper, Side::Lower] {
        let idx: Vec<usize> = (0..n).filter(|&i| side[i] == class).collect();
        if idx.is_empty() {
            continue;
        }
        let block = DMatrix::from_fn(idx.len(), idx.len(), |r, c| g[(idx[r], idx[c])]);
        for v in Eigen::of(&block).values.iter() {
            let bad = match class {
                Side::Upper => v.max(0.0),
                _ => (-v).max(0.0),
            };
            sq += bad * bad;
        }
    }
    let floored = side.contains(&Side::Lower);
    (sq.sqrt() / scale, floored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{random_orthogonal, random_spd};
    use crate::waterfill::solve_min_trace_given_rate;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_instances_match_waterfill() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for i in 0..100 {
            let k = 1 + i % 5;
            let sig: Vec<f64> = (0..k).map(|_| rng.random_range(0.3..3.0)).collect();
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..2.0)).collect();
            let rate = rng.random_range(0.05..3.0);
            let sigma = SpdMatrix::from_diagonal(&sig).unwrap();
            let a = SymmetricMatrix::from_diagonal(&w);
            let res = solve_logdet_program(&a, &sigma, rate, &OracleOptions::default()).unwrap();
            let lambdas: Vec<f64> = sig.iter().zip(&w).map(|(s, w)| s * w).collect();
            let wf = solve_min_trace_given_rate(&lambdas, rate).unwrap();
            let tol = 1e-6 * wf.achieved_trace.abs().max(1e-12);
            assert!(
                (res.objective - wf.achieved_trace).abs() <= tol.max(1e-9),
                "i={i} oracle {} waterfill {}",
                res.objective,
                wf.achieved_trace
            );
            assert!(res.converged, "kkt {} logdet {}", res.kkt_residual, res.logdet_residual);
        }
    }

    #[test]
    fn dense_instances_match_waterfill() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for i in 0..300 {
            let k = 1 + i % 8;
            let sigma = random_spd(&mut rng, k, 0.3, 3.0);
            let u = random_orthogonal(&mut rng, k);
            let w: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..2.0)).collect();
            let a = SymmetricMatrix::new(&u * DMatrix::from_diagonal(&DVector::from_vec(w)) * u.transpose())
                .unwrap();
            let rate = rng.random_range(0.01..8.0);
            let res = solve_logdet_program(&a, &sigma, rate, &OracleOptions::default()).unwrap();
            let lambdas = normalized_weight(&sigma, &a).unwrap().eigen().values.as_slice().to_vec();
            let wf = solve_min_trace_given_rate(&lambdas, rate).unwrap();
            assert!(
                (res.objective - wf.achieved_trace).abs() <= 1e-6 * wf.achieved_trace.abs().max(1e-3),
                "i={i} oracle {} waterfill {}",
                res.objective,
                wf.achieved_trace
            );
            assert!(res.converged, "i={i} kkt {} logdet {}", res.kkt_residual, res.logdet_residual);
            assert!(res.k_opt.rate().unwrap() <= rate + 1e-8);
        }
    }

    #[test]
    fn zero_rate_is_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let sigma = random_spd(&mut rng, 3, 0.3, 3.0);
        let a = SymmetricMatrix::new(random_spd(&mut rng, 3, 0.1, 1.0).matrix().clone()).unwrap();
        let res = solve_logdet_program(&a, &sigma, 0.0, &OracleOptions::default()).unwrap();
        assert_eq!(res.k_opt.matrix(), sigma.matrix());
        assert!((res.objective - a.trace_product(sigma.matrix())).abs() <= 1e-12);
    }

    #[test]
    fn nonpositive_weight_keeps_prior() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let sigma = random_spd(&mut rng, 3, 0.3, 3.0);
        let neg = -random_spd(&mut rng, 3, 0.1, 1.0).matrix().clone();
        let a = SymmetricMatrix::new(neg).unwrap();
        for rate in [0.5, 4.0] {
            let res = solve_logdet_program(&a, &sigma, rate, &OracleOptions::default()).unwrap();
            assert!((res.k_opt.matrix() - sigma.matrix()).norm() <= 1e-9);
            assert!(res.converged);
        }
    }

    #[test]
    fn rejects_negative_rate() {
        let s = SpdMatrix::identity(1);
        let a = SymmetricMatrix::identity(1);
        assert!(solve_logdet_program(&a, &s, -1.0, &OracleOptions::default()).is_err());
    }
}
