//! Gaussian test channels and Monte Carlo checks of the analytic distortions.
//!
//! Samples are drawn in fixed chunks of [`CHUNK`]; chunk `c` uses a ChaCha8
//! generator seeded with the run seed on stream `c`, and chunk sums are
//! combined in chunk order, so reports do not depend on the thread count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::full::joint_model;
use crate::matrix::{psd_coloring, symmetrize, Eigen, SpdMatrix, SymmetricMatrix};
use crate::model::{PosteriorCovariance, SemanticModel};
use crate::remote::remote_statistics;

pub const CHUNK: usize = 4096;
pub const MIN_SAMPLES: usize = 1000;

/// Relative cutoff, against `λ_max(prior⁻¹)`, below which a channel
/// direction carries no information.
const SILENT_DIRECTION: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseVariance {
    Finite(f64),
    /// Nothing is observed along this direction.
    Infinite,
}

/// Additive channel `U = S + Z` whose MMSE posterior covariance is `target`.
#[derive(Debug, Clone)]
pub struct TestChannel {
    pub prior: SpdMatrix,
    pub target_posterior: PosteriorCovariance,
    /// Orthonormal eigenvectors of `Σ_Z`, one per column.
    pub noise_eigvecs: DMatrix<f64>,
    pub noise_eigvals: Vec<NoiseVariance>,
}

impl TestChannel {
    fn finite(&self) -> Vec<(usize, f64)> {
        self.noise_eigvals
            .iter()
            .enumerate()
            .filter_map(|(i, v)| match v {
                NoiseVariance::Finite(s) => Some((i, *s)),
                NoiseVariance::Infinite => None,
            })
            .collect()
    }

    /// Rows are the observed directions.
    pub fn observation(&self) -> DMatrix<f64> {
        let idx: Vec<usize> = self.finite().iter().map(|p| p.0).collect();
        self.noise_eigvecs.select_columns(&idx).transpose()
    }

    pub fn observed_noise(&self) -> Vec<f64> {
        self.finite().iter().map(|p| p.1).collect()
    }

    /// `Σ_Z` when every direction is observed.
    pub fn noise_covariance(&self) -> Option<DMatrix<f64>> {
        let values: Option<Vec<f64>> = self
            .noise_eigvals
            .iter()
            .map(|v| match v {
                NoiseVariance::Finite(s) => Some(*s),
                NoiseVariance::Infinite => None,
            })
            .collect();
        let values = values?;
        Some(
            Eigen {
                values: DVector::from_vec(values),
                vectors: self.noise_eigvecs.clone(),
            }
            .map(|v| v),
        )
    }

    /// MMSE gain `G = Σ Hᵀ (H Σ Hᵀ + N)⁻¹` on the observed directions.
    pub fn gain(&self) -> DMatrix<f64> {
        let h = self.observation();
        let n = self.prior.dim();
        if h.nrows() == 0 {
            return DMatrix::zeros(n, 0);
        }
        let noise = DMatrix::from_diagonal(&DVector::from_vec(self.observed_noise()));
        let innovation = SpdMatrix::new(&h * self.prior.matrix() * h.transpose() + noise)
            .expect("observed directions have positive innovation variance");
        self.prior.matrix() * h.transpose() * innovation.inverse().matrix()
    }

    /// `Σ − G H Σ`, the posterior covariance the channel actually induces.
    pub fn induced_posterior(&self) -> DMatrix<f64> {
        let h = self.observation();
        symmetrize(&(self.prior.matrix() - self.gain() * h * self.prior.matrix()))
    }
}

/// Solves `Σ_Z⁻¹ = K⁻¹ − Σ⁻¹` in the normalized frame, where it is
/// `Σ^{-1/2} V diag(1/κ − 1) Vᵀ Σ^{-1/2}` for `K̃ = V diag(κ) Vᵀ`.
pub fn build_test_channel(prior: &SpdMatrix, k: &PosteriorCovariance) -> Result<TestChannel> {
    if !k.same_prior(prior) {
        return Err(Error::PriorMismatch);
    }
    let kn = k.normalized();
    let eig = kn.eigen();
    if eig.min() <= 0.0 {
        return Err(Error::InfeasiblePosterior {
            violation: -eig.min(),
        });
    }
    let excess = Eigen {
        values: eig.values.map(|v| (1.0 / v - 1.0).max(0.0)),
        vectors: eig.vectors.clone(),
    }
    .map(|v| v);
    let isq = prior.inv_sqrt();
    let p = Eigen::of(&symmetrize(&(isq.matrix() * excess * isq.matrix())));
    let cut = SILENT_DIRECTION * prior.inverse().spectral_norm();
    let noise_eigvals = p
        .values
        .iter()
        .map(|&v| {
            if v <= cut {
                NoiseVariance::Infinite
            } else {
                NoiseVariance::Finite(1.0 / v)
            }
        })
        .collect();
    Ok(TestChannel {
        prior: prior.clone(),
        target_posterior: k.clone(),
        noise_eigvecs: p.vectors,
        noise_eigvals,
    })
}

#[derive(Debug, Clone)]
pub struct EmpiricalReport {
    pub n_samples: usize,
    pub seed: u64,
    pub analytic_value: f64,
    pub empirical_value: f64,
    pub standard_error: f64,
    pub z_score: f64,
    /// Sample covariance of the estimation error of the designed variable.
    pub empirical_posterior_cov: SymmetricMatrix,
    /// Sample covariance of the designed variable itself.
    pub empirical_prior_cov: SymmetricMatrix,
    /// `½ log(det Σ̂_prior / det Σ̂_posterior)`.
    pub empirical_rate: f64,
    /// `½ log(det prior / det K)` of the target.
    pub target_rate: f64,
    /// Full regime: sample `Cov(X − X̂, V)`.
    pub cross_cov: Option<DMatrix<f64>>,
}

/// How the designed variable `S` and the reconstruction are formed from
/// `(X, V)` and the channel output.
struct Scenario<'a> {
    model: &'a SemanticModel,
    channel: TestChannel,
    /// `S = sx·X + sv·V`.
    sx: DMatrix<f64>,
    sv: DMatrix<f64>,
    /// `X̂ = reader · Ŝ`.
    reader: DMatrix<f64>,
    analytic: f64,
    cross: bool,
}

#[derive(Clone)]
struct Sums {
    n: usize,
    loss: f64,
    loss_sq: f64,
    err: DMatrix<f64>,
    prior: DMatrix<f64>,
    cross: DMatrix<f64>,
}

impl Sums {
    fn zeros(d: usize, k: usize) -> Self {
        Sums {
            n: 0,
            loss: 0.0,
            loss_sq: 0.0,
            err: DMatrix::zeros(d, d),
            prior: DMatrix::zeros(d, d),
            cross: DMatrix::zeros(k, k),
        }
    }

    fn add(&mut self, o: &Sums) {
        self.n += o.n;
        self.loss += o.loss;
        self.loss_sq += o.loss_sq;
        self.err += &o.err;
        self.prior += &o.prior;
        self.cross += &o.cross;
    }
}

impl Scenario<'_> {
    fn chunk(&self, seed: u64, index: usize, m: usize, parts: &Parts) -> Sums {
        let k = self.model.dim();
        let f = parts.h.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let mut zx = DMatrix::zeros(k, m);
        let mut zv = DMatrix::zeros(k, m);
        let mut zn = DMatrix::zeros(f, m);
        for j in 0..m {
            for i in 0..k {
                zx[(i, j)] = rng.sample(StandardNormal);
            }
            for i in 0..k {
                zv[(i, j)] = rng.sample(StandardNormal);
            }
            for i in 0..f {
                zn[(i, j)] = rng.sample(StandardNormal);
            }
        }
        let x = &parts.cx * zx;
        let v = &parts.cv * zv;
        let s = &self.sx * &x + &self.sv * &v;
        let y = &parts.h * &s + &parts.noise_sd * zn;
        let s_hat = &parts.gain * y;
        let x_hat = &self.reader * &s_hat;
        let theta = self.model.b() * &x + &v;
        let r = theta - &x_hat;
        let wr = self.model.w_e().matrix() * &r;
        let mut sums = Sums::zeros(s.nrows(), k);
        sums.n = m;
        for j in 0..m {
            let l = r.column(j).dot(&wr.column(j)) - self.analytic;
            sums.loss += l;
            sums.loss_sq += l * l;
        }
        let e = &s - &s_hat;
        sums.err = &e * e.transpose();
        sums.prior = &s * s.transpose();
        if self.cross {
            sums.cross = (&x - &x_hat) * v.transpose();
        }
        sums
    }

    fn run(&self, n: usize, seed: u64) -> Result<EmpiricalReport> {
        if n < MIN_SAMPLES {
            return Err(Error::InvalidArgument(format!(
                "need at least {MIN_SAMPLES} samples, got {n}"
            )));
        }
        let parts = Parts {
            cx: self.model.sigma_x().coloring(),
            cv: psd_coloring(self.model.sigma_v()),
            h: self.channel.observation(),
            noise_sd: DMatrix::from_diagonal(&DVector::from_iterator(
                self.channel.observed_noise().len(),
                self.channel.observed_noise().iter().map(|v| v.sqrt()),
            )),
            gain: self.channel.gain(),
        };
        let chunks = n.div_ceil(CHUNK);
        let partial: Vec<Sums> = (0..chunks)
            .into_par_iter()
            .map(|c| self.chunk(seed, c, CHUNK.min(n - c * CHUNK), &parts))
            .collect();
        let d = self.sx.nrows();
        let mut total = Sums::zeros(d, self.model.dim());
        for p in &partial {
            total.add(p);
        }
        let nf = n as f64;
        let mean = total.loss / nf;
        let var = (total.loss_sq - nf * mean * mean) / (nf - 1.0);
        let standard_error = (var.max(0.0) / nf).sqrt();
        let z_score = if standard_error > 0.0 {
            mean / standard_error
        } else if mean == 0.0 {
            0.0
        } else {
            f64::INFINITY.copysign(mean)
        };
        let post = SymmetricMatrix::new(total.err / nf)?;
        let prior = SymmetricMatrix::new(total.prior / nf)?;
        let log_det = |m: &SymmetricMatrix| m.eigen().values.iter().map(|v| v.ln()).sum::<f64>();
        Ok(EmpiricalReport {
            n_samples: n,
            seed,
            analytic_value: self.analytic,
            empirical_value: self.analytic + mean,
            standard_error,
            z_score,
            empirical_rate: 0.5 * (log_det(&prior) - log_det(&post)),
            target_rate: self.channel.target_posterior.rate()?,
            empirical_posterior_cov: post,
            empirical_prior_cov: prior,
            cross_cov: self.cross.then(|| total.cross / nf),
        })
    }
}

struct Parts {
    cx: DMatrix<f64>,
    cv: DMatrix<f64>,
    h: DMatrix<f64>,
    noise_sd: DMatrix<f64>,
    gain: DMatrix<f64>,
}

/// Encoder observes `X`; the channel realizes `k_x`.
pub fn simulate_direct(model: &SemanticModel, k_x: &PosteriorCovariance, n: usize, seed: u64) -> Result<EmpiricalReport> {
    let k = model.dim();
    let channel = build_test_channel(model.sigma_x(), k_x)?;
    Scenario {
        model,
        channel,
        sx: DMatrix::identity(k, k),
        sv: DMatrix::zeros(k, k),
        reader: DMatrix::identity(k, k),
        analytic: model.offset_distortion() + model.effective_weight().trace_product(k_x.matrix()),
        cross: false,
    }
    .run(n, seed)
}

/// Encoder observes `Θ`; the channel realizes `k_theta` and `X̂ = L_X Θ̂`.
pub fn simulate_remote(
    model: &SemanticModel,
    k_theta: &PosteriorCovariance,
    n: usize,
    seed: u64,
) -> Result<EmpiricalReport> {
    let k = model.dim();
    let stats = remote_statistics(model)?;
    let channel = build_test_channel(&stats.sigma_theta, k_theta)?;
    Scenario {
        model,
        channel,
        sx: model.b().clone(),
        sv: DMatrix::identity(k, k),
        reader: stats.l_x.clone(),
        analytic: stats.d_inf + stats.q.trace_product(k_theta.matrix()),
        cross: false,
    }
    .run(n, seed)
}

/// Encoder observes `(X, V)`; the channel realizes `k_w` over `Σ_W`.
pub fn simulate_full(model: &SemanticModel, k_w: &PosteriorCovariance, n: usize, seed: u64) -> Result<EmpiricalReport> {
    let k = model.dim();
    let joint = joint_model(model)?;
    let channel = build_test_channel(&joint.sigma_w, k_w)?;
    let mut sx = DMatrix::zeros(2 * k, k);
    sx.view_mut((0, 0), (k, k)).fill_with_identity();
    let mut sv = DMatrix::zeros(2 * k, k);
    sv.view_mut((k, 0), (k, k)).fill_with_identity();
    let mut reader = DMatrix::zeros(k, 2 * k);
    reader.view_mut((0, 0), (k, k)).fill_with_identity();
    Scenario {
        model,
        channel,
        sx,
        sv,
        reader,
        analytic: model.offset_distortion() + joint.w_bar.trace_product(k_w.matrix()),
        cross: true,
    }
    .run(n, seed)
}
