//! The three estimation procedures and Monte Carlo validation.
//!
//! * [`algorithm1`]: polynomial estimator, sample size from the classical VC
//!   bound, threshold at the largest training value.
//! * [`algorithm2`]: kernelized estimator, grown batch by batch until the
//!   PAC-Bayes ε drops below the target.
//! * [`algorithm3`]: the same loop with the polynomial estimator.

use ndarray::{concatenate, Array2, Axis};
use serde::{Deserialize, Serialize};
use statrs::function::beta::inv_beta_reg;

use crate::bounds::{self, CertificateStatus, IterationRecord, KlVariant, Method, PacCertificate};
use crate::error::{Error, Result};
use crate::estimators::{
    fit_kernel, fit_nystrom, fit_poly, AxisScaling, Estimator, LandmarkRule, SupportEstimate, DEFAULT_GRAM_CAPACITY,
};
use crate::kernel::KernelSpec;
use crate::linalg;
use crate::polybasis::{basis_dimension, MultiIndexBasis};
use crate::systems::{TRAINING_STREAM, VALIDATION_STREAM};

/// An iid source of samples of the random variable whose support is sought.
///
/// Sample `i` of a stream must depend only on the stream and `i`, so that
/// disjoint streams are independent and draws can be resumed.
pub trait SampleSource {
    fn dim(&self) -> usize;
    fn draw(&self, stream: u64, start: u64, count: usize) -> Result<Array2<f64>>;
}

/// How the kernel KL divergence is computed in [`algorithm2`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum KlMode {
    /// From `log det` and `tr⁻¹` of the full Gramian.
    #[default]
    Dense,
    /// Top-`p` eigenvalues plus a flat tail at `λ_p` (an upper bound).
    SpectralTruncated { p: usize },
}

fn default_max_iterations() -> usize {
    200
}

fn default_gram_capacity() -> usize {
    DEFAULT_GRAM_CAPACITY
}

fn default_max_basis_dim() -> usize {
    20_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub epsilon: f64,
    pub delta: f64,
    pub sigma0_sq: f64,
    /// Polynomial degree (algorithms 1 and 3).
    #[serde(default)]
    pub m: Option<usize>,
    /// Kernel (algorithm 2).
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    /// Threshold; defaults to `C(n+2m, n)/ε` (algorithm 3) or 0.15
    /// (algorithm 2).
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default)]
    pub n0: usize,
    #[serde(default)]
    pub nb: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub kl_mode: KlMode,
    #[serde(default)]
    pub kl_variant: KlVariant,
    /// Fixed change of coordinates applied to samples before fitting.
    #[serde(default)]
    pub scaling: Option<AxisScaling>,
    /// Replace the final kernel estimate by a rank-`r` Nyström surrogate.
    /// Its sublevel set contains the exact one, so the certificate carries
    /// over.
    #[serde(default)]
    pub nystrom_rank: Option<usize>,
    #[serde(default = "default_gram_capacity")]
    pub gram_capacity: usize,
    #[serde(default = "default_max_basis_dim")]
    pub max_basis_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl AlgorithmConfig {
    pub fn new(epsilon: f64, delta: f64, sigma0_sq: f64) -> Self {
        Self {
            epsilon,
            delta,
            sigma0_sq,
            m: None,
            kernel: None,
            eta: None,
            n0: 0,
            nb: 0,
            max_iterations: default_max_iterations(),
            kl_mode: KlMode::Dense,
            kl_variant: KlVariant::Moment,
            scaling: None,
            nystrom_rank: None,
            gram_capacity: default_gram_capacity(),
            max_basis_dim: default_max_basis_dim(),
            seed: 0,
        }
    }

    fn check_common(&self, iterative: bool) -> Result<()> {
        let eps_ok = if iterative {
            self.epsilon > 0.0 && self.epsilon <= 1.0
        } else {
            self.epsilon > 0.0 && self.epsilon < 1.0
        };
        if !eps_ok {
            return Err(Error::config("epsilon", format!("out of range: {}", self.epsilon)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(
                "delta",
                format!("must lie in (0, 1), got {}", self.delta),
            ));
        }
        if !(self.sigma0_sq > 0.0 && self.sigma0_sq.is_finite()) {
            return Err(Error::config("sigma0_sq", "must be positive"));
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                return Err(Error::config("eta", "must be positive"));
            }
        }
        if iterative {
            if self.n0 == 0 && self.nb == 0 {
                return Err(Error::config("n0", "n0 + nb must be positive"));
            }
            if self.nb == 0 {
                return Err(Error::config("nb", "batch size must be positive"));
            }
            if self.max_iterations == 0 {
                return Err(Error::config("max_iterations", "must be positive"));
            }
        }
        Ok(())
    }

    fn degree(&self) -> Result<usize> {
        self.m
            .ok_or_else(|| Error::config("m", "polynomial degree is required"))
    }

    fn basis(&self, n: usize) -> Result<MultiIndexBasis> {
        let m = self.degree()?;
        let d = basis_dimension(n, m)?;
        if d > self.max_basis_dim as u64 {
            return Err(Error::Capacity(format!(
                "basis dimension {d} exceeds the cap of {}",
                self.max_basis_dim
            )));
        }
        MultiIndexBasis::new(n, m)
    }

    fn scaling_for(&self, n: usize) -> Result<Option<&AxisScaling>> {
        match &self.scaling {
            Some(s) if s.dim() != n => Err(Error::config(
                "scaling",
                format!("has dimension {}, samples have {n}", s.dim()),
            )),
            other => Ok(other.as_ref()),
        }
    }
}

/// VC dimension `C(n+2m, n)` of degree-2m polynomial sublevel sets.
pub fn vc_dimension(n: usize, m: usize) -> Result<u64> {
    basis_dimension(n, 2 * m)
}

/// Default threshold `C(n+2m, n)/ε` for the polynomial PAC-Bayes loop.
pub fn default_poly_eta(n: usize, m: usize, epsilon: f64) -> Result<f64> {
    Ok(vc_dimension(n, m)? as f64 / epsilon)
}

/// Default threshold for the kernel PAC-Bayes loop.
pub const DEFAULT_KERNEL_ETA: f64 = 0.15;

/// Result of a run: the estimate and the training samples in original
/// coordinates.
#[derive(Debug, Clone)]
pub struct Run {
    pub estimate: SupportEstimate,
    pub samples: Array2<f64>,
}

fn scaled(points: &Array2<f64>, scaling: Option<&AxisScaling>) -> Result<Array2<f64>> {
    match scaling {
        Some(s) => s.apply(points.view()),
        None => Ok(points.clone()),
    }
}

pub fn algorithm1<S: SampleSource + ?Sized>(source: &S, config: &AlgorithmConfig) -> Result<Run> {
    config.check_common(false)?;
    let n = source.dim();
    let basis = config.basis(n)?;
    let scaling = config.scaling_for(n)?;
    let vc = vc_dimension(n, config.degree()?)?;
    let count = bounds::classical_sample_bound(config.epsilon, config.delta, vc)?;
    let samples = source.draw(TRAINING_STREAM, 0, count as usize)?;
    let fit_points = scaled(&samples, scaling)?;
    let est = fit_poly(fit_points.view(), &basis, config.sigma0_sq)?;
    let alpha = est.eval_batch(fit_points.view())?.iter().cloned().fold(0.0, f64::max);
    let estimate = SupportEstimate::new(
        Estimator::Poly(est),
        alpha,
        PacCertificate::classical(config.epsilon, config.delta, count),
    )?
    .with_scaling(scaling.cloned())?;
    Ok(Run { estimate, samples })
}

/// Shared batch loop of algorithms 2 and 3. `step` fits on the scaled
/// samples so far and returns the estimator, its training values and the
/// KL divergence.
fn pacbayes_loop<S, F>(source: &S, config: &AlgorithmConfig, method: Method, eta: f64, mut step: F) -> Result<Run>
where
    S: SampleSource + ?Sized,
    F: FnMut(&Array2<f64>, bool) -> Result<(Estimator, Option<(Vec<f64>, f64)>)>,
{
    let scaling = config.scaling_for(source.dim())?;
    let mut samples = source.draw(TRAINING_STREAM, 0, config.n0)?;
    let mut trace = Vec::new();
    let mut eps = 1.0;
    let mut current = None;
    let mut iteration = 0u64;
    while eps > config.epsilon && (iteration as usize) < config.max_iterations {
        iteration += 1;
        let batch = source.draw(TRAINING_STREAM, samples.nrows() as u64, config.nb)?;
        samples = concatenate(Axis(0), &[samples.view(), batch.view()])
            .map_err(|e| Error::numeric("sample accumulation", e))?;
        let fit_points = scaled(&samples, scaling)?;
        let (est, stats) = step(&fit_points, true)?;
        let (values, kl) = stats.expect("bound statistics requested");
        let q_hat = bounds::empirical_stochastic_risk(&values, eta)?;
        let record = IterationRecord::evaluate(iteration, samples.nrows() as u64, q_hat, kl, config.delta)?;
        eps = record.epsilon_i;
        trace.push(record);
        current = Some(est);
    }
    let status = if trace.is_empty() {
        CertificateStatus::Vacuous
    } else if eps <= config.epsilon {
        CertificateStatus::Certified
    } else {
        CertificateStatus::NonTerminated
    };
    let estimator = match current {
        Some(e) => e,
        None => {
            if samples.nrows() == 0 {
                return Err(Error::config("n0", "no samples to fit when the loop does not run"));
            }
            step(&scaled(&samples, scaling)?, false)?.0
        }
    };
    let certificate = PacCertificate {
        format: 1,
        method,
        status,
        target_epsilon: config.epsilon,
        epsilon: trace.last().map_or(1.0, |r| r.epsilon_i),
        delta: config.delta,
        n_samples: samples.nrows() as u64,
        trace,
    };
    let estimate = SupportEstimate::new(estimator, eta, certificate)?.with_scaling(scaling.cloned())?;
    Ok(Run { estimate, samples })
}

pub fn algorithm2<S: SampleSource + ?Sized>(source: &S, config: &AlgorithmConfig) -> Result<Run> {
    config.check_common(true)?;
    let spec = config
        .kernel
        .clone()
        .ok_or_else(|| Error::config("kernel", "a kernel is required"))?;
    let eta = config.eta.unwrap_or(DEFAULT_KERNEL_ETA);
    let capacity = config.gram_capacity;
    let cap_hint = |e: Error| match e {
        Error::Capacity(msg) => Error::Capacity(format!(
            "{msg}; lower max_iterations or use spectral-truncated KL with a Nystrom rank"
        )),
        other => other,
    };
    let sigma0_sq = config.sigma0_sq;
    let mut run = pacbayes_loop(source, config, Method::PacbayesKernel, eta, |points, with_stats| {
        let est = fit_kernel(points.view(), &spec, sigma0_sq, capacity).map_err(cap_hint)?;
        if !with_stats {
            return Ok((Estimator::Kernel(est), None));
        }
        let summary = est.gram_summary()?;
        let kl = match config.kl_mode {
            KlMode::Dense => {
                bounds::gaussian_kl_kernel_from_parts(points.nrows(), summary.logdet, summary.trace_inverse, sigma0_sq)
            }
            KlMode::SpectralTruncated { p } => {
                let gram = est.kernel().gram(points.view())?;
                let top = linalg::top_eigenvalues(&gram, p.min(points.nrows()), 1e-10, 60)?;
                bounds::gaussian_kl_kernel_truncated(&top.values, points.nrows(), sigma0_sq)?
            }
        };
        Ok((Estimator::Kernel(est), Some((summary.training_values, kl))))
    })?;
    if let Some(r) = config.nystrom_rank {
        let points = scaled(&run.samples, run.estimate.scaling())?;
        let ny = fit_nystrom(
            points.view(),
            &spec,
            sigma0_sq,
            r.min(points.nrows()),
            LandmarkRule::UniformRandom { seed: config.seed },
        )?;
        let scaling = run.estimate.scaling().cloned();
        run.estimate = SupportEstimate::new(Estimator::Nystrom(ny), eta, run.estimate.certificate().clone())?
            .with_scaling(scaling)?;
    }
    Ok(run)
}

pub fn algorithm3<S: SampleSource + ?Sized>(source: &S, config: &AlgorithmConfig) -> Result<Run> {
    config.check_common(true)?;
    let n = source.dim();
    let basis = config.basis(n)?;
    let eta = match config.eta {
        Some(e) => e,
        None => default_poly_eta(n, basis.m(), config.epsilon)?,
    };
    pacbayes_loop(source, config, Method::PacbayesPoly, eta, |points, with_stats| {
        let est = fit_poly(points.view(), &basis, config.sigma0_sq)?;
        if !with_stats {
            return Ok((Estimator::Poly(est), None));
        }
        let values = est.eval_batch(points.view())?.to_vec();
        let kl = bounds::gaussian_kl_poly(est.factor(), config.sigma0_sq, config.kl_variant)?;
        Ok((Estimator::Poly(est), Some((values, kl))))
    })
}

/// Empirical coverage of an estimate on fresh samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub hits: u64,
    pub n: u64,
    pub coverage: f64,
    /// Clopper-Pearson lower bound at confidence `1 - delta_v`.
    pub lower_bound: f64,
    pub delta_v: f64,
}

/// Default confidence parameter of the coverage lower bound.
pub const DEFAULT_DELTA_V: f64 = 0.01;

const VALIDATION_CHUNK: usize = 4096;

/// Exact one-sided binomial lower confidence bound for `hits / n`.
pub fn clopper_pearson_lower(hits: u64, n: u64, delta_v: f64) -> Result<f64> {
    if n == 0 || hits > n {
        return Err(Error::argument(format!("invalid counts {hits}/{n}")));
    }
    if !(delta_v > 0.0 && delta_v < 1.0) {
        return Err(Error::argument("delta_v must lie in (0, 1)"));
    }
    if hits == 0 {
        return Ok(0.0);
    }
    Ok(inv_beta_reg(hits as f64, (n - hits + 1) as f64, delta_v))
}

/// Draws `n_validation` samples from the validation stream (disjoint from
/// training) and counts how many fall inside the estimate.
pub fn validate_estimate<S: SampleSource + ?Sized>(
    estimate: &SupportEstimate,
    source: &S,
    n_validation: usize,
    delta_v: f64,
) -> Result<CoverageReport> {
    if n_validation == 0 {
        return Err(Error::argument("n_validation must be positive"));
    }
    if source.dim() != estimate.dim() {
        return Err(Error::DimensionMismatch {
            expected: estimate.dim(),
            got: source.dim(),
        });
    }
    let mut hits = 0u64;
    let mut start = 0usize;
    while start < n_validation {
        let count = VALIDATION_CHUNK.min(n_validation - start);
        let pts = source.draw(VALIDATION_STREAM, start as u64, count)?;
        hits += estimate.contains_batch(pts.view())?.iter().filter(|b| **b).count() as u64;
        start += count;
    }
    let n = n_validation as u64;
    Ok(CoverageReport {
        hits,
        n,
        coverage: hits as f64 / n as f64,
        lower_bound: clopper_pearson_lower(hits, n, delta_v)?,
        delta_v,
    })
}
