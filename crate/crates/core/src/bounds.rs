//! Certificate arithmetic: the classical VC sample size, the chi-square and
//! Bernoulli-KL machinery behind the PAC-Bayes bound, and Gaussian KL
//! divergences between posterior and prior.

use std::f64::consts::PI;

use libm::{erf, erfc};
use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Absolute tolerance of the bisection in [`kl_inverse_upper`].
pub const KL_INVERSE_TOL: f64 = 1e-12;
/// Largest allowed excess `D(q̂‖β) - γ` at the returned β.
pub const KL_INVERSE_GAP: f64 = 1e-10;

fn check_unit_open(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("{name} must lie in (0, 1), got {v}")))
    }
}

/// Smallest `N` with `N ≥ (5/ε)(ln(4/δ) + d ln(40/ε))`.
pub fn classical_sample_bound(epsilon: f64, delta: f64, vc_dim: u64) -> Result<u64> {
    check_unit_open("epsilon", epsilon)?;
    check_unit_open("delta", delta)?;
    if vc_dim == 0 {
        return Err(Error::argument("VC dimension must be positive"));
    }
    let rhs = (5.0 / epsilon) * ((4.0 / delta).ln() + vc_dim as f64 * (40.0 / epsilon).ln());
    if !(rhs < 2f64.powi(53)) {
        return Err(Error::Range(format!("sample bound {rhs:e} is not representable")));
    }
    Ok(rhs.ceil() as u64)
}

/// CDF of the chi-square distribution with one degree of freedom.
pub fn chi2_cdf_1dof(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::argument(format!("chi-square argument must be >= 0, got {x}")));
    }
    Ok(if x.is_infinite() { 1.0 } else { erf((x / 2.0).sqrt()) })
}

/// Upper tail `1 - F₁(x)`, evaluated through `erfc` so small tails keep
/// their relative accuracy.
pub fn chi2_sf_1dof(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::argument(format!("chi-square argument must be >= 0, got {x}")));
    }
    Ok(if x.is_infinite() { 0.0 } else { erfc((x / 2.0).sqrt()) })
}

/// `1 / (1 - F₁(1))`, about 3.1515.
pub fn central_concept_factor() -> f64 {
    1.0 / erfc(std::f64::consts::FRAC_1_SQRT_2)
}

/// Risk bound of the central concept implied by a stochastic-risk bound.
pub fn central_concept_scale(srisk_bound: f64) -> f64 {
    srisk_bound * central_concept_factor()
}

/// `q ln(q/p) + (1-q) ln((1-q)/(1-p))` with `0 ln 0 = 0`.
pub fn bernoulli_kl(q: f64, p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::argument(format!("q must lie in [0, 1], got {q}")));
    }
    check_unit_open("p", p)?;
    Ok(bernoulli_kl_unchecked(q, p))
}

fn bernoulli_kl_unchecked(q: f64, p: f64) -> f64 {
    let a = if q > 0.0 { q * (q / p).ln() } else { 0.0 };
    let b = if q < 1.0 {
        (1.0 - q) * ((1.0 - q) / (1.0 - p)).ln()
    } else {
        0.0
    };
    (a + b).max(0.0)
}

/// `sup{β ∈ [q̂, 1) : D(q̂‖β) ≤ γ}` by bisection, reported at the upper end
/// of the final bracket so the bound is never understated.
pub fn kl_inverse_upper(q_hat: f64, gamma: f64) -> f64 {
    if q_hat >= 1.0 {
        return 1.0;
    }
    let q_hat = q_hat.max(0.0);
    if !(gamma > 0.0) {
        return q_hat;
    }
    let (mut lo, mut hi) = (q_hat, 1.0);
    // Where the divergence is steep (β near 1) a narrow bracket can still
    // straddle a large KL gap, so also tighten until hi is nearly feasible.
    while hi - lo > KL_INVERSE_TOL || bernoulli_kl_unchecked(q_hat, hi) > gamma + KL_INVERSE_GAP {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if bernoulli_kl_unchecked(q_hat, mid) <= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Mean of `1 - F₁(η / κ⁻¹(xᵢ))` over training values; zero values
/// contribute nothing.
pub fn empirical_stochastic_risk(values: &[f64], eta: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::argument("stochastic risk needs at least one value"));
    }
    if !(eta > 0.0) {
        return Err(Error::argument(format!("eta must be positive, got {eta}")));
    }
    let mut total = 0.0;
    for &v in values {
        if !(v >= 0.0) {
            return Err(Error::argument(format!("inverse Christoffel value {v} is negative")));
        }
        if v > 0.0 {
            total += chi2_sf_1dof(eta / v)?;
        }
    }
    Ok(total / values.len() as f64)
}

/// `D_KL(N(μ₀, Σ₀) ‖ N(μ₁, Σ₁))`.
pub fn gaussian_kl_generic(
    mu0: ArrayView1<f64>,
    sigma0: ArrayView2<f64>,
    mu1: ArrayView1<f64>,
    sigma1: ArrayView2<f64>,
) -> Result<f64> {
    let n = mu0.len();
    for (got, what) in [
        (mu1.len(), "mu1"),
        (sigma0.nrows(), "sigma0"),
        (sigma1.nrows(), "sigma1"),
    ] {
        if got != n {
            return Err(Error::argument(format!("{what} has dimension {got}, expected {n}")));
        }
    }
    let l0 = linalg::cholesky_lower(sigma0.to_owned(), "KL covariance 0")?;
    let l1 = linalg::cholesky_lower(sigma1.to_owned(), "KL covariance 1")?;
    let mut w = l0.clone();
    linalg::solve_lower_inplace(&l1, &mut w)?;
    let trace = w.iter().map(|v| v * v).sum::<f64>();
    let diff = (&mu1 - &mu0).to_owned();
    let m = linalg::solve_lower(&l1, diff.view())?;
    let mahal = m.dot(&m);
    let logdet = linalg::logdet_from_factor(&l1) - linalg::logdet_from_factor(&l0);
    Ok((0.5 * (logdet + trace + mahal - n as f64)).max(0.0))
}

/// KL from the kernel posterior to the GP prior, `½ log det(I + σ₀⁻²K)
/// + ½ tr((I + σ₀⁻²K)⁻¹) - N/2`.
pub fn gaussian_kl_kernel_dense(k: ArrayView2<f64>, sigma0_sq: f64) -> Result<f64> {
    crate::estimators::check_ridge(sigma0_sq)?;
    let n = k.nrows();
    let mut a = k.to_owned();
    a.diag_mut().iter_mut().for_each(|v| *v += sigma0_sq);
    let l = linalg::cholesky_lower(a, "KL Gramian factorization")?;
    let inv = linalg::inverse_from_factor(&l)?;
    Ok(gaussian_kl_kernel_from_parts(
        n,
        linalg::logdet_from_factor(&l),
        inv.diag().sum(),
        sigma0_sq,
    ))
}

/// The dense kernel KL from `log det A` and `tr A⁻¹` of `A = σ₀² I + K`.
pub fn gaussian_kl_kernel_from_parts(n: usize, logdet_a: f64, trace_inv_a: f64, sigma0_sq: f64) -> f64 {
    let n = n as f64;
    let logdet = logdet_a - n * sigma0_sq.ln();
    (0.5 * (logdet + sigma0_sq * trace_inv_a - n)).max(0.0)
}

fn spectral_term(lambda: f64, sigma0_sq: f64) -> f64 {
    let x = lambda.max(0.0) / sigma0_sq;
    x.ln_1p() - x / (1.0 + x)
}

/// `½ Σ [ln(1 + λᵢ/σ₀²) + 1/(1 + λᵢ/σ₀²) - 1]`; negative round-off
/// eigenvalues count as zero.
pub fn gaussian_kl_kernel_spectral(eigenvalues: &[f64], sigma0_sq: f64) -> Result<f64> {
    crate::estimators::check_ridge(sigma0_sq)?;
    Ok(0.5 * eigenvalues.iter().map(|&l| spectral_term(l, sigma0_sq)).sum::<f64>())
}

/// Spectral KL with the `N - p` unknown eigenvalues replaced by `λ_p`, an
/// upper bound because the summand grows with λ.
pub fn gaussian_kl_kernel_truncated(top: &[f64], n: usize, sigma0_sq: f64) -> Result<f64> {
    crate::estimators::check_ridge(sigma0_sq)?;
    if top.is_empty() || top.len() > n {
        return Err(Error::argument(format!(
            "need between 1 and {n} eigenvalues, got {}",
            top.len()
        )));
    }
    if top.windows(2).any(|w| w[0] < w[1]) {
        return Err(Error::argument("eigenvalues must be sorted in descending order"));
    }
    let known: f64 = top.iter().map(|&l| spectral_term(l, sigma0_sq)).sum();
    let tail = (n - top.len()) as f64 * spectral_term(top[top.len() - 1], sigma0_sq);
    Ok(0.5 * (known + tail))
}

/// Which posterior covariance the polynomial KL uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlVariant {
    /// Posterior `N(0, M̂⁻¹)`, whose central concept is exactly κ̂⁻¹.
    #[default]
    Moment,
    /// Posterior `N(0, (σ₀² I + M̂)⁻¹)`.
    Lemma39,
}

/// `D_KL(N(0, Σ) ‖ N(0, σ₀⁻² I))` for the polynomial weight posterior, from
/// the Cholesky factor of `M̂`. Costs O(d³) regardless of N.
pub fn gaussian_kl_poly(moment_factor: &Array2<f64>, sigma0_sq: f64, variant: KlVariant) -> Result<f64> {
    crate::estimators::check_ridge(sigma0_sq)?;
    let owned;
    let l = match variant {
        KlVariant::Moment => moment_factor,
        KlVariant::Lemma39 => {
            let mut m = linalg::reconstruct(moment_factor);
            m.diag_mut().iter_mut().for_each(|v| *v += sigma0_sq);
            owned = linalg::cholesky_lower(m, "KL precision factorization")?;
            &owned
        }
    };
    let d = l.nrows() as f64;
    let trace_inv = linalg::inverse_from_factor(l)?.diag().sum();
    let logdet = linalg::logdet_from_factor(l);
    Ok((0.5 * (sigma0_sq * trace_inv - d + logdet - d * sigma0_sq.ln())).max(0.0))
}

/// Confidence spent on iteration `i` so that the budgets sum to δ.
pub fn delta_budget(i: u64, delta: f64) -> f64 {
    6.0 * delta / (PI * PI * (i * i) as f64)
}

/// `kl_inverse_upper(q̂, (KL + ln((N+1)/δᵢ))/N)`.
pub fn pacbayes_risk_bound(q_hat: f64, kl: f64, n: u64, delta_i: f64) -> Result<f64> {
    Ok(kl_inverse_upper(q_hat, pacbayes_kl_budget(kl, n, delta_i)?))
}

/// Right-hand side `(KL + ln((N+1)/δᵢ))/N` of the PAC-Bayes inequality.
pub fn pacbayes_kl_budget(kl: f64, n: u64, delta_i: f64) -> Result<f64> {
    check_unit_open("delta_i", delta_i)?;
    if n == 0 {
        return Err(Error::argument("sample count must be positive"));
    }
    if !(kl >= 0.0) {
        return Err(Error::argument(format!("KL divergence must be >= 0, got {kl}")));
    }
    let n = n as f64;
    Ok((kl + ((n + 1.0) / delta_i).ln()) / n)
}

/// `(2/N) ln(π²i²/(6δ))`, the union-bound term of the ε update.
pub fn confidence_term(n: u64, i: u64, delta: f64) -> f64 {
    (2.0 / n as f64) * (PI * PI * (i * i) as f64 / (6.0 * delta)).ln()
}

/// `εᵢ = (r̄ + (2/N) ln(π²i²/(6δ))) / (1 - F₁(1))`.
pub fn epsilon_schedule(r_bar: f64, n: u64, i: u64, delta: f64) -> f64 {
    central_concept_scale(r_bar + confidence_term(n, i, delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Classical,
    PacbayesKernel,
    PacbayesPoly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateStatus {
    /// The requested ε was reached.
    Certified,
    /// The iteration cap ran out first; trace values still hold.
    NonTerminated,
    /// No bound was evaluated, as when ε = 1 is requested.
    Vacuous,
    /// No guarantee attached (hand-built estimates).
    None,
}

/// One evaluated iteration of the PAC-Bayes loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u64,
    pub n_samples: u64,
    pub empirical_stochastic_risk: f64,
    pub kl_divergence: f64,
    pub delta_i: f64,
    pub kl_budget: f64,
    pub risk_upper_bound: f64,
    pub confidence_term: f64,
    pub epsilon_i: f64,
}

impl IterationRecord {
    pub fn evaluate(iteration: u64, n_samples: u64, q_hat: f64, kl: f64, delta: f64) -> Result<Self> {
        let delta_i = delta_budget(iteration, delta);
        let kl_budget = pacbayes_kl_budget(kl, n_samples, delta_i)?;
        let risk_upper_bound = kl_inverse_upper(q_hat, kl_budget);
        Ok(Self {
            iteration,
            n_samples,
            empirical_stochastic_risk: q_hat,
            kl_divergence: kl,
            delta_i,
            kl_budget,
            risk_upper_bound,
            confidence_term: confidence_term(n_samples, iteration, delta),
            epsilon_i: epsilon_schedule(risk_upper_bound, n_samples, iteration, delta),
        })
    }
}

/// The probabilistic guarantee attached to an estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacCertificate {
    pub format: u32,
    pub method: Method,
    pub status: CertificateStatus,
    /// Requested ε.
    pub target_epsilon: f64,
    /// ε actually attested: the target for the classical bound, the last
    /// trace value for PAC-Bayes, 1 when nothing was evaluated.
    pub epsilon: f64,
    pub delta: f64,
    pub n_samples: u64,
    pub trace: Vec<IterationRecord>,
}

impl PacCertificate {
    pub fn classical(epsilon: f64, delta: f64, n_samples: u64) -> Self {
        Self {
            format: 1,
            method: Method::Classical,
            status: CertificateStatus::Certified,
            target_epsilon: epsilon,
            epsilon,
            delta,
            n_samples,
            trace: Vec::new(),
        }
    }

    pub fn uncertified(n_samples: u64) -> Self {
        Self {
            format: 1,
            method: Method::Classical,
            status: CertificateStatus::None,
            target_epsilon: 1.0,
            epsilon: 1.0,
            delta: 1.0,
            n_samples,
            trace: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}
