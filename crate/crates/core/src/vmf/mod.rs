//! von Mises–Fisher likelihood on the unit hypersphere, the Gamma prior on
//! the concentration, and the per-pair negative log-posterior used to train
//! the language field.

pub mod bessel;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, UnitEmbedding};

pub use bessel::{bessel_ratio, ln_bessel_i};

pub const DEFAULT_KAPPA_MIN: f64 = 1e-3;
pub const DEFAULT_KAPPA_MAX: f64 = 1e4;

/// Interval the loss clamps κ into before evaluating the Bessel terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaRange {
    pub min: f64,
    pub max: f64,
}

impl Default for KappaRange {
    fn default() -> Self {
        KappaRange {
            min: DEFAULT_KAPPA_MIN,
            max: DEFAULT_KAPPA_MAX,
        }
    }
}

/// Mean direction and concentration of a vMF distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfParams {
    pub mu: UnitEmbedding,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mu: UnitEmbedding, kappa: f64) -> Result<Self> {
        check_kappa(kappa)?;
        Ok(VmfParams { mu, kappa })
    }
}

/// Gamma(α, β) prior on κ, rate parameterization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl GammaPrior {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite() && beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma prior needs finite alpha, beta > 0 (got {alpha}, {beta})"
            )));
        }
        Ok(GammaPrior { alpha, beta })
    }
}

impl Default for GammaPrior {
    /// α = 2, β = 0.5.
    fn default() -> Self {
        GammaPrior {
            alpha: 2.0,
            beta: 0.5,
        }
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa >= 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "kappa must be finite and >= 0, got {kappa}"
        )));
    }
    Ok(())
}

/// `ln C_d(κ)` with `C_d(κ) = κ^{d/2-1} / ((2π)^{d/2} I_{d/2-1}(κ))`.
///
/// Below the series cutoff the `κ^ν` factor is cancelled analytically against
/// the leading term of the Bessel series, so the value is continuous at κ = 0
/// where it equals the log of the uniform density on `S^{d-1}`.
pub fn log_norm_const(d: usize, kappa: f64) -> Result<f64> {
    if d < 2 {
        return Err(Error::InvalidArgument(format!(
            "vMF dimension must be >= 2, got {d}"
        )));
    }
    check_kappa(kappa)?;
    let half = d as f64 / 2.0;
    let nu = half - 1.0;
    if kappa < bessel::SERIES_CUTOFF.max(nu) {
        Ok(nu * 2f64.ln() + bessel::ln_gamma(nu + 1.0)
            - half * (2.0 * PI).ln()
            - bessel::ln_series_factor(nu, kappa))
    } else {
        Ok(nu * kappa.ln() - half * (2.0 * PI).ln() - ln_bessel_i(nu, kappa))
    }
}

/// `A_d(κ) = I_{d/2}(κ) / I_{d/2-1}(κ) = -∂ ln C_d / ∂κ`.
pub fn mean_resultant_length(d: usize, kappa: f64) -> f64 {
    bessel_ratio(d as f64 / 2.0 - 1.0, kappa)
}

pub fn vmf_log_pdf(z: &UnitEmbedding, p: &VmfParams) -> Result<f64> {
    if z.dim() != p.mu.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.mu.dim(),
            actual: z.dim(),
        });
    }
    Ok(log_norm_const(z.dim(), p.kappa)? + p.kappa * dot(p.mu.as_slice(), z.as_slice()))
}

/// `-ln p(κ)` for the Gamma prior, constants included.
pub fn gamma_neg_log_prior(kappa: f64, prior: &GammaPrior) -> Result<f64> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "prior needs kappa > 0, got {kappa}"
        )));
    }
    let GammaPrior { alpha, beta } = *prior;
    Ok(-alpha * beta.ln() + bessel::ln_gamma(alpha) - (alpha - 1.0) * kappa.ln() + beta * kappa)
}

/// Loss value and its partials with respect to the raw mean vector and κ.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfLoss {
    pub loss: f64,
    /// `∂loss/∂μ` treating μ as a free vector in `R^d`.
    pub d_mu: Vec<f64>,
    /// `∂loss/∂κ`; zero when κ was clamped into `range`.
    pub d_kappa: f64,
}

/// Negative log-posterior of one observation:
/// `-ln p(z | μ, κ) - ln p(κ)`.
///
/// κ is clamped into `range` first; the reported κ-gradient is zero when the
/// clamp is active.
pub fn vmf_loss(
    z_obs: &UnitEmbedding,
    p: &VmfParams,
    prior: &GammaPrior,
    range: KappaRange,
) -> Result<VmfLoss> {
    vmf_loss_raw(z_obs.as_slice(), p.mu.as_slice(), p.kappa, prior, range)
}

/// Same as [`vmf_loss`] on raw slices. `mu` need not be unit length; the
/// formula only uses `μ·z`.
pub fn vmf_loss_raw(
    z: &[f64],
    mu: &[f64],
    kappa: f64,
    prior: &GammaPrior,
    range: KappaRange,
) -> Result<VmfLoss> {
    if z.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            actual: z.len(),
        });
    }
    check_kappa(kappa)?;
    let d = z.len();
    let k = kappa.clamp(range.min, range.max);
    let clamped = k != kappa;
    let cos = dot(mu, z);
    let loss = -(log_norm_const(d, k)? + k * cos) + gamma_neg_log_prior(k, prior)?;
    let d_mu = z.iter().map(|zi| -k * zi).collect();
    let d_kappa = if clamped {
        0.0
    } else {
        mean_resultant_length(d, k) - cos - (prior.alpha - 1.0) / k + prior.beta
    };
    Ok(VmfLoss {
        loss,
        d_mu,
        d_kappa,
    })
}
