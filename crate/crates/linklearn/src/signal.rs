//! Messages, complex symbol blocks, and the scalar helpers shared by every
//! other module: power normalization, SNR conversion, hard bit decisions and
//! block/bit error counting.
//!
//! Conventions fixed here and relied on everywhere else:
//!
//! * A message is `K` bits, each 0 or 1, drawn i.i.d. uniform.
//! * An encoded block is `K` complex symbols with total power
//!   `sum_k |x_k|^2 = K` (unit average symbol power).
//! * `snr_db` measures the ratio of unit signal power to the *total* complex
//!   noise variance `N0`, so `N0 = 10^(-snr_db/10)` and each real noise
//!   component has variance `N0/2`.

use crate::error::{Error, Result};
use rand::Rng;

/// One fixed-length block of message bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    bits: Vec<u8>,
}

impl Message {
    /// Wraps a bit vector. Every entry must be 0 or 1.
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::InvalidArgument("message must have at least one bit".into()));
        }
        if let Some(b) = bits.iter().find(|&&b| b > 1) {
            return Err(Error::InvalidArgument(format!("message bits must be 0 or 1, got {b}")));
        }
        Ok(Self { bits })
    }

    /// Block length `K`.
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// The raw bits.
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Bits as `0.0`/`1.0`, the network input representation.
    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }
}

/// Draws `k` i.i.d. uniform bits from `rng` (one RNG word per bit, so the
/// stream position after a draw depends only on `k`).
pub fn generate_message<R: Rng + ?Sized>(k: usize, rng: &mut R) -> Result<Message> {
    if k == 0 {
        return Err(Error::InvalidArgument("block length must be at least 1".into()));
    }
    let bits = (0..k).map(|_| (rng.next_u64() & 1) as u8).collect();
    Ok(Message { bits })
}

/// Whether a complex block left the transmitter or the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockRole {
    /// Transmitter output; carries the total-power invariant.
    Encoded,
    /// Channel output; no power guarantee.
    Received,
}

/// A block of `K` complex samples, split into real and imaginary parts.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexBlock {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub role: BlockRole,
}

impl ComplexBlock {
    /// Builds a block with the given role. `re` and `im` must match in length
    /// and be non-empty.
    pub fn new(re: Vec<f64>, im: Vec<f64>, role: BlockRole) -> Result<Self> {
        if re.is_empty() || re.len() != im.len() {
            return Err(Error::InvalidArgument(format!(
                "complex block needs equal, non-zero re/im lengths (got {} and {})",
                re.len(),
                im.len()
            )));
        }
        Ok(Self { re, im, role })
    }

    /// Block length `K`.
    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Total power `sum_k |x_k|^2`.
    pub fn power(&self) -> f64 {
        block_power(&self.re, &self.im)
    }

    /// Checks the encoded-power invariant `|power - K| <= tol`.
    pub fn power_is_normalized(&self, tol: f64) -> bool {
        (self.power() - self.len() as f64).abs() <= tol
    }

    /// Row-major flatten of the `K x 2` (re, im) matrix:
    /// `[re_0, im_0, re_1, im_1, ...]`. This is the action-vector convention
    /// used by the critic and the replay buffer.
    pub fn interleaved(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.len());
        for k in 0..self.len() {
            v.push(self.re[k]);
            v.push(self.im[k]);
        }
        v
    }

    /// Inverse of [`ComplexBlock::interleaved`].
    pub fn from_interleaved(flat: &[f64], role: BlockRole) -> Result<Self> {
        if flat.is_empty() || flat.len() % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "interleaved block needs an even, non-zero length (got {})",
                flat.len()
            )));
        }
        let k = flat.len() / 2;
        let mut re = Vec::with_capacity(k);
        let mut im = Vec::with_capacity(k);
        for i in 0..k {
            re.push(flat[2 * i]);
            im.push(flat[2 * i + 1]);
        }
        Ok(Self { re, im, role })
    }
}

/// Total power `sum_k (re_k^2 + im_k^2)`.
pub fn block_power(re: &[f64], im: &[f64]) -> f64 {
    re.iter().map(|x| x * x).sum::<f64>() + im.iter().map(|x| x * x).sum::<f64>()
}

/// Scales a block to total power `K` (unit average symbol power):
/// `x <- sqrt(K) * x / ||x||`. An all-zero block has no direction to keep and
/// is rejected.
pub fn normalize_power(re: &[f64], im: &[f64]) -> Result<ComplexBlock> {
    if re.is_empty() || re.len() != im.len() {
        return Err(Error::InvalidArgument(format!(
            "normalize_power needs equal, non-zero re/im lengths (got {} and {})",
            re.len(),
            im.len()
        )));
    }
    let p = block_power(re, im);
    if p == 0.0 {
        return Err(Error::DegenerateInput("cannot power-normalize an all-zero block".into()));
    }
    let s = (re.len() as f64 / p).sqrt();
    Ok(ComplexBlock {
        re: re.iter().map(|x| x * s).collect(),
        im: im.iter().map(|x| x * s).collect(),
        role: BlockRole::Encoded,
    })
}

/// Total complex noise variance `N0` for a given SNR in dB at unit signal
/// power: `N0 = 10^(-snr_db/10)`. Each real component then has variance
/// `N0/2`.
pub fn snr_to_noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

/// Hard decision on per-bit probabilities: `p >= 0.5` maps to 1 (ties round
/// up), anything below to 0.
pub fn round_to_bits(probs: &[f64]) -> Vec<u8> {
    probs.iter().map(|&p| u8::from(p >= 0.5)).collect()
}

/// Block and bit error rates of `estimate` against `truth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorRates {
    /// Fraction of blocks with at least one wrong bit.
    pub bler: f64,
    /// Fraction of wrong bits.
    pub ber: f64,
}

/// Counts block and bit errors over paired batches. A block is in error when
/// any of its bits differs, so `bler >= ber` always.
pub fn block_error_rate(truth: &[Message], estimate: &[Message]) -> Result<ErrorRates> {
    if truth.is_empty() {
        return Err(Error::InvalidArgument("block_error_rate needs at least one block".into()));
    }
    if truth.len() != estimate.len() {
        return Err(Error::InvalidArgument(format!(
            "batch size mismatch: {} truth vs {} estimate blocks",
            truth.len(),
            estimate.len()
        )));
    }
    let mut block_errors = 0usize;
    let mut bit_errors = 0usize;
    let mut bits_total = 0usize;
    for (t, e) in truth.iter().zip(estimate) {
        if t.len() != e.len() {
            return Err(Error::InvalidArgument(format!(
                "block length mismatch: {} vs {}",
                t.len(),
                e.len()
            )));
        }
        let wrong = t.bits().iter().zip(e.bits()).filter(|(a, b)| a != b).count();
        if wrong > 0 {
            block_errors += 1;
        }
        bit_errors += wrong;
        bits_total += t.len();
    }
    Ok(ErrorRates {
        bler: block_errors as f64 / truth.len() as f64,
        ber: bit_errors as f64 / bits_total as f64,
    })
}
