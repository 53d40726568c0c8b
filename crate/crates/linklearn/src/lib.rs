//! End-to-end learned transceivers over simulated fading channels.
//!
//! A neural transmitter maps a block of `K` message bits to `K` complex
//! symbols under a total power constraint; a neural receiver maps the faded,
//! noisy observation (plus perfect channel knowledge) back to per-bit
//! probabilities. The pair is trained without a differentiable channel model:
//! the transmitter is the actor of a DDPG agent whose only feedback is a
//! scalar reward — the negative binary cross-entropy of the receiver on the
//! transmitted block — while the receiver trains supervised on replayed
//! transmissions. A conventional autoencoder baseline (backpropagation
//! straight through the channel) is included for comparison.
//!
//! Crate layout:
//!
//! * [`signal`] — messages, complex blocks, power normalization, SNR/error-rate helpers
//! * [`channel`] — AWGN / Rayleigh / Rician block fading, amplitude densities
//! * [`nn`] — the three network architectures with exact hand-rolled backward passes
//! * [`agent`] — replay buffer, reward, critic/actor updates, target tracking
//! * [`train`] — the episode/step training loops (DDPG and supervised baseline)
//! * [`eval`] — BLER/BER sweeps over an SNR grid, CSV export/import
//! * [`plot`] — SVG line charts for logs and curves
//! * [`config`] — TOML experiment configuration with `paper`/`desk` profiles
//! * [`checkpoint`] — binary checkpoint container with bit-exact round-trips
//! * [`cli`] — the `linklearn` command-line entry point

// Training churns short-lived array buffers (layer activations, gradient
// caches) between long-lived replay-buffer entries. glibc's arena heuristics
// handle that pattern badly — the arena is pinned by the persistent
// allocations and grows without bound — so every binary linking this crate
// uses mimalloc, which returns freed segments to the OS.
#[cfg(not(target_env = "msvc"))]
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod agent;
pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod nn;
pub mod plot;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
