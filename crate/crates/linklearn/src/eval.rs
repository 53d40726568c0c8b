//! Block-error-rate evaluation: SNR sweeps over a frozen link, plus CSV
//! export/import for curves and training logs.
//!
//! Evaluation is strictly read-only — the link under test is behind an
//! immutable reference and all forward passes run in inference mode — and
//! deterministic: each SNR point derives its own generator from the sweep
//! seed, so points are independent and a sweep reproduces bit-for-bit no
//! matter how the grid is partitioned across processes.

use crate::channel::{ChannelConfig, ChannelKind, ChannelRealization};
use crate::checkpoint::{Checkpoint, SystemKind};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::{
    assemble_receiver_input, init_receiver, init_transmitter, receiver_forward,
    transmitter_forward, NetworkSpec, ParameterSet, TrainMode,
};
use crate::signal::{
    block_error_rate, generate_message, round_to_bits, snr_to_noise_variance, Message,
};
use crate::train::{channel_layer_forward, draw_channel_batch, EpisodeRecord};
use ndarray::{Array2, Array3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::Path;

/// Anything that can act as a transmitter/receiver pair in a sweep. The
/// neural link implements it with inference-mode forward passes; the test
/// stubs implement it analytically.
pub trait LinkSystem {
    /// Bits per block.
    fn k(&self) -> usize;
    /// Encodes bit rows `[B, K]` into symbol blocks `[B, K, 2]`.
    fn transmit(&self, bits: &Array2<f64>) -> Result<Array3<f64>>;
    /// Decodes received blocks and per-row channel estimates into per-bit
    /// probabilities `[B, K]`.
    fn receive(&self, received: &Array3<f64>, hs: &[ChannelRealization]) -> Result<Array2<f64>>;
}

/// A trained transmitter/receiver pair, evaluated in inference mode.
pub struct NeuralLink {
    spec: NetworkSpec,
    transmitter: ParameterSet,
    receiver: ParameterSet,
}

impl NeuralLink {
    pub fn new(spec: NetworkSpec, transmitter: ParameterSet, receiver: ParameterSet) -> Self {
        Self { spec, transmitter, receiver }
    }

    /// Pulls the deployed pair out of a checkpoint: the actor of the
    /// reinforcement-learned system or the transmitter of the supervised
    /// baseline, plus the receiver, with shapes checked against the
    /// checkpoint's own config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let spec = ck.config.network_spec();
        let tx_key = match ck.system {
            SystemKind::Ddpg => "actor",
            SystemKind::Ae => "transmitter",
        };
        let fetch = |name: &str| -> Result<ParameterSet> {
            ck.params.get(name).cloned().ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("checkpoint lacks `{name}` parameters"))
            })
        };
        let transmitter = fetch(tx_key)?;
        let receiver = fetch("receiver")?;
        let mut probe = ChaCha8Rng::seed_from_u64(0);
        let expected_tx = init_transmitter(&spec.transmitter, &mut probe);
        let expected_rx = init_receiver(&spec.receiver, &mut probe);
        let describe = |p: &ParameterSet| -> Vec<(String, Vec<usize>)> {
            p.iter().map(|(n, v)| (n.to_string(), v.shape().to_vec())).collect()
        };
        if describe(&transmitter) != describe(&expected_tx)
            || describe(&receiver) != describe(&expected_rx)
        {
            return Err(Error::IncompatibleCheckpoint(
                "checkpoint parameters do not match its configured architecture".into(),
            ));
        }
        Ok(Self { spec, transmitter, receiver })
    }
}

impl LinkSystem for NeuralLink {
    fn k(&self) -> usize {
        self.spec.k()
    }

    fn transmit(&self, bits: &Array2<f64>) -> Result<Array3<f64>> {
        let (x, _) =
            transmitter_forward(&self.spec.transmitter, &self.transmitter, bits, TrainMode::Inference)?;
        Ok(x)
    }

    fn receive(&self, received: &Array3<f64>, hs: &[ChannelRealization]) -> Result<Array2<f64>> {
        let input = assemble_receiver_input(received, hs);
        let (probs, _) =
            receiver_forward(&self.spec.receiver, &self.receiver, &input, TrainMode::Inference);
        Ok(probs)
    }
}

/// Reference stub: antipodal per-bit modulation and a matched-filter
/// decision. Error-free whenever noise is absent, whatever the fading.
pub struct IdentityLink {
    pub k: usize,
}

impl LinkSystem for IdentityLink {
    fn k(&self) -> usize {
        self.k
    }

    fn transmit(&self, bits: &Array2<f64>) -> Result<Array3<f64>> {
        let (batch, k) = bits.dim();
        let mut x = Array3::zeros((batch, k, 2));
        for row in 0..batch {
            for t in 0..k {
                x[[row, t, 0]] = 2.0 * bits[[row, t]] - 1.0;
            }
        }
        Ok(x)
    }

    fn receive(&self, received: &Array3<f64>, hs: &[ChannelRealization]) -> Result<Array2<f64>> {
        let (batch, k, _) = received.dim();
        let mut probs = Array2::zeros((batch, k));
        for (row, h) in hs.iter().enumerate().take(batch) {
            for t in 0..k {
                // Rotate the fading away: Re(y * conj(h)) recovers the sign.
                let matched =
                    received[[row, t, 0]] * h.re + received[[row, t, 1]] * h.im;
                probs[[row, t]] = if matched > 0.0 { 1.0 } else { 0.0 };
            }
        }
        Ok(probs)
    }
}

/// Stub that has learned nothing: probability one half for every bit.
pub struct UninformativeLink {
    pub k: usize,
}

impl LinkSystem for UninformativeLink {
    fn k(&self) -> usize {
        self.k
    }

    fn transmit(&self, bits: &Array2<f64>) -> Result<Array3<f64>> {
        IdentityLink { k: self.k }.transmit(bits)
    }

    fn receive(&self, received: &Array3<f64>, _hs: &[ChannelRealization]) -> Result<Array2<f64>> {
        let (batch, k, _) = received.dim();
        Ok(Array2::from_elem((batch, k), 0.5))
    }
}

/// An SNR sweep: the grid, the per-point block budget, the channel, and the
/// seed every point derives its generator from.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub snr_start_db: f64,
    pub snr_end_db: f64,
    pub snr_step_db: f64,
    pub blocks: usize,
    pub channel: ChannelConfig,
    pub seed: u64,
}

impl SweepConfig {
    /// The sweep a training config asks for: its eval grid on its channel,
    /// seeded from the run seed.
    pub fn from_experiment(cfg: &ExperimentConfig) -> Self {
        Self {
            snr_start_db: cfg.eval.snr_start_db,
            snr_end_db: cfg.eval.snr_end_db,
            snr_step_db: cfg.eval.snr_step_db,
            blocks: cfg.eval.blocks,
            channel: cfg.channel.clone(),
            seed: cfg.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.snr_start_db.is_finite() && self.snr_end_db.is_finite()) {
            return Err(Error::InvalidArgument("SNR grid bounds must be finite".into()));
        }
        if !(self.snr_step_db.is_finite() && self.snr_step_db > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "SNR step must be positive, got {}",
                self.snr_step_db
            )));
        }
        if self.snr_end_db < self.snr_start_db {
            return Err(Error::InvalidArgument(format!(
                "SNR grid is empty: end {} below start {}",
                self.snr_end_db, self.snr_start_db
            )));
        }
        if self.blocks == 0 {
            return Err(Error::InvalidArgument("blocks per SNR point must be positive".into()));
        }
        self.channel.validate()
    }

    /// Ascending grid points `start, start + step, …` up to `end` (inclusive
    /// within a small tolerance, so 0..20 step 2 yields 11 points exactly).
    pub fn grid(&self) -> Vec<f64> {
        let count =
            ((self.snr_end_db - self.snr_start_db) / self.snr_step_db + 1e-9).floor() as usize + 1;
        (0..count).map(|i| self.snr_start_db + i as f64 * self.snr_step_db).collect()
    }
}

/// One measured point of a BLER curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlerRecord {
    pub snr_db: f64,
    pub bler: f64,
    pub ber: f64,
    pub num_blocks: usize,
}

/// A measured curve plus the context that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct BlerCurve {
    /// Human-readable origin, e.g. `ddpg@300` or a stub name.
    pub source: String,
    pub channel: ChannelKind,
    pub k: usize,
    pub seed: u64,
    pub records: Vec<BlerRecord>,
}

/// Generator seed for grid point `index`: the golden-ratio increment keeps
/// per-point streams decorrelated while staying reproducible from one seed.
fn point_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Measures BLER/BER for each grid point: fresh messages through transmit →
/// channel → receive → hard decision, then error counting over the whole
/// point. The link is immutable throughout.
pub fn evaluate_bler(
    link: &dyn LinkSystem,
    sweep: &SweepConfig,
    source: &str,
) -> Result<BlerCurve> {
    sweep.validate()?;
    let k = link.k();
    let grid = sweep.grid();
    // Batch enough blocks per forward pass to amortize the convolutions
    // without holding large intermediates.
    let chunk = (4096 / k).max(1);
    let mut records = Vec::with_capacity(grid.len());
    for (index, &snr_db) in grid.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(point_seed(sweep.seed, index));
        let noise_variance = snr_to_noise_variance(snr_db);
        let mut truth: Vec<Message> = Vec::with_capacity(sweep.blocks);
        let mut decoded: Vec<Message> = Vec::with_capacity(sweep.blocks);
        let mut remaining = sweep.blocks;
        while remaining > 0 {
            let batch = chunk.min(remaining);
            let messages: Vec<Message> = (0..batch)
                .map(|_| generate_message(k, &mut rng))
                .collect::<Result<_>>()?;
            let bits = crate::nn::messages_to_array(&messages);
            let x = link.transmit(&bits)?;
            let draws = draw_channel_batch(batch, k, &sweep.channel, &mut rng)?;
            let y = channel_layer_forward(&x, &draws, noise_variance);
            let probs = link.receive(&y, &draws.hs)?;
            for row in 0..batch {
                let estimate = round_to_bits(probs.row(row).as_slice().unwrap());
                decoded.push(Message::new(estimate)?);
            }
            truth.extend(messages);
            remaining -= batch;
        }
        let rates = block_error_rate(&truth, &decoded)?;
        records.push(BlerRecord {
            snr_db,
            bler: rates.bler,
            ber: rates.ber,
            num_blocks: sweep.blocks,
        });
    }
    Ok(BlerCurve {
        source: source.to_string(),
        channel: sweep.channel.kind,
        k,
        seed: sweep.seed,
        records,
    })
}

/// Sweeps a trained checkpoint (either system kind).
pub fn evaluate_checkpoint(ck: &Checkpoint, sweep: &SweepConfig) -> Result<BlerCurve> {
    let link = NeuralLink::from_checkpoint(ck)?;
    evaluate_bler(&link, sweep, &format!("{}@{}", ck.system, ck.episode))
}

/// Ten-significant-digit float formatting shared by every CSV this crate
/// writes; parsing the result and formatting again is byte-stable.
pub fn format_sig10(v: f64) -> String {
    format!("{v:.9e}")
}

pub const BLER_CSV_HEADER: &str = "snr_db,bler,ber,num_blocks";
pub const LOG_CSV_HEADER: &str = "episode,reward_sum,reward_mean,critic_loss,receiver_loss,seconds";

/// One curve row in the export schema.
fn bler_csv_row(r: &BlerRecord) -> String {
    format!(
        "{},{},{},{}",
        format_sig10(r.snr_db),
        format_sig10(r.bler),
        format_sig10(r.ber),
        r.num_blocks
    )
}

/// One log row in the export schema.
pub fn log_csv_row(r: &EpisodeRecord) -> String {
    format!(
        "{},{},{},{},{},{}",
        r.episode,
        format_sig10(r.reward_sum),
        format_sig10(r.reward_mean),
        format_sig10(r.critic_loss),
        format_sig10(r.receiver_loss),
        format_sig10(r.seconds)
    )
}

/// Writes a curve as CSV. An empty curve is an error and creates no file.
pub fn export_bler_csv(curve: &BlerCurve, path: &Path) -> Result<()> {
    if curve.records.is_empty() {
        return Err(Error::InvalidArgument(
            "refusing to export an empty curve".into(),
        ));
    }
    let mut text = String::from(BLER_CSV_HEADER);
    text.push('\n');
    for r in &curve.records {
        text.push_str(&bler_csv_row(r));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a curve CSV written by [`export_bler_csv`].
pub fn load_bler_csv(path: &Path) -> Result<Vec<BlerRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == BLER_CSV_HEADER => {}
        other => {
            return Err(Error::MalformedCsv(format!(
                "expected header `{BLER_CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedCsv(format!(
                "row {}: expected 4 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::MalformedCsv(format!("row {}: bad {what} `{s}`", i + 2))
            })
        };
        records.push(BlerRecord {
            snr_db: parse_f(fields[0], "snr_db")?,
            bler: parse_f(fields[1], "bler")?,
            ber: parse_f(fields[2], "ber")?,
            num_blocks: fields[3].parse().map_err(|_| {
                Error::MalformedCsv(format!("row {}: bad num_blocks `{}`", i + 2, fields[3]))
            })?,
        });
    }
    if records.is_empty() {
        return Err(Error::MalformedCsv("curve file holds no rows".into()));
    }
    Ok(records)
}

/// Writes a training log as CSV. An empty log is an error and creates no
/// file.
pub fn export_log_csv(records: &[EpisodeRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidArgument("refusing to export an empty log".into()));
    }
    let mut text = String::from(LOG_CSV_HEADER);
    text.push('\n');
    for r in records {
        text.push_str(&log_csv_row(r));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// Reads a log CSV written by [`export_log_csv`] (or streamed row by row).
pub fn load_log_csv(path: &Path) -> Result<Vec<EpisodeRecord>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(header) if header == LOG_CSV_HEADER => {}
        other => {
            return Err(Error::MalformedCsv(format!(
                "expected header `{LOG_CSV_HEADER}`, found {other:?}"
            )))
        }
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::MalformedCsv(format!(
                "row {}: expected 6 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse().map_err(|_| {
                Error::MalformedCsv(format!("row {}: bad {what} `{s}`", i + 2))
            })
        };
        records.push(EpisodeRecord {
            episode: fields[0].parse().map_err(|_| {
                Error::MalformedCsv(format!("row {}: bad episode `{}`", i + 2, fields[0]))
            })?,
            reward_sum: parse_f(fields[1], "reward_sum")?,
            reward_mean: parse_f(fields[2], "reward_mean")?,
            critic_loss: parse_f(fields[3], "critic_loss")?,
            receiver_loss: parse_f(fields[4], "receiver_loss")?,
            seconds: parse_f(fields[5], "seconds")?,
        });
    }
    if records.is_empty() {
        return Err(Error::MalformedCsv("log file holds no rows".into()));
    }
    Ok(records)
}
