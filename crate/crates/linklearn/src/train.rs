//! Training loops.
//!
//! [`TrainSession`] runs the reinforcement-learned link: episodes of `T`
//! steps, each performing — in this order — action selection, channel and
//! receiver forward, reward computation, transition storage, one agent
//! update (critic regression + policy step + soft target updates) and one
//! supervised receiver update on replayed actions. The transmitter never
//! sees a channel gradient; the scalar reward is its only feedback.
//!
//! [`BaselineSession`] trains the same transmitter and receiver
//! architectures as a conventional autoencoder: the mean cross-entropy is
//! backpropagated through a differentiable channel layer (fading rotation
//! plus reparameterized additive noise), which is exactly the genie
//! assumption the reinforcement path avoids. Channel simulation, metrics and
//! logging are shared between the two so their results are comparable.
//!
//! Both sessions are strictly single-threaded and deterministic given the
//! config seed: every random draw — initialization, bits, fading, noise,
//! replay sampling — comes from one counter-based generator in a fixed
//! order, so a run can be checkpointed and resumed bit-exactly.

use crate::agent::{compute_reward, DdpgAgent, ReplayBuffer, Transition, PROB_CLIP};
use crate::channel::{apply_channel, sample_channel, ChannelConfig, ChannelRealization};
use crate::checkpoint::{BufferSnapshot, Checkpoint, RngSnapshot, SystemKind};
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::{
    assemble_receiver_input, init_receiver, init_transmitter, messages_to_array,
    receiver_backward, receiver_forward, transmitter_backward, transmitter_forward, AdamParams,
    AdamState, Gradients, NetworkSpec, ParameterSet, ReceiverCache, ReceiverSpec, TrainMode,
    TransmitterCache,
};
use crate::signal::{generate_message, snr_to_noise_variance, Message};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::time::Instant;

/// One completed episode's aggregate numbers, in the order they appear in
/// the log CSV. Loss columns are NaN for episodes in which no update of that
/// kind ran (replay buffer still filling).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// 1-based episode index.
    pub episode: u64,
    /// Sum of per-step rewards over the episode.
    pub reward_sum: f64,
    /// `reward_sum` divided by the number of steps.
    pub reward_mean: f64,
    /// Mean critic regression loss over the agent updates that ran.
    pub critic_loss: f64,
    /// Mean receiver cross-entropy over the receiver updates that ran.
    pub receiver_loss: f64,
    /// Wall-clock episode duration.
    pub seconds: f64,
}

/// Mean clipped binary cross-entropy over every element, plus its gradient
/// with respect to the raw probabilities.
///
/// The loss value clamps probabilities to `[PROB_CLIP, 1 - PROB_CLIP]` — the
/// same convention as the reward — so a saturated output scores a large but
/// finite penalty. The gradient is computed from the unclamped probability;
/// the sigmoid that produced it keeps values strictly inside (0, 1), and the
/// downstream sigmoid backward multiplies by `p(1-p)`, cancelling the
/// denominator analytically.
pub fn bce_mean_and_grad(probs: &Array2<f64>, bits: &Array2<f64>) -> (f64, Array2<f64>) {
    assert_eq!(probs.dim(), bits.dim(), "probabilities and bits must align");
    let count = probs.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(probs.raw_dim());
    ndarray::Zip::from(&mut grad).and(probs).and(bits).for_each(|g, &p, &b| {
        let pc = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        loss -= b * pc.ln() + (1.0 - b) * (1.0 - pc).ln();
        *g = (p - b) / (p * (1.0 - p)) / count;
    });
    (loss / count, grad)
}

fn mean_or_nan(sum: f64, n: usize) -> f64 {
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

/// One supervised receiver update (the decoder half of the training loop):
/// samples a batch of stored (state, action) pairs, passes each action
/// through a fresh channel realization and fresh noise at the training SNR,
/// and takes one Adam step on the mean cross-entropy against the stored
/// bits, with the true `h` supplied as the channel estimate. Returns the
/// pre-update loss.
///
/// The buffer stores actions, not received signals, so replayed actions see
/// new channel conditions every time — the receiver learns the mapping, not
/// the realizations.
#[allow(clippy::too_many_arguments)]
pub fn train_receiver_step<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    spec: &ReceiverSpec,
    params: &mut ParameterSet,
    opt: &mut AdamState,
    channel: &ChannelConfig,
    noise_variance: f64,
    lr: f64,
    rng: &mut R,
) -> Result<f64> {
    let indices = buffer.sample_indices(rng)?;
    let batch = indices.len();
    let k = buffer.get(indices[0]).state.len();
    let mut bits = Array2::zeros((batch, k));
    let mut received = Array3::zeros((batch, k, 2));
    let mut hs = Vec::with_capacity(batch);
    for (row, &idx) in indices.iter().enumerate() {
        let t = buffer.get(idx);
        let h = sample_channel(channel, rng)?;
        let y = apply_channel(&t.action, &h, noise_variance, rng)?;
        for (j, (&re, &im)) in y.re.iter().zip(y.im.iter()).enumerate() {
            received[[row, j, 0]] = re;
            received[[row, j, 1]] = im;
        }
        for (j, &bit) in t.state.bits().iter().enumerate() {
            bits[[row, j]] = f64::from(bit);
        }
        hs.push(h);
    }
    let input = assemble_receiver_input(&received, &hs);
    let (probs, cache) = receiver_forward(spec, params, &input, TrainMode::Training);
    let (loss, d_probs) = bce_mean_and_grad(&probs, &bits);
    if !loss.is_finite() {
        return Err(Error::NumericalDivergence {
            what: "receiver training loss".into(),
            batch_index: None,
        });
    }
    let (grads, _) = receiver_backward(spec, params, &cache, &d_probs);
    if !grads.all_finite() {
        return Err(Error::NumericalDivergence {
            what: "receiver gradients".into(),
            batch_index: None,
        });
    }
    opt.step(params, &grads, &AdamParams::with_lr(lr));
    cache.commit_bn(spec, params);
    Ok(loss)
}

/// Verifies that a loaded parameter set has exactly the names and shapes the
/// configured architecture expects.
fn check_architecture(name: &str, loaded: &ParameterSet, expected: &ParameterSet) -> Result<()> {
    let describe = |p: &ParameterSet| -> Vec<(String, Vec<usize>)> {
        p.iter().map(|(n, v)| (n.to_string(), v.shape().to_vec())).collect()
    };
    if describe(loaded) != describe(expected) {
        return Err(Error::IncompatibleCheckpoint(format!(
            "`{name}` parameters do not match the configured architecture \
             (check k and width_scale)"
        )));
    }
    Ok(())
}

/// The reinforcement-learning training state: agent (actor, critic, targets,
/// replay buffer), receiver, their optimizers, and the random stream.
pub struct TrainSession {
    cfg: ExperimentConfig,
    spec: NetworkSpec,
    pub agent: DdpgAgent,
    pub receiver: ParameterSet,
    pub receiver_opt: AdamState,
    rng: ChaCha8Rng,
    episodes_done: u64,
}

impl TrainSession {
    /// Fresh session: networks initialized from the config seed in a fixed
    /// order (actor, critic, receiver).
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.network_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = DdpgAgent::new(spec.clone(), cfg.agent, &mut rng)?;
        let receiver = init_receiver(&spec.receiver, &mut rng);
        Ok(Self {
            cfg,
            spec,
            agent,
            receiver,
            receiver_opt: AdamState::new(),
            rng,
            episodes_done: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Episodes completed so far.
    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    /// Runs one episode of `T` steps and returns its aggregate record.
    ///
    /// A non-finite loss or gradient aborts with a divergence error before
    /// the offending update is applied, so the session still holds the last
    /// healthy state and can be checkpointed for post-mortem inspection.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let start = Instant::now();
        let k = self.cfg.train.k;
        let steps = self.cfg.train.steps_per_episode;
        let noise_variance = snr_to_noise_variance(self.cfg.train.snr_db);
        let exploration = self.cfg.agent.exploration_noise_std;
        let mut state = generate_message(k, &mut self.rng)?;
        let mut reward_sum = 0.0;
        let mut critic_sum = 0.0;
        let mut critic_n = 0usize;
        let mut receiver_sum = 0.0;
        let mut receiver_n = 0usize;
        for t in 1..=steps {
            let action = self.agent.select_action(&state, exploration, &mut self.rng)?;
            let h = sample_channel(&self.cfg.channel, &mut self.rng)?;
            let y = apply_channel(&action, &h, noise_variance, &mut self.rng)?;
            // Reward: the receiver's current belief about the sent bits.
            // Inference mode — a batch of one carries no usable batch
            // statistics, and acting must not perturb the receiver's state.
            let mut received = Array3::zeros((1, k, 2));
            for (j, (&re, &im)) in y.re.iter().zip(y.im.iter()).enumerate() {
                received[[0, j, 0]] = re;
                received[[0, j, 1]] = im;
            }
            let input = assemble_receiver_input(&received, std::slice::from_ref(&h));
            let (probs, _) =
                receiver_forward(&self.spec.receiver, &self.receiver, &input, TrainMode::Inference);
            let p: Vec<f64> = probs.row(0).to_vec();
            let reward = compute_reward(&state, &p)?;
            let next_state = generate_message(k, &mut self.rng)?;
            self.agent.buffer.store(Transition {
                state,
                action,
                reward,
                next_state: next_state.clone(),
                done: t == steps,
            });
            match self.agent.train_step(&mut self.rng) {
                Ok(stats) => {
                    critic_sum += stats.critic_loss;
                    critic_n += 1;
                }
                Err(Error::BufferNotReady { .. }) => {}
                Err(e) => return Err(e),
            }
            match train_receiver_step(
                &self.agent.buffer,
                &self.spec.receiver,
                &mut self.receiver,
                &mut self.receiver_opt,
                &self.cfg.channel,
                noise_variance,
                self.cfg.train.receiver_lr,
                &mut self.rng,
            ) {
                Ok(loss) => {
                    receiver_sum += loss;
                    receiver_n += 1;
                }
                Err(Error::BufferNotReady { .. }) => {}
                Err(e) => return Err(e),
            }
            reward_sum += reward;
            state = next_state;
        }
        self.episodes_done += 1;
        Ok(EpisodeRecord {
            episode: self.episodes_done,
            reward_sum,
            reward_mean: reward_sum / steps as f64,
            critic_loss: mean_or_nan(critic_sum, critic_n),
            receiver_loss: mean_or_nan(receiver_sum, receiver_n),
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    /// Snapshots the complete session state for exact resumption.
    pub fn checkpoint(&self) -> Checkpoint {
        let mut params = BTreeMap::new();
        params.insert("actor".to_string(), self.agent.actor.clone());
        params.insert("critic".to_string(), self.agent.critic.clone());
        params.insert("target_actor".to_string(), self.agent.target_actor.clone());
        params.insert("target_critic".to_string(), self.agent.target_critic.clone());
        params.insert("receiver".to_string(), self.receiver.clone());
        let mut opts = BTreeMap::new();
        opts.insert("actor".to_string(), self.agent.actor_opt.clone());
        opts.insert("critic".to_string(), self.agent.critic_opt.clone());
        opts.insert("receiver".to_string(), self.receiver_opt.clone());
        Checkpoint {
            system: SystemKind::Ddpg,
            episode: self.episodes_done,
            config: self.cfg.clone(),
            rng: RngSnapshot::capture(&self.rng),
            params,
            opts,
            buffer: Some(BufferSnapshot {
                capacity: self.agent.buffer.capacity(),
                batch: self.agent.buffer.batch_size(),
                write: self.agent.buffer.write_cursor(),
                transitions: self.agent.buffer.iter().cloned().collect(),
            }),
        }
    }

    /// Rebuilds a session from a checkpoint; the next [`run_episode`]
    /// continues exactly where the saved run stopped.
    ///
    /// [`run_episode`]: TrainSession::run_episode
    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.system != SystemKind::Ddpg {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds a `{}` system, expected `ddpg`",
                ck.system
            )));
        }
        let cfg = ck.config;
        cfg.validate()?;
        let spec = cfg.network_spec();
        // Reference shapes for compatibility checking (draws are discarded).
        let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
        let expected_tx = init_transmitter(&spec.transmitter, &mut probe_rng);
        let expected_rx = init_receiver(&spec.receiver, &mut probe_rng);
        let expected_critic = crate::nn::init_critic(&spec.critic, &mut probe_rng);

        let mut params = ck.params;
        let mut take = |name: &str| -> Result<ParameterSet> {
            params.remove(name).ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("checkpoint lacks `{name}` parameters"))
            })
        };
        let actor = take("actor")?;
        let critic = take("critic")?;
        let target_actor = take("target_actor")?;
        let target_critic = take("target_critic")?;
        let receiver = take("receiver")?;
        check_architecture("actor", &actor, &expected_tx)?;
        check_architecture("critic", &critic, &expected_critic)?;
        check_architecture("target_actor", &target_actor, &expected_tx)?;
        check_architecture("target_critic", &target_critic, &expected_critic)?;
        check_architecture("receiver", &receiver, &expected_rx)?;

        let mut opts = ck.opts;
        let mut take_opt = |name: &str| -> Result<AdamState> {
            opts.remove(name).ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("checkpoint lacks `{name}` optimizer state"))
            })
        };
        let actor_opt = take_opt("actor")?;
        let critic_opt = take_opt("critic")?;
        let receiver_opt = take_opt("receiver")?;

        let snapshot = ck.buffer.ok_or_else(|| {
            Error::IncompatibleCheckpoint("checkpoint lacks the replay buffer".into())
        })?;
        let buffer = ReplayBuffer::from_parts(
            snapshot.capacity,
            snapshot.batch,
            snapshot.transitions,
            snapshot.write,
        )?;
        let agent = DdpgAgent::from_parts(
            spec.clone(),
            cfg.agent,
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
            buffer,
        )?;
        Ok(Self {
            cfg,
            spec,
            agent,
            receiver,
            receiver_opt,
            rng: ck.rng.restore(),
            episodes_done: ck.episode,
        })
    }
}

/// Runs a full training job from a fresh session, invoking `on_episode`
/// after each episode (for streaming logs). Returns the complete log and the
/// final state.
pub fn run_training<F>(
    cfg: &ExperimentConfig,
    mut on_episode: F,
) -> Result<(Vec<EpisodeRecord>, Checkpoint)>
where
    F: FnMut(&EpisodeRecord) -> Result<()>,
{
    let mut session = TrainSession::new(cfg.clone())?;
    let mut log = Vec::with_capacity(cfg.train.episodes);
    for _ in 0..cfg.train.episodes {
        let record = session.run_episode()?;
        on_episode(&record)?;
        log.push(record);
    }
    Ok((log, session.checkpoint()))
}

/// Per-row channel draws for one supervised step: a fading realization and a
/// unit-variance noise tensor (scaled by the noise level when applied).
pub struct ChannelDraws {
    pub hs: Vec<ChannelRealization>,
    /// Standard-normal draws, `[B, K, 2]`.
    pub noise: Array3<f64>,
}

/// Draws fading and noise for a batch in the canonical order: per row, the
/// fading realization first, then the 2K noise components interleaved
/// (re, im) per symbol.
pub fn draw_channel_batch<R: Rng + ?Sized>(
    batch: usize,
    k: usize,
    channel: &ChannelConfig,
    rng: &mut R,
) -> Result<ChannelDraws> {
    let mut hs = Vec::with_capacity(batch);
    let mut noise = Array3::zeros((batch, k, 2));
    for row in 0..batch {
        hs.push(sample_channel(channel, rng)?);
        for t in 0..k {
            noise[[row, t, 0]] = rng.sample(StandardNormal);
            noise[[row, t, 1]] = rng.sample(StandardNormal);
        }
    }
    Ok(ChannelDraws { hs, noise })
}

/// Differentiable channel layer: `y = h·x + w` per row with the given draws,
/// noise scaled to total variance `noise_variance` per symbol.
pub fn channel_layer_forward(
    x: &Array3<f64>,
    draws: &ChannelDraws,
    noise_variance: f64,
) -> Array3<f64> {
    let (batch, k, _) = x.dim();
    let w = (noise_variance / 2.0).sqrt();
    let mut y = Array3::zeros(x.raw_dim());
    for (row, h) in draws.hs.iter().enumerate().take(batch) {
        for t in 0..k {
            let (re, im) = (x[[row, t, 0]], x[[row, t, 1]]);
            y[[row, t, 0]] = h.re * re - h.im * im + w * draws.noise[[row, t, 0]];
            y[[row, t, 1]] = h.re * im + h.im * re + w * draws.noise[[row, t, 1]];
        }
    }
    y
}

/// Gradient of the channel layer with respect to its input: the complex
/// multiplication by `h` transposes to multiplication by its conjugate; the
/// additive noise passes gradients through unchanged.
pub fn channel_layer_backward(d_y: &Array3<f64>, draws: &ChannelDraws) -> Array3<f64> {
    let (batch, k, _) = d_y.dim();
    let mut d_x = Array3::zeros(d_y.raw_dim());
    for (row, h) in draws.hs.iter().enumerate().take(batch) {
        for t in 0..k {
            let (dre, dim) = (d_y[[row, t, 0]], d_y[[row, t, 1]]);
            d_x[[row, t, 0]] = h.re * dre + h.im * dim;
            d_x[[row, t, 1]] = -h.im * dre + h.re * dim;
        }
    }
    d_x
}

/// End-to-end supervised forward pass with fixed channel draws: transmitter
/// → channel layer → receiver (true `h` as the estimate) → mean clipped
/// cross-entropy.
pub fn baseline_forward(
    spec: &NetworkSpec,
    transmitter: &ParameterSet,
    receiver: &ParameterSet,
    bits: &Array2<f64>,
    draws: &ChannelDraws,
    noise_variance: f64,
    mode: TrainMode,
) -> Result<(f64, Array2<f64>, TransmitterCache, ReceiverCache)> {
    let (x, tx_cache) = transmitter_forward(&spec.transmitter, transmitter, bits, mode)?;
    let y = channel_layer_forward(&x, draws, noise_variance);
    let input = assemble_receiver_input(&y, &draws.hs);
    let (probs, rx_cache) = receiver_forward(&spec.receiver, receiver, &input, mode);
    let (loss, _) = bce_mean_and_grad(&probs, bits);
    Ok((loss, probs, tx_cache, rx_cache))
}

/// Gradients of the supervised loss for both networks, given the caches of
/// [`baseline_forward`]. The received-signal columns of the receiver's input
/// gradient flow back through the channel layer into the transmitter; the
/// channel-estimate columns have no upstream parameters.
pub fn baseline_backward(
    spec: &NetworkSpec,
    transmitter: &ParameterSet,
    receiver: &ParameterSet,
    bits: &Array2<f64>,
    probs: &Array2<f64>,
    tx_cache: &TransmitterCache,
    rx_cache: &ReceiverCache,
    draws: &ChannelDraws,
) -> (Gradients, Gradients) {
    let (_, d_probs) = bce_mean_and_grad(probs, bits);
    let (rx_grads, d_input) = receiver_backward(&spec.receiver, receiver, rx_cache, &d_probs);
    let (batch, k, _) = d_input.dim();
    let mut d_y = Array3::zeros((batch, k, 2));
    for row in 0..batch {
        for t in 0..k {
            d_y[[row, t, 0]] = d_input[[row, t, 0]];
            d_y[[row, t, 1]] = d_input[[row, t, 1]];
        }
    }
    let d_x = channel_layer_backward(&d_y, draws);
    let tx_grads = transmitter_backward(&spec.transmitter, transmitter, tx_cache, &d_x);
    (tx_grads, rx_grads)
}

/// The supervised autoencoder baseline: the same architectures, channel and
/// logging as [`TrainSession`], but the transmitter is updated by
/// backpropagation through the channel instead of a learned critic.
pub struct BaselineSession {
    cfg: ExperimentConfig,
    spec: NetworkSpec,
    pub transmitter: ParameterSet,
    pub receiver: ParameterSet,
    pub transmitter_opt: AdamState,
    pub receiver_opt: AdamState,
    rng: ChaCha8Rng,
    episodes_done: u64,
}

impl BaselineSession {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.network_spec();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let transmitter = init_transmitter(&spec.transmitter, &mut rng);
        let receiver = init_receiver(&spec.receiver, &mut rng);
        Ok(Self {
            cfg,
            spec,
            transmitter,
            receiver,
            transmitter_opt: AdamState::new(),
            receiver_opt: AdamState::new(),
            rng,
            episodes_done: 0,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn episodes_done(&self) -> u64 {
        self.episodes_done
    }

    /// One episode of `T` joint gradient steps on fresh batches. Both
    /// networks share one learning rate (`train.receiver_lr`). The reward
    /// column logs the negated per-block cross-entropy sum, matching the
    /// reinforcement path's reward scale; the critic column stays NaN.
    pub fn run_episode(&mut self) -> Result<EpisodeRecord> {
        let start = Instant::now();
        let k = self.cfg.train.k;
        let steps = self.cfg.train.steps_per_episode;
        let batch = self.cfg.agent.batch_size;
        let noise_variance = snr_to_noise_variance(self.cfg.train.snr_db);
        let lr = AdamParams::with_lr(self.cfg.train.receiver_lr);
        let mut reward_sum = 0.0;
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let messages: Vec<Message> = (0..batch)
                .map(|_| generate_message(k, &mut self.rng))
                .collect::<Result<_>>()?;
            let bits = messages_to_array(&messages);
            let draws = draw_channel_batch(batch, k, &self.cfg.channel, &mut self.rng)?;
            let (loss, probs, tx_cache, rx_cache) = baseline_forward(
                &self.spec,
                &self.transmitter,
                &self.receiver,
                &bits,
                &draws,
                noise_variance,
                TrainMode::Training,
            )?;
            if !loss.is_finite() {
                return Err(Error::NumericalDivergence {
                    what: "baseline loss".into(),
                    batch_index: None,
                });
            }
            let (tx_grads, rx_grads) = baseline_backward(
                &self.spec,
                &self.transmitter,
                &self.receiver,
                &bits,
                &probs,
                &tx_cache,
                &rx_cache,
                &draws,
            );
            if !tx_grads.all_finite() || !rx_grads.all_finite() {
                return Err(Error::NumericalDivergence {
                    what: "baseline gradients".into(),
                    batch_index: None,
                });
            }
            self.transmitter_opt.step(&mut self.transmitter, &tx_grads, &lr);
            self.receiver_opt.step(&mut self.receiver, &rx_grads, &lr);
            tx_cache.commit_bn(&self.spec.transmitter, &mut self.transmitter);
            rx_cache.commit_bn(&self.spec.receiver, &mut self.receiver);
            loss_sum += loss;
            reward_sum += -(k as f64) * loss;
        }
        self.episodes_done += 1;
        Ok(EpisodeRecord {
            episode: self.episodes_done,
            reward_sum,
            reward_mean: reward_sum / steps as f64,
            critic_loss: f64::NAN,
            receiver_loss: loss_sum / steps as f64,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        let mut params = BTreeMap::new();
        params.insert("transmitter".to_string(), self.transmitter.clone());
        params.insert("receiver".to_string(), self.receiver.clone());
        let mut opts = BTreeMap::new();
        opts.insert("transmitter".to_string(), self.transmitter_opt.clone());
        opts.insert("receiver".to_string(), self.receiver_opt.clone());
        Checkpoint {
            system: SystemKind::Ae,
            episode: self.episodes_done,
            config: self.cfg.clone(),
            rng: RngSnapshot::capture(&self.rng),
            params,
            opts,
            buffer: None,
        }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.system != SystemKind::Ae {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds a `{}` system, expected `ae`",
                ck.system
            )));
        }
        let cfg = ck.config;
        cfg.validate()?;
        let spec = cfg.network_spec();
        let mut probe_rng = ChaCha8Rng::seed_from_u64(0);
        let expected_tx = init_transmitter(&spec.transmitter, &mut probe_rng);
        let expected_rx = init_receiver(&spec.receiver, &mut probe_rng);
        let mut params = ck.params;
        let mut take = |name: &str| -> Result<ParameterSet> {
            params.remove(name).ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("checkpoint lacks `{name}` parameters"))
            })
        };
        let transmitter = take("transmitter")?;
        let receiver = take("receiver")?;
        check_architecture("transmitter", &transmitter, &expected_tx)?;
        check_architecture("receiver", &receiver, &expected_rx)?;
        let mut opts = ck.opts;
        let mut take_opt = |name: &str| -> Result<AdamState> {
            opts.remove(name).ok_or_else(|| {
                Error::IncompatibleCheckpoint(format!("checkpoint lacks `{name}` optimizer state"))
            })
        };
        let transmitter_opt = take_opt("transmitter")?;
        let receiver_opt = take_opt("receiver")?;
        Ok(Self {
            cfg,
            spec,
            transmitter,
            receiver,
            transmitter_opt,
            receiver_opt,
            rng: ck.rng.restore(),
            episodes_done: ck.episode,
        })
    }
}

/// Runs the supervised baseline end to end, mirroring [`run_training`].
pub fn run_baseline<F>(
    cfg: &ExperimentConfig,
    mut on_episode: F,
) -> Result<(Vec<EpisodeRecord>, Checkpoint)>
where
    F: FnMut(&EpisodeRecord) -> Result<()>,
{
    let mut session = BaselineSession::new(cfg.clone())?;
    let mut log = Vec::with_capacity(cfg.train.episodes);
    for _ in 0..cfg.train.episodes {
        let record = session.run_episode()?;
        on_episode(&record)?;
        log.push(record);
    }
    Ok((log, session.checkpoint()))
}
