//! The deterministic-policy-gradient learner: reward, replay buffer,
//! behaviour/target actor and critic, and the three update rules.
//!
//! The transmitter (actor) never sees channel gradients. Its only training
//! signal is the scalar reward — the negated receiver cross-entropy — routed
//! through the critic's action gradient.

use crate::error::{Error, Result};
use crate::nn::{
    critic_backward, critic_forward, init_critic, init_transmitter, messages_to_array,
    transmitter_backward, transmitter_forward, AdamParams, AdamState, NetworkSpec, ParameterSet,
    TrainMode,
};
use crate::signal::{normalize_power, BlockRole, ComplexBlock, Message};
use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// Receiver probabilities are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before
/// any logarithm, in the reward and in every cross-entropy loss.
pub const PROB_CLIP: f64 = 1e-7;

/// One interaction with the channel environment.
///
/// `done` marks the artificial end of a fixed-length episode; it is stored
/// for bookkeeping but deliberately ignored by the Bellman target, because
/// consecutive states are independent random messages rather than stages of
/// a task that terminates.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Message,
    pub action: ComplexBlock,
    pub reward: f64,
    pub next_state: Message,
    pub done: bool,
}

/// Bounded FIFO of transitions with uniform without-replacement sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    batch: usize,
    items: Vec<Transition>,
    /// Slot that the next insertion overwrites once the buffer is full; while
    /// filling it stays at 0, which is also the oldest entry.
    write: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, batch: usize) -> Result<Self> {
        if capacity == 0 || batch == 0 {
            return Err(Error::InvalidArgument(
                "replay buffer capacity and batch size must be positive".into(),
            ));
        }
        if batch > capacity {
            return Err(Error::InvalidArgument(format!(
                "batch size {batch} exceeds buffer capacity {capacity}"
            )));
        }
        Ok(Self { capacity, batch, items: Vec::new(), write: 0 })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// True once a full batch can be sampled.
    pub fn is_ready(&self) -> bool {
        self.items.len() >= self.batch
    }

    /// Stores a transition, evicting the oldest entry at capacity.
    pub fn store(&mut self, t: Transition) {
        debug_assert!(t.reward <= 0.0, "rewards are negated losses");
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.write] = t;
            self.write = (self.write + 1) % self.capacity;
        }
    }

    /// Draws `batch_size` distinct indices uniformly at random.
    pub fn sample_indices<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<usize>> {
        if !self.is_ready() {
            return Err(Error::BufferNotReady { size: self.items.len(), batch: self.batch });
        }
        Ok(rand::seq::index::sample(rng, self.items.len(), self.batch).into_vec())
    }

    /// Samples a batch and packs it into the dense arrays the networks eat:
    /// states `[B, K]`, row-major-flattened actions `[B, 2K]`, rewards `[B]`
    /// and next states `[B, K]`.
    pub fn sample_batch<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TransitionBatch> {
        let indices = self.sample_indices(rng)?;
        let k = self.items[indices[0]].state.len();
        let b = indices.len();
        let mut states = Array2::<f64>::zeros((b, k));
        let mut actions = Array2::<f64>::zeros((b, 2 * k));
        let mut rewards = Array1::<f64>::zeros(b);
        let mut next_states = Array2::<f64>::zeros((b, k));
        for (row, &idx) in indices.iter().enumerate() {
            let t = &self.items[idx];
            for (i, &bit) in t.state.bits().iter().enumerate() {
                states[[row, i]] = bit as f64;
            }
            for (i, v) in t.action.interleaved().into_iter().enumerate() {
                actions[[row, i]] = v;
            }
            rewards[row] = t.reward;
            for (i, &bit) in t.next_state.bits().iter().enumerate() {
                next_states[[row, i]] = bit as f64;
            }
        }
        Ok(TransitionBatch { states, actions, rewards, next_states })
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }

    /// Contents in storage order, for serialization.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    /// Storage-order write cursor, for serialization.
    pub fn write_cursor(&self) -> usize {
        self.write
    }

    /// Reassembles a buffer captured by [`ReplayBuffer::iter`] and
    /// [`ReplayBuffer::write_cursor`].
    pub fn from_parts(
        capacity: usize,
        batch: usize,
        items: Vec<Transition>,
        write: usize,
    ) -> Result<Self> {
        let mut buf = Self::new(capacity, batch)?;
        if items.len() > capacity {
            return Err(Error::InvalidArgument(format!(
                "buffer contents ({}) exceed capacity {capacity}",
                items.len()
            )));
        }
        if write >= capacity && !(write == 0 && capacity > 0) {
            return Err(Error::InvalidArgument(format!(
                "buffer write cursor {write} out of range for capacity {capacity}"
            )));
        }
        buf.items = items;
        buf.write = write;
        Ok(buf)
    }
}

/// A sampled minibatch in dense array form.
#[derive(Debug, Clone)]
pub struct TransitionBatch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
}

impl TransitionBatch {
    pub fn len(&self) -> usize {
        self.states.dim().0
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Reward for one transmission: the negated cross-entropy SUM over the
/// block's bits, with probabilities clipped away from 0 and 1. Always ≤ 0;
/// a perfect receiver approaches 0 from below.
///
/// The receiver's own training loss uses the MEAN over bits instead; see
/// [`bce_mean`]. The two conventions are kept separate on purpose.
pub fn compute_reward(m: &Message, p: &[f64]) -> Result<f64> {
    if m.len() != p.len() {
        return Err(Error::InvalidArgument(format!(
            "message has {} bits but received {} probabilities",
            m.len(),
            p.len()
        )));
    }
    let mut r = 0.0;
    for (&bit, &prob) in m.bits().iter().zip(p) {
        let prob = prob.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
        r += if bit == 1 { prob.ln() } else { (1.0 - prob).ln() };
    }
    Ok(r)
}

/// Mean-over-bits binary cross entropy, the receiver's supervised loss.
pub fn bce_mean(m: &Message, p: &[f64]) -> Result<f64> {
    Ok(-compute_reward(m, p)? / m.len() as f64)
}

/// Bellman regression target `y = r + gamma * q_next`, with no terminal
/// masking: episodes are fixed-length windows over independent states, so
/// every transition bootstraps.
pub fn bellman_targets(rewards: &Array1<f64>, next_q: &Array1<f64>, gamma: f64) -> Array1<f64> {
    rewards + &(next_q * gamma)
}

/// Learner hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentHyper {
    /// Discount factor, in [0, 1]. Kept tiny by default: adjacent states are
    /// independent, so long credit horizons only couple unrelated blocks;
    /// zero degenerates to pure immediate reward.
    pub gamma: f64,
    /// Soft target-update rate, in [0, 1]; zero freezes the targets and one
    /// copies the behaviour networks outright.
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Optional Gaussian action perturbation; 0 disables it (the default —
    /// channel noise is the only stochasticity the algorithm relies on).
    pub exploration_noise_std: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
}

impl Default for AgentHyper {
    fn default() -> Self {
        Self {
            gamma: 0.01,
            tau: 0.005,
            actor_lr: 0.002,
            critic_lr: 0.001,
            exploration_noise_std: 0.0,
            buffer_capacity: 100_000,
            batch_size: 64,
        }
    }
}

impl AgentHyper {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::ConfigOutOfRange { key: key.into(), message: message.into() })
            }
        };
        check((0.0..=1.0).contains(&self.gamma), "agent.gamma", "must be in [0, 1]")?;
        check((0.0..=1.0).contains(&self.tau), "agent.tau", "must be in [0, 1]")?;
        check(self.actor_lr > 0.0 && self.actor_lr.is_finite(), "agent.actor_lr", "must be positive")?;
        check(self.critic_lr > 0.0 && self.critic_lr.is_finite(), "agent.critic_lr", "must be positive")?;
        check(
            self.exploration_noise_std >= 0.0 && self.exploration_noise_std.is_finite(),
            "agent.exploration_noise_std",
            "must be nonnegative",
        )?;
        check(self.buffer_capacity > 0, "agent.buffer_capacity", "must be positive")?;
        check(
            self.batch_size > 0 && self.batch_size <= self.buffer_capacity,
            "agent.batch_size",
            "must be positive and no larger than buffer_capacity",
        )
    }
}

/// Per-update diagnostics from [`DdpgAgent::train_step`].
#[derive(Debug, Clone, Copy)]
pub struct AgentStepStats {
    /// Pre-update mean squared error of the critic against the Bellman targets.
    pub critic_loss: f64,
    /// L2 norm of the policy gradient applied to the actor.
    pub policy_grad_norm: f64,
}

/// Behaviour and target networks, optimizers and replay buffer — everything
/// the reinforcement-learning side of training owns.
pub struct DdpgAgent {
    spec: NetworkSpec,
    hyper: AgentHyper,
    pub actor: ParameterSet,
    pub critic: ParameterSet,
    pub target_actor: ParameterSet,
    pub target_critic: ParameterSet,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub buffer: ReplayBuffer,
}

impl DdpgAgent {
    /// Fresh agent: behaviour networks drawn from `rng` (actor first, then
    /// critic), targets cloned bitwise from the behaviour networks.
    pub fn new<R: Rng + ?Sized>(spec: NetworkSpec, hyper: AgentHyper, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        let actor = init_transmitter(&spec.transmitter, rng);
        let critic = init_critic(&spec.critic, rng);
        let target_actor = actor.clone();
        let target_critic = critic.clone();
        let buffer = ReplayBuffer::new(hyper.buffer_capacity, hyper.batch_size)?;
        Ok(Self {
            spec,
            hyper,
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt: AdamState::new(),
            critic_opt: AdamState::new(),
            buffer,
        })
    }

    /// Reassembles an agent from checkpointed pieces. The caller is
    /// responsible for the parameter sets matching `spec`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: NetworkSpec,
        hyper: AgentHyper,
        actor: ParameterSet,
        critic: ParameterSet,
        target_actor: ParameterSet,
        target_critic: ParameterSet,
        actor_opt: AdamState,
        critic_opt: AdamState,
        buffer: ReplayBuffer,
    ) -> Result<Self> {
        hyper.validate()?;
        Ok(Self {
            spec,
            hyper,
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
            buffer,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn hyper(&self) -> &AgentHyper {
        &self.hyper
    }

    /// Deterministic action for a message: the transmitter forward pass in
    /// inference mode. With `noise_std > 0` a Gaussian perturbation is added
    /// per real component (interleaved re/im draw order) and the block is
    /// re-normalized, so the action stays on the power-`K` shell.
    pub fn select_action<R: Rng + ?Sized>(
        &self,
        m: &Message,
        noise_std: f64,
        rng: &mut R,
    ) -> Result<ComplexBlock> {
        let input = messages_to_array(std::slice::from_ref(m));
        let (out, _) = transmitter_forward(&self.spec.transmitter, &self.actor, &input, TrainMode::Inference)?;
        let k = m.len();
        let mut re = Vec::with_capacity(k);
        let mut im = Vec::with_capacity(k);
        for t in 0..k {
            re.push(out[[0, t, 0]]);
            im.push(out[[0, t, 1]]);
        }
        if noise_std > 0.0 {
            for t in 0..k {
                let n_re: f64 = rng.sample(StandardNormal);
                let n_im: f64 = rng.sample(StandardNormal);
                re[t] += noise_std * n_re;
                im[t] += noise_std * n_im;
            }
            normalize_power(&re, &im)
        } else {
            ComplexBlock::new(re, im, BlockRole::Encoded)
        }
    }

    /// Bellman targets for a batch: `y = r + gamma * Q'(s', mu'(s'))`, both
    /// target networks in inference mode.
    pub fn compute_target_q(&self, batch: &TransitionBatch) -> Result<Array1<f64>> {
        let (next_actions, _) = transmitter_forward(
            &self.spec.transmitter,
            &self.target_actor,
            &batch.next_states,
            TrainMode::Inference,
        )?;
        let next_actions = flatten_actions(next_actions);
        let (next_q, _) = critic_forward(
            &self.spec.critic,
            &self.target_critic,
            &batch.next_states,
            &next_actions,
            TrainMode::Inference,
        );
        Ok(bellman_targets(&batch.rewards, &next_q, self.hyper.gamma))
    }

    /// One critic regression step toward `targets`; returns the pre-update
    /// mean squared error. The critic runs in training mode and commits its
    /// staged batch-norm statistics, since this is its own update.
    pub fn update_critic(&mut self, batch: &TransitionBatch, targets: &Array1<f64>) -> Result<f64> {
        let b = batch.len() as f64;
        let (q, cache) = critic_forward(
            &self.spec.critic,
            &self.critic,
            &batch.states,
            &batch.actions,
            TrainMode::Training,
        );
        let residual = &q - targets;
        let loss = residual.iter().map(|r| r * r).sum::<f64>() / b;
        if !loss.is_finite() {
            let bad = q.iter().position(|v| !v.is_finite());
            return Err(Error::NumericalDivergence { what: "critic loss".into(), batch_index: bad });
        }
        let d_q = residual.mapv(|r| 2.0 * r / b);
        let (grads, _, _) = critic_backward(&self.spec.critic, &self.critic, &cache, &d_q);
        if !grads.all_finite() {
            return Err(Error::NumericalDivergence { what: "critic gradients".into(), batch_index: None });
        }
        self.critic_opt.step(&mut self.critic, &grads, &AdamParams::with_lr(self.hyper.critic_lr));
        cache.commit_bn(&mut self.critic);
        Ok(loss)
    }

    /// One deterministic-policy-gradient ascent step on the actor; returns
    /// the L2 norm of the policy gradient. The transmitter runs in training
    /// mode (its own update); the critic is read-only in inference mode and
    /// its parameters are left untouched.
    pub fn update_actor(&mut self, batch: &TransitionBatch) -> Result<f64> {
        let (grads, _mean_q, cache) = self.actor_gradients(batch)?;
        if !grads.all_finite() {
            return Err(Error::NumericalDivergence { what: "policy gradient".into(), batch_index: None });
        }
        let norm = grads.l2_norm();
        self.actor_opt.step(&mut self.actor, &grads, &AdamParams::with_lr(self.hyper.actor_lr));
        cache.commit_bn(&self.spec.transmitter, &mut self.actor);
        Ok(norm)
    }

    /// Gradients of `-J` where `J = (1/B)·Σ Q(s, mu(s))`; an Adam descent
    /// step on these ascends the critic's estimate of the policy's value.
    /// Also returns `J` itself and the transmitter cache (whose batch-norm
    /// statistics get committed once the step is actually taken).
    fn actor_gradients(
        &self,
        batch: &TransitionBatch,
    ) -> Result<(crate::nn::Gradients, f64, crate::nn::TransmitterCache)> {
        let b = batch.len() as f64;
        let (tx_out, tx_cache) = transmitter_forward(
            &self.spec.transmitter,
            &self.actor,
            &batch.states,
            TrainMode::Training,
        )?;
        let actions = flatten_actions(tx_out);
        let (q, critic_cache) = critic_forward(
            &self.spec.critic,
            &self.critic,
            &batch.states,
            &actions,
            TrainMode::Inference,
        );
        let mean_q = q.mean().unwrap_or(0.0);
        // d(-J)/dq_i = -1/B, routed through the critic to the actions only;
        // the critic's own parameter gradients from this pass are discarded.
        let d_q = Array1::from_elem(q.len(), -1.0 / b);
        let (_, _, d_actions) = critic_backward(&self.spec.critic, &self.critic, &critic_cache, &d_q);
        let d_tx = unflatten_actions(d_actions);
        let grads = transmitter_backward(&self.spec.transmitter, &self.actor, &tx_cache, &d_tx);
        Ok((grads, mean_q, tx_cache))
    }

    /// Soft update `theta' = tau * theta + (1 - tau) * theta'` for both
    /// target networks, including batch-norm running statistics.
    pub fn soft_update_targets(&mut self) -> Result<()> {
        self.target_actor.soft_update_from(&self.actor, self.hyper.tau)?;
        self.target_critic.soft_update_from(&self.critic, self.hyper.tau)
    }

    /// One full learning step: sample a batch, regress the critic to the
    /// Bellman targets, ascend the actor along the policy gradient (same
    /// minibatch), then soft-update both targets.
    ///
    /// Fails with [`Error::BufferNotReady`] until the buffer holds a batch;
    /// the training loop treats that as "skip updates this step".
    pub fn train_step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<AgentStepStats> {
        let batch = self.buffer.sample_batch(rng)?;
        let targets = self.compute_target_q(&batch)?;
        let critic_loss = self.update_critic(&batch, &targets)?;
        let policy_grad_norm = self.update_actor(&batch)?;
        self.soft_update_targets()?;
        Ok(AgentStepStats { critic_loss, policy_grad_norm })
    }
}

/// `[B, K, 2]` action tensor → `[B, 2K]` rows in interleaved (re, im) order,
/// the same layout `ComplexBlock::interleaved` produces.
fn flatten_actions(a: Array3<f64>) -> Array2<f64> {
    let (b, k, two) = a.dim();
    debug_assert_eq!(two, 2);
    a.into_shape((b, 2 * k)).expect("standard layout")
}

/// Inverse of [`flatten_actions`] for gradients.
fn unflatten_actions(a: Array2<f64>) -> Array3<f64> {
    let (b, two_k) = a.dim();
    a.into_shape((b, two_k / 2, 2)).expect("standard layout")
}
