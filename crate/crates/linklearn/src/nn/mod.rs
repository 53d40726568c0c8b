//! Hand-rolled neural networks with exact backward passes.
//!
//! Three fixed architectures are implemented: the transmitter (1-D circular
//! convolutions, Mish + batch norm, closing with an L2 power-normalization
//! layer), the receiver (1-D circular convolutions closing with a sigmoid)
//! and the critic (two dense input branches concatenated into a dense
//! trunk). There is no autodiff graph — each network has an explicit
//! `*_forward` that records a cache and a `*_backward` that consumes it,
//! which keeps every Jacobian (including batch-norm's coupling across the
//! batch and the power layer's projection) exact and independently testable
//! against finite differences.
//!
//! Feature maps are stored channel-last as `[batch, position, channel]` so a
//! circular convolution lowers to one GEMM per layer.

mod adam;
mod nets;
mod ops;

pub use adam::{AdamParams, AdamState};
pub use nets::{
    critic_backward, critic_forward, init_critic, init_receiver, init_transmitter,
    messages_to_array, receiver_backward, receiver_forward, transmitter_backward,
    transmitter_forward, CriticCache, ReceiverCache, TransmitterCache,
};
pub use ops::assemble_receiver_input;

use crate::error::{Error, Result};
use ndarray::{ArrayD, ArrayView1, ArrayView2, ArrayView3, ArrayViewMut1, ArrayViewMut2, ArrayViewMut3};
use std::collections::BTreeMap;

/// Whether a forward pass normalizes with batch statistics (training) or the
/// stored running averages (inference).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Training,
    Inference,
}

/// Elementwise activation selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Act {
    Mish,
    Relu,
    Sigmoid,
    Linear,
}

/// One named collection of parameter arrays (weights, biases, batch-norm
/// scale/shift and running statistics). Keys iterate in sorted order, which
/// fixes the serialization and optimizer-update order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParameterSet {
    arrays: BTreeMap<String, ArrayD<f64>>,
}

impl ParameterSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        self.arrays.insert(name.to_string(), value);
    }

    pub fn contains(&self, name: &str) -> bool {
        self.arrays.contains_key(name)
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from set"))
    }

    pub fn get_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.arrays
            .get_mut(name)
            .unwrap_or_else(|| panic!("parameter `{name}` missing from set"))
    }

    pub fn view1(&self, name: &str) -> ArrayView1<'_, f64> {
        self.get(name).view().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 1-d"))
    }

    pub fn view2(&self, name: &str) -> ArrayView2<'_, f64> {
        self.get(name).view().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 2-d"))
    }

    pub fn view3(&self, name: &str) -> ArrayView3<'_, f64> {
        self.get(name).view().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 3-d"))
    }

    pub fn view1_mut(&mut self, name: &str) -> ArrayViewMut1<'_, f64> {
        self.get_mut(name).view_mut().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 1-d"))
    }

    pub fn view2_mut(&mut self, name: &str) -> ArrayViewMut2<'_, f64> {
        self.get_mut(name).view_mut().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 2-d"))
    }

    pub fn view3_mut(&mut self, name: &str) -> ArrayViewMut3<'_, f64> {
        self.get_mut(name).view_mut().into_dimensionality().unwrap_or_else(|_| panic!("`{name}` is not 3-d"))
    }

    /// Sorted parameter names.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(|s| s.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ArrayD<f64>)> {
        self.arrays.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Total number of scalar entries, running statistics included.
    pub fn scalar_count(&self) -> usize {
        self.arrays.values().map(|a| a.len()).sum()
    }

    /// Names the optimizer is allowed to touch (running statistics are state,
    /// not trainable parameters).
    pub fn is_trainable(name: &str) -> bool {
        !name.ends_with(".running_mean") && !name.ends_with(".running_var")
    }

    /// Element-wise convex blend of `source` into `self`:
    /// `self <- tau * source + (1 - tau) * self`, over every array including
    /// running statistics. Both sets must have identical names and shapes.
    pub fn soft_update_from(&mut self, source: &ParameterSet, tau: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&tau) {
            return Err(Error::InvalidArgument(format!("tau must lie in [0, 1], got {tau}")));
        }
        if self.arrays.len() != source.arrays.len() {
            return Err(Error::InvalidArgument(format!(
                "soft update over mismatched sets ({} vs {} arrays)",
                self.arrays.len(),
                source.arrays.len()
            )));
        }
        for ((name, target), (src_name, src)) in self.arrays.iter_mut().zip(source.arrays.iter()) {
            if name != src_name || target.shape() != src.shape() {
                return Err(Error::InvalidArgument(format!(
                    "soft update mismatch at `{name}` vs `{src_name}`"
                )));
            }
            target.zip_mut_with(src, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
        Ok(())
    }
}

/// Named gradient arrays, mirroring the trainable subset of a [`ParameterSet`].
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    arrays: BTreeMap<String, ArrayD<f64>>,
}

impl Gradients {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: &str, value: ArrayD<f64>) {
        self.arrays.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> &ArrayD<f64> {
        self.arrays
            .get(name)
            .unwrap_or_else(|| panic!("gradient `{name}` missing"))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ArrayD<f64>)> {
        self.arrays.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.arrays.keys().map(|s| s.as_str())
    }

    /// Flips every gradient, turning a descent step into an ascent step.
    pub fn negate(&mut self) {
        for v in self.arrays.values_mut() {
            v.mapv_inplace(|x| -x);
        }
    }

    /// L2 norm over all entries.
    pub fn l2_norm(&self) -> f64 {
        self.arrays
            .values()
            .map(|a| a.iter().map(|x| x * x).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// True when every entry is finite.
    pub fn all_finite(&self) -> bool {
        self.arrays.values().all(|a| a.iter().all(|x| x.is_finite()))
    }
}

/// Batch-norm hyperparameters shared by every layer.
pub const BN_EPS: f64 = 1e-5;
/// Fraction of the *old* running average kept per update:
/// `running <- 0.99 * running + 0.01 * batch`.
pub const BN_MOMENTUM: f64 = 0.99;

/// Descriptor of one convolution layer (circular padding, stride 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    /// Batch norm between the convolution and the activation.
    pub batch_norm: bool,
    pub act: Act,
}

/// Transmitter architecture: a stack of circular convolutions over the bit
/// sequence, closed by the power-normalization layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransmitterSpec {
    pub k: usize,
    pub convs: Vec<ConvSpec>,
}

impl TransmitterSpec {
    /// Reference architecture: channels 256 -> 128 -> 64 -> 2 with kernels
    /// 5, 3, 3, 3; Mish + batch norm on all but the final layer.
    pub fn reference(k: usize) -> Self {
        Self::scaled(k, 1.0)
    }

    /// Same layout with the hidden widths scaled by `width_scale`
    /// (minimum 2 channels per hidden layer). `scaled(k, 1.0) == reference(k)`.
    pub fn scaled(k: usize, width_scale: f64) -> Self {
        let w = |c: usize| scale_width(c, width_scale);
        let (c1, c2, c3) = (w(256), w(128), w(64));
        Self {
            k,
            convs: vec![
                ConvSpec { c_in: 1, c_out: c1, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c1, c_out: c2, kernel: 3, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c2, c_out: c3, kernel: 3, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c3, c_out: 2, kernel: 3, batch_norm: false, act: Act::Linear },
            ],
        }
    }

    /// A deliberately tiny variant for exhaustive gradient checks.
    pub fn toy(k: usize) -> Self {
        Self {
            k,
            convs: vec![
                ConvSpec { c_in: 1, c_out: 6, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 6, c_out: 5, kernel: 3, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 5, c_out: 4, kernel: 3, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 4, c_out: 2, kernel: 3, batch_norm: false, act: Act::Linear },
            ],
        }
    }
}

/// Receiver architecture: convolutions over the `[Re y, Im y, Re h, Im h]`
/// feature rows, closing with a sigmoid per bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiverSpec {
    pub k: usize,
    pub convs: Vec<ConvSpec>,
}

impl ReceiverSpec {
    /// Reference architecture: channels 256 -> 128 -> 64 -> 32 -> 1 with
    /// kernels 5, 5, 5, 5, 3; Mish + batch norm on all but the final layer.
    pub fn reference(k: usize) -> Self {
        Self::scaled(k, 1.0)
    }

    pub fn scaled(k: usize, width_scale: f64) -> Self {
        let w = |c: usize| scale_width(c, width_scale);
        let (c1, c2, c3, c4) = (w(256), w(128), w(64), w(32));
        Self {
            k,
            convs: vec![
                ConvSpec { c_in: 4, c_out: c1, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c1, c_out: c2, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c2, c_out: c3, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c3, c_out: c4, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: c4, c_out: 1, kernel: 3, batch_norm: false, act: Act::Sigmoid },
            ],
        }
    }

    pub fn toy(k: usize) -> Self {
        Self {
            k,
            convs: vec![
                ConvSpec { c_in: 4, c_out: 6, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 6, c_out: 5, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 5, c_out: 4, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 4, c_out: 3, kernel: 5, batch_norm: true, act: Act::Mish },
                ConvSpec { c_in: 3, c_out: 1, kernel: 3, batch_norm: false, act: Act::Sigmoid },
            ],
        }
    }
}

/// Critic architecture: message and flattened action pass through one dense +
/// ReLU branch each, are concatenated, and feed a dense trunk whose final
/// 1-unit layer keeps its batch norm ahead of a linear output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CriticSpec {
    pub k: usize,
    pub state_units: usize,
    pub action_units: usize,
    pub joint_units: usize,
}

impl CriticSpec {
    /// Reference widths: 128/128 input branches, 256-unit trunk.
    pub fn reference(k: usize) -> Self {
        Self::scaled(k, 1.0)
    }

    pub fn scaled(k: usize, width_scale: f64) -> Self {
        Self {
            k,
            state_units: scale_width(128, width_scale),
            action_units: scale_width(128, width_scale),
            joint_units: scale_width(256, width_scale),
        }
    }

    pub fn toy(k: usize) -> Self {
        Self { k, state_units: 7, action_units: 7, joint_units: 10 }
    }
}

fn scale_width(c: usize, scale: f64) -> usize {
    ((c as f64 * scale).round() as usize).max(2)
}

/// Bundle of the three architectures for one block length.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkSpec {
    pub transmitter: TransmitterSpec,
    pub receiver: ReceiverSpec,
    pub critic: CriticSpec,
}

impl NetworkSpec {
    pub fn reference(k: usize) -> Self {
        Self::scaled(k, 1.0)
    }

    pub fn scaled(k: usize, width_scale: f64) -> Self {
        Self {
            transmitter: TransmitterSpec::scaled(k, width_scale),
            receiver: ReceiverSpec::scaled(k, width_scale),
            critic: CriticSpec::scaled(k, width_scale),
        }
    }

    pub fn toy(k: usize) -> Self {
        Self {
            transmitter: TransmitterSpec::toy(k),
            receiver: ReceiverSpec::toy(k),
            critic: CriticSpec::toy(k),
        }
    }

    pub fn k(&self) -> usize {
        self.transmitter.k
    }
}
