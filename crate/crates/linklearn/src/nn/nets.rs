//! The three network architectures: initialization, forward passes (with
//! caches) and exact backward passes.
//!
//! Parameter naming is stable and forms the serialization contract:
//! convolution stacks use `conv{i}.weight` / `conv{i}.bias` with
//! `bn{i}.gamma` / `bn{i}.beta` / `bn{i}.running_mean` / `bn{i}.running_var`
//! for their batch norms; the critic uses `state_fc`, `action_fc`, `joint1`,
//! `joint_bn1`, `joint2`, `joint_bn2`, `out`, `out_bn`.
//!
//! Weights and biases initialize from `U(-a, a)` with `a = 1/sqrt(fan_in)`,
//! drawn in layer order from the caller's RNG; batch norms start at the
//! identity (`gamma = 1`, `beta = 0`, running mean 0, running variance 1).

use super::ops::{
    batchnorm_backward, batchnorm_forward, conv1d_backward, conv1d_forward, dense_backward,
    dense_forward, mish, mish_grad, power_norm_backward, power_norm_forward, sigmoid, BnCache,
    ConvCache, PowerNormCache,
};
use super::{
    Act, ConvSpec, CriticSpec, Gradients, ParameterSet, ReceiverSpec, TrainMode, TransmitterSpec,
    BN_EPS,
};
use crate::error::Result;
use crate::signal::Message;
use ndarray::{Array1, Array2, Array3, Axis};
use rand::Rng;

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

fn uniform_array<R: Rng + ?Sized>(len: usize, bound: f64, rng: &mut R) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

fn init_conv_stack<R: Rng + ?Sized>(convs: &[ConvSpec], rng: &mut R, params: &mut ParameterSet) {
    for (i, layer) in convs.iter().enumerate() {
        let idx = i + 1;
        let fan_in = layer.c_in * layer.kernel;
        let bound = 1.0 / (fan_in as f64).sqrt();
        let w = Array3::from_shape_vec(
            (layer.c_out, layer.c_in, layer.kernel),
            uniform_array(layer.c_out * layer.c_in * layer.kernel, bound, rng),
        )
        .unwrap();
        let b = Array1::from_vec(uniform_array(layer.c_out, bound, rng));
        params.insert(&format!("conv{idx}.weight"), w.into_dyn());
        params.insert(&format!("conv{idx}.bias"), b.into_dyn());
        if layer.batch_norm {
            params.insert(&format!("bn{idx}.gamma"), Array1::from_elem(layer.c_out, 1.0).into_dyn());
            params.insert(&format!("bn{idx}.beta"), Array1::zeros(layer.c_out).into_dyn());
            params.insert(&format!("bn{idx}.running_mean"), Array1::zeros(layer.c_out).into_dyn());
            params.insert(&format!("bn{idx}.running_var"), Array1::from_elem(layer.c_out, 1.0).into_dyn());
        }
    }
}

fn init_dense<R: Rng + ?Sized>(
    name: &str,
    d_out: usize,
    d_in: usize,
    rng: &mut R,
    params: &mut ParameterSet,
) {
    let bound = 1.0 / (d_in as f64).sqrt();
    let w = Array2::from_shape_vec((d_out, d_in), uniform_array(d_out * d_in, bound, rng)).unwrap();
    let b = Array1::from_vec(uniform_array(d_out, bound, rng));
    params.insert(&format!("{name}.weight"), w.into_dyn());
    params.insert(&format!("{name}.bias"), b.into_dyn());
}

fn init_bn(name: &str, features: usize, params: &mut ParameterSet) {
    params.insert(&format!("{name}.gamma"), Array1::from_elem(features, 1.0).into_dyn());
    params.insert(&format!("{name}.beta"), Array1::zeros(features).into_dyn());
    params.insert(&format!("{name}.running_mean"), Array1::zeros(features).into_dyn());
    params.insert(&format!("{name}.running_var"), Array1::from_elem(features, 1.0).into_dyn());
}

/// Fresh transmitter parameters for `spec`, drawn from `rng`.
pub fn init_transmitter<R: Rng + ?Sized>(spec: &TransmitterSpec, rng: &mut R) -> ParameterSet {
    let mut p = ParameterSet::new();
    init_conv_stack(&spec.convs, rng, &mut p);
    p
}

/// Fresh receiver parameters for `spec`, drawn from `rng`.
pub fn init_receiver<R: Rng + ?Sized>(spec: &ReceiverSpec, rng: &mut R) -> ParameterSet {
    let mut p = ParameterSet::new();
    init_conv_stack(&spec.convs, rng, &mut p);
    p
}

/// Fresh critic parameters for `spec`, drawn from `rng`.
pub fn init_critic<R: Rng + ?Sized>(spec: &CriticSpec, rng: &mut R) -> ParameterSet {
    let mut p = ParameterSet::new();
    init_dense("state_fc", spec.state_units, spec.k, rng, &mut p);
    init_dense("action_fc", spec.action_units, 2 * spec.k, rng, &mut p);
    let concat = spec.state_units + spec.action_units;
    init_dense("joint1", spec.joint_units, concat, rng, &mut p);
    init_bn("joint_bn1", spec.joint_units, &mut p);
    init_dense("joint2", spec.joint_units, spec.joint_units, rng, &mut p);
    init_bn("joint_bn2", spec.joint_units, &mut p);
    init_dense("out", 1, spec.joint_units, rng, &mut p);
    init_bn("out_bn", 1, &mut p);
    p
}

/// Packs a batch of messages into the `[B, K]` network input.
pub fn messages_to_array(msgs: &[Message]) -> Array2<f64> {
    let batch = msgs.len();
    let k = msgs.first().map(|m| m.len()).unwrap_or(0);
    let mut out = Array2::<f64>::zeros((batch, k));
    for (b, m) in msgs.iter().enumerate() {
        for (i, &bit) in m.bits().iter().enumerate() {
            out[[b, i]] = bit as f64;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Activation plumbing
// ---------------------------------------------------------------------------

enum ActCache {
    MishInput(Array3<f64>),
    ReluOutput(Array3<f64>),
    SigmoidOutput(Array3<f64>),
    None,
}

fn act_forward(act: Act, z: Array3<f64>) -> (Array3<f64>, ActCache) {
    match act {
        Act::Mish => {
            let y = z.mapv(mish);
            (y, ActCache::MishInput(z))
        }
        Act::Relu => {
            let y = z.mapv(|v| v.max(0.0));
            (y.clone(), ActCache::ReluOutput(y))
        }
        Act::Sigmoid => {
            let y = z.mapv(sigmoid);
            (y.clone(), ActCache::SigmoidOutput(y))
        }
        Act::Linear => (z, ActCache::None),
    }
}

fn act_backward(cache: &ActCache, d_out: Array3<f64>) -> Array3<f64> {
    match cache {
        ActCache::MishInput(z) => {
            let mut d = d_out;
            d.zip_mut_with(z, |g, &x| *g *= mish_grad(x));
            d
        }
        ActCache::ReluOutput(y) => {
            let mut d = d_out;
            d.zip_mut_with(y, |g, &v| {
                if v <= 0.0 {
                    *g = 0.0;
                }
            });
            d
        }
        ActCache::SigmoidOutput(y) => {
            let mut d = d_out;
            d.zip_mut_with(y, |g, &v| *g *= v * (1.0 - v));
            d
        }
        ActCache::None => d_out,
    }
}

/// Backward through an inference-mode batch norm: a fixed per-channel affine,
/// so the input gradient is just the output gradient times
/// `gamma / sqrt(running_var + eps)`. No parameter gradients are produced;
/// inference-mode backward passes only propagate input gradients.
fn bn_inference_backward<D: ndarray::Dimension>(
    params: &ParameterSet,
    name: &str,
    d: &mut ndarray::Array<f64, D>,
) {
    let gamma = params.view1(&format!("{name}.gamma"));
    let rv = params.view1(&format!("{name}.running_var"));
    let scale = Array1::from_iter(
        gamma
            .iter()
            .zip(rv.iter())
            .map(|(&g, &v)| g / (v + BN_EPS).sqrt()),
    );
    let scale = scale.broadcast(d.raw_dim()).expect("channel axis is last");
    let scale = scale.to_owned();
    d.zip_mut_with(&scale, |g, &s| *g *= s);
}

// ---------------------------------------------------------------------------
// Shared convolution stack
// ---------------------------------------------------------------------------

struct ConvLayerCache {
    conv: ConvCache,
    bn: Option<BnCache>,
    act: ActCache,
}

fn conv_stack_forward(
    convs: &[ConvSpec],
    params: &ParameterSet,
    input: Array3<f64>,
    mode: TrainMode,
) -> (Array3<f64>, Vec<ConvLayerCache>) {
    let mut caches = Vec::with_capacity(convs.len());
    let mut x = input;
    for (i, layer) in convs.iter().enumerate() {
        let idx = i + 1;
        let w = params.view3(&format!("conv{idx}.weight"));
        let b = params.view1(&format!("conv{idx}.bias"));
        let (z, conv_cache) = conv1d_forward(&x, &w, &b);
        let (z, bn_cache) = if layer.batch_norm {
            batchnorm_forward(
                &z,
                &params.view1(&format!("bn{idx}.gamma")),
                &params.view1(&format!("bn{idx}.beta")),
                &params.view1(&format!("bn{idx}.running_mean")),
                &params.view1(&format!("bn{idx}.running_var")),
                mode,
            )
        } else {
            (z, None)
        };
        let (y, act_cache) = act_forward(layer.act, z);
        caches.push(ConvLayerCache { conv: conv_cache, bn: bn_cache, act: act_cache });
        x = y;
    }
    (x, caches)
}

fn conv_stack_backward(
    convs: &[ConvSpec],
    params: &ParameterSet,
    caches: &[ConvLayerCache],
    d_out: Array3<f64>,
    grads: &mut Gradients,
) -> Array3<f64> {
    let mut d = d_out;
    for (i, layer) in convs.iter().enumerate().rev() {
        let idx = i + 1;
        let cache = &caches[i];
        d = act_backward(&cache.act, d);
        if layer.batch_norm {
            match &cache.bn {
                Some(bn) => {
                    let gamma = params.view1(&format!("bn{idx}.gamma"));
                    let (dx, d_gamma, d_beta) = batchnorm_backward(bn, &gamma, &d);
                    grads.insert(&format!("bn{idx}.gamma"), d_gamma.into_dyn());
                    grads.insert(&format!("bn{idx}.beta"), d_beta.into_dyn());
                    d = dx;
                }
                None => bn_inference_backward(params, &format!("bn{idx}"), &mut d),
            }
        }
        let w = params.view3(&format!("conv{idx}.weight"));
        let (dx, d_w, d_b) = conv1d_backward(&cache.conv, &w, &d);
        grads.insert(&format!("conv{idx}.weight"), d_w.into_dyn());
        grads.insert(&format!("conv{idx}.bias"), d_b.into_dyn());
        d = dx;
    }
    d
}

fn commit_conv_stack_bn(convs: &[ConvSpec], caches: &[ConvLayerCache], params: &mut ParameterSet) {
    for (i, layer) in convs.iter().enumerate() {
        if !layer.batch_norm {
            continue;
        }
        let idx = i + 1;
        if let Some(bn) = &caches[i].bn {
            params
                .view1_mut(&format!("bn{idx}.running_mean"))
                .into_slice()
                .expect("running mean must be contiguous")
                .copy_from_slice(bn.new_running_mean.as_slice().unwrap());
            params
                .view1_mut(&format!("bn{idx}.running_var"))
                .into_slice()
                .expect("running var must be contiguous")
                .copy_from_slice(bn.new_running_var.as_slice().unwrap());
        }
    }
}

// ---------------------------------------------------------------------------
// Transmitter
// ---------------------------------------------------------------------------

/// Everything the transmitter backward pass needs.
pub struct TransmitterCache {
    layers: Vec<ConvLayerCache>,
    pn: PowerNormCache,
}

impl TransmitterCache {
    /// Applies the staged batch-norm running-average updates.
    pub fn commit_bn(&self, spec: &TransmitterSpec, params: &mut ParameterSet) {
        commit_conv_stack_bn(&spec.convs, &self.layers, params);
    }
}

/// Maps messages `[B, K]` (bits as 0.0/1.0) to power-normalized symbol blocks
/// `[B, K, 2]` (re, im per position). Total power per block is exactly `K`.
pub fn transmitter_forward(
    spec: &TransmitterSpec,
    params: &ParameterSet,
    messages: &Array2<f64>,
    mode: TrainMode,
) -> Result<(Array3<f64>, TransmitterCache)> {
    let input = messages.clone().insert_axis(Axis(2)); // [B, K, 1]
    let (z, layers) = conv_stack_forward(&spec.convs, params, input, mode);
    let (y, pn) = power_norm_forward(&z)?;
    Ok((y, TransmitterCache { layers, pn }))
}

/// Backward of [`transmitter_forward`] from `d_out: [B, K, 2]`. Returns
/// gradients for every trainable transmitter parameter.
pub fn transmitter_backward(
    spec: &TransmitterSpec,
    params: &ParameterSet,
    cache: &TransmitterCache,
    d_out: &Array3<f64>,
) -> Gradients {
    let mut grads = Gradients::new();
    let d = power_norm_backward(&cache.pn, d_out);
    conv_stack_backward(&spec.convs, params, &cache.layers, d, &mut grads);
    grads
}

// ---------------------------------------------------------------------------
// Receiver
// ---------------------------------------------------------------------------

/// Everything the receiver backward pass needs.
pub struct ReceiverCache {
    layers: Vec<ConvLayerCache>,
}

impl ReceiverCache {
    /// Applies the staged batch-norm running-average updates.
    pub fn commit_bn(&self, spec: &ReceiverSpec, params: &mut ParameterSet) {
        commit_conv_stack_bn(&spec.convs, &self.layers, params);
    }
}

/// Maps assembled observations `[B, K, 4]` (`[Re y, Im y, Re h, Im h]`) to
/// per-bit probabilities `[B, K]`, each strictly inside (0, 1).
pub fn receiver_forward(
    spec: &ReceiverSpec,
    params: &ParameterSet,
    input: &Array3<f64>,
    mode: TrainMode,
) -> (Array2<f64>, ReceiverCache) {
    let (y, layers) = conv_stack_forward(&spec.convs, params, input.clone(), mode);
    let probs = y.index_axis(Axis(2), 0).to_owned();
    (probs, ReceiverCache { layers })
}

/// Backward of [`receiver_forward`] from `d_probs: [B, K]`. Returns the
/// parameter gradients and the gradient with respect to the assembled input
/// (`[B, K, 4]`; the first two features carry the gradient into `y`).
pub fn receiver_backward(
    spec: &ReceiverSpec,
    params: &ParameterSet,
    cache: &ReceiverCache,
    d_probs: &Array2<f64>,
) -> (Gradients, Array3<f64>) {
    let mut grads = Gradients::new();
    let d_out = d_probs.clone().insert_axis(Axis(2)); // [B, K, 1]
    let d_in = conv_stack_backward(&spec.convs, params, &cache.layers, d_out, &mut grads);
    (grads, d_in)
}

// ---------------------------------------------------------------------------
// Critic
// ---------------------------------------------------------------------------

/// Everything the critic backward pass needs.
pub struct CriticCache {
    state: Array2<f64>,
    action: Array2<f64>,
    /// `[state_relu | action_relu]`, the input to the first joint layer.
    concat: Array2<f64>,
    joint1_bn: Option<BnCache>,
    /// Output of the first joint ReLU; also the input to the second joint layer.
    joint1_relu: Array2<f64>,
    joint2_bn: Option<BnCache>,
    /// Output of the second joint ReLU; also the input to the output layer.
    joint2_relu: Array2<f64>,
    out_bn: Option<BnCache>,
}

impl CriticCache {
    /// Applies the staged batch-norm running-average updates.
    pub fn commit_bn(&self, params: &mut ParameterSet) {
        for (name, bn) in [
            ("joint_bn1", &self.joint1_bn),
            ("joint_bn2", &self.joint2_bn),
            ("out_bn", &self.out_bn),
        ] {
            if let Some(bn) = bn {
                params
                    .view1_mut(&format!("{name}.running_mean"))
                    .into_slice()
                    .expect("running mean must be contiguous")
                    .copy_from_slice(bn.new_running_mean.as_slice().unwrap());
                params
                    .view1_mut(&format!("{name}.running_var"))
                    .into_slice()
                    .expect("running var must be contiguous")
                    .copy_from_slice(bn.new_running_var.as_slice().unwrap());
            }
        }
    }
}

fn bn2d(
    x: &Array2<f64>,
    params: &ParameterSet,
    name: &str,
    mode: TrainMode,
) -> (Array2<f64>, Option<BnCache>) {
    let (batch, d) = x.dim();
    let x3 = x.clone().into_shape((batch, 1, d)).unwrap();
    let (y, cache) = batchnorm_forward(
        &x3,
        &params.view1(&format!("{name}.gamma")),
        &params.view1(&format!("{name}.beta")),
        &params.view1(&format!("{name}.running_mean")),
        &params.view1(&format!("{name}.running_var")),
        mode,
    );
    (y.into_shape((batch, d)).unwrap(), cache)
}

fn bn2d_backward(
    cache: &BnCache,
    params: &ParameterSet,
    name: &str,
    d_out: &Array2<f64>,
    grads: &mut Gradients,
) -> Array2<f64> {
    let (batch, d) = d_out.dim();
    let d3 = d_out.clone().into_shape((batch, 1, d)).unwrap();
    let (dx, d_gamma, d_beta) =
        batchnorm_backward(cache, &params.view1(&format!("{name}.gamma")), &d3);
    grads.insert(&format!("{name}.gamma"), d_gamma.into_dyn());
    grads.insert(&format!("{name}.beta"), d_beta.into_dyn());
    dx.into_shape((batch, d)).unwrap()
}

fn relu2(x: Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

fn relu2_backward(y: &Array2<f64>, mut d: Array2<f64>) -> Array2<f64> {
    d.zip_mut_with(y, |g, &v| {
        if v <= 0.0 {
            *g = 0.0;
        }
    });
    d
}

/// Estimates action values: message `[B, K]` and flattened action `[B, 2K]`
/// (row-major flatten of the `K x 2` block) map to `q: [B]`.
pub fn critic_forward(
    spec: &CriticSpec,
    params: &ParameterSet,
    state: &Array2<f64>,
    action: &Array2<f64>,
    mode: TrainMode,
) -> (Array1<f64>, CriticCache) {
    debug_assert_eq!(state.dim().1, spec.k);
    debug_assert_eq!(action.dim().1, 2 * spec.k);
    let state_relu = relu2(dense_forward(state, &params.view2("state_fc.weight"), &params.view1("state_fc.bias")));
    let action_relu = relu2(dense_forward(action, &params.view2("action_fc.weight"), &params.view1("action_fc.bias")));
    // Explicit copy instead of `concatenate` so the result is standard layout
    // (the downstream matrix products and reshapes rely on it).
    let batch = state.dim().0;
    let mut concat = Array2::zeros((batch, spec.state_units + spec.action_units));
    concat.slice_mut(ndarray::s![.., ..spec.state_units]).assign(&state_relu);
    concat.slice_mut(ndarray::s![.., spec.state_units..]).assign(&action_relu);

    let j1 = dense_forward(&concat, &params.view2("joint1.weight"), &params.view1("joint1.bias"));
    let (j1n, joint1_bn) = bn2d(&j1, params, "joint_bn1", mode);
    let joint1_relu = relu2(j1n);

    let j2 = dense_forward(&joint1_relu, &params.view2("joint2.weight"), &params.view1("joint2.bias"));
    let (j2n, joint2_bn) = bn2d(&j2, params, "joint_bn2", mode);
    let joint2_relu = relu2(j2n);

    let out = dense_forward(&joint2_relu, &params.view2("out.weight"), &params.view1("out.bias"));
    let (q2, out_bn) = bn2d(&out, params, "out_bn", mode);
    let q = q2.index_axis(Axis(1), 0).to_owned();

    let cache = CriticCache {
        state: state.clone(),
        action: action.clone(),
        concat,
        joint1_bn,
        joint1_relu,
        joint2_bn,
        joint2_relu,
        out_bn,
    };
    (q, cache)
}

/// Backward of [`critic_forward`] from `d_q: [B]`. Returns parameter
/// gradients plus the gradients with respect to the state and action inputs
/// (the action gradient is the deterministic-policy-gradient path).
///
/// With an inference-mode cache the batch norms backpropagate through their
/// frozen affine transforms and contribute no parameter gradients; the input
/// gradients remain exact for the inference-mode forward.
pub fn critic_backward(
    spec: &CriticSpec,
    params: &ParameterSet,
    cache: &CriticCache,
    d_q: &Array1<f64>,
) -> (Gradients, Array2<f64>, Array2<f64>) {
    let mut grads = Gradients::new();
    let batch = d_q.len();
    let d_q2 = d_q.clone().into_shape((batch, 1)).unwrap();

    let d_out = match &cache.out_bn {
        Some(bn) => bn2d_backward(bn, params, "out_bn", &d_q2, &mut grads),
        None => {
            let mut d = d_q2;
            bn_inference_backward(params, "out_bn", &mut d);
            d
        }
    };
    let (d_joint2_relu, d_w, d_b) =
        dense_backward(&cache.joint2_relu, &params.view2("out.weight"), &d_out);
    grads.insert("out.weight", d_w.into_dyn());
    grads.insert("out.bias", d_b.into_dyn());

    let d_j2n = relu2_backward(&cache.joint2_relu, d_joint2_relu);
    let d_j2 = match &cache.joint2_bn {
        Some(bn) => bn2d_backward(bn, params, "joint_bn2", &d_j2n, &mut grads),
        None => {
            let mut d = d_j2n;
            bn_inference_backward(params, "joint_bn2", &mut d);
            d
        }
    };
    let (d_joint1_relu, d_w, d_b) =
        dense_backward(&cache.joint1_relu, &params.view2("joint2.weight"), &d_j2);
    grads.insert("joint2.weight", d_w.into_dyn());
    grads.insert("joint2.bias", d_b.into_dyn());

    let d_j1n = relu2_backward(&cache.joint1_relu, d_joint1_relu);
    let d_j1 = match &cache.joint1_bn {
        Some(bn) => bn2d_backward(bn, params, "joint_bn1", &d_j1n, &mut grads),
        None => {
            let mut d = d_j1n;
            bn_inference_backward(params, "joint_bn1", &mut d);
            d
        }
    };
    let (d_concat, d_w, d_b) = dense_backward(&cache.concat, &params.view2("joint1.weight"), &d_j1);
    grads.insert("joint1.weight", d_w.into_dyn());
    grads.insert("joint1.bias", d_b.into_dyn());

    let d_state_relu = d_concat.slice(ndarray::s![.., ..spec.state_units]).to_owned();
    let d_action_relu = d_concat.slice(ndarray::s![.., spec.state_units..]).to_owned();
    let state_relu = cache.concat.slice(ndarray::s![.., ..spec.state_units]).to_owned();
    let action_relu = cache.concat.slice(ndarray::s![.., spec.state_units..]).to_owned();

    let d_s = relu2_backward(&state_relu, d_state_relu);
    let (d_state, d_w, d_b) = dense_backward(&cache.state, &params.view2("state_fc.weight"), &d_s);
    grads.insert("state_fc.weight", d_w.into_dyn());
    grads.insert("state_fc.bias", d_b.into_dyn());

    let d_a = relu2_backward(&action_relu, d_action_relu);
    let (d_action, d_w, d_b) = dense_backward(&cache.action, &params.view2("action_fc.weight"), &d_a);
    grads.insert("action_fc.weight", d_w.into_dyn());
    grads.insert("action_fc.bias", d_b.into_dyn());

    (grads, d_state, d_action)
}
