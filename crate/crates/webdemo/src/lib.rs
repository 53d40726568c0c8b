//! Builds a single self-contained HTML page around a trained transmitter /
//! receiver pair. The networks' parameters are embedded as JSON and executed
//! by JavaScript mirrors of the inference-mode forward passes; reference
//! input/output vectors computed natively at generation time are baked in, so
//! the page verifies its own numerics every time it loads.
//!
//! The page needs no server, no build step and no network access — it is one
//! file that works from `file://`.

use linklearn::channel::{ChannelKind, ChannelRealization};
use linklearn::checkpoint::{Checkpoint, SystemKind};
use linklearn::error::{Error, Result};
use linklearn::eval::{BlerRecord, NeuralLink};
use linklearn::nn::{
    assemble_receiver_input, init_receiver, init_transmitter, receiver_forward,
    transmitter_forward, Act, ConvSpec, NetworkSpec, ParameterSet, TrainMode,
};
use ndarray::{Array2, Array3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde_json::{json, Value};

/// The page skeleton; generation splices the model, reference vectors, curve
/// data and metadata into its `/*…_JSON*/null` markers.
pub const TEMPLATE: &str = include_str!("../template.html");

/// Everything one generated page embeds.
pub struct PageSpec {
    spec: NetworkSpec,
    transmitter: ParameterSet,
    receiver: ParameterSet,
    meta: Value,
    curves: Vec<(String, Vec<BlerRecord>)>,
}

impl PageSpec {
    /// Embeds the deployed pair of a checkpoint: the actor of the
    /// reinforcement-learned system or the transmitter of the supervised
    /// baseline, plus the receiver.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        // Borrow the evaluation loader's shape validation before pulling the
        // raw parameter sets out ourselves.
        NeuralLink::from_checkpoint(ck)?;
        let tx_key = match ck.system {
            SystemKind::Ddpg => "actor",
            SystemKind::Ae => "transmitter",
        };
        let channel = match ck.config.channel.kind {
            ChannelKind::Rician => format!(
                "rician (L = {}) at {} dB",
                ck.config.channel.rician_factor, ck.config.train.snr_db
            ),
            kind => format!("{kind} at {} dB", ck.config.train.snr_db),
        };
        Ok(Self {
            spec: ck.config.network_spec(),
            transmitter: ck.params[tx_key].clone(),
            receiver: ck.params["receiver"].clone(),
            meta: json!({
                "system": ck.system.to_string(),
                "episode": ck.episode,
                "k": ck.config.train.k,
                "width_scale": ck.config.network.width_scale,
                "channel": channel,
            }),
            curves: Vec::new(),
        })
    }

    /// Embeds freshly initialized networks, so the page can be tried without
    /// training anything first.
    pub fn untrained(k: usize, width_scale: f64, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("block length must be positive".into()));
        }
        if !(width_scale.is_finite() && width_scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "width scale must be finite and > 0, got {width_scale}"
            )));
        }
        let spec = NetworkSpec::scaled(k, width_scale);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transmitter = init_transmitter(&spec.transmitter, &mut rng);
        let receiver = init_receiver(&spec.receiver, &mut rng);
        Ok(Self {
            spec,
            transmitter,
            receiver,
            meta: json!({
                "system": "untrained",
                "episode": 0,
                "k": k,
                "width_scale": width_scale,
                "seed": seed,
                "channel": Value::Null,
            }),
            curves: Vec::new(),
        })
    }

    /// Adds one measured curve to the page's explorer chart.
    pub fn add_curve(&mut self, label: impl Into<String>, records: Vec<BlerRecord>) {
        self.curves.push((label.into(), records));
    }

    /// Renders the finished page.
    pub fn render(&self) -> Result<String> {
        let model = json!({
            "k": self.spec.k(),
            "tx": stack_json(&self.spec.transmitter.convs, &self.transmitter),
            "rx": stack_json(&self.spec.receiver.convs, &self.receiver),
        });
        let selftest = reference_vectors(&self.spec, &self.transmitter, &self.receiver)?;
        let curves = Value::Array(
            self.curves
                .iter()
                .map(|(label, records)| {
                    json!({
                        "label": label,
                        "points": records.iter().map(|r| json!({
                            "snr": r.snr_db,
                            "bler": r.bler,
                            "ber": r.ber,
                            "blocks": r.num_blocks,
                        })).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        );
        let mut page = TEMPLATE.to_string();
        page = splice(page, "MODEL_JSON", &model)?;
        page = splice(page, "SELFTEST_JSON", &selftest)?;
        page = splice(page, "CURVES_JSON", &curves)?;
        page = splice(page, "META_JSON", &self.meta)?;
        Ok(page)
    }
}

fn act_name(act: Act) -> &'static str {
    match act {
        Act::Mish => "mish",
        Act::Relu => "relu",
        Act::Sigmoid => "sigmoid",
        Act::Linear => "linear",
    }
}

fn flat(p: &ParameterSet, name: &str) -> Vec<f64> {
    p.get(name).iter().copied().collect()
}

/// One convolution stack as the JSON layout the page's JavaScript consumes:
/// weights stay flat in their native `[c_out][c_in][kernel]` order.
fn stack_json(convs: &[ConvSpec], p: &ParameterSet) -> Value {
    Value::Array(
        convs
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let idx = i + 1;
                let bn = if layer.batch_norm {
                    json!({
                        "g": flat(p, &format!("bn{idx}.gamma")),
                        "be": flat(p, &format!("bn{idx}.beta")),
                        "m": flat(p, &format!("bn{idx}.running_mean")),
                        "v": flat(p, &format!("bn{idx}.running_var")),
                    })
                } else {
                    Value::Null
                };
                json!({
                    "cin": layer.c_in,
                    "cout": layer.c_out,
                    "kernel": layer.kernel,
                    "act": act_name(layer.act),
                    "w": flat(p, &format!("conv{idx}.weight")),
                    "b": flat(p, &format!("conv{idx}.bias")),
                    "bn": bn,
                })
            })
            .collect(),
    )
}

/// Runs one fixed block through the native forward passes and records every
/// boundary value, giving the page a known-good transcript to check itself
/// against: bits -> transmitted symbols, and (received, channel) -> bit
/// probabilities.
fn reference_vectors(
    spec: &NetworkSpec,
    transmitter: &ParameterSet,
    receiver: &ParameterSet,
) -> Result<Value> {
    let k = spec.k();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e1f_7e57);
    let bits: Vec<f64> = (0..k).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
    let messages = Array2::from_shape_vec((1, k), bits.clone()).expect("1 x K bits");
    let (x, _) = transmitter_forward(&spec.transmitter, transmitter, &messages, TrainMode::Inference)?;

    let h = ChannelRealization { re: 0.82, im: -0.41 };
    let noise_scale = (0.05f64 / 2.0).sqrt();
    let mut y = Array3::<f64>::zeros((1, k, 2));
    for t in 0..k {
        let (re, im) = (x[[0, t, 0]], x[[0, t, 1]]);
        let n1: f64 = rng.sample(StandardNormal);
        let n2: f64 = rng.sample(StandardNormal);
        y[[0, t, 0]] = h.re * re - h.im * im + noise_scale * n1;
        y[[0, t, 1]] = h.re * im + h.im * re + noise_scale * n2;
    }
    let input = assemble_receiver_input(&y, &[h]);
    let (probs, _) = receiver_forward(&spec.receiver, receiver, &input, TrainMode::Inference);

    Ok(json!({
        "bits": bits,
        "tx": x.as_slice().expect("standard layout").to_vec(),
        "h": { "re": h.re, "im": h.im },
        "y": y.as_slice().expect("standard layout").to_vec(),
        "probs": probs.as_slice().expect("standard layout").to_vec(),
    }))
}

/// Replaces one `/*marker*/null` placeholder with JSON. `</` is escaped as
/// `<\/` (a no-op inside JSON strings) so no embedded text can terminate the
/// surrounding script element early.
fn splice(page: String, marker: &str, value: &Value) -> Result<String> {
    let needle = format!("/*{marker}*/null");
    if !page.contains(&needle) {
        return Err(Error::InvalidArgument(format!("template lacks the {marker} marker")));
    }
    let text = value.to_string().replace("</", "<\\/");
    Ok(page.replacen(&needle, &text, 1))
}
