//! Experiment configuration: a TOML file with nested sections, profile-aware
//! defaults, dotted-key overrides and total validation.
//!
//! Every field has a default, so an empty file is a complete experiment. The
//! `profile` key selects which scale the defaults target:
//!
//! * `paper` — the full-size benchmark: 30 000 episodes of 500 steps on
//!   256-bit blocks, replay batches of 64, 100 000 evaluation blocks.
//! * `desk` — a laptop-friendly run with the same algorithm and the same
//!   layer widths: 300 episodes of 100 steps on 8-bit blocks, replay batches
//!   of 16, 10 000 evaluation blocks.
//!
//! Parsing is staged so that every failure mode maps to a distinct error:
//! unreadable file → [`Error::Io`], malformed TOML → [`Error::ConfigSyntax`],
//! a key the schema does not know → [`Error::UnknownConfigKey`], and a value
//! outside its documented range → [`Error::ConfigOutOfRange`] naming the
//! offending key. Overrides from the command line (`--set a.b=v`) are spliced
//! into the raw TOML tree before type-checking, so they obey the same rules
//! as file keys.

use crate::agent::AgentHyper;
use crate::channel::ChannelConfig;
use crate::error::{Error, Result};
use crate::nn::NetworkSpec;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

/// Which set of scale defaults to start from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Full-size benchmark dimensions.
    Paper,
    /// Small dimensions that finish in minutes on one core.
    Desk,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Paper => "paper",
            Profile::Desk => "desk",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "paper" => Ok(Profile::Paper),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::InvalidArgument(format!(
                "unknown profile `{other}` (expected paper or desk)"
            ))),
        }
    }
}

/// `[train]` section: outer-loop dimensions and the receiver's optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    /// Number of episodes `E`.
    pub episodes: usize,
    /// Steps per episode `T`.
    pub steps_per_episode: usize,
    /// Bits per block `K`.
    pub k: usize,
    /// Training signal-to-noise ratio in dB.
    pub snr_db: f64,
    /// Adam learning rate for the receiver network.
    pub receiver_lr: f64,
    /// Write a checkpoint every this many episodes (0 = only at the end).
    pub checkpoint_every: usize,
}

/// `[network]` section: width selection for the reference architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSection {
    /// Multiplier on every hidden channel/unit count. 1.0 is the reference
    /// architecture; values below 1 shrink the nets for quick experiments.
    pub width_scale: f64,
}

/// `[eval]` section: the SNR sweep run after training (and by `eval`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub snr_start_db: f64,
    pub snr_end_db: f64,
    pub snr_step_db: f64,
    /// Number of blocks simulated per SNR point.
    pub blocks: usize,
}

/// Fully resolved experiment description: what to train, on which channel,
/// with which hyperparameters, and how to evaluate it.
///
/// Construct via [`ExperimentConfig::defaults`], [`parse_config`] or
/// [`parse_config_str`]; all three guarantee [`validate`](Self::validate)
/// passes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub profile: Profile,
    /// Master seed for every random draw in the run.
    pub seed: u64,
    pub train: TrainSection,
    pub channel: ChannelConfig,
    pub agent: AgentHyper,
    pub network: NetworkSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    /// The documented defaults for a profile.
    pub fn defaults(profile: Profile) -> Self {
        let (episodes, steps, k, batch, blocks, checkpoint_every) = match profile {
            Profile::Paper => (30_000, 500, 256, 64, 100_000, 1_000),
            Profile::Desk => (300, 100, 8, 16, 10_000, 100),
        };
        Self {
            profile,
            seed: 1,
            train: TrainSection {
                episodes,
                steps_per_episode: steps,
                k,
                snr_db: 20.0,
                receiver_lr: 0.001,
                checkpoint_every,
            },
            channel: ChannelConfig::rayleigh(),
            agent: AgentHyper { batch_size: batch, ..AgentHyper::default() },
            network: NetworkSection { width_scale: 1.0 },
            eval: EvalSection {
                snr_start_db: 0.0,
                snr_end_db: 20.0,
                snr_step_db: 2.0,
                blocks,
            },
        }
    }

    /// The layer dimensions this config asks for.
    pub fn network_spec(&self) -> NetworkSpec {
        NetworkSpec::scaled(self.train.k, self.network.width_scale)
    }

    /// Checks every field against its documented range. Errors name the
    /// offending dotted key.
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, message: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::ConfigOutOfRange { key: key.into(), message: message.into() })
            }
        };
        check(self.train.episodes > 0, "train.episodes", "must be positive")?;
        check(self.train.steps_per_episode > 0, "train.steps_per_episode", "must be positive")?;
        check(self.train.k > 0, "train.k", "must be positive")?;
        check(self.train.snr_db.is_finite(), "train.snr_db", "must be finite")?;
        check(
            self.train.receiver_lr > 0.0 && self.train.receiver_lr.is_finite(),
            "train.receiver_lr",
            "must be positive",
        )?;
        check(
            self.channel.rician_factor.is_finite() && self.channel.rician_factor >= 0.0,
            "channel.rician_factor",
            "must be finite and nonnegative",
        )?;
        if let Some(sigma) = self.channel.sigma {
            check(
                sigma.is_finite() && sigma > 0.0,
                "channel.sigma",
                "must be positive when given",
            )?;
        }
        self.agent.validate()?;
        check(
            self.network.width_scale > 0.0 && self.network.width_scale.is_finite(),
            "network.width_scale",
            "must be positive",
        )?;
        check(self.eval.snr_step_db > 0.0, "eval.snr_step_db", "must be positive")?;
        check(
            self.eval.snr_end_db >= self.eval.snr_start_db,
            "eval.snr_end_db",
            "must be at least eval.snr_start_db",
        )?;
        check(
            self.eval.snr_start_db.is_finite() && self.eval.snr_end_db.is_finite(),
            "eval.snr_start_db",
            "must be finite",
        )?;
        check(self.eval.blocks > 0, "eval.blocks", "must be positive")?;
        Ok(())
    }

    /// Serializes the resolved config back to TOML, ready to echo into an
    /// output directory so every run records exactly what produced it.
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("resolved config always serializes")
    }
}

/// One `key.path=value` override as given on the command line.
fn parse_override(raw: &str) -> Result<(Vec<String>, toml::Value)> {
    let (path, value) = raw.split_once('=').ok_or_else(|| {
        Error::InvalidArgument(format!("override `{raw}` is not of the form key.path=value"))
    })?;
    let path: Vec<String> = path.trim().split('.').map(|s| s.trim().to_string()).collect();
    if path.iter().any(|seg| seg.is_empty()) {
        return Err(Error::InvalidArgument(format!("override `{raw}` has an empty key segment")));
    }
    // Interpret the right-hand side as a TOML literal (so numbers and bools
    // keep their types); anything that does not parse is a plain string,
    // which lets users write channel.kind=rayleigh without quotes.
    let value = match format!("v = {}", value.trim()).parse::<toml::Table>() {
        Ok(mut table) => table.remove("v").expect("literal `v` key always present"),
        Err(_) => toml::Value::String(value.trim().to_string()),
    };
    Ok((path, value))
}

/// Splices an override into the raw TOML tree, creating intermediate tables.
fn apply_override(root: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().expect("override path is never empty");
    let mut table = root;
    for seg in parents {
        let entry = table
            .entry(seg.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| {
            Error::InvalidArgument(format!("override segment `{seg}` is not a section"))
        })?;
    }
    table.insert(last.clone(), value);
    Ok(())
}

/// The full key schema, used to reject typos with a precise message before
/// type checking. Each entry is (section, allowed keys); top-level scalars
/// live under "".
const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("", &["profile", "seed"]),
    ("train", &["episodes", "steps_per_episode", "k", "snr_db", "receiver_lr", "checkpoint_every"]),
    ("channel", &["kind", "rician_factor", "sigma"]),
    (
        "agent",
        &[
            "gamma",
            "tau",
            "actor_lr",
            "critic_lr",
            "exploration_noise_std",
            "buffer_capacity",
            "batch_size",
        ],
    ),
    ("network", &["width_scale"]),
    ("eval", &["snr_start_db", "snr_end_db", "snr_step_db", "blocks"]),
];

fn check_known_keys(root: &toml::Table) -> Result<()> {
    let allowed_in = |section: &str| -> Option<&'static [&'static str]> {
        KNOWN_KEYS.iter().find(|(name, _)| *name == section).map(|(_, keys)| *keys)
    };
    let top = allowed_in("").expect("schema lists the top level");
    for (key, value) in root {
        match value {
            toml::Value::Table(section) => {
                let keys = allowed_in(key)
                    .ok_or_else(|| Error::UnknownConfigKey(key.clone()))?;
                for (inner, inner_value) in section {
                    if !keys.contains(&inner.as_str()) {
                        return Err(Error::UnknownConfigKey(format!("{key}.{inner}")));
                    }
                    if inner_value.is_table() {
                        return Err(Error::UnknownConfigKey(format!(
                            "{key}.{inner} (nested sections are not part of the schema)"
                        )));
                    }
                }
            }
            _ => {
                if !top.contains(&key.as_str()) {
                    return Err(Error::UnknownConfigKey(key.clone()));
                }
            }
        }
    }
    Ok(())
}

/// Optional-field mirror of the config used to overlay file values onto
/// profile defaults. Unknown keys were already rejected by the schema walk,
/// so plain serde structs suffice here.
#[derive(Debug, Default, Deserialize)]
struct PartialConfig {
    profile: Option<Profile>,
    seed: Option<u64>,
    #[serde(default)]
    train: PartialTrain,
    channel: Option<ChannelConfig>,
    #[serde(default)]
    agent: PartialAgent,
    #[serde(default)]
    network: PartialNetwork,
    #[serde(default)]
    eval: PartialEval,
}

#[derive(Debug, Default, Deserialize)]
struct PartialTrain {
    episodes: Option<usize>,
    steps_per_episode: Option<usize>,
    k: Option<usize>,
    snr_db: Option<f64>,
    receiver_lr: Option<f64>,
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct PartialAgent {
    gamma: Option<f64>,
    tau: Option<f64>,
    actor_lr: Option<f64>,
    critic_lr: Option<f64>,
    exploration_noise_std: Option<f64>,
    buffer_capacity: Option<usize>,
    batch_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
struct PartialNetwork {
    width_scale: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
struct PartialEval {
    snr_start_db: Option<f64>,
    snr_end_db: Option<f64>,
    snr_step_db: Option<f64>,
    blocks: Option<usize>,
}

fn overlay(defaults: ExperimentConfig, partial: PartialConfig) -> ExperimentConfig {
    let mut cfg = defaults;
    if let Some(seed) = partial.seed {
        cfg.seed = seed;
    }
    let t = partial.train;
    if let Some(v) = t.episodes {
        cfg.train.episodes = v;
    }
    if let Some(v) = t.steps_per_episode {
        cfg.train.steps_per_episode = v;
    }
    if let Some(v) = t.k {
        cfg.train.k = v;
    }
    if let Some(v) = t.snr_db {
        cfg.train.snr_db = v;
    }
    if let Some(v) = t.receiver_lr {
        cfg.train.receiver_lr = v;
    }
    if let Some(v) = t.checkpoint_every {
        cfg.train.checkpoint_every = v;
    }
    if let Some(channel) = partial.channel {
        cfg.channel = channel;
    }
    let a = partial.agent;
    if let Some(v) = a.gamma {
        cfg.agent.gamma = v;
    }
    if let Some(v) = a.tau {
        cfg.agent.tau = v;
    }
    if let Some(v) = a.actor_lr {
        cfg.agent.actor_lr = v;
    }
    if let Some(v) = a.critic_lr {
        cfg.agent.critic_lr = v;
    }
    if let Some(v) = a.exploration_noise_std {
        cfg.agent.exploration_noise_std = v;
    }
    if let Some(v) = a.buffer_capacity {
        cfg.agent.buffer_capacity = v;
    }
    if let Some(v) = a.batch_size {
        cfg.agent.batch_size = v;
    }
    if let Some(v) = partial.network.width_scale {
        cfg.network.width_scale = v;
    }
    let e = partial.eval;
    if let Some(v) = e.snr_start_db {
        cfg.eval.snr_start_db = v;
    }
    if let Some(v) = e.snr_end_db {
        cfg.eval.snr_end_db = v;
    }
    if let Some(v) = e.snr_step_db {
        cfg.eval.snr_step_db = v;
    }
    if let Some(v) = e.blocks {
        cfg.eval.blocks = v;
    }
    cfg
}

/// Parses a config from TOML text plus `key.path=value` overrides.
///
/// Stage order: syntax → overrides spliced in → unknown-key walk → typed
/// decode → profile defaults overlay → range validation. The `profile` key
/// (file or override) picks the default set; absent, it falls back to
/// `desk` so a bare invocation runs at laptop scale.
pub fn parse_config_str(text: &str, overrides: &[String]) -> Result<ExperimentConfig> {
    let mut root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.message().to_string()))?;
    for raw in overrides {
        let (path, value) = parse_override(raw)?;
        apply_override(&mut root, &path, value)?;
    }
    check_known_keys(&root)?;
    let partial: PartialConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::ConfigSyntax(e.message().to_string()))?;
    let profile = partial.profile.unwrap_or(Profile::Desk);
    let cfg = overlay(ExperimentConfig::defaults(profile), partial);
    cfg.validate()?;
    Ok(cfg)
}

/// Parses a config file (or pure defaults when `path` is `None`), applying
/// overrides either way.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<ExperimentConfig> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p)?,
        None => String::new(),
    };
    parse_config_str(&text, overrides)
}
