//! Checkpoint persistence: everything a training run needs to resume
//! bit-exactly, in one self-validating binary file.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset 0   8-byte magic "LNKCKPT1"
//!        8   u32 schema version (currently 1)
//!       12   u64 metadata length M
//!       20   M bytes of JSON metadata (config snapshot, episode counter,
//!            random-source state, optimizer step counts, buffer geometry)
//!        .   u64 array count N, then N records of
//!              u64 name length, name bytes,
//!              u64 rank, u64 dims[rank],
//!              f64 data (product of dims values, little-endian bits)
//!        .   32-byte SHA-256 of every preceding byte
//! ```
//!
//! Floats travel as raw IEEE-754 bits, so save → load round-trips every
//! array bitwise on any platform. The trailing digest turns truncation and
//! bit rot into a checked [`Error::CheckpointCorrupt`] instead of silently
//! wrong numbers, and the version field makes future layout changes a
//! checked [`Error::CheckpointVersion`].

use crate::agent::Transition;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::nn::{AdamState, ParameterSet};
use crate::signal::{BlockRole, ComplexBlock, Message};
use ndarray::{Array2, ArrayD, IxDyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

const MAGIC: &[u8; 8] = b"LNKCKPT1";
const VERSION: u32 = 1;
/// Parser guards against absurd header values in damaged files.
const MAX_NAME_LEN: u64 = 4096;
const MAX_RANK: u64 = 8;

/// Which trainer produced the checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SystemKind {
    /// Reinforcement-learned transmitter (actor/critic/replay buffer).
    Ddpg,
    /// Supervised autoencoder baseline (transmitter + receiver, backprop
    /// through a differentiable channel).
    Ae,
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SystemKind::Ddpg => "ddpg",
            SystemKind::Ae => "ae",
        })
    }
}

/// Exact position of a ChaCha random stream, sufficient to clone the
/// generator. `word_pos` is split into two 64-bit halves so the metadata
/// stays plain JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngSnapshot {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos_lo: u64,
    pub word_pos_hi: u64,
}

impl RngSnapshot {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let word_pos = rng.get_word_pos();
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos_lo: word_pos as u64,
            word_pos_hi: (word_pos >> 64) as u64,
        }
    }

    pub fn restore(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(((self.word_pos_hi as u128) << 64) | self.word_pos_lo as u128);
        rng
    }
}

/// Replay-buffer contents in resumable form: the stored transitions plus the
/// FIFO geometry ([`crate::agent::ReplayBuffer::from_parts`] rebuilds the
/// live buffer from these).
#[derive(Debug, Clone, PartialEq)]
pub struct BufferSnapshot {
    pub capacity: usize,
    pub batch: usize,
    pub write: usize,
    pub transitions: Vec<Transition>,
}

/// A complete training state: networks, optimizer moments, replay buffer and
/// random-source position, plus the resolved config that produced them.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub system: SystemKind,
    /// Episodes completed so far (resume starts at `episode + 1`).
    pub episode: u64,
    pub config: ExperimentConfig,
    pub rng: RngSnapshot,
    /// Named parameter sets: "actor", "critic", "target_actor",
    /// "target_critic", "receiver" for the RL system; "transmitter",
    /// "receiver" for the autoencoder baseline.
    pub params: BTreeMap<String, ParameterSet>,
    /// Adam moments keyed like `params` (targets have no optimizer).
    pub opts: BTreeMap<String, AdamState>,
    pub buffer: Option<BufferSnapshot>,
}

/// JSON header: everything except the float arrays.
#[derive(Serialize, Deserialize)]
struct MetaDoc {
    system: SystemKind,
    episode: u64,
    config: ExperimentConfig,
    rng: RngSnapshot,
    /// Adam step counters, keyed like `Checkpoint::opts`.
    opt_steps: BTreeMap<String, u64>,
    buffer: Option<BufferMeta>,
}

#[derive(Serialize, Deserialize)]
struct BufferMeta {
    capacity: u64,
    batch: u64,
    write: u64,
    len: u64,
    /// Bits per block of the stored transitions.
    k: u64,
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_array(out: &mut Vec<u8>, name: &str, array: &ArrayD<f64>) {
    push_u64(out, name.len() as u64);
    out.extend_from_slice(name.as_bytes());
    push_u64(out, array.ndim() as u64);
    for &d in array.shape() {
        push_u64(out, d as u64);
    }
    let canonical = array.as_standard_layout();
    for &v in canonical.as_slice().expect("standard layout is contiguous") {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

/// Flattens the buffer into dense arrays (bits and flags as 0.0/1.0) so it
/// shares the float-array container with the network parameters.
fn buffer_arrays(snapshot: &BufferSnapshot) -> (Array2<f64>, Array2<f64>, Vec<f64>, Array2<f64>, Vec<f64>) {
    let n = snapshot.transitions.len();
    let k = snapshot.transitions.first().map_or(0, |t| t.state.len());
    let mut states = Array2::zeros((n, k));
    let mut actions = Array2::zeros((n, 2 * k));
    let mut next_states = Array2::zeros((n, k));
    let mut rewards = Vec::with_capacity(n);
    let mut done = Vec::with_capacity(n);
    for (i, t) in snapshot.transitions.iter().enumerate() {
        for (j, &b) in t.state.bits().iter().enumerate() {
            states[[i, j]] = f64::from(b);
        }
        for (j, v) in t.action.interleaved().into_iter().enumerate() {
            actions[[i, j]] = v;
        }
        for (j, &b) in t.next_state.bits().iter().enumerate() {
            next_states[[i, j]] = f64::from(b);
        }
        rewards.push(t.reward);
        done.push(f64::from(u8::from(t.done)));
    }
    (states, actions, rewards, next_states, done)
}

/// Serializes a checkpoint to its byte representation.
pub fn encode_checkpoint(ck: &Checkpoint) -> Vec<u8> {
    let meta = MetaDoc {
        system: ck.system,
        episode: ck.episode,
        config: ck.config.clone(),
        rng: ck.rng,
        opt_steps: ck.opts.iter().map(|(k, v)| (k.clone(), v.step_count())).collect(),
        buffer: ck.buffer.as_ref().map(|b| BufferMeta {
            capacity: b.capacity as u64,
            batch: b.batch as u64,
            write: b.write as u64,
            len: b.transitions.len() as u64,
            k: b.transitions.first().map_or(0, |t| t.state.len()) as u64,
        }),
    };
    let meta_bytes = serde_json::to_vec(&meta).expect("metadata always serializes");

    // Collect (name, array) pairs in a deterministic order so identical
    // states produce identical files.
    let mut arrays: Vec<(String, ArrayD<f64>)> = Vec::new();
    for (net, params) in &ck.params {
        for (name, value) in params.iter() {
            arrays.push((format!("param/{net}/{name}"), value.clone()));
        }
    }
    for (net, opt) in &ck.opts {
        for (name, value) in opt.first_moments() {
            arrays.push((format!("adam/{net}/m/{name}"), value.clone()));
        }
        for (name, value) in opt.second_moments() {
            arrays.push((format!("adam/{net}/v/{name}"), value.clone()));
        }
    }
    if let Some(buffer) = &ck.buffer {
        let (states, actions, rewards, next_states, done) = buffer_arrays(buffer);
        arrays.push(("buffer/states".into(), states.into_dyn()));
        arrays.push(("buffer/actions".into(), actions.into_dyn()));
        arrays.push(("buffer/rewards".into(), ArrayD::from_shape_vec(IxDyn(&[rewards.len()]), rewards).unwrap()));
        arrays.push(("buffer/next_states".into(), next_states.into_dyn()));
        arrays.push(("buffer/done".into(), ArrayD::from_shape_vec(IxDyn(&[done.len()]), done).unwrap()));
    }

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);
    push_u64(&mut out, meta_bytes.len() as u64);
    out.extend_from_slice(&meta_bytes);
    push_u64(&mut out, arrays.len() as u64);
    for (name, array) in &arrays {
        push_array(&mut out, name, array);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Bounds-checked cursor over the checkpoint bytes; every overrun is a
/// corruption error naming what was being read.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::CheckpointCorrupt(format!("file ends inside {what}"))
        })?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64_array(&mut self, count: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(count.checked_mul(8).ok_or_else(|| {
            Error::CheckpointCorrupt(format!("{what} length overflows"))
        })?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn bits_from_row(row: &[f64], what: &str) -> Result<Vec<u8>> {
    row.iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0u8)
            } else if v == 1.0 {
                Ok(1u8)
            } else {
                Err(Error::CheckpointCorrupt(format!("{what} holds non-bit value {v}")))
            }
        })
        .collect()
}

fn rebuild_buffer(
    meta: &BufferMeta,
    arrays: &mut BTreeMap<String, ArrayD<f64>>,
) -> Result<BufferSnapshot> {
    let mut named = |name: &str| -> Result<ArrayD<f64>> {
        arrays.remove(name).ok_or_else(|| {
            Error::CheckpointCorrupt(format!("buffer metadata present but `{name}` array missing"))
        })
    };
    let states = named("buffer/states")?;
    let actions = named("buffer/actions")?;
    let rewards = named("buffer/rewards")?;
    let next_states = named("buffer/next_states")?;
    let done = named("buffer/done")?;
    let n = meta.len as usize;
    let k = meta.k as usize;
    let expect_shape = |name: &str, got: &[usize], want: &[usize]| -> Result<()> {
        if got == want {
            Ok(())
        } else {
            Err(Error::CheckpointCorrupt(format!(
                "`{name}` has shape {got:?}, expected {want:?}"
            )))
        }
    };
    expect_shape("buffer/states", states.shape(), &[n, k])?;
    expect_shape("buffer/actions", actions.shape(), &[n, 2 * k])?;
    expect_shape("buffer/rewards", rewards.shape(), &[n])?;
    expect_shape("buffer/next_states", next_states.shape(), &[n, k])?;
    expect_shape("buffer/done", done.shape(), &[n])?;
    let states = states.into_dimensionality::<ndarray::Ix2>().unwrap();
    let actions = actions.into_dimensionality::<ndarray::Ix2>().unwrap();
    let next_states = next_states.into_dimensionality::<ndarray::Ix2>().unwrap();
    let mut transitions = Vec::with_capacity(n);
    for i in 0..n {
        let state = Message::new(bits_from_row(states.row(i).as_slice().unwrap(), "buffer/states")?)
            .map_err(|e| Error::CheckpointCorrupt(format!("stored state invalid: {e}")))?;
        let action = ComplexBlock::from_interleaved(
            actions.row(i).as_slice().unwrap(),
            BlockRole::Encoded,
        )
        .map_err(|e| Error::CheckpointCorrupt(format!("stored action invalid: {e}")))?;
        let next_state =
            Message::new(bits_from_row(next_states.row(i).as_slice().unwrap(), "buffer/next_states")?)
                .map_err(|e| Error::CheckpointCorrupt(format!("stored state invalid: {e}")))?;
        let done_flag = match done[i] {
            v if v == 0.0 => false,
            v if v == 1.0 => true,
            v => {
                return Err(Error::CheckpointCorrupt(format!(
                    "`buffer/done` holds non-flag value {v}"
                )))
            }
        };
        transitions.push(Transition {
            state,
            action,
            reward: rewards[i],
            next_state,
            done: done_flag,
        });
    }
    Ok(BufferSnapshot {
        capacity: meta.capacity as usize,
        batch: meta.batch as usize,
        write: meta.write as usize,
        transitions,
    })
}

/// Parses checkpoint bytes, validating magic, version, checksum and every
/// length field before touching the payload.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < MAGIC.len() + 4 + 8 + 32 {
        return Err(Error::CheckpointCorrupt("file shorter than the fixed header".into()));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    let computed = Sha256::digest(body);
    if computed.as_slice() != digest {
        return Err(Error::CheckpointCorrupt("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::CheckpointCorrupt("bad magic bytes".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::CheckpointVersion { found: version, expected: VERSION });
    }
    let meta_len = r.u64("metadata length")? as usize;
    let meta_bytes = r.take(meta_len, "metadata")?;
    let meta: MetaDoc = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::CheckpointCorrupt(format!("metadata does not parse: {e}")))?;

    let array_count = r.u64("array count")?;
    let mut arrays: BTreeMap<String, ArrayD<f64>> = BTreeMap::new();
    for _ in 0..array_count {
        let name_len = r.u64("array name length")?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::CheckpointCorrupt(format!("array name of {name_len} bytes")));
        }
        let name = std::str::from_utf8(r.take(name_len as usize, "array name")?)
            .map_err(|_| Error::CheckpointCorrupt("array name is not UTF-8".into()))?
            .to_string();
        let rank = r.u64("array rank")?;
        if rank > MAX_RANK {
            return Err(Error::CheckpointCorrupt(format!("array rank {rank}")));
        }
        let mut dims = Vec::with_capacity(rank as usize);
        let mut count: usize = 1;
        for _ in 0..rank {
            let d = r.u64("array dimension")? as usize;
            count = count.checked_mul(d).ok_or_else(|| {
                Error::CheckpointCorrupt("array element count overflows".into())
            })?;
            dims.push(d);
        }
        // Refuse to allocate more than the file could possibly hold.
        if count.saturating_mul(8) > body.len() - r.pos {
            return Err(Error::CheckpointCorrupt(format!(
                "array `{name}` claims more data than the file holds"
            )));
        }
        let data = r.f64_array(count, "array data")?;
        let array = ArrayD::from_shape_vec(IxDyn(&dims), data)
            .map_err(|e| Error::CheckpointCorrupt(format!("array `{name}`: {e}")))?;
        if arrays.insert(name.clone(), array).is_some() {
            return Err(Error::CheckpointCorrupt(format!("duplicate array `{name}`")));
        }
    }
    if r.pos != body.len() {
        return Err(Error::CheckpointCorrupt(format!(
            "{} trailing bytes after the last array",
            body.len() - r.pos
        )));
    }

    // Regroup arrays into parameter sets and optimizer states.
    let mut params: BTreeMap<String, ParameterSet> = BTreeMap::new();
    let mut first: BTreeMap<String, BTreeMap<String, ArrayD<f64>>> = BTreeMap::new();
    let mut second: BTreeMap<String, BTreeMap<String, ArrayD<f64>>> = BTreeMap::new();
    let mut buffer_arrays: BTreeMap<String, ArrayD<f64>> = BTreeMap::new();
    for (name, array) in arrays {
        let mut parts = name.splitn(2, '/');
        let kind = parts.next().unwrap_or_default();
        let rest = parts.next().unwrap_or_default();
        match kind {
            "param" => {
                let (net, param) = rest.split_once('/').ok_or_else(|| {
                    Error::CheckpointCorrupt(format!("malformed array name `{name}`"))
                })?;
                params
                    .entry(net.to_string())
                    .or_insert_with(ParameterSet::new)
                    .insert(param, array);
            }
            "adam" => {
                let (net, rest) = rest.split_once('/').ok_or_else(|| {
                    Error::CheckpointCorrupt(format!("malformed array name `{name}`"))
                })?;
                let (moment, param) = rest.split_once('/').ok_or_else(|| {
                    Error::CheckpointCorrupt(format!("malformed array name `{name}`"))
                })?;
                let slot = match moment {
                    "m" => first.entry(net.to_string()).or_default(),
                    "v" => second.entry(net.to_string()).or_default(),
                    other => {
                        return Err(Error::CheckpointCorrupt(format!(
                            "unknown moment tag `{other}` in `{name}`"
                        )))
                    }
                };
                slot.insert(param.to_string(), array);
            }
            "buffer" => {
                buffer_arrays.insert(name, array);
            }
            other => {
                return Err(Error::CheckpointCorrupt(format!("unknown array group `{other}`")));
            }
        }
    }
    let mut opts: BTreeMap<String, AdamState> = BTreeMap::new();
    for (net, steps) in &meta.opt_steps {
        let m = first.remove(net).unwrap_or_default();
        let v = second.remove(net).unwrap_or_default();
        opts.insert(net.clone(), AdamState::from_parts(m, v, *steps));
    }
    if let Some(net) = first.keys().chain(second.keys()).next() {
        return Err(Error::CheckpointCorrupt(format!(
            "optimizer arrays for `{net}` lack a step counter in the metadata"
        )));
    }
    let buffer = match &meta.buffer {
        Some(buffer_meta) => Some(rebuild_buffer(buffer_meta, &mut buffer_arrays)?),
        None => {
            if !buffer_arrays.is_empty() {
                return Err(Error::CheckpointCorrupt(
                    "buffer arrays present without buffer metadata".into(),
                ));
            }
            None
        }
    };

    Ok(Checkpoint {
        system: meta.system,
        episode: meta.episode,
        config: meta.config,
        rng: meta.rng,
        params,
        opts,
        buffer,
    })
}

/// Writes the checkpoint atomically: encode, write to a sibling temp file,
/// rename over the target. A crash mid-write never leaves a torn file at
/// `path`.
pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(ck);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, &bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    decode_checkpoint(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{compute_reward, AgentHyper, DdpgAgent};
    use crate::config::{ExperimentConfig, Profile};
    use crate::nn::NetworkSpec;
    use crate::signal::generate_message;
    use rand::Rng;

    /// A small but fully populated checkpoint: toy nets, stepped optimizers,
    /// a few buffer entries, an advanced RNG.
    fn sample_checkpoint() -> Checkpoint {
        let spec = NetworkSpec::toy(4);
        let hyper = AgentHyper { buffer_capacity: 8, batch_size: 2, ..AgentHyper::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let mut agent = DdpgAgent::new(spec.clone(), hyper, &mut rng).unwrap();
        // Populate the buffer with genuine transitions.
        for _ in 0..5 {
            let state = generate_message(4, &mut rng).unwrap();
            let action = agent.select_action(&state, 0.0, &mut rng).unwrap();
            let probs: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.95)).collect();
            let reward = compute_reward(&state, &probs).unwrap();
            let next_state = generate_message(4, &mut rng).unwrap();
            agent.buffer.store(Transition {
                state,
                action,
                reward,
                next_state,
                done: false,
            });
        }
        // Step the optimizers so moments are non-trivial.
        let batch = agent.buffer.sample_batch(&mut rng).unwrap();
        let targets = agent.compute_target_q(&batch).unwrap();
        agent.update_critic(&batch, &targets).unwrap();
        agent.update_actor(&batch).unwrap();
        // Advance the RNG so the word position is mid-stream.
        let _: f64 = rng.gen();

        let mut params = BTreeMap::new();
        params.insert("actor".to_string(), agent.actor.clone());
        params.insert("critic".to_string(), agent.critic.clone());
        params.insert("target_actor".to_string(), agent.target_actor.clone());
        params.insert("target_critic".to_string(), agent.target_critic.clone());
        let mut opts = BTreeMap::new();
        opts.insert("actor".to_string(), agent.actor_opt.clone());
        opts.insert("critic".to_string(), agent.critic_opt.clone());
        Checkpoint {
            system: SystemKind::Ddpg,
            episode: 17,
            config: ExperimentConfig::defaults(Profile::Desk),
            rng: RngSnapshot::capture(&rng),
            params,
            opts,
            buffer: Some(BufferSnapshot {
                capacity: agent.buffer.capacity(),
                batch: agent.buffer.batch_size(),
                write: agent.buffer.write_cursor(),
                transitions: agent.buffer.iter().cloned().collect(),
            }),
        }
    }

    fn assert_checkpoints_equal(a: &Checkpoint, b: &Checkpoint) {
        assert_eq!(a.system, b.system);
        assert_eq!(a.episode, b.episode);
        assert_eq!(a.config, b.config);
        assert_eq!(a.rng, b.rng);
        let names = |m: &BTreeMap<String, ParameterSet>| -> Vec<String> {
            m.keys().cloned().collect()
        };
        assert_eq!(names(&a.params), names(&b.params));
        for (net, pa) in &a.params {
            let pb = &b.params[net];
            let pa_names: Vec<_> = pa.iter().map(|(n, _)| n.to_string()).collect();
            let pb_names: Vec<_> = pb.iter().map(|(n, _)| n.to_string()).collect();
            assert_eq!(pa_names, pb_names, "parameter names for {net}");
            for (name, va) in pa.iter() {
                let vb = pb.iter().find(|(n, _)| *n == name).unwrap().1;
                assert_eq!(va.shape(), vb.shape());
                // Bitwise comparison, not approximate.
                for (x, y) in va.iter().zip(vb.iter()) {
                    assert_eq!(x.to_bits(), y.to_bits(), "{net}/{name}");
                }
            }
        }
        assert_eq!(
            a.opts.keys().collect::<Vec<_>>(),
            b.opts.keys().collect::<Vec<_>>()
        );
        for (net, oa) in &a.opts {
            let ob = &b.opts[net];
            assert_eq!(oa.step_count(), ob.step_count());
            for (map_a, map_b) in [
                (oa.first_moments(), ob.first_moments()),
                (oa.second_moments(), ob.second_moments()),
            ] {
                assert_eq!(map_a.keys().collect::<Vec<_>>(), map_b.keys().collect::<Vec<_>>());
                for (name, va) in map_a {
                    let vb = &map_b[name];
                    for (x, y) in va.iter().zip(vb.iter()) {
                        assert_eq!(x.to_bits(), y.to_bits(), "adam {net}/{name}");
                    }
                }
            }
        }
        match (&a.buffer, &b.buffer) {
            (None, None) => {}
            (Some(ba), Some(bb)) => {
                assert_eq!(ba.capacity, bb.capacity);
                assert_eq!(ba.batch, bb.batch);
                assert_eq!(ba.write, bb.write);
                assert_eq!(ba.transitions.len(), bb.transitions.len());
                for (ta, tb) in ba.transitions.iter().zip(&bb.transitions) {
                    assert_eq!(ta.state.bits(), tb.state.bits());
                    assert_eq!(ta.next_state.bits(), tb.next_state.bits());
                    assert_eq!(ta.done, tb.done);
                    assert_eq!(ta.reward.to_bits(), tb.reward.to_bits());
                    let ia = ta.action.interleaved();
                    let ib = tb.action.interleaved();
                    for (x, y) in ia.iter().zip(ib.iter()) {
                        assert_eq!(x.to_bits(), y.to_bits());
                    }
                }
            }
            _ => panic!("buffer presence differs"),
        }
    }

    #[test]
    fn round_trip_is_bitwise_exact() {
        let ck = sample_checkpoint();
        let bytes = encode_checkpoint(&ck);
        let back = decode_checkpoint(&bytes).unwrap();
        assert_checkpoints_equal(&ck, &back);
        // Re-encoding the decoded state reproduces the file byte for byte.
        assert_eq!(bytes, encode_checkpoint(&back));
    }

    #[test]
    fn file_round_trip_through_disk() {
        let ck = sample_checkpoint();
        let dir = std::env::temp_dir().join(format!("ckpt-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("state.ckpt");
        save_checkpoint(&ck, &path).unwrap();
        let back = load_checkpoint(&path).unwrap();
        assert_checkpoints_equal(&ck, &back);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn truncation_anywhere_is_reported_as_corruption() {
        let bytes = encode_checkpoint(&sample_checkpoint());
        // Chop at several depths: inside the header, metadata, array data and
        // the checksum itself.
        for keep in [4, 16, bytes.len() / 2, bytes.len() - 40, bytes.len() - 1] {
            let err = decode_checkpoint(&bytes[..keep]).unwrap_err();
            assert!(
                matches!(err, Error::CheckpointCorrupt(_)),
                "keep={keep}: {err:?}"
            );
        }
    }

    #[test]
    fn bit_flip_fails_the_checksum() {
        let mut bytes = encode_checkpoint(&sample_checkpoint());
        let mid = bytes.len() / 2;
        bytes[mid] ^= 0x01;
        let err = decode_checkpoint(&bytes).unwrap_err();
        assert!(matches!(err, Error::CheckpointCorrupt(_)), "{err:?}");
    }

    #[test]
    fn future_version_is_a_version_error() {
        let mut bytes = encode_checkpoint(&sample_checkpoint());
        // Bump the version field (offset 8) and re-seal the checksum so the
        // version check is what fires.
        bytes[8] = 2;
        let body_len = bytes.len() - 32;
        let digest = Sha256::digest(&bytes[..body_len]);
        bytes[body_len..].copy_from_slice(&digest);
        let err = decode_checkpoint(&bytes).unwrap_err();
        match err {
            Error::CheckpointVersion { found, expected } => {
                assert_eq!(found, 2);
                assert_eq!(expected, 1);
            }
            other => panic!("expected version error, got {other:?}"),
        }
    }

    #[test]
    fn rng_snapshot_resumes_the_exact_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let _: [f64; 7] = rng.gen();
        let snap = RngSnapshot::capture(&rng);
        let next_direct: [f64; 5] = rng.gen();
        let mut restored = snap.restore();
        let next_restored: [f64; 5] = restored.gen();
        assert_eq!(next_direct, next_restored);
    }
}
