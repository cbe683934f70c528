//! Binary checkpoint container.
//!
//! All integers and reals are little-endian. Layout (version 1):
//!
//! ```text
//! magic        4  b"WBQN"
//! version      u32
//! agent_kind   u8     0 = protagonist, 1 = adversary
//! n_actions    u32
//! config_hash  32 bytes
//! input        u32
//! n_hidden     u32, then n_hidden × u32 hidden widths
//! scaling      u8     0 = none, 1 = input × f64 offsets then input × f64 scales
//! gamma        f64
//! batch_size   u32
//! replay_cap   u64
//! n_params     u64
//! params       n_params × f64   per dense layer: weights row-major (out × in), then bias
//! adam_step    u64
//! adam_lr, adam_beta1, adam_beta2, adam_eps   4 × f64
//! adam_m       n_params × f64
//! adam_v       n_params × f64
//! rng × 2      explore then replay: seed 32 bytes, stream u64, word_pos u128
//! ```
//!
//! Dense layer order is trunk (input side first), value head, advantage head.
//! The target network is not stored; it is re-synced from the main network
//! on load.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use super::{AdamState, AgentConfig, DqnAgent, InputScaling, NetShape, QNetwork};
use crate::error::CheckpointError;

pub const MAGIC: &[u8; 4] = b"WBQN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Protagonist,
    Adversary,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub kind: AgentKind,
    pub config_hash: [u8; 32],
    pub agent: AgentConfig,
    pub net: QNetwork,
    pub adam: AdamState,
    pub explore_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn from_agent(agent: &DqnAgent, kind: AgentKind, config_hash: [u8; 32]) -> Self {
        Self {
            kind,
            config_hash,
            agent: agent.config.clone(),
            net: agent.net.clone(),
            adam: agent.adam.clone(),
            explore_rng: agent.explore_rng.clone(),
            replay_rng: agent.replay_rng.clone(),
        }
    }

    /// Rebuilds the agent with an empty replay memory.
    pub fn into_agent(self) -> Result<DqnAgent, CheckpointError> {
        DqnAgent::from_parts(self.agent, self.net, Some(self.adam), self.explore_rng, self.replay_rng)
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u8(match self.kind {
            AgentKind::Protagonist => 0,
            AgentKind::Adversary => 1,
        })?;
        let shape = self.net.shape();
        w.write_u32::<LittleEndian>(shape.n_actions as u32)?;
        w.write_all(&self.config_hash)?;
        w.write_u32::<LittleEndian>(shape.input as u32)?;
        w.write_u32::<LittleEndian>(shape.hidden.len() as u32)?;
        for &h in &shape.hidden {
            w.write_u32::<LittleEndian>(h as u32)?;
        }
        match self.net.input_scaling() {
            None => w.write_u8(0)?,
            Some(map) => {
                w.write_u8(1)?;
                write_reals(w, &map.offset)?;
                write_reals(w, &map.scale)?;
            }
        }
        w.write_f64::<LittleEndian>(self.agent.gamma)?;
        w.write_u32::<LittleEndian>(self.agent.batch_size as u32)?;
        w.write_u64::<LittleEndian>(self.agent.replay_capacity as u64)?;
        let params = self.net.params();
        w.write_u64::<LittleEndian>(params.len() as u64)?;
        write_reals(w, params)?;
        w.write_u64::<LittleEndian>(self.adam.step_count)?;
        for v in [self.adam.learning_rate, self.adam.beta1, self.adam.beta2, self.adam.epsilon] {
            w.write_f64::<LittleEndian>(v)?;
        }
        write_reals(w, &self.adam.first_moment)?;
        write_reals(w, &self.adam.second_moment)?;
        for rng in [&self.explore_rng, &self.replay_rng] {
            w.write_all(&rng.get_seed())?;
            w.write_u64::<LittleEndian>(rng.get_stream())?;
            w.write_u128::<LittleEndian>(rng.get_word_pos())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let kind = match r.read_u8()? {
            0 => AgentKind::Protagonist,
            1 => AgentKind::Adversary,
            other => return Err(CheckpointError::Corrupt(format!("unknown agent kind {other}"))),
        };
        let n_actions = r.read_u32::<LittleEndian>()? as usize;
        let mut config_hash = [0u8; 32];
        r.read_exact(&mut config_hash)?;
        let input = r.read_u32::<LittleEndian>()? as usize;
        let n_hidden = r.read_u32::<LittleEndian>()? as usize;
        if n_hidden > 1024 {
            return Err(CheckpointError::Corrupt(format!("implausible layer count {n_hidden}")));
        }
        let hidden = (0..n_hidden)
            .map(|_| r.read_u32::<LittleEndian>().map(|h| h as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let shape = NetShape {
            input,
            hidden,
            n_actions,
        };
        let input_scaling = match r.read_u8()? {
            0 => None,
            1 => {
                if input > 1 << 20 {
                    return Err(CheckpointError::Corrupt(format!("implausible input width {input}")));
                }
                let offset = read_reals(r, input)?;
                let scale = read_reals(r, input)?;
                Some(InputScaling { offset, scale })
            }
            other => return Err(CheckpointError::Corrupt(format!("unknown scaling flag {other}"))),
        };
        let gamma = r.read_f64::<LittleEndian>()?;
        let batch_size = r.read_u32::<LittleEndian>()? as usize;
        let replay_capacity = r.read_u64::<LittleEndian>()? as usize;
        let n_params = r.read_u64::<LittleEndian>()? as usize;
        shape
            .validate()
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        if n_params != shape.param_count() {
            return Err(CheckpointError::ShapeMismatch(format!(
                "header declares {n_params} parameters, shape implies {}",
                shape.param_count()
            )));
        }
        let params = read_reals(r, n_params)?;
        let step_count = r.read_u64::<LittleEndian>()?;
        let learning_rate = r.read_f64::<LittleEndian>()?;
        let beta1 = r.read_f64::<LittleEndian>()?;
        let beta2 = r.read_f64::<LittleEndian>()?;
        let epsilon = r.read_f64::<LittleEndian>()?;
        let first_moment = read_reals(r, n_params)?;
        let second_moment = read_reals(r, n_params)?;
        let mut rngs = Vec::with_capacity(2);
        for _ in 0..2 {
            let mut seed = [0u8; 32];
            r.read_exact(&mut seed)?;
            let stream = r.read_u64::<LittleEndian>()?;
            let word_pos = r.read_u128::<LittleEndian>()?;
            let mut rng = ChaCha8Rng::from_seed(seed);
            rng.set_stream(stream);
            rng.set_word_pos(word_pos);
            rngs.push(rng);
        }
        let replay_rng = rngs.pop().expect("two rngs read");
        let explore_rng = rngs.pop().expect("two rngs read");

        let mut net = QNetwork::from_params(shape.clone(), params)
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        net.set_input_scaling(input_scaling.clone())
            .map_err(|e| CheckpointError::ShapeMismatch(e.to_string()))?;
        Ok(Self {
            kind,
            config_hash,
            agent: AgentConfig {
                shape,
                learning_rate,
                gamma,
                batch_size,
                replay_capacity,
                input_scaling,
            },
            net,
            adam: AdamState {
                first_moment,
                second_moment,
                step_count,
                learning_rate,
                beta1,
                beta2,
                epsilon,
            },
            explore_rng,
            replay_rng,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let mut r = BufReader::new(File::open(path)?);
        Self::read_from(&mut r)
    }

    /// Fails unless the stored network has `n_actions` outputs and the
    /// expected input width.
    pub fn expect_shape(&self, input: usize, n_actions: usize) -> Result<(), CheckpointError> {
        let shape = self.net.shape();
        if shape.input != input || shape.n_actions != n_actions {
            return Err(CheckpointError::ShapeMismatch(format!(
                "checkpoint network is {}→{} actions, expected {}→{}",
                shape.input, shape.n_actions, input, n_actions
            )));
        }
        Ok(())
    }
}

fn write_reals<W: Write>(w: &mut W, values: &[f64]) -> std::io::Result<()> {
    for &v in values {
        w.write_f64::<LittleEndian>(v)?;
    }
    Ok(())
}

fn read_reals<R: Read>(r: &mut R, n: usize) -> Result<Vec<f64>, CheckpointError> {
    let mut out = vec![0.0; n];
    r.read_f64_into::<LittleEndian>(&mut out)?;
    Ok(out)
}
