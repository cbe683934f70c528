//! Dueling deep-Q learning built from scratch: network, Huber TD loss,
//! Adam, replay memory, target syncing and ε-greedy exploration.

mod adam;
pub mod checkpoint;
mod network;
mod replay;

pub use adam::AdamState;
pub use network::{argmax, DenseLayout, InputScaling, NetShape, QNetwork, Workspace};
pub use replay::{Experience, ReplayMemory};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::DeepqError;

/// `x²/2` for `|x| ≤ 1`, `|x| − 1/2` otherwise.
pub fn huber(x: f64) -> f64 {
    if x.abs() <= 1.0 {
        0.5 * x * x
    } else {
        x.abs() - 0.5
    }
}

/// Derivative of [`huber`]; bounded by 1 in magnitude.
pub fn huber_grad(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// Uniform random action with probability `epsilon`, greedy otherwise.
pub fn act_epsilon_greedy<R: Rng + ?Sized>(
    net: &QNetwork,
    state: &[f64],
    epsilon: f64,
    rng: &mut R,
) -> Result<usize, DeepqError> {
    if rng.gen::<f64>() < epsilon {
        return Ok(rng.gen_range(0..net.n_actions()));
    }
    Ok(argmax(&net.forward(state)?))
}

/// Reusable buffers for [`loss_and_gradient`].
#[derive(Debug, Clone)]
pub struct TrainScratch {
    ws: Workspace,
    target_ws: Workspace,
    d_q: Vec<f64>,
    pub grad: Vec<f64>,
}

impl TrainScratch {
    pub fn new(net: &QNetwork) -> Self {
        Self {
            ws: net.workspace(),
            target_ws: net.workspace(),
            d_q: vec![0.0; net.n_actions()],
            grad: vec![0.0; net.params().len()],
        }
    }
}

/// Mean Huber TD loss of `batch` and its gradient (left in `scratch.grad`).
/// The target network is held constant.
pub fn loss_and_gradient(
    net: &QNetwork,
    target_net: &QNetwork,
    batch: &[Experience],
    gamma: f64,
    scratch: &mut TrainScratch,
) -> Result<f64, DeepqError> {
    if batch.is_empty() {
        return Err(DeepqError::EmptyBatch);
    }
    if net.shape() != target_net.shape() {
        return Err(DeepqError::ShapeMismatch("network and target differ in shape".into()));
    }
    let scale = 1.0 / batch.len() as f64;
    scratch.grad.iter_mut().for_each(|g| *g = 0.0);
    let mut loss = 0.0;
    for exp in batch {
        if exp.action >= net.n_actions() {
            return Err(DeepqError::ShapeMismatch(format!(
                "action {} out of range for {} actions",
                exp.action,
                net.n_actions()
            )));
        }
        target_net.forward_into(&exp.next_state, &mut scratch.target_ws)?;
        let best_next = scratch
            .target_ws
            .q()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let target = exp.reward + gamma * best_next;

        net.forward_into(&exp.state, &mut scratch.ws)?;
        let td = target - scratch.ws.q()[exp.action];
        loss += huber(td) * scale;

        scratch.d_q.iter_mut().for_each(|d| *d = 0.0);
        scratch.d_q[exp.action] = -huber_grad(td) * scale;
        net.backward_into(&mut scratch.ws, &scratch.d_q, &mut scratch.grad);
    }
    if !loss.is_finite() || scratch.grad.iter().any(|g| !g.is_finite()) {
        return Err(DeepqError::NonFiniteGradient);
    }
    Ok(loss)
}

/// One Adam step on the mean Huber TD loss; returns the loss before the step.
pub fn train_batch(
    net: &mut QNetwork,
    target_net: &QNetwork,
    batch: &[Experience],
    gamma: f64,
    adam: &mut AdamState,
) -> Result<f64, DeepqError> {
    let mut scratch = TrainScratch::new(net);
    train_batch_with(net, target_net, batch, gamma, adam, &mut scratch)
}

pub fn train_batch_with(
    net: &mut QNetwork,
    target_net: &QNetwork,
    batch: &[Experience],
    gamma: f64,
    adam: &mut AdamState,
    scratch: &mut TrainScratch,
) -> Result<f64, DeepqError> {
    if adam.first_moment.len() != net.params().len() {
        return Err(DeepqError::ShapeMismatch("optimiser state does not match network".into()));
    }
    let loss = loss_and_gradient(net, target_net, batch, gamma, scratch)?;
    adam.update(net.params_mut(), &scratch.grad);
    Ok(loss)
}

pub fn sync_target(net: &QNetwork, target_net: &mut QNetwork) -> Result<(), DeepqError> {
    target_net.copy_from(net)
}

/// Hyperparameters of one learning agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub shape: NetShape,
    pub learning_rate: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub input_scaling: Option<InputScaling>,
}

/// Main network, target network, optimiser, replay memory and the agent's
/// own random streams.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: AgentConfig,
    pub net: QNetwork,
    pub target: QNetwork,
    pub adam: AdamState,
    pub memory: ReplayMemory,
    pub explore_rng: ChaCha8Rng,
    pub replay_rng: ChaCha8Rng,
    scratch: TrainScratch,
    batch: Vec<Experience>,
}

impl DqnAgent {
    pub fn new(
        config: AgentConfig,
        init_rng: &mut ChaCha8Rng,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self, DeepqError> {
        let mut net = QNetwork::init_he(config.shape.clone(), init_rng)?;
        net.set_input_scaling(config.input_scaling.clone())?;
        Self::from_parts(config, net, None, explore_rng, replay_rng)
    }

    /// Reassembles an agent; the target starts as a copy of `net` and the
    /// optimiser fresh unless `adam` is given.
    pub fn from_parts(
        config: AgentConfig,
        net: QNetwork,
        adam: Option<AdamState>,
        explore_rng: ChaCha8Rng,
        replay_rng: ChaCha8Rng,
    ) -> Result<Self, DeepqError> {
        if net.shape() != &config.shape {
            return Err(DeepqError::ShapeMismatch("network does not match agent shape".into()));
        }
        if net.input_scaling() != config.input_scaling.as_ref() {
            return Err(DeepqError::ShapeMismatch("network input scaling differs from agent".into()));
        }
        let adam = adam.unwrap_or_else(|| AdamState::new(net.params().len(), config.learning_rate));
        Ok(Self {
            target: net.clone(),
            scratch: TrainScratch::new(&net),
            memory: ReplayMemory::new(config.replay_capacity),
            batch: Vec::with_capacity(config.batch_size),
            adam,
            net,
            config,
            explore_rng,
            replay_rng,
        })
    }

    pub fn act(&mut self, state: &[f64], epsilon: f64) -> Result<usize, DeepqError> {
        act_epsilon_greedy(&self.net, state, epsilon, &mut self.explore_rng)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize, DeepqError> {
        Ok(argmax(&self.net.forward(state)?))
    }

    pub fn remember(&mut self, exp: Experience) {
        self.memory.push(exp);
    }

    /// One gradient step once the memory holds a full batch; `None` before.
    pub fn train_step(&mut self) -> Result<Option<f64>, DeepqError> {
        if self.memory.len() < self.config.batch_size {
            return Ok(None);
        }
        self.memory
            .sample_into(self.config.batch_size, &mut self.replay_rng, &mut self.batch)?;
        let loss = train_batch_with(
            &mut self.net,
            &self.target,
            &self.batch,
            self.config.gamma,
            &mut self.adam,
            &mut self.scratch,
        )?;
        Ok(Some(loss))
    }

    pub fn sync_target(&mut self) -> Result<(), DeepqError> {
        sync_target(&self.net, &mut self.target)
    }
}

/// Seeded generator on an independent stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
