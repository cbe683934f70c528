//! Adversarial training loop, performance checks and fixed baseline policies.
//!
//! Per environment step the protagonist and the adversary act ε-greedily on
//! the same observation, both transitions are stored, and both networks take
//! one gradient step. Targets are synced every `target_period` episodes.
//! After every episode the protagonist is scored alone (greedy, no
//! adversary), and for the adversarial variant the adversary is scored
//! against a proxy protagonist trained without any adversary.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::deepq::{argmax, stream_rng, AgentConfig, DqnAgent, Experience, InputScaling, NetShape, QNetwork};
use crate::env::{AdversaryAction, Env, EnvConfig, Observation, ProtagonistAction, OBS_DIM};
use crate::error::{EnvError, TrainError};
use crate::wire_sim::Vec3;

const STREAM_PHYSICS: u64 = 1;
const STREAM_PROTAGONIST_INIT: u64 = 2;
const STREAM_ADVERSARY_INIT: u64 = 3;
const STREAM_PROTAGONIST_EXPLORE: u64 = 4;
const STREAM_ADVERSARY_EXPLORE: u64 = 5;
const STREAM_PROTAGONIST_REPLAY: u64 = 6;
const STREAM_ADVERSARY_REPLAY: u64 = 7;
const STREAM_EVAL_PHYSICS: u64 = 8;
const STREAM_POLICY: u64 = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Protagonist trained against a learning adversary.
    Rarl,
    /// No additional wind during training.
    NoAdversary,
    /// Adversary picks one of its seven actions uniformly at random.
    RandomAdversary,
}

impl FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rarl" => Ok(Self::Rarl),
            "no_adversary" => Ok(Self::NoAdversary),
            "random_adversary" => Ok(Self::RandomAdversary),
            other => Err(format!(
                "unknown variant '{other}' (expected rarl|no_adversary|random_adversary)"
            )),
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Rarl => "rarl",
            Self::NoAdversary => "no_adversary",
            Self::RandomAdversary => "random_adversary",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub env: EnvConfig,
    /// Number of episodes M.
    pub episodes: usize,
    pub epsilon: f64,
    pub gamma: f64,
    /// Target sync period C in episodes.
    pub target_period: usize,
    /// Steps per performance check.
    pub test_steps: usize,
    pub variant: Variant,
    pub seed: u64,
    pub batch_size: usize,
    pub replay_capacity: usize,
    pub learning_rate: f64,
    pub hidden: Vec<usize>,
    /// Optional fixed input map baked into both networks.
    pub input_scaling: Option<InputScaling>,
    pub proxy_checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            env: EnvConfig::default(),
            episodes: 400,
            epsilon: 0.2,
            gamma: 0.99,
            target_period: 5,
            test_steps: 1000,
            variant: Variant::Rarl,
            seed: 0,
            batch_size: 32,
            replay_capacity: 100_000,
            learning_rate: 1e-3,
            hidden: vec![32; 4],
            input_scaling: None,
            proxy_checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.env.validate()?;
        let bad = |msg: String| Err(TrainError::InvalidConfig(msg));
        if self.episodes < 1 {
            return bad("episodes must be at least 1".into());
        }
        if self.test_steps < 1 {
            return bad("test_steps must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma must lie in [0, 1), got {}", self.gamma));
        }
        if self.target_period < 1 {
            return bad("target_period must be at least 1".into());
        }
        if self.batch_size < 1 || self.replay_capacity < self.batch_size {
            return bad("replay_capacity must be at least batch_size >= 1".into());
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn agent_config(&self, n_actions: usize) -> AgentConfig {
        AgentConfig {
            shape: NetShape {
                input: OBS_DIM,
                hidden: self.hidden.clone(),
                n_actions,
            },
            learning_rate: self.learning_rate,
            gamma: self.gamma,
            batch_size: self.batch_size,
            replay_capacity: self.replay_capacity,
            input_scaling: self.input_scaling.clone(),
        }
    }

    /// Seed of the evaluation environment used after `episode`.
    pub fn eval_seed(&self, episode: usize) -> u64 {
        splitmix64(splitmix64(self.seed) ^ episode as u64)
    }
}

/// Input map centring observations on the at-rest observation of `env_cfg`,
/// with unit scale for positions and velocities and tenfold for the beam
/// direction.
pub fn rest_centered_scaling(env_cfg: &EnvConfig) -> Result<InputScaling, TrainError> {
    let (_, rest) = Env::new(env_cfg.clone(), stream_rng(0, 0))?;
    let mut scale = vec![1.0; OBS_DIM];
    scale[6..].iter_mut().for_each(|s| *s = 10.0);
    Ok(InputScaling {
        offset: rest.to_array().to_vec(),
        scale,
    })
}

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// One-based episode index.
    pub episode: usize,
    /// Mean received power of the greedy protagonist without adversary.
    pub protagonist_avg_power: f64,
    /// Mean received power of the proxy protagonist under the greedy
    /// adversary; only for the adversarial variant.
    pub adversary_check_avg_power: Option<f64>,
    pub loss_protagonist: Option<f64>,
    pub loss_adversary: Option<f64>,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub protagonist: DqnAgent,
    pub adversary: Option<DqnAgent>,
    pub records: Vec<EpisodeRecord>,
}

/// One logged environment tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub step: usize,
    pub time: f64,
    pub power_dbm: f64,
    pub reward: f64,
    pub protagonist: ProtagonistAction,
    pub adversary: AdversaryAction,
    pub sbs: Vec3,
    pub steer_zenith: f64,
    pub steer_azimuth: f64,
}

/// Adversary that picks each of its seven actions with equal probability.
#[derive(Debug, Clone)]
pub struct RandomAdversary {
    rng: ChaCha8Rng,
}

impl RandomAdversary {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }

    pub fn act(&mut self) -> AdversaryAction {
        AdversaryAction::ALL[self.rng.gen_range(0..AdversaryAction::COUNT)]
    }
}

/// Adversary behaviour during one training step. One value lives per run,
/// so the variant size gap does not matter.
#[allow(clippy::large_enum_variant)]
enum AdversaryMode {
    Learning(DqnAgent),
    Random(RandomAdversary),
    Absent,
}

/// Runs the full training procedure. `proxy` is required for
/// [`Variant::Rarl`] and is only used to score the adversary.
pub fn train(cfg: &TrainConfig, proxy: Option<&QNetwork>) -> Result<TrainOutcome, TrainError> {
    train_with_observer(cfg, proxy, |_| {})
}

/// [`train`] with a callback invoked after every episode.
pub fn train_with_observer<F: FnMut(&EpisodeRecord)>(
    cfg: &TrainConfig,
    proxy: Option<&QNetwork>,
    mut observer: F,
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if cfg.variant == Variant::Rarl && proxy.is_none() {
        return Err(TrainError::MissingProxy);
    }
    if let Some(p) = proxy {
        if p.shape().input != OBS_DIM || p.n_actions() != ProtagonistAction::COUNT {
            return Err(TrainError::InvalidConfig("proxy network has the wrong shape".into()));
        }
    }

    let seed = cfg.seed;
    let mut protagonist = DqnAgent::new(
        cfg.agent_config(ProtagonistAction::COUNT),
        &mut stream_rng(seed, STREAM_PROTAGONIST_INIT),
        stream_rng(seed, STREAM_PROTAGONIST_EXPLORE),
        stream_rng(seed, STREAM_PROTAGONIST_REPLAY),
    )?;
    let mut adversary = match cfg.variant {
        Variant::Rarl => AdversaryMode::Learning(DqnAgent::new(
            cfg.agent_config(AdversaryAction::COUNT),
            &mut stream_rng(seed, STREAM_ADVERSARY_INIT),
            stream_rng(seed, STREAM_ADVERSARY_EXPLORE),
            stream_rng(seed, STREAM_ADVERSARY_REPLAY),
        )?),
        Variant::RandomAdversary => {
            AdversaryMode::Random(RandomAdversary::new(stream_rng(seed, STREAM_ADVERSARY_EXPLORE)))
        }
        Variant::NoAdversary => AdversaryMode::Absent,
    };

    let mut env_cfg = cfg.env.clone();
    env_cfg.adversary_active = cfg.variant != Variant::NoAdversary;
    let (mut env, _) = Env::new(env_cfg, stream_rng(seed, STREAM_PHYSICS))?;
    let horizon = env.horizon();
    let mut records = Vec::with_capacity(cfg.episodes);

    for episode in 1..=cfg.episodes {
        let started = Instant::now();
        let mut obs = env.reset().to_array();
        let (mut loss_p, mut n_p) = (0.0, 0usize);
        let (mut loss_a, mut n_a) = (0.0, 0usize);

        for step in 0..horizon {
            let net_err = |source| TrainError::NetDiverged { episode, step, source };
            let a_p = protagonist.act(&obs, cfg.epsilon).map_err(net_err)?;
            let a_a = match &mut adversary {
                AdversaryMode::Learning(agent) => agent.act(&obs, cfg.epsilon).map_err(net_err)?,
                AdversaryMode::Random(adv) => adv.act().index(),
                AdversaryMode::Absent => AdversaryAction::Stay.index(),
            };
            let outcome = env
                .step(
                    ProtagonistAction::from_index(a_p).expect("network has 5 outputs"),
                    AdversaryAction::from_index(a_a).expect("adversary action in range"),
                )
                .map_err(|source| TrainError::EnvDiverged { episode, step, source })?;
            let next = outcome.observation.to_array();

            protagonist.remember(Experience {
                state: obs,
                action: a_p,
                reward: outcome.reward_protagonist,
                next_state: next,
            });
            if let Some(loss) = protagonist.train_step().map_err(net_err)? {
                loss_p += loss;
                n_p += 1;
            }
            if let AdversaryMode::Learning(agent) = &mut adversary {
                agent.remember(Experience {
                    state: obs,
                    action: a_a,
                    reward: outcome.reward_adversary,
                    next_state: next,
                });
                if let Some(loss) = agent.train_step().map_err(net_err)? {
                    loss_a += loss;
                    n_a += 1;
                }
            }
            obs = next;
        }

        if episode % cfg.target_period == 0 {
            protagonist.sync_target()?;
            if let AdversaryMode::Learning(agent) = &mut adversary {
                agent.sync_target()?;
            }
        }

        let eval_seed = cfg.eval_seed(episode);
        let protagonist_avg_power = check_protagonist(&protagonist.net, &cfg.env, cfg.test_steps, eval_seed)
            .map_err(|e| with_episode(e, episode))?;
        let adversary_check_avg_power = match (&adversary, proxy) {
            (AdversaryMode::Learning(agent), Some(proxy)) => Some(
                check_adversary(&agent.net, proxy, &cfg.env, cfg.test_steps, eval_seed)
                    .map_err(|e| with_episode(e, episode))?,
            ),
            _ => None,
        };

        let record = EpisodeRecord {
            episode,
            protagonist_avg_power,
            adversary_check_avg_power,
            loss_protagonist: (n_p > 0).then(|| loss_p / n_p as f64),
            loss_adversary: (n_a > 0).then(|| loss_a / n_a as f64),
            wall_clock_s: started.elapsed().as_secs_f64(),
        };
        observer(&record);
        records.push(record);
    }

    Ok(TrainOutcome {
        protagonist,
        adversary: match adversary {
            AdversaryMode::Learning(agent) => Some(agent),
            _ => None,
        },
        records,
    })
}

fn with_episode(err: TrainError, episode: usize) -> TrainError {
    match err {
        TrainError::Env(source) => TrainError::EnvDiverged {
            episode,
            step: 0,
            source,
        },
        other => other,
    }
}

/// Trains the protagonist without any adversary; used as the proxy that
/// scores the adversary.
pub fn pretrain_proxy(cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    let mut proxy_cfg = cfg.clone();
    proxy_cfg.variant = Variant::NoAdversary;
    proxy_cfg.proxy_checkpoint = None;
    train(&proxy_cfg, None)
}

/// Mean received power and optional per-step log of a rollout.
#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub avg_power_dbm: f64,
    pub trajectory: Vec<TrajectoryRow>,
}

/// Fresh evaluation environment with `steps` allowed ticks.
fn eval_env(env_cfg: &EnvConfig, adversary_active: bool, steps: usize, seed: u64) -> Result<(Env, Observation), TrainError> {
    if steps == 0 {
        return Err(TrainError::InvalidConfig("evaluation needs at least one step".into()));
    }
    let mut cfg = env_cfg.clone();
    cfg.adversary_active = adversary_active;
    let (mut env, obs) = Env::new(cfg, stream_rng(seed, STREAM_EVAL_PHYSICS))?;
    env.set_horizon(steps);
    Ok((env, obs))
}

fn rollout<P, A>(
    env: &mut Env,
    mut obs: Observation,
    steps: usize,
    log: bool,
    mut protagonist: P,
    mut adversary: A,
) -> Result<Rollout, TrainError>
where
    P: FnMut(&Env, &Observation) -> Result<ProtagonistAction, TrainError>,
    A: FnMut(&Observation) -> Result<AdversaryAction, TrainError>,
{
    let mut total = 0.0;
    let mut trajectory = Vec::with_capacity(if log { steps } else { 0 });
    for step in 0..steps {
        let a_p = protagonist(env, &obs)?;
        let a_a = adversary(&obs)?;
        let out = env.step(a_p, a_a).map_err(|source: EnvError| TrainError::EnvDiverged {
            episode: 0,
            step,
            source,
        })?;
        total += out.power_dbm;
        if log {
            let beam = env.beam();
            trajectory.push(TrajectoryRow {
                step: step + 1,
                time: env.time(),
                power_dbm: out.power_dbm,
                reward: out.reward_protagonist,
                protagonist: a_p,
                adversary: a_a,
                sbs: env.sbs_position(),
                steer_zenith: beam.steer_zenith,
                steer_azimuth: beam.steer_azimuth,
            });
        }
        obs = out.observation;
    }
    Ok(Rollout {
        avg_power_dbm: total / steps as f64,
        trajectory,
    })
}

fn greedy_protagonist(net: &QNetwork, obs: &Observation) -> Result<ProtagonistAction, TrainError> {
    let q = net.forward(&obs.to_array())?;
    ProtagonistAction::from_index(argmax(&q))
        .ok_or_else(|| TrainError::InvalidConfig("protagonist network must have 5 outputs".into()))
}

fn greedy_adversary(net: &QNetwork, obs: &Observation) -> Result<AdversaryAction, TrainError> {
    let q = net.forward(&obs.to_array())?;
    AdversaryAction::from_index(argmax(&q))
        .ok_or_else(|| TrainError::InvalidConfig("adversary network must have 7 outputs".into()))
}

/// Mean received power of the greedy protagonist with the adversary
/// disabled.
pub fn check_protagonist(net: &QNetwork, env_cfg: &EnvConfig, test_steps: usize, seed: u64) -> Result<f64, TrainError> {
    let (mut env, obs) = eval_env(env_cfg, false, test_steps, seed)?;
    Ok(rollout(
        &mut env,
        obs,
        test_steps,
        false,
        |_, o| greedy_protagonist(net, o),
        |_| Ok(AdversaryAction::Stay),
    )?
    .avg_power_dbm)
}

/// Mean received power of the greedy proxy protagonist while the greedy
/// adversary is active. Lower is better for the adversary.
pub fn check_adversary(
    adversary: &QNetwork,
    proxy: &QNetwork,
    env_cfg: &EnvConfig,
    test_steps: usize,
    seed: u64,
) -> Result<f64, TrainError> {
    let (mut env, obs) = eval_env(env_cfg, true, test_steps, seed)?;
    Ok(rollout(
        &mut env,
        obs,
        test_steps,
        false,
        |_, o| greedy_protagonist(proxy, o),
        |o| greedy_adversary(adversary, o),
    )?
    .avg_power_dbm)
}

/// Fixed protagonist behaviours.
#[derive(Debug, Clone)]
pub enum Policy {
    /// Never moves the beam.
    Stay,
    /// One-step lookahead on the true simulator picking the best of the five
    /// steering moves.
    UpperLimit,
    /// Greedy with respect to a trained network.
    GreedyDqn(QNetwork),
    /// Uniformly random steering moves.
    RandomUniform,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Stay => "stay",
            Policy::UpperLimit => "upper_limit",
            Policy::GreedyDqn(_) => "greedy_dqn",
            Policy::RandomUniform => "random_uniform",
        }
    }
}

/// Index of the power-maximising protagonist action on the next tick.
pub fn upper_limit_action(env: &Env) -> Result<ProtagonistAction, EnvError> {
    let powers = env.lookahead_powers(AdversaryAction::Stay)?;
    Ok(ProtagonistAction::ALL[argmax(&powers)])
}

/// Rolls out `policy` for `steps` ticks with no adversary.
pub fn run_policy(policy: &Policy, env_cfg: &EnvConfig, steps: usize, seed: u64, log: bool) -> Result<Rollout, TrainError> {
    if let Policy::GreedyDqn(net) = policy {
        if net.shape().input != OBS_DIM || net.n_actions() != ProtagonistAction::COUNT {
            return Err(TrainError::InvalidConfig(format!(
                "checkpoint network is {}→{} actions, expected {}→{}",
                net.shape().input,
                net.n_actions(),
                OBS_DIM,
                ProtagonistAction::COUNT
            )));
        }
    }
    let (mut env, obs) = eval_env(env_cfg, false, steps, seed)?;
    let mut policy_rng = stream_rng(seed, STREAM_POLICY);
    rollout(
        &mut env,
        obs,
        steps,
        log,
        |env, o| match policy {
            Policy::Stay => Ok(ProtagonistAction::Stay),
            Policy::UpperLimit => Ok(upper_limit_action(env)?),
            Policy::GreedyDqn(net) => greedy_protagonist(net, o),
            Policy::RandomUniform => {
                Ok(ProtagonistAction::ALL[policy_rng.gen_range(0..ProtagonistAction::COUNT)])
            }
        },
        |_| Ok(AdversaryAction::Stay),
    )
}
