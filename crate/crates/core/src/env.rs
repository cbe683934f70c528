//! Beam-tracking environment.
//!
//! One environment tick composes the ambient and adversarial wind, advances
//! the wire by `τ`, moves the steering angles by the protagonist action, and
//! scores the received power at the new geometry. The adversary's reward is
//! the negated protagonist reward.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;

use crate::error::EnvError;
use crate::radio::{self, AntennaConfig, LinkBudget};
use crate::wire_sim::{self, EnvWind, PhysParams, Vec3, WireState, MAX_SUBSTEPS};

/// Observation length fed to the networks.
pub const OBS_DIM: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamState {
    pub steer_zenith: f64,
    pub steer_azimuth: f64,
}

impl BeamState {
    pub fn direction(&self) -> Vec3 {
        let (t, p) = (self.steer_zenith.to_radians(), self.steer_azimuth.to_radians());
        Vec3::new(t.sin() * p.cos(), t.sin() * p.sin(), t.cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub position: Vec3,
    pub velocity: Vec3,
    pub beam_dir: Vec3,
}

impl Observation {
    pub fn to_array(&self) -> [f64; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        out[..3].copy_from_slice(self.position.as_slice());
        out[3..6].copy_from_slice(self.velocity.as_slice());
        out[6..].copy_from_slice(self.beam_dir.as_slice());
        out
    }
}

macro_rules! action_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const COUNT: usize = Self::ALL.len();

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn from_index(index: usize) -> Option<Self> {
                Self::ALL.get(index).copied()
            }

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

action_enum!(ProtagonistAction {
    Stay => "stay",
    Up => "up",
    Down => "down",
    Left => "left",
    Right => "right",
});

action_enum!(AdversaryAction {
    Stay => "stay",
    Up => "up",
    Down => "down",
    Left => "left",
    Right => "right",
    Front => "front",
    Back => "back",
});

impl ProtagonistAction {
    /// `(a_θ, a_φ)` steering increments in units of β.
    pub fn steering(self) -> (f64, f64) {
        match self {
            ProtagonistAction::Stay => (0.0, 0.0),
            ProtagonistAction::Up => (-1.0, 0.0),
            ProtagonistAction::Down => (1.0, 0.0),
            ProtagonistAction::Left => (0.0, 1.0),
            ProtagonistAction::Right => (0.0, -1.0),
        }
    }
}

pub fn apply_protagonist_action(beam: BeamState, action: ProtagonistAction, beta: f64) -> BeamState {
    let (a_theta, a_phi) = action.steering();
    BeamState {
        steer_zenith: beam.steer_zenith + a_theta * beta,
        steer_azimuth: beam.steer_azimuth + a_phi * beta,
    }
}

pub fn adversary_wind(action: AdversaryAction, speed: f64) -> Vec3 {
    match action {
        AdversaryAction::Stay => Vec3::zeros(),
        AdversaryAction::Up => Vec3::new(0.0, 0.0, speed),
        AdversaryAction::Down => Vec3::new(0.0, 0.0, -speed),
        AdversaryAction::Left => Vec3::new(-speed, 0.0, 0.0),
        AdversaryAction::Right => Vec3::new(speed, 0.0, 0.0),
        AdversaryAction::Front => Vec3::new(0.0, speed, 0.0),
        AdversaryAction::Back => Vec3::new(0.0, -speed, 0.0),
    }
}

/// How the gateway height is referenced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GatewayMount {
    /// Height is measured relative to the wire end points and shifted by the
    /// sag of the SBS rest position, so `height == wire height` puts the
    /// gateway level with the SBS at rest.
    SbsLevel,
    /// Height is an absolute z coordinate.
    Absolute,
}

impl FromStr for GatewayMount {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sbs_level" => Ok(Self::SbsLevel),
            "absolute" => Ok(Self::Absolute),
            other => Err(format!("unknown gateway mount '{other}' (expected sbs_level|absolute)")),
        }
    }
}

impl fmt::Display for GatewayMount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SbsLevel => "sbs_level",
            Self::Absolute => "absolute",
        })
    }
}

/// Coordinate frame of the position component of observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObsFrame {
    /// SBS position relative to the gateway, `x_S − x_G`.
    Gateway,
    /// Raw world coordinates.
    World,
}

impl FromStr for ObsFrame {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gateway" => Ok(Self::Gateway),
            "world" => Ok(Self::World),
            other => Err(format!("unknown observation frame '{other}' (expected gateway|world)")),
        }
    }
}

impl fmt::Display for ObsFrame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gateway => "gateway",
            Self::World => "world",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatewayPlacement {
    /// `h_r` in metres.
    pub height: f64,
    /// Horizontal distance `d_r` from the wire in metres.
    pub distance: f64,
    pub mount: GatewayMount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub phys: PhysParams,
    pub antenna: AntennaConfig,
    pub budget: LinkBudget,
    pub gateway: GatewayPlacement,
    /// Zero-based index of the SBS mass point.
    pub sbs_point: usize,
    /// Decision interval τ in seconds.
    pub tau: f64,
    /// Episode duration T in seconds.
    pub observation_time: f64,
    /// Requested physics substeps per τ (raised automatically if unstable).
    pub substeps: usize,
    pub beta: f64,
    pub clip_offset: f64,
    pub clip_scale: f64,
    pub adversary_speed: f64,
    pub adversary_active: bool,
    pub env_wind: EnvWind,
    pub obs_frame: ObsFrame,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            phys: PhysParams::reference(5.0, 10.0),
            antenna: AntennaConfig::default(),
            budget: LinkBudget::default(),
            gateway: GatewayPlacement {
                height: 5.0,
                distance: 5.0,
                mount: GatewayMount::SbsLevel,
            },
            sbs_point: 5,
            tau: 0.01,
            observation_time: 10.0,
            substeps: 1,
            beta: 1.0,
            clip_offset: -27.0,
            clip_scale: 3.0,
            adversary_speed: 10.0,
            adversary_active: true,
            env_wind: EnvWind::default(),
            obs_frame: ObsFrame::World,
        }
    }
}

impl EnvConfig {
    /// Number of decisions per episode, `⌊T/τ⌋`.
    pub fn horizon(&self) -> usize {
        (self.observation_time / self.tau * (1.0 + 1e-12)).floor() as usize
    }

    /// Wind-free, noise-free copy of this configuration.
    pub fn frozen(&self) -> Self {
        let mut cfg = self.clone();
        cfg.env_wind.amplitude = 0.0;
        cfg.phys.wind_cov = nalgebra::Matrix3::zeros();
        cfg.adversary_active = false;
        cfg
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        self.phys.validate()?;
        self.antenna.validate()?;
        let bad = |msg: String| Err(EnvError::InvalidConfig(msg));
        if !(self.budget.wavelength > 0.0) {
            return bad(format!("wavelength must be positive, got {}", self.budget.wavelength));
        }
        if self.sbs_point == 0 || self.sbs_point + 1 >= self.phys.n_points {
            return bad(format!(
                "sbs_point must be an interior point, got index {} of {}",
                self.sbs_point, self.phys.n_points
            ));
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.horizon() < 1 {
            return bad("observation time must cover at least one step".into());
        }
        if self.substeps < 1 {
            return bad("substeps must be at least 1".into());
        }
        let needed = self.phys.effective_substeps(self.tau, self.substeps);
        if needed > MAX_SUBSTEPS {
            return bad(format!(
                "wire needs {needed} substeps per tick for stability, more than {MAX_SUBSTEPS}"
            ));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.clip_scale > 0.0) {
            return bad(format!("clip_scale must be positive, got {}", self.clip_scale));
        }
        if !(self.adversary_speed >= 0.0) {
            return bad(format!("adversary_speed must be non-negative, got {}", self.adversary_speed));
        }
        if !(self.gateway.distance.is_finite() && self.gateway.height.is_finite()) {
            return bad("gateway placement must be finite".into());
        }
        if self.env_wind.periods.iter().any(|p| !(*p > 0.0)) {
            return bad("wind periods must be positive".into());
        }
        Ok(())
    }

    /// Protagonist reward for a received power, clipped to `[-1, 1]`.
    pub fn reward(&self, power_dbm: f64) -> f64 {
        ((power_dbm - self.clip_offset) / self.clip_scale).clamp(-1.0, 1.0)
    }
}

/// Result of one environment tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward_protagonist: f64,
    pub reward_adversary: f64,
    pub power_dbm: f64,
}

#[derive(Debug, Clone)]
pub struct Env {
    cfg: EnvConfig,
    rest: WireState,
    wire: WireState,
    beam: BeamState,
    initial_beam: BeamState,
    gateway: Vec3,
    substeps: usize,
    horizon: usize,
    step: usize,
    rng: ChaCha8Rng,
}

impl Env {
    /// Builds the environment and performs the initial reset.
    pub fn new(cfg: EnvConfig, rng: ChaCha8Rng) -> Result<(Self, Observation), EnvError> {
        cfg.validate()?;
        let rest = wire_sim::equilibrium_shape(&cfg.phys)?;
        let sbs_rest = rest.positions[cfg.sbs_point];
        let wire_height = 0.5 * (cfg.phys.endpoint_a.z + cfg.phys.endpoint_b.z);
        let gateway_z = match cfg.gateway.mount {
            GatewayMount::SbsLevel => sbs_rest.z + (cfg.gateway.height - wire_height),
            GatewayMount::Absolute => cfg.gateway.height,
        };
        let gateway = Vec3::new(sbs_rest.x - cfg.gateway.distance, sbs_rest.y, gateway_z);
        let aod = radio::aod_geometry(&sbs_rest, &gateway)?;
        let initial_beam = BeamState {
            steer_zenith: aod.zenith,
            steer_azimuth: aod.azimuth,
        };
        let substeps = cfg.phys.effective_substeps(cfg.tau, cfg.substeps);
        let horizon = cfg.horizon();
        let mut env = Self {
            cfg,
            wire: rest.clone(),
            rest,
            beam: initial_beam,
            initial_beam,
            gateway,
            substeps,
            horizon,
            step: 0,
            rng,
        };
        let obs = env.reset();
        Ok((env, obs))
    }

    /// Restores the rest shape and the initial alignment. The random stream
    /// is not rewound.
    pub fn reset(&mut self) -> Observation {
        self.wire = self.rest.clone();
        self.beam = self.initial_beam;
        self.step = 0;
        self.observe()
    }

    /// Overrides the number of steps allowed before the episode ends.
    pub fn set_horizon(&mut self, horizon: usize) {
        self.horizon = horizon;
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.wire.time
    }

    pub fn beam(&self) -> BeamState {
        self.beam
    }

    pub fn gateway(&self) -> Vec3 {
        self.gateway
    }

    pub fn wire(&self) -> &WireState {
        &self.wire
    }

    pub fn sbs_position(&self) -> Vec3 {
        self.wire.positions[self.cfg.sbs_point]
    }

    pub fn observe(&self) -> Observation {
        let position = match self.cfg.obs_frame {
            ObsFrame::Gateway => self.sbs_position() - self.gateway,
            ObsFrame::World => self.sbs_position(),
        };
        Observation {
            position,
            velocity: self.wire.velocities[self.cfg.sbs_point],
            beam_dir: self.beam.direction(),
        }
    }

    /// Received power for the current wire shape and a given steering.
    pub fn power_with_beam(&self, beam: BeamState) -> Result<f64, EnvError> {
        let aod = radio::aod_geometry(&self.sbs_position(), &self.gateway)?;
        Ok(radio::received_power(
            &aod,
            beam.steer_zenith,
            beam.steer_azimuth,
            &self.cfg.antenna,
            &self.cfg.budget,
        )?)
    }

    pub fn received_power(&self) -> Result<f64, EnvError> {
        self.power_with_beam(self.beam)
    }

    fn advance_physics(&mut self, adversary: AdversaryAction) -> Result<(), EnvError> {
        if self.step >= self.horizon {
            return Err(EnvError::EpisodeFinished(self.horizon));
        }
        let mut wind = self.cfg.env_wind.at(self.wire.time);
        if self.cfg.adversary_active {
            wind += adversary_wind(adversary, self.cfg.adversary_speed);
        }
        self.wire
            .step(&wind, &self.cfg.phys, self.cfg.tau, self.substeps, &mut self.rng)?;
        Ok(())
    }

    pub fn step(
        &mut self,
        protagonist: ProtagonistAction,
        adversary: AdversaryAction,
    ) -> Result<StepOutcome, EnvError> {
        self.advance_physics(adversary)?;
        self.beam = apply_protagonist_action(self.beam, protagonist, self.cfg.beta);
        self.step += 1;
        let power_dbm = self.received_power()?;
        let reward_protagonist = self.cfg.reward(power_dbm);
        Ok(StepOutcome {
            observation: self.observe(),
            reward_protagonist,
            reward_adversary: -reward_protagonist,
            power_dbm,
        })
    }

    /// Received power each protagonist action would yield on the next tick,
    /// using a cloned copy of the physics (same noise draw as the real step).
    pub fn lookahead_powers(
        &self,
        adversary: AdversaryAction,
    ) -> Result<[f64; ProtagonistAction::COUNT], EnvError> {
        let mut probe = self.clone();
        probe.advance_physics(adversary)?;
        let mut powers = [0.0; ProtagonistAction::COUNT];
        for (slot, &action) in powers.iter_mut().zip(ProtagonistAction::ALL) {
            *slot = probe.power_with_beam(apply_protagonist_action(self.beam, action, self.cfg.beta))?;
        }
        Ok(powers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn reset_aligns_beam_to_boresight_power() {
        let (env, obs) = Env::new(EnvConfig::default(), rng()).unwrap();
        assert_abs_diff_eq!(env.received_power().unwrap(), -12.87, epsilon = 0.05);
        assert_eq!(obs.velocity, Vec3::zeros());
        assert_abs_diff_eq!(env.beam().steer_zenith, 90.0, epsilon = 1e-9);
        assert_abs_diff_eq!(env.beam().steer_azimuth, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn zero_gravity_gateway_at_wire_height_is_boresight() {
        let mut cfg = EnvConfig::default();
        cfg.phys.gravity = Vec3::zeros();
        cfg.gateway.mount = GatewayMount::Absolute;
        let (env, _) = Env::new(cfg, rng()).unwrap();
        assert_abs_diff_eq!(env.beam().steer_zenith, 90.0, epsilon = 1e-12);
        assert_abs_diff_eq!(env.beam().steer_azimuth, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn absolute_mount_sees_the_sag() {
        let mut cfg = EnvConfig::default();
        cfg.gateway.mount = GatewayMount::Absolute;
        let (env, _) = Env::new(cfg, rng()).unwrap();
        // SBS hangs below the gateway, so the zenith exceeds 90°
        assert!(env.beam().steer_zenith > 100.0);
        assert!(env.received_power().unwrap() < -13.0);
    }

    #[test]
    fn protagonist_action_table() {
        let b = BeamState {
            steer_zenith: 90.0,
            steer_azimuth: 0.0,
        };
        assert_eq!(apply_protagonist_action(b, ProtagonistAction::Stay, 1.0), b);
        let up = apply_protagonist_action(b, ProtagonistAction::Up, 1.0);
        assert_eq!((up.steer_zenith, up.steer_azimuth), (89.0, 0.0));
        let left = apply_protagonist_action(b, ProtagonistAction::Left, 1.0);
        assert_eq!((left.steer_zenith, left.steer_azimuth), (90.0, 1.0));
        let down = apply_protagonist_action(b, ProtagonistAction::Down, 1.0);
        assert_eq!(down.steer_zenith, 91.0);
        let right = apply_protagonist_action(b, ProtagonistAction::Right, 1.0);
        assert_eq!(right.steer_azimuth, -1.0);
    }

    #[test]
    fn adversary_wind_table() {
        assert_eq!(adversary_wind(AdversaryAction::Stay, 10.0), Vec3::zeros());
        assert_eq!(adversary_wind(AdversaryAction::Up, 10.0), Vec3::new(0.0, 0.0, 10.0));
        assert_eq!(adversary_wind(AdversaryAction::Back, 10.0), Vec3::new(0.0, -10.0, 0.0));
        assert_eq!(adversary_wind(AdversaryAction::Left, 10.0), Vec3::new(-10.0, 0.0, 0.0));
        assert_eq!(adversary_wind(AdversaryAction::Front, 10.0), Vec3::new(0.0, 10.0, 0.0));
        for &a in AdversaryAction::ALL {
            let w = adversary_wind(a, 10.0);
            assert!(w.norm() == 0.0 || w.norm() == 10.0);
        }
    }

    #[test]
    fn reward_clipping_cases() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.reward(-12.87), 1.0);
        assert_eq!(cfg.reward(-27.0), 0.0);
        assert_eq!(cfg.reward(-40.0), -1.0);
        assert_abs_diff_eq!(cfg.reward(-25.5), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn beam_direction_poles() {
        let b = BeamState {
            steer_zenith: 90.0,
            steer_azimuth: 0.0,
        };
        assert_abs_diff_eq!((b.direction() - Vec3::new(1.0, 0.0, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let top = BeamState {
            steer_zenith: 0.0,
            steer_azimuth: 37.0,
        };
        assert_abs_diff_eq!((top.direction() - Vec3::new(0.0, 0.0, 1.0)).norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn episode_has_table_horizon_and_then_stops() {
        let cfg = EnvConfig::default();
        assert_eq!(cfg.horizon(), 1000);
        let mut short = cfg.clone();
        short.observation_time = 0.05;
        let (mut env, _) = Env::new(short, rng()).unwrap();
        for _ in 0..5 {
            env.step(ProtagonistAction::Stay, AdversaryAction::Stay).unwrap();
        }
        assert!(matches!(
            env.step(ProtagonistAction::Stay, AdversaryAction::Stay),
            Err(EnvError::EpisodeFinished(5))
        ));
        env.reset();
        assert!(env.step(ProtagonistAction::Stay, AdversaryAction::Stay).is_ok());
    }

    #[test]
    fn identical_seeds_give_identical_resets() {
        let (_, a) = Env::new(EnvConfig::default(), rng()).unwrap();
        let (_, b) = Env::new(EnvConfig::default(), rng()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_rejected() {
        let defaults = EnvConfig::default;
        assert!(EnvConfig { sbs_point: 0, ..defaults() }.validate().is_err());
        assert!(EnvConfig { clip_scale: 0.0, ..defaults() }.validate().is_err());
        assert!(EnvConfig { observation_time: 0.001, ..defaults() }.validate().is_err());
        let mut stiff = defaults();
        stiff.phys.spring_constant = 1e15;
        assert!(stiff.validate().is_err());
    }
}
