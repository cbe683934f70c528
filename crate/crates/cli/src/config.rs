//! Flat `key: value` run configuration.
//!
//! One entry per line, `#` starts a comment, units are part of the key name.
//! Absent keys keep their reference defaults; unknown or repeated keys are
//! rejected. [`RunConfig::to_text`] writes every key, so loading its output
//! reproduces the same configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::Matrix3;
use sha2::{Digest, Sha256};
use wirebeam_core::env::{GatewayMount, ObsFrame};
use wirebeam_core::rarl::{rest_centered_scaling, Policy, TrainConfig, Variant};
use wirebeam_core::wire_sim::Vec3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub key: Option<String>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(key) = &self.key {
            write!(f, "{key}: ")?;
        }
        f.write_str(&self.message)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingMode {
    None,
    RestCentered,
}

impl FromStr for ScalingMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "rest_centered" => Ok(Self::RestCentered),
            other => Err(format!("unknown input scaling '{other}' (expected none|rest_centered)")),
        }
    }
}

impl fmt::Display for ScalingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::RestCentered => "rest_centered",
        })
    }
}

/// Policies that need no checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Stay,
    UpperLimit,
    RandomUniform,
}

impl Baseline {
    pub fn policy(self) -> Policy {
        match self {
            Self::Stay => Policy::Stay,
            Self::UpperLimit => Policy::UpperLimit,
            Self::RandomUniform => Policy::RandomUniform,
        }
    }
}

impl FromStr for Baseline {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stay" => Ok(Self::Stay),
            "upper_limit" => Ok(Self::UpperLimit),
            "random_uniform" => Ok(Self::RandomUniform),
            other => Err(format!(
                "unknown baseline '{other}' (expected stay|upper_limit|random_uniform)"
            )),
        }
    }
}

impl fmt::Display for Baseline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.policy().name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub mass_grid: Vec<f64>,
    pub spring_grid: Vec<f64>,
    pub baselines: Vec<Baseline>,
    pub episodes_per_cell: usize,
    pub seeds_per_cell: usize,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            mass_grid: vec![1.0, 5.0, 10.0, 15.0, 20.0],
            spring_grid: vec![10.0, 50.0, 100.0, 150.0, 200.0],
            baselines: vec![Baseline::Stay, Baseline::UpperLimit],
            episodes_per_cell: 1,
            seeds_per_cell: 5,
        }
    }
}

/// Azimuth cut of the transmit pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSpec {
    pub zenith_deg: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub step_deg: f64,
}

impl Default for PatternSpec {
    fn default() -> Self {
        Self {
            zenith_deg: 90.0,
            azimuth_min_deg: -180.0,
            azimuth_max_deg: 180.0,
            step_deg: 0.01,
        }
    }
}

impl PatternSpec {
    /// Sample azimuths `min + i·step` up to and including `max`, rounded to
    /// 1e-9° so decimal steps print cleanly.
    pub fn azimuths(&self) -> Vec<f64> {
        let n = ((self.azimuth_max_deg - self.azimuth_min_deg) / self.step_deg + 1e-9).floor() as usize;
        (0..=n)
            .map(|i| ((self.azimuth_min_deg + i as f64 * self.step_deg) * 1e9).round() / 1e9)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub input_scaling: ScalingMode,
    pub sweep: SweepSpec,
    pub pattern: PatternSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            input_scaling: ScalingMode::None,
            sweep: SweepSpec::default(),
            pattern: PatternSpec::default(),
        }
    }
}

type Getter = fn(&RunConfig) -> String;
type Setter = fn(&mut RunConfig, &str) -> Result<(), String>;

struct Field {
    key: &'static str,
    get: Getter,
    set: Setter,
}

fn real(v: &str) -> Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("'{v}' is not a number"))?;
    if !x.is_finite() {
        return Err(format!("'{v}' is not finite"));
    }
    Ok(x)
}

fn positive(v: &str) -> Result<f64, String> {
    let x = real(v)?;
    if x <= 0.0 {
        return Err(format!("must be positive, got {x}"));
    }
    Ok(x)
}

fn non_negative(v: &str) -> Result<f64, String> {
    let x = real(v)?;
    if x < 0.0 {
        return Err(format!("must be non-negative, got {x}"));
    }
    Ok(x)
}

fn count(v: &str) -> Result<usize, String> {
    v.parse().map_err(|_| format!("'{v}' is not a non-negative integer"))
}

fn positive_count(v: &str) -> Result<usize, String> {
    let n = count(v)?;
    if n == 0 {
        return Err("must be at least 1".into());
    }
    Ok(n)
}

fn list<T, F: Fn(&str) -> Result<T, String>>(v: &str, item: F) -> Result<Vec<T>, String> {
    if v.trim().is_empty() {
        return Err("list must not be empty".into());
    }
    v.split(',').map(|s| item(s.trim())).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(", ")
}

fn parsed<T: FromStr<Err = String>>(v: &str) -> Result<T, String> {
    v.parse()
}

macro_rules! field {
    ($key:literal, |$c:ident| $get:expr, |$m:ident, $v:ident| $set:expr) => {
        Field {
            key: $key,
            get: |$c: &RunConfig| $get.to_string(),
            set: |$m: &mut RunConfig, $v: &str| {
                $set;
                Ok(())
            },
        }
    };
}

fn fields() -> Vec<Field> {
    vec![
        // wire
        field!("n_points", |c| c.train.env.phys.n_points, |m, v| {
            let n = count(v)?;
            if n < 3 {
                return Err(format!("must be at least 3, got {n}"));
            }
            m.train.env.phys.n_points = n
        }),
        field!("total_mass_kg", |c| c.train.env.phys.total_mass, |m, v| m.train.env.phys.total_mass = positive(v)?),
        field!("spring_n_per_m", |c| c.train.env.phys.spring_constant, |m, v| m.train.env.phys.spring_constant =
            positive(v)?),
        field!("drag_per_s", |c| c.train.env.phys.drag_constant, |m, v| m.train.env.phys.drag_constant =
            non_negative(v)?),
        field!("gravity_m_per_s2", |c| join(c.train.env.phys.gravity.as_slice()), |m, v| {
            let g = list(v, real)?;
            if g.len() != 3 {
                return Err(format!("expected 3 components, got {}", g.len()));
            }
            m.train.env.phys.gravity = Vec3::new(g[0], g[1], g[2])
        }),
        field!("wind_cov", |c| join(c.train.env.phys.wind_cov.transpose().as_slice()), |m, v| {
            let w = list(v, real)?;
            m.train.env.phys.wind_cov = match w.len() {
                1 => Matrix3::identity() * w[0],
                9 => Matrix3::from_row_slice(&w),
                n => return Err(format!("expected 1 or 9 entries, got {n}")),
            }
        }),
        field!("wire_height_m", |c| c.train.env.phys.endpoint_a.z, |m, v| {
            let h = real(v)?;
            m.train.env.phys.endpoint_a.z = h;
            m.train.env.phys.endpoint_b.z = h
        }),
        field!("wire_span_m", |c| c.train.env.phys.endpoint_b.y - c.train.env.phys.endpoint_a.y, |m, v| {
            let d = positive(v)?;
            m.train.env.phys.endpoint_a.y = -d / 2.0;
            m.train.env.phys.endpoint_b.y = d / 2.0
        }),
        field!("sbs_point", |c| c.train.env.sbs_point + 1, |m, v| {
            let p = positive_count(v)?;
            m.train.env.sbs_point = p - 1
        }),
        field!("substeps", |c| c.train.env.substeps, |m, v| m.train.env.substeps = positive_count(v)?),
        // wind
        field!("wind_amplitude_m_per_s", |c| c.train.env.env_wind.amplitude, |m, v| m.train.env.env_wind.amplitude =
            non_negative(v)?),
        field!("wind_periods_s", |c| join(&c.train.env.env_wind.periods), |m, v| {
            let p = list(v, positive)?;
            if p.len() != 3 {
                return Err(format!("expected 3 periods, got {}", p.len()));
            }
            m.train.env.env_wind.periods = [p[0], p[1], p[2]]
        }),
        field!("adversary_speed_m_per_s", |c| c.train.env.adversary_speed, |m, v| m.train.env.adversary_speed =
            non_negative(v)?),
        // geometry and link
        field!("gateway_height_m", |c| c.train.env.gateway.height, |m, v| m.train.env.gateway.height = real(v)?),
        field!("gateway_distance_m", |c| c.train.env.gateway.distance, |m, v| m.train.env.gateway.distance =
            real(v)?),
        field!("gateway_mount", |c| c.train.env.gateway.mount, |m, v| m.train.env.gateway.mount =
            parsed::<GatewayMount>(v)?),
        field!("tx_power_dbm", |c| c.train.env.budget.tx_power, |m, v| m.train.env.budget.tx_power = real(v)?),
        field!("rx_gain_dbi", |c| c.train.env.budget.rx_gain, |m, v| m.train.env.budget.rx_gain = real(v)?),
        field!("wavelength_m", |c| c.train.env.budget.wavelength, |m, v| {
            let w = positive(v)?;
            m.train.env.budget.wavelength = w;
            m.train.env.antenna.wavelength = w
        }),
        // antenna
        field!("element_gain_dbi", |c| c.train.env.antenna.g_max, |m, v| m.train.env.antenna.g_max = real(v)?),
        field!("front_back_db", |c| c.train.env.antenna.front_back, |m, v| m.train.env.antenna.front_back =
            non_negative(v)?),
        field!("sla_v_db", |c| c.train.env.antenna.sla_v, |m, v| m.train.env.antenna.sla_v = non_negative(v)?),
        field!("theta_3db_deg", |c| c.train.env.antenna.theta_3db, |m, v| m.train.env.antenna.theta_3db =
            positive(v)?),
        field!("phi_3db_deg", |c| c.train.env.antenna.phi_3db, |m, v| m.train.env.antenna.phi_3db = positive(v)?),
        field!("n_v", |c| c.train.env.antenna.n_v, |m, v| m.train.env.antenna.n_v = positive_count(v)?),
        field!("n_h", |c| c.train.env.antenna.n_h, |m, v| m.train.env.antenna.n_h = positive_count(v)?),
        field!("spacing_v_m", |c| c.train.env.antenna.spacing_v, |m, v| m.train.env.antenna.spacing_v =
            positive(v)?),
        field!("spacing_h_m", |c| c.train.env.antenna.spacing_h, |m, v| m.train.env.antenna.spacing_h =
            positive(v)?),
        // decision process
        field!("tau_s", |c| c.train.env.tau, |m, v| m.train.env.tau = positive(v)?),
        field!("observation_time_s", |c| c.train.env.observation_time, |m, v| m.train.env.observation_time =
            positive(v)?),
        field!("beta_deg", |c| c.train.env.beta, |m, v| m.train.env.beta = positive(v)?),
        field!("clip_offset_dbm", |c| c.train.env.clip_offset, |m, v| m.train.env.clip_offset = real(v)?),
        field!("clip_scale_db", |c| c.train.env.clip_scale, |m, v| m.train.env.clip_scale = positive(v)?),
        field!("obs_frame", |c| c.train.env.obs_frame, |m, v| m.train.env.obs_frame = parsed::<ObsFrame>(v)?),
        // learning
        field!("variant", |c| c.train.variant, |m, v| m.train.variant = parsed::<Variant>(v)?),
        field!("episodes", |c| c.train.episodes, |m, v| m.train.episodes = positive_count(v)?),
        field!("epsilon", |c| c.train.epsilon, |m, v| {
            let e = real(v)?;
            if !(0.0..=1.0).contains(&e) {
                return Err(format!("must lie in [0, 1], got {e}"));
            }
            m.train.epsilon = e
        }),
        field!("gamma", |c| c.train.gamma, |m, v| {
            let g = real(v)?;
            if !(0.0..1.0).contains(&g) {
                return Err(format!("must lie in [0, 1), got {g}"));
            }
            m.train.gamma = g
        }),
        field!("target_period_episodes", |c| c.train.target_period, |m, v| m.train.target_period =
            positive_count(v)?),
        field!("test_steps", |c| c.train.test_steps, |m, v| m.train.test_steps = positive_count(v)?),
        field!("seed", |c| c.train.seed, |m, v| m.train.seed =
            v.parse().map_err(|_| format!("'{v}' is not a 64-bit unsigned integer"))?),
        field!("batch_size", |c| c.train.batch_size, |m, v| m.train.batch_size = positive_count(v)?),
        field!("replay_capacity", |c| c.train.replay_capacity, |m, v| m.train.replay_capacity = positive_count(v)?),
        field!("learning_rate", |c| c.train.learning_rate, |m, v| m.train.learning_rate = positive(v)?),
        field!("hidden_units", |c| join(&c.train.hidden), |m, v| m.train.hidden = list(v, positive_count)?),
        field!("input_scaling", |c| c.input_scaling, |m, v| m.input_scaling = parsed::<ScalingMode>(v)?),
        field!(
            "proxy_checkpoint",
            |c| c.train.proxy_checkpoint.as_deref().map(|p| p.display().to_string()).unwrap_or_default(),
            |m, v| m.train.proxy_checkpoint = (!v.is_empty()).then(|| PathBuf::from(v))
        ),
        // sweep
        field!("sweep_mass_kg", |c| join(&c.sweep.mass_grid), |m, v| m.sweep.mass_grid = list(v, positive)?),
        field!("sweep_spring_n_per_m", |c| join(&c.sweep.spring_grid), |m, v| m.sweep.spring_grid =
            list(v, positive)?),
        field!("sweep_baselines", |c| join(&c.sweep.baselines), |m, v| {
            m.sweep.baselines = if v.trim() == "none" { Vec::new() } else { list(v, parsed::<Baseline>)? }
        }),
        field!("sweep_episodes_per_cell", |c| c.sweep.episodes_per_cell, |m, v| m.sweep.episodes_per_cell =
            positive_count(v)?),
        field!("sweep_seeds_per_cell", |c| c.sweep.seeds_per_cell, |m, v| m.sweep.seeds_per_cell =
            positive_count(v)?),
        // antenna pattern cut
        field!("pattern_zenith_deg", |c| c.pattern.zenith_deg, |m, v| m.pattern.zenith_deg = real(v)?),
        field!("pattern_azimuth_min_deg", |c| c.pattern.azimuth_min_deg, |m, v| m.pattern.azimuth_min_deg =
            real(v)?),
        field!("pattern_azimuth_max_deg", |c| c.pattern.azimuth_max_deg, |m, v| m.pattern.azimuth_max_deg =
            real(v)?),
        field!("pattern_step_deg", |c| c.pattern.step_deg, |m, v| m.pattern.step_deg = positive(v)?),
    ]
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table = fields();
        let mut cfg = RunConfig::default();
        let mut seen: Vec<&str> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |key: Option<&str>, message: String| ConfigError {
                line: Some(line),
                key: key.map(str::to_string),
                message,
            };
            let (key, value) = content
                .split_once(':')
                .ok_or_else(|| err(None, format!("expected 'key: value', found '{content}'")))?;
            let (key, value) = (key.trim(), value.trim());
            let field = table
                .iter()
                .find(|f| f.key == key)
                .ok_or_else(|| err(Some(key), "unknown key".into()))?;
            if seen.contains(&field.key) {
                return Err(err(Some(key), "key given more than once".into()));
            }
            seen.push(field.key);
            (field.set)(&mut cfg, value).map_err(|m| err(Some(key), m))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            line: None,
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
        Self::parse(&text)
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        fields().iter().map(|f| (f.key, (f.get)(self))).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (key, value) in self.entries() {
            out.push_str(key);
            out.push_str(": ");
            out.push_str(&value);
            out.push('\n');
        }
        out
    }

    /// SHA-256 of [`Self::to_text`].
    pub fn hash(&self) -> [u8; 32] {
        Sha256::digest(self.to_text().as_bytes()).into()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let whole = |message: String| ConfigError {
            line: None,
            key: None,
            message,
        };
        self.train.validate().map_err(|e| whole(e.to_string()))?;
        if self.pattern.azimuth_max_deg < self.pattern.azimuth_min_deg {
            return Err(ConfigError {
                line: None,
                key: Some("pattern_azimuth_max_deg".into()),
                message: "azimuth range is empty".into(),
            });
        }
        Ok(())
    }

    /// Training configuration with the input scaling resolved.
    pub fn train_config(&self) -> Result<TrainConfig, wirebeam_core::error::TrainError> {
        let mut cfg = self.train.clone();
        cfg.input_scaling = match self.input_scaling {
            ScalingMode::None => None,
            ScalingMode::RestCentered => Some(rest_centered_scaling(&cfg.env)?),
        };
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_is_unique() {
        let keys: Vec<_> = fields().iter().map(|f| f.key).collect();
        let mut sorted = keys.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), keys.len());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse("# header\n\n  spring_n_per_m: 10   # softer wire\n").unwrap();
        assert_eq!(cfg.train.env.phys.spring_constant, 10.0);
    }

    #[test]
    fn scalar_wind_cov_expands_to_identity() {
        let cfg = RunConfig::parse("wind_cov: 0.3").unwrap();
        assert_eq!(cfg.train.env.phys.wind_cov, Matrix3::identity() * 0.3);
    }

    #[test]
    fn sbs_point_is_one_based() {
        assert_eq!(RunConfig::parse("sbs_point: 6").unwrap().train.env.sbs_point, 5);
        assert!(RunConfig::parse("sbs_point: 11").is_err());
    }

    #[test]
    fn pattern_azimuths_include_both_ends() {
        let spec = PatternSpec {
            zenith_deg: 90.0,
            azimuth_min_deg: -8.0,
            azimuth_max_deg: 8.0,
            step_deg: 0.01,
        };
        let az = spec.azimuths();
        assert_eq!(az.len(), 1601);
        assert_eq!(az[0], -8.0);
        assert_eq!(az[1600], 8.0);
        assert_eq!(az[1158], 3.58);
    }
}
