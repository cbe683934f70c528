//! Transmit antenna gain and line-of-sight link budget.
//!
//! The transmit gain is the sum (in dB) of a 3GPP-style element pattern and
//! the array factor of a uniform planar array steered to `(θ_s, φ_s)`. All
//! angles are in degrees. Received power follows the free-space Friis
//! equation, evaluated in the log domain.

use crate::error::RadioError;
use crate::wire_sim::Vec3;

/// Array factor returned at an exact null.
pub const AF_FLOOR_DB: f64 = -400.0;

#[derive(Debug, Clone, PartialEq)]
pub struct AntennaConfig {
    /// Maximum element gain in dBi.
    pub g_max: f64,
    /// Front-back ratio in dB.
    pub front_back: f64,
    /// Vertical side-lobe level limit in dB.
    pub sla_v: f64,
    pub theta_3db: f64,
    pub phi_3db: f64,
    pub n_v: usize,
    pub n_h: usize,
    pub spacing_v: f64,
    pub spacing_h: f64,
    pub wavelength: f64,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        Self {
            g_max: 8.0,
            front_back: 30.0,
            sla_v: 30.0,
            theta_3db: 65.0,
            phi_3db: 65.0,
            n_v: 32,
            n_h: 32,
            spacing_v: 2.5e-3,
            spacing_h: 2.5e-3,
            wavelength: 5e-3,
        }
    }
}

impl AntennaConfig {
    pub fn validate(&self) -> Result<(), RadioError> {
        let bad = |msg: &str| Err(RadioError::InvalidConfig(msg.to_string()));
        if self.n_v < 1 || self.n_h < 1 {
            return bad("element counts must be at least 1");
        }
        if !(self.spacing_v > 0.0 && self.spacing_h > 0.0) {
            return bad("element spacings must be positive");
        }
        if !(self.theta_3db > 0.0 && self.phi_3db > 0.0) {
            return bad("3 dB beamwidths must be positive");
        }
        if !(self.wavelength > 0.0) {
            return bad("wavelength must be positive");
        }
        if !(self.g_max.is_finite() && self.front_back.is_finite() && self.sla_v.is_finite()) {
            return bad("gains must be finite");
        }
        Ok(())
    }

    pub fn n_elements(&self) -> usize {
        self.n_v * self.n_h
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    /// Transmit power in dBm.
    pub tx_power: f64,
    /// Receiver antenna gain in dBi.
    pub rx_gain: f64,
    /// Wavelength in metres.
    pub wavelength: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            tx_power: 23.0,
            rx_gain: 8.0,
            wavelength: 5e-3,
        }
    }
}

/// Angle of departure from the gateway toward the transmitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoD {
    pub distance: f64,
    pub zenith: f64,
    pub azimuth: f64,
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(angle: f64) -> f64 {
    let mut a = angle % 360.0;
    if a > 180.0 {
        a -= 360.0;
    } else if a <= -180.0 {
        a += 360.0;
    }
    a
}

pub fn element_pattern(zenith: f64, azimuth: f64, cfg: &AntennaConfig) -> f64 {
    let vertical = -(12.0 * ((zenith - 90.0) / cfg.theta_3db).powi(2)).min(cfg.sla_v);
    let horizontal = -(12.0 * (wrap_degrees(azimuth) / cfg.phi_3db).powi(2)).min(cfg.front_back);
    cfg.g_max - (-(vertical + horizontal)).min(cfg.front_back)
}

/// `10·log10(|Σ w|² / n)` for the steered planar array, floored at
/// [`AF_FLOOR_DB`].
pub fn array_factor(
    zenith: f64,
    azimuth: f64,
    steer_zenith: f64,
    steer_azimuth: f64,
    cfg: &AntennaConfig,
) -> f64 {
    let (t, p) = (zenith.to_radians(), azimuth.to_radians());
    let (ts, ps) = (steer_zenith.to_radians(), steer_azimuth.to_radians());
    let psi_v = t.cos() - ts.cos();
    let psi_h = t.sin() * p.sin() - ts.sin() * ps.sin();
    let two_pi = 2.0 * std::f64::consts::PI;
    let phase_v = two_pi * cfg.spacing_v * psi_v / cfg.wavelength;
    let phase_h = two_pi * cfg.spacing_h * psi_h / cfg.wavelength;

    // w[p][r] = exp(j(p·phase_v + r·phase_h)) factorises into two sums
    let power_v = coherent_power(cfg.n_v, phase_v);
    let power_h = coherent_power(cfg.n_h, phase_h);
    let gain = power_v * power_h / cfg.n_elements() as f64;
    if gain > 0.0 {
        (10.0 * gain.log10()).max(AF_FLOOR_DB)
    } else {
        AF_FLOOR_DB
    }
}

/// `|Σ_{k=0}^{n-1} exp(j·k·phase)|²`
fn coherent_power(n: usize, phase: f64) -> f64 {
    let (mut re, mut im) = (0.0, 0.0);
    for k in 0..n {
        let (s, c) = (k as f64 * phase).sin_cos();
        re += c;
        im += s;
    }
    re * re + im * im
}

pub fn tx_gain(
    zenith: f64,
    azimuth: f64,
    steer_zenith: f64,
    steer_azimuth: f64,
    cfg: &AntennaConfig,
) -> f64 {
    element_pattern(zenith, azimuth, cfg)
        + array_factor(zenith, azimuth, steer_zenith, steer_azimuth, cfg)
}

/// Free-space path gain `20·log10(λ / (4πd))` in dB.
pub fn path_gain_db(distance: f64, wavelength: f64) -> Result<f64, RadioError> {
    if !(distance > 0.0) {
        return Err(RadioError::NonPositiveDistance(distance));
    }
    Ok(20.0 * (wavelength / (4.0 * std::f64::consts::PI * distance)).log10())
}

/// Received power in dBm at the gateway.
pub fn received_power(
    aod: &AoD,
    steer_zenith: f64,
    steer_azimuth: f64,
    cfg: &AntennaConfig,
    budget: &LinkBudget,
) -> Result<f64, RadioError> {
    let path = path_gain_db(aod.distance, budget.wavelength)?;
    let gain = tx_gain(aod.zenith, aod.azimuth, steer_zenith, steer_azimuth, cfg);
    Ok(budget.tx_power + gain + budget.rx_gain + path)
}

/// Distance, zenith and azimuth of `sbs − gateway`.
///
/// Azimuth uses the quadrant-aware arctangent and is defined as 0° on the
/// vertical axis.
pub fn aod_geometry(sbs: &Vec3, gateway: &Vec3) -> Result<AoD, RadioError> {
    let diff = sbs - gateway;
    let distance = diff.norm();
    if !(distance > 0.0) {
        return Err(RadioError::CoincidentPoints);
    }
    let zenith = (diff.z / distance).clamp(-1.0, 1.0).acos().to_degrees();
    let azimuth = if diff.x == 0.0 && diff.y == 0.0 {
        0.0
    } else {
        let a = diff.y.atan2(diff.x).to_degrees();
        if a <= -180.0 {
            a + 360.0
        } else {
            a
        }
    };
    Ok(AoD {
        distance,
        zenith,
        azimuth,
    })
}
