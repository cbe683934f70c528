//! Messenger-wire dynamics.
//!
//! The wire is a chain of `N` proxy mass points of mass `m / N` each. The two
//! end points are pinned to the poles; every interior point feels gravity, a
//! zero-rest-length spring pull toward its two neighbours, linear drag toward
//! the ambient wind velocity, and a white-noise pressure term.
//!
//! The stochastic equations are integrated with a semi-implicit
//! Euler–Maruyama scheme: the velocity increment uses the state at the start
//! of the sub-interval, and the position is advanced with the updated
//! velocity.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::WireError;

pub type Vec3 = Vector3<f64>;

/// Physical constants of the wire model.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysParams {
    /// Number of proxy mass points, end points included.
    pub n_points: usize,
    /// Total wire mass in kg.
    pub total_mass: f64,
    /// Spring constant in N/m.
    pub spring_constant: f64,
    /// Drag constant in 1/s.
    pub drag_constant: f64,
    /// Gravitational acceleration in m/s².
    pub gravity: Vec3,
    /// Diffusion matrix applied to the per-point Wiener increments.
    pub wind_cov: Matrix3<f64>,
    pub endpoint_a: Vec3,
    pub endpoint_b: Vec3,
}

impl PhysParams {
    /// Wire spanning `span` metres along the y axis at height `height`,
    /// with the remaining constants at their reference values.
    pub fn reference(height: f64, span: f64) -> Self {
        Self {
            n_points: 11,
            total_mass: 10.0,
            spring_constant: 100.0,
            drag_constant: 1.0,
            gravity: Vec3::new(0.0, 0.0, -9.8),
            wind_cov: Matrix3::identity() * 0.1,
            endpoint_a: Vec3::new(0.0, -span / 2.0, height),
            endpoint_b: Vec3::new(0.0, span / 2.0, height),
        }
    }

    pub fn validate(&self) -> Result<(), WireError> {
        if self.n_points < 3 {
            return Err(WireError::InvalidParams(format!(
                "n_points must be at least 3, got {}",
                self.n_points
            )));
        }
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return Err(WireError::InvalidParams(format!(
                "total_mass must be positive, got {}",
                self.total_mass
            )));
        }
        if !(self.spring_constant > 0.0 && self.spring_constant.is_finite()) {
            return Err(WireError::InvalidParams(format!(
                "spring_constant must be positive, got {}",
                self.spring_constant
            )));
        }
        if !(self.drag_constant >= 0.0 && self.drag_constant.is_finite()) {
            return Err(WireError::InvalidParams(format!(
                "drag_constant must be non-negative, got {}",
                self.drag_constant
            )));
        }
        let all_finite = self.gravity.iter().all(|v| v.is_finite())
            && self.wind_cov.iter().all(|v| v.is_finite())
            && self.endpoint_a.iter().all(|v| v.is_finite())
            && self.endpoint_b.iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(WireError::InvalidParams(
                "gravity, wind_cov and endpoints must be finite".into(),
            ));
        }
        let cov = &self.wind_cov;
        if (cov - cov.transpose()).abs().max() > 1e-12 * (1.0 + cov.abs().max()) {
            return Err(WireError::InvalidParams("wind_cov must be symmetric".into()));
        }
        let eig = cov.symmetric_eigenvalues();
        if eig.iter().any(|&l| l < -1e-12 * (1.0 + cov.abs().max())) {
            return Err(WireError::InvalidParams(
                "wind_cov must be positive semi-definite".into(),
            ));
        }
        Ok(())
    }

    /// Coefficient `k0·N/m` multiplying the discrete second difference.
    pub fn tension_coeff(&self) -> f64 {
        self.spring_constant * self.n_points as f64 / self.total_mass
    }

    /// Largest stable integration step, `2·sqrt(m / (2·k0·N))`.
    pub fn stability_bound(&self) -> f64 {
        2.0 * (self.total_mass / (2.0 * self.spring_constant * self.n_points as f64)).sqrt()
    }

    /// Substep count actually used for an interval `dt`: at least `requested`,
    /// raised until the substep length is at most half the stability bound.
    pub fn effective_substeps(&self, dt: f64, requested: usize) -> usize {
        let limit = 0.5 * self.stability_bound();
        let needed = (dt / limit).ceil() as usize;
        requested.max(needed).max(1)
    }
}

/// Largest substep count accepted per interval; stiffer wires are rejected
/// at configuration time instead of stalling the integrator.
pub const MAX_SUBSTEPS: usize = 100_000;

/// Positions and velocities of every proxy point.
#[derive(Debug, Clone, PartialEq)]
pub struct WireState {
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub time: f64,
}

impl WireState {
    pub fn n_points(&self) -> usize {
        self.positions.len()
    }

    /// Kinetic energy plus spring potential energy (gravity excluded).
    pub fn mechanical_energy(&self, params: &PhysParams) -> f64 {
        let point_mass = params.total_mass / params.n_points as f64;
        let kinetic: f64 = self
            .velocities
            .iter()
            .map(|v| 0.5 * point_mass * v.norm_squared())
            .sum();
        let spring: f64 = self
            .positions
            .windows(2)
            .map(|w| 0.5 * params.spring_constant * (w[1] - w[0]).norm_squared())
            .sum();
        kinetic + spring
    }

    /// Advances the interior points by `dt` using `substeps` equal
    /// sub-intervals. End points are never written.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        wind_velocity: &Vec3,
        params: &PhysParams,
        dt: f64,
        substeps: usize,
        rng: &mut R,
    ) -> Result<(), WireError> {
        if !(dt > 0.0) || substeps == 0 {
            return Err(WireError::InvalidStep { dt, substeps });
        }
        let n = self.positions.len();
        let h = dt / substeps as f64;
        let sqrt_h = h.sqrt();
        let coeff = params.tension_coeff();
        let c0 = params.drag_constant;
        let mut accel = vec![Vec3::zeros(); n];

        for sub in 0..substeps {
            for i in 1..n - 1 {
                let p = &self.positions;
                accel[i] = params.gravity + (p[i + 1] + p[i - 1] - 2.0 * p[i]) * coeff;
            }
            for i in 1..n - 1 {
                let xi = Vec3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                let v = self.velocities[i];
                let dv = accel[i] * h - (v - wind_velocity) * (c0 * h) + params.wind_cov * xi * sqrt_h;
                let v_new = v + dv;
                self.velocities[i] = v_new;
                self.positions[i] += v_new * h;
            }
            let finite = (1..n - 1).all(|i| {
                self.positions[i].iter().all(|c| c.is_finite())
                    && self.velocities[i].iter().all(|c| c.is_finite())
            });
            if !finite {
                return Err(WireError::Diverged {
                    time: self.time,
                    substep: sub,
                });
            }
        }
        self.time += dt;
        Ok(())
    }
}

/// Acceleration of interior point `i` from gravity and the neighbouring
/// springs.
pub fn tensile_acceleration(
    state: &WireState,
    i: usize,
    params: &PhysParams,
) -> Result<Vec3, WireError> {
    let n = state.n_points();
    if i == 0 || i + 1 >= n {
        return Err(WireError::EndpointIndex { index: i, n_points: n });
    }
    let p = &state.positions;
    Ok(params.gravity + (p[i + 1] + p[i - 1] - 2.0 * p[i]) * params.tension_coeff())
}

/// Static shape of the wire with zero wind: every interior point satisfies
/// `g + (k0·N/m)·(x[i+1] + x[i-1] − 2·x[i]) = 0`.
///
/// Solved per axis as a tridiagonal system with the Thomas algorithm.
pub fn equilibrium_shape(params: &PhysParams) -> Result<WireState, WireError> {
    params.validate()?;
    let n = params.n_points;
    let interior = n - 2;
    let coeff = params.tension_coeff();
    let mut positions = vec![Vec3::zeros(); n];
    positions[0] = params.endpoint_a;
    positions[n - 1] = params.endpoint_b;

    for axis in 0..3 {
        // -x[i-1] + 2 x[i] - x[i+1] = g / coeff, endpoints moved to the rhs
        let mut rhs = vec![params.gravity[axis] / coeff; interior];
        rhs[0] += params.endpoint_a[axis];
        rhs[interior - 1] += params.endpoint_b[axis];
        let solution = solve_second_difference(&rhs)?;
        for (k, value) in solution.into_iter().enumerate() {
            positions[k + 1][axis] = value;
        }
    }

    Ok(WireState {
        positions,
        velocities: vec![Vec3::zeros(); n],
        time: 0.0,
    })
}

/// Solves `tridiag(-1, 2, -1) · x = rhs`.
fn solve_second_difference(rhs: &[f64]) -> Result<Vec<f64>, WireError> {
    let n = rhs.len();
    let mut c_prime = vec![0.0; n];
    let mut d_prime = vec![0.0; n];
    let mut denom = 2.0;
    c_prime[0] = -1.0 / denom;
    d_prime[0] = rhs[0] / denom;
    for i in 1..n {
        denom = 2.0 + c_prime[i - 1];
        if denom.abs() < 1e-300 {
            return Err(WireError::SingularSystem);
        }
        c_prime[i] = -1.0 / denom;
        d_prime[i] = (rhs[i] + d_prime[i - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d_prime[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d_prime[i] - c_prime[i] * x[i + 1];
    }
    Ok(x)
}

/// Sinusoidal ambient wind `amplitude · sin(2πt / period)` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvWind {
    pub amplitude: f64,
    pub periods: [f64; 3],
}

impl Default for EnvWind {
    fn default() -> Self {
        Self {
            amplitude: 5.0,
            periods: [4.0, 6.0, 8.0],
        }
    }
}

impl EnvWind {
    pub fn at(&self, t: f64) -> Vec3 {
        let two_pi = 2.0 * std::f64::consts::PI;
        Vec3::from_fn(|axis, _| self.amplitude * (two_pi * t / self.periods[axis]).sin())
    }
}

/// Ambient wind at time `t` with the reference amplitude and periods.
pub fn env_wind(t: f64) -> Vec3 {
    EnvWind::default().at(t)
}
