use nalgebra::Matrix3;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use wirebeam_core::wire_sim::{
    env_wind, equilibrium_shape, tensile_acceleration, PhysParams, Vec3, WireState,
};

fn reference() -> PhysParams {
    PhysParams::reference(5.0, 10.0)
}

/// Midpoint sag of the discrete parabola `z_j = −(c/2)·j·(N−1−j)`,
/// `c = g·m/(k0·N)`.
fn parabola_sag(n: usize, m: f64, k0: f64, g: f64) -> f64 {
    let c = g * m / (k0 * n as f64);
    let j = ((n - 1) / 2) as f64;
    0.5 * c * j * ((n - 1) as f64 - j)
}

/// Dense Gaussian elimination of the interior equilibrium equations, one axis.
fn dense_equilibrium_axis(params: &PhysParams, axis: usize) -> Vec<f64> {
    let n = params.n_points;
    let k = n - 2;
    let coeff = params.spring_constant * n as f64 / params.total_mass;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (r, row) in a.iter_mut().enumerate() {
        row[r] = -2.0 * coeff;
        if r > 0 {
            row[r - 1] = coeff;
        }
        if r + 1 < k {
            row[r + 1] = coeff;
        }
        let mut rhs = -params.gravity[axis];
        if r == 0 {
            rhs -= coeff * params.endpoint_a[axis];
        }
        if r + 1 == k {
            rhs -= coeff * params.endpoint_b[axis];
        }
        row[k] = rhs;
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|r| a[r][k] / a[r][r]).collect()
}

#[test]
fn reference_sag_matches_parabola_and_dense_solve() {
    let params = reference();
    let eq = equilibrium_shape(&params).unwrap();
    let mid = eq.positions[5];
    let sag = 5.0 - mid.z;
    assert!((sag - 1.1136).abs() < 5e-5, "sag {sag}");
    assert!((sag - parabola_sag(11, 10.0, 100.0, 9.8)).abs() < 1e-9);
    let dense_z = dense_equilibrium_axis(&params, 2);
    for (i, z) in dense_z.iter().enumerate() {
        assert!((eq.positions[i + 1].z - z).abs() < 1e-9);
    }
    for i in 1..10 {
        assert!(tensile_acceleration(&eq, i, &params).unwrap().norm() < 1e-9);
    }
}

#[test]
fn equilibrium_is_stationary_without_forcing() {
    let mut params = reference();
    params.wind_cov = Matrix3::zeros();
    let eq = equilibrium_shape(&params).unwrap();
    let mut state = eq.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for step in 1..=100 {
        state.step(&Vec3::zeros(), &params, 0.01, 1, &mut rng).unwrap();
        for (p, q) in state.positions.iter().zip(&eq.positions) {
            assert!((p - q).norm() < 1e-12 * step as f64);
        }
    }
}

fn mean_midpoint_displacement(state: &mut WireState, params: &PhysParams, substeps: usize, seed: u64) -> f64 {
    let rest = equilibrium_shape(params).unwrap().positions[5];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for k in 0..1000 {
        let wind = env_wind(k as f64 * 0.01);
        state.step(&wind, params, 0.01, substeps, &mut rng).unwrap();
        total += (state.positions[5] - rest).norm();
    }
    total / 1000.0
}

/// Independent integrator: explicit force evaluation, velocity then position
/// update, per-point Gaussian increments.
fn reference_run(params: &PhysParams, fine: usize, seed: u64) -> f64 {
    let eq = equilibrium_shape(params).unwrap();
    let n = params.n_points;
    let mut x: Vec<[f64; 3]> = eq.positions.iter().map(|p| [p.x, p.y, p.z]).collect();
    let mut v = vec![[0.0; 3]; n];
    let rest = x[5];
    let h = 0.01 / fine as f64;
    let kappa = params.spring_constant * n as f64 / params.total_mass;
    let g = [params.gravity.x, params.gravity.y, params.gravity.z];
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xDEAD_BEEF);
    let mut total = 0.0;
    for k in 0..1000 {
        for s in 0..fine {
            let t = k as f64 * 0.01 + s as f64 * h;
            let w = env_wind(t);
            let wind = [w.x, w.y, w.z];
            let old = x.clone();
            for i in 1..n - 1 {
                for d in 0..3 {
                    let a = g[d] + kappa * (old[i + 1][d] + old[i - 1][d] - 2.0 * old[i][d]);
                    let xi: f64 = StandardNormal.sample(&mut rng);
                    v[i][d] += a * h - params.drag_constant * (v[i][d] - wind[d]) * h + 0.1 * h.sqrt() * xi;
                    x[i][d] += v[i][d] * h;
                }
            }
        }
        total += (0..3).map(|d| (x[5][d] - rest[d]).powi(2)).sum::<f64>().sqrt();
    }
    total / 1000.0
}

#[test]
fn coarse_run_matches_fine_reference_within_five_percent() {
    let params = reference();
    let mut state = equilibrium_shape(&params).unwrap();
    let coarse = mean_midpoint_displacement(&mut state, &params, 1, 21);
    let fine = reference_run(&params, 10, 21);
    let rel = (coarse - fine).abs() / fine;
    assert!(rel < 0.05, "coarse {coarse} fine {fine} rel {rel}");
}

#[test]
fn end_position_converges_at_first_order() {
    let mut params = reference();
    params.wind_cov = Matrix3::zeros();
    let end = |substeps: usize| {
        let mut state = equilibrium_shape(&params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..1000 {
            state
                .step(&env_wind(k as f64 * 0.01), &params, 0.01, substeps, &mut rng)
                .unwrap();
        }
        state.positions[5]
    };
    let p: Vec<Vec3> = [1, 2, 4, 8].iter().map(|&s| end(s)).collect();
    let d: Vec<f64> = p.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    for w in d.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.6..2.5).contains(&ratio), "differences {d:?}");
    }
}

/// `Σ|v|² + uᵀKu − h·Σ v·(Ku)` per unit point mass, with `u` the deviation
/// from the straight rest line and `K` the scaled negative second difference.
fn discrete_energy(state: &WireState, rest: &WireState, kappa: f64, h: f64) -> f64 {
    let n = state.positions.len();
    let u: Vec<Vec3> = state.positions.iter().zip(&rest.positions).map(|(p, r)| p - r).collect();
    let mut q = 0.0;
    for i in 1..n - 1 {
        let ku = (2.0 * u[i] - u[i - 1] - u[i + 1]) * kappa;
        q += state.velocities[i].norm_squared() + u[i].dot(&ku) - h * state.velocities[i].dot(&ku);
    }
    q
}

#[test]
fn discrete_energy_balance_and_decay() {
    let mut params = reference();
    params.wind_cov = Matrix3::zeros();
    params.gravity = Vec3::zeros();
    let rest = equilibrium_shape(&params).unwrap();
    let mut state = rest.clone();
    state.velocities[4] = Vec3::new(0.7, -0.2, 1.5);
    let h = 0.01;
    let kappa = params.tension_coeff();
    let c = params.drag_constant;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut energy_samples = vec![state.mechanical_energy(&params)];
    for k in 1..=1000 {
        let before = state.clone();
        let q0 = discrete_energy(&before, &rest, kappa, h);
        state.step(&Vec3::zeros(), &params, h, 1, &mut rng).unwrap();
        let q1 = discrete_energy(&state, &rest, kappa, h);
        let dissipated: f64 = (1..10)
            .map(|i| before.velocities[i].dot(&(before.velocities[i] + state.velocities[i])))
            .sum::<f64>()
            * c
            * h;
        assert!((q1 - q0 + dissipated).abs() < 1e-12 * q0.abs().max(1.0), "step {k}");
        if k % 50 == 0 {
            energy_samples.push(state.mechanical_energy(&params));
        }
    }
    let base = rest.mechanical_energy(&params);
    for w in energy_samples.windows(2) {
        assert!(w[1] - base < w[0] - base, "{energy_samples:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn endpoints_pinned_and_replay_deterministic(
        seed in any::<u64>(),
        winds in prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), 1..60),
    ) {
        let params = reference();
        let start = equilibrium_shape(&params).unwrap();
        let run = || {
            let mut s = start.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut trace = Vec::new();
            for w in &winds {
                s.step(&Vec3::new(w[0], w[1], w[2]), &params, 0.01, 1, &mut rng).unwrap();
                trace.push(s.clone());
            }
            trace
        };
        let a = run();
        let b = run();
        prop_assert_eq!(&a, &b);
        for s in &a {
            prop_assert_eq!(s.positions[0], start.positions[0]);
            prop_assert_eq!(s.positions[10], start.positions[10]);
        }
    }

    #[test]
    fn equilibrium_residual_vanishes(
        n in 3usize..40,
        m in 0.5f64..50.0,
        k0 in 5.0f64..500.0,
    ) {
        let mut params = reference();
        params.n_points = n;
        params.total_mass = m;
        params.spring_constant = k0;
        let eq = equilibrium_shape(&params).unwrap();
        for i in 1..n - 1 {
            prop_assert!(tensile_acceleration(&eq, i, &params).unwrap().norm() < 1e-9);
        }
        let mid = (n - 1) / 2;
        prop_assert!((5.0 - eq.positions[mid].z - parabola_sag(n, m, k0, 9.8)).abs() < 1e-9);
    }
}
