//! Subcommand implementations. Each writes its outputs and a
//! [`RunManifest`] into the output directory.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use wirebeam_core::deepq::checkpoint::{AgentKind, Checkpoint};
use wirebeam_core::deepq::QNetwork;
use wirebeam_core::env::{ProtagonistAction, OBS_DIM};
use wirebeam_core::radio::{array_factor, element_pattern, tx_gain};
use wirebeam_core::rarl::{
    pretrain_proxy, run_policy, train_with_observer, EpisodeRecord, Policy, TrainConfig, Variant,
};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::manifest::RunManifest;

pub const PROTAGONIST_CKPT: &str = "protagonist.ckpt";
pub const ADVERSARY_CKPT: &str = "adversary.ckpt";
pub const PROXY_CKPT: &str = "proxy.ckpt";
pub const CURVE_CSV: &str = "curve.csv";
pub const EVAL_CSV: &str = "eval.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const PATTERN_CSV: &str = "pattern.csv";
pub const TRAJECTORY_CSV: &str = "trajectory.csv";

fn prepare_dir(out: &Path) -> Result<(), CliError> {
    fs::create_dir_all(out).map_err(|e| CliError::io(out, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    let file = fs::File::create(path).map_err(|e| CliError::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Loads the protagonist network stored in a checkpoint.
pub fn load_protagonist(path: &Path) -> Result<QNetwork, CliError> {
    let ckpt = Checkpoint::load(path).map_err(|e| CliError::checkpoint(path, e))?;
    ckpt.expect_shape(OBS_DIM, ProtagonistAction::COUNT)
        .map_err(|e| CliError::checkpoint(path, e))?;
    Ok(ckpt.net)
}

fn save_checkpoint(
    agent: &wirebeam_core::deepq::DqnAgent,
    kind: AgentKind,
    cfg: &RunConfig,
    out: &Path,
    name: &str,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let path = out.join(name);
    Checkpoint::from_agent(agent, kind, cfg.hash())
        .save(&path)
        .map_err(|e| CliError::checkpoint(&path, e))?;
    manifest.record(out, name)
}

fn print_progress(total: usize, r: &EpisodeRecord) {
    let adv = r
        .adversary_check_avg_power
        .map(|p| format!("  adversary check {p:.3} dBm"))
        .unwrap_or_default();
    eprintln!(
        "episode {}/{}  protagonist {:.3} dBm{}  ({:.2} s)",
        r.episode, total, r.protagonist_avg_power, adv, r.wall_clock_s
    );
}

/// Trains the configured variant. For the adversarial variant the proxy
/// protagonist comes from `proxy_checkpoint` or is trained first with the
/// same configuration and saved as `proxy.ckpt`.
pub fn cmd_train(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    prepare_dir(out)?;
    let train_cfg = cfg.train_config()?;
    let mut manifest = RunManifest::begin("train", cfg);
    manifest.note(format!("variant {}", train_cfg.variant));

    let proxy = match (train_cfg.variant, &train_cfg.proxy_checkpoint) {
        (Variant::Rarl, Some(path)) => {
            manifest.note(format!("proxy loaded from {}", path.display()));
            Some(load_protagonist(path)?)
        }
        (Variant::Rarl, None) => {
            eprintln!("training proxy protagonist without adversary");
            let outcome = pretrain_proxy(&train_cfg)?;
            save_checkpoint(&outcome.protagonist, AgentKind::Protagonist, cfg, out, PROXY_CKPT, &mut manifest)?;
            Some(outcome.protagonist.net)
        }
        _ => None,
    };

    let total = train_cfg.episodes;
    let outcome = train_with_observer(&train_cfg, proxy.as_ref(), |r| print_progress(total, r))?;
    save_checkpoint(&outcome.protagonist, AgentKind::Protagonist, cfg, out, PROTAGONIST_CKPT, &mut manifest)?;
    if let Some(adv) = &outcome.adversary {
        save_checkpoint(adv, AgentKind::Adversary, cfg, out, ADVERSARY_CKPT, &mut manifest)?;
    }

    // Wall-clock time stays out of the curve so reruns are byte-identical.
    let mut w = csv_writer(&out.join(CURVE_CSV))?;
    w.write_record([
        "episode",
        "protagonist_avg_power_dbm",
        "adversary_check_avg_power_dbm",
        "loss_protagonist",
        "loss_adversary",
    ])?;
    for r in &outcome.records {
        w.write_record([
            r.episode.to_string(),
            r.protagonist_avg_power.to_string(),
            opt(r.adversary_check_avg_power),
            opt(r.loss_protagonist),
            opt(r.loss_adversary),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&out.join(CURVE_CSV), e))?;
    manifest.record(out, CURVE_CSV)?;
    manifest.finish(out)
}

/// Seed of evaluation run `episode` for seed replica `replica`.
pub fn evaluation_seed(base: u64, replica: usize, episode: usize) -> u64 {
    let cfg = TrainConfig {
        seed: base.wrapping_add(replica as u64),
        ..TrainConfig::default()
    };
    cfg.eval_seed(episode)
}

/// Mean power of `policy` over `seeds × episodes` evaluation runs, adversary
/// disabled. Runs are returned in replica-major order.
pub fn evaluate_policy(
    policy: &Policy,
    train: &TrainConfig,
    seeds: usize,
    episodes: usize,
) -> Result<Vec<f64>, CliError> {
    let mut runs = Vec::with_capacity(seeds * episodes);
    for s in 0..seeds {
        for e in 0..episodes {
            let seed = evaluation_seed(train.seed, s, e);
            runs.push(run_policy(policy, &train.env, train.test_steps, seed, false)?.avg_power_dbm);
        }
    }
    Ok(runs)
}

pub fn mean_and_stddev(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Scores a checkpoint and the stay and upper-limit baselines on the same
/// evaluation seeds.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, out: &Path) -> Result<RunManifest, CliError> {
    prepare_dir(out)?;
    let train_cfg = cfg.train_config()?;
    let ckpt = Checkpoint::load(checkpoint).map_err(|e| CliError::checkpoint(checkpoint, e))?;
    ckpt.expect_shape(OBS_DIM, ProtagonistAction::COUNT)
        .map_err(|e| CliError::checkpoint(checkpoint, e))?;
    let mut manifest = RunManifest::begin("eval", cfg);
    manifest.note(format!("checkpoint {}", checkpoint.display()));
    if ckpt.config_hash != cfg.hash() {
        manifest.note("checkpoint was trained under a different configuration");
    }

    let policies = [Policy::GreedyDqn(ckpt.net), Policy::Stay, Policy::UpperLimit];
    let (seeds, episodes) = (cfg.sweep.seeds_per_cell, cfg.sweep.episodes_per_cell);
    let path = out.join(EVAL_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["policy", "replica", "episode", "eval_seed", "avg_power_dbm"])?;
    for policy in &policies {
        let runs = evaluate_policy(policy, &train_cfg, seeds, episodes)?;
        for (i, p) in runs.iter().enumerate() {
            let (s, e) = (i / episodes, i % episodes);
            w.write_record([
                policy.name().to_string(),
                s.to_string(),
                e.to_string(),
                evaluation_seed(train_cfg.seed, s, e).to_string(),
                p.to_string(),
            ])?;
        }
        let (mean, sd) = mean_and_stddev(&runs);
        eprintln!("{:<12} {mean:.3} dBm (sd {sd:.3})", policy.name());
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    manifest.record(out, EVAL_CSV)?;
    manifest.finish(out)
}

fn sorted_unique(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// One row of the robustness heat map.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub mass_kg: f64,
    pub spring_n_per_m: f64,
    pub policy: String,
    pub result: Result<(f64, f64), String>,
}

/// Evaluates every (mass, spring, policy) cell. Rows are row-major over the
/// sorted, de-duplicated mass grid, spring grid and the policy list.
pub fn sweep_rows(cfg: &RunConfig, policies: &[(String, Policy)], workers: usize) -> Result<Vec<SweepRow>, CliError> {
    let train_cfg = cfg.train_config()?;
    let masses = sorted_unique(&cfg.sweep.mass_grid);
    let springs = sorted_unique(&cfg.sweep.spring_grid);
    let mut cells = Vec::new();
    for &m in &masses {
        for &k in &springs {
            for (label, policy) in policies {
                cells.push((m, k, label.clone(), policy));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?;
    let (seeds, episodes) = (cfg.sweep.seeds_per_cell, cfg.sweep.episodes_per_cell);
    Ok(pool.install(|| {
        cells
            .into_par_iter()
            .map(|(m, k, policy_label, policy)| {
                let mut cell = train_cfg.clone();
                cell.env.phys.total_mass = m;
                cell.env.phys.spring_constant = k;
                let result = evaluate_policy(policy, &cell, seeds, episodes)
                    .map(|runs| mean_and_stddev(&runs))
                    .map_err(|e| e.to_string());
                SweepRow {
                    mass_kg: m,
                    spring_n_per_m: k,
                    policy: policy_label,
                    result,
                }
            })
            .collect()
    }))
}

/// Heat-map sweep over the configured baselines plus one greedy policy per
/// checkpoint. Failed cells are written with `NaN` and reported through
/// [`CliError::PartialFailure`] once the sweep is complete.
pub fn cmd_sweep(cfg: &RunConfig, checkpoints: &[PathBuf], out: &Path, workers: usize) -> Result<RunManifest, CliError> {
    if workers == 0 {
        return Err(CliError::Usage("--workers must be at least 1".into()));
    }
    prepare_dir(out)?;
    let mut policies: Vec<(String, Policy)> = Vec::new();
    for path in checkpoints {
        policies.push((path.display().to_string(), Policy::GreedyDqn(load_protagonist(path)?)));
    }
    for b in &cfg.sweep.baselines {
        policies.push((b.to_string(), b.policy()));
    }
    if policies.is_empty() {
        return Err(CliError::Usage("sweep needs at least one checkpoint or baseline".into()));
    }
    let mut manifest = RunManifest::begin("sweep", cfg);
    manifest.note(format!("workers {workers}"));

    let rows = sweep_rows(cfg, &policies, workers)?;
    let path = out.join(SWEEP_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["mass_kg", "spring_n_per_m", "policy", "avg_power_dbm", "stddev"])?;
    let mut failed = 0;
    for row in &rows {
        let (mean, sd) = match &row.result {
            Ok(v) => *v,
            Err(msg) => {
                failed += 1;
                let note = format!("cell ({} kg, {} N/m, {}) failed: {msg}", row.mass_kg, row.spring_n_per_m, row.policy);
                eprintln!("{note}");
                manifest.note(note);
                (f64::NAN, f64::NAN)
            }
        };
        w.write_record([
            row.mass_kg.to_string(),
            row.spring_n_per_m.to_string(),
            row.policy.clone(),
            mean.to_string(),
            sd.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    manifest.record(out, SWEEP_CSV)?;
    let manifest = manifest.finish(out)?;
    if failed > 0 {
        return Err(CliError::PartialFailure {
            failed,
            total: rows.len(),
        });
    }
    Ok(manifest)
}

/// Azimuth cut of the transmit gain at the configured zenith with the beam
/// steered to (90°, 0°).
pub fn cmd_antenna_pattern(cfg: &RunConfig, out: &Path) -> Result<RunManifest, CliError> {
    let spec = &cfg.pattern;
    if spec.azimuth_max_deg < spec.azimuth_min_deg {
        return Err(CliError::Usage("azimuth range is empty".into()));
    }
    prepare_dir(out)?;
    let antenna = &cfg.train.env.antenna;
    let mut manifest = RunManifest::begin("antenna-pattern", cfg);
    let path = out.join(PATTERN_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record(["azimuth_deg", "af_db", "ae_db", "at_db"])?;
    for phi in spec.azimuths() {
        let t = spec.zenith_deg;
        w.write_record([
            phi.to_string(),
            array_factor(t, phi, 90.0, 0.0, antenna).to_string(),
            element_pattern(t, phi, antenna).to_string(),
            tx_gain(t, phi, 90.0, 0.0, antenna).to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    manifest.record(out, PATTERN_CSV)?;
    manifest.finish(out)
}

/// Parses a protagonist policy name; `greedy_dqn` needs a checkpoint.
pub fn parse_policy(name: &str, checkpoint: Option<&Path>) -> Result<Policy, CliError> {
    match name {
        "stay" => Ok(Policy::Stay),
        "upper_limit" => Ok(Policy::UpperLimit),
        "random_uniform" => Ok(Policy::RandomUniform),
        "greedy_dqn" => {
            let path = checkpoint.ok_or_else(|| CliError::Usage("greedy_dqn needs --checkpoint".into()))?;
            Ok(Policy::GreedyDqn(load_protagonist(path)?))
        }
        other => Err(CliError::Usage(format!(
            "unknown policy '{other}' (expected stay|upper_limit|random_uniform|greedy_dqn)"
        ))),
    }
}

/// Logs every tick of one policy rollout with the adversary disabled.
pub fn cmd_simulate(cfg: &RunConfig, policy: &Policy, steps: usize, out: &Path) -> Result<RunManifest, CliError> {
    prepare_dir(out)?;
    let mut manifest = RunManifest::begin("simulate", cfg);
    manifest.note(format!("policy {} for {steps} steps", policy.name()));
    let rollout = run_policy(policy, &cfg.train.env, steps, cfg.train.seed, true)?;
    let path = out.join(TRAJECTORY_CSV);
    let mut w = csv_writer(&path)?;
    w.write_record([
        "step", "t", "P_r_dbm", "r_p", "a_p", "a_a", "sbs_x", "sbs_y", "sbs_z", "theta_s", "phi_s",
    ])?;
    for row in &rollout.trajectory {
        w.write_record([
            row.step.to_string(),
            row.time.to_string(),
            row.power_dbm.to_string(),
            row.reward.to_string(),
            row.protagonist.name().to_string(),
            row.adversary.name().to_string(),
            row.sbs.x.to_string(),
            row.sbs.y.to_string(),
            row.sbs.z.to_string(),
            row.steer_zenith.to_string(),
            row.steer_azimuth.to_string(),
        ])?;
    }
    w.flush().map_err(|e| CliError::io(&path, e))?;
    manifest.record(out, TRAJECTORY_CSV)?;
    manifest.note(format!("mean power {} dBm", rollout.avg_power_dbm));
    manifest.finish(out)
}
