//! Command-line harness: `train`, `attack` and `validate`.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use ndarray::Array1;

use crate::algorithm::{derive_step_sizes, local_step_bound, run_algorithm, Algorithm, Execution, HyperParams, StepSizePlan};
use crate::attacks::{evaluate_attack, AttackConfig, AttackKind, AttackReport};
use crate::config::{ExperimentConfig, ObjectiveKind};
use crate::data::{parse_libsvm, partition, BatchSampler, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{to_csv, MetricsOptions, MetricsRecorder, RoundMetrics};
use crate::objectives::{AnyObjective, LogRegInstance, Objective, QuadraticInstance};
use crate::topology::MixingMatrix;

pub const THREADS_ENV: &str = "DECTRACK_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dectrack", version, about = "Decentralized minimax training with gradient tracking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment and write metrics.csv, model.txt and resolved_config.
    Train {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a trained model under the configured attacks.
    Attack {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        config: PathBuf,
    },
    /// Check a config without running it and print the resolved form.
    Validate { config: PathBuf },
}

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError(pub Error);

impl CliError {
    /// 2 for numerical divergence, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self.0 {
            Error::NonFinite { .. } => 2,
            _ => 1,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError(Error::Io(e))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Everything a run needs, built and checked before any training compute.
pub struct Experiment {
    pub resolved: ExperimentConfig,
    pub objective: AnyObjective,
    pub mixing: MixingMatrix,
    pub algo: Algorithm,
    pub hp: HyperParams,
    pub sampler: BatchSampler,
    pub x0: Array1<f64>,
    pub y0: Array1<f64>,
    pub test: Option<Dataset>,
    pub metrics: MetricsOptions,
    pub warnings: Vec<String>,
}

pub fn load_train_data(cfg: &ExperimentConfig) -> Result<(Dataset, Option<Dataset>)> {
    let ds_cfg = cfg.dataset.as_ref().ok_or_else(|| Error::config("dataset", "missing dataset block"))?;
    let with_key = |key: &str, e: Error| Error::config(key, e.to_string());
    let mut train = parse_libsvm(&ds_cfg.path, ds_cfg.d_override).map_err(|e| with_key("dataset.path", e))?;
    if let Some(max) = ds_cfg.max_samples {
        train = train.truncated(max);
    }
    let test = match &ds_cfg.test_path {
        Some(p) => Some(parse_libsvm(p, Some(ds_cfg.d_override.unwrap_or(train.d).max(train.d))).map_err(|e| with_key("dataset.test_path", e))?),
        None => None,
    };
    // The test set may use fewer columns than training, never more.
    if let Some(t) = &test {
        if t.d > train.d {
            return Err(Error::config("dataset.test_path", format!("test set has {} features, training set {}", t.d, train.d)));
        }
    }
    let d = train.d;
    Ok((train, test.map(|mut t| {
        t.d = d;
        t
    })))
}

pub fn build_experiment(cfg: &ExperimentConfig, seed_override: Option<u64>) -> Result<Experiment> {
    let mut cfg = cfg.clone();
    if let Some(seed) = seed_override {
        cfg.seed = Some(seed);
    }
    cfg.validate()?;
    let n = cfg.topology.n;
    let mixing = cfg.topology_spec()?.build(n).map_err(|e| Error::config("topology.graph", e.to_string()))?;
    let seed = cfg.seed();
    let constraint = cfg.y_constraint()?;

    let (objective, test, curvature) = match cfg.objective_kind()? {
        ObjectiveKind::RobustLogReg => {
            let (train, test) = load_train_data(&cfg)?;
            let part = partition(&train, n, cfg.partition_mode()?, cfg.partition.seed.unwrap_or(0))
                .map_err(|e| Error::config("partition", e.to_string()))?;
            let theta = cfg.objective.theta.unwrap_or(crate::objectives::DEFAULT_THETA);
            let nu = cfg.objective.nu.unwrap_or(crate::objectives::DEFAULT_NU);
            let inst = LogRegInstance::new(&train, &part, theta, nu).map_err(|e| Error::config("objective", e.to_string()))?;
            (AnyObjective::RobustLogReg(inst), test, None)
        }
        ObjectiveKind::SaddleQuadratic => {
            let o = &cfg.objective;
            let inst = QuadraticInstance::random(
                o.d.unwrap_or(1),
                o.q.unwrap_or(1),
                n,
                o.mu.unwrap_or(1.0),
                o.heterogeneity.unwrap_or(0.0),
                o.instance_seed.unwrap_or(0),
            )
            .map_err(|e| Error::config("objective", e.to_string()))?
            .with_constraint(constraint);
            let ell = inst.smoothness();
            let mu = inst.mu;
            (AnyObjective::SaddleQuadratic(inst), None, Some((ell / mu, ell, mu)))
        }
    };

    let a = &cfg.algorithm;
    let curvature = match (a.kappa, a.ell, a.mu) {
        (Some(kappa), Some(ell), Some(mu)) => Some((kappa, ell, mu)),
        (kappa, ell, mu) => curvature.map(|(k0, l0, m0)| {
            let ell = ell.unwrap_or(l0);
            let mu = mu.unwrap_or(m0);
            (kappa.unwrap_or_else(|| if ell == l0 && mu == m0 { k0 } else { ell / mu }), ell, mu)
        }),
    };

    let mut warnings = Vec::new();
    let (eta_c, eta_d, eta_s, eta_r, derived) = if cfg.auto_from_theorem() {
        let (kappa, ell, mu) = curvature.ok_or_else(|| {
            Error::config("algorithm.ell", "theorem mode needs kappa, ell and mu for this objective")
        })?;
        let plan = StepSizePlan { kappa, ell, mu, p: mixing.p() };
        let s = derive_step_sizes(&plan, a.k, a.safety_factor.unwrap_or(1.0)).map_err(|e| Error::config("algorithm", e.to_string()))?;
        (s.eta_c, s.eta_d, s.eta_s, s.eta_r, Some((s.eta_c, s.eta_d, s.eta_s, s.eta_r)))
    } else {
        (
            a.eta_c.expect("validated"),
            a.eta_d.expect("validated"),
            a.eta_s.unwrap_or(1.0),
            a.eta_r.unwrap_or(1.0),
            None,
        )
    };
    if let Some((_, ell, _)) = curvature {
        let bound = local_step_bound(a.k, ell);
        for (name, v) in [("eta_c", eta_c), ("eta_d", eta_d)] {
            if v > bound {
                warnings.push(format!("{name} = {v} exceeds the local step bound 1/(8Kℓ) = {bound}"));
            }
        }
    }

    let resolved = cfg.resolved(derived, curvature)?;
    let ra = &resolved.algorithm;
    let hp = HyperParams {
        eta_c,
        eta_d,
        eta_s,
        eta_r,
        k: a.k,
        t: a.t,
        b_x: ra.b_x.expect("resolved"),
        b_y: ra.b_y.expect("resolved"),
        full_batch: ra.full_batch.expect("resolved"),
        projection: cfg.projection()?,
    };
    hp.validate().map_err(|e| Error::config("algorithm", e.to_string()))?;
    let rm = &resolved.metrics;
    let metrics = MetricsOptions {
        every: rm.every.expect("resolved"),
        inner_tol: rm.inner_tol.expect("resolved"),
        inner_max_iters: rm.inner_max_iters.expect("resolved"),
    };

    let x0 = Array1::zeros(objective.dim_x());
    let y0 = match cfg.objective_kind()? {
        ObjectiveKind::RobustLogReg => Array1::from_elem(objective.dim_y(), 1.0 / objective.dim_y() as f64),
        ObjectiveKind::SaddleQuadratic => Array1::zeros(objective.dim_y()),
    };
    Ok(Experiment {
        objective,
        mixing,
        algo: cfg.algorithm()?,
        sampler: BatchSampler::new(seed, hp.b_x, hp.b_y),
        hp,
        x0,
        y0,
        test,
        metrics,
        warnings,
        resolved,
    })
}

pub struct TrainOutput {
    pub rows: Vec<RoundMetrics>,
    pub model: Array1<f64>,
}

pub fn train_experiment(exp: &Experiment, exec: Execution) -> Result<TrainOutput> {
    let mut recorder = MetricsRecorder::new(&exp.objective, exp.test.as_ref(), exp.metrics, exp.hp.t);
    let state = run_algorithm(
        exp.algo,
        &exp.objective,
        &exp.mixing,
        &exp.hp,
        &exp.sampler,
        exp.x0.view(),
        exp.y0.view(),
        &mut recorder,
        exec,
    )?;
    Ok(TrainOutput {
        rows: recorder.rows,
        model: state.x_bar(),
    })
}

pub fn execution_from_env() -> Result<Execution> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(|threads| Execution { threads })
            .map_err(|_| Error::config(THREADS_ENV, format!("`{v}` is not a thread count"))),
        Err(_) => Ok(Execution::default()),
    }
}

pub fn format_model(x: &Array1<f64>) -> String {
    x.iter().map(|v| format!("{v}\n")).collect()
}

/// One real per line; blank lines are ignored.
pub fn parse_model_text(text: &str) -> Result<Array1<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            msg: format!("`{line}` is not a number"),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: i + 1,
                msg: "non-finite weight".into(),
            });
        }
        out.push(v);
    }
    if out.is_empty() {
        return Err(Error::Parse { line: 0, msg: "model file is empty".into() });
    }
    Ok(Array1::from(out))
}

pub fn load_model(path: &Path) -> Result<Array1<f64>> {
    parse_model_text(&std::fs::read_to_string(path)?)
}

/// Output lines for the `train` subcommand.
pub fn cmd_train(config: &Path, seed: Option<u64>) -> std::result::Result<Vec<String>, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let exp = build_experiment(&cfg, seed)?;
    let exec = execution_from_env()?;
    let out_dir = exp.resolved.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    std::fs::write(out_dir.join("resolved_config"), exp.resolved.to_toml_string())?;
    let mut lines: Vec<String> = exp.warnings.iter().map(|w| format!("warning: {w}")).collect();
    let result = train_experiment(&exp, exec)?;
    std::fs::write(out_dir.join("metrics.csv"), to_csv(&result.rows))?;
    std::fs::write(out_dir.join("model.txt"), format_model(&result.model))?;
    let unconverged = result.rows.iter().filter(|r| !r.inner_converged).count();
    if unconverged > 0 {
        lines.push(format!(
            "warning: inner maximization hit metrics.inner_max_iters on {unconverged} of {} rows",
            result.rows.len()
        ));
    }
    if let Some(last) = result.rows.last() {
        lines.push(format!(
            "round {} phi {} grad_phi_sq {} xi_x {}",
            last.round, last.phi, last.grad_phi_sq, last.xi_x
        ));
    }
    lines.push(format!("wrote {}", out_dir.display()));
    Ok(lines)
}

pub fn run_attacks(model: &Array1<f64>, data: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<AttackReport>> {
    let s = cfg.attack_settings()?;
    let mut reports = Vec::new();
    for &kind in &s.kinds {
        for &delta in &s.deltas {
            let (steps, eta, batch) = match kind {
                AttackKind::Fgsm => (1, delta, s.uap_batch),
                AttackKind::Pgd => (s.pgd_steps, s.pgd_eta.unwrap_or(2.5 * delta / s.pgd_steps as f64), s.uap_batch),
                AttackKind::Uap => (s.uap_steps, s.uap_eta, s.uap_batch),
            };
            let ac = AttackConfig { kind, delta, steps, eta, batch, seed: s.seed };
            reports.push(evaluate_attack(model.view(), data, &ac).map_err(|e| Error::config("attack", e.to_string()))?);
        }
    }
    Ok(reports)
}

pub fn attacks_csv(reports: &[AttackReport]) -> String {
    let mut s = String::from(AttackReport::CSV_HEADER);
    s.push('\n');
    for r in reports {
        s.push_str(&r.csv_row());
        s.push('\n');
    }
    s
}

pub fn cmd_attack(model_path: &Path, config: &Path) -> std::result::Result<Vec<String>, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    cfg.validate()?;
    let model = load_model(model_path)?;
    let ds_cfg = cfg.dataset.as_ref().ok_or_else(|| Error::config("dataset", "attacks need a dataset"))?;
    let path = ds_cfg.test_path.as_ref().unwrap_or(&ds_cfg.path);
    let data = parse_libsvm(path, Some(model.len())).map_err(|e| Error::config("dataset", e.to_string()))?;
    let reports = run_attacks(&model, &data, &cfg)?;
    let out_dir = cfg.output_dir();
    std::fs::create_dir_all(&out_dir)?;
    let csv = attacks_csv(&reports);
    std::fs::write(out_dir.join("attacks.csv"), &csv)?;
    Ok(csv.lines().map(str::to_string).collect())
}

pub fn cmd_validate(config: &Path) -> std::result::Result<Vec<String>, CliError> {
    let cfg = ExperimentConfig::load(config)?;
    let exp = build_experiment(&cfg, None)?;
    let mut lines: Vec<String> = exp.warnings.iter().map(|w| format!("warning: {w}")).collect();
    lines.extend(exp.resolved.to_toml_string().lines().map(str::to_string));
    Ok(lines)
}

/// Runs a parsed command; returns the process exit code.
pub fn dispatch(cli: Cli) -> i32 {
    let result = match &cli.command {
        Command::Train { config, seed } => cmd_train(config, *seed),
        Command::Attack { model, config } => cmd_attack(model, config),
        Command::Validate { config } => cmd_validate(config),
    };
    match result {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_text_round_trip() {
        let x = Array1::from(vec![0.1, -2.5e-9, 3.0]);
        assert_eq!(parse_model_text(&format_model(&x)).unwrap(), x);
    }

    #[test]
    fn model_parse_errors_carry_line() {
        assert!(matches!(parse_model_text("1.0\nabc\n"), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_model_text("inf\n"), Err(Error::Parse { line: 1, .. })));
        assert!(parse_model_text("\n\n").is_err());
    }

    #[test]
    fn divergence_maps_to_exit_two() {
        assert_eq!(CliError(Error::NonFinite { node: 0, round: 1, step: 0 }).exit_code(), 2);
        assert_eq!(CliError(Error::config("k", "m")).exit_code(), 1);
    }
}
