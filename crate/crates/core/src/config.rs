//! Experiment configuration (TOML). Unknown keys are rejected, and
//! [`ExperimentConfig::resolved`] materializes every default so the written
//! `resolved_config` reproduces the run when fed back in.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::algorithm::{Algorithm, ProjectionMode};
use crate::attacks::{AttackKind, DEFAULT_UAP_BATCH};
use crate::data::PartitionMode;
use crate::error::{Error, Result};
use crate::objectives::YConstraint;
use crate::topology::TopologySpec;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(default)]
    pub partition: PartitionConfig,
    pub topology: TopologyConfig,
    pub objective: ObjectiveConfig,
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackSection>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_path: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_override: Option<usize>,
    /// Keep only the first `max_samples` training samples.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub mode: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub shards_per_client: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub n: usize,
    pub graph: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveConfig {
    pub kind: String,
    pub y_constraint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub heterogeneity: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instance_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub algo: Option<String>,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_d: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_r: Option<f64>,
    pub auto_from_theorem: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ell: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_factor: Option<f64>,
    pub full_batch: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_x: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_y: Option<usize>,
    pub projection: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub every: Option<usize>,
    pub inner_tol: Option<f64>,
    pub inner_max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSection {
    pub kinds: Option<Vec<String>>,
    pub deltas: Option<Vec<f64>>,
    pub pgd_steps: Option<usize>,
    /// PGD step size; defaults to `2.5·delta/pgd_steps` per budget.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pgd_eta: Option<f64>,
    pub uap_steps: Option<usize>,
    pub uap_eta: Option<f64>,
    pub uap_batch: Option<usize>,
    pub seed: Option<u64>,
}

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_BATCH: usize = 64;

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            let key = unknown_field(&msg).unwrap_or_else(|| "<config>".to_string());
            Error::config(key, msg)
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.rebase_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative paths in a config file are relative to the file itself.
    fn rebase_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(ds) = &mut self.dataset {
            fix(&mut ds.path);
            if let Some(t) = &mut ds.test_path {
                fix(t);
            }
        }
        if let Some(out) = &mut self.output {
            fix(out);
        }
        if let Some(graph) = &self.topology.graph {
            if let Ok(TopologySpec::MatrixFile(mut p)) = graph.parse::<TopologySpec>() {
                fix(&mut p);
                self.topology.graph = Some(TopologySpec::MatrixFile(p).to_string());
            }
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    /// Checks every field that does not need data or the topology.
    pub fn validate(&self) -> Result<()> {
        self.objective_kind()?;
        self.y_constraint()?;
        self.topology_spec()?;
        self.partition_mode()?;
        self.algorithm()?;
        self.projection()?;
        if self.topology.n == 0 {
            return Err(Error::config("topology.n", "must be at least 1"));
        }
        let a = &self.algorithm;
        if a.k == 0 {
            return Err(Error::config("algorithm.K", "must be at least 1"));
        }
        for (key, v) in [
            ("algorithm.eta_c", a.eta_c),
            ("algorithm.eta_d", a.eta_d),
            ("algorithm.eta_s", a.eta_s),
            ("algorithm.eta_r", a.eta_r),
            ("algorithm.kappa", a.kappa),
            ("algorithm.ell", a.ell),
            ("algorithm.mu", a.mu),
            ("algorithm.safety_factor", a.safety_factor),
            ("objective.mu", self.objective.mu),
            ("metrics.inner_tol", self.metrics.inner_tol),
        ] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::config(key, format!("must be positive, got {v}")));
                }
            }
        }
        for (key, v) in [("algorithm.b_x", a.b_x), ("algorithm.b_y", a.b_y), ("metrics.every", self.metrics.every)] {
            if v == Some(0) {
                return Err(Error::config(key, "must be at least 1"));
            }
        }
        if !self.auto_from_theorem() {
            for (key, v) in [("algorithm.eta_c", a.eta_c), ("algorithm.eta_d", a.eta_d)] {
                if v.is_none() {
                    return Err(Error::config(key, "required unless auto_from_theorem = true"));
                }
            }
        }
        match self.objective_kind()? {
            ObjectiveKind::RobustLogReg => {
                if self.dataset.is_none() {
                    return Err(Error::config("dataset", "robust_logreg needs a dataset block"));
                }
                if self.y_constraint()? != YConstraint::Simplex {
                    return Err(Error::config("objective.y_constraint", "robust_logreg requires `simplex`"));
                }
                for (key, v) in [("objective.d", self.objective.d.is_some()), ("objective.q", self.objective.q.is_some())] {
                    if v {
                        return Err(Error::config(key, "only applies to saddle_quadratic"));
                    }
                }
            }
            ObjectiveKind::SaddleQuadratic => {
                if self.objective.d.is_none_or(|d| d == 0) {
                    return Err(Error::config("objective.d", "saddle_quadratic needs d ≥ 1"));
                }
                if self.objective.q.is_none_or(|q| q == 0) {
                    return Err(Error::config("objective.q", "saddle_quadratic needs q ≥ 1"));
                }
                if self.y_constraint()? == YConstraint::Simplex {
                    return Err(Error::config("objective.y_constraint", "saddle_quadratic supports `none` or `linf_ball(δ)`"));
                }
            }
        }
        if let Some(att) = &self.attack {
            for k in att.kinds.iter().flatten() {
                k.parse::<AttackKind>().map_err(|e| Error::config("attack.kinds", e.to_string()))?;
            }
            if att.deltas.iter().flatten().any(|d| !(*d >= 0.0)) {
                return Err(Error::config("attack.deltas", "budgets must be non-negative"));
            }
            for (key, v) in [("attack.pgd_steps", att.pgd_steps), ("attack.uap_batch", att.uap_batch)] {
                if v == Some(0) {
                    return Err(Error::config(key, "must be at least 1"));
                }
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn objective_kind(&self) -> Result<ObjectiveKind> {
        match self.objective.kind.as_str() {
            "robust_logreg" => Ok(ObjectiveKind::RobustLogReg),
            "saddle_quadratic" => Ok(ObjectiveKind::SaddleQuadratic),
            other => Err(Error::config("objective.kind", format!("unknown objective `{other}`"))),
        }
    }

    pub fn y_constraint(&self) -> Result<YConstraint> {
        let default = match self.objective_kind()? {
            ObjectiveKind::RobustLogReg => "simplex",
            ObjectiveKind::SaddleQuadratic => "none",
        };
        parse_y_constraint(self.objective.y_constraint.as_deref().unwrap_or(default))
            .map_err(|msg| Error::config("objective.y_constraint", msg))
    }

    pub fn topology_spec(&self) -> Result<TopologySpec> {
        self.topology
            .graph
            .as_deref()
            .unwrap_or("ring_lazy(pi=0.5)")
            .parse()
            .map_err(|e: Error| Error::config("topology.graph", e.to_string()))
    }

    pub fn partition_mode(&self) -> Result<PartitionMode> {
        match self.partition.mode.as_deref().unwrap_or("iid_shuffle") {
            "iid_shuffle" => {
                if self.partition.shards_per_client.is_some() {
                    return Err(Error::config("partition.shards_per_client", "only applies to label_skew"));
                }
                Ok(PartitionMode::IidShuffle)
            }
            "label_skew" => {
                let s = self.partition.shards_per_client.unwrap_or(1);
                if s == 0 {
                    return Err(Error::config("partition.shards_per_client", "must be at least 1"));
                }
                Ok(PartitionMode::LabelSkew { shards_per_client: s })
            }
            other => Err(Error::config("partition.mode", format!("unknown mode `{other}`"))),
        }
    }

    pub fn algorithm(&self) -> Result<Algorithm> {
        match self.algorithm.algo.as_deref().unwrap_or("dec_fedtrack") {
            "dec_fedtrack" => Ok(Algorithm::DecFedTrack),
            "no_gt_baseline" => Ok(Algorithm::NoGtBaseline),
            other => Err(Error::config("algorithm.algo", format!("unknown algorithm `{other}`"))),
        }
    }

    pub fn projection(&self) -> Result<ProjectionMode> {
        match self.algorithm.projection.as_deref().unwrap_or("per_step") {
            "per_step" => Ok(ProjectionMode::PerStep),
            "per_round" => Ok(ProjectionMode::PerRound),
            other => Err(Error::config("algorithm.projection", format!("unknown placement `{other}`"))),
        }
    }

    pub fn auto_from_theorem(&self) -> bool {
        self.algorithm.auto_from_theorem.unwrap_or(false)
    }

    /// Copy with every defaulted field written out. Step sizes derived in
    /// theorem mode are passed in by the caller, which knows `p` and `ℓ`.
    pub fn resolved(&self, derived_steps: Option<(f64, f64, f64, f64)>, derived_curvature: Option<(f64, f64, f64)>) -> Result<Self> {
        self.validate()?;
        let mut out = self.clone();
        out.seed = Some(self.seed());
        out.output = Some(self.output_dir());
        let mode = self.partition_mode()?;
        out.partition.mode = Some(match mode {
            PartitionMode::IidShuffle => "iid_shuffle".into(),
            PartitionMode::LabelSkew { .. } => "label_skew".into(),
        });
        if let PartitionMode::LabelSkew { shards_per_client } = mode {
            out.partition.shards_per_client = Some(shards_per_client);
        }
        out.partition.seed = Some(self.partition.seed.unwrap_or(0));
        out.topology.graph = Some(self.topology_spec()?.to_string());
        out.objective.y_constraint = Some(format_y_constraint(self.y_constraint()?));
        match self.objective_kind()? {
            ObjectiveKind::RobustLogReg => {
                out.objective.theta = Some(self.objective.theta.unwrap_or(crate::objectives::DEFAULT_THETA));
                out.objective.nu = Some(self.objective.nu.unwrap_or(crate::objectives::DEFAULT_NU));
            }
            ObjectiveKind::SaddleQuadratic => {
                out.objective.mu = Some(self.objective.mu.unwrap_or(1.0));
                out.objective.heterogeneity = Some(self.objective.heterogeneity.unwrap_or(0.0));
                out.objective.instance_seed = Some(self.objective.instance_seed.unwrap_or(0));
            }
        }
        let a = &mut out.algorithm;
        a.algo = Some(match self.algorithm()? {
            Algorithm::DecFedTrack => "dec_fedtrack".into(),
            Algorithm::NoGtBaseline => "no_gt_baseline".into(),
        });
        a.auto_from_theorem = Some(self.auto_from_theorem());
        a.full_batch = Some(self.algorithm.full_batch.unwrap_or(false));
        a.b_x = Some(self.algorithm.b_x.unwrap_or(DEFAULT_BATCH));
        a.b_y = Some(self.algorithm.b_y.unwrap_or(DEFAULT_BATCH));
        a.projection = Some(match self.projection()? {
            ProjectionMode::PerStep => "per_step".into(),
            ProjectionMode::PerRound => "per_round".into(),
        });
        if let Some((eta_c, eta_d, eta_s, eta_r)) = derived_steps {
            a.eta_c = Some(eta_c);
            a.eta_d = Some(eta_d);
            a.eta_s = Some(eta_s);
            a.eta_r = Some(eta_r);
        } else {
            a.eta_s = Some(self.algorithm.eta_s.unwrap_or(1.0));
            a.eta_r = Some(self.algorithm.eta_r.unwrap_or(1.0));
        }
        if let Some((kappa, ell, mu)) = derived_curvature {
            a.kappa = Some(kappa);
            a.ell = Some(ell);
            a.mu = Some(mu);
        }
        if self.auto_from_theorem() {
            a.safety_factor = Some(self.algorithm.safety_factor.unwrap_or(1.0));
        }
        let m = &mut out.metrics;
        m.every = Some(self.metrics.every.unwrap_or(1));
        m.inner_tol = Some(self.metrics.inner_tol.unwrap_or(1e-8));
        m.inner_max_iters = Some(self.metrics.inner_max_iters.unwrap_or(10_000));
        if let Some(att) = &mut out.attack {
            let r = self.attack_settings()?;
            att.kinds = Some(r.kinds.iter().map(ToString::to_string).collect());
            att.deltas = Some(r.deltas.clone());
            att.pgd_steps = Some(r.pgd_steps);
            att.uap_steps = Some(r.uap_steps);
            att.uap_eta = Some(r.uap_eta);
            att.uap_batch = Some(r.uap_batch);
            att.seed = Some(r.seed);
        }
        Ok(out)
    }

    pub fn attack_settings(&self) -> Result<AttackSettings> {
        let att = self.attack.clone().unwrap_or_default();
        let kinds = match &att.kinds {
            Some(k) => k
                .iter()
                .map(|s| s.parse::<AttackKind>().map_err(|e| Error::config("attack.kinds", e.to_string())))
                .collect::<Result<Vec<_>>>()?,
            None => vec![AttackKind::Fgsm, AttackKind::Pgd, AttackKind::Uap],
        };
        Ok(AttackSettings {
            kinds,
            deltas: att.deltas.unwrap_or_else(|| vec![0.0, 0.05, 0.1, 0.15]),
            pgd_steps: att.pgd_steps.unwrap_or(10),
            pgd_eta: att.pgd_eta,
            uap_steps: att.uap_steps.unwrap_or(100),
            uap_eta: att.uap_eta.unwrap_or(1.0),
            uap_batch: att.uap_batch.unwrap_or(DEFAULT_UAP_BATCH),
            seed: att.seed.unwrap_or(self.seed()),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjectiveKind {
    RobustLogReg,
    SaddleQuadratic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSettings {
    pub kinds: Vec<AttackKind>,
    pub deltas: Vec<f64>,
    pub pgd_steps: usize,
    pub pgd_eta: Option<f64>,
    pub uap_steps: usize,
    pub uap_eta: f64,
    pub uap_batch: usize,
    pub seed: u64,
}

pub fn parse_y_constraint(s: &str) -> std::result::Result<YConstraint, String> {
    let s = s.trim();
    match s {
        "none" => Ok(YConstraint::None),
        "simplex" => Ok(YConstraint::Simplex),
        _ => {
            let inner = s
                .strip_prefix("linf_ball(")
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("unknown constraint `{s}`"))?;
            let inner = inner.trim();
            let value = inner.strip_prefix("delta=").unwrap_or(inner).trim();
            let delta: f64 = value.parse().map_err(|_| format!("radius `{value}` is not a number"))?;
            if !(delta >= 0.0 && delta.is_finite()) {
                return Err(format!("radius must be non-negative, got {delta}"));
            }
            Ok(YConstraint::LinfBall(delta))
        }
    }
}

pub fn format_y_constraint(c: YConstraint) -> String {
    match c {
        YConstraint::None => "none".into(),
        YConstraint::Simplex => "simplex".into(),
        YConstraint::LinfBall(d) => format!("linf_ball({d})"),
    }
}

fn unknown_field(msg: &str) -> Option<String> {
    let rest = msg.split("unknown field `").nth(1)?;
    Some(rest.split('`').next()?.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[topology]
n = 4

[objective]
kind = "saddle_quadratic"
d = 3
q = 2

[algorithm]
K = 2
T = 5
eta_c = 0.01
eta_d = 0.05
"#;

    #[test]
    fn minimal_config_validates() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.topology_spec().unwrap(), TopologySpec::RingLazy { pi: 0.5 });
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("eta_c = 0.01", "etaC = 0.01");
        match ExperimentConfig::from_toml_str(&text) {
            Err(Error::Config { key, .. }) => assert_eq!(key, "etaC"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn missing_step_size_is_named() {
        let text = MINIMAL.replace("eta_c = 0.01\n", "");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        match cfg.validate() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "algorithm.eta_c"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolved_round_trips() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let resolved = cfg.resolved(None, None).unwrap();
        let text = resolved.to_toml_string();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, resolved);
        assert_eq!(back.resolved(None, None).unwrap(), resolved);
    }

    #[test]
    fn y_constraint_strings() {
        assert_eq!(parse_y_constraint("linf_ball(0.1)").unwrap(), YConstraint::LinfBall(0.1));
        assert_eq!(parse_y_constraint("linf_ball(delta=0.25)").unwrap(), YConstraint::LinfBall(0.25));
        assert!(parse_y_constraint("linf_ball(-1)").is_err());
        assert!(parse_y_constraint("l2").is_err());
        assert_eq!(format_y_constraint(YConstraint::LinfBall(0.5)), "linf_ball(0.5)");
    }

    #[test]
    fn logreg_requires_simplex_and_dataset() {
        let text = r#"
[topology]
n = 2
[objective]
kind = "robust_logreg"
[algorithm]
K = 1
T = 1
eta_c = 1.0
eta_d = 1.0
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert!(matches!(cfg.validate(), Err(Error::Config { key, .. }) if key == "dataset"));
    }
}
