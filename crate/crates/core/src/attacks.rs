//! Evasion attacks against the linear model `score = aᵀx`, whose per-sample
//! loss is `log(1 + exp(b·aᵀx))` and whose prediction is `sign(−aᵀx)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{mix_key, sigmoid, sign, softplus};

pub const DEFAULT_UAP_BATCH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttackKind {
    Fgsm,
    Pgd,
    Uap,
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fgsm" => Ok(AttackKind::Fgsm),
            "pgd" => Ok(AttackKind::Pgd),
            "uap" => Ok(AttackKind::Uap),
            other => Err(Error::invalid(format!("unknown attack `{other}`"))),
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttackKind::Fgsm => "fgsm",
            AttackKind::Pgd => "pgd",
            AttackKind::Uap => "uap",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackConfig {
    pub kind: AttackKind,
    /// L∞ budget.
    pub delta: f64,
    pub steps: usize,
    pub eta: f64,
    pub batch: usize,
    pub seed: u64,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) {
            return Err(Error::invalid(format!("attack budget must be non-negative, got {}", self.delta)));
        }
        if self.kind != AttackKind::Fgsm && self.steps == 0 {
            return Err(Error::invalid("iterative attacks need at least one step"));
        }
        if self.kind == AttackKind::Uap && self.batch == 0 {
            return Err(Error::invalid("UAP batch size must be at least 1"));
        }
        Ok(())
    }
}

fn check_dims(x: ArrayView1<f64>, a: ArrayView1<f64>) -> Result<()> {
    if x.len() != a.len() {
        return Err(Error::DimensionMismatch {
            what: "attack input",
            expected: x.len(),
            got: a.len(),
        });
    }
    Ok(())
}

pub fn sample_loss(x: ArrayView1<f64>, a: ArrayView1<f64>, b: f64) -> f64 {
    softplus(b * a.dot(&x))
}

/// `∇_a log(1 + exp(b·aᵀx)) = b·x·σ(b·aᵀx)`.
pub fn input_gradient(x: ArrayView1<f64>, a: ArrayView1<f64>, b: f64) -> Result<Array1<f64>> {
    check_dims(x, a)?;
    let s = b * sigmoid(b * a.dot(&x));
    Ok(x.mapv(|v| s * v))
}

pub fn fgsm(x: ArrayView1<f64>, a: ArrayView1<f64>, b: f64, delta: f64) -> Result<Array1<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("attack budget must be non-negative, got {delta}")));
    }
    let g = input_gradient(x, a, b)?;
    Ok(&a + &g.mapv(|v| delta * sign(v)))
}

/// Iterated signed-gradient steps, each clamped to the L∞ ball around `a`.
pub fn pgd(x: ArrayView1<f64>, a: ArrayView1<f64>, b: f64, delta: f64, steps: usize, eta: f64) -> Result<Array1<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("attack budget must be non-negative, got {delta}")));
    }
    if steps == 0 {
        return Err(Error::invalid("PGD needs at least one step"));
    }
    check_dims(x, a)?;
    let lo = a.mapv(|v| v - delta);
    let hi = a.mapv(|v| v + delta);
    let mut cur = a.to_owned();
    for _ in 0..steps {
        let g = input_gradient(x, cur.view(), b)?;
        for k in 0..cur.len() {
            cur[k] = (cur[k] + eta * sign(g[k])).clamp(lo[k], hi[k]);
        }
    }
    Ok(cur)
}

/// Universal perturbation by stochastic projected gradient ascent on the
/// mean loss, projected onto the L∞ ball of radius `delta`.
#[allow(clippy::too_many_arguments)]
pub fn uap_spgd(
    x: ArrayView1<f64>,
    inputs: &[Array1<f64>],
    labels: &[f64],
    delta: f64,
    steps: usize,
    eta: f64,
    batch: usize,
    seed: u64,
) -> Result<Array1<f64>> {
    if inputs.is_empty() {
        return Err(Error::invalid("UAP needs a nonempty dataset"));
    }
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("attack budget must be non-negative, got {delta}")));
    }
    if batch == 0 {
        return Err(Error::invalid("UAP batch size must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[seed, 0x0A_0A_0A]));
    let mut y = Array1::zeros(x.len());
    for _ in 0..steps {
        let mut coef = 0.0;
        for _ in 0..batch {
            let j = rng.random_range(0..inputs.len());
            check_dims(x, inputs[j].view())?;
            let b = labels[j];
            coef += b * sigmoid(b * (inputs[j].dot(&x) + y.dot(&x)));
        }
        coef /= batch as f64;
        for k in 0..y.len() {
            let v: f64 = y[k] + eta * coef * x[k];
            y[k] = v.clamp(-delta, delta);
        }
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackReport {
    pub kind: AttackKind,
    pub delta: f64,
    pub clean_acc: f64,
    pub adv_acc: f64,
    pub mean_adv_loss: f64,
}

impl AttackReport {
    pub const CSV_HEADER: &'static str = "attack,delta,clean_acc,adv_acc,mean_adv_loss";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{},{}", self.kind, self.delta, self.clean_acc, self.adv_acc, self.mean_adv_loss)
    }
}

fn correct(x: ArrayView1<f64>, a: ArrayView1<f64>, b: f64) -> bool {
    let score = a.dot(&x);
    (score < 0.0 && b > 0.0) || (score > 0.0 && b < 0.0)
}

/// Attacks every sample of `data` and reports accuracy and mean loss on
/// the perturbed inputs.
pub fn evaluate_attack(x: ArrayView1<f64>, data: &Dataset, cfg: &AttackConfig) -> Result<AttackReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("attack dataset is empty"));
    }
    let d = x.len();
    if data.samples.iter().any(|s| s.features.indices.last().is_some_and(|&i| i as usize >= d)) {
        return Err(Error::invalid(format!("attack dataset has features beyond model dimension {d}")));
    }
    let inputs: Vec<Array1<f64>> = data.samples.iter().map(|s| Array1::from(s.features.to_dense(d))).collect();
    let labels: Vec<f64> = data.samples.iter().map(|s| s.label).collect();

    let universal = match cfg.kind {
        AttackKind::Uap => Some(uap_spgd(x, &inputs, &labels, cfg.delta, cfg.steps, cfg.eta, cfg.batch, cfg.seed)?),
        _ => None,
    };
    let mut clean = 0usize;
    let mut adv = 0usize;
    let mut loss = 0.0;
    for (a, &b) in inputs.iter().zip(&labels) {
        clean += usize::from(correct(x, a.view(), b));
        let a_adv = match cfg.kind {
            AttackKind::Fgsm => fgsm(x, a.view(), b, cfg.delta)?,
            AttackKind::Pgd => pgd(x, a.view(), b, cfg.delta, cfg.steps, cfg.eta)?,
            AttackKind::Uap => a + universal.as_ref().expect("computed above"),
        };
        adv += usize::from(correct(x, a_adv.view(), b));
        loss += sample_loss(x, a_adv.view(), b);
    }
    let total = inputs.len() as f64;
    Ok(AttackReport {
        kind: cfg.kind,
        delta: cfg.delta,
        clean_acc: clean as f64 / total,
        adv_acc: adv as f64 / total,
        mean_adv_loss: loss / total,
    })
}
