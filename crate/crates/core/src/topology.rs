//! Communication graphs and their doubly-stochastic mixing matrices.
//!
//! Node variables are stored row-wise (`n × dim`); one gossip step maps the
//! stacked rows `R` to `Wᵀ R`, which is the row view of the column update
//! `X ↦ XW`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
const POWER_TOL: f64 = 1e-10;
const POWER_MAX_ITERS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    n: usize,
    w: Array2<f64>,
    p_est: f64,
}

impl MixingMatrix {
    /// Validates `w` and measures its contraction factor.
    pub fn from_matrix(w: Array2<f64>) -> Result<Self> {
        let (rows, cols) = w.dim();
        if rows == 0 || rows != cols {
            return Err(Error::InvalidMixing(format!(
                "matrix must be square and nonempty, got {rows}×{cols}"
            )));
        }
        check_doubly_stochastic(w.view())?;
        let p_est = estimate_contraction_raw(w.view())?;
        Ok(MixingMatrix { n: rows, w, p_est })
    }

    /// `(1 − π)·I + π·A_ring` where each node averages its two ring neighbours.
    pub fn ring_lazy(n: usize, pi: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("ring needs at least one node"));
        }
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Error::invalid(format!("lazy-walk pi must lie in (0,1), got {pi}")));
        }
        if n <= 2 {
            return Self::complete(n);
        }
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            w[[i, i]] = 1.0 - pi;
            w[[i, (i + 1) % n]] += pi / 2.0;
            w[[i, (i + n - 1) % n]] += pi / 2.0;
        }
        Self::from_matrix(w)
    }

    pub fn complete(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("complete graph needs at least one node"));
        }
        let w = Array2::from_elem((n, n), 1.0 / n as f64);
        Self::from_matrix(w)
    }

    pub fn identity(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("identity needs at least one node"));
        }
        Self::from_matrix(Array2::eye(n))
    }

    /// Parses a whitespace-separated `n × n` text matrix. Blank lines and
    /// lines starting with `#` are skipped.
    pub fn parse_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|_| Error::Parse {
                        line: lineno + 1,
                        msg: format!("non-numeric entry `{tok}`"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: lineno + 1,
                        msg: format!("expected {} entries, found {}", first.len(), row.len()),
                    });
                }
            }
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 {
            return Err(Error::InvalidMixing("empty matrix file".into()));
        }
        if rows[0].len() != n {
            return Err(Error::InvalidMixing(format!(
                "matrix must be square, got {n}×{}",
                rows[0].len()
            )));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let w = Array2::from_shape_vec((n, n), flat).expect("shape checked above");
        Self::from_matrix(w)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_text(&text)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.w.view()
    }

    /// Estimated contraction factor `p`.
    pub fn p(&self) -> f64 {
        self.p_est
    }

    pub fn is_symmetric(&self) -> bool {
        self.w == self.w.t()
    }

    /// One gossip step on row-stacked node variables (`n × dim`).
    pub fn mix(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        if rows.nrows() != self.n {
            return Err(Error::DimensionMismatch {
                what: "node rows",
                expected: self.n,
                got: rows.nrows(),
            });
        }
        Ok(self.w.t().dot(&rows))
    }

    /// `‖XW − X̄‖_F² / ‖X − X̄‖_F²` for a `d × n` matrix `X`; `0/0` reports 0.
    pub fn contraction_ratio(&self, x: ArrayView2<f64>) -> Result<f64> {
        if x.ncols() != self.n {
            return Err(Error::DimensionMismatch {
                what: "columns of X",
                expected: self.n,
                got: x.ncols(),
            });
        }
        let mean = x.mean_axis(Axis(1)).expect("n >= 1");
        let xw = x.dot(&self.w);
        let num = deviation_sq(xw.view(), &mean);
        let den = deviation_sq(x, &mean);
        Ok(if den == 0.0 { 0.0 } else { num / den })
    }
}

fn deviation_sq(x: ArrayView2<f64>, mean: &Array1<f64>) -> f64 {
    x.columns()
        .into_iter()
        .map(|col| {
            col.iter()
                .zip(mean.iter())
                .map(|(a, m)| (a - m) * (a - m))
                .sum::<f64>()
        })
        .sum()
}

fn check_doubly_stochastic(w: ArrayView2<f64>) -> Result<()> {
    if let Some(bad) = w.iter().find(|v| !v.is_finite() || **v < 0.0) {
        return Err(Error::InvalidMixing(format!("entry {bad} is negative or non-finite")));
    }
    for (i, row) in w.rows().into_iter().enumerate() {
        let s: f64 = row.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMixing(format!("row {i} sums to {s}")));
        }
    }
    for (j, col) in w.columns().into_iter().enumerate() {
        let s: f64 = col.sum();
        if (s - 1.0).abs() > STOCHASTIC_TOL {
            return Err(Error::InvalidMixing(format!("column {j} sums to {s}")));
        }
    }
    Ok(())
}

/// Tightest `p` with `‖XW − X̄‖² ≤ (1 − p)‖X − X̄‖²` for all `X`.
pub fn estimate_contraction(w: &MixingMatrix) -> Result<f64> {
    estimate_contraction_raw(w.weights())
}

/// `1 − s²` where `s` is the largest singular value of `W(I − J)`, found by
/// power iteration on `(W(I−J))ᵀ W(I−J)`.
fn estimate_contraction_raw(w: ArrayView2<f64>) -> Result<f64> {
    let n = w.nrows();
    let row_means = w.mean_axis(Axis(1)).expect("n >= 1");
    // B = W(I − J) = W − (W1/n)1ᵀ
    let mut b = w.to_owned();
    for (mut row, m) in b.rows_mut().into_iter().zip(row_means.iter()) {
        row.mapv_inplace(|v| v - m);
    }
    let m = b.t().dot(&b);

    // Deterministic start, orthogonal to 1 (the null direction of B).
    let mut v: Array1<f64> = (0..n).map(|k| ((k as f64 + 1.0) * 0.7548776662).sin() + 0.1).collect();
    let mean = v.mean().unwrap_or(0.0);
    v.mapv_inplace(|a| a - mean);
    let mut norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        // n == 1: every vector is a multiple of 1.
        return Ok(1.0);
    }
    v /= norm;

    for _ in 0..POWER_MAX_ITERS {
        let mv = m.dot(&v);
        let rho = v.dot(&mv);
        norm = mv.dot(&mv).sqrt();
        if norm <= f64::MIN_POSITIVE {
            return Ok(1.0);
        }
        let residual = (&mv - &(rho * &v)).dot(&(&mv - &(rho * &v))).sqrt();
        if residual <= POWER_TOL * rho.abs() {
            return Ok((1.0 - rho).clamp(0.0, 1.0));
        }
        v = mv / norm;
    }
    Err(Error::NotConverged {
        what: "contraction power iteration",
        iters: POWER_MAX_ITERS,
    })
}

/// Topology selector as written in experiment configs.
#[derive(Debug, Clone, PartialEq)]
pub enum TopologySpec {
    RingLazy { pi: f64 },
    Complete,
    Identity,
    MatrixFile(PathBuf),
}

pub const DEFAULT_LAZY_PI: f64 = 0.5;

impl TopologySpec {
    pub fn build(&self, n: usize) -> Result<MixingMatrix> {
        match self {
            TopologySpec::RingLazy { pi } => MixingMatrix::ring_lazy(n, *pi),
            TopologySpec::Complete => MixingMatrix::complete(n),
            TopologySpec::Identity => MixingMatrix::identity(n),
            TopologySpec::MatrixFile(path) => {
                let w = MixingMatrix::load(path)?;
                if w.n() != n {
                    return Err(Error::InvalidMixing(format!(
                        "{} holds a {}-node matrix, config asks for {n}",
                        path.display(),
                        w.n()
                    )));
                }
                Ok(w)
            }
        }
    }
}

impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let rest = &s[open + 1..];
                let inner = rest
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("unclosed `(` in topology `{s}`")))?;
                (s[..open].trim(), Some(inner.trim()))
            }
            None => (s, None),
        };
        match (name, args) {
            ("ring_lazy", None) => Ok(TopologySpec::RingLazy { pi: DEFAULT_LAZY_PI }),
            ("ring_lazy", Some(args)) => {
                let value = match args.split_once('=') {
                    Some((key, value)) if key.trim() == "pi" => value.trim(),
                    None if !args.is_empty() => args,
                    _ => return Err(Error::invalid(format!("ring_lazy expects `pi=…`, got `{args}`"))),
                };
                let pi: f64 = value
                    .parse()
                    .map_err(|_| Error::invalid(format!("ring_lazy pi `{value}` is not a number")))?;
                if !(pi > 0.0 && pi < 1.0) {
                    return Err(Error::invalid(format!("ring_lazy pi must lie in (0,1), got {pi}")));
                }
                Ok(TopologySpec::RingLazy { pi })
            }
            ("complete", None) => Ok(TopologySpec::Complete),
            ("identity", None) => Ok(TopologySpec::Identity),
            ("matrix_file", Some(path)) if !path.is_empty() => {
                Ok(TopologySpec::MatrixFile(PathBuf::from(path)))
            }
            _ => Err(Error::invalid(format!("unknown topology `{s}`"))),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TopologySpec::RingLazy { pi } => write!(f, "ring_lazy(pi={pi})"),
            TopologySpec::Complete => f.write_str("complete"),
            TopologySpec::Identity => f.write_str("identity"),
            TopologySpec::MatrixFile(p) => write!(f, "matrix_file({})", p.display()),
        }
    }
}
