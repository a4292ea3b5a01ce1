//! LIBSVM text format: `label index:value [index:value …]`, one sample per
//! line, 1-based strictly ascending indices. `#` starts a comment.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVec {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Self {
        debug_assert_eq!(indices.len(), values.len());
        SparseVec { indices, values }
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().map(|&i| i as usize).zip(self.values.iter().copied())
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.iter().map(|(i, v)| v * dense[i]).sum()
    }

    /// `out += alpha * self`
    pub fn axpy_into(&self, alpha: f64, out: &mut [f64]) {
        for (i, v) in self.iter() {
            out[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, d: usize) -> Vec<f64> {
        let mut out = vec![0.0; d];
        for (i, v) in self.iter() {
            out[i] = v;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub features: SparseVec,
    /// Always `-1.0` or `+1.0`.
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub d: usize,
    pub source: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Keeps the first `count` samples.
    pub fn truncated(mut self, count: usize) -> Self {
        self.samples.truncate(count);
        self
    }
}

pub fn parse_libsvm(path: &Path, d_override: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut ds = parse_libsvm_str(&text, d_override)?;
    ds.source = path.display().to_string();
    Ok(ds)
}

pub fn parse_libsvm_str(text: &str, d_override: Option<usize>) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut max_index = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let sample = parse_line(line).map_err(|msg| Error::Parse { line: lineno + 1, msg })?;
        if let Some(&last) = sample.features.indices.last() {
            max_index = max_index.max(last as usize + 1);
        }
        samples.push(sample);
    }
    let d = match d_override {
        Some(d) if d < max_index => {
            return Err(Error::invalid(format!(
                "d_override = {d} but the data uses feature index {max_index}"
            )))
        }
        Some(d) => d,
        None => max_index,
    };
    Ok(Dataset {
        samples,
        d,
        source: String::new(),
    })
}

fn parse_line(line: &str) -> std::result::Result<Sample, String> {
    let mut tokens = line.split_whitespace();
    let label_tok = tokens.next().ok_or("missing label")?;
    let label = parse_label(label_tok)?;

    let mut indices = Vec::new();
    let mut values = Vec::new();
    for tok in tokens {
        let (idx_str, val_str) = tok
            .split_once(':')
            .ok_or_else(|| format!("feature token `{tok}` is not `index:value`"))?;
        let idx: u32 = idx_str
            .parse()
            .map_err(|_| format!("non-numeric feature index `{idx_str}`"))?;
        if idx == 0 {
            return Err("feature indices are 1-based; found 0".into());
        }
        let value: f64 = val_str
            .parse()
            .map_err(|_| format!("non-numeric feature value `{val_str}`"))?;
        if !value.is_finite() {
            return Err(format!("non-finite feature value `{val_str}`"));
        }
        let zero_based = idx - 1;
        if let Some(&prev) = indices.last() {
            if zero_based <= prev {
                return Err(format!("feature index {idx} is not strictly ascending"));
            }
        }
        indices.push(zero_based);
        values.push(value);
    }
    Ok(Sample {
        features: SparseVec::new(indices, values),
        label,
    })
}

fn parse_label(tok: &str) -> std::result::Result<f64, String> {
    let v: f64 = tok.parse().map_err(|_| format!("non-numeric label `{tok}`"))?;
    if v == 1.0 {
        Ok(1.0)
    } else if v == -1.0 || v == 0.0 {
        Ok(-1.0)
    } else {
        Err(format!("label `{tok}` is not one of 0, 1, -1, +1"))
    }
}

/// Writes samples back in LIBSVM form; re-parsing yields identical samples.
pub fn to_libsvm_string(ds: &Dataset) -> String {
    let mut out = String::new();
    for s in &ds.samples {
        out.push_str(if s.label > 0.0 { "+1" } else { "-1" });
        for (i, v) in s.features.iter() {
            let _ = write!(out, " {}:{}", i + 1, v);
        }
        out.push('\n');
    }
    out
}
