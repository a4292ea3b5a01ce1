//! Distributionally robust logistic regression.
//!
//! `f_i(x, y) = (1/m) Σ_j y_ij·l_ij(x) − V(y) + g(x)` with
//! `l_ij(x) = log(1 + exp(b_ij a_ijᵀx))`, `V(y) = ‖Ny − 1‖² / (2N²)` and
//! `g(x) = θ Σ_k νx_k² / (1 + νx_k²)`. The weights `y ∈ R^N` are indexed
//! globally: client `i` owns coordinates `i·m .. (i+1)·m`.

use ndarray::{Array1, ArrayView1};

use super::{check_point, Batch, Objective, YConstraint};
use crate::data::{Dataset, Partition, SparseVec};
use crate::error::{Error, Result};
use crate::linalg::{sigmoid, softplus};

pub const DEFAULT_THETA: f64 = 1e-5;
pub const DEFAULT_NU: f64 = 10.0;

#[derive(Debug, Clone)]
pub struct LogRegInstance {
    /// Kept samples in client-major order.
    features: Vec<SparseVec>,
    labels: Vec<f64>,
    d: usize,
    n: usize,
    m: usize,
    pub theta: f64,
    pub nu: f64,
}

impl LogRegInstance {
    pub fn new(ds: &Dataset, partition: &Partition, theta: f64, nu: f64) -> Result<Self> {
        let n = partition.n();
        let m = partition.m;
        if n == 0 || m == 0 {
            return Err(Error::invalid("robust logistic regression needs a nonempty partition"));
        }
        if ds.d == 0 {
            return Err(Error::invalid("robust logistic regression needs d ≥ 1"));
        }
        let mut features = Vec::with_capacity(n * m);
        let mut labels = Vec::with_capacity(n * m);
        for client in &partition.clients {
            if client.len() != m {
                return Err(Error::invalid("every client must own exactly m samples"));
            }
            for &s in client {
                let sample = ds
                    .samples
                    .get(s)
                    .ok_or_else(|| Error::invalid(format!("partition refers to missing sample {s}")))?;
                if sample.label != 1.0 && sample.label != -1.0 {
                    return Err(Error::invalid(format!("label {} is not ±1", sample.label)));
                }
                features.push(sample.features.clone());
                labels.push(sample.label);
            }
        }
        Ok(LogRegInstance {
            features,
            labels,
            d: ds.d,
            n,
            m,
            theta,
            nu,
        })
    }

    /// Total sample count `N = n·m`.
    pub fn total_samples(&self) -> usize {
        self.n * self.m
    }

    pub fn sample(&self, global: usize) -> (&SparseVec, f64) {
        (&self.features[global], self.labels[global])
    }

    /// `l_k(x)` for every kept sample.
    pub fn losses(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let xs = x.as_slice().map(<[f64]>::to_vec).unwrap_or_else(|| x.to_vec());
        self.features
            .iter()
            .zip(&self.labels)
            .map(|(a, &b)| softplus(b * a.dot(&xs)))
            .collect()
    }

    fn local_indices<'a>(&self, batch: Batch<'a>) -> Result<LocalBatch<'a>> {
        match batch {
            Batch::Full => Ok(LocalBatch::Full(self.m)),
            Batch::Samples(idx) => {
                if idx.is_empty() {
                    return Err(Error::invalid("empty mini-batch"));
                }
                if let Some(&bad) = idx.iter().find(|&&j| j >= self.m) {
                    return Err(Error::invalid(format!(
                        "batch index {bad} outside the client's {} samples",
                        self.m
                    )));
                }
                Ok(LocalBatch::Samples(idx))
            }
        }
    }
}

enum LocalBatch<'a> {
    Full(usize),
    Samples(&'a [usize]),
}

impl LocalBatch<'_> {
    fn len(&self) -> usize {
        match self {
            LocalBatch::Full(m) => *m,
            LocalBatch::Samples(s) => s.len(),
        }
    }

    fn for_each(&self, mut f: impl FnMut(usize)) {
        match self {
            LocalBatch::Full(m) => (0..*m).for_each(&mut f),
            LocalBatch::Samples(s) => s.iter().copied().for_each(&mut f),
        }
    }
}

/// `V(y) = ‖N·y − 1‖² / (2N²)` with `N = y.len()`.
pub fn sample_weight_penalty(y: ArrayView1<f64>) -> f64 {
    let big_n = y.len() as f64;
    y.iter().map(|&v| (big_n * v - 1.0).powi(2)).sum::<f64>() / (2.0 * big_n * big_n)
}

/// `∇V(y)_k = y_k − 1/N`.
pub fn grad_sample_weight_penalty(y: ArrayView1<f64>) -> Array1<f64> {
    let inv_n = 1.0 / y.len() as f64;
    y.mapv(|v| v - inv_n)
}

/// `g(x) = θ Σ_k νx_k² / (1 + νx_k²)`.
pub fn nonconvex_reg(x: ArrayView1<f64>, theta: f64, nu: f64) -> f64 {
    theta * x.iter().map(|&v| nu * v * v / (1.0 + nu * v * v)).sum::<f64>()
}

/// `∇g(x)_k = θ·2νx_k / (1 + νx_k²)²`.
pub fn grad_nonconvex_reg(x: ArrayView1<f64>, theta: f64, nu: f64) -> Array1<f64> {
    x.mapv(|v| {
        let den = 1.0 + nu * v * v;
        theta * 2.0 * nu * v / (den * den)
    })
}

impl Objective for LogRegInstance {
    fn dim_x(&self) -> usize {
        self.d
    }

    fn dim_y(&self) -> usize {
        self.total_samples()
    }

    fn num_clients(&self) -> usize {
        self.n
    }

    fn samples_per_client(&self) -> usize {
        self.m
    }

    fn y_constraint(&self) -> YConstraint {
        YConstraint::Simplex
    }

    fn value(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_point(self, client, x, y)?;
        let xs = x.to_vec();
        let base = client * self.m;
        let weighted: f64 = (base..base + self.m)
            .map(|k| y[k] * softplus(self.labels[k] * self.features[k].dot(&xs)))
            .sum();
        Ok(weighted / self.m as f64 - sample_weight_penalty(y) + nonconvex_reg(x, self.theta, self.nu))
    }

    fn grad_x(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        check_point(self, client, x, y)?;
        let batch = self.local_indices(batch)?;
        let xs = x.to_vec();
        let scale = 1.0 / batch.len() as f64;
        let base = client * self.m;
        let mut out = vec![0.0; self.d];
        batch.for_each(|j| {
            let k = base + j;
            let (a, b) = (&self.features[k], self.labels[k]);
            a.axpy_into(scale * y[k] * b * sigmoid(b * a.dot(&xs)), &mut out);
        });
        Ok(Array1::from(out) + grad_nonconvex_reg(x, self.theta, self.nu))
    }

    fn grad_y(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        check_point(self, client, x, y)?;
        let batch = self.local_indices(batch)?;
        let xs = x.to_vec();
        let scale = 1.0 / batch.len() as f64;
        let base = client * self.m;
        let mut out = -grad_sample_weight_penalty(y);
        batch.for_each(|j| {
            let k = base + j;
            out[k] += scale * softplus(self.labels[k] * self.features[k].dot(&xs));
        });
        Ok(out)
    }

    fn avg_value(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_point(self, 0, x, y)?;
        let big_n = self.total_samples() as f64;
        let weighted: f64 = self.losses(x).iter().zip(y.iter()).map(|(l, w)| l * w).sum();
        Ok(weighted / big_n - sample_weight_penalty(y) + nonconvex_reg(x, self.theta, self.nu))
    }

    fn avg_grad_x(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_point(self, 0, x, y)?;
        let xs = x.to_vec();
        let inv_n = 1.0 / self.total_samples() as f64;
        let mut out = vec![0.0; self.d];
        for (k, (a, &b)) in self.features.iter().zip(&self.labels).enumerate() {
            a.axpy_into(inv_n * y[k] * b * sigmoid(b * a.dot(&xs)), &mut out);
        }
        Ok(Array1::from(out) + grad_nonconvex_reg(x, self.theta, self.nu))
    }

    fn avg_grad_y(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        check_point(self, 0, x, y)?;
        let inv_n = 1.0 / self.total_samples() as f64;
        let losses = Array1::from(self.losses(x));
        Ok(losses * inv_n - grad_sample_weight_penalty(y))
    }
}
