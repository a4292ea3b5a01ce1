//! Synthetic binary-classification data shaped like the UCI Adult / `a9a`
//! set: 123 binary features formed by one-hot encoding 14 categorical
//! attributes, with roughly a quarter of the samples labelled `+1`.
//!
//! Samples follow a naive-Bayes model: a label is drawn first, then one
//! category per attribute from a label-dependent categorical distribution.
//! The model tables are fixed by `model_seed`, so train and test sets drawn
//! with different sample seeds come from the same distribution.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Sample, SparseVec};
use crate::linalg::mix_key;

/// One-hot group widths; they sum to 123.
pub const A9A_GROUPS: [usize; 14] = [5, 8, 5, 16, 5, 7, 14, 6, 5, 2, 3, 3, 3, 41];
pub const A9A_DIM: usize = 123;

const POSITIVE_RATE: f64 = 0.24;
const MISSING_RATE: f64 = 0.02;
const CLASS_TILT: f64 = 0.9;

#[derive(Debug, Clone)]
pub struct A9aLike {
    /// Cumulative category probabilities per group, for labels −1 and +1.
    tables: Vec<[Vec<f64>; 2]>,
}

impl A9aLike {
    pub fn new(model_seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[model_seed, 0xA9A]));
        let tables = A9A_GROUPS
            .iter()
            .map(|&width| {
                let base: Vec<f64> = (0..width).map(|_| exponential(&mut rng)).collect();
                let tilt: Vec<f64> = (0..width).map(|_| CLASS_TILT * normal(&mut rng)).collect();
                let neg = cumulative(base.iter().zip(&tilt).map(|(b, t)| b * (-t).exp()));
                let pos = cumulative(base.iter().zip(&tilt).map(|(b, t)| b * t.exp()));
                [neg, pos]
            })
            .collect();
        A9aLike { tables }
    }

    pub fn sample(&self, count: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[seed, 0x5A3D]));
        let samples = (0..count)
            .map(|_| {
                let positive = rng.random::<f64>() < POSITIVE_RATE;
                let table = usize::from(positive);
                let mut indices = Vec::with_capacity(A9A_GROUPS.len());
                let mut offset = 0u32;
                for (g, &width) in A9A_GROUPS.iter().enumerate() {
                    if rng.random::<f64>() >= MISSING_RATE {
                        let u: f64 = rng.random();
                        let cdf = &self.tables[g][table];
                        let k = cdf.iter().position(|&c| u < c).unwrap_or(width - 1);
                        indices.push(offset + k as u32);
                    }
                    offset += width as u32;
                }
                let values = vec![1.0; indices.len()];
                Sample {
                    features: SparseVec::new(indices, values),
                    label: if positive { 1.0 } else { -1.0 },
                }
            })
            .collect();
        Dataset {
            samples,
            d: A9A_DIM,
            source: format!("a9a-like(seed={seed})"),
        }
    }
}

fn exponential<R: Rng>(rng: &mut R) -> f64 {
    -(1.0 - rng.random::<f64>()).ln()
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn cumulative(weights: impl Iterator<Item = f64>) -> Vec<f64> {
    let w: Vec<f64> = weights.collect();
    let total: f64 = w.iter().sum();
    let mut acc = 0.0;
    w.iter()
        .map(|v| {
            acc += v / total;
            acc
        })
        .collect()
}
