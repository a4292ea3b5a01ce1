#![allow(dead_code)]

use std::path::PathBuf;

use dectrack::data::{parse_libsvm, partition, Dataset, PartitionMode};
use dectrack::objectives::{LogRegInstance, DEFAULT_NU, DEFAULT_THETA};

pub const A9A_DIM: usize = 123;

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("data")
}

pub fn train_path() -> PathBuf {
    data_dir().join("a9a_like_train.svm")
}

pub fn test_path() -> PathBuf {
    data_dir().join("a9a_like_test.svm")
}

pub fn train_set() -> Dataset {
    parse_libsvm(&train_path(), Some(A9A_DIM)).expect("training fixture")
}

pub fn test_set() -> Dataset {
    parse_libsvm(&test_path(), Some(A9A_DIM)).expect("test fixture")
}

pub fn logreg(ds: &Dataset, n: usize, mode: PartitionMode, seed: u64) -> LogRegInstance {
    let part = partition(ds, n, mode, seed).expect("partition");
    LogRegInstance::new(ds, &part, DEFAULT_THETA, DEFAULT_NU).expect("instance")
}

/// Central difference of `f` along every coordinate of `x`.
pub fn central_difference(x: &[f64], f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|k| {
            let h = 1e-6 * x[k].abs().max(1.0);
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
    let scale = a.iter().map(|v| v * v).sum::<f64>().sqrt().max(b.iter().map(|v| v * v).sum::<f64>().sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

/// Projection onto the probability simplex by bisection on the threshold
/// `τ` solving `Σ max(v − τ, 0) = 1` (the KKT condition of the QP).
pub fn simplex_qp_oracle(v: &[f64]) -> Vec<f64> {
    let mass = |tau: f64| v.iter().map(|&a| (a - tau).max(0.0)).sum::<f64>();
    let mut lo = v.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
    let mut hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mass(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    v.iter().map(|&a| (a - tau).max(0.0)).collect()
}

/// `1 − s²` with `s` the spectral norm of `W − J`, from a dense symmetric
/// eigendecomposition.
pub fn contraction_oracle(w: ndarray::ArrayView2<f64>) -> f64 {
    let n = w.nrows();
    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| w[[i, j]] - 1.0 / n as f64);
    let eig = nalgebra::SymmetricEigen::new(m);
    let s = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    1.0 - s * s
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
