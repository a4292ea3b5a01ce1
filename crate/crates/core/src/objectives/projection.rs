use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};

/// Constraint set for the max variable `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YConstraint {
    None,
    Simplex,
    LinfBall(f64),
}

impl YConstraint {
    pub fn project(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        match *self {
            YConstraint::None => Ok(y.to_owned()),
            YConstraint::Simplex => project_simplex(y),
            YConstraint::LinfBall(delta) => project_linf_ball(y, delta),
        }
    }

    pub fn is_constrained(&self) -> bool {
        !matches!(self, YConstraint::None)
    }
}

/// Slack on `Σ y = 1` below which a point counts as on the simplex.
pub const SIMPLEX_SUM_TOL: f64 = 1e-12;

/// Euclidean projection onto `{y : y ≥ 0, Σ y = 1}` by sort-and-threshold.
pub fn project_simplex(v: ArrayView1<f64>) -> Result<Array1<f64>> {
    if v.is_empty() {
        return Err(Error::invalid("cannot project onto the 0-dimensional simplex"));
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::invalid("non-finite entry in simplex projection input"));
    }
    // Points already feasible up to rounding are returned untouched, which
    // makes the projection exactly idempotent.
    if v.iter().all(|a| (0.0..=1.0).contains(a)) && (v.sum() - 1.0).abs() <= SIMPLEX_SUM_TOL {
        return Ok(v.to_owned());
    }
    let mut u: Vec<f64> = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if uk - t > 0.0 {
            tau = t;
        }
    }
    // Entries of a simplex point never exceed one; the clamp absorbs rounding in `a - tau`.
    Ok(v.mapv(|a| (a - tau).clamp(0.0, 1.0)))
}

/// Componentwise clamp to `[-delta, delta]`.
pub fn project_linf_ball(v: ArrayView1<f64>, delta: f64) -> Result<Array1<f64>> {
    if !(delta >= 0.0) {
        return Err(Error::invalid(format!("L∞ radius must be non-negative, got {delta}")));
    }
    Ok(v.mapv(|a| a.clamp(-delta, delta)))
}
