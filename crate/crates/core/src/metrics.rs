//! Per-round diagnostics: the primal function `Φ(x̄) = max_y f(x̄, y)`, its
//! gradient by Danskin evaluation at the inner maximizer, consensus
//! distances, client drift and test accuracy.

use std::fmt::Write as _;

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};

use crate::algorithm::{NetworkState, RoundHook, RoundScratch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::linalg::{dist_sq, max_abs, norm_sq};
use crate::objectives::Objective;

pub const CSV_HEADER: &str = "round,sfo_calls,comm_rounds,phi,grad_phi_sq,xi_x,xi_y,drift_x,drift_y,test_acc";

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: usize,
    pub sfo_calls: u64,
    pub comm_rounds: usize,
    pub phi: f64,
    pub grad_phi_sq: f64,
    pub xi_x: f64,
    pub xi_y: f64,
    pub drift_x: f64,
    pub drift_y: f64,
    pub test_acc: Option<f64>,
    /// `‖ŷ − ȳ‖²`, distance of the averaged max variable to the inner maximizer.
    pub y_gap_sq: f64,
    /// False when the inner maximization hit its iteration cap.
    pub inner_converged: bool,
}

impl RoundMetrics {
    pub fn csv_row(&self) -> String {
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{},{},",
            self.round,
            self.sfo_calls,
            self.comm_rounds,
            self.phi,
            self.grad_phi_sq,
            self.xi_x,
            self.xi_y,
            self.drift_x,
            self.drift_y
        );
        if let Some(acc) = self.test_acc {
            let _ = write!(s, "{acc}");
        }
        s
    }
}

pub fn to_csv(rows: &[RoundMetrics]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone)]
pub struct InnerMax {
    pub y: Array1<f64>,
    pub phi: f64,
    pub iters: usize,
    pub converged: bool,
    /// Every ascent step kept `f(x̄, ·)` non-decreasing.
    pub monotone: bool,
}

/// Largest curvature of `y ↦ f(x, y)`, by power iteration on
/// Hessian–vector products formed from gradient differences.
pub fn estimate_y_curvature<O: Objective + ?Sized>(obj: &O, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
    let q = obj.dim_y();
    let base = obj.avg_grad_y(x, y)?;
    // Probe length grows with the gradient so the difference does not cancel
    // on far-out iterates; both objectives have affine y-gradients.
    let scale = (1e-6 * max_abs(base.view())).max(1.0);
    let mut v: Array1<f64> = (0..q).map(|k| 1.0 + 0.5 * ((k as f64 + 1.0) * 1.618).sin()).collect();
    v /= norm_sq(v.view()).sqrt();
    let mut lambda = 0.0;
    for _ in 0..500 {
        let hv = (&obj.avg_grad_y(x, (&y + &(&v * scale)).view())? - &base) / scale;
        let norm = norm_sq(hv.view()).sqrt();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = norm;
        v = hv / norm;
        if (next - lambda).abs() <= 1e-12 * next {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(lambda)
}

/// Projected gradient ascent on `y ↦ f(x̄, y)` with step `1/ℓ_y`, until the
/// projected-gradient norm drops to `tol`.
pub fn inner_max<O: Objective + ?Sized>(
    obj: &O,
    x_bar: ArrayView1<f64>,
    y_init: ArrayView1<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<InnerMax> {
    let ell_y = estimate_y_curvature(obj, x_bar, y_init)?;
    if !(ell_y > 0.0) {
        return Err(Error::invalid("objective is not strongly concave in y"));
    }
    let step = 1.0 / ell_y;
    let mut y = obj.project_y(y_init)?;
    let mut f = obj.avg_value(x_bar, y.view())?;
    let mut monotone = true;
    for iter in 0..max_iters {
        let g = obj.avg_grad_y(x_bar, y.view())?;
        let next = obj.project_y((&y + &(g * step)).view())?;
        let pg = dist_sq(next.view(), y.view()).sqrt() / step;
        let f_next = obj.avg_value(x_bar, next.view())?;
        if f_next < f - 1e-12 * f.abs().max(1.0) {
            monotone = false;
        }
        y = next;
        f = f_next;
        if pg <= tol {
            return Ok(InnerMax {
                y,
                phi: f,
                iters: iter + 1,
                converged: true,
                monotone,
            });
        }
    }
    Ok(InnerMax {
        y,
        phi: f,
        iters: max_iters,
        converged: false,
        monotone,
    })
}

/// Danskin evaluation: `∇Φ(x̄) ≈ ∇_x f(x̄, ŷ)`.
pub fn grad_phi<O: Objective + ?Sized>(obj: &O, x_bar: ArrayView1<f64>, y_hat: ArrayView1<f64>) -> Result<Array1<f64>> {
    obj.avg_grad_x(x_bar, y_hat)
}

/// `(1/n) Σ_i ‖v_i − v̄‖²` over the rows of `v`.
pub fn client_variance(v: ArrayView2<f64>) -> f64 {
    let mean = v.mean_axis(Axis(0)).expect("n >= 1");
    v.rows().into_iter().map(|row| dist_sq(row, mean.view())).sum::<f64>() / v.nrows() as f64
}

/// Consensus distances `(Ξ^x, Ξ^y)`.
pub fn consensus(state: &NetworkState) -> (f64, f64) {
    (client_variance(state.x.view()), client_variance(state.y.view()))
}

/// Fraction of samples with `sign(−aᵀx) = b`; `aᵀx = 0` counts as wrong.
pub fn test_accuracy(model_x: ArrayView1<f64>, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let d = model_x.len();
    let xs = model_x.to_vec();
    let mut correct = 0usize;
    for s in &test.samples {
        if s.features.indices.last().is_some_and(|&i| i as usize >= d) {
            return Err(Error::DimensionMismatch {
                what: "test feature index",
                expected: d,
                got: *s.features.indices.last().unwrap() as usize + 1,
            });
        }
        let score = s.features.dot(&xs);
        let predicted = if score < 0.0 {
            1.0
        } else if score > 0.0 {
            -1.0
        } else {
            0.0
        };
        if predicted == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsOptions {
    pub every: usize,
    pub inner_tol: f64,
    pub inner_max_iters: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            every: 1,
            inner_tol: 1e-8,
            inner_max_iters: 10_000,
        }
    }
}

/// Round hook that evaluates [`RoundMetrics`] at the configured cadence
/// (always including round 0 and the final round).
pub struct MetricsRecorder<'a, O: Objective + ?Sized> {
    obj: &'a O,
    test: Option<&'a Dataset>,
    opts: MetricsOptions,
    final_round: usize,
    warm_y: Option<Array1<f64>>,
    pub rows: Vec<RoundMetrics>,
}

impl<'a, O: Objective + ?Sized> MetricsRecorder<'a, O> {
    pub fn new(obj: &'a O, test: Option<&'a Dataset>, opts: MetricsOptions, final_round: usize) -> Self {
        MetricsRecorder {
            obj,
            test,
            opts,
            final_round,
            warm_y: None,
            rows: Vec::new(),
        }
    }

    pub fn evaluate(&mut self, state: &NetworkState, scratch: Option<&RoundScratch>) -> Result<RoundMetrics> {
        let x_bar = state.x_bar();
        let y_bar = state.y_bar();
        let start = self.warm_y.take().unwrap_or_else(|| y_bar.clone());
        let inner = inner_max(self.obj, x_bar.view(), start.view(), self.opts.inner_tol, self.opts.inner_max_iters)?;
        let g = grad_phi(self.obj, x_bar.view(), inner.y.view())?;
        let (xi_x, xi_y) = consensus(state);
        let test_acc = self.test.map(|t| test_accuracy(x_bar.view(), t)).transpose()?;
        let row = RoundMetrics {
            round: state.round,
            sfo_calls: state.sfo_count,
            comm_rounds: state.round,
            phi: inner.phi,
            grad_phi_sq: norm_sq(g.view()),
            xi_x,
            xi_y,
            drift_x: scratch.map_or(0.0, |s| s.drift_x),
            drift_y: scratch.map_or(0.0, |s| s.drift_y),
            test_acc,
            y_gap_sq: dist_sq(inner.y.view(), y_bar.view()),
            inner_converged: inner.converged,
        };
        self.warm_y = Some(inner.y);
        Ok(row)
    }
}

impl<O: Objective + ?Sized> RoundHook for MetricsRecorder<'_, O> {
    fn on_round(&mut self, state: &NetworkState, scratch: Option<&RoundScratch>) -> Result<()> {
        let every = self.opts.every.max(1);
        if state.round.is_multiple_of(every) || state.round == self.final_round {
            let row = self.evaluate(state, scratch)?;
            self.rows.push(row);
        }
        Ok(())
    }
}
