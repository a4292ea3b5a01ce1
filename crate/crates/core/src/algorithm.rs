//! Dec-FedTrack: local gradient descent–ascent with gradient-tracking
//! corrections, followed by one gossip round per communication step.
//!
//! Node variables are stacked row-wise: `x` is `n × d`, `y` is `n × q`.
//! Within a round each node's `K` local steps depend only on its own row and
//! the immutable round-start state, so nodes may run concurrently; the
//! communication step reads the completed snapshot of all nodes.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rayon::prelude::*;

use crate::data::{BatchSampler, Which};
use crate::error::{Error, Result};
use crate::linalg::{all_finite, dist_sq, max_abs};
use crate::objectives::{Batch, Objective};
use crate::topology::MixingMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    DecFedTrack,
    /// Local SGDA plus mixing of `x` and `y` only; corrections stay zero.
    NoGtBaseline,
}

/// Where `y` is projected when a constraint is configured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProjectionMode {
    /// After every local ascent step and after every communication.
    PerStep,
    /// Only after communication.
    PerRound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperParams {
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_s: f64,
    pub eta_r: f64,
    /// Local steps per round.
    pub k: usize,
    /// Communication rounds.
    pub t: usize,
    pub b_x: usize,
    pub b_y: usize,
    /// Use every client sample instead of sampled mini-batches.
    pub full_batch: bool,
    pub projection: ProjectionMode,
}

impl HyperParams {
    /// Global step size for `x`: `η_s·η_c`.
    pub fn eta_x(&self) -> f64 {
        self.eta_s * self.eta_c
    }

    /// Global step size for `y`: `η_r·η_d`.
    pub fn eta_y(&self) -> f64 {
        self.eta_r * self.eta_d
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta_c", self.eta_c), ("eta_d", self.eta_d), ("eta_s", self.eta_s), ("eta_r", self.eta_r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::invalid("K must be at least 1"));
        }
        if !self.full_batch && (self.b_x == 0 || self.b_y == 0) {
            return Err(Error::invalid("batch sizes must be at least 1"));
        }
        Ok(())
    }

    /// Stochastic gradient evaluations per node per local step.
    pub fn sfo_per_step(&self, samples_per_client: usize) -> u64 {
        if self.full_batch {
            2 * samples_per_client as u64
        } else {
            (self.b_x + self.b_y) as u64
        }
    }
}

/// Full algorithm state at a round boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub x: Array2<f64>,
    pub y: Array2<f64>,
    pub c: Array2<f64>,
    pub d: Array2<f64>,
    pub round: usize,
    pub sfo_count: u64,
}

impl NetworkState {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn x_bar(&self) -> Array1<f64> {
        self.x.mean_axis(Axis(0)).expect("n >= 1")
    }

    pub fn y_bar(&self) -> Array1<f64> {
        self.y.mean_axis(Axis(0)).expect("n >= 1")
    }

    /// `‖(1/n)Σ c_i‖_∞` and `‖(1/n)Σ d_i‖_∞`.
    pub fn correction_mean_norms(&self) -> (f64, f64) {
        let c = self.c.mean_axis(Axis(0)).expect("n >= 1");
        let d = self.d.mean_axis(Axis(0)).expect("n >= 1");
        (max_abs(c.view()), max_abs(d.view()))
    }

    /// Largest `‖s_i − s_j‖_∞` over node pairs, across all four variables.
    pub fn max_pairwise_gap(&self) -> f64 {
        [&self.x, &self.y, &self.c, &self.d]
            .iter()
            .map(|m| {
                let mut gap = 0.0_f64;
                for col in m.columns() {
                    let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
                    gap = gap.max(hi - lo);
                }
                gap
            })
            .fold(0.0, f64::max)
    }
}

/// Results of one local phase, consumed by [`communicate`].
#[derive(Debug, Clone)]
pub struct RoundScratch {
    /// `x_i^{(t)+K}` per node.
    pub x_local: Array2<f64>,
    /// `y_i^{(t)+K}` per node.
    pub y_local: Array2<f64>,
    /// Per node: `Σ_k ∇_x F_i(x_i^{(t)+k}, y_i^{(t)+k}; ξ)` over the round.
    pub grad_sum_x: Array2<f64>,
    pub grad_sum_y: Array2<f64>,
    /// `Σ_k (1/n) Σ_i ‖x_i^{(t)+k} − x̄^{(t)}‖²`.
    pub drift_x: f64,
    pub drift_y: f64,
}

/// Tracking variables `(Z, R)` formed from the local displacement.
pub fn tracking_variables(state: &NetworkState, scratch: &RoundScratch, hp: &HyperParams) -> (Array2<f64>, Array2<f64>) {
    let kf = hp.k as f64;
    let z = (&state.x - &scratch.x_local) / (kf * hp.eta_c);
    let r = (&scratch.y_local - &state.y) / (kf * hp.eta_d);
    (z, r)
}

/// Called once with the initial state (no scratch) and after every round.
pub trait RoundHook {
    fn on_round(&mut self, state: &NetworkState, scratch: Option<&RoundScratch>) -> Result<()>;
}

impl<F> RoundHook for F
where
    F: FnMut(&NetworkState, Option<&RoundScratch>) -> Result<()>,
{
    fn on_round(&mut self, state: &NetworkState, scratch: Option<&RoundScratch>) -> Result<()> {
        self(state, scratch)
    }
}

/// Hook that records nothing.
pub struct NoHook;

impl RoundHook for NoHook {
    fn on_round(&mut self, _: &NetworkState, _: Option<&RoundScratch>) -> Result<()> {
        Ok(())
    }
}

fn batch_for<'a>(hp: &HyperParams, storage: &'a Option<Vec<usize>>) -> Batch<'a> {
    match storage {
        Some(idx) if !hp.full_batch => Batch::Samples(idx),
        _ => Batch::Full,
    }
}

fn replicate(v: ArrayView1<f64>, n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, v.len()));
    for mut row in out.rows_mut() {
        row.assign(&v);
    }
    out
}

/// Correction initialization: `c_i = −∇_x F_i(x0, y0; ξ_i) + (1/n)Σ_j ∇_x F_j(x0, y0; ξ_j)`,
/// and likewise `d_i` with `∇_y`. Both sets sum to zero across nodes.
pub fn init_corrections<O: Objective + ?Sized>(
    obj: &O,
    x0: ArrayView1<f64>,
    y0: ArrayView1<f64>,
    sampler: &BatchSampler,
    full_batch: bool,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let n = obj.num_clients();
    let m = obj.samples_per_client();
    let mut gx = Array2::zeros((n, obj.dim_x()));
    let mut gy = Array2::zeros((n, obj.dim_y()));
    for i in 0..n {
        let idx_x = (!full_batch).then(|| sampler.draw_init(m, i, Which::X));
        let idx_y = (!full_batch).then(|| sampler.draw_init(m, i, Which::Y));
        let bx = idx_x.as_deref().map_or(Batch::Full, Batch::Samples);
        let by = idx_y.as_deref().map_or(Batch::Full, Batch::Samples);
        gx.row_mut(i).assign(&obj.grad_x(i, x0, y0, bx)?);
        gy.row_mut(i).assign(&obj.grad_y(i, x0, y0, by)?);
    }
    let mean_x = gx.mean_axis(Axis(0)).expect("n >= 1");
    let mean_y = gy.mean_axis(Axis(0)).expect("n >= 1");
    let c = gx.mapv(|v| -v) + &mean_x;
    let d = gy.mapv(|v| -v) + &mean_y;
    Ok((c, d))
}

struct NodeOutcome {
    x: Array1<f64>,
    y: Array1<f64>,
    grad_x: Array1<f64>,
    grad_y: Array1<f64>,
    drift_x: f64,
    drift_y: f64,
}

#[allow(clippy::too_many_arguments)]
fn run_node<O: Objective + ?Sized>(
    obj: &O,
    state: &NetworkState,
    hp: &HyperParams,
    sampler: &BatchSampler,
    x_bar: &Array1<f64>,
    y_bar: &Array1<f64>,
    node: usize,
) -> Result<NodeOutcome> {
    let m = obj.samples_per_client();
    let project_each_step = hp.projection == ProjectionMode::PerStep && obj.y_constraint().is_constrained();
    let c = state.c.row(node);
    let d = state.d.row(node);
    let mut x = state.x.row(node).to_owned();
    let mut y = state.y.row(node).to_owned();
    let mut out = NodeOutcome {
        x: Array1::zeros(0),
        y: Array1::zeros(0),
        grad_x: Array1::zeros(x.len()),
        grad_y: Array1::zeros(y.len()),
        drift_x: 0.0,
        drift_y: 0.0,
    };
    for k in 0..hp.k {
        out.drift_x += dist_sq(x.view(), x_bar.view());
        out.drift_y += dist_sq(y.view(), y_bar.view());
        let idx_x = (!hp.full_batch).then(|| sampler.draw_batch(m, node, state.round, k, Which::X));
        let idx_y = (!hp.full_batch).then(|| sampler.draw_batch(m, node, state.round, k, Which::Y));
        let gx = obj.grad_x(node, x.view(), y.view(), batch_for(hp, &idx_x))?;
        let gy = obj.grad_y(node, x.view(), y.view(), batch_for(hp, &idx_y))?;
        let x_next = &x - &((&gx + &c) * hp.eta_c);
        let mut y_next = &y + &((&gy + &d) * hp.eta_d);
        if project_each_step {
            y_next = obj.project_y(y_next.view())?;
        }
        if !all_finite(x_next.view()) || !all_finite(y_next.view()) {
            return Err(Error::NonFinite {
                node,
                round: state.round,
                step: k,
            });
        }
        out.grad_x += &gx;
        out.grad_y += &gy;
        x = x_next;
        y = y_next;
    }
    out.x = x;
    out.y = y;
    Ok(out)
}

/// The `K` local descent–ascent steps of every node for the current round.
pub fn local_phase<O: Objective + ?Sized>(
    state: &NetworkState,
    obj: &O,
    hp: &HyperParams,
    sampler: &BatchSampler,
    pool: Option<&rayon::ThreadPool>,
) -> Result<RoundScratch> {
    let n = state.n();
    let x_bar = state.x_bar();
    let y_bar = state.y_bar();
    let work = |i: usize| run_node(obj, state, hp, sampler, &x_bar, &y_bar, i);
    let outcomes: Vec<NodeOutcome> = match pool {
        Some(pool) => pool.install(|| (0..n).into_par_iter().map(work).collect::<Result<Vec<_>>>())?,
        None => (0..n).map(work).collect::<Result<Vec<_>>>()?,
    };

    let (dx, dy) = (state.x.ncols(), state.y.ncols());
    let mut scratch = RoundScratch {
        x_local: Array2::zeros((n, dx)),
        y_local: Array2::zeros((n, dy)),
        grad_sum_x: Array2::zeros((n, dx)),
        grad_sum_y: Array2::zeros((n, dy)),
        drift_x: 0.0,
        drift_y: 0.0,
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        scratch.x_local.row_mut(i).assign(&o.x);
        scratch.y_local.row_mut(i).assign(&o.y);
        scratch.grad_sum_x.row_mut(i).assign(&o.grad_x);
        scratch.grad_sum_y.row_mut(i).assign(&o.grad_y);
        scratch.drift_x += o.drift_x;
        scratch.drift_y += o.drift_y;
    }
    scratch.drift_x /= n as f64;
    scratch.drift_y /= n as f64;
    Ok(scratch)
}

/// Gossip step: corrections track the tracking variables, models take the
/// global step and are mixed.
pub fn communicate<O: Objective + ?Sized>(
    state: &NetworkState,
    scratch: &RoundScratch,
    hp: &HyperParams,
    w: &MixingMatrix,
    obj: &O,
    algo: Algorithm,
) -> Result<NetworkState> {
    if w.n() != state.n() {
        return Err(Error::DimensionMismatch {
            what: "mixing matrix",
            expected: state.n(),
            got: w.n(),
        });
    }
    let kf = hp.k as f64;
    let (z, r) = tracking_variables(state, scratch, hp);
    let (c, d) = match algo {
        Algorithm::DecFedTrack => (
            &state.c - &z + w.mix(z.view())?,
            &state.d - &r + w.mix(r.view())?,
        ),
        Algorithm::NoGtBaseline => (state.c.clone(), state.d.clone()),
    };
    let x = w.mix((&state.x - &(&z * (kf * hp.eta_x()))).view())?;
    let mut y = w.mix((&state.y + &(&r * (kf * hp.eta_y()))).view())?;
    if obj.y_constraint().is_constrained() {
        for mut row in y.rows_mut() {
            let p = obj.project_y(row.view())?;
            row.assign(&p);
        }
    }
    let next = NetworkState {
        x,
        y,
        c,
        d,
        round: state.round + 1,
        sfo_count: state.sfo_count + state.n() as u64 * hp.k as u64 * hp.sfo_per_step(obj.samples_per_client()),
    };
    for (i, row) in next.x.rows().into_iter().enumerate() {
        if !all_finite(row) || !all_finite(next.y.row(i)) {
            return Err(Error::NonFinite {
                node: i,
                round: state.round,
                step: hp.k,
            });
        }
    }
    Ok(next)
}

/// Every node starts from `(x0, y0)`; corrections follow the zero-mean
/// initialization for Dec-FedTrack and are zero for the baseline.
pub fn initial_state<O: Objective + ?Sized>(
    obj: &O,
    algo: Algorithm,
    x0: ArrayView1<f64>,
    y0: ArrayView1<f64>,
    sampler: &BatchSampler,
    hp: &HyperParams,
) -> Result<NetworkState> {
    let n = obj.num_clients();
    if x0.len() != obj.dim_x() {
        return Err(Error::DimensionMismatch {
            what: "x0",
            expected: obj.dim_x(),
            got: x0.len(),
        });
    }
    if y0.len() != obj.dim_y() {
        return Err(Error::DimensionMismatch {
            what: "y0",
            expected: obj.dim_y(),
            got: y0.len(),
        });
    }
    let (c, d) = match algo {
        Algorithm::DecFedTrack => init_corrections(obj, x0, y0, sampler, hp.full_batch)?,
        Algorithm::NoGtBaseline => (Array2::zeros((n, obj.dim_x())), Array2::zeros((n, obj.dim_y()))),
    };
    Ok(NetworkState {
        x: replicate(x0, n),
        y: replicate(y0, n),
        c,
        d,
        round: 0,
        sfo_count: 0,
    })
}

/// Worker threads for the local phase; 0 runs nodes sequentially.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Execution {
    pub threads: usize,
}

/// Runs `hp.t` rounds of `algo`, invoking `hook` on the initial state and
/// after every round. Returns the final state.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm<O: Objective + ?Sized>(
    algo: Algorithm,
    obj: &O,
    w: &MixingMatrix,
    hp: &HyperParams,
    sampler: &BatchSampler,
    x0: ArrayView1<f64>,
    y0: ArrayView1<f64>,
    hook: &mut dyn RoundHook,
    exec: Execution,
) -> Result<NetworkState> {
    hp.validate()?;
    if w.n() != obj.num_clients() {
        return Err(Error::DimensionMismatch {
            what: "mixing matrix",
            expected: obj.num_clients(),
            got: w.n(),
        });
    }
    let pool = if exec.threads > 0 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(exec.threads)
                .build()
                .map_err(|e| Error::invalid(format!("thread pool: {e}")))?,
        )
    } else {
        None
    };
    let mut state = initial_state(obj, algo, x0, y0, sampler, hp)?;
    hook.on_round(&state, None)?;
    for _ in 0..hp.t {
        let scratch = local_phase(&state, obj, hp, sampler, pool.as_ref())?;
        state = communicate(&state, &scratch, hp, w, obj, algo)?;
        hook.on_round(&state, Some(&scratch))?;
    }
    Ok(state)
}

/// Dec-FedTrack.
#[allow(clippy::too_many_arguments)]
pub fn run<O: Objective + ?Sized>(
    obj: &O,
    w: &MixingMatrix,
    hp: &HyperParams,
    sampler: &BatchSampler,
    x0: ArrayView1<f64>,
    y0: ArrayView1<f64>,
    hook: &mut dyn RoundHook,
) -> Result<NetworkState> {
    run_algorithm(Algorithm::DecFedTrack, obj, w, hp, sampler, x0, y0, hook, Execution::default())
}

/// Same loop without gradient tracking.
#[allow(clippy::too_many_arguments)]
pub fn run_baseline_no_gt<O: Objective + ?Sized>(
    obj: &O,
    w: &MixingMatrix,
    hp: &HyperParams,
    sampler: &BatchSampler,
    x0: ArrayView1<f64>,
    y0: ArrayView1<f64>,
    hook: &mut dyn RoundHook,
) -> Result<NetworkState> {
    run_algorithm(Algorithm::NoGtBaseline, obj, w, hp, sampler, x0, y0, hook, Execution::default())
}

/// Curvature estimates and contraction factor behind the theoretical
/// step-size schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizePlan {
    pub kappa: f64,
    pub ell: f64,
    pub mu: f64,
    pub p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub eta_c: f64,
    pub eta_d: f64,
    pub eta_s: f64,
    pub eta_r: f64,
}

/// `η_d = s·p/(κKℓ)`, `η_c = η_d/κ²`, `η_s = η_r = p` with all hidden
/// constants set to one and `s` the safety factor.
pub fn derive_step_sizes(plan: &StepSizePlan, k: usize, safety: f64) -> Result<StepSizes> {
    for (name, v) in [("kappa", plan.kappa), ("ell", plan.ell), ("mu", plan.mu), ("p", plan.p), ("safety", safety)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    if k == 0 {
        return Err(Error::invalid("K must be at least 1"));
    }
    let eta_d = safety * plan.p / (plan.kappa * k as f64 * plan.ell);
    Ok(StepSizes {
        eta_c: eta_d / (plan.kappa * plan.kappa),
        eta_d,
        eta_s: plan.p,
        eta_r: plan.p,
    })
}

/// Local step-size ceiling `1/(8Kℓ)` assumed by the drift bounds.
pub fn local_step_bound(k: usize, ell: f64) -> f64 {
    1.0 / (8.0 * k as f64 * ell)
}
