//! The objective family `f_i(x, y)`: per-client gradients in both variables
//! and the constraint set for `y`.

mod logreg;
mod projection;
mod quadratic;

use ndarray::{Array1, ArrayView1};

pub use logreg::{DEFAULT_NU, DEFAULT_THETA, grad_nonconvex_reg, grad_sample_weight_penalty, nonconvex_reg, sample_weight_penalty, LogRegInstance};
pub use projection::{project_linf_ball, project_simplex, YConstraint};
pub use quadratic::{saddle_solution, QuadraticInstance};

use crate::data::Which;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub enum Batch<'a> {
    /// Every sample of the client, each once.
    Full,
    /// Local sample indices in `[0, m)`; repeats allowed.
    Samples(&'a [usize]),
}

pub trait Objective: Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn num_clients(&self) -> usize;
    /// Samples held by each client (`m`); 1 for data-free objectives.
    fn samples_per_client(&self) -> usize;
    fn y_constraint(&self) -> YConstraint;

    fn value(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64>;
    fn grad_x(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>>;
    fn grad_y(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>>;

    fn grad_x_full(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.grad_x(client, x, y, Batch::Full)
    }

    fn grad_y_full(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.grad_y(client, x, y, Batch::Full)
    }

    fn grad_stochastic(
        &self,
        client: usize,
        x: ArrayView1<f64>,
        y: ArrayView1<f64>,
        batch: &[usize],
        which: Which,
    ) -> Result<Array1<f64>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty mini-batch"));
        }
        match which {
            Which::X => self.grad_x(client, x, y, Batch::Samples(batch)),
            Which::Y => self.grad_y(client, x, y, Batch::Samples(batch)),
        }
    }

    /// `f(x, y) = (1/n) Σ_i f_i(x, y)`.
    fn avg_value(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        let n = self.num_clients();
        let mut total = 0.0;
        for i in 0..n {
            total += self.value(i, x, y)?;
        }
        Ok(total / n as f64)
    }

    fn avg_grad_x(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = self.num_clients();
        let mut acc = Array1::zeros(self.dim_x());
        for i in 0..n {
            acc += &self.grad_x_full(i, x, y)?;
        }
        Ok(acc / n as f64)
    }

    fn avg_grad_y(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        let n = self.num_clients();
        let mut acc = Array1::zeros(self.dim_y());
        for i in 0..n {
            acc += &self.grad_y_full(i, x, y)?;
        }
        Ok(acc / n as f64)
    }

    fn project_y(&self, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.y_constraint().project(y)
    }
}

pub(crate) fn check_point<O: Objective + ?Sized>(
    obj: &O,
    client: usize,
    x: ArrayView1<f64>,
    y: ArrayView1<f64>,
) -> Result<()> {
    if client >= obj.num_clients() {
        return Err(Error::ClientOutOfRange {
            client,
            n: obj.num_clients(),
        });
    }
    if x.len() != obj.dim_x() {
        return Err(Error::DimensionMismatch {
            what: "x",
            expected: obj.dim_x(),
            got: x.len(),
        });
    }
    if y.len() != obj.dim_y() {
        return Err(Error::DimensionMismatch {
            what: "y",
            expected: obj.dim_y(),
            got: y.len(),
        });
    }
    Ok(())
}

/// Either in-scope objective, for config-driven runs.
#[derive(Debug, Clone)]
pub enum AnyObjective {
    RobustLogReg(LogRegInstance),
    SaddleQuadratic(QuadraticInstance),
}

macro_rules! delegate {
    ($self:ident, $inner:ident => $body:expr) => {
        match $self {
            AnyObjective::RobustLogReg($inner) => $body,
            AnyObjective::SaddleQuadratic($inner) => $body,
        }
    };
}

impl Objective for AnyObjective {
    fn dim_x(&self) -> usize {
        delegate!(self, o => o.dim_x())
    }
    fn dim_y(&self) -> usize {
        delegate!(self, o => o.dim_y())
    }
    fn num_clients(&self) -> usize {
        delegate!(self, o => o.num_clients())
    }
    fn samples_per_client(&self) -> usize {
        delegate!(self, o => o.samples_per_client())
    }
    fn y_constraint(&self) -> YConstraint {
        delegate!(self, o => o.y_constraint())
    }
    fn value(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        delegate!(self, o => o.value(client, x, y))
    }
    fn grad_x(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        delegate!(self, o => o.grad_x(client, x, y, batch))
    }
    fn grad_y(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        delegate!(self, o => o.grad_y(client, x, y, batch))
    }
    fn avg_value(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        delegate!(self, o => o.avg_value(x, y))
    }
    fn avg_grad_x(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        delegate!(self, o => o.avg_grad_x(x, y))
    }
    fn avg_grad_y(&self, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<Array1<f64>> {
        delegate!(self, o => o.avg_grad_y(x, y))
    }
}
