//! Saddle quadratic with a closed-form stationary point:
//! `f_i(x, y) = ½xᵀA_i x + xᵀB_i y − (μ/2)‖y‖² + u_iᵀx + v_iᵀy`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_point, Batch, Objective, YConstraint};
use crate::error::{Error, Result};
use crate::linalg::mix_key;

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone)]
pub struct QuadraticInstance {
    pub a: Vec<Array2<f64>>,
    pub b: Vec<Array2<f64>>,
    pub u: Vec<Array1<f64>>,
    pub v: Vec<Array1<f64>>,
    pub mu: f64,
    pub constraint: YConstraint,
}

impl QuadraticInstance {
    pub fn new(
        a: Vec<Array2<f64>>,
        b: Vec<Array2<f64>>,
        u: Vec<Array1<f64>>,
        v: Vec<Array1<f64>>,
        mu: f64,
    ) -> Result<Self> {
        let n = a.len();
        if n == 0 || b.len() != n || u.len() != n || v.len() != n {
            return Err(Error::invalid("quadratic instance needs the same nonzero number of A, B, u, v terms"));
        }
        if !(mu > 0.0) {
            return Err(Error::invalid(format!("mu must be positive, got {mu}")));
        }
        let d = a[0].nrows();
        let q = b[0].ncols();
        if d == 0 || q == 0 {
            return Err(Error::invalid("quadratic instance needs d, q ≥ 1"));
        }
        for i in 0..n {
            if a[i].dim() != (d, d) || b[i].dim() != (d, q) || u[i].len() != d || v[i].len() != q {
                return Err(Error::invalid(format!("client {i} terms have inconsistent shapes")));
            }
            if a[i] != a[i].t() {
                return Err(Error::invalid(format!("A_{i} is not symmetric")));
            }
        }
        Ok(QuadraticInstance {
            a,
            b,
            u,
            v,
            mu,
            constraint: YConstraint::None,
        })
    }

    /// Every client holds the same terms.
    pub fn homogeneous(a: Array2<f64>, b: Array2<f64>, u: Array1<f64>, v: Array1<f64>, mu: f64, n: usize) -> Result<Self> {
        Self::new(vec![a; n], vec![b; n], vec![u; n], vec![v; n], mu)
    }

    pub fn with_constraint(mut self, constraint: YConstraint) -> Self {
        self.constraint = constraint;
        self
    }

    /// Random heterogeneous instance, nonconvex in `x`, whose primal function
    /// is strongly convex. Along `min(d, q)` directions `Ā` has curvature
    /// `−0.3μ` and `B̄` couples them to `y` with singular value `μ`, so `Φ`
    /// has curvature `0.7μ` there; the rest of `Ā` lies in `[0.5μ, 1.5μ]`.
    /// Client terms deviate from the mean by `heterogeneity`-scaled noise
    /// that sums to zero across clients.
    pub fn random(d: usize, q: usize, n: usize, mu: f64, heterogeneity: f64, seed: u64) -> Result<Self> {
        if d == 0 || q == 0 || n == 0 {
            return Err(Error::invalid("random quadratic needs d, q, n ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[seed, 0x51AD]));
        let qx = random_orthogonal(d, &mut rng);
        let qy = random_orthogonal(q, &mut rng);
        let r = d.min(q);
        let mut eig = DVector::zeros(d);
        for k in 0..d {
            eig[k] = if k < r { -0.3 * mu } else { mu * (0.5 + rng.random::<f64>()) };
        }
        let a_bar = &qx * DMatrix::from_diagonal(&eig) * qx.transpose();
        let mut b_bar = DMatrix::zeros(d, q);
        for k in 0..r {
            b_bar += mu * qx.column(k) * qy.column(k).transpose();
        }
        let a_bar = to_ndarray(&symmetrize(&a_bar));
        let b_bar = to_ndarray(&b_bar);
        let u_bar: Array1<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
        let v_bar: Array1<f64> = (0..q).map(|_| gaussian(&mut rng)).collect();

        let scale_a = heterogeneity / (d as f64).sqrt();
        let scale_b = heterogeneity / ((d * q) as f64).sqrt().sqrt();
        let da = zero_mean((0..n).map(|_| {
            let g = Array2::from_shape_fn((d, d), |_| gaussian(&mut rng) * scale_a);
            (&g + &g.t()) * 0.5
        }));
        let db = zero_mean((0..n).map(|_| Array2::from_shape_fn((d, q), |_| gaussian(&mut rng) * scale_b)));
        let du = zero_mean((0..n).map(|_| Array1::from_shape_fn(d, |_| gaussian(&mut rng) * heterogeneity)));
        let dv = zero_mean((0..n).map(|_| Array1::from_shape_fn(q, |_| gaussian(&mut rng) * heterogeneity)));

        Self::new(
            da.into_iter().map(|m| symmetrize_nd(&a_bar + &m)).collect(),
            db.into_iter().map(|m| &b_bar + &m).collect(),
            du.into_iter().map(|m| &u_bar + &m).collect(),
            dv.into_iter().map(|m| &v_bar + &m).collect(),
            mu,
        )
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn mean_a(&self) -> Array2<f64> {
        mean(&self.a)
    }

    pub fn mean_b(&self) -> Array2<f64> {
        mean(&self.b)
    }

    pub fn mean_u(&self) -> Array1<f64> {
        mean(&self.u)
    }

    pub fn mean_v(&self) -> Array1<f64> {
        mean(&self.v)
    }

    /// Largest absolute eigenvalue of any client's joint Hessian
    /// `[[A_i, B_i], [B_iᵀ, −μI]]`.
    pub fn smoothness(&self) -> f64 {
        let d = self.a[0].nrows();
        let q = self.b[0].ncols();
        (0..self.n())
            .map(|i| {
                let h = DMatrix::from_fn(d + q, d + q, |r, c| match (r < d, c < d) {
                    (true, true) => self.a[i][[r, c]],
                    (true, false) => self.b[i][[r, c - d]],
                    (false, true) => self.b[i][[c, r - d]],
                    (false, false) => {
                        if r == c {
                            -self.mu
                        } else {
                            0.0
                        }
                    }
                });
                SymmetricEigen::new(h).eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()))
            })
            .fold(0.0, f64::max)
    }

    /// `κ = ℓ / μ`.
    pub fn condition_number(&self) -> f64 {
        self.smoothness() / self.mu
    }

    /// Maximizer of the averaged objective for fixed `x` (unconstrained `y`).
    pub fn best_response(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (self.mean_b().t().dot(&x) + self.mean_v()) / self.mu
    }

    /// `∇Φ(x) = Āx + ū + B̄(B̄ᵀx + v̄)/μ`.
    pub fn grad_phi_closed_form(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let b = self.mean_b();
        self.mean_a().dot(&x) + self.mean_u() + b.dot(&self.best_response(x))
    }
}

/// Stationary point `(x*, y*(x*))` of the averaged unconstrained problem.
pub fn saddle_solution(inst: &QuadraticInstance) -> Result<(Array1<f64>, Array1<f64>)> {
    let a = to_nalgebra(&inst.mean_a());
    let b = to_nalgebra(&inst.mean_b());
    let u = DVector::from_vec(inst.mean_u().to_vec());
    let v = DVector::from_vec(inst.mean_v().to_vec());
    let mu = inst.mu;

    let lhs = &a + &b * b.transpose() / mu;
    let rhs = -(&u + &b * &v / mu);
    let sv = lhs.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond > MAX_CONDITION {
        return Err(Error::Singular(cond));
    }
    let x = lhs.clone().lu().solve(&rhs).ok_or(Error::Singular(cond))?;
    let residual = (&lhs * &x - &rhs).norm();
    if residual > 1e-10 * rhs.norm().max(1.0) {
        return Err(Error::Singular(cond));
    }
    let x = Array1::from(x.as_slice().to_vec());
    let y = inst.best_response(x.view());
    Ok((x, y))
}

impl Objective for QuadraticInstance {
    fn dim_x(&self) -> usize {
        self.a[0].nrows()
    }

    fn dim_y(&self) -> usize {
        self.b[0].ncols()
    }

    fn num_clients(&self) -> usize {
        self.n()
    }

    fn samples_per_client(&self) -> usize {
        1
    }

    fn y_constraint(&self) -> YConstraint {
        self.constraint
    }

    fn value(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>) -> Result<f64> {
        check_point(self, client, x, y)?;
        let i = client;
        Ok(0.5 * x.dot(&self.a[i].dot(&x)) + x.dot(&self.b[i].dot(&y)) - 0.5 * self.mu * y.dot(&y)
            + self.u[i].dot(&x)
            + self.v[i].dot(&y))
    }

    fn grad_x(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        check_point(self, client, x, y)?;
        check_batch(batch)?;
        let i = client;
        Ok(self.a[i].dot(&x) + self.b[i].dot(&y) + &self.u[i])
    }

    fn grad_y(&self, client: usize, x: ArrayView1<f64>, y: ArrayView1<f64>, batch: Batch<'_>) -> Result<Array1<f64>> {
        check_point(self, client, x, y)?;
        check_batch(batch)?;
        let i = client;
        Ok(self.b[i].t().dot(&x) - self.mu * &y + &self.v[i])
    }
}

fn check_batch(batch: Batch<'_>) -> Result<()> {
    if let Batch::Samples(idx) = batch {
        if idx.is_empty() {
            return Err(Error::invalid("empty mini-batch"));
        }
        if let Some(&bad) = idx.iter().find(|&&j| j != 0) {
            return Err(Error::invalid(format!("batch index {bad} outside the client's single sample")));
        }
    }
    Ok(())
}

fn mean<D: ndarray::Dimension>(items: &[ndarray::Array<f64, D>]) -> ndarray::Array<f64, D> {
    let mut acc = items[0].clone();
    for it in &items[1..] {
        acc += it;
    }
    acc / items.len() as f64
}

fn zero_mean<D: ndarray::Dimension>(items: impl Iterator<Item = ndarray::Array<f64, D>>) -> Vec<ndarray::Array<f64, D>> {
    let items: Vec<_> = items.collect();
    let m = mean(&items);
    items.into_iter().map(|it| it - &m).collect()
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn symmetrize_nd(m: Array2<f64>) -> Array2<f64> {
    let t = m.t().to_owned();
    (m + t) * 0.5
}

fn to_nalgebra(m: &Array2<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| m[[r, c]])
}

fn to_ndarray(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    let u1 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn random_orthogonal<R: Rng>(k: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(k, k, |_, _| gaussian(rng));
    g.qr().q()
}


#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn scalar(a: f64, b: f64, u: f64, v: f64, mu: f64) -> QuadraticInstance {
        QuadraticInstance::homogeneous(array![[a]], array![[b]], array![u], array![v], mu, 1).unwrap()
    }

    #[test]
    fn identity_quadratic_gradient() {
        let inst = QuadraticInstance::homogeneous(Array2::eye(2), Array2::zeros((2, 1)), Array1::zeros(2), Array1::zeros(1), 1.0, 1).unwrap();
        let g = inst.grad_x_full(0, array![1.0, 2.0].view(), array![0.0].view()).unwrap();
        assert_eq!(g, array![1.0, 2.0]);
    }

    #[test]
    fn y_gradient_scalar() {
        let inst = scalar(1.0, 0.0, 0.0, 0.0, 2.0);
        let g = inst.grad_y_full(0, array![0.0].view(), array![3.0].view()).unwrap();
        assert_eq!(g, array![-6.0]);
    }

    #[test]
    fn decoupled_solution() {
        let inst = QuadraticInstance::homogeneous(
            array![[2.0, 0.0], [0.0, 1.0]],
            Array2::zeros((2, 2)),
            Array1::zeros(2),
            array![1.0, -4.0],
            2.0,
            3,
        )
        .unwrap();
        let (x, y) = saddle_solution(&inst).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-15));
        assert_eq!(y, array![0.5, -2.0]);
    }

    #[test]
    fn one_dimensional_solution() {
        // (2 + 1)x = −(0 + 1) → x = −1/3, y = (x + 1)/1 = 2/3
        let (x, y) = saddle_solution(&scalar(2.0, 1.0, 0.0, 1.0, 1.0)).unwrap();
        assert!((x[0] + 1.0 / 3.0).abs() < 1e-15);
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn singular_system_is_reported() {
        // a + b²/mu = −1 + 1 = 0
        assert!(matches!(saddle_solution(&scalar(-1.0, 1.0, 0.0, 0.0, 1.0)), Err(Error::Singular(_))));
    }

    #[test]
    fn random_instance_properties() {
        let inst = QuadraticInstance::random(10, 5, 8, 1.0, 0.3, 7).unwrap();
        assert_eq!(inst.dim_x(), 10);
        assert_eq!(inst.dim_y(), 5);
        let kappa = inst.condition_number();
        assert!((1.0..=10.0).contains(&kappa), "kappa {kappa}");
        for a in &inst.a {
            assert_eq!(a, &a.t());
        }
        let (x, _) = saddle_solution(&inst).unwrap();
        let g = inst.grad_phi_closed_form(x.view());
        assert!(g.iter().all(|v| v.abs() < 1e-10));
        // nonconvex in x
        let eig = SymmetricEigen::new(to_nalgebra(&inst.mean_a())).eigenvalues;
        assert!(eig.min() < 0.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(QuadraticInstance::new(vec![], vec![], vec![], vec![], 1.0).is_err());
        assert!(QuadraticInstance::homogeneous(array![[1.0, 2.0], [0.0, 1.0]], Array2::zeros((2, 1)), Array1::zeros(2), Array1::zeros(1), 1.0, 1).is_err());
        assert!(QuadraticInstance::homogeneous(Array2::eye(2), Array2::zeros((2, 1)), Array1::zeros(2), Array1::zeros(1), 0.0, 1).is_err());
    }
}
