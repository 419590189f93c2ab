use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{solve, DenseMatrix};
use crate::manifold::{Euclidean, Manifold, Point, Tangent};
use crate::problems::{check_batch, FiniteSumProblem};
use crate::scalar::Real;

/// Flat finite sum `fₙ(x) = ½ xᵀ Aₙ x − bₙᵀ x` on column vectors; a closed-form reference for
/// the optimizers.
#[derive(Clone, Debug)]
pub struct QuadraticProblem<T> {
    space: Euclidean,
    dim: usize,
    a: Vec<DenseMatrix<T>>,
    b: Vec<DenseMatrix<T>>,
}

impl<T: Real> QuadraticProblem<T> {
    /// `a[n]` symmetric `dim x dim`, `b[n]` of shape `dim x 1`.
    pub fn new(a: Vec<DenseMatrix<T>>, b: Vec<DenseMatrix<T>>) -> Result<Self> {
        if a.is_empty() || a.len() != b.len() {
            return Err(Error::InvalidArgument("need equally many Hessians and linear terms".into()));
        }
        let dim = a[0].rows();
        for (an, bn) in a.iter().zip(&b) {
            an.ensure_shape((dim, dim))?;
            bn.ensure_shape((dim, 1))?;
        }
        Ok(Self { space: Euclidean::vectors(dim), dim, a: a.into_iter().map(|m| m.symmetrize()).collect(), b })
    }

    /// Random instance whose mean Hessian is positive definite with eigenvalues in roughly
    /// `[1, cond]`; individual `Aₙ` are perturbed and may be indefinite.
    pub fn random<R: Rng + ?Sized>(dim: usize, n: usize, cond: f64, rng: &mut R) -> Self {
        let mut gauss = |r: usize, c: usize| {
            DenseMatrix::from_fn(r, c, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
        };
        let q = crate::linalg::qf(&gauss(dim, dim)).expect("gaussian matrix has full rank");
        let spectrum: Vec<T> = (0..dim)
            .map(|i| T::lit(if dim == 1 { 1.0 } else { cond.powf(i as f64 / (dim - 1) as f64) }))
            .collect();
        let base = q.scale_columns(&spectrum).matmul_t(&q).symmetrize();
        let mut a = Vec::with_capacity(n);
        let mut b = Vec::with_capacity(n);
        let mut mean_pert = DenseMatrix::zeros(dim, dim);
        for _ in 0..n {
            let p = gauss(dim, dim).symmetrize().scale(T::lit(0.3));
            mean_pert += &p;
            a.push(&base + &p);
            b.push(gauss(dim, 1));
        }
        // Re-centre so the mean Hessian is exactly `base`.
        let shift = mean_pert.scale(T::one() / T::from_count(n));
        for an in &mut a {
            *an -= &shift;
        }
        Self::new(a, b).expect("consistent shapes")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Mean Hessian `(1/N) Σ Aₙ`.
    pub fn hessian(&self) -> DenseMatrix<T> {
        mean(&self.a)
    }

    /// Mean linear term.
    pub fn linear_term(&self) -> DenseMatrix<T> {
        mean(&self.b)
    }

    /// Stationary point of the mean: `Ā x = b̄`.
    pub fn minimizer(&self) -> Result<DenseMatrix<T>> {
        solve(&self.hessian(), &self.linear_term())
    }
}

fn mean<T: Real>(ms: &[DenseMatrix<T>]) -> DenseMatrix<T> {
    let mut acc = DenseMatrix::zeros(ms[0].rows(), ms[0].cols());
    for m in ms {
        acc += m;
    }
    acc.scale(T::one() / T::from_count(ms.len()))
}

impl<T: Real> FiniteSumProblem<T> for QuadraticProblem<T> {
    type Geometry = Euclidean;

    fn manifold(&self) -> &Euclidean {
        &self.space
    }

    fn num_samples(&self) -> usize {
        self.a.len()
    }

    fn batch_cost(&self, w: &Point<T>, batch: &[usize]) -> Result<T> {
        check_batch(batch, self.a.len())?;
        let x = w.matrix();
        let mut total = T::zero();
        for &n in batch {
            let ax = self.a[n].matmul(x);
            total += T::lit(0.5) * x.frob_dot(&ax) - self.b[n].frob_dot(x);
        }
        Ok(total / T::from_count(batch.len()))
    }

    fn batch_grad(&self, w: &Point<T>, batch: &[usize]) -> Result<Tangent<T>> {
        check_batch(batch, self.a.len())?;
        let x = w.matrix();
        let mut g = DenseMatrix::zeros(x.rows(), 1);
        for &n in batch {
            g += &self.a[n].matmul(x);
            g -= &self.b[n];
        }
        Ok(self.space.tangent_tidy(w, g.scale(T::one() / T::from_count(batch.len()))))
    }
}
