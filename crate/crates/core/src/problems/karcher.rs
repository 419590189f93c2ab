use crate::error::Result;
use crate::linalg::{spd_fun, spd_fun_from_eig, sym_eig, DenseMatrix, SpdFn};
use crate::manifold::{Manifold, Point, SpdManifold, Tangent};
use crate::problems::{check_batch, FiniteSumProblem};
use crate::scalar::Real;

/// Karcher mean of SPD matrices: `f(X) = (1/N) Σₙ dist(X, Qₙ)²`.
#[derive(Clone, Debug)]
pub struct KarcherProblem<T> {
    manifold: SpdManifold,
    samples: Vec<Point<T>>,
}

impl<T: Real> KarcherProblem<T> {
    /// Validates every sample as an SPD matrix of the manifold's dimension.
    pub fn new(manifold: SpdManifold, samples: Vec<DenseMatrix<T>>) -> Result<Self> {
        let samples = samples.into_iter().map(|q| manifold.point(q)).collect::<Result<Vec<_>>>()?;
        if samples.is_empty() {
            return Err(crate::Error::InvalidArgument("Karcher problem needs at least one sample".into()));
        }
        Ok(Self { manifold, samples })
    }

    pub fn samples(&self) -> &[Point<T>] {
        &self.samples
    }

    /// `X^{1/2}` and `X^{-1/2}`.
    fn frame(w: &Point<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
        let eig = w.sym_eig()?;
        Ok((spd_fun_from_eig(eig, SpdFn::Sqrt)?, spd_fun_from_eig(eig, SpdFn::InvSqrt)?))
    }
}

impl<T: Real> FiniteSumProblem<T> for KarcherProblem<T> {
    type Geometry = SpdManifold;

    fn manifold(&self) -> &SpdManifold {
        &self.manifold
    }

    fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn batch_cost(&self, w: &Point<T>, batch: &[usize]) -> Result<T> {
        check_batch(batch, self.samples.len())?;
        let (_, inv_sqrt) = Self::frame(w)?;
        let mut total = T::zero();
        for &n in batch {
            let m = inv_sqrt.matmul(self.samples[n].matrix()).matmul(&inv_sqrt);
            let eig = sym_eig(&m.symmetrize())?;
            total += eig.eigenvalues.iter().map(|&l| l.ln() * l.ln()).sum::<T>();
        }
        Ok(total / T::from_count(batch.len()))
    }

    /// `−(2/|b|) Σₙ X^{1/2} log(X^{-1/2} Qₙ X^{-1/2}) X^{1/2}`.
    fn batch_grad(&self, w: &Point<T>, batch: &[usize]) -> Result<Tangent<T>> {
        check_batch(batch, self.samples.len())?;
        let (sqrt, inv_sqrt) = Self::frame(w)?;
        let d = self.manifold.dim();
        let mut acc = DenseMatrix::zeros(d, d);
        for &n in batch {
            let m = inv_sqrt.matmul(self.samples[n].matrix()).matmul(&inv_sqrt);
            acc += &spd_fun(&m.symmetrize(), SpdFn::Log)?;
        }
        let g = sqrt.matmul(&acc).matmul(&sqrt).scale(-T::lit(2.0) / T::from_count(batch.len()));
        Ok(self.manifold.tangent_tidy(w, g))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn scalar_problem(values: &[f64]) -> KarcherProblem<f64> {
        let m = SpdManifold::exp_parallel(1);
        KarcherProblem::new(m, values.iter().map(|&v| DenseMatrix::from_diag(&[v])).collect()).unwrap()
    }

    #[test]
    fn scalar_costs_and_gradients() {
        let p = scalar_problem(&[E]);
        let one = p.manifold().point(DenseMatrix::from_diag(&[1.0])).unwrap();
        assert!((p.cost(&one).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.full_grad(&one).unwrap().matrix()[(0, 0)] + 2.0).abs() < 1e-15);
        let q = p.manifold().point(DenseMatrix::from_diag(&[E])).unwrap();
        assert!(p.cost(&q).unwrap().abs() < 1e-30);
        assert!(p.full_grad(&q).unwrap().matrix().max_abs() < 1e-15);

        let two = scalar_problem(&[1.0, E * E]);
        let mid = two.manifold().point(DenseMatrix::from_diag(&[E])).unwrap();
        assert!((two.cost(&mid).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_gradient_is_mean_of_singletons() {
        let m = SpdManifold::exp_parallel(3);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let qs: Vec<DenseMatrix<f64>> =
            (0..7).map(|_| m.random_point::<_>(&mut rng)).map(|p: Point<f64>| p.matrix().clone()).collect();
        let p = KarcherProblem::new(m, qs).unwrap();
        let x: Point<f64> = m.random_point(&mut rng);
        let full = p.full_grad(&x).unwrap();
        let mut mean = DenseMatrix::zeros(3, 3);
        for n in 0..7 {
            mean += p.batch_grad(&x, &[n]).unwrap().matrix();
        }
        assert!((&mean.scale(1.0 / 7.0) - full.matrix()).max_abs() < 1e-13);
        assert!(p.batch_grad(&x, &[]).is_err());
        assert!(p.batch_grad(&x, &[7]).is_err());
    }
}
