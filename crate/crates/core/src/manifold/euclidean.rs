use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::linalg::DenseMatrix;
use crate::manifold::{GeometryFlavor, Manifold, ManifoldKind, Point, Tangent};
use crate::scalar::Real;

/// Flat space of `rows x cols` matrices: identity retraction (`x + ξ`) and identity transport.
///
/// Serves as the reference geometry against which the Riemannian machinery is checked.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Euclidean {
    rows: usize,
    cols: usize,
}

impl Euclidean {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "empty Euclidean space");
        Self { rows, cols }
    }

    /// Column vectors of length `n`.
    pub fn vectors(n: usize) -> Self {
        Self::new(n, 1)
    }
}

impl<T: Real> Manifold<T> for Euclidean {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Euclidean
    }

    fn flavor(&self) -> GeometryFlavor {
        GeometryFlavor::EXP_PARALLEL
    }

    fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn check_point(&self, _m: &DenseMatrix<T>) -> Result<()> {
        Ok(())
    }

    fn check_tangent(&self, _x: &Point<T>, _m: &DenseMatrix<T>) -> Result<()> {
        Ok(())
    }

    fn tidy(&self, _x: &Point<T>, m: DenseMatrix<T>) -> DenseMatrix<T> {
        m
    }

    fn inner(&self, x: &Point<T>, a: &Tangent<T>, b: &Tangent<T>) -> Result<T> {
        a.check_base(x)?;
        b.check_base(x)?;
        Ok(a.matrix().frob_dot(b.matrix()))
    }

    fn retract(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        xi.check_base(x)?;
        Ok(Point::new_unchecked(ManifoldKind::Euclidean, x.matrix() + xi.matrix()))
    }

    fn inverse_retract(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        Ok(Tangent::new_unchecked(x.clone(), y.matrix() - x.matrix()))
    }

    fn transport_to(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        xi: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        xi.check_base(x)?;
        Ok(Tangent::new_unchecked(dest.clone(), xi.matrix().clone()))
    }

    fn inverse_transport(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        zeta: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        Ok(Tangent::new_unchecked(x.clone(), zeta.matrix().clone()))
    }

    fn retraction_velocity(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        Ok(Tangent::new_unchecked(dest.clone(), eta.matrix().clone()))
    }

    fn dist(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        Ok((x.matrix() - y.matrix()).frob_norm())
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        let m = DenseMatrix::from_fn(self.rows, self.cols, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        Point::new_unchecked(ManifoldKind::Euclidean, m)
    }

    fn random_tangent<R: Rng + ?Sized>(&self, x: &Point<T>, rng: &mut R) -> Tangent<T> {
        let m = DenseMatrix::from_fn(self.rows, self.cols, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        let n = m.frob_norm();
        Tangent::new_unchecked(x.clone(), m.scale(T::one() / n))
    }
}
