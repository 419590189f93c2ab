use rand::Rng;
use rand_distr::{StandardNormal, Uniform};

use crate::error::{Error, Result};
use crate::linalg::{qf, spd_fun, spd_fun_from_eig, sym_eig, DenseMatrix, SpdFn, SPD_FLOOR};
use crate::manifold::{
    GeometryFlavor, Manifold, ManifoldKind, Point, RetractionKind, Tangent, TransportKind,
};
use crate::scalar::Real;

/// `d x d` symmetric positive-definite matrices with the affine-invariant metric
/// `⟨ξ, η⟩_X = trace(ξ X⁻¹ η X⁻¹)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpdManifold {
    d: usize,
    flavor: GeometryFlavor,
}

/// `X^{1/2}` and `X^{-1/2}` of a base point.
struct Frame<T> {
    sqrt: DenseMatrix<T>,
    inv_sqrt: DenseMatrix<T>,
}

impl<T: Real> Frame<T> {
    fn of(x: &Point<T>) -> Result<Self> {
        let eig = x.sym_eig()?;
        Ok(Self { sqrt: spd_fun_from_eig(eig, SpdFn::Sqrt)?, inv_sqrt: spd_fun_from_eig(eig, SpdFn::InvSqrt)? })
    }

    /// `X^{-1/2} m X^{-1/2}`.
    fn whiten(&self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.inv_sqrt.matmul(m).matmul(&self.inv_sqrt).symmetrize()
    }

    /// `X^{1/2} m X^{1/2}`.
    fn color(&self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.sqrt.matmul(m).matmul(&self.sqrt).symmetrize()
    }
}

impl SpdManifold {
    pub fn new(d: usize, flavor: GeometryFlavor) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("SPD dimension must be >= 1".into()));
        }
        if flavor.transport != TransportKind::Parallel || flavor.retraction == RetractionKind::Qr {
            return Err(Error::InvalidArgument(format!("flavor {flavor} is not available on SPD")));
        }
        Ok(Self { d, flavor })
    }

    /// Exponential map and parallel translation.
    pub fn exp_parallel(d: usize) -> Self {
        Self::new(d, GeometryFlavor::EXP_PARALLEL).expect("valid flavor")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// `X^{1/2} exp(X^{-1/2} ξ X^{-1/2}) X^{1/2}`.
    pub fn exp<T: Real>(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        xi.check_base(x)?;
        let f = Frame::of(x)?;
        let inner = spd_fun(&f.whiten(xi.matrix()), SpdFn::Exp)?;
        Ok(Point::new_unchecked(ManifoldKind::Spd, f.color(&inner)))
    }

    /// `X^{1/2} log(X^{-1/2} Y X^{-1/2}) X^{1/2}`.
    pub fn log<T: Real>(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        let f = Frame::of(x)?;
        let inner = spd_fun(&f.whiten(y.matrix()), SpdFn::Log)?;
        Ok(Tangent::new_unchecked(x.clone(), f.color(&inner)))
    }

    /// `X + ξ + ½ ξ X⁻¹ ξ`, SPD for every symmetric `ξ`.
    pub fn retract_second_order<T: Real>(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        xi.check_base(x)?;
        let f = Frame::of(x)?;
        let b = f.inv_sqrt.matmul(xi.matrix());
        let quad = b.t_matmul(&b);
        let mut z = x.matrix() + xi.matrix();
        z.axpy(T::lit(0.5), &quad);
        Ok(Point::new_unchecked(ManifoldKind::Spd, z.symmetrize()))
    }

    /// Inverse of [`retract_second_order`](Self::retract_second_order):
    /// `ξ = X^{1/2} ((2 X^{-1/2} Z X^{-1/2} − I)^{1/2} − I) X^{1/2}`.
    pub fn inverse_retract_second_order<T: Real>(
        &self,
        x: &Point<T>,
        z: &Point<T>,
    ) -> Result<Tangent<T>> {
        let f = Frame::of(x)?;
        let mut m = f.whiten(z.matrix()).scale(T::lit(2.0));
        for i in 0..self.d {
            m[(i, i)] -= T::one();
        }
        let mut root = spd_fun(&m, SpdFn::Sqrt).map_err(|e| match e {
            Error::NotSpd { min_eig } => Error::OutOfDomain(format!(
                "2 X^-1/2 Z X^-1/2 - I is not positive definite (min eigenvalue {min_eig:e})"
            )),
            other => other,
        })?;
        for i in 0..self.d {
            root[(i, i)] -= T::one();
        }
        Ok(Tangent::new_unchecked(x.clone(), f.color(&root)))
    }

    /// Parallel translation of `xi` along the geodesic with initial velocity `eta`.
    pub fn parallel<T: Real>(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        xi: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        let dest = self.exp(x, eta)?;
        let e = self.parallel_factor(x, eta.matrix(), false)?;
        Ok(Tangent::new_unchecked(dest, e.matmul(xi.matrix()).matmul_t(&e).symmetrize()))
    }

    /// `E = X^{1/2} exp(S/2) X^{-1/2}` with `S = X^{-1/2} η X^{-1/2}`; parallel translation is
    /// `ξ ↦ E ξ Eᵀ`. With `inverse` set, returns `E⁻¹`.
    fn parallel_factor<T: Real>(
        &self,
        x: &Point<T>,
        eta: &DenseMatrix<T>,
        inverse: bool,
    ) -> Result<DenseMatrix<T>> {
        let f = Frame::of(x)?;
        let half = f.whiten(eta).scale(T::lit(if inverse { -0.5 } else { 0.5 }));
        let y = spd_fun(&half, SpdFn::Exp)?;
        Ok(f.sqrt.matmul(&y).matmul(&f.inv_sqrt))
    }

    /// Initial velocity of the geodesic from `x` to `dest`.
    fn geodesic_direction<T: Real>(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<DenseMatrix<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => Ok(eta.matrix().clone()),
            _ => Ok(self.log(x, dest)?.into_matrix()),
        }
    }
}

impl<T: Real> Manifold<T> for SpdManifold {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Spd
    }

    fn flavor(&self) -> GeometryFlavor {
        self.flavor
    }

    fn shape(&self) -> (usize, usize) {
        (self.d, self.d)
    }

    fn check_point(&self, m: &DenseMatrix<T>) -> Result<()> {
        let eig = sym_eig(m)?;
        if eig.min_eigenvalue() <= T::lit(SPD_FLOOR) {
            return Err(Error::NotSpd { min_eig: eig.min_eigenvalue().to_f64_lossy() });
        }
        Ok(())
    }

    fn check_tangent(&self, _x: &Point<T>, m: &DenseMatrix<T>) -> Result<()> {
        let asym = m.asymmetry();
        if asym > T::lit(1e-8) * m.norm_inf().max(T::one()) {
            return Err(Error::NotSymmetric { asymmetry: asym.to_f64_lossy() });
        }
        Ok(())
    }

    fn tidy(&self, _x: &Point<T>, m: DenseMatrix<T>) -> DenseMatrix<T> {
        m.symmetrize()
    }

    fn inner(&self, x: &Point<T>, a: &Tangent<T>, b: &Tangent<T>) -> Result<T> {
        a.check_base(x)?;
        b.check_base(x)?;
        let f = Frame::of(x)?;
        Ok(f.whiten(a.matrix()).frob_dot(&f.whiten(b.matrix())))
    }

    fn retract(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => self.exp(x, xi),
            _ => self.retract_second_order(x, xi),
        }
    }

    fn inverse_retract(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => self.log(x, y),
            _ => self.inverse_retract_second_order(x, y),
        }
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
        let dir = self.geodesic_direction(x, eta, dest)?;
        let e = self.parallel_factor(x, &dir, false)?;
        Ok(Tangent::new_unchecked(dest.clone(), e.matmul(xi.matrix()).matmul_t(&e).symmetrize()))
    }

    fn inverse_transport(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        zeta: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        let dir = self.geodesic_direction(x, eta, zeta.base())?;
        let e_inv = self.parallel_factor(x, &dir, true)?;
        Ok(Tangent::new_unchecked(
            x.clone(),
            e_inv.matmul(zeta.matrix()).matmul_t(&e_inv).symmetrize(),
        ))
    }

    fn retraction_velocity(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        match self.flavor.retraction {
            RetractionKind::Exponential => self.transport_to(x, eta, eta, dest),
            _ => {
                // d/dt (X + tη + ½t² η X⁻¹ η) at t = 1
                let f = Frame::of(x)?;
                let b = f.inv_sqrt.matmul(eta.matrix());
                let v = eta.matrix() + &b.t_matmul(&b);
                Ok(Tangent::new_unchecked(dest.clone(), v.symmetrize()))
            }
        }
    }

    /// `‖log(X^{-1/2} Y X^{-1/2})‖_F`.
    fn dist(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        let f = Frame::of(x)?;
        let eig = sym_eig(&f.whiten(y.matrix()))?;
        if eig.min_eigenvalue() <= T::lit(SPD_FLOOR) {
            return Err(Error::NotSpd { min_eig: eig.min_eigenvalue().to_f64_lossy() });
        }
        Ok(eig.eigenvalues.iter().map(|&l| l.ln() * l.ln()).sum::<T>().sqrt())
    }

    /// Random rotation times a spectrum with `log` eigenvalues uniform in `[-1, 1]`.
    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        let g = DenseMatrix::from_fn(self.d, self.d, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        let q = qf(&g).expect("gaussian matrix has full rank");
        let spread = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
        let diag: Vec<T> = (0..self.d).map(|_| T::lit(rng.sample(spread)).exp()).collect();
        let m = q.scale_columns(&diag).matmul_t(&q).symmetrize();
        Point::new_unchecked(ManifoldKind::Spd, m)
    }

    fn random_tangent<R: Rng + ?Sized>(&self, x: &Point<T>, rng: &mut R) -> Tangent<T> {
        let g = DenseMatrix::from_fn(self.d, self.d, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        })
        .symmetrize();
        let t = Tangent::new_unchecked(x.clone(), g);
        let n = self.norm(x, &t).expect("random tangent is at x");
        t.scale(T::one() / n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar(m: &SpdManifold, v: f64) -> Point<f64> {
        m.point(DenseMatrix::from_diag(&[v])).unwrap()
    }

    fn tan(x: &Point<f64>, v: f64) -> Tangent<f64> {
        Tangent::new_unchecked(x.clone(), DenseMatrix::from_diag(&[v]))
    }

    #[test]
    fn scalar_closed_forms() {
        let m = SpdManifold::exp_parallel(1);
        let two = scalar(&m, 2.0);
        // 2 · (1/2) · 2 · (1/2) = 1
        assert!((m.inner(&two, &tan(&two, 2.0), &tan(&two, 2.0)).unwrap() - 1.0).abs() < 1e-15);

        let four = scalar(&m, 4.0);
        let e = m.exp(&four, &tan(&four, 2.0)).unwrap();
        assert!((e.matrix()[(0, 0)] - 4.0 * 0.5f64.exp()).abs() < 1e-13);

        let one = scalar(&m, 1.0);
        let euler = scalar(&m, std::f64::consts::E);
        assert!((m.log(&one, &euler).unwrap().matrix()[(0, 0)] - 1.0).abs() < 1e-15);
        assert!((m.dist(&one, &euler).unwrap() - 1.0).abs() < 1e-15);

        // Y = e^{2/2}, result Y · 3 · Y
        let p = m.parallel(&one, &tan(&one, 2.0), &tan(&one, 3.0)).unwrap();
        assert!((p.matrix()[(0, 0)] - 3.0 * 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn second_order_scalar_pair() {
        let m = SpdManifold::new(1, GeometryFlavor::SECOND_ORDER_PARALLEL).unwrap();
        let four = scalar(&m, 4.0);
        let z = m.retract_second_order(&four, &tan(&four, 2.0)).unwrap();
        assert!((z.matrix()[(0, 0)] - 6.5).abs() < 1e-14);
        let back = m.inverse_retract_second_order(&four, &z).unwrap();
        assert!((back.matrix()[(0, 0)] - 2.0).abs() < 1e-13);
        let zero = m.inverse_retract_second_order(&four, &four).unwrap();
        assert!(zero.matrix().max_abs() < 1e-14);
        // 2·(1/4)·1 − 1 < 0: no tangent reaches Z = 1 from X = 4
        let one = scalar(&m, 1.0);
        assert!(matches!(
            m.inverse_retract_second_order(&four, &one),
            Err(Error::OutOfDomain(_))
        ));
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = SpdManifold::exp_parallel(2);
        let indefinite = DenseMatrix::from_diag(&[1.0f64, -0.5]);
        assert!(matches!(m.point(indefinite), Err(Error::NotSpd { .. })));
        assert!(SpdManifold::new(2, GeometryFlavor::QR_PROJECTION).is_err());
        let x: Point<f64> = m.point(DenseMatrix::identity(2)).unwrap();
        let skew = DenseMatrix::from_rows(&[&[0.0, 1.0], &[-1.0, 0.0]]).unwrap();
        assert!(matches!(m.tangent(&x, skew), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn identity_base_reduces_to_plain_trace() {
        let m = SpdManifold::exp_parallel(3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x: Point<f64> = m.point(DenseMatrix::identity(3)).unwrap();
        let a = m.random_tangent(&x, &mut rng);
        let b = m.random_tangent(&x, &mut rng);
        let expect = a.matrix().matmul(b.matrix()).trace();
        assert!((m.inner(&x, &a, &b).unwrap() - expect).abs() < 1e-14);
        let e = m.exp(&x, &a).unwrap();
        let direct = spd_fun(a.matrix(), SpdFn::Exp).unwrap();
        assert!((e.matrix() - &direct).max_abs() < 1e-13);
    }
}
