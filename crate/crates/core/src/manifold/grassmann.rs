use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{qf, solve, solve_right, thin_qr, thin_svd, DenseMatrix};
use crate::manifold::{
    GeometryFlavor, Manifold, ManifoldKind, Point, RetractionKind, Tangent, TransportKind,
};
use crate::scalar::Real;

/// Smallest singular value of `UᵀY` accepted when inverting it in the logarithm.
pub const INV_TOL: f64 = 1e-10;

/// Largest principal angle (radians) at which the inverse projection transport is still solved.
pub const NEAR_SINGULAR_ANGLE: f64 = 1.5;

const MEMBERSHIP_TOL: f64 = 1e-9;

/// Grassmann manifold `Gr(r, d)` of `r`-dimensional subspaces of `ℝᵈ`, represented by
/// orthonormal `d x r` matrices modulo right rotation. Tangents are horizontal lifts
/// (`Uᵀξ = 0`) with the Euclidean inner product.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GrassmannManifold {
    d: usize,
    r: usize,
    flavor: GeometryFlavor,
}

/// The geodesic `t ↦ U V cos(tΣ) Vᵀ + W sin(tΣ) Vᵀ` with `η = W Σ Vᵀ`, viewed at `t = 1` as a
/// rotation `Q` of `ℝᵈ` acting in the planes spanned by the pairs `(UVᵢ, Wᵢ)`.
///
/// `Q U` is the endpoint, and `Q` restricted to horizontal vectors is parallel translation.
#[derive(Clone, Debug)]
pub struct GrassmannGeodesic<T> {
    a: DenseMatrix<T>,
    b: DenseMatrix<T>,
    v: DenseMatrix<T>,
    sigma: Vec<T>,
    cos: Vec<T>,
    sin: Vec<T>,
}

impl<T: Real> GrassmannGeodesic<T> {
    pub fn new(u: &DenseMatrix<T>, eta: &DenseMatrix<T>) -> Result<Self> {
        let svd = thin_svd(eta)?;
        let cos = svd.sigma.iter().map(|s| s.cos()).collect();
        let sin = svd.sigma.iter().map(|s| s.sin()).collect();
        Ok(Self { a: u.matmul(&svd.v), b: svd.u, v: svd.v, sigma: svd.sigma, cos, sin })
    }

    /// `Q m`, or `Qᵀ m` when `transpose` is set, without forming the `d x d` rotation.
    fn rotate(&self, m: &DenseMatrix<T>, transpose: bool) -> DenseMatrix<T> {
        let at = self.a.t_matmul(m);
        let bt = self.b.t_matmul(m);
        let k = self.sigma.len();
        let sign = if transpose { -T::one() } else { T::one() };
        let mut ca = at.clone();
        let mut cb = bt.clone();
        for i in 0..k {
            let c1 = self.cos[i] - T::one();
            let s = self.sin[i] * sign;
            for j in 0..m.cols() {
                // a-coefficient: (C−I)·Aᵀm − S·Bᵀm ; b-coefficient: (C−I)·Bᵀm + S·Aᵀm
                ca[(i, j)] = c1 * at[(i, j)] - s * bt[(i, j)];
                cb[(i, j)] = c1 * bt[(i, j)] + s * at[(i, j)];
            }
        }
        let mut out = m.clone();
        out += &self.a.matmul(&ca);
        out += &self.b.matmul(&cb);
        out
    }

    /// `U(1) = U V cos Σ Vᵀ + W sin Σ Vᵀ`.
    pub fn endpoint(&self) -> DenseMatrix<T> {
        self.a.scale_columns(&self.cos).matmul_t(&self.v)
            + self.b.scale_columns(&self.sin).matmul_t(&self.v)
    }

    /// `U'(1) = −U V sin Σ Σ Vᵀ + W cos Σ Σ Vᵀ`.
    pub fn end_velocity(&self) -> DenseMatrix<T> {
        let ss: Vec<T> = self.sin.iter().zip(&self.sigma).map(|(&s, &g)| -s * g).collect();
        let cs: Vec<T> = self.cos.iter().zip(&self.sigma).map(|(&c, &g)| c * g).collect();
        self.a.scale_columns(&ss).matmul_t(&self.v) + self.b.scale_columns(&cs).matmul_t(&self.v)
    }

    /// Parallel translation of a horizontal lift at `U` to the endpoint.
    pub fn transport(&self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.rotate(m, false)
    }

    /// Parallel translation of a horizontal lift at the endpoint back to `U`.
    pub fn inverse_transport(&self, m: &DenseMatrix<T>) -> DenseMatrix<T> {
        self.rotate(m, true)
    }
}

impl GrassmannManifold {
    pub fn new(d: usize, r: usize, flavor: GeometryFlavor) -> Result<Self> {
        if r == 0 || r > d {
            return Err(Error::InvalidArgument(format!("Grassmann needs 1 <= r <= d, got r={r}, d={d}")));
        }
        if flavor.retraction == RetractionKind::SecondOrder {
            return Err(Error::InvalidArgument(format!("flavor {flavor} is not available on Grassmann")));
        }
        Ok(Self { d, r, flavor })
    }

    /// QR retraction with projection transport.
    pub fn qr_projection(d: usize, r: usize) -> Result<Self> {
        Self::new(d, r, GeometryFlavor::QR_PROJECTION)
    }

    /// Exponential map with parallel translation.
    pub fn exp_parallel(d: usize, r: usize) -> Result<Self> {
        Self::new(d, r, GeometryFlavor::EXP_PARALLEL)
    }

    pub fn ambient_dim(&self) -> usize {
        self.d
    }

    pub fn rank(&self) -> usize {
        self.r
    }

    /// `(I − UUᵀ) G`.
    pub fn project<T: Real>(&self, x: &Point<T>, g: &DenseMatrix<T>) -> Result<Tangent<T>> {
        g.ensure_shape((self.d, self.r))?;
        Ok(Tangent::new_unchecked(x.clone(), horizontal(x.matrix(), g)))
    }

    pub fn exp<T: Real>(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        xi.check_base(x)?;
        let geo = GrassmannGeodesic::new(x.matrix(), xi.matrix())?;
        Ok(Point::new_unchecked(ManifoldKind::Grassmann, reorthonormalize(geo.endpoint())))
    }

    /// `W atan(Σ) Vᵀ` from the SVD of `(Y − UUᵀY)(UᵀY)⁻¹`.
    pub fn log<T: Real>(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        let u = x.matrix();
        let uty = u.t_matmul(y.matrix());
        let smin = min_singular_value(&uty)?;
        if smin <= T::lit(INV_TOL) {
            return Err(Error::OutOfDomain(format!(
                "subspaces are orthogonal (smallest cosine {:e})",
                smin.to_f64_lossy()
            )));
        }
        let perp = y.matrix() - &u.matmul(&uty);
        let m = solve_right(&perp, &uty)?;
        let svd = thin_svd(&m)?;
        let atan: Vec<T> = svd.sigma.iter().map(|s| s.atan()).collect();
        let xi = svd.u.scale_columns(&atan).matmul_t(&svd.v);
        Ok(Tangent::new_unchecked(x.clone(), horizontal(u, &xi)))
    }

    /// `qf(U + ξ)`.
    pub fn retract_qr<T: Real>(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        xi.check_base(x)?;
        Ok(Point::new_unchecked(ManifoldKind::Grassmann, qf(&(x.matrix() + xi.matrix()))?))
    }

    /// Exact inverse of [`retract_qr`](Self::retract_qr): `ξ = Y (UᵀY)⁻¹ − U`, the unique
    /// horizontal `ξ` with `span(U + ξ) = span(Y)`.
    pub fn inverse_retract_qr<T: Real>(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        let u = x.matrix();
        let uty = u.t_matmul(y.matrix());
        let smin = min_singular_value(&uty)?;
        if smin <= T::lit(INV_TOL) {
            return Err(Error::OutOfDomain(format!(
                "subspaces are orthogonal (smallest cosine {:e})",
                smin.to_f64_lossy()
            )));
        }
        let m = solve_right(y.matrix(), &uty)? - u.clone();
        Ok(Tangent::new_unchecked(x.clone(), horizontal(u, &m)))
    }

    /// Parallel translation of `zeta` along the geodesic with initial velocity `eta`.
    pub fn parallel<T: Real>(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        zeta: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        zeta.check_base(x)?;
        let geo = GrassmannGeodesic::new(x.matrix(), eta.matrix())?;
        let dest = Point::new_unchecked(ManifoldKind::Grassmann, reorthonormalize(geo.endpoint()));
        let moved = geo.transport(zeta.matrix());
        Ok(Tangent::new_unchecked(dest.clone(), horizontal(dest.matrix(), &moved)))
    }

    /// `(I − VVᵀ) ξ` with `V` the destination.
    pub fn transport_projection<T: Real>(&self, xi: &Tangent<T>, dest: &Point<T>) -> Tangent<T> {
        Tangent::new_unchecked(dest.clone(), horizontal(dest.matrix(), xi.matrix()))
    }

    /// The horizontal `ξ` at `U` with `(I − VVᵀ) ξ = ζ`, where `V` is the base of `zeta`:
    /// `ξ = ζ − V (UᵀV)⁻¹ Uᵀ ζ`.
    pub fn inverse_transport_projection<T: Real>(
        &self,
        x: &Point<T>,
        zeta: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        let u = x.matrix();
        let v = zeta.base().matrix();
        let utv = u.t_matmul(v);
        let smin = min_singular_value(&utv)?;
        let angle = smin.min(T::one()).acos();
        if angle >= T::lit(NEAR_SINGULAR_ANGLE) {
            return Err(Error::NearSingular { angle: angle.to_f64_lossy() });
        }
        let coeff = solve(&utv, &u.t_matmul(zeta.matrix()))?;
        let xi = zeta.matrix() - &v.matmul(&coeff);
        Ok(Tangent::new_unchecked(x.clone(), horizontal(u, &xi)))
    }

    /// Principal angles between the subspaces, ascending.
    pub fn principal_angles<T: Real>(&self, x: &Point<T>, y: &Point<T>) -> Result<Vec<T>> {
        let u = x.matrix();
        let uty = u.t_matmul(y.matrix());
        let cos = thin_svd(&uty)?.sigma;
        let perp = y.matrix() - &u.matmul(&uty);
        let mut sin = thin_svd(&perp)?.sigma;
        sin.reverse();
        // Pair the largest cosine with the smallest sine; atan2 stays accurate at both ends.
        Ok(cos.iter().zip(&sin).map(|(&c, &s)| s.atan2(c)).collect())
    }

    /// Initial velocity of the geodesic from `x` to `dest` used by parallel transport.
    fn geodesic<T: Real>(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<GrassmannGeodesic<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => GrassmannGeodesic::new(x.matrix(), eta.matrix()),
            _ => GrassmannGeodesic::new(x.matrix(), self.log(x, dest)?.matrix()),
        }
    }
}

/// `(I − UUᵀ) m`.
fn horizontal<T: Real>(u: &DenseMatrix<T>, m: &DenseMatrix<T>) -> DenseMatrix<T> {
    m - &u.matmul(&u.t_matmul(m))
}

/// Rotation taking the representative `from` of a subspace to the representative `to`.
/// Horizontal lifts transform as `ξ ↦ ξ O` with `O = fromᵀ to`.
fn align<T: Real>(lift: &DenseMatrix<T>, from: &DenseMatrix<T>, to: &DenseMatrix<T>) -> DenseMatrix<T> {
    if from == to {
        return lift.clone();
    }
    lift.matmul(&from.t_matmul(to))
}

/// Removes the rounding drift of a nearly orthonormal matrix without changing its span.
fn reorthonormalize<T: Real>(m: DenseMatrix<T>) -> DenseMatrix<T> {
    let dev = (&m.t_matmul(&m) - &DenseMatrix::identity(m.cols())).max_abs();
    if dev <= T::lit(1e-14) {
        return m;
    }
    qf(&m).unwrap_or(m)
}

fn min_singular_value<T: Real>(m: &DenseMatrix<T>) -> Result<T> {
    let s = thin_svd(m)?.sigma;
    Ok(s.last().copied().unwrap_or(T::zero()))
}

impl<T: Real> Manifold<T> for GrassmannManifold {
    fn kind(&self) -> ManifoldKind {
        ManifoldKind::Grassmann
    }

    fn flavor(&self) -> GeometryFlavor {
        self.flavor
    }

    fn shape(&self) -> (usize, usize) {
        (self.d, self.r)
    }

    fn check_point(&self, m: &DenseMatrix<T>) -> Result<()> {
        let residual = (&m.t_matmul(m) - &DenseMatrix::identity(self.r)).max_abs();
        if residual > T::lit(MEMBERSHIP_TOL) {
            return Err(Error::NotOrthonormal { residual: residual.to_f64_lossy() });
        }
        Ok(())
    }

    fn check_tangent(&self, x: &Point<T>, m: &DenseMatrix<T>) -> Result<()> {
        let residual = x.matrix().t_matmul(m).max_abs();
        if residual > T::lit(MEMBERSHIP_TOL) * m.frob_norm().max(T::one()) {
            return Err(Error::NotHorizontal { residual: residual.to_f64_lossy() });
        }
        Ok(())
    }

    fn tidy(&self, x: &Point<T>, m: DenseMatrix<T>) -> DenseMatrix<T> {
        horizontal(x.matrix(), &m)
    }

    fn inner(&self, x: &Point<T>, a: &Tangent<T>, b: &Tangent<T>) -> Result<T> {
        a.check_base(x)?;
        b.check_base(x)?;
        Ok(a.matrix().frob_dot(b.matrix()))
    }

    fn retract(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => self.exp(x, xi),
            _ => self.retract_qr(x, xi),
        }
    }

    fn inverse_retract(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>> {
        match self.flavor.retraction {
            RetractionKind::Exponential => self.log(x, y),
            _ => self.inverse_retract_qr(x, y),
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
        match self.flavor.transport {
            TransportKind::Projection => Ok(self.transport_projection(xi, dest)),
            TransportKind::Parallel => {
                let geo = self.geodesic(x, eta, dest)?;
                let moved = align(&geo.transport(xi.matrix()), &geo.endpoint(), dest.matrix());
                Ok(Tangent::new_unchecked(dest.clone(), horizontal(dest.matrix(), &moved)))
            }
        }
    }

    fn inverse_transport(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        zeta: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        match self.flavor.transport {
            TransportKind::Projection => self.inverse_transport_projection(x, zeta),
            TransportKind::Parallel => {
                let dest = zeta.base();
                let geo = self.geodesic(x, eta, dest)?;
                let lift = align(zeta.matrix(), dest.matrix(), &geo.endpoint());
                let back = geo.inverse_transport(&lift);
                Ok(Tangent::new_unchecked(x.clone(), horizontal(x.matrix(), &back)))
            }
        }
    }

    fn retraction_velocity(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<Tangent<T>> {
        eta.check_base(x)?;
        let v = match self.flavor.retraction {
            RetractionKind::Exponential => {
                let geo = GrassmannGeodesic::new(x.matrix(), eta.matrix())?;
                align(&geo.end_velocity(), &geo.endpoint(), dest.matrix())
            }
            _ => {
                // U + η = V R; the horizontal part of D qf(U + η)[η] is (I − VVᵀ) η R⁻¹.
                let (v, r) = thin_qr(&(x.matrix() + eta.matrix()))?;
                let lift = solve_right(&horizontal(&v, eta.matrix()), &r)?;
                align(&lift, &v, dest.matrix())
            }
        };
        Ok(Tangent::new_unchecked(dest.clone(), horizontal(dest.matrix(), &v)))
    }

    /// Root sum of squared principal angles.
    fn dist(&self, x: &Point<T>, y: &Point<T>) -> Result<T> {
        Ok(self.principal_angles(x, y)?.iter().map(|&t| t * t).sum::<T>().sqrt())
    }

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        let g = DenseMatrix::from_fn(self.d, self.r, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        Point::new_unchecked(ManifoldKind::Grassmann, qf(&g).expect("gaussian matrix has full rank"))
    }

    fn random_tangent<R: Rng + ?Sized>(&self, x: &Point<T>, rng: &mut R) -> Tangent<T> {
        let g = DenseMatrix::from_fn(self.d, self.r, |_, _| {
            T::lit(rng.sample::<f64, _>(StandardNormal))
        });
        let h = horizontal(x.matrix(), &g);
        let n = h.frob_norm();
        Tangent::new_unchecked(x.clone(), h.scale(T::one() / n))
    }
}
