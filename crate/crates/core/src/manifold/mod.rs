//! Geometry contract consumed by the optimizers: metric, retraction and its inverse,
//! vector transport and its inverse, and the retraction speed ratio `κ`.
//!
//! Points are immutable and cheap to clone (`Arc`-backed). A [`Tangent`] always carries the
//! point it is attached to, so combining vectors from different tangent spaces is caught as
//! [`Error::BasePointMismatch`] instead of silently producing garbage.

mod euclidean;
mod grassmann;
mod spd;

use std::fmt;
use std::sync::{Arc, OnceLock};

use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{sym_eig, DenseMatrix, SymEig};
use crate::scalar::Real;

pub use euclidean::Euclidean;
pub use grassmann::{GrassmannGeodesic, GrassmannManifold, INV_TOL, NEAR_SINGULAR_ANGLE};
pub use spd::SpdManifold;

/// Which geometry a point belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ManifoldKind {
    Euclidean,
    Spd,
    Grassmann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RetractionKind {
    /// Follows geodesics exactly.
    Exponential,
    /// `X + ξ + ½ ξ X⁻¹ ξ` on the SPD manifold.
    SecondOrder,
    /// `qf(U + ξ)` on the Grassmann manifold.
    Qr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransportKind {
    /// Parallel translation along the geodesic to the retracted point (isometric).
    Parallel,
    /// Orthogonal projection onto the destination horizontal space (Grassmann only).
    Projection,
}

/// Retraction/transport pair used by a manifold instance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GeometryFlavor {
    pub retraction: RetractionKind,
    pub transport: TransportKind,
}

impl GeometryFlavor {
    pub const EXP_PARALLEL: Self =
        Self { retraction: RetractionKind::Exponential, transport: TransportKind::Parallel };
    pub const SECOND_ORDER_PARALLEL: Self =
        Self { retraction: RetractionKind::SecondOrder, transport: TransportKind::Parallel };
    pub const QR_PROJECTION: Self =
        Self { retraction: RetractionKind::Qr, transport: TransportKind::Projection };

    pub fn is_exponential(&self) -> bool {
        self.retraction == RetractionKind::Exponential
    }

    pub fn is_isometric(&self) -> bool {
        self.transport == TransportKind::Parallel
    }
}

impl fmt::Display for GeometryFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}/{:?}", self.retraction, self.transport)
    }
}

struct PointData<T> {
    kind: ManifoldKind,
    matrix: DenseMatrix<T>,
    eig: OnceLock<SymEig<T>>,
}

/// A point on a manifold, represented by a dense matrix.
#[derive(Clone)]
pub struct Point<T> {
    data: Arc<PointData<T>>,
}

impl<T: Real> Point<T> {
    pub(crate) fn new_unchecked(kind: ManifoldKind, matrix: DenseMatrix<T>) -> Self {
        Self { data: Arc::new(PointData { kind, matrix, eig: OnceLock::new() }) }
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.data.matrix
    }

    #[inline]
    pub fn kind(&self) -> ManifoldKind {
        self.data.kind
    }

    /// True when both handles denote the same stored matrix (same allocation or equal entries).
    pub fn same_point(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.data.kind == other.data.kind && self.data.matrix == other.data.matrix)
    }

    /// Cached symmetric eigendecomposition of the point matrix.
    pub(crate) fn sym_eig(&self) -> Result<&SymEig<T>> {
        if let Some(e) = self.data.eig.get() {
            return Ok(e);
        }
        let e = sym_eig(&self.data.matrix)?;
        Ok(self.data.eig.get_or_init(|| e))
    }
}

impl<T: fmt::Debug> fmt::Debug for Point<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Point<{:?}>({:?})", self.data.kind, self.data.matrix)
    }
}

/// A tangent vector together with its base point.
#[derive(Clone)]
pub struct Tangent<T> {
    matrix: DenseMatrix<T>,
    base: Point<T>,
}

impl<T: Real> Tangent<T> {
    pub(crate) fn new_unchecked(base: Point<T>, matrix: DenseMatrix<T>) -> Self {
        Self { matrix, base }
    }

    #[inline]
    pub fn matrix(&self) -> &DenseMatrix<T> {
        &self.matrix
    }

    #[inline]
    pub fn base(&self) -> &Point<T> {
        &self.base
    }

    pub fn into_matrix(self) -> DenseMatrix<T> {
        self.matrix
    }

    /// Same matrix attached to `base`; callers guarantee `base` denotes the same point.
    pub(crate) fn reattach(&self, base: &Point<T>) -> Self {
        Self { matrix: self.matrix.clone(), base: base.clone() }
    }

    pub fn check_base(&self, x: &Point<T>) -> Result<()> {
        if self.base.same_point(x) {
            Ok(())
        } else {
            Err(Error::BasePointMismatch)
        }
    }

    pub fn scale(&self, s: T) -> Self {
        Self { matrix: self.matrix.scale(s), base: self.base.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        other.check_base(&self.base)?;
        Ok(Self { matrix: &self.matrix + &other.matrix, base: self.base.clone() })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        other.check_base(&self.base)?;
        Ok(Self { matrix: &self.matrix - &other.matrix, base: self.base.clone() })
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: T, x: &Self) -> Result<()> {
        x.check_base(&self.base)?;
        self.matrix.axpy(a, &x.matrix);
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.as_slice().iter().all(|v| *v == T::zero())
    }
}

impl<T: fmt::Debug> fmt::Debug for Tangent<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tangent({:?})", self.matrix)
    }
}

/// Riemannian geometry used by the optimizers.
///
/// Implementors supply the metric, retraction, transport and their inverses. `transport_to`
/// receives the destination point explicitly so callers that already hold `R_x(η)` get a
/// tangent attached to that exact handle.
pub trait Manifold<T: Real>: Send + Sync {
    fn kind(&self) -> ManifoldKind;

    fn flavor(&self) -> GeometryFlavor;

    /// Shape of the matrices representing points and tangents.
    fn shape(&self) -> (usize, usize);

    /// Membership test for a point matrix.
    fn check_point(&self, m: &DenseMatrix<T>) -> Result<()>;

    /// Structural test for a tangent matrix at `x`.
    fn check_tangent(&self, x: &Point<T>, m: &DenseMatrix<T>) -> Result<()>;

    /// Re-imposes the tangent-space structure lost to rounding.
    fn tidy(&self, x: &Point<T>, m: DenseMatrix<T>) -> DenseMatrix<T>;

    fn inner(&self, x: &Point<T>, a: &Tangent<T>, b: &Tangent<T>) -> Result<T>;

    fn retract(&self, x: &Point<T>, xi: &Tangent<T>) -> Result<Point<T>>;

    /// Tangent `η` at `x` with `retract(x, η) = y`.
    fn inverse_retract(&self, x: &Point<T>, y: &Point<T>) -> Result<Tangent<T>>;

    /// Transport of `xi` along `eta`; `dest` must be `retract(x, eta)`.
    fn transport_to(
        &self,
        x: &Point<T>,
        eta: &Tangent<T>,
        xi: &Tangent<T>,
        dest: &Point<T>,
    ) -> Result<Tangent<T>>;

    /// Inverse of `transport_to`; the destination is the base point of `zeta`.
    fn inverse_transport(&self, x: &Point<T>, eta: &Tangent<T>, zeta: &Tangent<T>)
        -> Result<Tangent<T>>;

    /// Velocity `d/dt R_x(t η)` at `t = 1`, attached to `dest = retract(x, eta)`.
    fn retraction_velocity(&self, x: &Point<T>, eta: &Tangent<T>, dest: &Point<T>)
        -> Result<Tangent<T>>;

    /// Riemannian distance.
    fn dist(&self, x: &Point<T>, y: &Point<T>) -> Result<T>;

    fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T>;

    /// Random unit-norm tangent at `x`.
    fn random_tangent<R: Rng + ?Sized>(&self, x: &Point<T>, rng: &mut R) -> Tangent<T>;

    /// Validates and wraps a point matrix.
    fn point(&self, m: DenseMatrix<T>) -> Result<Point<T>> {
        m.ensure_shape(self.shape())?;
        m.ensure_finite()?;
        self.check_point(&m)?;
        Ok(Point::new_unchecked(self.kind(), m))
    }

    /// Validates and wraps a tangent matrix at `x`.
    fn tangent(&self, x: &Point<T>, m: DenseMatrix<T>) -> Result<Tangent<T>> {
        m.ensure_shape(self.shape())?;
        m.ensure_finite()?;
        self.check_tangent(x, &m)?;
        Ok(Tangent::new_unchecked(x.clone(), m))
    }

    /// Wraps `m` after re-imposing tangent structure; no validation.
    fn tangent_tidy(&self, x: &Point<T>, m: DenseMatrix<T>) -> Tangent<T> {
        Tangent::new_unchecked(x.clone(), self.tidy(x, m))
    }

    fn zero_tangent(&self, x: &Point<T>) -> Tangent<T> {
        let (r, c) = self.shape();
        Tangent::new_unchecked(x.clone(), DenseMatrix::zeros(r, c))
    }

    fn norm(&self, x: &Point<T>, a: &Tangent<T>) -> Result<T> {
        Ok(self.inner(x, a, a)?.max(T::zero()).sqrt())
    }

    /// Transport of `xi` along `eta`, landing at a freshly computed `retract(x, eta)`.
    fn transport(&self, x: &Point<T>, eta: &Tangent<T>, xi: &Tangent<T>) -> Result<Tangent<T>> {
        let dest = self.retract(x, eta)?;
        self.transport_to(x, eta, xi, &dest)
    }

    /// `κ = ‖η‖_x / ‖d/dt R_x(tη)|_{t=1}‖_{R_x(η)}`.
    ///
    /// Exactly 1 for the exponential map and for `η = 0`. Other retractions use a central
    /// difference with step `1e-6·(1 + ‖η‖)`.
    fn kappa(&self, x: &Point<T>, eta: &Tangent<T>) -> Result<T> {
        eta.check_base(x)?;
        let eta_norm = self.norm(x, eta)?;
        if self.flavor().is_exponential() || eta_norm == T::zero() {
            return Ok(T::one());
        }
        let h = T::lit(1e-6) * (T::one() + eta_norm);
        let fwd = self.retract(x, &eta.scale(T::one() + h))?;
        let bwd = self.retract(x, &eta.scale(T::one() - h))?;
        let dest = self.retract(x, eta)?;
        let diff = (fwd.matrix() - bwd.matrix()).scale(T::one() / (h + h));
        let velocity = self.tangent_tidy(&dest, diff);
        let speed = self.norm(&dest, &velocity)?;
        if speed == T::zero() {
            return Err(Error::OutOfDomain("retraction has zero speed".into()));
        }
        Ok(eta_norm / speed)
    }
}
