use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::scalar::Real;

/// Secant pair `(s, y)` with `ρ = 1/⟨y, s⟩`, both tangents at the same point.
#[derive(Clone, Debug)]
pub struct CurvaturePair<T> {
    pub s: Tangent<T>,
    pub y: Tangent<T>,
    pub rho: T,
}

/// Limited-memory quasi-Newton state: up to `capacity` pairs (newest last) and the initial
/// scaling `χ = ⟨s, y⟩/⟨y, y⟩` of the newest pair (1 when empty).
#[derive(Clone, Debug)]
pub struct QnMemory<T> {
    pairs: VecDeque<CurvaturePair<T>>,
    capacity: usize,
    chi: T,
}

/// `⟨y, s⟩ ≥ ε ‖s‖²` with `s ≠ 0`.
fn cautious<T: Real>(ys: T, ss: T, eps: T) -> bool {
    ss > T::zero() && ys > T::zero() && ys >= eps * ss
}

impl<T: Real> QnMemory<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "memory needs room for one pair");
        Self { pairs: VecDeque::with_capacity(capacity + 1), capacity, chi: T::one() }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn chi(&self) -> T {
        self.chi
    }

    /// Oldest first.
    pub fn pairs(&self) -> impl Iterator<Item = &CurvaturePair<T>> {
        self.pairs.iter()
    }

    pub fn clear(&mut self) {
        self.pairs.clear();
        self.chi = T::one();
    }

    fn refresh_chi<M: Manifold<T>>(&mut self, m: &M) -> Result<()> {
        self.chi = match self.pairs.back() {
            None => T::one(),
            Some(p) => {
                let base = p.s.base();
                let yy = m.inner(base, &p.y, &p.y)?;
                T::one() / (p.rho * yy)
            }
        };
        Ok(())
    }

    /// Stores `(s, y)` at `x` if it passes the cautious test, evicting the oldest pair when
    /// full. Returns whether the pair was stored.
    pub fn try_push<M: Manifold<T>>(
        &mut self,
        m: &M,
        x: &Point<T>,
        s: Tangent<T>,
        y: Tangent<T>,
        eps: T,
    ) -> Result<bool> {
        if let Some(p) = self.pairs.back() {
            p.s.check_base(x)?;
        }
        let ys = m.inner(x, &y, &s)?;
        let ss = m.inner(x, &s, &s)?;
        if !cautious(ys, ss, eps) {
            return Ok(false);
        }
        if self.pairs.len() == self.capacity {
            self.pairs.pop_front();
        }
        self.pairs.push_back(CurvaturePair { s, y, rho: T::one() / ys });
        self.refresh_chi(m)?;
        Ok(true)
    }

    /// Transports every pair along `eta` to `dest`, recomputes `ρ` there, and drops pairs that
    /// no longer pass the cautious test (possible for non-isometric transports).
    pub fn transport<M: Manifold<T>>(
        &mut self,
        m: &M,
        x: &Point<T>,
        eta: &Tangent<T>,
        dest: &Point<T>,
        eps: T,
    ) -> Result<()> {
        let mut kept = VecDeque::with_capacity(self.capacity + 1);
        for p in self.pairs.drain(..) {
            let s = m.transport_to(x, eta, &p.s, dest)?;
            let y = m.transport_to(x, eta, &p.y, dest)?;
            let ys = m.inner(dest, &y, &s)?;
            let ss = m.inner(dest, &s, &s)?;
            if cautious(ys, ss, eps) {
                kept.push_back(CurvaturePair { s, y, rho: T::one() / ys });
            } else {
                log::debug!("dropping curvature pair that lost positivity under transport");
            }
        }
        self.pairs = kept;
        self.refresh_chi(m)
    }

    /// `H p` by the two-loop recursion with `H₀ = χ·id`.
    pub fn two_loop_apply<M: Manifold<T>>(
        &self,
        m: &M,
        x: &Point<T>,
        p: &Tangent<T>,
    ) -> Result<Tangent<T>> {
        p.check_base(x)?;
        let mut q = p.clone();
        let mut alphas = Vec::with_capacity(self.pairs.len());
        for pair in self.pairs.iter().rev() {
            pair.s.check_base(x)?;
            let a = pair.rho * m.inner(x, &pair.s, &q)?;
            q.axpy(-a, &pair.y.reattach(x))?;
            alphas.push(a);
        }
        let mut r = q.scale(self.chi);
        for (pair, &a) in self.pairs.iter().zip(alphas.iter().rev()) {
            let b = pair.rho * m.inner(x, &pair.y.reattach(x), &r)?;
            r.axpy(a - b, &pair.s.reattach(x))?;
        }
        Ok(r)
    }
}

/// End-of-epoch update of the memory when the reference point moves from `w_old` to
/// `w_new = R_{w_old}(η)`:
///
/// `s = T_η η`, `y = κ⁻¹ grad f(w_new) − T_η grad f(w_old)`, stored iff `⟨y, s⟩ ≥ ε‖s‖²`.
/// Surviving pairs are transported to `w_new` (oldest evicted first when the new pair needs
/// room). Returns whether the new pair was stored.
#[allow(clippy::too_many_arguments)]
pub fn curvature_update<T: Real, M: Manifold<T>>(
    m: &M,
    memory: &mut QnMemory<T>,
    w_old: &Point<T>,
    g_old: &Tangent<T>,
    eta: &Tangent<T>,
    w_new: &Point<T>,
    g_new: &Tangent<T>,
    eps: T,
) -> Result<bool> {
    g_old.check_base(w_old)?;
    g_new.check_base(w_new)?;
    if eta.is_zero() {
        memory.transport(m, w_old, eta, w_new, eps)?;
        return Ok(false);
    }
    let s = m.transport_to(w_old, eta, eta, w_new)?;
    let kappa = m.kappa(w_old, eta)?;
    if !(kappa > T::zero()) || !kappa.is_finite() {
        return Err(Error::OutOfDomain(format!("invalid kappa {}", kappa)));
    }
    let moved_grad = m.transport_to(w_old, eta, g_old, w_new)?;
    let y = g_new.scale(T::one() / kappa).sub(&moved_grad)?;
    let ys = m.inner(w_new, &y, &s)?;
    let ss = m.inner(w_new, &s, &s)?;
    let accept = cautious(ys, ss, eps);
    if accept && memory.len() == memory.capacity() {
        memory.pairs.pop_front();
    }
    memory.transport(m, w_old, eta, w_new, eps)?;
    if accept {
        memory.pairs.push_back(CurvaturePair { s, y, rho: T::one() / ys });
        memory.refresh_chi(m)?;
    }
    Ok(accept)
}
