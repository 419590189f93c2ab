//! Finite-sum objectives `f(w) = (1/N) Σₙ fₙ(w)` on a manifold.

mod karcher;
mod matcomp;
mod quadratic;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::scalar::Real;

pub use karcher::KarcherProblem;
pub use matcomp::{synth_lowrank, Entry, MatCompProblem, ObservedColumn, SynthData, SynthParams};
pub use quadratic::QuadraticProblem;

/// An empirical risk over `N` samples.
///
/// Batch costs and gradients are means over the batch; indices may repeat (sampling with
/// replacement) and are accumulated in the order given.
pub trait FiniteSumProblem<T: Real>: Send + Sync {
    type Geometry: Manifold<T>;

    fn manifold(&self) -> &Self::Geometry;

    fn num_samples(&self) -> usize;

    fn batch_cost(&self, w: &Point<T>, batch: &[usize]) -> Result<T>;

    /// Riemannian gradient of the batch mean.
    fn batch_grad(&self, w: &Point<T>, batch: &[usize]) -> Result<Tangent<T>>;

    fn cost(&self, w: &Point<T>) -> Result<T> {
        self.batch_cost(w, &all_indices(self.num_samples()))
    }

    fn full_grad(&self, w: &Point<T>) -> Result<Tangent<T>> {
        self.batch_grad(w, &all_indices(self.num_samples()))
    }
}

pub(crate) fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

pub(crate) fn check_batch(batch: &[usize], n: usize) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidArgument(format!("sample index {bad} out of range (N = {n})")));
    }
    Ok(())
}

/// Wraps a problem and counts per-sample gradient evaluations.
pub struct Counted<P> {
    inner: P,
    grad_evals: AtomicU64,
}

impl<P> Counted<P> {
    pub fn new(inner: P) -> Self {
        Self { inner, grad_evals: AtomicU64::new(0) }
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_evals.load(Ordering::Relaxed)
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }
}

impl<T: Real, P: FiniteSumProblem<T>> FiniteSumProblem<T> for Counted<P> {
    type Geometry = P::Geometry;

    fn manifold(&self) -> &Self::Geometry {
        self.inner.manifold()
    }

    fn num_samples(&self) -> usize {
        self.inner.num_samples()
    }

    fn batch_cost(&self, w: &Point<T>, batch: &[usize]) -> Result<T> {
        self.inner.batch_cost(w, batch)
    }

    fn batch_grad(&self, w: &Point<T>, batch: &[usize]) -> Result<Tangent<T>> {
        self.grad_evals.fetch_add(batch.len() as u64, Ordering::Relaxed);
        self.inner.batch_grad(w, batch)
    }

    fn cost(&self, w: &Point<T>) -> Result<T> {
        self.inner.cost(w)
    }

    fn full_grad(&self, w: &Point<T>) -> Result<Tangent<T>> {
        self.grad_evals.fetch_add(self.inner.num_samples() as u64, Ordering::Relaxed);
        self.inner.full_grad(w)
    }
}
