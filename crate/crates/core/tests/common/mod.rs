#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rsqn_core::linalg::qf;
use rsqn_core::{Manifold, Matrix, Point64, Tangent64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

pub fn orthogonal<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    qf(&gaussian(n, n, rng)).unwrap()
}

pub fn symmetric<R: Rng>(n: usize, rng: &mut R) -> Matrix {
    gaussian(n, n, rng).symmetrize()
}

/// `O diag(10^u) Oᵀ` with `u` uniform in `[-spread, spread]`.
pub fn spd<R: Rng>(n: usize, spread: f64, rng: &mut R) -> Matrix {
    let o = orthogonal(n, rng);
    let ev: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-spread..=spread))).collect();
    o.scale_columns(&ev).matmul_t(&o).symmetrize()
}

/// Random tangent at `x` with unit norm in the metric of `m`.
pub fn unit_tangent<M: Manifold<f64>, R: Rng>(m: &M, x: &Point64, rng: &mut R) -> Tangent64 {
    let t = m.random_tangent(x, rng);
    let n = m.norm(x, &t).unwrap();
    t.scale(1.0 / n)
}

pub fn diff_norm(a: &Matrix, b: &Matrix) -> f64 {
    (a - b).frob_norm()
}

/// Central difference of `t ↦ R_x(t η)` at `t = 1`, an ambient matrix.
pub fn retraction_velocity_fd<M: Manifold<f64>>(m: &M, x: &Point64, eta: &Tangent64, h: f64) -> Matrix {
    let plus = m.retract(x, &eta.scale(1.0 + h)).unwrap();
    let minus = m.retract(x, &eta.scale(1.0 - h)).unwrap();
    (plus.matrix() - minus.matrix()).scale(0.5 / h)
}

/// Slope of `log err` against `log t` between two step sizes.
pub fn fitted_order(t1: f64, e1: f64, t2: f64, e2: f64) -> f64 {
    (e1.ln() - e2.ln()) / (t1.ln() - t2.ln())
}
