use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{factor_least_squares, qf, DenseMatrix};
use crate::manifold::{GeometryFlavor, GrassmannManifold, Manifold, Point, Tangent};
use crate::problems::{check_batch, FiniteSumProblem};
use crate::scalar::Real;

/// Observed entries of one column: row indices and values, same length, rows distinct.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedColumn<T> {
    pub rows: Vec<usize>,
    pub values: Vec<T>,
}

/// A single matrix entry `(row, col, value)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry<T> {
    pub row: usize,
    pub col: usize,
    pub value: T,
}

/// Rank-`r` matrix completion on `Gr(r, d)`:
/// `f(U) = (1/N) Σₙ ‖P_Ωₙ(U aₙ) − P_Ωₙ(xₙ)‖²` with `aₙ = argmin_a ‖P_Ωₙ(U a − xₙ)‖² + ridge ‖a‖²`.
#[derive(Clone, Debug)]
pub struct MatCompProblem<T> {
    manifold: GrassmannManifold,
    columns: Vec<ObservedColumn<T>>,
    ridge: T,
    observed: usize,
}

/// Residual `P_Ω(U a) − P_Ω(x)` of one column together with its coefficients.
struct ColumnFit<T> {
    coeffs: Vec<T>,
    residual: Vec<T>,
    /// `b = (SᵀS + ridge I)⁻¹ a` and `S b` with `S = P_Ω U`; only formed when `ridge > 0`.
    sensitivity: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Real> MatCompProblem<T> {
    pub fn new(
        d: usize,
        r: usize,
        columns: Vec<ObservedColumn<T>>,
        ridge: T,
        flavor: GeometryFlavor,
    ) -> Result<Self> {
        let manifold = GrassmannManifold::new(d, r, flavor)?;
        if columns.is_empty() {
            return Err(Error::InvalidArgument("matrix completion needs at least one column".into()));
        }
        if ridge < T::zero() {
            return Err(Error::InvalidArgument("negative ridge".into()));
        }
        let mut observed = 0;
        for (n, c) in columns.iter().enumerate() {
            if c.rows.is_empty() || c.rows.len() != c.values.len() {
                return Err(Error::InvalidArgument(format!("column {n} has no usable observations")));
            }
            if let Some(&bad) = c.rows.iter().find(|&&i| i >= d) {
                return Err(Error::InvalidArgument(format!("column {n} has row {bad} >= d = {d}")));
            }
            if c.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NotFinite);
            }
            observed += c.rows.len();
        }
        Ok(Self { manifold, columns, ridge, observed })
    }

    pub fn grassmann(&self) -> &GrassmannManifold {
        &self.manifold
    }

    pub fn columns(&self) -> &[ObservedColumn<T>] {
        &self.columns
    }

    pub fn num_observed(&self) -> usize {
        self.observed
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    /// `argmin_a ‖P_Ωₙ(U a) − P_Ωₙ(xₙ)‖² + ridge ‖a‖²`.
    pub fn solve_column(&self, u: &Point<T>, n: usize) -> Result<Vec<T>> {
        Ok(self.fit(u.matrix(), n, false)?.coeffs)
    }

    fn fit(&self, u: &DenseMatrix<T>, n: usize, sensitivity: bool) -> Result<ColumnFit<T>> {
        let col = &self.columns[n];
        let r = u.cols();
        let sub = DenseMatrix::from_fn(col.rows.len(), r, |i, j| u[(col.rows[i], j)]);
        let ls = factor_least_squares(&sub, &col.values, self.ridge)?;
        let apply = |v: &[T]| -> Vec<T> {
            (0..col.rows.len()).map(|i| sub.row(i).iter().zip(v).map(|(&s, &a)| s * a).sum()).collect()
        };
        let residual = apply(&ls.x).into_iter().zip(&col.values).map(|(p, &x)| p - x).collect();
        let sensitivity = (sensitivity && self.ridge > T::zero()).then(|| {
            let b = ls.solve_gram(&ls.x);
            let sb = apply(&b);
            (b, sb)
        });
        Ok(ColumnFit { coeffs: ls.x, residual, sensitivity })
    }

    /// Coefficients of every column at `U`.
    pub fn coefficients(&self, u: &Point<T>) -> Result<Vec<Vec<T>>> {
        (0..self.columns.len()).map(|n| self.solve_column(u, n)).collect()
    }

    /// Mean squared residual over all observed entries.
    pub fn train_mse(&self, u: &Point<T>) -> Result<T> {
        let mut total = T::zero();
        for n in 0..self.columns.len() {
            total += self.fit(u.matrix(), n, false)?.residual.iter().map(|&e| e * e).sum::<T>();
        }
        Ok(total / T::from_count(self.observed))
    }

    /// Mean squared prediction error of `U aₙ` on held-out entries.
    pub fn mse(&self, u: &Point<T>, entries: &[Entry<T>]) -> Result<T> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("no entries to evaluate".into()));
        }
        let coeffs = self.coefficients(u)?;
        let um = u.matrix();
        let mut total = T::zero();
        for e in entries {
            if e.col >= self.columns.len() || e.row >= um.rows() {
                return Err(Error::InvalidArgument(format!("entry ({}, {}) out of range", e.row, e.col)));
            }
            let pred: T = um.row(e.row).iter().zip(&coeffs[e.col]).map(|(&x, &a)| x * a).sum();
            total += (pred - e.value) * (pred - e.value);
        }
        Ok(total / T::from_count(entries.len()))
    }
}

impl<T: Real> FiniteSumProblem<T> for MatCompProblem<T> {
    type Geometry = GrassmannManifold;

    fn manifold(&self) -> &GrassmannManifold {
        &self.manifold
    }

    fn num_samples(&self) -> usize {
        self.columns.len()
    }

    fn batch_cost(&self, w: &Point<T>, batch: &[usize]) -> Result<T> {
        check_batch(batch, self.columns.len())?;
        let mut total = T::zero();
        for &n in batch {
            let fit = self.fit(w.matrix(), n, false)?;
            total += fit.residual.iter().map(|&e| e * e).sum::<T>();
        }
        Ok(total / T::from_count(batch.len()))
    }

    /// `(I − UUᵀ) (2/|b|) Σₙ [rₙ aₙᵀ + ridge (rₙ bₙᵀ + S bₙ aₙᵀ)]` with `rₙ` the residual
    /// scattered to the observed rows and `bₙ = (SᵀS + ridge I)⁻¹ aₙ`. Differentiating through
    /// the column solve and using its normal equations `Sᵀr = −ridge a` leaves only the ridge
    /// terms, which vanish for a plain least-squares fit.
    fn batch_grad(&self, w: &Point<T>, batch: &[usize]) -> Result<Tangent<T>> {
        check_batch(batch, self.columns.len())?;
        let u = w.matrix();
        let mut g = DenseMatrix::zeros(u.rows(), u.cols());
        for &n in batch {
            let fit = self.fit(u, n, true)?;
            for (i, (&row, &res)) in self.columns[n].rows.iter().zip(&fit.residual).enumerate() {
                let grow = g.row_mut(row);
                for (gij, &a) in grow.iter_mut().zip(&fit.coeffs) {
                    *gij += res * a;
                }
                if let Some((b, sb)) = &fit.sensitivity {
                    for ((gij, &a), &bj) in grow.iter_mut().zip(&fit.coeffs).zip(b) {
                        *gij += self.ridge * (res * bj + sb[i] * a);
                    }
                }
            }
        }
        g.scale_mut(T::lit(2.0) / T::from_count(batch.len()));
        Ok(self.manifold.tangent_tidy(w, g))
    }
}

/// Parameters of a synthetic low-rank completion instance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthParams {
    pub d: usize,
    pub n: usize,
    pub r: usize,
    /// Oversampling ratio: `|Ω| = round(os · r(d + N − r))`.
    pub os: f64,
    /// Condition number `σ₁ / σ_r` of the ground truth.
    pub cn: f64,
    /// Noise level relative to the rms of the clean observed entries.
    pub sigma: f64,
    pub seed: u64,
}

/// A generated instance: training problem, held-out entries and the ground-truth factors.
#[derive(Clone, Debug)]
pub struct SynthData<T> {
    pub problem: MatCompProblem<T>,
    pub test: Vec<Entry<T>>,
    pub left: DenseMatrix<T>,
    pub singular_values: Vec<T>,
    pub right: DenseMatrix<T>,
}

impl<T: Real> SynthData<T> {
    /// Dense ground truth `L diag(σ) Rᵀ`.
    pub fn ground_truth(&self) -> DenseMatrix<T> {
        self.left.scale_columns(&self.singular_values).matmul_t(&self.right)
    }
}

/// Samples a rank-`r` matrix `L diag(σ) Rᵀ` with orthonormal factors and singular values spaced
/// geometrically from `cn` down to 1, observes `|Ω|` entries uniformly without replacement
/// (at least one per column), adds Gaussian noise, and draws a disjoint test set of the same
/// size (or whatever remains of the matrix, if less).
pub fn synth_lowrank<T: Real>(
    params: &SynthParams,
    ridge: T,
    flavor: GeometryFlavor,
) -> Result<SynthData<T>> {
    let SynthParams { d, n, r, os, cn, sigma, seed } = *params;
    if r == 0 || r > d || r > n {
        return Err(Error::InvalidArgument(format!("rank {r} incompatible with {d}x{n}")));
    }
    if !(os > 0.0) || !(cn >= 1.0) || !(sigma >= 0.0) {
        return Err(Error::InvalidArgument("need os > 0, cn >= 1, sigma >= 0".into()));
    }
    let total = d * n;
    let dof = (r * (d + n - r)) as f64;
    let target = (os * dof).round() as usize;
    if target > total {
        return Err(Error::InfeasibleSampling(format!(
            "{target} observations requested but the matrix has {total} entries"
        )));
    }
    if target < n {
        return Err(Error::InfeasibleSampling(format!(
            "{target} observations cannot cover all {n} columns"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gauss = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| {
        DenseMatrix::from_fn(rows, cols, |_, _| T::lit(rng.sample::<f64, _>(StandardNormal)))
    };
    let left = qf(&gauss(d, r, &mut rng))?;
    let right = qf(&gauss(n, r, &mut rng))?;
    let singular_values: Vec<T> = (0..r)
        .map(|i| {
            let frac = if r == 1 { 0.0 } else { (r - 1 - i) as f64 / (r - 1) as f64 };
            T::lit(cn.powf(frac))
        })
        .collect();
    let scaled_left = left.scale_columns(&singular_values);
    let value = |i: usize, j: usize| -> T {
        scaled_left.row(i).iter().zip(right.row(j)).map(|(&a, &b)| a * b).sum()
    };

    // Linear index `i * n + j`; one guaranteed entry per column, then a uniform fill.
    let mut taken = vec![false; total];
    let mut omega = Vec::with_capacity(target);
    for j in 0..n {
        let i = rng.random_range(0..d);
        taken[i * n + j] = true;
        omega.push(i * n + j);
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng);
    let mut rest = order.into_iter().filter(|&k| !taken[k]);
    omega.extend(rest.by_ref().take(target - n));
    let test_size = target.min(total - target);
    let phi: Vec<usize> = rest.take(test_size).collect();

    let clean: Vec<T> = omega.iter().map(|&k| value(k / n, k % n)).collect();
    let rms = (clean.iter().map(|&v| v * v).sum::<T>() / T::from_count(clean.len().max(1))).sqrt();
    let noise_scale = T::lit(sigma) * rms;

    let mut columns: Vec<ObservedColumn<T>> =
        (0..n).map(|_| ObservedColumn { rows: Vec::new(), values: Vec::new() }).collect();
    let mut sorted: Vec<(usize, T)> = omega.iter().copied().zip(clean).collect();
    sorted.sort_by_key(|&(k, _)| k);
    for (k, v) in sorted {
        let noise = T::lit(rng.sample::<f64, _>(StandardNormal)) * noise_scale;
        let col = &mut columns[k % n];
        col.rows.push(k / n);
        col.values.push(v + noise);
    }
    let mut phi_sorted = phi;
    phi_sorted.sort_unstable();
    let test = phi_sorted
        .into_iter()
        .map(|k| {
            let noise = T::lit(rng.sample::<f64, _>(StandardNormal)) * noise_scale;
            Entry { row: k / n, col: k % n, value: value(k / n, k % n) + noise }
        })
        .collect();

    let problem = MatCompProblem::new(d, r, columns, ridge, flavor)?;
    Ok(SynthData { problem, test, left, singular_values, right })
}
