use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, DenseMatrix};
use crate::scalar::Real;

/// Eigenvalues at or below this floor make an SPD matrix function fail with `NotSpd`.
pub const SPD_FLOOR: f64 = 1e-12;

/// Relative threshold on the QR pivots below which a matrix is treated as rank deficient.
pub const RANK_TOL: f64 = 1e-12;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Symmetric eigendecomposition `A = V diag(λ) Vᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SymEig<T> {
    pub eigenvalues: Vec<T>,
    pub eigenvectors: DenseMatrix<T>,
}

impl<T: Real> SymEig<T> {
    /// `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> DenseMatrix<T> {
        let mapped: Vec<T> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        v.scale_columns(&mapped).matmul_t(v).symmetrize()
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues[0]
    }
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// The input is symmetrized as `(A + Aᵀ)/2`; asymmetry beyond `1e-8·‖A‖_∞` is rejected.
pub fn sym_eig<T: Real>(a: &DenseMatrix<T>) -> Result<SymEig<T>> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.rows(), cols: a.cols() });
    }
    a.ensure_finite()?;
    let scale = a.norm_inf();
    let asym = a.asymmetry();
    if asym > T::lit(1e-8) * scale {
        return Err(Error::NotSymmetric { asymmetry: asym.to_f64_lossy() });
    }
    let n = a.rows();
    let mut m = a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    let eps = T::epsilon();

    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += m[(i, j)] * m[(i, j)];
            }
        }
        let diag: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum();
        if off == T::zero() || off.sqrt() <= eps * (diag + off + off).sqrt() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let app = m[(p, p)];
                let aqq = m[(q, q)];
                let theta = (aqq - app) / (T::lit(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let t = if theta == T::zero() { T::one() } else { t };
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[(k, p)];
                    let mkq = m[(k, q)];
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[(p, k)];
                    let mqk = m[(q, k)];
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = T::zero();
                m[(q, p)] = T::zero();
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(i, i)].partial_cmp(&m[(j, j)]).expect("finite eigenvalues"));
    let eigenvalues = order.iter().map(|&i| m[(i, i)]).collect();
    let mut eigenvectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = v.column(src);
        fix_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }
    Ok(SymEig { eigenvalues, eigenvectors })
}

/// Makes the largest-magnitude entry positive.
fn fix_sign<T: Real>(v: &mut [T]) -> bool {
    let mut best = T::zero();
    let mut sign = T::one();
    for &x in v.iter() {
        if x.abs() > best {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < T::zero() {
        v.iter_mut().for_each(|x| *x = -*x);
        true
    } else {
        false
    }
}

/// Scalar maps applied to an SPD spectrum.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpdFn {
    Sqrt,
    InvSqrt,
    Exp,
    Log,
}

impl SpdFn {
    fn apply<T: Real>(self, x: T) -> T {
        match self {
            SpdFn::Sqrt => x.sqrt(),
            SpdFn::InvSqrt => T::one() / x.sqrt(),
            SpdFn::Exp => x.exp(),
            SpdFn::Log => x.ln(),
        }
    }

    fn needs_positive(self) -> bool {
        !matches!(self, SpdFn::Exp)
    }
}

/// Matrix function `V diag(f(λ)) Vᵀ` of a symmetric matrix.
pub fn spd_fun<T: Real>(a: &DenseMatrix<T>, f: SpdFn) -> Result<DenseMatrix<T>> {
    let eig = sym_eig(a)?;
    spd_fun_from_eig(&eig, f)
}

pub fn spd_fun_from_eig<T: Real>(eig: &SymEig<T>, f: SpdFn) -> Result<DenseMatrix<T>> {
    if f.needs_positive() && eig.min_eigenvalue() <= T::lit(SPD_FLOOR) {
        return Err(Error::NotSpd { min_eig: eig.min_eigenvalue().to_f64_lossy() });
    }
    Ok(eig.reconstruct_with(|l| f.apply(l)))
}

/// Applies a Householder reflector `I - 2 v vᵀ` (v unit) stored in `v` to `x[k..]`.
#[inline]
fn reflect<T: Real>(v: &[T], x: &mut [T]) {
    let s = T::lit(2.0) * dot(v, x);
    for (xi, &vi) in x.iter_mut().zip(v) {
        *xi -= s * vi;
    }
}

/// Householder factorization of a column-major `m x n` block. Returns reflectors and `R`.
struct Householder<T> {
    m: usize,
    n: usize,
    /// Unit reflector for column k acting on rows `k..m` (empty when the column was already reduced).
    vs: Vec<Vec<T>>,
    r: DenseMatrix<T>,
}

impl<T: Real> Householder<T> {
    /// `cols[j]` holds column j of the matrix (length m).
    fn factor(mut cols: Vec<Vec<T>>, m: usize) -> Self {
        let n = cols.len();
        let mut vs = Vec::with_capacity(n);
        let mut r = DenseMatrix::zeros(n, n);
        for k in 0..n {
            let x = &cols[k][k..];
            let norm = dot(x, x).sqrt();
            let mut v: Vec<T> = x.to_vec();
            let alpha = if x[0] >= T::zero() { -norm } else { norm };
            v[0] -= alpha;
            let vnorm = dot(&v, &v).sqrt();
            if vnorm > T::zero() && norm > T::zero() {
                v.iter_mut().for_each(|e| *e /= vnorm);
                for col in cols.iter_mut().skip(k) {
                    reflect(&v, &mut col[k..]);
                }
            } else {
                v.clear();
            }
            for (j, col) in cols.iter().enumerate().skip(k) {
                r[(k, j)] = col[k];
            }
            vs.push(v);
        }
        Self { m, n, vs, r }
    }

    /// Thin `Q` (m x n) as row-major matrix.
    fn thin_q(&self) -> DenseMatrix<T> {
        let mut q = DenseMatrix::zeros(self.m, self.n);
        let mut e = vec![T::zero(); self.m];
        for j in 0..self.n {
            e.iter_mut().for_each(|x| *x = T::zero());
            e[j] = T::one();
            for k in (0..self.n).rev() {
                let v = &self.vs[k];
                if !v.is_empty() {
                    reflect(v, &mut e[k..]);
                }
            }
            q.set_column(j, &e);
        }
        q
    }
}

fn columns_of<T: Real>(a: &DenseMatrix<T>) -> Vec<Vec<T>> {
    let t = a.transpose();
    (0..a.cols()).map(|j| t.row(j).to_vec()).collect()
}

/// Thin QR factorization `A = QR` of a `d x r` matrix with `d ≥ r`.
///
/// The diagonal of `R` is made strictly positive so the factorization is unique.
pub fn thin_qr<T: Real>(a: &DenseMatrix<T>) -> Result<(DenseMatrix<T>, DenseMatrix<T>)> {
    a.ensure_finite()?;
    let (m, n) = a.shape();
    if m < n {
        return Err(Error::InvalidArgument(format!("thin_qr needs rows >= cols, got {m}x{n}")));
    }
    let h = Householder::factor(columns_of(a), m);
    let scale = a.frob_norm();
    if scale == T::zero() || (0..n).any(|k| h.r[(k, k)].abs() <= T::lit(RANK_TOL) * scale) {
        return Err(Error::RankDeficient);
    }
    let mut q = h.thin_q();
    let mut r = h.r;
    for k in 0..n {
        if r[(k, k)] < T::zero() {
            for j in 0..n {
                r[(k, j)] = -r[(k, j)];
            }
            for i in 0..m {
                q[(i, k)] = -q[(i, k)];
            }
        }
    }
    Ok((q, r))
}

/// Orthonormal factor of the thin QR factorization.
pub fn qf<T: Real>(a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    thin_qr(a).map(|(q, _)| q)
}

/// Thin singular value decomposition `A = W diag(σ) Vᵀ`.
#[derive(Clone, Debug)]
pub struct ThinSvd<T> {
    /// Left singular vectors, `d x k` with `k = min(d, r)`.
    pub u: DenseMatrix<T>,
    /// Singular values, descending.
    pub sigma: Vec<T>,
    /// Right singular vectors, `r x k`.
    pub v: DenseMatrix<T>,
}

/// One-sided Jacobi SVD of a `d x r` matrix.
///
/// Singular vectors are sign-fixed so the largest-magnitude entry of every left vector is positive.
pub fn thin_svd<T: Real>(a: &DenseMatrix<T>) -> Result<ThinSvd<T>> {
    a.ensure_finite()?;
    if a.rows() < a.cols() {
        let t = thin_svd(&a.transpose())?;
        // A = (Aᵀ)ᵀ = V Σ Wᵀ; re-apply the sign rule to the new left vectors.
        let mut u = t.v;
        let mut v = t.u;
        for j in 0..u.cols() {
            let mut col = u.column(j);
            if fix_sign(&mut col) {
                u.set_column(j, &col);
                let vc: Vec<T> = v.column(j).into_iter().map(|x| -x).collect();
                v.set_column(j, &vc);
            }
        }
        return Ok(ThinSvd { u, sigma: t.sigma, v });
    }
    let (m, n) = a.shape();
    let mut cols = columns_of(a);
    let mut vcols: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&cols[p], &cols[p]);
                let beta = dot(&cols[q], &cols[q]);
                let gamma = dot(&cols[p], &cols[q]);
                if gamma == T::zero() || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let t = if zeta == T::zero() { T::one() } else { t };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                let (lo, hi) = cols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
                let (lo, hi) = vcols.split_at_mut(q);
                rotate(&mut lo[p], &mut hi[0], c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = cols.iter().map(|c| dot(c, c).sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).expect("finite norms"));

    let tiny = T::min_positive_value() * T::lit(1e10);
    let mut u = DenseMatrix::zeros(m, n);
    let mut v = DenseMatrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    let mut filled = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let s = norms[src];
        let mut vc = vcols[src].clone();
        if s > tiny {
            let mut uc: Vec<T> = cols[src].iter().map(|&x| x / s).collect();
            if fix_sign(&mut uc) {
                vc.iter_mut().for_each(|x| *x = -*x);
            }
            u.set_column(dst, &uc);
            sigma.push(s);
        } else {
            sigma.push(T::zero());
            filled.push(dst);
        }
        v.set_column(dst, &vc);
    }
    complete_orthonormal(&mut u, &filled);
    Ok(ThinSvd { u, sigma, v })
}

#[inline]
fn rotate<T: Real>(x: &mut [T], y: &mut [T], c: T, s: T) {
    for (a, b) in x.iter_mut().zip(y.iter_mut()) {
        let xa = *a;
        let yb = *b;
        *a = c * xa - s * yb;
        *b = s * xa + c * yb;
    }
}

/// Fills the listed (zero) columns of `u` with unit vectors orthogonal to all other columns.
fn complete_orthonormal<T: Real>(u: &mut DenseMatrix<T>, missing: &[usize]) {
    if missing.is_empty() {
        return;
    }
    let (m, n) = u.shape();
    let mut basis: Vec<Vec<T>> =
        (0..n).filter(|j| !missing.contains(j)).map(|j| u.column(j)).collect();
    let mut candidate = 0;
    for &j in missing {
        loop {
            assert!(candidate < m, "cannot complete orthonormal basis");
            let mut e = vec![T::zero(); m];
            e[candidate] = T::one();
            candidate += 1;
            for _ in 0..2 {
                for b in &basis {
                    let p = dot(b, &e);
                    e.iter_mut().zip(b).for_each(|(x, &bi)| *x -= p * bi);
                }
            }
            let norm = dot(&e, &e).sqrt();
            if norm > T::lit(0.5) {
                e.iter_mut().for_each(|x| *x /= norm);
                fix_sign(&mut e);
                u.set_column(j, &e);
                basis.push(e);
                break;
            }
        }
    }
}

/// `argmin_a ‖A a − b‖² + ridge ‖a‖²` via Householder QR of the ridge-augmented system.
pub fn solve_least_squares<T: Real>(a: &DenseMatrix<T>, b: &[T], ridge: T) -> Result<Vec<T>> {
    factor_least_squares(a, b, ridge).map(|ls| ls.x)
}

/// Solution of a ridge least-squares problem together with the triangular factor `R` of
/// `[A; √ridge I] = Q R`, so that `RᵀR = AᵀA + ridge I`.
#[derive(Clone, Debug)]
pub struct LeastSquares<T> {
    pub x: Vec<T>,
    r: usize,
    /// Column-major `r × r` upper triangle.
    factor: Vec<T>,
}

impl<T: Real> LeastSquares<T> {
    /// `(AᵀA + ridge I)⁻¹ v` by one forward and one backward triangular solve.
    pub fn solve_gram(&self, v: &[T]) -> Vec<T> {
        let r = self.r;
        let at = |i: usize, j: usize| self.factor[j * r + i];
        let mut y = v.to_vec();
        for i in 0..r {
            let mut s = y[i];
            for k in 0..i {
                s -= at(k, i) * y[k];
            }
            y[i] = s / at(i, i);
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for k in (i + 1)..r {
                s -= at(i, k) * y[k];
            }
            y[i] = s / at(i, i);
        }
        y
    }
}

/// [`solve_least_squares`] that keeps the triangular factor.
pub fn factor_least_squares<T: Real>(a: &DenseMatrix<T>, b: &[T], ridge: T) -> Result<LeastSquares<T>> {
    let (m, r) = a.shape();
    if b.len() != m {
        return Err(Error::ShapeMismatch { expected: (m, 1), got: (b.len(), 1) });
    }
    if ridge < T::zero() {
        return Err(Error::InvalidArgument("negative ridge".into()));
    }
    let rows = m + if ridge > T::zero() { r } else { 0 };
    if rows < r {
        return Err(Error::RankDeficient);
    }
    // Column-major augmented system [A; √ridge I], reduced in place; each reflector is applied
    // to the right-hand side as soon as it is formed, so nothing needs to be stored.
    let mut buf = vec![T::zero(); rows * r];
    for i in 0..m {
        for (j, &aij) in a.row(i).iter().enumerate() {
            buf[j * rows + i] = aij;
        }
    }
    if ridge > T::zero() {
        let sqrt_ridge = ridge.sqrt();
        for j in 0..r {
            buf[j * rows + m + j] = sqrt_ridge;
        }
    }
    let mut rhs = vec![T::zero(); rows];
    rhs[..m].copy_from_slice(b);
    let scale = a.frob_norm();
    let mut diag_ok = true;
    for k in 0..r {
        let (head, tail) = buf.split_at_mut((k + 1) * rows);
        let v = &mut head[k * rows + k..];
        let norm = dot(v, v).sqrt();
        let alpha = if v[0] >= T::zero() { -norm } else { norm };
        v[0] -= alpha;
        let vnorm = dot(v, v).sqrt();
        if vnorm > T::zero() && norm > T::zero() {
            v.iter_mut().for_each(|e| *e /= vnorm);
            for col in tail.chunks_exact_mut(rows) {
                reflect(v, &mut col[k..]);
            }
            reflect(v, &mut rhs[k..]);
        }
        // The reflector occupied the column; the reduced column is (alpha, 0, ...).
        v.iter_mut().for_each(|e| *e = T::zero());
        v[0] = if vnorm > T::zero() && norm > T::zero() { alpha } else { norm };
        if ridge == T::zero() && v[0].abs() <= T::lit(RANK_TOL) * scale {
            diag_ok = false;
        }
    }
    if !diag_ok {
        return Err(Error::RankDeficient);
    }
    let mut x = rhs;
    x.truncate(r);
    for i in (0..r).rev() {
        let mut s = x[i];
        for j in (i + 1)..r {
            s -= buf[j * rows + i] * x[j];
        }
        let d = buf[i * rows + i];
        if d == T::zero() {
            return Err(Error::RankDeficient);
        }
        x[i] = s / d;
    }
    let mut factor = vec![T::zero(); r * r];
    for j in 0..r {
        factor[j * r..j * r + j + 1].copy_from_slice(&buf[j * rows..j * rows + j + 1]);
    }
    Ok(LeastSquares { x, r, factor })
}

/// Solves `A X = B` for square `A` by Gaussian elimination with partial pivoting.
pub fn solve<T: Real>(a: &DenseMatrix<T>, b: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    if !a.is_square() {
        return Err(Error::NonSquare { rows: a.rows(), cols: a.cols() });
    }
    let n = a.rows();
    if b.rows() != n {
        return Err(Error::ShapeMismatch { expected: (n, b.cols()), got: b.shape() });
    }
    let mut lu = a.clone();
    let mut x = b.clone();
    let scale = a.max_abs();
    for k in 0..n {
        let piv = (k..n)
            .max_by(|&i, &j| lu[(i, k)].abs().partial_cmp(&lu[(j, k)].abs()).expect("finite"))
            .expect("non-empty");
        if lu[(piv, k)].abs() <= T::epsilon() * scale * T::from_count(n) {
            return Err(Error::RankDeficient);
        }
        if piv != k {
            for j in 0..n {
                let t = lu[(k, j)];
                lu[(k, j)] = lu[(piv, j)];
                lu[(piv, j)] = t;
            }
            for j in 0..x.cols() {
                let t = x[(k, j)];
                x[(k, j)] = x[(piv, j)];
                x[(piv, j)] = t;
            }
        }
        for i in (k + 1)..n {
            let f = lu[(i, k)] / lu[(k, k)];
            if f == T::zero() {
                continue;
            }
            for j in k..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= f * v;
            }
            for j in 0..x.cols() {
                let v = x[(k, j)];
                x[(i, j)] -= f * v;
            }
        }
    }
    for j in 0..x.cols() {
        for i in (0..n).rev() {
            let mut s = x[(i, j)];
            for k in (i + 1)..n {
                s -= lu[(i, k)] * x[(k, j)];
            }
            x[(i, j)] = s / lu[(i, i)];
        }
    }
    Ok(x)
}

/// Solves `X A = B` for square `A`, i.e. `X = B A⁻¹`.
pub fn solve_right<T: Real>(b: &DenseMatrix<T>, a: &DenseMatrix<T>) -> Result<DenseMatrix<T>> {
    Ok(solve(&a.transpose(), &b.transpose())?.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[f64]]) -> DenseMatrix<f64> {
        DenseMatrix::from_rows(rows).unwrap()
    }

    fn orth_err(q: &DenseMatrix<f64>) -> f64 {
        (&q.t_matmul(q) - &DenseMatrix::identity(q.cols())).max_abs()
    }

    #[test]
    fn eig_identity_and_diagonal() {
        let e = sym_eig(&DenseMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(e.eigenvalues, vec![1.0, 1.0, 1.0]);
        assert!(orth_err(&e.eigenvectors) < 1e-15);

        let e = sym_eig(&m(&[&[2.0, 0.0], &[0.0, 5.0]])).unwrap();
        assert_eq!(e.eigenvalues, vec![2.0, 5.0]);
        assert_eq!(e.eigenvectors, DenseMatrix::identity(2));
    }

    #[test]
    fn eig_two_by_two() {
        // det([[2-λ,1],[1,2-λ]]) = (2-λ)² - 1 → λ ∈ {1, 3}
        let e = sym_eig(&m(&[&[2.0, 1.0], &[1.0, 2.0]])).unwrap();
        assert!((e.eigenvalues[0] - 1.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eig_errors() {
        let rect = DenseMatrix::<f64>::zeros(2, 3);
        assert!(matches!(sym_eig(&rect), Err(Error::NonSquare { .. })));
        assert!(matches!(sym_eig(&m(&[&[1.0, 2.0], &[0.0, 1.0]])), Err(Error::NotSymmetric { .. })));
    }

    #[test]
    fn spd_fun_basic() {
        let z = spd_fun(&DenseMatrix::<f64>::identity(3), SpdFn::Log).unwrap();
        assert_eq!(z.max_abs(), 0.0);
        let s = spd_fun(&DenseMatrix::from_diag(&[4.0, 9.0]), SpdFn::Sqrt).unwrap();
        assert!((&s - &DenseMatrix::from_diag(&[2.0, 3.0])).max_abs() < 1e-15);
        let bad = DenseMatrix::from_diag(&[1.0, -1.0]);
        assert!(matches!(spd_fun(&bad, SpdFn::Log), Err(Error::NotSpd { .. })));
        assert!(matches!(spd_fun(&bad, SpdFn::InvSqrt), Err(Error::NotSpd { .. })));
        assert!(spd_fun(&bad, SpdFn::Exp).is_ok());
    }

    #[test]
    fn qr_examples() {
        let u = m(&[&[1.0, 0.0], &[0.0, 1.0], &[0.0, 0.0]]);
        let (q, r) = thin_qr(&u).unwrap();
        assert!((&q - &u).max_abs() < 1e-15);
        assert!((&r - &DenseMatrix::identity(2)).max_abs() < 1e-15);

        let (q, r) = thin_qr(&m(&[&[3.0], &[4.0]])).unwrap();
        assert!((q[(0, 0)] - 0.6).abs() < 1e-15 && (q[(1, 0)] - 0.8).abs() < 1e-15);
        assert!((r[(0, 0)] - 5.0).abs() < 1e-15);

        let (q, r) = thin_qr(&m(&[&[-1.0], &[0.0]])).unwrap();
        assert_eq!(r[(0, 0)], 1.0);
        assert_eq!(q[(0, 0)], -1.0);
        assert_eq!(q[(1, 0)], 0.0);

        let rank1 = m(&[&[1.0, 2.0], &[2.0, 4.0], &[3.0, 6.0]]);
        assert_eq!(thin_qr(&rank1), Err(Error::RankDeficient));
    }

    #[test]
    fn svd_examples() {
        let z = thin_svd(&DenseMatrix::<f64>::zeros(4, 2)).unwrap();
        assert_eq!(z.sigma, vec![0.0, 0.0]);
        assert!(orth_err(&z.u) < 1e-15);

        let d = thin_svd(&m(&[&[3.0, 0.0], &[0.0, 1.0]])).unwrap();
        assert_eq!(d.sigma, vec![3.0, 1.0]);

        // u vᵀ has the single singular value ‖u‖‖v‖.
        let u = [1.0f64, 2.0, 2.0];
        let v = [3.0, 4.0];
        let a = DenseMatrix::from_fn(3, 2, |i, j| u[i] * v[j]);
        let s = thin_svd(&a).unwrap();
        assert!((s.sigma[0] - 15.0).abs() < 1e-13);
        assert!(s.sigma[1].abs() < 1e-13);
        assert!(orth_err(&s.u) < 1e-13);
        let rec = s.u.scale_columns(&s.sigma).matmul_t(&s.v);
        assert!((&rec - &a).max_abs() < 1e-13);
    }

    #[test]
    fn svd_wide_matrix() {
        let a = m(&[&[1.0, 2.0, 0.5], &[-1.0, 0.0, 3.0]]);
        let s = thin_svd(&a).unwrap();
        assert_eq!(s.u.shape(), (2, 2));
        assert_eq!(s.v.shape(), (3, 2));
        let rec = s.u.scale_columns(&s.sigma).matmul_t(&s.v);
        assert!((&rec - &a).max_abs() < 1e-14);
    }

    #[test]
    fn least_squares_examples() {
        let x = solve_least_squares(&DenseMatrix::<f64>::identity(3), &[1.0, -2.0, 5.0], 0.0).unwrap();
        assert!(x.iter().zip([1.0, -2.0, 5.0]).all(|(a, b)| (a - b).abs() < 1e-15));

        // normal equations: 2a = 4
        let x = solve_least_squares(&m(&[&[1.0], &[1.0]]), &[1.0, 3.0], 0.0).unwrap();
        assert!((x[0] - 2.0).abs() < 1e-15);

        let a = m(&[&[1.0, 2.0], &[0.5, -1.0], &[3.0, 1.0]]);
        let x = solve_least_squares(&a, &[0.0, 0.0, 0.0], 0.1).unwrap();
        assert_eq!(x, vec![0.0, 0.0]);

        let rank1 = m(&[&[1.0, 2.0], &[2.0, 4.0]]);
        assert_eq!(solve_least_squares(&rank1, &[1.0, 1.0], 0.0), Err(Error::RankDeficient));
        assert!(solve_least_squares(&rank1, &[1.0, 1.0], 1e-3).is_ok());
        // fewer rows than unknowns is only solvable with a ridge
        let wide = m(&[&[1.0, 1.0]]);
        assert_eq!(solve_least_squares(&wide, &[1.0], 0.0), Err(Error::RankDeficient));
        assert!(solve_least_squares(&wide, &[1.0], 1e-6).is_ok());
    }

    #[test]
    fn linear_solve() {
        let a = m(&[&[0.0, 2.0], &[1.0, 1.0]]);
        let b = m(&[&[4.0], &[3.0]]);
        let x = solve(&a, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15 && (x[(1, 0)] - 2.0).abs() < 1e-15);
        let y = solve_right(&b.transpose(), &a.transpose()).unwrap();
        assert!((&y - &x.transpose()).max_abs() < 1e-15);
        assert_eq!(solve(&m(&[&[1.0, 1.0], &[1.0, 1.0]]), &b), Err(Error::RankDeficient));
    }
}
