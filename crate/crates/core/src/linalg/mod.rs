//! Dense linear-algebra kernels: symmetric eigendecomposition, SPD matrix functions,
//! thin QR/SVD and small linear solves.

mod decomp;
mod matrix;

pub use decomp::{
    factor_least_squares, qf, solve, solve_least_squares, solve_right, spd_fun, spd_fun_from_eig, sym_eig, thin_qr,
    thin_svd, SpdFn, SymEig, ThinSvd, RANK_TOL, SPD_FLOOR,
};
pub use matrix::DenseMatrix;
