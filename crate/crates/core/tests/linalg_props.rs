use proptest::prelude::*;
use rsqn_core::linalg::{factor_least_squares, solve_least_squares, spd_fun, sym_eig, thin_qr, thin_svd, SpdFn};
use rsqn_core::Matrix;

fn square(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(|n| {
        prop::collection::vec(-3.0f64..3.0, n * n).prop_map(move |v| Matrix::new(n, n, v).unwrap())
    })
}

fn tall(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_cols).prop_flat_map(move |r| {
        (r..=max_rows).prop_flat_map(move |d| {
            prop::collection::vec(-2.0f64..2.0, d * r).prop_map(move |v| Matrix::new(d, r, v).unwrap())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sym_eig_reconstructs(a in square(8)) {
        let a = a.symmetrize();
        let eig = sym_eig(&a).unwrap();
        let v = &eig.eigenvectors;
        let rebuilt = v.scale_columns(&eig.eigenvalues).matmul_t(v);
        let scale = a.frob_norm().max(1.0);
        prop_assert!((&rebuilt - &a).frob_norm() <= 1e-10 * scale);
        let n = a.rows();
        prop_assert!((&v.t_matmul(v) - &Matrix::identity(n)).frob_norm() <= 1e-10);
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn exp_and_log_are_mutual_inverses(a in square(6)) {
        // The induced ∞-norm bounds the spectral radius; rescale into [-5, 5].
        let a = a.symmetrize();
        let a = a.scale(5.0 / a.norm_inf().max(5.0));
        let back = spd_fun(&spd_fun(&a, SpdFn::Exp).unwrap(), SpdFn::Log).unwrap();
        prop_assert!((&back - &a).frob_norm() <= 1e-9);
    }

    #[test]
    fn thin_qr_is_idempotent(a in tall(8, 4)) {
        if let Ok((q, r)) = thin_qr(&a) {
            prop_assert!((&q.matmul(&r) - &a).frob_norm() <= 1e-10 * a.frob_norm());
            prop_assert!(r.diagonal().iter().all(|&x| x > 0.0));
            let (q2, r2) = thin_qr(&q).unwrap();
            prop_assert!((&q2 - &q).frob_norm() <= 1e-10);
            prop_assert!((&r2 - &Matrix::identity(q.cols())).frob_norm() <= 1e-10);
        }
    }

    #[test]
    fn thin_svd_reconstructs(a in tall(8, 5)) {
        let s = thin_svd(&a).unwrap();
        let rebuilt = s.u.scale_columns(&s.sigma).matmul_t(&s.v);
        prop_assert!((&rebuilt - &a).frob_norm() <= 1e-10 * a.frob_norm().max(1.0));
        prop_assert!(s.sigma.windows(2).all(|w| w[0] >= w[1]));
        let r = a.cols();
        prop_assert!((&s.v.t_matmul(&s.v) - &Matrix::identity(r)).frob_norm() <= 1e-10);
    }

    #[test]
    fn ridge_least_squares_solves_normal_equations(a in tall(10, 4), ridge in 1e-6f64..1.0) {
        let b: Vec<f64> = (0..a.rows()).map(|i| (i as f64).sin()).collect();
        let x = solve_least_squares(&a, &b, ridge).unwrap();
        // (AᵀA + ridge I) x = Aᵀb
        let xm = Matrix::column_vector(&x);
        let mut lhs = a.t_matmul(&a.matmul(&xm));
        lhs.axpy(ridge, &xm);
        let rhs = a.t_matmul(&Matrix::column_vector(&b));
        prop_assert!((&lhs - &rhs).frob_norm() <= 1e-9 * (1.0 + rhs.frob_norm()));
    }

    #[test]
    fn gram_solve_inverts_the_regularised_normal_matrix(a in tall(10, 4), ridge in 1e-6f64..1.0) {
        let b: Vec<f64> = (0..a.rows()).map(|i| (i as f64).cos()).collect();
        let ls = factor_least_squares(&a, &b, ridge).unwrap();
        let v: Vec<f64> = (0..a.cols()).map(|i| 1.0 - i as f64).collect();
        let y = Matrix::column_vector(&ls.solve_gram(&v));
        let mut back = a.t_matmul(&a.matmul(&y));
        back.axpy(ridge, &y);
        let vm = Matrix::column_vector(&v);
        prop_assert!((&back - &vm).frob_norm() <= 1e-8 * (1.0 + vm.frob_norm()));
    }
}

#[test]
fn least_squares_small_cases() {
    let two = Matrix::column_vector(&[1.0, 1.0]);
    assert!((solve_least_squares(&two, &[1.0, 3.0], 0.0).unwrap()[0] - 2.0).abs() <= 1e-14);
    let id = Matrix::identity(3);
    assert_eq!(solve_least_squares(&id, &[0.0; 3], 0.0).unwrap(), vec![0.0; 3]);
    let x = solve_least_squares(&id, &[1.0, -2.0, 5.0], 0.0).unwrap();
    assert!(x.iter().zip([1.0, -2.0, 5.0]).all(|(a, b)| (a - b).abs() <= 1e-14));
    let singular = Matrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
    assert!(solve_least_squares(&singular, &[1.0, 1.0], 0.0).is_err());
    assert!(solve_least_squares(&singular, &[1.0, 1.0], 1e-3).is_ok());
}
