mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsqn_core::optim::{
    curvature_update, keep_going, rlbfgs_run, rsd_run, rsgd_run, rsgd_step, sqnvr_modified_grad,
    sqnvr_run, svrg_modified_grad, svrg_run, VrReference,
};
use rsqn_core::problems::Counted;
use rsqn_core::{
    Config, Control, Euclidean, FiniteSumProblem, GeometryFlavor, Karcher, LineSearchParams,
    Manifold, Matrix, OutputOption, Point64, QnMemory, Quadratic, Record, SnapshotOption,
    SpdManifold, StepSchedule, Termination,
};

fn karcher(d: usize, n: usize, seed: u64) -> Karcher {
    let mut rng = rng(seed);
    let samples = (0..n).map(|_| spd(d, 1.0, &mut rng)).collect();
    Karcher::new(SpdManifold::exp_parallel(d), samples).unwrap()
}

fn quadratic(dim: usize, n: usize, seed: u64) -> Quadratic {
    Quadratic::random(dim, n, 10.0, &mut rng(seed))
}

fn config(alpha: f64, m: usize, b: usize, epochs: usize, seed: u64) -> Config {
    let mut c = Config::new(StepSchedule::Fixed { alpha });
    c.inner_iters = m;
    c.batch_size = b;
    c.max_epochs = epochs;
    c.seed = seed;
    c
}

fn start(p: &impl FiniteSumProblem<f64>, seed: u64) -> Point64 {
    p.manifold().random_point(&mut rng(seed))
}

/// Records with the wall-clock column dropped.
fn metrics(records: &[Record]) -> Vec<(usize, u64, f64, f64)> {
    records.iter().map(|r| (r.epoch, r.grad_evals, r.cost, r.grad_norm)).collect()
}

#[test]
fn euclidean_sgd_step_example() {
    // f(x) = ½ (x − 1)², gradient 1 at x = 2.
    let p = Quadratic::new(vec![Matrix::from_diag(&[1.0])], vec![Matrix::from_diag(&[1.0])]).unwrap();
    let w = p.manifold().point(Matrix::from_diag(&[2.0])).unwrap();
    let next = rsgd_step(&p, &w, &[0], 0.5).unwrap();
    assert_eq!(next.matrix()[(0, 0)], 1.5);

    let at_min = p.manifold().point(Matrix::from_diag(&[1.0])).unwrap();
    assert!(rsgd_step(&p, &at_min, &[0], 0.5).unwrap().same_point(&at_min));
}

#[test]
fn full_batch_sgd_reaches_single_sample_karcher_mean() {
    let p = karcher(3, 1, 1);
    let w0 = start(&p, 2);
    let mut c = config(0.25, 1, 1, 50, 0);
    c.grad_tol = 0.0;
    let out = rsgd_run(&p, &c, w0, &mut keep_going).unwrap();
    assert!(out.records.len() <= 50);
    assert!(out.records.last().unwrap().cost <= 1e-10);
}

#[test]
fn svrg_gradient_identities() {
    let kp = karcher(3, 6, 3);
    let qp = quadratic(4, 6, 4);
    fn check<P: FiniteSumProblem<f64>>(p: &P, seed: u64) {
        let m = p.manifold();
        let mut r = rng(seed);
        let w_ref: Point64 = m.random_point(&mut r);
        let reference = VrReference::new(p, w_ref.clone()).unwrap();
        let n = p.num_samples();
        let all: Vec<usize> = (0..n).collect();

        // At the reference point the modified gradient is the full gradient.
        let at_ref = svrg_modified_grad(p, &reference, &w_ref, &[2]).unwrap();
        assert!((at_ref.matrix() - reference.full_grad.matrix()).frob_norm() <= 1e-12);

        let w_t = m.retract(&w_ref, &unit_tangent(m, &w_ref, &mut r).scale(0.3)).unwrap();
        let full_t = p.full_grad(&w_t).unwrap();
        let scale = 1.0 + full_t.matrix().frob_norm();

        // Unbiased: the average over singleton batches is the full gradient.
        let mut mean = Matrix::zeros(full_t.matrix().rows(), full_t.matrix().cols());
        for i in 0..n {
            mean += svrg_modified_grad(p, &reference, &w_t, &[i]).unwrap().matrix();
        }
        let mean = mean.scale(1.0 / n as f64);
        assert!((&mean - full_t.matrix()).frob_norm() <= 1e-12 * scale);

        // The whole index set cancels the correction.
        let whole = svrg_modified_grad(p, &reference, &w_t, &all).unwrap();
        assert!((whole.matrix() - full_t.matrix()).frob_norm() <= 1e-12 * scale);

        // The quasi-Newton variant lives at the reference and pulls the same quantity back.
        let (xi, eta) = sqnvr_modified_grad(p, &reference, &w_t, &all).unwrap();
        assert!(xi.base().same_point(&w_ref));
        let pulled = m.inverse_transport(&w_ref, &eta, &full_t).unwrap();
        assert!((xi.matrix() - pulled.matrix()).frob_norm() <= 1e-12 * scale);
    }
    check(&kp, 5);
    check(&qp, 6);
}

#[test]
fn flat_sqn_modified_gradient_equals_svrg() {
    let p = quadratic(5, 8, 7);
    let m = p.manifold();
    let mut r = rng(8);
    let reference = VrReference::new(&p, m.random_point(&mut r)).unwrap();
    let w_t: Point64 = m.random_point(&mut r);
    for batch in [vec![0], vec![3, 3, 7], vec![1, 2, 4, 5]] {
        let a = svrg_modified_grad(&p, &reference, &w_t, &batch).unwrap();
        let (b, _) = sqnvr_modified_grad(&p, &reference, &w_t, &batch).unwrap();
        assert!((a.matrix() - b.matrix()).frob_norm() <= 1e-13 * (1.0 + a.matrix().frob_norm()));
    }
}

/// Plain-vector SVRG on `½ xᵀAₙx − bₙᵀx` with the same sampling stream as the library.
fn flat_svrg(a: &[Matrix], b: &[Matrix], x0: &Matrix, alpha: f64, m: usize, epochs: usize, seed: u64) -> Matrix {
    let n = a.len();
    let grad = |i: usize, x: &Matrix| &a[i].matmul(x) - &b[i];
    let full = |x: &Matrix| {
        let mut g = Matrix::zeros(x.rows(), 1);
        for i in 0..n {
            g += &grad(i, x);
        }
        g.scale(1.0 / n as f64)
    };
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    let mut x_ref = x0.clone();
    for _ in 0..epochs {
        let mu = full(&x_ref);
        let mut x = x_ref.clone();
        for _ in 0..m {
            let i = sampler.random_range(0..n);
            let xi = &(&grad(i, &x) - &grad(i, &x_ref)) + &mu;
            x.axpy(-alpha, &xi);
        }
        x_ref = x;
    }
    x_ref
}

#[test]
fn euclidean_svrg_matches_flat_reference_implementation() {
    let dim = 4;
    let n = 10;
    let mut r = rng(9);
    let a: Vec<Matrix> = (0..n).map(|_| spd(dim, 0.5, &mut r)).collect();
    let b: Vec<Matrix> = (0..n).map(|_| gaussian(dim, 1, &mut r)).collect();
    let p = Quadratic::new(a.clone(), b.clone()).unwrap();
    let x0 = gaussian(dim, 1, &mut r);
    let mut c = config(0.05, 15, 1, 6, 42);
    c.grad_tol = 0.0;
    let out = svrg_run(&p, &c, p.manifold().point(x0.clone()).unwrap(), &mut keep_going).unwrap();
    let want = flat_svrg(&a, &b, &x0, 0.05, 15, 6, 42);
    assert!((out.solution.matrix() - &want).frob_norm() <= 1e-12 * (1.0 + want.frob_norm()));
}

#[test]
fn sqnvr_converges_on_a_strongly_convex_quadratic() {
    let p = quadratic(6, 20, 10);
    let mut c = config(0.02, 40, 2, 200, 11);
    c.grad_tol = 1e-8;
    let out = sqnvr_run(&p, &c, start(&p, 12), &mut keep_going).unwrap();
    assert_eq!(out.termination, Termination::GradTol);
    let x_star = p.minimizer().unwrap();
    assert!((out.solution.matrix() - &x_star).frob_norm() <= 1e-6);
    let svrg = svrg_run(&p, &c, start(&p, 12), &mut keep_going).unwrap();
    assert_eq!(svrg.termination, Termination::GradTol);
}

#[test]
fn single_sample_sqnvr_is_deterministic_preconditioned_descent() {
    let p = quadratic(4, 1, 13);
    let m: &Euclidean = p.manifold();
    let (alpha, inner, epochs, eps) = (0.05, 5, 8, 1e-4);
    let mut c = config(alpha, inner, 1, epochs, 14);
    c.memory = 3;
    c.grad_tol = 0.0;
    let w0 = start(&p, 15);
    let out = sqnvr_run(&p, &c, w0.clone(), &mut keep_going).unwrap();

    let grad = |w: &Point64| p.full_grad(w).unwrap();
    let mut mem = QnMemory::new(3);
    let (mut w_ref, mut g_ref) = (w0.clone(), grad(&w0));
    for k in 0..epochs {
        let mut w = w_ref.clone();
        for _ in 0..inner {
            let g = grad(&w);
            let dir = if k == 0 {
                g
            } else {
                // Flat transport is the identity: move the vector between base points.
                let at_ref = m.tangent(&w_ref, g.matrix().clone()).unwrap();
                let h = mem.two_loop_apply(m, &w_ref, &at_ref).unwrap();
                m.tangent(&w, h.matrix().clone()).unwrap()
            };
            w = m.retract(&w, &dir.scale(-alpha)).unwrap();
        }
        let g_new = grad(&w);
        let eta = m.inverse_retract(&w_ref, &w).unwrap();
        curvature_update(m, &mut mem, &w_ref, &g_ref, &eta, &w, &g_new, eps).unwrap();
        w_ref = w;
        g_ref = g_new;
    }
    let err = (out.solution.matrix() - w_ref.matrix()).frob_norm();
    assert!(err <= 1e-12 * (1.0 + w_ref.matrix().frob_norm()), "{err:e}");
}

#[test]
fn first_sqnvr_epoch_follows_svrg_on_the_grassmannian() {
    // No curvature pair exists before the first epoch ends, so the preconditioner is the
    // identity and only the transport round trip separates the two methods.
    let params = rsqn_core::problems::SynthParams { d: 30, n: 60, r: 3, os: 4.0, cn: 20.0, sigma: 1e-6, seed: 21 };
    let p = rsqn_core::problems::synth_lowrank(&params, 1e-12, GeometryFlavor::QR_PROJECTION).unwrap().problem;
    let w0 = start(&p, 22);
    let mut c = config(0.02, 120, 10, 1, 23);
    c.memory = 10;
    c.grad_tol = 0.0;
    let a = sqnvr_run(&p, &c, w0.clone(), &mut keep_going).unwrap();
    let b = svrg_run(&p, &c, w0, &mut keep_going).unwrap();
    let d = p.manifold().dist(&a.solution, &b.solution).unwrap();
    assert!(d <= 1e-7, "distance after one epoch {d:e}");
    assert!((a.records[0].cost - b.records[0].cost).abs() <= 1e-10 * b.records[0].cost.max(1.0));
}

#[test]
fn single_sample_svrg_is_gradient_descent() {
    let p = quadratic(3, 1, 16);
    let m = p.manifold();
    let mut c = config(0.1, 4, 1, 5, 17);
    c.grad_tol = 0.0;
    let w0 = start(&p, 18);
    let out = svrg_run(&p, &c, w0.clone(), &mut keep_going).unwrap();
    let mut w = w0;
    for _ in 0..20 {
        w = m.retract(&w, &p.full_grad(&w).unwrap().scale(-0.1)).unwrap();
    }
    assert!((out.solution.matrix() - w.matrix()).frob_norm() <= 1e-12);
}

#[test]
fn runs_are_reproducible_from_the_seed() {
    let p = karcher(3, 12, 19);
    let mut c = config(0.05, 12, 2, 4, 20);
    c.snapshot = SnapshotOption::RandomIterate;
    c.output = OutputOption::RandomIterate;
    let w0 = start(&p, 21);
    for run in [sqnvr_run::<f64, Karcher>, svrg_run, rsgd_run] {
        let a = run(&p, &c, w0.clone(), &mut keep_going).unwrap();
        let b = run(&p, &c, w0.clone(), &mut keep_going).unwrap();
        assert_eq!(metrics(&a.records), metrics(&b.records));
        assert_eq!(a.solution.matrix(), b.solution.matrix());
        let mut other = c;
        other.seed = 99;
        let d = run(&p, &other, w0.clone(), &mut keep_going).unwrap();
        assert_ne!(metrics(&a.records), metrics(&d.records));
    }
}

#[test]
fn gradient_evaluation_accounting() {
    let n = 9;
    let (m_k, b, epochs) = (5, 3, 4);
    let mut c = config(0.02, m_k, b, epochs, 22);
    c.grad_tol = 0.0;
    for quasi_newton in [false, true] {
        let p = Counted::new(karcher(2, n, 23));
        let w0 = start(p.inner(), 24);
        let out = if quasi_newton {
            sqnvr_run(&p, &c, w0, &mut keep_going).unwrap()
        } else {
            svrg_run(&p, &c, w0, &mut keep_going).unwrap()
        };
        for r in &out.records {
            assert_eq!(r.grad_evals, (n + r.epoch * (2 * b * m_k + n)) as u64);
        }
        assert_eq!(out.records.last().unwrap().grad_evals, p.grad_evals());
    }
    let p = Counted::new(karcher(2, n, 23));
    let out = rsgd_run(&p, &c, start(p.inner(), 24), &mut keep_going).unwrap();
    for r in &out.records {
        assert_eq!(r.grad_evals, (r.epoch * b * m_k) as u64);
    }
    // The per-epoch gradient norm of SGD is a diagnostic and costs N uncounted evaluations.
    assert_eq!(p.grad_evals(), (epochs * (b * m_k + n)) as u64);
}

#[test]
fn observer_can_stop_a_run() {
    let p = karcher(2, 5, 25);
    let c = config(0.05, 5, 1, 10, 26);
    let mut stop_after_two = |r: &Record, _: &Point64| if r.epoch == 2 { Control::Stop } else { Control::Continue };
    let out = sqnvr_run(&p, &c, start(&p, 27), &mut stop_after_two).unwrap();
    assert_eq!(out.termination, Termination::Stopped);
    assert_eq!(out.records.len(), 2);
}

#[test]
fn invalid_configurations_are_rejected() {
    let p = karcher(2, 3, 28);
    let w0 = start(&p, 29);
    let mut c = config(0.1, 0, 1, 1, 0);
    assert!(sqnvr_run(&p, &c, w0.clone(), &mut keep_going).is_err());
    c = config(-0.1, 1, 1, 1, 0);
    assert!(svrg_run(&p, &c, w0, &mut keep_going).is_err());
}

#[test]
fn steepest_descent_decreases_the_cost_monotonically() {
    let p = karcher(3, 10, 30);
    let out = rsd_run(&p, &LineSearchParams::default(), start(&p, 31), &mut keep_going).unwrap();
    assert!(out.records.len() >= 2);
    assert!(out.records.windows(2).all(|w| w[1].cost <= w[0].cost));
}

#[test]
fn lbfgs_solves_scalar_single_sample_karcher_quickly() {
    let e = std::f64::consts::E;
    let p = Karcher::new(SpdManifold::exp_parallel(1), vec![Matrix::from_diag(&[e])]).unwrap();
    let w0 = p.manifold().point(Matrix::from_diag(&[1.0])).unwrap();
    let mut params = LineSearchParams::default();
    params.grad_tol = 0.0;
    params.max_iters = 10;
    let out = rlbfgs_run(&p, &params, w0, &mut keep_going).unwrap();
    let best = out.records.iter().filter(|r| r.epoch <= 10).map(|r| r.cost).fold(f64::INFINITY, f64::min);
    assert!(best <= 1e-12, "{best:e}");
    assert!(out.records.windows(2).all(|w| w[1].cost <= w[0].cost));
}

#[test]
fn lbfgs_beats_steepest_descent_on_an_ill_conditioned_problem() {
    let mut rng = rng(32);
    let samples = (0..20).map(|_| spd(4, 1.5, &mut rng)).collect();
    let p = Karcher::new(SpdManifold::new(4, GeometryFlavor::EXP_PARALLEL).unwrap(), samples).unwrap();
    let mut params = LineSearchParams::default();
    params.grad_tol = 1e-6;
    params.max_iters = 500;
    let w0 = start(&p, 33);
    let lb = rlbfgs_run(&p, &params, w0.clone(), &mut keep_going).unwrap();
    let sd = rsd_run(&p, &params, w0, &mut keep_going).unwrap();
    assert_eq!(lb.termination, Termination::GradTol);
    assert!(lb.records.len() < sd.records.len());
}
