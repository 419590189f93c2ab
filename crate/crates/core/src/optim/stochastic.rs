use std::time::Instant;

use rand::Rng;

use crate::error::Result;
use crate::manifold::{Manifold, Point, Tangent};
use crate::optim::memory::{curvature_update, QnMemory};
use crate::optim::{
    option_rng, BatchSampler, Control, EpochRecord, Observer, OptimizerConfig, OutputOption,
    RunOutput, SnapshotOption, Termination,
};
use crate::problems::FiniteSumProblem;
use crate::scalar::Real;

/// `w ← R_w(−α grad f_b(w))`.
pub fn rsgd_step<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    w: &Point<T>,
    batch: &[usize],
    alpha: T,
) -> Result<Point<T>> {
    let g = problem.batch_grad(w, batch)?;
    if g.is_zero() {
        return Ok(w.clone());
    }
    problem.manifold().retract(w, &g.scale(-alpha))
}

/// Reference point `w̃` of a variance-reduced epoch with its full gradient.
#[derive(Clone, Debug)]
pub struct VrReference<T> {
    pub point: Point<T>,
    pub full_grad: Tangent<T>,
}

impl<T: Real> VrReference<T> {
    pub fn new<P: FiniteSumProblem<T>>(problem: &P, point: Point<T>) -> Result<Self> {
        let full_grad = problem.full_grad(&point)?;
        Ok(Self { point, full_grad })
    }

    /// `grad f_b(w̃) − grad f(w̃)`.
    fn correction<P: FiniteSumProblem<T>>(&self, problem: &P, batch: &[usize]) -> Result<Tangent<T>> {
        problem.batch_grad(&self.point, batch)?.sub(&self.full_grad)
    }

    /// `R⁻¹_{w̃}(w_t)`, exactly zero when `w_t` is the reference itself.
    fn direction_to<M: Manifold<T>>(&self, m: &M, w_t: &Point<T>) -> Result<Tangent<T>> {
        if w_t.same_point(&self.point) {
            Ok(m.zero_tangent(&self.point))
        } else {
            m.inverse_retract(&self.point, w_t)
        }
    }
}

/// `ξ = grad f_b(w_t) − T_{η̃}(grad f_b(w̃) − grad f(w̃))` with `η̃ = R⁻¹_{w̃}(w_t)`.
pub fn svrg_modified_grad<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    reference: &VrReference<T>,
    w_t: &Point<T>,
    batch: &[usize],
) -> Result<Tangent<T>> {
    let m = problem.manifold();
    let g_t = problem.batch_grad(w_t, batch)?;
    let corr = reference.correction(problem, batch)?;
    if w_t.same_point(&reference.point) {
        return g_t.sub(&corr.reattach(w_t));
    }
    let eta = m.inverse_retract(&reference.point, w_t)?;
    let moved = m.transport_to(&reference.point, &eta, &corr, w_t)?;
    g_t.sub(&moved)
}

/// `ξ̃ = T⁻¹_{η̃}(grad f_b(w_t)) − (grad f_b(w̃) − grad f(w̃))`, at `w̃`, together with
/// `η̃ = R⁻¹_{w̃}(w_t)`.
pub fn sqnvr_modified_grad<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    reference: &VrReference<T>,
    w_t: &Point<T>,
    batch: &[usize],
) -> Result<(Tangent<T>, Tangent<T>)> {
    let m = problem.manifold();
    let eta = reference.direction_to(m, w_t)?;
    let g_t = problem.batch_grad(w_t, batch)?;
    let back = if eta.is_zero() {
        g_t.reattach(&reference.point)
    } else {
        m.inverse_transport(&reference.point, &eta, &g_t)?
    };
    let corr = reference.correction(problem, batch)?;
    Ok((back.sub(&corr)?, eta))
}

/// One quasi-Newton inner step: `w ← R_w(−α T_{η̃} H̃ ξ̃)`.
fn sqnvr_step<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    reference: &VrReference<T>,
    memory: &QnMemory<T>,
    w_t: &Point<T>,
    batch: &[usize],
    alpha: T,
) -> Result<Point<T>> {
    let m = problem.manifold();
    let (xi, eta) = sqnvr_modified_grad(problem, reference, w_t, batch)?;
    let h_xi = memory.two_loop_apply(m, &reference.point, &xi)?;
    let dir = if eta.is_zero() {
        h_xi.reattach(w_t)
    } else {
        m.transport_to(&reference.point, &eta, &h_xi, w_t)?
    };
    m.retract(w_t, &dir.scale(-alpha))
}

fn svrg_step<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    reference: &VrReference<T>,
    w_t: &Point<T>,
    batch: &[usize],
    alpha: T,
) -> Result<Point<T>> {
    let xi = svrg_modified_grad(problem, reference, w_t, batch)?;
    problem.manifold().retract(w_t, &xi.scale(-alpha))
}

/// Reservoir sample over every inner iterate of the run (output option IV).
struct Reservoir<T> {
    pick: Option<Point<T>>,
    seen: u64,
}

impl<T: Real> Reservoir<T> {
    fn offer<R: Rng>(&mut self, w: &Point<T>, rng: &mut R) {
        self.seen += 1;
        if rng.random_range(0..self.seen) == 0 {
            self.pick = Some(w.clone());
        }
    }
}

struct VrState<T> {
    reference: VrReference<T>,
    memory: QnMemory<T>,
    records: Vec<EpochRecord<T>>,
    reservoir: Reservoir<T>,
}

/// Shared outer loop of R-SVRG (`quasi_newton = false`) and R-SQN-VR.
fn vr_loop<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    config: &OptimizerConfig<T>,
    quasi_newton: bool,
    state: &mut VrState<T>,
    observer: &mut Observer<'_, T>,
) -> Result<Termination> {
    let m = problem.manifold();
    let n = problem.num_samples();
    let start = Instant::now();
    let mut sampler = BatchSampler::new(config.seed, n);
    let mut opt_rng = option_rng(config.seed);
    let mut evals = n as u64;
    let per_epoch = 2 * (config.batch_size * config.inner_iters) as u64;

    if m.norm(&state.reference.point, &state.reference.full_grad)? <= config.grad_tol {
        return Ok(Termination::GradTol);
    }
    for k in 0..config.max_epochs {
        let alpha = config.schedule.step(k);
        let snap_at = match config.snapshot {
            SnapshotOption::Last => config.inner_iters,
            SnapshotOption::RandomIterate => opt_rng.random_range(1..=config.inner_iters),
        };
        let use_h = quasi_newton && k >= 1;
        let mut w = state.reference.point.clone();
        let mut snapshot = None;
        for t in 1..=config.inner_iters {
            let batch = sampler.draw(config.batch_size);
            w = if use_h {
                sqnvr_step(problem, &state.reference, &state.memory, &w, &batch, alpha)?
            } else {
                svrg_step(problem, &state.reference, &w, &batch, alpha)?
            };
            if t == snap_at {
                snapshot = Some(w.clone());
            }
            if config.output == OutputOption::RandomIterate {
                state.reservoir.offer(&w, &mut opt_rng);
            }
        }
        evals += per_epoch;
        let w_new = snapshot.expect("snapshot index lies in 1..=m_k");
        let g_new = problem.full_grad(&w_new)?;
        evals += n as u64;
        if quasi_newton {
            let old = &state.reference;
            let eta = old.direction_to(m, &w_new)?;
            curvature_update(
                m,
                &mut state.memory,
                &old.point,
                &old.full_grad,
                &eta,
                &w_new,
                &g_new,
                config.cautious_eps,
            )?;
        }
        state.reference = VrReference { point: w_new, full_grad: g_new };
        let grad_norm = m.norm(&state.reference.point, &state.reference.full_grad)?;
        let record = EpochRecord {
            epoch: k + 1,
            grad_evals: evals,
            seconds: start.elapsed().as_secs_f64(),
            cost: problem.cost(&state.reference.point)?,
            grad_norm,
        };
        log::debug!("epoch {} cost {:e} |grad| {:e}", record.epoch, record.cost, grad_norm);
        let verdict = observer(&record, &state.reference.point);
        state.records.push(record);
        if grad_norm <= config.grad_tol {
            return Ok(Termination::GradTol);
        }
        if verdict == Control::Stop {
            return Ok(Termination::Stopped);
        }
    }
    Ok(Termination::MaxEpochs)
}

fn vr_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    config: &OptimizerConfig<T>,
    w0: Point<T>,
    quasi_newton: bool,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    config.validate()?;
    let mut state = VrState {
        reference: VrReference::new(problem, w0)?,
        memory: QnMemory::new(config.memory),
        records: Vec::new(),
        reservoir: Reservoir { pick: None, seen: 0 },
    };
    let termination = match vr_loop(problem, config, quasi_newton, &mut state, observer) {
        Ok(t) => t,
        Err(e) => {
            log::error!("run aborted after {} epochs: {e}", state.records.len());
            Termination::Failed(e)
        }
    };
    let solution = match config.output {
        OutputOption::Final => state.reference.point,
        OutputOption::RandomIterate => state.reservoir.pick.unwrap_or(state.reference.point),
    };
    Ok(RunOutput { solution, records: state.records, termination })
}

/// Riemannian SVRG.
pub fn svrg_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    config: &OptimizerConfig<T>,
    w0: Point<T>,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    vr_run(problem, config, w0, false, observer)
}

/// Riemannian stochastic quasi-Newton with variance reduction. Epoch 0 takes plain SVRG steps;
/// the first curvature pair is formed when it ends.
pub fn sqnvr_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    config: &OptimizerConfig<T>,
    w0: Point<T>,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    vr_run(problem, config, w0, true, observer)
}

/// Riemannian SGD; an epoch is `m_k` steps of batch size `b`. The recorded gradient norm is
/// a diagnostic evaluation and is not counted in `grad_evals`.
pub fn rsgd_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    config: &OptimizerConfig<T>,
    w0: Point<T>,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    config.validate()?;
    let m = problem.manifold();
    let start = Instant::now();
    let mut sampler = BatchSampler::new(config.seed, problem.num_samples());
    let mut opt_rng = option_rng(config.seed);
    let mut reservoir = Reservoir { pick: None, seen: 0 };
    let mut records = Vec::new();
    let mut w = w0;
    let mut evals = 0u64;
    let mut body = |w: &mut Point<T>, records: &mut Vec<EpochRecord<T>>| -> Result<Termination> {
        for k in 0..config.max_epochs {
            let alpha = config.schedule.step(k);
            for _ in 0..config.inner_iters {
                let batch = sampler.draw(config.batch_size);
                *w = rsgd_step(problem, w, &batch, alpha)?;
                if config.output == OutputOption::RandomIterate {
                    reservoir.offer(w, &mut opt_rng);
                }
            }
            evals += (config.batch_size * config.inner_iters) as u64;
            let grad_norm = m.norm(w, &problem.full_grad(w)?)?;
            let record = EpochRecord {
                epoch: k + 1,
                grad_evals: evals,
                seconds: start.elapsed().as_secs_f64(),
                cost: problem.cost(w)?,
                grad_norm,
            };
            let verdict = observer(&record, w);
            records.push(record);
            if grad_norm <= config.grad_tol {
                return Ok(Termination::GradTol);
            }
            if verdict == Control::Stop {
                return Ok(Termination::Stopped);
            }
        }
        Ok(Termination::MaxEpochs)
    };
    let termination = body(&mut w, &mut records).unwrap_or_else(|e| {
        log::error!("run aborted: {e}");
        Termination::Failed(e)
    });
    let solution = match config.output {
        OutputOption::Final => w,
        OutputOption::RandomIterate => reservoir.pick.unwrap_or(w),
    };
    Ok(RunOutput { solution, records, termination })
}
