use std::time::Instant;

use crate::error::{Error, Result};
use crate::manifold::{Manifold, Point, Tangent};
use crate::optim::memory::{curvature_update, QnMemory};
use crate::optim::{Control, EpochRecord, Observer, RunOutput, Termination};
use crate::problems::FiniteSumProblem;
use crate::scalar::Real;

/// Settings of the full-batch baselines. An "epoch" of these methods is one iteration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearchParams<T> {
    pub max_iters: usize,
    pub grad_tol: T,
    /// Sufficient-decrease constant.
    pub c1: T,
    /// Curvature constant of the strong Wolfe conditions.
    pub c2: T,
    /// Backtracking trials per Armijo search.
    pub armijo_trials: usize,
    /// Cost/gradient evaluations per Wolfe search.
    pub wolfe_evals: usize,
    /// L-BFGS memory.
    pub memory: usize,
    pub cautious_eps: T,
}

impl<T: Real> Default for LineSearchParams<T> {
    fn default() -> Self {
        Self {
            max_iters: 100,
            grad_tol: T::lit(1e-8),
            c1: T::lit(1e-4),
            c2: T::lit(0.9),
            armijo_trials: 50,
            wolfe_evals: 25,
            memory: 4,
            cautious_eps: T::lit(super::DEFAULT_CAUTIOUS_EPS),
        }
    }
}

/// A decrease this small relative to the cost is indistinguishable from rounding.
fn below_rounding<T: Real>(predicted: T, f: T) -> bool {
    predicted.abs() <= T::lit(100.0) * T::epsilon() * f.abs().max(T::min_positive_value())
}

struct Iterate<T> {
    x: Point<T>,
    f: T,
    g: Tangent<T>,
}

fn evaluate<T: Real, P: FiniteSumProblem<T>>(problem: &P, x: Point<T>) -> Result<Iterate<T>> {
    let f = problem.cost(&x)?;
    let g = problem.full_grad(&x)?;
    Ok(Iterate { x, f, g })
}

struct BatchLoop<'o, 'a, T> {
    start: Instant,
    evals: u64,
    n: u64,
    records: Vec<EpochRecord<T>>,
    observer: &'o mut Observer<'a, T>,
}

impl<T: Real> BatchLoop<'_, '_, T> {
    /// Records iteration `k` at `it`; returns a termination if the run should end.
    fn record<M: Manifold<T>>(&mut self, m: &M, k: usize, it: &Iterate<T>, tol: T) -> Result<Option<Termination>> {
        let grad_norm = m.norm(&it.x, &it.g)?;
        let rec = EpochRecord {
            epoch: k,
            grad_evals: self.evals,
            seconds: self.start.elapsed().as_secs_f64(),
            cost: it.f,
            grad_norm,
        };
        let verdict = (self.observer)(&rec, &it.x);
        self.records.push(rec);
        if grad_norm <= tol {
            return Ok(Some(Termination::GradTol));
        }
        Ok((verdict == Control::Stop).then_some(Termination::Stopped))
    }
}

/// Riemannian steepest descent with Armijo backtracking on `t ↦ f(R_x(−t grad f(x)))`.
///
/// The first trial step is 1, later ones twice the previously accepted step; trials halve.
pub fn rsd_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    params: &LineSearchParams<T>,
    w0: Point<T>,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    let m = problem.manifold();
    let n = problem.num_samples() as u64;
    let mut lp = BatchLoop { start: Instant::now(), evals: 0, n, records: Vec::new(), observer };
    let mut it = evaluate(problem, w0)?;
    lp.evals += lp.n;
    let mut t0 = T::one();
    let mut body = |it: &mut Iterate<T>, lp: &mut BatchLoop<'_, '_, T>| -> Result<Termination> {
        if m.norm(&it.x, &it.g)? <= params.grad_tol {
            return Ok(Termination::GradTol);
        }
        for k in 1..=params.max_iters {
            let gg = m.inner(&it.x, &it.g, &it.g)?;
            let dir = it.g.scale(-T::one());
            let mut t = t0;
            let mut accepted = None;
            for _ in 0..params.armijo_trials {
                let y = m.retract(&it.x, &dir.scale(t))?;
                let fy = problem.cost(&y)?;
                if fy <= it.f - params.c1 * t * gg {
                    accepted = Some((y, fy));
                    break;
                }
                t = t * T::lit(0.5);
            }
            let Some((y, fy)) = accepted else {
                if below_rounding(params.c1 * t0 * gg, it.f) {
                    return Ok(Termination::Stalled);
                }
                return Err(Error::LineSearchFailed { trials: params.armijo_trials });
            };
            t0 = t + t;
            let g = problem.full_grad(&y)?;
            lp.evals += lp.n;
            *it = Iterate { x: y, f: fy, g };
            if let Some(term) = lp.record(m, k, it, params.grad_tol)? {
                return Ok(term);
            }
        }
        Ok(Termination::MaxEpochs)
    };
    let termination = body(&mut it, &mut lp).unwrap_or_else(|e| {
        log::error!("R-SD aborted: {e}");
        Termination::Failed(e)
    });
    Ok(RunOutput { solution: it.x, records: lp.records, termination })
}

/// One point of the line-search function `φ(t) = f(R_x(t d))`.
struct Trial<T> {
    t: T,
    phi: T,
    dphi: T,
    it: Iterate<T>,
}

/// Strong Wolfe search (bracketing then zoom with safeguarded cubic interpolation) along
/// `t ↦ R_x(t d)`. Also accepts a step that does not increase the cost and satisfies the
/// curvature condition, which keeps the search usable once decreases drop below rounding.
#[allow(clippy::too_many_arguments)]
fn wolfe_search<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    params: &LineSearchParams<T>,
    cur: &Iterate<T>,
    d: &Tangent<T>,
    dphi0: T,
    t_init: T,
    evals: &mut u64,
) -> Result<std::result::Result<Trial<T>, usize>> {
    let m = problem.manifold();
    let phi0 = cur.f;
    let mut used = 0usize;
    let mut eval = |t: T, used: &mut usize| -> Result<Trial<T>> {
        *used += 1;
        let eta = d.scale(t);
        let y = m.retract(&cur.x, &eta)?;
        let it = evaluate(problem, y)?;
        *evals += problem.num_samples() as u64;
        let vel = m.retraction_velocity(&cur.x, &eta, &it.x)?;
        let dphi = m.inner(&it.x, &it.g, &vel)? / t;
        Ok(Trial { t, phi: it.f, dphi, it })
    };
    let strong = |tr: &Trial<T>| {
        tr.phi <= phi0 + params.c1 * tr.t * dphi0 && tr.dphi.abs() <= -params.c2 * dphi0
    };
    let approx = |tr: &Trial<T>| tr.phi <= phi0 && tr.dphi.abs() <= -params.c2 * dphi0;

    let origin = || Trial {
        t: T::zero(),
        phi: phi0,
        dphi: dphi0,
        it: Iterate { x: cur.x.clone(), f: cur.f, g: cur.g.clone() },
    };
    let mut prev = origin();
    let mut t = t_init;
    let (mut lo, mut hi);
    loop {
        if used >= params.wolfe_evals {
            return Ok(Err(used));
        }
        let tr = eval(t, &mut used)?;
        if strong(&tr) || approx(&tr) {
            return Ok(Ok(tr));
        }
        let first = prev.t == T::zero();
        if tr.phi > phi0 + params.c1 * tr.t * dphi0 || (!first && tr.phi >= prev.phi) {
            lo = prev;
            hi = tr;
            break;
        }
        if tr.dphi >= T::zero() {
            hi = prev;
            lo = tr;
            break;
        }
        t = t + t;
        prev = tr;
    }
    // Zoom: `lo` satisfies sufficient decrease with the lowest cost seen so far.
    loop {
        if used >= params.wolfe_evals {
            return Ok(Err(used));
        }
        let t = interpolate(lo.t, lo.phi, lo.dphi, hi.t, hi.phi, hi.dphi);
        let tr = eval(t, &mut used)?;
        if strong(&tr) || approx(&tr) {
            return Ok(Ok(tr));
        }
        if tr.phi > phi0 + params.c1 * tr.t * dphi0 || tr.phi >= lo.phi {
            hi = tr;
        } else {
            if tr.dphi * (hi.t - lo.t) >= T::zero() {
                hi = std::mem::replace(&mut lo, tr);
            } else {
                lo = tr;
            }
        }
    }
}

/// Minimizer of the cubic through two points with slopes, safeguarded to the middle 80 % of
/// the bracket; falls back to bisection.
fn interpolate<T: Real>(a: T, fa: T, ga: T, b: T, fb: T, gb: T) -> T {
    let (lo, hi) = if a < b { (a, b) } else { (b, a) };
    let width = hi - lo;
    let mid = (a + b) * T::lit(0.5);
    let d1 = ga + gb - T::lit(3.0) * (fa - fb) / (a - b);
    let disc = d1 * d1 - ga * gb;
    if !(disc >= T::zero()) || width <= T::zero() {
        return mid;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let denom = gb - ga + T::lit(2.0) * d2;
    if denom == T::zero() {
        return mid;
    }
    let t = b - (b - a) * (gb + d2 - d1) / denom;
    let guard = T::lit(0.1) * width;
    if !t.is_finite() || t < lo + guard || t > hi - guard {
        mid
    } else {
        t
    }
}

/// Riemannian L-BFGS with a strong Wolfe line search, sharing the curvature-pair machinery of
/// the stochastic method. Non-descent directions reset the memory to steepest descent.
pub fn rlbfgs_run<T: Real, P: FiniteSumProblem<T>>(
    problem: &P,
    params: &LineSearchParams<T>,
    w0: Point<T>,
    observer: &mut Observer<'_, T>,
) -> Result<RunOutput<T>> {
    let m = problem.manifold();
    let n = problem.num_samples() as u64;
    let mut lp = BatchLoop { start: Instant::now(), evals: 0, n, records: Vec::new(), observer };
    let mut it = evaluate(problem, w0)?;
    lp.evals += lp.n;
    let mut memory = QnMemory::new(params.memory.max(1));
    let mut body = |it: &mut Iterate<T>, lp: &mut BatchLoop<'_, '_, T>| -> Result<Termination> {
        if m.norm(&it.x, &it.g)? <= params.grad_tol {
            return Ok(Termination::GradTol);
        }
        for k in 1..=params.max_iters {
            let mut d = memory.two_loop_apply(m, &it.x, &it.g)?.scale(-T::one());
            let mut slope = m.inner(&it.x, &it.g, &d)?;
            if !(slope < T::zero()) {
                memory.clear();
                d = it.g.scale(-T::one());
                slope = m.inner(&it.x, &it.g, &d)?;
            }
            let t_init = if memory.is_empty() {
                T::one().min(T::one() / m.norm(&it.x, &it.g)?)
            } else {
                T::one()
            };
            let trial = match wolfe_search(problem, params, it, &d, slope, t_init, &mut lp.evals)? {
                Ok(tr) => tr,
                Err(used) => {
                    if below_rounding(params.c1 * t_init * slope, it.f) {
                        return Ok(Termination::Stalled);
                    }
                    return Err(Error::LineSearchFailed { trials: used });
                }
            };
            let eta = d.scale(trial.t);
            curvature_update(
                m,
                &mut memory,
                &it.x,
                &it.g,
                &eta,
                &trial.it.x,
                &trial.it.g,
                params.cautious_eps,
            )?;
            *it = trial.it;
            if let Some(term) = lp.record(m, k, it, params.grad_tol)? {
                return Ok(term);
            }
        }
        Ok(Termination::MaxEpochs)
    };
    let termination = body(&mut it, &mut lp).unwrap_or_else(|e| {
        log::error!("R-L-BFGS aborted: {e}");
        Termination::Failed(e)
    });
    Ok(RunOutput { solution: it.x, records: lp.records, termination })
}
