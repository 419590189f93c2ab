//! Optimizers sharing one epoch loop: R-SGD, R-SVRG, R-SQN-VR, and the batch baselines
//! R-SD (Armijo backtracking) and R-L-BFGS (strong Wolfe).

mod batch;
mod memory;
mod stochastic;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::manifold::Point;
use crate::scalar::Real;

pub use batch::{rlbfgs_run, rsd_run, LineSearchParams};
pub use memory::{curvature_update, CurvaturePair, QnMemory};
pub use stochastic::{
    rsgd_run, rsgd_step, sqnvr_modified_grad, sqnvr_run, svrg_modified_grad, svrg_run, VrReference,
};

/// Default `ς` of the decaying schedule.
pub const DEFAULT_VARSIGMA: f64 = 1e-3;

/// Default cautious-update threshold `ε`.
pub const DEFAULT_CAUTIOUS_EPS: f64 = 1e-4;

/// Step size as a function of the outer epoch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepSchedule<T> {
    Fixed { alpha: T },
    /// `α (1 + α ς k)⁻¹` at epoch `k`.
    Decaying { alpha: T, varsigma: T },
}

impl<T: Real> StepSchedule<T> {
    pub fn step(&self, epoch: usize) -> T {
        match *self {
            StepSchedule::Fixed { alpha } => alpha,
            StepSchedule::Decaying { alpha, varsigma } => {
                alpha / (T::one() + alpha * varsigma * T::from_count(epoch))
            }
        }
    }

    pub fn alpha(&self) -> T {
        match *self {
            StepSchedule::Fixed { alpha } | StepSchedule::Decaying { alpha, .. } => alpha,
        }
    }

    fn validate(&self) -> Result<()> {
        let (alpha, varsigma) = match *self {
            StepSchedule::Fixed { alpha } => (alpha, T::zero()),
            StepSchedule::Decaying { alpha, varsigma } => (alpha, varsigma),
        };
        if !(alpha > T::zero()) || !(varsigma >= T::zero()) {
            return Err(Error::InvalidArgument("step schedule needs alpha > 0 and varsigma >= 0".into()));
        }
        Ok(())
    }
}

/// Which inner iterate becomes the next reference point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SnapshotOption {
    /// The last inner iterate.
    #[default]
    Last,
    /// An inner iterate chosen uniformly at random.
    RandomIterate,
}

/// What the run returns as its solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum OutputOption {
    /// The final reference point.
    #[default]
    Final,
    /// An inner iterate chosen uniformly at random over the whole run.
    RandomIterate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerConfig<T> {
    /// Inner iterations per outer epoch (`m_k`).
    pub inner_iters: usize,
    pub batch_size: usize,
    /// Number of curvature pairs kept (`L`).
    pub memory: usize,
    /// Cautious-update threshold `ε`.
    pub cautious_eps: T,
    pub schedule: StepSchedule<T>,
    pub snapshot: SnapshotOption,
    pub output: OutputOption,
    pub max_epochs: usize,
    /// Stop once the full gradient norm at the reference point is at or below this.
    pub grad_tol: T,
    pub seed: u64,
}

impl<T: Real> OptimizerConfig<T> {
    pub fn new(schedule: StepSchedule<T>) -> Self {
        Self {
            inner_iters: 1,
            batch_size: 1,
            memory: 4,
            cautious_eps: T::lit(DEFAULT_CAUTIOUS_EPS),
            schedule,
            snapshot: SnapshotOption::Last,
            output: OutputOption::Final,
            max_epochs: 10,
            grad_tol: T::lit(1e-8),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.inner_iters == 0 || self.batch_size == 0 || self.memory == 0 {
            return Err(Error::InvalidArgument("inner_iters, batch_size and memory must be >= 1".into()));
        }
        if !(self.cautious_eps > T::zero()) {
            return Err(Error::InvalidArgument("cautious threshold must be positive".into()));
        }
        if !(self.grad_tol >= T::zero()) {
            return Err(Error::InvalidArgument("grad_tol must be non-negative".into()));
        }
        self.schedule.validate()
    }
}

/// Measurements taken at the reference point after an outer epoch (or batch iteration).
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord<T> {
    /// 1-based epoch index.
    pub epoch: usize,
    /// Per-sample gradient evaluations performed by the algorithm so far.
    pub grad_evals: u64,
    pub seconds: f64,
    pub cost: T,
    pub grad_norm: T,
}

/// Verdict returned by an epoch observer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Called after every recorded epoch with the record and the current reference point.
pub type Observer<'a, T> = dyn FnMut(&EpochRecord<T>, &Point<T>) -> Control + 'a;

/// Observer that never stops the run.
pub fn keep_going<T>(_: &EpochRecord<T>, _: &Point<T>) -> Control {
    Control::Continue
}

#[derive(Clone, Debug, PartialEq)]
pub enum Termination {
    GradTol,
    MaxEpochs,
    /// The observer asked to stop.
    Stopped,
    /// The line search could not produce a measurable decrease: the cost is at its rounding floor.
    Stalled,
    /// A numerical error aborted the run; the records up to the failure are kept.
    Failed(Error),
}

#[derive(Clone, Debug)]
pub struct RunOutput<T> {
    /// The solution selected by the output option.
    pub solution: Point<T>,
    pub records: Vec<EpochRecord<T>>,
    pub termination: Termination,
}

/// Uniform sampling with replacement from `0..n`.
pub(crate) struct BatchSampler {
    rng: ChaCha8Rng,
    n: usize,
}

impl BatchSampler {
    pub(crate) fn new(seed: u64, n: usize) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed), n }
    }

    pub(crate) fn draw(&mut self, b: usize) -> Vec<usize> {
        (0..b).map(|_| self.rng.random_range(0..self.n)).collect()
    }
}

/// Random stream for the snapshot/output options, independent of the batch stream.
pub(crate) fn option_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    rng
}
