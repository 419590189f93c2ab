use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rsqn_core::optim::{rlbfgs_run, rsd_run, rsgd_run, sqnvr_run, svrg_run};
use rsqn_core::problems::{synth_lowrank, Entry};
use rsqn_core::{
    Control, FiniteSumProblem, Karcher, Manifold, MatComp, Point64, Record, RunOutput,
    SpdManifold, Termination,
};

use crate::config::{ExperimentConfig, OptimizerKind, OptimizerSettings, ProblemSpec};
use crate::data::{ingest_ratings, karcher_reference, karcher_samples, ColumnModel};
use crate::error::{HarnessError, Result};
use crate::metrics::{write_rows, MetricRow};

/// A built problem together with what its metrics need.
#[derive(Clone, Debug)]
pub enum Instance {
    Karcher { problem: Karcher, f_star: f64 },
    Completion { problem: MatComp, test: Vec<Entry<f64>>, validation: Vec<Entry<f64>> },
}

/// Metrics of one point beyond the cost.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Optimality gap or test MSE.
    pub metric: f64,
    pub train_mse: Option<f64>,
    pub validation_mse: Option<f64>,
}

impl Instance {
    pub fn build(spec: &ProblemSpec) -> Result<Self> {
        match spec {
            ProblemSpec::Karcher { d, n, spread, data_seed, flavor } => {
                let samples = karcher_samples(*d, *n, *spread, *data_seed);
                let problem = Karcher::new(SpdManifold::new(*d, *flavor)?, samples)?;
                let (_, f_star) = karcher_reference(&problem)?;
                log::info!("Karcher reference f* = {f_star:e}");
                Ok(Instance::Karcher { problem, f_star })
            }
            ProblemSpec::Synthetic { params, ridge, flavor } => {
                let data = synth_lowrank(params, *ridge, *flavor)?;
                log::info!(
                    "synthetic {}x{} rank {}: {} observed, {} test entries",
                    params.d,
                    params.n,
                    params.r,
                    data.problem.num_observed(),
                    data.test.len()
                );
                Ok(Instance::Completion { problem: data.problem, test: data.test, validation: Vec::new() })
            }
            ProblemSpec::Ratings { path, split_seed, r, ridge, flavor } => {
                let model = ColumnModel { r: *r, ridge: *ridge, flavor: *flavor };
                let data = ingest_ratings(path, *split_seed, &model)?;
                Ok(Instance::Completion { problem: data.problem, test: data.test, validation: data.validation })
            }
        }
    }

    pub fn num_samples(&self) -> usize {
        match self {
            Instance::Karcher { problem, .. } => problem.num_samples(),
            Instance::Completion { problem, .. } => problem.num_samples(),
        }
    }

    /// Random starting point of seed `seed`, drawn from a stream separate from batch sampling.
    pub fn initial_point(&self, seed: u64) -> Point64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(2);
        match self {
            Instance::Karcher { problem, .. } => problem.manifold().random_point(&mut rng),
            Instance::Completion { problem, .. } => problem.manifold().random_point(&mut rng),
        }
    }

    pub fn evaluate(&self, w: &Point64, cost: f64) -> Result<Evaluation> {
        Ok(match self {
            Instance::Karcher { f_star, .. } => {
                Evaluation { metric: cost - f_star, train_mse: None, validation_mse: None }
            }
            Instance::Completion { problem, test, validation } => Evaluation {
                metric: problem.mse(w, test)?,
                train_mse: Some(problem.train_mse(w)?),
                validation_mse: if validation.is_empty() { None } else { Some(problem.mse(w, validation)?) },
            },
        })
    }
}

/// Per-run knobs that are not optimizer settings.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RunOptions {
    pub wall_clock: bool,
    pub stop_below: Option<f64>,
    pub validation_stop: bool,
}

impl RunOptions {
    pub fn from_config(c: &ExperimentConfig) -> Self {
        Self { wall_clock: c.wall_clock, stop_below: c.stop_below, validation_stop: c.validation_stop }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub kind: OptimizerKind,
    pub alpha: Option<f64>,
    pub seed: u64,
    pub rows: Vec<MetricRow>,
    pub termination: Termination,
}

impl RunResult {
    pub fn failed(&self) -> bool {
        matches!(self.termination, Termination::Failed(_))
    }

    /// Metric of the last recorded epoch; `None` if the run failed or recorded nothing.
    pub fn final_metric(&self) -> Option<f64> {
        if self.failed() {
            return None;
        }
        self.rows.last().and_then(|r| r.metric)
    }

    /// First epoch whose metric is at or below `target`.
    pub fn epochs_to(&self, target: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.metric.is_some_and(|m| m <= target)).map(|r| r.epoch)
    }
}

fn dispatch<P: FiniteSumProblem<f64>>(
    problem: &P,
    kind: OptimizerKind,
    settings: &OptimizerSettings,
    alpha: Option<f64>,
    seed: u64,
    w0: Point64,
    observer: &mut dyn FnMut(&Record, &Point64) -> Control,
) -> rsqn_core::Result<RunOutput<f64>> {
    let config = || settings.optimizer_config(alpha.expect("stochastic runs carry a step size"), problem.num_samples(), seed);
    match kind {
        OptimizerKind::Sqnvr => sqnvr_run(problem, &config(), w0, observer),
        OptimizerKind::Svrg => svrg_run(problem, &config(), w0, observer),
        OptimizerKind::Sgd => rsgd_run(problem, &config(), w0, observer),
        OptimizerKind::Sd => rsd_run(problem, &settings.line_search(), w0, observer),
        OptimizerKind::Lbfgs => rlbfgs_run(problem, &settings.line_search(), w0, observer),
    }
}

/// Runs one optimizer from the seed's starting point and turns every epoch into a row.
pub fn run_single(
    instance: &Instance,
    kind: OptimizerKind,
    settings: &OptimizerSettings,
    alpha: Option<f64>,
    seed: u64,
    opts: &RunOptions,
) -> RunResult {
    let w0 = instance.initial_point(seed);
    let mut rows: Vec<MetricRow> = Vec::new();
    let mut eval_error = None;
    let mut best_validation = f64::INFINITY;
    let mut observer = |rec: &Record, w: &Point64| {
        let ev = match instance.evaluate(w, rec.cost) {
            Ok(ev) => ev,
            Err(e) => {
                eval_error = Some(e);
                return Control::Stop;
            }
        };
        rows.push(MetricRow {
            optimizer: kind.name().to_string(),
            seed,
            alpha,
            epoch: rec.epoch,
            grad_evals: rec.grad_evals,
            seconds: opts.wall_clock.then_some(rec.seconds),
            cost: Some(rec.cost),
            metric: Some(ev.metric),
            train_mse: ev.train_mse,
            grad_norm: Some(rec.grad_norm),
        });
        if opts.stop_below.is_some_and(|t| ev.metric <= t) {
            return Control::Stop;
        }
        if let (true, Some(v)) = (opts.validation_stop, ev.validation_mse) {
            if v > best_validation {
                log::debug!("{kind} seed {seed}: validation MSE rose at epoch {}", rec.epoch);
                return Control::Stop;
            }
            best_validation = v;
        }
        Control::Continue
    };
    let out = match instance {
        Instance::Karcher { problem, .. } => dispatch(problem, kind, settings, alpha, seed, w0, &mut observer),
        Instance::Completion { problem, .. } => dispatch(problem, kind, settings, alpha, seed, w0, &mut observer),
    };
    let mut termination = match out {
        Ok(out) => out.termination,
        Err(e) => Termination::Failed(e),
    };
    if let Some(e) = eval_error {
        termination = Termination::Failed(match e {
            HarnessError::Core(e) => e,
            other => rsqn_core::Error::InvalidArgument(other.to_string()),
        });
    }
    if let Termination::Failed(e) = &termination {
        let alpha_txt = alpha.map_or_else(|| "-".to_string(), |a| format!("{a:e}"));
        log::error!("{kind} alpha {alpha_txt} seed {seed} failed after {} epochs: {e}", rows.len());
        // The failure is recorded as a row with no metrics.
        let (epoch, grad_evals) = rows.last().map_or((1, 0), |r| (r.epoch + 1, r.grad_evals));
        rows.push(MetricRow {
            optimizer: kind.name().to_string(),
            seed,
            alpha,
            epoch,
            grad_evals,
            seconds: None,
            cost: None,
            metric: None,
            train_mse: None,
            grad_norm: None,
        });
    }
    RunResult { kind, alpha, seed, rows, termination }
}

/// Median with the mean of the two middle values for even counts; `+∞` entries sort last.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    assert!(n > 0, "median of an empty set");
    if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if a.is_infinite() || b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestAlpha {
    pub kind: OptimizerKind,
    pub alpha: f64,
    /// Median over seeds of the final metric; failed runs count as `+∞`.
    pub median_final: f64,
}

#[derive(Clone, Debug)]
pub struct CaseReport {
    pub runs: Vec<RunResult>,
    pub best: Vec<BestAlpha>,
}

impl CaseReport {
    pub fn rows(&self) -> impl Iterator<Item = &MetricRow> {
        self.runs.iter().flat_map(|r| &r.rows)
    }

    pub fn best_alpha(&self, kind: OptimizerKind) -> Option<f64> {
        self.best.iter().find(|b| b.kind == kind).map(|b| b.alpha)
    }

    /// Runs of `kind` at step size `alpha` (any step size for the batch methods).
    pub fn runs_of(&self, kind: OptimizerKind, alpha: Option<f64>) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.kind == kind && (alpha.is_none() || r.alpha == alpha))
    }
}

/// Smallest median final metric over the grid, ties going to the smaller step size.
pub fn select_best(kind: OptimizerKind, runs: &[RunResult]) -> Option<BestAlpha> {
    let mut alphas: Vec<f64> = runs.iter().filter(|r| r.kind == kind).filter_map(|r| r.alpha).collect();
    alphas.sort_by(f64::total_cmp);
    alphas.dedup();
    let mut best: Option<BestAlpha> = None;
    for alpha in alphas {
        let finals: Vec<f64> = runs
            .iter()
            .filter(|r| r.kind == kind && r.alpha == Some(alpha))
            .map(|r| r.final_metric().unwrap_or(f64::INFINITY))
            .collect();
        let m = median(&finals);
        if best.as_ref().is_none_or(|b| m < b.median_final) {
            best = Some(BestAlpha { kind, alpha, median_final: m });
        }
    }
    best
}

struct Job<'c> {
    kind: OptimizerKind,
    settings: &'c OptimizerSettings,
    alpha: Option<f64>,
    seed: u64,
}

/// Runs every optimizer over its step-size grid and every seed; batch baselines run once per
/// seed. Runs are spread over `parallel` threads and collected in a fixed order.
pub fn run_case(config: &ExperimentConfig, parallel: usize) -> Result<CaseReport> {
    let instance = Instance::build(&config.problem)?;
    run_case_on(config, &instance, parallel)
}

pub fn run_case_on(config: &ExperimentConfig, instance: &Instance, parallel: usize) -> Result<CaseReport> {
    let opts = RunOptions::from_config(config);
    let mut jobs = Vec::new();
    for (kind, settings) in &config.optimizers {
        let alphas: Vec<Option<f64>> =
            if kind.is_stochastic() { settings.alphas.iter().copied().map(Some).collect() } else { vec![None] };
        for alpha in alphas {
            for &seed in &config.seeds {
                jobs.push(Job { kind: *kind, settings, alpha, seed });
            }
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<RunResult>>> = Mutex::new(vec![None; jobs.len()]);
    let workers = parallel.clamp(1, jobs.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let alpha_txt = job.alpha.map_or_else(|| "-".to_string(), |a| format!("{a:e}"));
                log::info!("{} alpha {alpha_txt} seed {}", job.kind, job.seed);
                let r = run_single(instance, job.kind, job.settings, job.alpha, job.seed, &opts);
                results.lock().expect("no worker panicked while holding the lock")[i] = Some(r);
            });
        }
    });
    let runs: Vec<RunResult> = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect();
    let best = config
        .optimizers
        .iter()
        .filter(|(k, _)| k.is_stochastic())
        .filter_map(|(k, _)| select_best(*k, &runs))
        .collect();
    Ok(CaseReport { runs, best })
}

/// Writes `<case>.csv` with every row and `<case>_best.csv` with the selected step sizes.
pub fn write_report(config: &ExperimentConfig, report: &CaseReport) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(&config.out).map_err(HarnessError::io(&config.out))?;
    let rows_path = config.out.join(format!("{}.csv", config.case));
    let file = File::create(&rows_path).map_err(HarnessError::io(&rows_path))?;
    let rows: Vec<MetricRow> = report.rows().cloned().collect();
    write_rows(BufWriter::new(file), &rows)?;

    let best_path = config.out.join(format!("{}_best.csv", config.case));
    let mut w = csv::Writer::from_path(&best_path)?;
    w.write_record(["optimizer", "alpha", "median_final_metric"])?;
    for b in &report.best {
        w.write_record([b.kind.name().to_string(), format!("{:e}", b.alpha), format!("{:e}", b.median_final)])?;
    }
    w.flush().map_err(HarnessError::io(&best_path))?;
    Ok(vec![rows_path, best_path])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(kind: OptimizerKind, alpha: f64, seed: u64, last: Option<f64>) -> RunResult {
        let termination = if last.is_some() { Termination::MaxEpochs } else { Termination::Failed(rsqn_core::Error::NotFinite) };
        let rows = vec![MetricRow {
            optimizer: kind.name().into(),
            seed,
            alpha: Some(alpha),
            epoch: 1,
            grad_evals: 0,
            seconds: None,
            cost: None,
            metric: last,
            train_mse: None,
            grad_norm: None,
        }];
        RunResult { kind, alpha: Some(alpha), seed, rows, termination }
    }

    #[test]
    fn ties_go_to_the_smaller_step() {
        let k = OptimizerKind::Svrg;
        let runs = vec![fake(k, 0.1, 0, Some(1.0)), fake(k, 0.01, 0, Some(1.0)), fake(k, 0.05, 0, Some(2.0))];
        let b = select_best(k, &runs).unwrap();
        assert_eq!(b.alpha, 0.01);
    }

    #[test]
    fn failures_count_as_infinite() {
        let k = OptimizerKind::Sqnvr;
        let runs = vec![
            fake(k, 0.1, 0, None),
            fake(k, 0.1, 1, Some(1e-9)),
            fake(k, 0.1, 2, None),
            fake(k, 0.01, 0, Some(1e-3)),
            fake(k, 0.01, 1, Some(1e-3)),
            fake(k, 0.01, 2, Some(1e-3)),
        ];
        assert_eq!(select_best(k, &runs).unwrap().alpha, 0.01);
    }

    #[test]
    fn median_forms() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(median(&[1.0, f64::INFINITY]), f64::INFINITY);
    }
}
