//! Flat `key = value` experiment files.
//!
//! ```text
//! # KM-1 at desk scale
//! case = km1
//! problem = karcher
//! d = 3
//! n = 100
//! optimizers = sqnvr, svrg, sgd, lbfgs
//! alphas = 1e-5, 1e-4, 1e-3, 1e-2, 1e-1
//! inner_iters = 3N
//! epochs = 10
//! lbfgs.epochs = 60
//! seeds = 0, 1, 2, 3, 4
//! ```
//!
//! Optimizer keys apply to every optimizer; `<optimizer>.<key>` overrides them for one.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rsqn_core::optim::{DEFAULT_CAUTIOUS_EPS, DEFAULT_VARSIGMA};
use rsqn_core::problems::SynthParams;
use rsqn_core::{Config, GeometryFlavor, LineSearchParams, OutputOption, SnapshotOption, StepSchedule};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OptimizerKind {
    Sqnvr,
    Svrg,
    Sgd,
    Sd,
    Lbfgs,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 5] =
        [OptimizerKind::Sqnvr, OptimizerKind::Svrg, OptimizerKind::Sgd, OptimizerKind::Sd, OptimizerKind::Lbfgs];

    /// Short identifier used in config keys.
    pub fn key(self) -> &'static str {
        match self {
            OptimizerKind::Sqnvr => "sqnvr",
            OptimizerKind::Svrg => "svrg",
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Sd => "sd",
            OptimizerKind::Lbfgs => "lbfgs",
        }
    }

    /// Name written to the metric files.
    pub fn name(self) -> &'static str {
        match self {
            OptimizerKind::Sqnvr => "R-SQN-VR",
            OptimizerKind::Svrg => "R-SVRG",
            OptimizerKind::Sgd => "R-SGD",
            OptimizerKind::Sd => "R-SD",
            OptimizerKind::Lbfgs => "R-L-BFGS",
        }
    }

    /// Stochastic methods are tuned over the step-size grid; the batch ones use line searches.
    pub fn is_stochastic(self) -> bool {
        matches!(self, OptimizerKind::Sqnvr | OptimizerKind::Svrg | OptimizerKind::Sgd)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        OptimizerKind::ALL
            .into_iter()
            .find(|k| k.key().eq_ignore_ascii_case(s) || k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown optimizer `{s}`"))
    }
}

/// Inner iterations per epoch, either absolute or a multiple of the sample count (`3N`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InnerIters {
    Fixed(usize),
    PerSample(usize),
}

impl InnerIters {
    pub fn resolve(self, n: usize) -> usize {
        match self {
            InnerIters::Fixed(m) => m,
            InnerIters::PerSample(k) => k * n,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleKind {
    Fixed,
    Decaying,
}

/// Settings of one optimizer after overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSettings {
    pub alphas: Vec<f64>,
    pub schedule: ScheduleKind,
    pub varsigma: f64,
    pub inner_iters: InnerIters,
    pub batch_size: usize,
    pub memory: usize,
    pub cautious_eps: f64,
    /// Outer epochs; iterations for the batch methods.
    pub epochs: usize,
    pub grad_tol: f64,
    pub snapshot: SnapshotOption,
    pub output: OutputOption,
}

impl OptimizerSettings {
    fn defaults(kind: OptimizerKind) -> Self {
        Self {
            alphas: Vec::new(),
            // R-SGD decays its step; the variance-reduced methods keep it fixed.
            schedule: if kind == OptimizerKind::Sgd { ScheduleKind::Decaying } else { ScheduleKind::Fixed },
            varsigma: DEFAULT_VARSIGMA,
            inner_iters: InnerIters::PerSample(1),
            batch_size: 1,
            memory: 4,
            cautious_eps: DEFAULT_CAUTIOUS_EPS,
            epochs: 10,
            grad_tol: 0.0,
            snapshot: SnapshotOption::Last,
            output: OutputOption::Final,
        }
    }

    /// Core configuration of one stochastic run.
    pub fn optimizer_config(&self, alpha: f64, num_samples: usize, seed: u64) -> Config {
        let schedule = match self.schedule {
            ScheduleKind::Fixed => StepSchedule::Fixed { alpha },
            ScheduleKind::Decaying => StepSchedule::Decaying { alpha, varsigma: self.varsigma },
        };
        let mut c = Config::new(schedule);
        c.inner_iters = self.inner_iters.resolve(num_samples);
        c.batch_size = self.batch_size;
        c.memory = self.memory;
        c.cautious_eps = self.cautious_eps;
        c.snapshot = self.snapshot;
        c.output = self.output;
        c.max_epochs = self.epochs;
        c.grad_tol = self.grad_tol;
        c.seed = seed;
        c
    }

    pub fn line_search(&self) -> LineSearchParams<f64> {
        LineSearchParams {
            max_iters: self.epochs,
            grad_tol: self.grad_tol,
            memory: self.memory,
            cautious_eps: self.cautious_eps,
            ..LineSearchParams::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    /// Karcher mean of `n` random `d x d` SPD matrices with log10-eigenvalues in `[-spread, spread]`.
    Karcher { d: usize, n: usize, spread: f64, data_seed: u64, flavor: GeometryFlavor },
    /// Synthetic low-rank completion.
    Synthetic { params: SynthParams, ridge: f64, flavor: GeometryFlavor },
    /// A ratings file split 80/10/10.
    Ratings { path: PathBuf, split_seed: u64, r: usize, ridge: f64, flavor: GeometryFlavor },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub case: String,
    pub problem: ProblemSpec,
    pub optimizers: Vec<(OptimizerKind, OptimizerSettings)>,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Record elapsed seconds; off by default so repeated runs produce identical files.
    pub wall_clock: bool,
    /// Stop a run once its tracked metric is at or below this value.
    pub stop_below: Option<f64>,
    /// Stop once the validation MSE increases (ratings data only).
    pub validation_stop: bool,
}

const GLOBAL_KEYS: &[&str] = &[
    "case", "problem", "d", "n", "r", "spread", "os", "cn", "sigma", "data_seed", "ridge",
    "geometry", "ratings", "split_seed", "optimizers", "seeds", "out", "wall_clock",
    "stop_below", "early_stop",
];

const OPTIMIZER_KEYS: &[&str] = &[
    "alphas", "schedule", "varsigma", "inner_iters", "batch", "memory", "cautious_eps", "epochs",
    "grad_tol", "snapshot", "output",
];

struct Entry {
    value: String,
    line: usize,
}

struct Table {
    entries: BTreeMap<String, Entry>,
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::ConfigInvalid(msg.into())
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| invalid(format!("line {line}: expected `key = value`")))?;
            let key = key.trim().to_ascii_lowercase();
            let known = match key.split_once('.') {
                Some((opt, k)) => opt.parse::<OptimizerKind>().is_ok() && OPTIMIZER_KEYS.contains(&k),
                None => GLOBAL_KEYS.contains(&key.as_str()) || OPTIMIZER_KEYS.contains(&key.as_str()),
            };
            if !known {
                return Err(invalid(format!("line {line}: unknown key `{key}`")));
            }
            let entry = Entry { value: value.trim().to_string(), line };
            if let Some(prev) = entries.insert(key.clone(), entry) {
                return Err(invalid(format!("line {line}: `{key}` already set on line {}", prev.line)));
            }
        }
        Ok(Self { entries })
    }

    fn raw(&self, key: &str) -> Option<&Entry> {
        self.entries.get(key)
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key).map(|e| parse_value(e, key)).transpose()
    }

    fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| invalid(format!("missing `{key}`")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key).map(|e| parse_list(e, key)).transpose()
    }
}

fn parse_list<T: FromStr>(e: &Entry, key: &str) -> Result<Vec<T>> {
    e.value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| invalid(format!("line {}: cannot parse `{s}` in `{key}`", e.line))))
        .collect()
}

fn parse_value<T: FromStr>(e: &Entry, key: &str) -> Result<T> {
    e.value
        .parse()
        .map_err(|_| invalid(format!("line {}: cannot parse `{}` for `{key}`", e.line, e.value)))
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

fn parse_flavor(s: &str) -> Option<GeometryFlavor> {
    match s.to_ascii_lowercase().as_str() {
        "exp" | "exp-parallel" => Some(GeometryFlavor::EXP_PARALLEL),
        "second-order" => Some(GeometryFlavor::SECOND_ORDER_PARALLEL),
        "qr" | "qr-projection" => Some(GeometryFlavor::QR_PROJECTION),
        _ => None,
    }
}

fn parse_inner(s: &str) -> Option<InnerIters> {
    let s = s.trim();
    match s.strip_suffix(['N', 'n']) {
        Some(k) if k.trim().is_empty() => Some(InnerIters::PerSample(1)),
        Some(k) => k.trim().parse().ok().map(InnerIters::PerSample),
        None => s.parse().ok().map(InnerIters::Fixed),
    }
}

/// Looks up `<opt>.<key>` and falls back to `<key>`.
fn scoped<'t>(t: &'t Table, kind: OptimizerKind, key: &str) -> Option<(&'t Entry, String)> {
    let own = format!("{}.{key}", kind.key());
    match t.raw(&own) {
        Some(e) => Some((e, own)),
        None => t.raw(key).map(|e| (e, key.to_string())),
    }
}

fn settings_for(t: &Table, kind: OptimizerKind) -> Result<OptimizerSettings> {
    let mut s = OptimizerSettings::defaults(kind);
    let bad = |e: &Entry, key: &str| invalid(format!("line {}: cannot parse `{}` for `{key}`", e.line, e.value));
    if let Some((e, key)) = scoped(t, kind, "alphas") {
        s.alphas = parse_list(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "schedule") {
        s.schedule = match e.value.to_ascii_lowercase().as_str() {
            "fixed" => ScheduleKind::Fixed,
            "decaying" => ScheduleKind::Decaying,
            _ => return Err(bad(e, &key)),
        };
    }
    if let Some((e, key)) = scoped(t, kind, "varsigma") {
        s.varsigma = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "inner_iters") {
        s.inner_iters = parse_inner(&e.value).ok_or_else(|| bad(e, &key))?;
    }
    if let Some((e, key)) = scoped(t, kind, "batch") {
        s.batch_size = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "memory") {
        s.memory = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "cautious_eps") {
        s.cautious_eps = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "epochs") {
        s.epochs = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "grad_tol") {
        s.grad_tol = parse_value(e, &key)?;
    }
    if let Some((e, key)) = scoped(t, kind, "snapshot") {
        s.snapshot = match e.value.to_ascii_lowercase().as_str() {
            "last" => SnapshotOption::Last,
            "random" => SnapshotOption::RandomIterate,
            _ => return Err(bad(e, &key)),
        };
    }
    if let Some((e, key)) = scoped(t, kind, "output") {
        s.output = match e.value.to_ascii_lowercase().as_str() {
            "final" => OutputOption::Final,
            "random" => OutputOption::RandomIterate,
            _ => return Err(bad(e, &key)),
        };
    }

    let name = kind.key();
    if kind.is_stochastic() {
        if s.alphas.is_empty() {
            return Err(invalid(format!("{name}: empty step-size grid")));
        }
        if s.alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(invalid(format!("{name}: step sizes must be positive")));
        }
        if s.inner_iters.resolve(1) == 0 || s.batch_size == 0 {
            return Err(invalid(format!("{name}: inner_iters and batch must be >= 1")));
        }
    }
    if s.memory == 0 || !(s.cautious_eps > 0.0) || !(s.varsigma >= 0.0) || !(s.grad_tol >= 0.0) {
        return Err(invalid(format!("{name}: need memory >= 1, cautious_eps > 0, varsigma >= 0, grad_tol >= 0")));
    }
    Ok(s)
}

impl ExperimentConfig {
    /// Parses a config; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let t = Table::parse(text)?;
        let case: String = t.get("case")?.unwrap_or_else(|| "case".to_string());
        if case.is_empty() || case.contains(['/', '\\']) {
            return Err(invalid("`case` must be a plain file stem"));
        }
        let problem_kind: String = t.require("problem")?;
        let flavor = match t.raw("geometry") {
            Some(e) => Some(parse_flavor(&e.value).ok_or_else(|| invalid(format!("line {}: unknown geometry `{}`", e.line, e.value)))?),
            None => None,
        };
        let ridge: f64 = t.get("ridge")?.unwrap_or(1e-12);
        if !(ridge >= 0.0) {
            return Err(invalid("ridge must be non-negative"));
        }
        let problem = match problem_kind.to_ascii_lowercase().as_str() {
            "karcher" => {
                let flavor = flavor.unwrap_or(GeometryFlavor::EXP_PARALLEL);
                if flavor == GeometryFlavor::QR_PROJECTION {
                    return Err(invalid("the SPD geometry supports `exp` and `second-order`"));
                }
                let (d, n): (usize, usize) = (t.require("d")?, t.require("n")?);
                let spread: f64 = t.get("spread")?.unwrap_or(1.0);
                if d == 0 || n == 0 || !(spread >= 0.0) {
                    return Err(invalid("karcher needs d >= 1, n >= 1, spread >= 0"));
                }
                ProblemSpec::Karcher { d, n, spread, data_seed: t.get("data_seed")?.unwrap_or(1), flavor }
            }
            "synthetic" => {
                let flavor = completion_flavor(flavor)?;
                let params = SynthParams {
                    d: t.require("d")?,
                    n: t.require("n")?,
                    r: t.require("r")?,
                    os: t.require("os")?,
                    cn: t.require("cn")?,
                    sigma: t.require("sigma")?,
                    seed: t.get("data_seed")?.unwrap_or(1),
                };
                if params.r == 0 || params.r > params.d || params.r > params.n {
                    return Err(invalid("synthetic needs 1 <= r <= min(d, n)"));
                }
                if !(params.os > 0.0) || !(params.cn >= 1.0) || !(params.sigma >= 0.0) {
                    return Err(invalid("synthetic needs os > 0, cn >= 1, sigma >= 0"));
                }
                ProblemSpec::Synthetic { params, ridge, flavor }
            }
            "ratings" => {
                let flavor = completion_flavor(flavor)?;
                let path: PathBuf = t.require::<String>("ratings")?.into();
                let r: usize = t.require("r")?;
                if r == 0 {
                    return Err(invalid("ratings needs r >= 1"));
                }
                ProblemSpec::Ratings {
                    path: base_dir.join(path),
                    split_seed: t.get("split_seed")?.unwrap_or(0),
                    r,
                    ridge,
                    flavor,
                }
            }
            other => return Err(invalid(format!("unknown problem `{other}`"))),
        };

        let kinds: Vec<OptimizerKind> = match t.raw("optimizers") {
            Some(e) => e
                .value
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse().map_err(|m: String| invalid(format!("line {}: {m}", e.line))))
                .collect::<Result<_>>()?,
            None => Vec::new(),
        };
        if kinds.is_empty() {
            return Err(invalid("empty optimizer list"));
        }
        let mut optimizers = Vec::with_capacity(kinds.len());
        for kind in kinds {
            if optimizers.iter().any(|(k, _)| *k == kind) {
                return Err(invalid(format!("optimizer `{}` listed twice", kind.key())));
            }
            optimizers.push((kind, settings_for(&t, kind)?));
        }

        let seeds: Vec<u64> = t.list("seeds")?.unwrap_or_else(|| vec![0]);
        if seeds.is_empty() {
            return Err(invalid("empty seed list"));
        }
        let out: PathBuf = base_dir.join(t.get::<String>("out")?.unwrap_or_else(|| "results".into()));
        let wall_clock = match t.raw("wall_clock") {
            Some(e) => parse_bool(&e.value).ok_or_else(|| invalid(format!("line {}: expected true/false", e.line)))?,
            None => false,
        };
        let validation_stop = match t.raw("early_stop") {
            None => false,
            Some(e) => match e.value.to_ascii_lowercase().as_str() {
                "validation" => true,
                "none" => false,
                _ => return Err(invalid(format!("line {}: early_stop is `validation` or `none`", e.line))),
            },
        };
        if validation_stop && !matches!(problem, ProblemSpec::Ratings { .. }) {
            return Err(invalid("validation early stopping needs ratings data"));
        }
        Ok(Self { case, problem, optimizers, seeds, out, wall_clock, stop_below: t.get("stop_below")?, validation_stop })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn settings(&self, kind: OptimizerKind) -> Option<&OptimizerSettings> {
        self.optimizers.iter().find(|(k, _)| *k == kind).map(|(_, s)| s)
    }
}

fn completion_flavor(flavor: Option<GeometryFlavor>) -> Result<GeometryFlavor> {
    let flavor = flavor.unwrap_or(GeometryFlavor::QR_PROJECTION);
    if flavor == GeometryFlavor::SECOND_ORDER_PARALLEL {
        return Err(invalid("the Grassmann geometry supports `qr` and `exp`"));
    }
    Ok(flavor)
}

#[cfg(test)]
mod tests {
    use super::*;

    const KM: &str = "
        # desk-scale Karcher
        case = km1
        problem = karcher
        d = 3
        n = 100
        optimizers = sqnvr, svrg, sgd, lbfgs
        alphas = 1e-3, 1e-2
        inner_iters = 3N
        epochs = 10
        sgd.alphas = 1e-4   # override
        lbfgs.epochs = 60
        seeds = 0, 1, 2
    ";

    fn parse(text: &str) -> Result<ExperimentConfig> {
        ExperimentConfig::parse(text, Path::new("/tmp"))
    }

    #[test]
    fn overrides_apply_per_optimizer() {
        let c = parse(KM).unwrap();
        assert_eq!(c.case, "km1");
        assert_eq!(c.seeds, vec![0, 1, 2]);
        let sqn = c.settings(OptimizerKind::Sqnvr).unwrap();
        assert_eq!(sqn.alphas, vec![1e-3, 1e-2]);
        assert_eq!(sqn.inner_iters.resolve(100), 300);
        assert_eq!(sqn.schedule, ScheduleKind::Fixed);
        let sgd = c.settings(OptimizerKind::Sgd).unwrap();
        assert_eq!(sgd.alphas, vec![1e-4]);
        assert_eq!(sgd.schedule, ScheduleKind::Decaying);
        assert_eq!(c.settings(OptimizerKind::Lbfgs).unwrap().epochs, 60);
        assert_eq!(c.settings(OptimizerKind::Svrg).unwrap().epochs, 10);
        assert!(!c.wall_clock);
        assert_eq!(c.out, PathBuf::from("/tmp/results"));
    }

    #[test]
    fn empty_optimizer_list_is_rejected() {
        let text = KM.replace("optimizers = sqnvr, svrg, sgd, lbfgs", "optimizers =");
        assert!(matches!(parse(&text), Err(HarnessError::ConfigInvalid(_))));
        let text = KM.replace("optimizers = sqnvr, svrg, sgd, lbfgs", "");
        assert!(matches!(parse(&text), Err(HarnessError::ConfigInvalid(_))));
    }

    #[test]
    fn typos_and_bad_values_are_rejected() {
        for (from, to) in [
            ("epochs = 10", "epoch = 10"),
            ("epochs = 10", "epochs = ten"),
            ("inner_iters = 3N", "inner_iters = 3M"),
            ("alphas = 1e-3, 1e-2", "alphas = -1"),
            ("d = 3", "d = 3\nd = 4"),
            ("optimizers = sqnvr, svrg, sgd, lbfgs", "optimizers = sqnvr, adam"),
        ] {
            assert!(matches!(parse(&KM.replace(from, to)), Err(HarnessError::ConfigInvalid(_))), "{to}");
        }
    }

    #[test]
    fn inner_iteration_forms() {
        assert_eq!(parse_inner("5N"), Some(InnerIters::PerSample(5)));
        assert_eq!(parse_inner("N"), Some(InnerIters::PerSample(1)));
        assert_eq!(parse_inner("250"), Some(InnerIters::Fixed(250)));
        assert_eq!(parse_inner("x"), None);
    }

    #[test]
    fn completion_defaults_to_qr_geometry() {
        let text = "problem = synthetic\nd = 20\nn = 30\nr = 2\nos = 3\ncn = 5\nsigma = 0\n\
                    optimizers = svrg\nalphas = 0.01\nbatch = 5";
        let c = parse(text).unwrap();
        match c.problem {
            ProblemSpec::Synthetic { flavor, ridge, .. } => {
                assert_eq!(flavor, GeometryFlavor::QR_PROJECTION);
                assert_eq!(ridge, 1e-12);
            }
            _ => panic!("wrong problem"),
        }
        assert_eq!(c.settings(OptimizerKind::Svrg).unwrap().batch_size, 5);
    }
}
