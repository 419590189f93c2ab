use std::io::Write;
use std::path::Path;
use std::process::Command;

use rsqn_core::GeometryFlavor;
use rsqn_harness::*;

const KM_SMALL: &str = "
case = km_small
problem = karcher
d = 3
n = 20
data_seed = 4
optimizers = sqnvr, svrg, sgd, sd, lbfgs
alphas = 1e-3, 1e-2
inner_iters = 3N
epochs = 10
sd.epochs = 15
seeds = 0, 1
";

const MC_SMALL: &str = "
case = mc_small
problem = synthetic
d = 30
n = 60
r = 3
os = 4
cn = 5
sigma = 1e-10
optimizers = sqnvr, svrg, sgd
alphas = 1e-2
inner_iters = 5N
batch = 10
memory = 10
epochs = 3
seeds = 7
";

fn config(text: &str, dir: &Path) -> ExperimentConfig {
    ExperimentConfig::parse(text, dir).unwrap()
}

#[test]
fn karcher_case_rows_and_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(KM_SMALL, dir.path());
    let report = run_case(&cfg, 2).unwrap();
    // 3 stochastic methods x 2 step sizes x 2 seeds, plus 2 batch methods x 2 seeds.
    assert_eq!(report.runs.len(), 3 * 2 * 2 + 2 * 2);
    for run in &report.runs {
        assert!(!run.failed(), "{:?}", run.termination);
        if run.kind.is_stochastic() {
            assert_eq!(run.rows.len(), 10, "{} {:?}", run.kind, run.alpha);
            assert!(run.rows.iter().map(|r| r.epoch).eq(1..=10));
        } else {
            assert!(run.alpha.is_none());
        }
        for r in &run.rows {
            assert!(r.metric.unwrap() >= -1e-12, "gap {:e}", r.metric.unwrap());
            assert!(r.train_mse.is_none() && r.seconds.is_none());
        }
    }
    assert_eq!(report.best.len(), 3);
    for b in &report.best {
        assert!([1e-3, 1e-2].contains(&b.alpha));
    }

    let paths = write_report(&cfg, &report).unwrap();
    let back = read_rows(std::fs::File::open(&paths[0]).unwrap()).unwrap();
    let rows: Vec<MetricRow> = report.rows().cloned().collect();
    assert_eq!(back, rows);
    let best = std::fs::read_to_string(&paths[1]).unwrap();
    assert_eq!(best.lines().count(), 4);
}

#[test]
fn completion_case_fills_both_mse_columns() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(MC_SMALL, dir.path());
    let report = run_case(&cfg, 1).unwrap();
    for run in &report.runs {
        assert_eq!(run.rows.len(), 3);
        for r in &run.rows {
            assert!(r.metric.unwrap() >= 0.0);
            assert!(r.train_mse.unwrap() >= 0.0);
        }
    }
}

#[test]
fn gradient_evaluations_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(MC_SMALL, dir.path());
    let report = run_case(&cfg, 1).unwrap();
    let (n, m, b) = (60u64, 300u64, 10u64);
    for run in &report.runs {
        let per_epoch = match run.kind {
            OptimizerKind::Sgd => b * m,
            _ => n + 2 * b * m,
        };
        let start = if run.kind == OptimizerKind::Sgd { 0 } else { n };
        for r in &run.rows {
            assert_eq!(r.grad_evals, start + per_epoch * r.epoch as u64, "{}", run.kind);
        }
    }
}

#[test]
fn repeated_runs_write_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for text in [KM_SMALL, MC_SMALL] {
        let ca = config(text, a.path());
        let cb = config(text, b.path());
        let pa = write_report(&ca, &run_case(&ca, 1).unwrap()).unwrap();
        let pb = write_report(&cb, &run_case(&cb, 3).unwrap()).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
    }
}

#[test]
fn wall_clock_column_is_opt_in() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(MC_SMALL, dir.path());
    cfg.wall_clock = true;
    let report = run_case(&cfg, 1).unwrap();
    assert!(report.rows().all(|r| r.seconds.is_some_and(|s| s >= 0.0)));
}

#[test]
fn failing_runs_leave_an_na_row_and_others_continue() {
    let dir = tempfile::tempdir().unwrap();
    // A huge step overflows the SPD exponential; the small one is fine.
    let text = KM_SMALL.replace("alphas = 1e-3, 1e-2", "alphas = 1e-3, 1e6").replace("sd.epochs = 15", "");
    let cfg = config(&text, dir.path());
    let report = run_case(&cfg, 1).unwrap();
    let failed: Vec<&RunResult> = report.runs.iter().filter(|r| r.failed()).collect();
    assert!(!failed.is_empty());
    for f in &failed {
        assert_eq!(f.alpha, Some(1e6));
        let last = f.rows.last().unwrap();
        assert!(last.cost.is_none() && last.metric.is_none());
    }
    assert!(report.runs.iter().any(|r| r.alpha == Some(1e-3) && !r.failed()));
    for b in &report.best {
        assert_eq!(b.alpha, 1e-3);
    }
}

fn ratings_file(dir: &Path, lines: usize) -> std::path::PathBuf {
    let path = dir.join("ratings.dat");
    let mut f = std::fs::File::create(&path).unwrap();
    for i in 0..lines {
        let user = 1 + (i * 7) % 50;
        let item = 1 + (i * 13) % 40;
        writeln!(f, "{user}::{item}::{}::97830{i:04}", 1 + i % 5).unwrap();
    }
    path
}

#[test]
fn ingestion_split_counts_match_the_seeded_draw() {
    let dir = tempfile::tempdir().unwrap();
    let model = ColumnModel { r: 2, ridge: 1e-6, flavor: GeometryFlavor::QR_PROJECTION };
    for lines in [10, 400] {
        let path = ratings_file(dir.path(), lines);
        let data = ingest_ratings(&path, 11, &model).unwrap();
        let draw = split_assignment(lines, 11);
        let count = |s: Split| draw.iter().filter(|&&x| x == s).count();
        assert_eq!(data.split_counts, [count(Split::Train), count(Split::Validation), count(Split::Test)]);
        assert_eq!(data.split_counts.iter().sum::<usize>(), lines);
        assert_eq!(data.problem.num_observed(), count(Split::Train));
        assert_eq!(data.validation.len() + data.test.len() + data.dropped_held_out, lines - count(Split::Train));
    }
}

#[test]
fn item_with_all_ratings_in_train_keeps_its_full_column() {
    let ratings: Vec<Rating> = (1..=6).map(|u| Rating { user: u, item: 1, value: u as f64 }).collect();
    let draw = split_assignment(6, 3);
    let model = ColumnModel { r: 1, ridge: 0.0, flavor: GeometryFlavor::QR_PROJECTION };
    let data = build_ratings(&ratings, 3, &model).unwrap();
    let train: Vec<usize> = (0..6).filter(|&i| draw[i] == Split::Train).collect();
    assert_eq!(data.problem.columns()[0].rows, train);
    if train.len() == 6 {
        assert_eq!(data.problem.columns()[0].values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }
}

#[test]
fn items_without_training_ratings_are_dropped() {
    let ratings = vec![
        Rating { user: 1, item: 1, value: 3.0 },
        Rating { user: 2, item: 1, value: 4.0 },
        Rating { user: 1, item: 5, value: 2.0 },
    ];
    // Find a split seed that puts the item-5 rating outside train.
    let seed = (0..100).find(|&s| split_assignment(3, s)[2] != Split::Train && split_assignment(3, s)[0] == Split::Train).unwrap();
    let model = ColumnModel { r: 1, ridge: 1e-6, flavor: GeometryFlavor::QR_PROJECTION };
    let data = build_ratings(&ratings, seed, &model).unwrap();
    assert_eq!(data.item_ids, vec![1]);
    assert_eq!(data.dropped_items, 4);
    assert_eq!(data.dropped_held_out, 1);
}

#[test]
fn ratings_case_runs_with_validation_stopping() {
    let dir = tempfile::tempdir().unwrap();
    ratings_file(dir.path(), 1000);
    let text = "case = ml\nproblem = ratings\nratings = ratings.dat\nr = 2\nridge = 1e-3\n\
                optimizers = svrg, lbfgs\nalphas = 1e-2\nbatch = 5\nepochs = 20\nearly_stop = validation\nseeds = 1";
    let cfg = config(text, dir.path());
    let report = run_case(&cfg, 1).unwrap();
    for run in &report.runs {
        assert!(!run.failed(), "{} {:?}", run.kind, run.termination);
        assert!(run.rows.iter().all(|r| r.metric.is_some() && r.train_mse.is_some()));
    }
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rsqn"));
    c.env("RSQN_LOG", "error");
    c
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.conf");
    std::fs::write(&good, KM_SMALL.replace("sqnvr, svrg, sgd, sd, lbfgs", "svrg").replace("1e-3, 1e-2", "1e-2")).unwrap();
    let out = dir.path().join("out");
    let status = bin()
        .args(["run", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .args(["--seeds", "3,4", "--parallel", "2"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let rows = read_rows(std::fs::File::open(out.join("km_small.csv")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 10);
    assert!(rows.iter().all(|r| r.seed == 3 || r.seed == 4));

    let empty = dir.path().join("empty.conf");
    std::fs::write(&empty, KM_SMALL.replace("optimizers = sqnvr, svrg, sgd, sd, lbfgs", "optimizers =")).unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&empty).status().unwrap().code(), Some(1));
    assert_eq!(bin().args(["run", "--bogus"]).status().unwrap().code(), Some(1));

    let missing = dir.path().join("missing.conf");
    std::fs::write(&missing, "problem = ratings\nratings = nowhere.dat\nr = 2\noptimizers = sd\n").unwrap();
    assert_eq!(bin().args(["run", "--config"]).arg(&missing).status().unwrap().code(), Some(2));
}

#[test]
fn cli_reference_and_gen_synth() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("km.conf");
    std::fs::write(&conf, KM_SMALL).unwrap();
    let out = bin().args(["reference", "--config"]).arg(&conf).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let printed: f64 = String::from_utf8(out.stdout).unwrap().trim().parse().unwrap();
    let cfg = config(KM_SMALL, dir.path());
    match Instance::build(&cfg.problem).unwrap() {
        Instance::Karcher { f_star, .. } => assert_eq!(printed, f_star),
        _ => unreachable!(),
    }

    let synth = dir.path().join("synth");
    let status = bin()
        .args(["gen-synth", "--d", "20", "--n", "30", "--r", "2", "--os", "3", "--cn", "10", "--sigma", "0", "--seed", "5", "--out"])
        .arg(&synth)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let train = std::fs::read_to_string(synth.join("train.txt")).unwrap();
    assert_eq!(train.lines().count(), (3.0f64 * 2.0 * 48.0).round() as usize);
    let parsed = parse_ratings(train.as_bytes()).unwrap();
    assert!(parsed.iter().all(|r| r.user <= 20 && r.item <= 30));
    assert_eq!(std::fs::read_to_string(synth.join("singular_values.txt")).unwrap().lines().count(), 2);

    let infeasible = bin()
        .args(["gen-synth", "--d", "5", "--n", "5", "--r", "2", "--os", "50", "--cn", "1", "--sigma", "0", "--out"])
        .arg(dir.path().join("x"))
        .status()
        .unwrap();
    assert_eq!(infeasible.code(), Some(1));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "conf") {
            let cfg = ExperimentConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            assert_eq!(cfg.optimizers.len(), 5, "{}", path.display());
            seen += 1;
        }
    }
    assert_eq!(seen, 4);
}
