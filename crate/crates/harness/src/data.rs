//! Problem data: Karcher samples and reference solutions, ratings ingestion, synthetic dumps.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rsqn_core::linalg::qf;
use rsqn_core::optim::{keep_going, rlbfgs_run};
use rsqn_core::problems::{Entry, ObservedColumn, SynthData};
use rsqn_core::{
    FiniteSumProblem, GeometryFlavor, Karcher, LineSearchParams, Manifold, MatComp, Matrix, Point64,
    Termination,
};

use crate::error::{HarnessError, Result};

/// `n` SPD matrices `O diag(10^u) Oᵀ`, each with its own Haar-random `O` and `u ~ U[-spread, spread]`.
pub fn karcher_samples(d: usize, n: usize, spread: f64, seed: u64) -> Vec<Matrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let g = Matrix::from_fn(d, d, |_, _| rng.sample(StandardNormal));
            let o = qf(&g).expect("gaussian matrix has full rank");
            let ev: Vec<f64> = (0..d).map(|_| 10f64.powf(rng.random_range(-spread..=spread))).collect();
            o.scale_columns(&ev).matmul_t(&o).symmetrize()
        })
        .collect()
}

/// High-accuracy minimizer of a Karcher problem: full-batch R-L-BFGS from the arithmetic mean
/// down to a gradient norm of 1e-12, or until the cost stops moving at rounding level.
pub fn karcher_reference(problem: &Karcher) -> Result<(Point64, f64)> {
    let samples = problem.samples();
    let mut mean = samples[0].matrix().clone();
    for s in &samples[1..] {
        mean += s.matrix();
    }
    let mean = mean.scale(1.0 / samples.len() as f64);
    let w0 = problem.manifold().point(mean)?;
    let params = LineSearchParams { max_iters: 1000, grad_tol: 1e-12, ..LineSearchParams::default() };
    let out = rlbfgs_run(problem, &params, w0, &mut keep_going)?;
    match out.termination {
        Termination::Failed(e) => return Err(e.into()),
        Termination::MaxEpochs => log::warn!("Karcher reference hit the iteration cap"),
        _ => {}
    }
    let f = problem.cost(&out.solution)?;
    Ok((out.solution, f))
}

/// One rating with 1-based ids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

fn parse_line(line: &str) -> std::result::Result<Rating, String> {
    let fields: Vec<&str> = if line.contains("::") {
        line.split("::").map(str::trim).collect()
    } else {
        line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect()
    };
    if !(3..=4).contains(&fields.len()) {
        return Err(format!("expected `user item rating [timestamp]`, got {} fields", fields.len()));
    }
    let id = |s: &str, what: &str| match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("{what} id `{s}` is not a positive integer")),
    };
    let value: f64 = fields[2].parse().map_err(|_| format!("rating `{}` is not a number", fields[2]))?;
    if !value.is_finite() {
        return Err(format!("rating `{}` is not finite", fields[2]));
    }
    Ok(Rating { user: id(fields[0], "user")?, item: id(fields[1], "item")?, value })
}

/// Reads `user::item::rating::timestamp` lines or whitespace/comma separated triples. Blank
/// lines are skipped.
pub fn parse_ratings<R: BufRead>(reader: R) -> Result<Vec<Rating>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::Parse { line: i + 1, message: e.to_string() })?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        out.push(parse_line(line).map_err(|message| HarnessError::Parse { line: i + 1, message })?);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Seeded 80/10/10 assignment, one uniform draw per rating in file order.
pub fn split_assignment(count: usize, seed: u64) -> Vec<Split> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            if u < 0.8 {
                Split::Train
            } else if u < 0.9 {
                Split::Validation
            } else {
                Split::Test
            }
        })
        .collect()
}

/// Column-model settings for ingested data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ColumnModel {
    pub r: usize,
    pub ridge: f64,
    pub flavor: GeometryFlavor,
}

#[derive(Clone, Debug)]
pub struct RatingsData {
    /// Training problem: rows are users, columns are the items that have training ratings.
    pub problem: MatComp,
    pub validation: Vec<Entry<f64>>,
    pub test: Vec<Entry<f64>>,
    /// Ratings assigned to train/validation/test by the seeded draw (sums to the file total).
    pub split_counts: [usize; 3],
    /// Original 1-based item id of every problem column.
    pub item_ids: Vec<usize>,
    /// Item ids in `1..=max` without a training rating.
    pub dropped_items: usize,
    /// Validation/test ratings discarded because their item has no column.
    pub dropped_held_out: usize,
}

/// Builds a completion problem from rated items.
pub fn build_ratings(ratings: &[Rating], split_seed: u64, model: &ColumnModel) -> Result<RatingsData> {
    if ratings.is_empty() {
        return Err(HarnessError::Parse { line: 0, message: "no ratings".into() });
    }
    let d = ratings.iter().map(|r| r.user).max().unwrap_or(0);
    let n_items = ratings.iter().map(|r| r.item).max().unwrap_or(0);
    let assignment = split_assignment(ratings.len(), split_seed);
    let mut split_counts = [0usize; 3];
    let mut per_item: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_items];
    for (r, s) in ratings.iter().zip(&assignment) {
        split_counts[*s as usize] += 1;
        if *s == Split::Train {
            per_item[r.item - 1].push((r.user - 1, r.value));
        }
    }
    let mut column_of = vec![None; n_items];
    let mut item_ids = Vec::new();
    let mut columns = Vec::new();
    for (item, mut obs) in per_item.into_iter().enumerate() {
        if obs.is_empty() {
            continue;
        }
        obs.sort_by_key(|&(row, _)| row);
        column_of[item] = Some(columns.len());
        item_ids.push(item + 1);
        let (rows, values) = obs.into_iter().unzip();
        columns.push(ObservedColumn { rows, values });
    }
    let dropped_items = n_items - columns.len();
    if dropped_items > 0 {
        log::info!("dropped {dropped_items} items without training ratings");
    }
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut dropped_held_out = 0;
    for (r, s) in ratings.iter().zip(&assignment) {
        let bucket = match s {
            Split::Train => continue,
            Split::Validation => &mut validation,
            Split::Test => &mut test,
        };
        match column_of[r.item - 1] {
            Some(col) => bucket.push(Entry { row: r.user - 1, col, value: r.value }),
            None => dropped_held_out += 1,
        }
    }
    if dropped_held_out > 0 {
        log::info!("dropped {dropped_held_out} held-out ratings of items without a column");
    }
    let problem = MatComp::new(d, model.r, columns, model.ridge, model.flavor)?;
    Ok(RatingsData { problem, validation, test, split_counts, item_ids, dropped_items, dropped_held_out })
}

/// Reads a ratings file and splits it 80/10/10 with `split_seed`.
pub fn ingest_ratings(path: &Path, split_seed: u64, model: &ColumnModel) -> Result<RatingsData> {
    let file = File::open(path).map_err(HarnessError::io(path))?;
    let ratings = parse_ratings(BufReader::new(file))?;
    log::info!("read {} ratings from {}", ratings.len(), path.display());
    build_ratings(&ratings, split_seed, model)
}

fn write_entries(path: &Path, entries: impl Iterator<Item = (usize, usize, f64)>) -> Result<()> {
    let file = File::create(path).map_err(HarnessError::io(path))?;
    let mut w = BufWriter::new(file);
    for (row, col, value) in entries {
        writeln!(w, "{} {} {:e}", row + 1, col + 1, value).map_err(HarnessError::io(path))?;
    }
    w.flush().map_err(HarnessError::io(path))
}

/// Writes `train.txt` and `test.txt` as 1-based `row col value` triples plus the ground-truth
/// singular values to `singular_values.txt`.
pub fn write_synthetic(data: &SynthData<f64>, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    let train = data.problem.columns().iter().enumerate().flat_map(|(col, c)| {
        c.rows.iter().zip(&c.values).map(move |(&row, &v)| (row, col, v))
    });
    write_entries(&dir.join("train.txt"), train)?;
    write_entries(&dir.join("test.txt"), data.test.iter().map(|e| (e.row, e.col, e.value)))?;
    let sv: Vec<String> = data.singular_values.iter().map(|s| format!("{s:e}")).collect();
    let path = dir.join("singular_values.txt");
    std::fs::write(&path, sv.join("\n") + "\n").map_err(HarnessError::io(&path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_formats() {
        let r = parse_line("12::7::4::978300760").unwrap();
        assert_eq!(r, Rating { user: 12, item: 7, value: 4.0 });
        assert_eq!(parse_line("3 9 2.5").unwrap(), Rating { user: 3, item: 9, value: 2.5 });
        assert_eq!(parse_line("3,9,2.5").unwrap(), Rating { user: 3, item: 9, value: 2.5 });
        assert_eq!(parse_line("3\t9\t5\t881250949").unwrap().value, 5.0);
        assert!(parse_line("0 1 2").is_err());
        assert!(parse_line("1 2").is_err());
        assert!(parse_line("1::2::x").is_err());
    }

    #[test]
    fn malformed_line_is_named() {
        let text = "1 1 5\n\n2 1 4\n2 x 3\n";
        match parse_ratings(text.as_bytes()) {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn reference_of_one_sample_is_the_sample() {
        let q = karcher_samples(3, 1, 1.0, 5);
        let p = Karcher::new(rsqn_core::SpdManifold::exp_parallel(3), q.clone()).unwrap();
        let (w, f) = karcher_reference(&p).unwrap();
        assert!((w.matrix() - &q[0]).frob_norm() <= 1e-10);
        assert!(f <= 1e-20);
    }

    #[test]
    fn scalar_reference_is_the_geometric_midpoint() {
        let e = std::f64::consts::E;
        let samples = vec![Matrix::from_diag(&[1.0]), Matrix::from_diag(&[e * e])];
        let p = Karcher::new(rsqn_core::SpdManifold::exp_parallel(1), samples).unwrap();
        let (w, f) = karcher_reference(&p).unwrap();
        assert!((w.matrix()[(0, 0)] - e).abs() <= 1e-10);
        assert!((f - 1.0).abs() <= 1e-12);
    }
}
