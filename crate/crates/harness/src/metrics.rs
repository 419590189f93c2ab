//! Metric rows and their fixed CSV schema. Absent values are written as `NA`; floats use the
//! shortest representation that parses back to the same value.

use std::io::{Read, Write};

use crate::error::{HarnessError, Result};

pub const HEADER: [&str; 10] = [
    "optimizer",
    "seed",
    "alpha",
    "epoch",
    "grad_evals",
    "seconds",
    "cost",
    "gap_or_test_mse",
    "train_mse",
    "grad_norm",
];

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub optimizer: String,
    pub seed: u64,
    /// Step size of the run; `None` for the line-search baselines.
    pub alpha: Option<f64>,
    pub epoch: usize,
    pub grad_evals: u64,
    pub seconds: Option<f64>,
    pub cost: Option<f64>,
    /// Optimality gap (Karcher) or test MSE (completion).
    pub metric: Option<f64>,
    pub train_mse: Option<f64>,
    pub grad_norm: Option<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x:e}"))
}

fn parse_opt(s: &str) -> std::result::Result<Option<f64>, String> {
    if s == "NA" {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| format!("bad number `{s}`"))
}

pub fn write_rows<W: Write>(out: W, rows: &[MetricRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in rows {
        w.write_record([
            r.optimizer.clone(),
            r.seed.to_string(),
            fmt_opt(r.alpha),
            r.epoch.to_string(),
            r.grad_evals.to_string(),
            fmt_opt(r.seconds),
            fmt_opt(r.cost),
            fmt_opt(r.metric),
            fmt_opt(r.train_mse),
            fmt_opt(r.grad_norm),
        ])?;
    }
    w.flush().map_err(|e| HarnessError::Csv(e.into()))
}

pub fn read_rows<R: Read>(input: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    if rdr.headers()?.iter().ne(HEADER) {
        return Err(HarnessError::Parse { line: 1, message: "unexpected header".into() });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let bad = |message: String| HarnessError::Parse { line, message };
        if rec.len() != HEADER.len() {
            return Err(bad(format!("expected {} fields, got {}", HEADER.len(), rec.len())));
        }
        let int = |i: usize| rec[i].parse::<u64>().map_err(|_| bad(format!("bad integer `{}`", &rec[i])));
        let opt = |i: usize| parse_opt(&rec[i]).map_err(bad);
        rows.push(MetricRow {
            optimizer: rec[0].to_string(),
            seed: int(1)?,
            alpha: opt(2)?,
            epoch: int(3)? as usize,
            grad_evals: int(4)?,
            seconds: opt(5)?,
            cost: opt(6)?,
            metric: opt(7)?,
            train_mse: opt(8)?,
            grad_norm: opt(9)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatting_is_exact_and_compact() {
        assert_eq!(fmt_opt(Some(1e-12)), "1e-12");
        assert_eq!(fmt_opt(Some(0.1 + 0.2)), "3.0000000000000004e-1");
        assert_eq!(fmt_opt(None), "NA");
        assert_eq!(parse_opt("3.0000000000000004e-1").unwrap(), Some(0.1 + 0.2));
    }

    #[test]
    fn header_mismatch_is_rejected() {
        assert!(read_rows("a,b\n1,2\n".as_bytes()).is_err());
    }
}
