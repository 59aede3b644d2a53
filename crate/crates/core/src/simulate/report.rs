use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::RouterKind;

use super::SweepPoint;

pub const RESULTS_HEADER: &str =
    "batch,tp,ep,ratio,router,seed,lambda_max_mean,lambda_max_p99,max_tokens_mean,tpot_s,ttft_s,throughput_tok_s";

/// One CSV row. Metrics that do not apply are left empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub batch: usize,
    pub tp: usize,
    pub ep: usize,
    pub ratio: f64,
    pub router: RouterKind,
    pub seed: u64,
    pub lambda_max_mean: f64,
    pub lambda_max_p99: f64,
    pub max_tokens_mean: f64,
    pub tpot_s: Option<f64>,
    pub ttft_s: Option<f64>,
    pub throughput_tok_s: f64,
}

impl From<&SweepPoint> for ResultRow {
    fn from(p: &SweepPoint) -> Self {
        Self {
            batch: p.batch_size,
            tp: p.tp_degree,
            ep: p.ep_degree,
            ratio: p.replication_ratio,
            router: p.router,
            seed: p.seed,
            lambda_max_mean: p.lambda_max_mean,
            lambda_max_p99: p.lambda_max_p99,
            max_tokens_mean: p.max_tokens_mean,
            tpot_s: Some(p.tpot),
            ttft_s: None,
            throughput_tok_s: p.decode_throughput,
        }
    }
}

fn router_rank(r: RouterKind) -> usize {
    RouterKind::ALL.iter().position(|&k| k == r).expect("listed")
}

fn write_rows<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(csv_error)?;
    }
    if rows.is_empty() {
        out.write_record(RESULTS_HEADER.split(',')).map_err(csv_error)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Validation(format!("csv: {other:?}")),
    }
}

/// Writes rows sorted by configuration (batch, tp, ep, ratio, router, seed).
pub fn write_results_csv<W: Write>(rows: &[ResultRow], w: W) -> Result<()> {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        (a.batch, a.tp, a.ep)
            .cmp(&(b.batch, b.tp, b.ep))
            .then(a.ratio.total_cmp(&b.ratio))
            .then(router_rank(a.router).cmp(&router_rank(b.router)))
            .then(a.seed.cmp(&b.seed))
    });
    write_rows(&rows, w)
}

/// Writes Pareto points sorted by tpot, ties by configuration.
pub fn write_pareto_csv<W: Write>(points: &[SweepPoint], w: W) -> Result<()> {
    let mut rows: Vec<ResultRow> = points.iter().map(ResultRow::from).collect();
    rows.sort_by(|a, b| {
        a.tpot_s
            .unwrap_or(0.0)
            .total_cmp(&b.tpot_s.unwrap_or(0.0))
            .then((a.batch, a.tp, a.ep).cmp(&(b.batch, b.tp, b.ep)))
            .then(a.ratio.total_cmp(&b.ratio))
            .then(router_rank(a.router).cmp(&router_rank(b.router)))
    });
    write_rows(&rows, w)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(batch: usize, router: RouterKind) -> ResultRow {
        ResultRow {
            batch,
            tp: 1,
            ep: 8,
            ratio: 1.5,
            router,
            seed: 7,
            lambda_max_mean: 2.5,
            lambda_max_p99: 3.0,
            max_tokens_mean: 10.0,
            tpot_s: Some(0.01),
            ttft_s: None,
            throughput_tok_s: 100.0,
        }
    }

    #[test]
    fn header_and_sorting() {
        let mut buf = Vec::new();
        write_results_csv(&[row(64, RouterKind::Metro), row(32, RouterKind::Eplb)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines[1], "32,1,8,1.5,eplb,7,2.5,3.0,10.0,0.01,,100.0");
        assert!(lines[2].starts_with("64,"));
    }

    #[test]
    fn empty_still_has_header() {
        let mut buf = Vec::new();
        write_results_csv(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().trim_end(), RESULTS_HEADER);
    }
}
