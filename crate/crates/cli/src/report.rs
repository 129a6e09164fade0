//! `report`: Figure-1-style scatter of judged hallucination rate against
//! innovation rate.

use std::collections::BTreeMap;

use innovbench_core::svg::{scatter_svg, ScatterPoint};

use crate::config::RunConfig;
use crate::ngram::{read_rates, RateRow};
use crate::{ensure_out, write_file, CliError, Outcome};

pub fn figure_points(rows: &[RateRow], denominator: &str) -> Result<Vec<ScatterPoint>, CliError> {
    if rows.is_empty() {
        return Err(CliError::config("rates file has no rows"));
    }
    let innovation: BTreeMap<usize, &RateRow> = rows
        .iter()
        .filter(|r| r.metric == "innovation")
        .map(|r| (r.n, r))
        .collect();
    let points: Vec<ScatterPoint> = rows
        .iter()
        .filter(|r| r.metric == "hallucination" && r.denominator == denominator)
        .filter_map(|h| {
            innovation.get(&h.n).map(|x| ScatterPoint {
                series: h.judge.clone(),
                label: format!("{} n={}", h.judge, h.n),
                x: x.rate,
                x_lo: x.lo,
                x_hi: x.hi,
                y: h.rate,
                y_lo: h.lo,
                y_hi: h.hi,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(CliError::config(format!(
            "no judged hallucination rates with denominator `{denominator}` matching an innovation rate; run `judge` first"
        )));
    }
    Ok(points)
}

pub fn cmd_report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    ensure_out(cfg)?;
    let path = cfg.report.rates.clone().unwrap_or_else(|| cfg.out_path("rates.csv"));
    let rows = read_rates(&path)?;
    let points = figure_points(&rows, &cfg.report.denominator)?;
    let svg = scatter_svg(
        &points,
        "Hallucination rate versus innovation rate",
        "innovation rate",
        "hallucination rate",
    )?;
    let out = cfg.out_path("figure1.svg");
    write_file(&out, svg)?;
    Ok(Outcome::ok(format!("{} points written to {}", points.len(), out.display())))
}
