//! `judge`: label generations by hand or through a remote model, then
//! merge judged hallucination rates into `rates.csv`.

use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Write};

use innovbench_core::textlab::{interactive_label, judge_all, JudgeError, LabelRecord, LabelStore, Statement};
use innovbench_core::rng::seeded;
use rand::seq::SliceRandom;

use crate::config::{JudgeMode, RunConfig};
use crate::ngram::{read_generations, read_rates, write_rates, Generation, RateRow};
use crate::{ensure_out, record_config, CliError, Outcome, EXIT_NETWORK};

/// Judged hallucination rates for every judge in the store, per order,
/// under both denominators: `all` counts every generation that has a
/// verdict (repeats included), `excluding` counts distinct generations not
/// found in the training data.
pub fn judged_rows(gens: &[Generation], store: &LabelStore, confidence: f64) -> Result<Vec<RateRow>, CliError> {
    let mut orders: Vec<usize> = gens.iter().map(|g| g.n).collect();
    orders.sort_unstable();
    orders.dedup();
    let mut rows = Vec::new();
    for judge in store.judges() {
        let verdicts: BTreeMap<&str, u8> = store
            .records()
            .iter()
            .filter(|r| r.judge == judge)
            .map(|r| (r.text.as_str(), r.verdict))
            .collect();
        for &n in &orders {
            let mut all = (0u64, 0u64);
            let mut excl = (0u64, 0u64);
            let mut distinct = HashSet::new();
            for g in gens.iter().filter(|g| g.n == n) {
                let Some(&v) = verdicts.get(g.text.as_str()) else { continue };
                all.1 += 1;
                all.0 += u64::from(v == 0);
                if !g.dup && distinct.insert(g.text.as_str()) {
                    excl.1 += 1;
                    excl.0 += u64::from(v == 0);
                }
            }
            for (denominator, (zeros, trials)) in [("all", all), ("excluding", excl)] {
                if trials > 0 {
                    rows.push(RateRow::new(n, "hallucination", &judge, denominator, zeros, trials, confidence)?);
                }
            }
        }
    }
    Ok(rows)
}

/// Replaces the judged rows of an existing `rates.csv`, keeping the rest.
fn merge_rates(existing: Vec<RateRow>, judged: Vec<RateRow>) -> Vec<RateRow> {
    let mut out: Vec<RateRow> = existing.into_iter().filter(|r| r.metric != "hallucination").collect();
    out.extend(judged);
    out
}

#[derive(Debug, Default)]
struct RemoteTally {
    judged: usize,
    unparseable: usize,
    network: Vec<String>,
}

fn remote(cfg: &RunConfig, gens: &[Generation], store: &mut LabelStore) -> Result<RemoteTally, CliError> {
    let client = cfg.judge.client();
    if client.model.is_empty() {
        return Err(CliError::config("remote judging needs a model name (--model)"));
    }
    let mut seen = HashSet::new();
    let pending: Vec<&Generation> = gens
        .iter()
        .filter(|g| seen.insert(g.text.as_str()) && !store.contains(&g.text, &client.model))
        .collect();
    let texts: Vec<String> = pending.iter().map(|g| g.text.clone()).collect();
    let mut tally = RemoteTally::default();
    let mut write_err = None;
    judge_all(&client, &texts, |i, res| match res {
        Ok(v) => {
            if write_err.is_none() {
                let rec = LabelRecord::new(texts[i].clone(), client.model.clone(), v, pending[i].dup);
                match store.append(rec) {
                    Ok(()) => tally.judged += 1,
                    Err(e) => write_err = Some(e),
                }
            }
        }
        Err(JudgeError::Unparseable { raw }) => {
            eprintln!("unparseable verdict for {:?}: {raw:?}", texts[i]);
            tally.unparseable += 1;
        }
        Err(e) => {
            eprintln!("judge error for {:?}: {e}", texts[i]);
            tally.network.push(e.to_string());
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    Ok(tally)
}

/// Runs the configured judge, persisting each verdict as it arrives, then
/// writes judged rates into `rates.csv`. Human mode reads keystrokes from
/// `input`.
pub fn cmd_judge_with<I: BufRead, O: Write>(cfg: &RunConfig, input: I, output: O) -> Result<Outcome, CliError> {
    cfg.validate()?;
    ensure_out(cfg)?;
    record_config(cfg)?;
    let gens_path = cfg.judge.generations.clone().unwrap_or_else(|| cfg.out_path("generations.jsonl"));
    let labels_path = cfg.judge.labels.clone().unwrap_or_else(|| cfg.out_path("labels.jsonl"));
    let gens = read_generations(&gens_path)?;
    let mut store = LabelStore::open(&labels_path)?;
    let mut code = crate::EXIT_OK;
    let mut text = match cfg.judge.mode {
        JudgeMode::Human => {
            let mut items: Vec<Statement> = gens
                .iter()
                .map(|g| Statement { text: g.text.clone(), dup: g.dup })
                .collect();
            if let Some(s) = cfg.judge.shuffle_seed {
                items.shuffle(&mut seeded(s));
            }
            let stats = interactive_label(&items, &mut store, input, output)?;
            format!(
                "labeled {} now, {} total; skipped {} training duplicates and {} repeats; rate {}",
                stats.labeled_now,
                stats.total_labeled,
                stats.skipped_training,
                stats.skipped_repeat,
                stats.rate.map_or("undefined".into(), |r| format!("{r:.3}")),
            )
        }
        JudgeMode::Remote => {
            let t = remote(cfg, &gens, &mut store)?;
            if !t.network.is_empty() {
                code = EXIT_NETWORK;
            }
            format!(
                "judged {} statements; {} unparseable; {} failed",
                t.judged,
                t.unparseable,
                t.network.len()
            )
        }
    };
    let rates_path = cfg.out_path("rates.csv");
    let existing = if rates_path.exists() { read_rates(&rates_path)? } else { Vec::new() };
    let judged = judged_rows(&gens, &store, cfg.judge.confidence)?;
    for r in &judged {
        text.push_str(&format!(
            "\n{} n={} ({}) {:.3} [{:.3}, {:.3}] over {}",
            r.judge, r.n, r.denominator, r.rate, r.lo, r.hi, r.trials
        ));
    }
    write_rates(&rates_path, &merge_rates(existing, judged))?;
    Ok(Outcome { code, summary: text })
}

pub fn cmd_judge(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let stdin = std::io::stdin();
    cmd_judge_with(cfg, stdin.lock(), std::io::stdout())
}
