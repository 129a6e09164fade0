//! `ngram`: train order-n models, generate, and report innovation rates.

use std::collections::HashSet;
use std::path::Path;

use innovbench_core::measures::{clopper_pearson, semantic_novelty};
use innovbench_core::rng::derive_seed;
use innovbench_core::textlab::{generate_many, load_sentences, preprocess_lines, train_ngram, Sentence, MINI_CORPUS};
use innovbench_core::EmbeddingTable;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{ensure_out, record_config, with_threads, write_file, CliError, Outcome};

/// One row of `rates.csv`. `metric` is `innovation`,
/// `semantic_innovation` or `hallucination`; `judge` is empty except for
/// judged rows; `denominator` is `all` or `excluding`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub metric: String,
    pub judge: String,
    pub denominator: String,
    pub successes: u64,
    pub trials: u64,
    pub rate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl RateRow {
    pub fn new(
        n: usize,
        metric: &str,
        judge: &str,
        denominator: &str,
        successes: u64,
        trials: u64,
        confidence: f64,
    ) -> Result<Self, CliError> {
        let ci = clopper_pearson(successes, trials, confidence)?;
        Ok(RateRow {
            n,
            metric: metric.into(),
            judge: judge.into(),
            denominator: denominator.into(),
            successes,
            trials,
            rate: ci.point,
            lo: ci.lo,
            hi: ci.hi,
        })
    }
}

pub fn write_rates(path: &Path, rows: &[RateRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// Reads `rates.csv`, naming the first malformed row.
pub fn read_rates(path: &Path) -> Result<Vec<RateRow>, CliError> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize::<RateRow>().enumerate() {
        let row = rec.map_err(|e| CliError::config(format!("{} row {}: {e}", path.display(), i + 2)))?;
        rows.push(row);
    }
    Ok(rows)
}

/// One generated statement, as stored in `generations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    pub n: usize,
    pub text: String,
    /// Found verbatim in the training data.
    pub dup: bool,
}

pub fn read_generations(path: &Path) -> Result<Vec<Generation>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| CliError::config(format!("{} line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn lines(texts: impl IntoIterator<Item = impl AsRef<str>>) -> String {
    texts.into_iter().fold(String::new(), |mut s, t| {
        s.push_str(t.as_ref());
        s.push('\n');
        s
    })
}

fn load_table(path: &Path, rows: usize) -> Result<EmbeddingTable, CliError> {
    let table = EmbeddingTable::load(path)?;
    if table.count() != rows {
        return Err(CliError::config(format!(
            "{} has {} rows, expected {rows}",
            path.display(),
            table.count()
        )));
    }
    Ok(table)
}

pub struct NgramRun {
    pub training: Vec<Sentence>,
    pub generations: Vec<Generation>,
    pub rows: Vec<RateRow>,
}

pub fn run_ngram(cfg: &RunConfig) -> Result<NgramRun, CliError> {
    let g = &cfg.ngram;
    let training = match &g.corpus {
        Some(p) => load_sentences(p)?,
        None => preprocess_lines(MINI_CORPUS),
    };
    if training.is_empty() {
        return Err(CliError::config("training corpus has no usable sentences"));
    }
    let seen: HashSet<&str> = training.iter().map(|s| s.raw.as_str()).collect();
    let train_emb = match &g.embeddings {
        Some(dir) => Some(load_table(&dir.join("train.iemb"), training.len())?),
        None => None,
    };
    let mut generations = Vec::new();
    let mut rows = Vec::new();
    for &n in &g.n_values {
        let model = train_ngram(&training, n)?;
        let gens = generate_many(&model, g.generations, g.max_len, derive_seed(cfg.seed, n as u64));
        let novel = gens.iter().filter(|s| !seen.contains(s.raw.as_str())).count() as u64;
        let total = gens.len() as u64;
        rows.push(RateRow::new(n, "innovation", "", "all", novel, total, g.confidence)?);
        if let (Some(dir), Some(train)) = (&g.embeddings, &train_emb) {
            let table = load_table(&dir.join(format!("gen_n{n}.iemb")), gens.len())?;
            let flags = semantic_novelty(&table, train, g.threshold)?;
            let k = flags.iter().filter(|&&f| f).count() as u64;
            rows.push(RateRow::new(n, "semantic_innovation", "", "all", k, total, g.confidence)?);
        }
        generations.extend(gens.into_iter().map(|s| Generation {
            n,
            dup: seen.contains(s.raw.as_str()),
            text: s.raw,
        }));
    }
    Ok(NgramRun { training, generations, rows })
}

/// Writes `rates.csv`, `generations.jsonl`, `train.txt` and one
/// `gen_n{n}.txt` per order (the latter two are the inputs for embedding
/// export).
pub fn cmd_ngram(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    ensure_out(cfg)?;
    record_config(cfg)?;
    let run = with_threads(cfg, || run_ngram(cfg))??;
    write_rates(&cfg.out_path("rates.csv"), &run.rows)?;
    write_file(&cfg.out_path("train.txt"), lines(run.training.iter().map(|s| &s.raw)))?;
    for &n in &cfg.ngram.n_values {
        let texts = run.generations.iter().filter(|g| g.n == n).map(|g| &g.text);
        write_file(&cfg.out_path(&format!("gen_n{n}.txt")), lines(texts))?;
    }
    let jsonl = run
        .generations
        .iter()
        .map(|g| serde_json::to_string(g).map_err(|e| CliError::config(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    write_file(&cfg.out_path("generations.jsonl"), lines(jsonl))?;
    let summary = run
        .rows
        .iter()
        .map(|r| format!("n={} {} {:.3} [{:.3}, {:.3}]", r.n, r.metric, r.rate, r.lo, r.hi))
        .collect::<Vec<_>>()
        .join("\n");
    Ok(Outcome::ok(summary))
}
