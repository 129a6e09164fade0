//! `verify`: unconditional sweep, exhaustive exact sweeps, Monte Carlo
//! bound frequencies, tightness probe and the regime comparison.

use innovbench_core::models::{calibrated_model, CellChoice};
use innovbench_core::rng::{derive_seed, seeded};
use innovbench_core::verify::{
    delta_lower_bound, exhaustive_exact_sweep, mc_verify_cells, regime_comparison, tightness_probe,
    unconditional_sweep, CheckTally, DeltaPolicy, ExactSweep, FixedCorpus, RegimeComparison, TightnessRow,
    TvPartition, CHECK_TOL,
};
use innovbench_core::worlds::{exact_posterior, sample_corpus, sample_world};
use innovbench_core::{MetaSpec, Theorem, TrialReport};
use serde::Serialize;

use crate::config::{RunConfig, DEFAULT_DELTA_GRID, NEAR_BOUNDARY_FACTOR};
use crate::{ensure_out, record_config, with_threads, write_file, write_json, CliError, Outcome, EXIT_VERIFY_FAILED};

#[derive(Debug, Clone, Serialize)]
pub struct VerifySummary {
    pub seed: u64,
    pub pass: bool,
    pub failures: Vec<String>,
    pub unconditional: Vec<CheckTally>,
    pub exhaustive: ExactSweep,
    pub weighted: ExactSweep,
    pub monte_carlo: Vec<TrialReport>,
    pub tightness: Vec<TightnessRow>,
    pub regime: RegimeComparison,
}

/// Checks explicit δ values against the widest admissible lower end,
/// reached when `|U| = N − K`.
fn validate_explicit_deltas(meta: &MetaSpec, theorems: &[Theorem], deltas: &[f64]) -> Result<(), CliError> {
    let min_unseen = meta.n_statements - meta.k_max;
    for &th in theorems.iter().filter(|t| t.uses_delta()) {
        let lower = delta_lower_bound(th, meta.k_max, min_unseen, 1.0);
        if let Some(d) = deltas.iter().find(|&&d| d <= lower) {
            return Err(CliError::config(format!(
                "precondition violated: {th} requires delta > K/|U| = {lower} for every corpus (|U| >= {min_unseen}), got {d}"
            )));
        }
    }
    Ok(())
}

fn cells_for(theorems: &[Theorem], deltas: &[f64]) -> Vec<(Theorem, Option<f64>)> {
    theorems
        .iter()
        .flat_map(|&th| -> Vec<(Theorem, Option<f64>)> {
            if th.uses_delta() {
                deltas.iter().map(|&d| (th, Some(d))).collect()
            } else {
                vec![(th, None)]
            }
        })
        .collect()
}

/// Monte Carlo cells over `corpora` corpora drawn from `meta`, every model
/// in the battery sharing each corpus.
pub fn monte_carlo(cfg: &RunConfig) -> Result<Vec<TrialReport>, CliError> {
    let v = &cfg.verify;
    let (policy, fixed_deltas) = match &v.deltas {
        Some(ds) => {
            validate_explicit_deltas(&v.meta, &v.theorems, ds)?;
            (DeltaPolicy::Strict, Some(ds.clone()))
        }
        None => (DeltaPolicy::Report, None),
    };
    let base = derive_seed(cfg.seed, 200);
    let mut reports = Vec::new();
    for c in 0..v.corpora {
        let cs = derive_seed(base, c as u64);
        let mut rng = seeded(cs);
        let world = sample_world(&v.meta, &mut rng);
        let corpus = sample_corpus(&world, v.n, &mut rng)?;
        let post = exact_posterior(&v.meta, &corpus)?;
        let deltas = fixed_deltas.clone().unwrap_or_else(|| {
            let near = NEAR_BOUNDARY_FACTOR * v.meta.k_max as f64 / corpus.n_unseen() as f64;
            let mut d = Vec::with_capacity(5);
            if near < 1.0 {
                d.push(near);
            }
            d.extend(DEFAULT_DELTA_GRID);
            d
        });
        let cells = cells_for(&v.theorems, &deltas);
        for (m, kind) in v.models.iter().enumerate() {
            let model = kind.build(&world, &corpus, &mut seeded(derive_seed(cs, 10 + m as u64)))?;
            let fixed = FixedCorpus {
                meta: &v.meta,
                corpus: &corpus,
                post: &post,
                model: &model,
                tv_partition: TvPartition::LevelSets,
            };
            reports.extend(mc_verify_cells(&fixed, &cells, v.trials, derive_seed(cs, 1), policy)?);
        }
    }
    Ok(reports)
}

/// Large sparse instance where `n ≥ |U|/K`, with the calibrated
/// singleton model `g = p`.
pub fn regime(cfg: &RunConfig) -> Result<RegimeComparison, CliError> {
    let r = &cfg.verify.regime;
    let meta = MetaSpec::uniform_k(r.n_statements, r.k_max)?;
    let mut rng = seeded(derive_seed(cfg.seed, 300));
    let world = sample_world(&meta, &mut rng);
    let corpus = sample_corpus(&world, r.n, &mut rng)?;
    let pi = CellChoice::Singletons.build(&world, &mut rng)?;
    let g = calibrated_model(&world, &pi)?;
    Ok(regime_comparison(&g, &world, &corpus, r.k_max, r.delta)?)
}

fn collect_failures(s: &VerifySummary) -> Vec<String> {
    let mut f = Vec::new();
    for t in &s.unconditional {
        if t.failures > 0 {
            f.push(format!("{}: {} of {} instances failed", t.name, t.failures, t.instances));
        }
    }
    for (label, sweep, symmetric) in [("exhaustive", &s.exhaustive, true), ("weighted", &s.weighted, false)] {
        if sweep.innovation_failures > 0 {
            f.push(format!("{label}: innovation_implies_hallucination failed {} times", sweep.innovation_failures));
        }
        if sweep.expected_rate_failures > 0 {
            f.push(format!("{label}: expected_hallucination failed {} times", sweep.expected_rate_failures));
        }
        if symmetric && sweep.max_marginal_error > CHECK_TOL {
            f.push(format!("{label}: fact marginal error {}", sweep.max_marginal_error));
        }
        if symmetric && sweep.max_regularity_error > CHECK_TOL {
            f.push(format!("{label}: regularity ratio error {}", sweep.max_regularity_error));
        }
    }
    for r in s.monte_carlo.iter().filter(|r| r.in_range && !r.pass) {
        f.push(format!(
            "{} delta={:?} model={} n={}: freq {} < {} - {}",
            r.theorem, r.delta, r.model, r.n, r.empirical_freq, r.guaranteed_freq, r.binomial_slack
        ));
    }
    for t in s.tightness.iter().filter(|t| !t.pass) {
        f.push(format!("tightness {}: event freq {} < {}", t.model, t.event_freq, t.guaranteed));
    }
    f
}

pub fn verify_csv(reports: &[TrialReport]) -> String {
    let mut out = String::from(TrialReport::CSV_HEADER);
    out.push('\n');
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn run_verify(cfg: &RunConfig) -> Result<(VerifySummary, Vec<TrialReport>), CliError> {
    let v = &cfg.verify;
    if v.meta.sparsity_warning() {
        eprintln!(
            "warning: K = {} is not small relative to N = {}; bounds may be vacuous",
            v.meta.k_max, v.meta.n_statements
        );
    }
    let reports = monte_carlo(cfg)?;
    let unconditional = unconditional_sweep(
        v.unconditional.instances,
        v.unconditional.max_statements,
        derive_seed(cfg.seed, 100),
    )?;
    let exhaustive = exhaustive_exact_sweep(&v.exhaustive.meta, v.exhaustive.max_n, derive_seed(cfg.seed, 101))?;
    let w = &v.weighted;
    let wmeta = MetaSpec::two_class(w.n_statements, w.k_max, w.rho)?;
    let weighted = exhaustive_exact_sweep(&wmeta, w.max_n, derive_seed(cfg.seed, 102))?;
    let tightness = tightness_probe(&v.meta, v.n, derive_seed(cfg.seed, 103), v.tightness_draws)?;
    let regime = regime(cfg)?;
    let mut summary = VerifySummary {
        seed: cfg.seed,
        pass: true,
        failures: Vec::new(),
        unconditional,
        exhaustive,
        weighted,
        monte_carlo: reports.clone(),
        tightness,
        regime,
    };
    summary.failures = collect_failures(&summary);
    summary.pass = summary.failures.is_empty();
    Ok((summary, reports))
}

/// Writes `config.resolved.json`, `verify.csv` and `verify.json`. Exit 1
/// names the failing checks.
pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome, CliError> {
    cfg.validate()?;
    ensure_out(cfg)?;
    record_config(cfg)?;
    let (summary, reports) = with_threads(cfg, || run_verify(cfg))??;
    write_file(&cfg.out_path("verify.csv"), verify_csv(&reports))?;
    write_json(&cfg.out_path("verify.json"), &summary)?;
    let gated = reports.iter().filter(|r| r.in_range).count();
    let text = format!(
        "{} Monte Carlo cells ({} gated), {} unconditional checks, {} + {} exact corpora; regime: kv_cor2 vacuous={}, cor_markov_mm rhs={:.3e}",
        reports.len(),
        gated,
        summary.unconditional.iter().map(|t| t.instances).sum::<usize>(),
        summary.exhaustive.corpora,
        summary.weighted.corpora,
        summary.regime.kv_cor2_vacuous,
        summary.regime.cor_markov_mm_rhs,
    );
    if summary.pass {
        Ok(Outcome::ok(text))
    } else {
        Ok(Outcome {
            code: EXIT_VERIFY_FAILED,
            summary: format!("{text}\nFAILED:\n  {}", summary.failures.join("\n  ")),
        })
    }
}

