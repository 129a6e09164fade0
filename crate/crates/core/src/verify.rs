//! The theorem battery.
//!
//! Three kinds of checks live here:
//!
//! * unconditional inequalities, evaluated on a single `(g, world, corpus)`
//!   instance and expected to hold every time;
//! * exact posterior checks, which compute `Pr[g(H) > 0 | X]` and
//!   `E[g(H) | X]` by enumerating every candidate support;
//! * Monte Carlo checks, which draw worlds from the posterior given a fixed
//!   corpus and compare the frequency of a bound event with its guarantee.
//!
//! All probabilities are conditional on the corpus `X`: the model `g` is
//! fixed once `X` is known and only the world is resampled.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dist::{coarsen, level_set_partition, tv_distance, Corpus, Dist, Partition};
use crate::error::{Error, Result};
use crate::models::{scatter_model, spike_at, Model, ModelKind};
use crate::rng::{derive_seed, seeded, trial_rng};
use crate::worlds::{
    exact_posterior, expected_hallucination, prob_hallucinate, regularity_ratio, sample_corpus, sample_world,
    MetaSpec, Posterior, SupportPrior, World,
};

/// Absolute tolerance for deterministic and exact inequality checks.
pub const CHECK_TOL: f64 = 1e-12;

/// Multiple of the binomial standard deviation allowed below a guarantee.
pub const SIGMA_MULT: f64 = 3.0;

/// Minimum Monte Carlo trials per report.
pub const MIN_TRIALS: usize = 1000;

/// Outcome of one inequality `lhs ≥ rhs`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    pub slack: f64,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs >= rhs - CHECK_TOL,
            slack: lhs - rhs,
        }
    }

    /// `lhs > 0` strictly (qualitative implications).
    fn positive(name: impl Into<String>, lhs: f64) -> Self {
        BoundCheck {
            name: name.into(),
            lhs,
            rhs: 0.0,
            holds: lhs > 0.0,
            slack: lhs,
        }
    }

    fn vacuous(name: impl Into<String>) -> Self {
        BoundCheck {
            name: name.into(),
            lhs: 0.0,
            rhs: 0.0,
            holds: true,
            slack: 0.0,
        }
    }
}

fn unseen_mass(d: &Dist, corpus: &Corpus) -> f64 {
    d.mass_where(|y| !corpus.is_observed(y))
}

fn fact_free_mass(d: &Dist, world: &World) -> f64 {
    d.mass_where(|y| !world.is_fact(y))
}

/// `g(H) > 0 ⇒ g(U) > 0`, checked as `g(U) ≥ g(H)`.
pub fn check_hall_implies_innov(g: &Model, world: &World, corpus: &Corpus) -> BoundCheck {
    let gu = unseen_mass(&g.dist, corpus);
    let gh = fact_free_mass(&g.dist, world);
    let mut c = BoundCheck::new("hall_implies_innov", gu, gh);
    c.holds &= gh == 0.0 || gu > 0.0;
    c
}

/// With `g = p^Π`: `p(U) > 0 ⇒ g(U) > 0`.
pub fn check_calib_mm_innov(world: &World, corpus: &Corpus, pi: &Partition) -> Result<BoundCheck> {
    let pu = unseen_mass(world.dist(), corpus);
    if pu == 0.0 {
        return Ok(BoundCheck::vacuous("calib_mm_innov"));
    }
    let g = coarsen(world.dist(), pi)?;
    Ok(BoundCheck::positive("calib_mm_innov", unseen_mass(&g, corpus)))
}

fn check_sparse(world: &World, k: usize) -> Result<()> {
    if world.facts().len() > k {
        return Err(Error::Precondition(format!(
            "world has {} facts, more than K = {k}",
            world.facts().len()
        )));
    }
    Ok(())
}

/// `p^Π(U) ≥ p(U) / (K+1)` for `|supp p| ≤ K`.
pub fn check_coarsening_lemma(world: &World, corpus: &Corpus, pi: &Partition, k: usize) -> Result<BoundCheck> {
    check_sparse(world, k)?;
    let coarse = coarsen(world.dist(), pi)?;
    Ok(BoundCheck::new(
        "coarsening_lemma",
        unseen_mass(&coarse, corpus),
        unseen_mass(world.dist(), corpus) / (k as f64 + 1.0),
    ))
}

/// The coarsening lemma restricted to each cell: `p^Π(U∩B) ≥ p(U∩B)/(K+1)`.
pub fn check_coarsening_lemma_cells(
    world: &World,
    corpus: &Corpus,
    pi: &Partition,
    k: usize,
) -> Result<Vec<BoundCheck>> {
    check_sparse(world, k)?;
    let coarse = coarsen(world.dist(), pi)?;
    Ok(pi
        .cells()
        .into_iter()
        .enumerate()
        .map(|(c, cell)| {
            let unseen: Vec<usize> = cell.into_iter().filter(|&y| !corpus.is_observed(y)).collect();
            let lhs = coarse.mass_on(&unseen).expect("ids in range");
            let rhs = world.dist().mass_on(&unseen).expect("ids in range") / (k as f64 + 1.0);
            BoundCheck::new(format!("coarsening_lemma_cell{c}"), lhs, rhs)
        })
        .collect())
}

/// `g(U) ≥ p(U)/(K+1) − ‖g − p^Π‖_TV`.
pub fn check_innov_mm(g: &Model, world: &World, corpus: &Corpus, pi: &Partition, k: usize) -> Result<BoundCheck> {
    check_sparse(world, k)?;
    let coarse = coarsen(world.dist(), pi)?;
    let tv = tv_distance(&g.dist, &coarse)?;
    Ok(BoundCheck::new(
        "innov_mm",
        unseen_mass(&g.dist, corpus),
        unseen_mass(world.dist(), corpus) / (k as f64 + 1.0) - tv,
    ))
}

/// Regularity factor used by the exact checks: 1 under uniform priors,
/// the posterior's regularity ratio otherwise.
pub fn regularity_for(meta: &MetaSpec, post: &Posterior) -> Result<f64> {
    match meta.support_prior {
        SupportPrior::Weighted { .. } => Ok(regularity_ratio(post)?.r),
        _ => Ok(1.0),
    }
}

/// `Pr[g(H) > 0 | X] ≥ 1 − rK/|U|` against a precomputed posterior.
pub fn exact_check_innovation_with(post: &Posterior, g: &Model, r: f64) -> Result<BoundCheck> {
    let u = post.unseen();
    let gu: f64 = u.iter().map(|&y| g.dist.get(y)).sum();
    if gu <= 0.0 {
        return Err(Error::Precondition("model does not innovate, g(U) = 0".into()));
    }
    let lhs = prob_hallucinate(&g.dist, post)?;
    let rhs = 1.0 - r * post.k_max() as f64 / u.len() as f64;
    Ok(BoundCheck::new("innovation_implies_hallucination", lhs, rhs))
}

/// `Pr[g(H) > 0 | X] ≥ 1 − K/|U|` (with `rK` for weighted priors).
pub fn exact_check_thm32(meta: &MetaSpec, corpus: &Corpus, g: &Model) -> Result<BoundCheck> {
    let post = exact_posterior(meta, corpus)?;
    let r = regularity_for(meta, &post)?;
    exact_check_innovation_with(&post, g, r)
}

/// `E[g(H) | X] ≥ g(U)(1 − rK/|U|)` against a precomputed posterior.
pub fn exact_check_expected_rate_with(post: &Posterior, g: &Model, r: f64) -> Result<BoundCheck> {
    let u = post.unseen();
    if u.is_empty() {
        return Ok(BoundCheck::vacuous("expected_hallucination"));
    }
    let gu: f64 = u.iter().map(|&y| g.dist.get(y)).sum();
    let lhs = expected_hallucination(&g.dist, post)?;
    let rhs = gu * (1.0 - r * post.k_max() as f64 / u.len() as f64);
    Ok(BoundCheck::new("expected_hallucination", lhs, rhs))
}

pub fn exact_check_expected_rate(meta: &MetaSpec, corpus: &Corpus, g: &Model) -> Result<BoundCheck> {
    let post = exact_posterior(meta, corpus)?;
    let r = regularity_for(meta, &post)?;
    exact_check_expected_rate_with(&post, g, r)
}

/// Probability bounds verified by Monte Carlo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// `g(H) ≥ g(U)(1 − K/(δ|U|))` w.p. `1 − δ`.
    Markov,
    /// `g(H) ≥ g(U)/(K+1)` w.p. `1 − K/|U|`.
    #[serde(rename = "highconf")]
    HighConf,
    /// Markov bound with `rK` in place of `K`.
    MarkovR,
    /// High-confidence bound holding w.p. `1 − rK/|U|`.
    #[serde(rename = "highconf_r")]
    HighConfR,
    /// `g(H) ≥ p(U)/(K+1) − 1/(δ|U|) − ‖g − p^Π‖_TV` w.p. `1 − δ`.
    CorMarkovMm,
    /// `g(H) ≥ p(U)/(K+1)² − ‖g − p^Π‖_TV/(K+1)` w.p. `1 − K/|U|`.
    CorHighconfMm,
    /// `g(H) ≥ p(U) − Mis(g,p) − 2K/(δ|U|)` w.p. `1 − δ` (comparison baseline).
    KvCor1,
    /// `g(H) ≥ p(U) − Mis(g,p) − K(n+1)/(δ|U|)` w.p. `1 − δ` (comparison baseline).
    KvCor2,
}

impl Theorem {
    pub const ALL: [Theorem; 8] = [
        Theorem::Markov,
        Theorem::HighConf,
        Theorem::MarkovR,
        Theorem::HighConfR,
        Theorem::CorMarkovMm,
        Theorem::CorHighconfMm,
        Theorem::KvCor1,
        Theorem::KvCor2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Theorem::Markov => "markov",
            Theorem::HighConf => "highconf",
            Theorem::MarkovR => "markov_r",
            Theorem::HighConfR => "highconf_r",
            Theorem::CorMarkovMm => "cor_markov_mm",
            Theorem::CorHighconfMm => "cor_highconf_mm",
            Theorem::KvCor1 => "kv_cor1",
            Theorem::KvCor2 => "kv_cor2",
        }
    }

    /// Whether the bound takes a failure probability δ.
    pub fn uses_delta(self) -> bool {
        !matches!(self, Theorem::HighConf | Theorem::HighConfR | Theorem::CorHighconfMm)
    }

    /// Whether the bound's `TV` term is involved (needs `p^Π`).
    fn uses_tv(self) -> bool {
        matches!(
            self,
            Theorem::CorMarkovMm | Theorem::CorHighconfMm | Theorem::KvCor1 | Theorem::KvCor2
        )
    }
}

impl fmt::Display for Theorem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Theorem {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Theorem::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::param(format!("unknown theorem `{s}`")))
    }
}

/// Quantities fixed by the corpus.
#[derive(Debug, Clone, Copy)]
struct CorpusContext {
    k: f64,
    unseen: f64,
    n: f64,
    r: f64,
    gu: f64,
}

impl CorpusContext {
    fn validate_delta(&self, th: Theorem, delta: Option<f64>) -> Result<f64> {
        if !th.uses_delta() {
            return Ok(f64::NAN);
        }
        let d = delta.ok_or_else(|| Error::param(format!("{th} needs delta")))?;
        let lower = delta_lower_bound(th, self.k as usize, self.unseen as usize, self.r);
        let upper_ok = match th {
            Theorem::KvCor1 | Theorem::KvCor2 => d <= 1.0,
            _ => d < 1.0,
        };
        if !(d > lower && upper_ok) {
            let hi = if matches!(th, Theorem::KvCor1 | Theorem::KvCor2) { "1]" } else { "1)" };
            return Err(Error::Precondition(format!("{th} requires delta in ({lower}, {hi}, got {d}")));
        }
        Ok(d)
    }

    fn guaranteed(&self, th: Theorem, d: f64) -> f64 {
        let g = match th {
            Theorem::HighConf | Theorem::CorHighconfMm => 1.0 - self.k / self.unseen,
            Theorem::HighConfR => 1.0 - self.r * self.k / self.unseen,
            _ => 1.0 - d,
        };
        g.clamp(0.0, 1.0)
    }

    /// Right-hand side given a drawn world's `p(U)` and TV term.
    fn rhs(&self, th: Theorem, d: f64, pu: f64, tv: f64) -> f64 {
        let (k, u) = (self.k, self.unseen);
        match th {
            Theorem::Markov => self.gu * (1.0 - k / (d * u)),
            Theorem::MarkovR => self.gu * (1.0 - self.r * k / (d * u)),
            Theorem::HighConf | Theorem::HighConfR => self.gu / (k + 1.0),
            Theorem::CorMarkovMm => pu / (k + 1.0) - 1.0 / (d * u) - tv,
            Theorem::CorHighconfMm => pu / (k + 1.0).powi(2) - tv / (k + 1.0),
            Theorem::KvCor1 => pu - tv - 2.0 * k / (d * u),
            Theorem::KvCor2 => pu - tv - k * (self.n + 1.0) / (d * u),
        }
    }

    /// True when the right-hand side is `≤ 0` for every world (`p(U) ≤ 1`, `TV ≥ 0`).
    fn certified_vacuous(&self, th: Theorem, d: f64) -> bool {
        match th {
            Theorem::CorHighconfMm => false,
            Theorem::CorMarkovMm | Theorem::KvCor1 | Theorem::KvCor2 => self.rhs(th, d, 1.0, 0.0) <= 0.0,
            _ => self.rhs(th, d, 0.0, 0.0) <= 0.0,
        }
    }
}

/// Exclusive lower end of the admissible `δ` range for a theorem given
/// `K`, `|U|` and the regularity ratio `r`. Zero when any `δ ∈ (0, 1)` is
/// allowed.
pub fn delta_lower_bound(th: Theorem, k: usize, unseen: usize, r: f64) -> f64 {
    let ctx = CorpusContext {
        k: k as f64,
        unseen: unseen as f64,
        n: 0.0,
        r,
        gu: 0.0,
    };
    match th {
        Theorem::Markov | Theorem::CorMarkovMm => ctx.k / ctx.unseen,
        Theorem::MarkovR => ctx.r * ctx.k / ctx.unseen,
        _ => 0.0,
    }
}

/// Partition whose coarsening enters the TV term of the corollaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum TvPartition {
    /// Level sets of `g`, making the TV term equal `Mis(g, p)`.
    #[default]
    LevelSets,
    Given(Partition),
}

/// One Monte Carlo bound-frequency estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialReport {
    pub theorem: Theorem,
    pub n_statements: usize,
    pub k: usize,
    pub n: u64,
    pub delta: Option<f64>,
    pub r: f64,
    pub model: String,
    pub trials: usize,
    pub successes: usize,
    pub empirical_freq: f64,
    pub guaranteed_freq: f64,
    pub binomial_slack: f64,
    pub pass: bool,
    /// `δ` lies in the theorem's admissible range. Cells outside it are
    /// reported but carry no guarantee.
    pub in_range: bool,
    /// Right-hand side is non-positive for every possible world.
    pub vacuous: bool,
    /// Largest right-hand side seen over the draws.
    pub max_rhs: f64,
    pub seed: u64,
}

impl TrialReport {
    pub const CSV_HEADER: &'static str = "theorem,N,K,n,delta,r,model,trials,successes,freq,guaranteed,slack,pass";

    pub fn csv_row(&self) -> String {
        let delta = self.delta.map(|d| format!("{d}")).unwrap_or_default();
        let model = if self.model.contains(',') {
            format!("\"{}\"", self.model)
        } else {
            self.model.clone()
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.theorem,
            self.n_statements,
            self.k,
            self.n,
            delta,
            self.r,
            model,
            self.trials,
            self.successes,
            self.empirical_freq,
            self.guaranteed_freq,
            self.binomial_slack,
            self.pass
        )
    }
}

/// `3σ` with `σ` the binomial standard deviation at the guaranteed rate.
pub fn binomial_slack(guaranteed: f64, trials: usize) -> f64 {
    SIGMA_MULT * (guaranteed * (1.0 - guaranteed) / trials as f64).sqrt()
}

/// Everything fixed once the corpus is known.
pub struct FixedCorpus<'a> {
    pub meta: &'a MetaSpec,
    pub corpus: &'a Corpus,
    pub post: &'a Posterior,
    pub model: &'a Model,
    pub tv_partition: TvPartition,
}

/// What to do with a `δ` outside a theorem's admissible range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum DeltaPolicy {
    /// Reject it with a precondition error.
    #[default]
    Strict,
    /// Evaluate the event anyway and flag the report `in_range = false`.
    /// `δ` must still lie in `(0, 1]`.
    Report,
}

/// Monte Carlo over posterior worlds for a batch of `(theorem, δ)` cells.
/// Every cell sees the same world draws; draw `t` uses
/// `trial_rng(seed, t)`.
pub fn mc_verify_fixed(
    fixed: &FixedCorpus<'_>,
    cells: &[(Theorem, Option<f64>)],
    trials: usize,
    seed: u64,
) -> Result<Vec<TrialReport>> {
    mc_verify_cells(fixed, cells, trials, seed, DeltaPolicy::Strict)
}

/// [`mc_verify_fixed`] with an explicit policy for out-of-range `δ`.
pub fn mc_verify_cells(
    fixed: &FixedCorpus<'_>,
    cells: &[(Theorem, Option<f64>)],
    trials: usize,
    seed: u64,
    policy: DeltaPolicy,
) -> Result<Vec<TrialReport>> {
    if trials < MIN_TRIALS {
        return Err(Error::param(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    let corpus = fixed.corpus;
    let g = &fixed.model.dist;
    let unseen = corpus.n_unseen();
    if unseen == 0 {
        return Err(Error::Precondition("corpus leaves no unseen statement".into()));
    }
    let r = regularity_ratio(fixed.post)?.r;
    let ctx = CorpusContext {
        k: fixed.meta.k_max as f64,
        unseen: unseen as f64,
        n: corpus.n() as f64,
        r,
        gu: unseen_mass(g, corpus),
    };
    let checked: Vec<(f64, bool)> = cells
        .iter()
        .map(|&(th, d)| match (ctx.validate_delta(th, d), policy, d) {
            (Ok(v), _, _) => Ok((v, true)),
            (Err(Error::Precondition(_)), DeltaPolicy::Report, Some(v)) if v > 0.0 && v <= 1.0 => Ok((v, false)),
            (Err(e), _, _) => Err(e),
        })
        .collect::<Result<_>>()?;
    let deltas: Vec<f64> = checked.iter().map(|c| c.0).collect();
    let need_tv = cells.iter().any(|(th, _)| th.uses_tv());
    let pi = match &fixed.tv_partition {
        TvPartition::LevelSets => level_set_partition(g),
        TvPartition::Given(p) => p.clone(),
    };

    let sampler = fixed.post.sampler();
    let outcomes: Vec<Vec<(bool, f64)>> = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(seed, t);
            let world = sampler.sample(&mut rng);
            let gh = fact_free_mass(g, &world);
            let pu = unseen_mass(world.dist(), corpus);
            let tv = if need_tv {
                tv_distance(g, &coarsen(world.dist(), &pi).expect("dims")).expect("dims")
            } else {
                0.0
            };
            cells
                .iter()
                .zip(&deltas)
                .map(|(&(th, _), &d)| {
                    let rhs = ctx.rhs(th, d, pu, tv);
                    (gh >= rhs - CHECK_TOL, rhs)
                })
                .collect()
        })
        .collect();

    Ok(cells
        .iter()
        .zip(&deltas)
        .enumerate()
        .map(|(i, (&(th, delta), &d))| {
            let successes = outcomes.iter().filter(|o| o[i].0).count();
            let max_rhs = outcomes.iter().map(|o| o[i].1).fold(f64::NEG_INFINITY, f64::max);
            let freq = successes as f64 / trials as f64;
            let guaranteed = ctx.guaranteed(th, d);
            let slack = binomial_slack(guaranteed, trials);
            TrialReport {
                theorem: th,
                n_statements: fixed.meta.n_statements,
                k: fixed.meta.k_max,
                n: corpus.n(),
                delta: if th.uses_delta() { delta } else { None },
                r,
                model: fixed.model.provenance.clone(),
                trials,
                successes,
                empirical_freq: freq,
                guaranteed_freq: guaranteed,
                binomial_slack: slack,
                pass: freq >= guaranteed - slack,
                in_range: checked[i].1,
                vacuous: ctx.certified_vacuous(th, d),
                max_rhs,
                seed,
            }
        })
        .collect())
}

/// A corpus drawn from the meta-distribution together with the world that
/// produced it and the model built from it.
pub struct SampledSetup {
    pub world: World,
    pub corpus: Corpus,
    pub model: Model,
    pub post: Posterior,
}

/// Draws world, corpus and model from `seed`, then the exact posterior.
pub fn sample_setup(meta: &MetaSpec, model_kind: &ModelKind, n: u64, seed: u64) -> Result<SampledSetup> {
    let mut rng = seeded(seed);
    let world = sample_world(meta, &mut rng);
    let corpus = sample_corpus(&world, n, &mut rng)?;
    let model = model_kind.build(&world, &corpus, &mut rng)?;
    let post = exact_posterior(meta, &corpus)?;
    Ok(SampledSetup { world, corpus, model, post })
}

/// Samples a corpus from `meta`, builds `g = model_kind(X)`, then estimates
/// the frequency of the theorem's bound event over `trials` posterior worlds.
pub fn mc_verify(
    theorem: Theorem,
    meta: &MetaSpec,
    model_kind: &ModelKind,
    n: u64,
    delta: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<TrialReport> {
    let setup = sample_setup(meta, model_kind, n, seed)?;
    let fixed = FixedCorpus {
        meta,
        corpus: &setup.corpus,
        post: &setup.post,
        model: &setup.model,
        tv_partition: TvPartition::LevelSets,
    };
    let mut reports = mc_verify_fixed(&fixed, &[(theorem, delta)], trials, derive_seed(seed, 1))?;
    let mut report = reports.remove(0);
    report.seed = seed;
    Ok(report)
}

/// Per-model result of [`tightness_probe`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TightnessRow {
    pub model: String,
    pub draws: usize,
    /// `min g(H)(K+1)/g(U)` over all draws.
    pub min_ratio: f64,
    /// The same minimum restricted to draws where `g(H) ≥ g(U)/(K+1)`.
    pub min_ratio_on_event: f64,
    pub mean_ratio: f64,
    pub event_freq: f64,
    pub guaranteed: f64,
    pub pass: bool,
}

/// Probes how close the `g(U)/(K+1)` constant comes to binding, for every
/// innovating model in the battery.
pub fn tightness_probe(meta: &MetaSpec, n: u64, seed: u64, draws: usize) -> Result<Vec<TightnessRow>> {
    let mut rng = seeded(seed);
    let world = sample_world(meta, &mut rng);
    let corpus = sample_corpus(&world, n, &mut rng)?;
    let post = exact_posterior(meta, &corpus)?;
    let k1 = meta.k_max as f64 + 1.0;
    let unseen = corpus.n_unseen();
    if unseen == 0 {
        return Err(Error::Precondition("corpus leaves no unseen statement".into()));
    }
    let guaranteed = (1.0 - meta.k_max as f64 / unseen as f64).max(0.0);
    let sampler = post.sampler();
    let mut rows = Vec::new();
    for (mi, kind) in ModelKind::battery().iter().enumerate() {
        let g = kind.build(&world, &corpus, &mut rng)?;
        let gu = unseen_mass(&g.dist, &corpus);
        if gu <= 0.0 {
            continue;
        }
        let stream = derive_seed(seed, mi as u64 + 1);
        let ratios: Vec<f64> = (0..draws as u64)
            .into_par_iter()
            .map(|t| {
                let w = sampler.sample(&mut trial_rng(stream, t));
                fact_free_mass(&g.dist, &w) * k1 / gu
            })
            .collect();
        let on_event: Vec<f64> = ratios.iter().copied().filter(|&r| r >= 1.0 - CHECK_TOL).collect();
        let event_freq = on_event.len() as f64 / draws as f64;
        let min_on_event = on_event.iter().copied().fold(f64::INFINITY, f64::min);
        rows.push(TightnessRow {
            model: g.provenance.clone(),
            draws,
            min_ratio: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            min_ratio_on_event: min_on_event,
            mean_ratio: ratios.iter().sum::<f64>() / draws as f64,
            event_freq,
            guaranteed,
            pass: event_freq >= guaranteed - binomial_slack(guaranteed, draws),
        });
    }
    Ok(rows)
}

/// Side-by-side right-hand sides of the corpus-size-dependent baseline and
/// the missing-mass corollary of the Markov-style bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeComparison {
    pub n: u64,
    pub unseen: usize,
    pub k: usize,
    pub delta: f64,
    pub missing_mass: f64,
    pub miscalibration: f64,
    pub kv_cor2_rhs: f64,
    /// `1 − K(n+1)/(δ|U|) ≤ 0`: non-positive for every world.
    pub kv_cor2_vacuous: bool,
    pub cor_markov_mm_rhs: f64,
    pub cor_markov_mm_nontrivial: bool,
}

pub fn regime_comparison(g: &Model, world: &World, corpus: &Corpus, k: usize, delta: f64) -> Result<RegimeComparison> {
    let unseen = corpus.n_unseen();
    if unseen == 0 {
        return Err(Error::Precondition("corpus leaves no unseen statement".into()));
    }
    let ctx = CorpusContext {
        k: k as f64,
        unseen: unseen as f64,
        n: corpus.n() as f64,
        r: 1.0,
        gu: unseen_mass(&g.dist, corpus),
    };
    let d = ctx.validate_delta(Theorem::CorMarkovMm, Some(delta))?;
    let pu = unseen_mass(world.dist(), corpus);
    let mis = crate::dist::miscalibration(&g.dist, world.dist())?;
    let kv = ctx.rhs(Theorem::KvCor2, d, pu, mis);
    let ours = ctx.rhs(Theorem::CorMarkovMm, d, pu, mis);
    Ok(RegimeComparison {
        n: corpus.n(),
        unseen,
        k,
        delta,
        missing_mass: pu,
        miscalibration: mis,
        kv_cor2_rhs: kv,
        kv_cor2_vacuous: ctx.certified_vacuous(Theorem::KvCor2, d),
        cor_markov_mm_rhs: ours,
        cor_markov_mm_nontrivial: ours > 0.0,
    })
}

/// Every count vector over `n_statements` with `n` draws touching at most
/// `max_observed` distinct statements.
pub fn enumerate_corpora(n_statements: usize, n: u64, max_observed: usize) -> Vec<Corpus> {
    fn rec(
        y: usize,
        left: u64,
        used: usize,
        max_obs: usize,
        counts: &mut Vec<u64>,
        out: &mut Vec<Corpus>,
    ) {
        let n = counts.len();
        if left == 0 {
            out.push(Corpus::from_counts(counts.clone()).expect("nonempty"));
            return;
        }
        if y == n {
            return;
        }
        // y gets c draws (c = 0 first keeps lexicographic order stable)
        rec(y + 1, left, used, max_obs, counts, out);
        if used < max_obs {
            for c in 1..=left {
                counts[y] = c;
                rec(y + 1, left - c, used + 1, max_obs, counts, out);
            }
            counts[y] = 0;
        }
    }
    let mut out = Vec::new();
    rec(0, n, 0, max_observed, &mut vec![0; n_statements], &mut out);
    out
}

/// Models that depend only on the corpus (plus one calibrated model built
/// from a posterior-drawn world), covering spread and concentrated
/// innovation.
pub fn exact_battery<R: Rng + ?Sized>(corpus: &Corpus, post: &Posterior, rng: &mut R) -> Result<Vec<Model>> {
    let n = corpus.n_statements();
    let mut out = Vec::new();
    if corpus.n_unseen() == 0 {
        return Ok(out);
    }
    out.push(scatter_model(corpus, 0.5)?);
    out.push(scatter_model(corpus, 1.0)?);
    for y in corpus.unseen() {
        out.push(spike_at(corpus, 0.5, y)?);
    }
    out.push(crate::models::random_model(n, rng)?);
    let world = post.sampler().sample(rng);
    let pi = Partition::random(n, 3, rng)?;
    let g = crate::models::calibrated_model(&world, &pi)?;
    if unseen_mass(&g.dist, corpus) > 0.0 {
        out.push(g);
    }
    Ok(out)
}

/// Aggregate of an exhaustive exact sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ExactSweep {
    pub corpora: usize,
    /// Largest `|Pr[y∈F|X] − (K−|O|)/|U|| ` over unseen `y` (uniform exact-size priors only).
    pub max_marginal_error: f64,
    /// Largest `|r − 1|` (uniform priors only).
    pub max_regularity_error: f64,
    pub innovation_checks: usize,
    pub innovation_failures: usize,
    pub expected_rate_checks: usize,
    pub expected_rate_failures: usize,
    pub min_innovation_slack: f64,
    pub min_expected_rate_slack: f64,
    pub max_r: f64,
}

/// Runs both exact checks on every corpus of size `1..=max_n` over the
/// meta's universe.
pub fn exhaustive_exact_sweep(meta: &MetaSpec, max_n: u64, seed: u64) -> Result<ExactSweep> {
    let corpora: Vec<Corpus> = (1..=max_n)
        .flat_map(|n| enumerate_corpora(meta.n_statements, n, meta.k_max))
        .collect();
    let symmetric_exact = matches!(meta.support_prior, SupportPrior::UniformK | SupportPrior::FixedSize { .. });
    let symmetric = symmetric_exact || matches!(meta.support_prior, SupportPrior::UniformMixed);
    let target = match meta.support_prior {
        SupportPrior::FixedSize { m } => m,
        _ => meta.k_max,
    };

    let parts: Vec<ExactSweep> = corpora
        .par_iter()
        .enumerate()
        .map(|(i, corpus)| -> Result<ExactSweep> {
            let mut s = ExactSweep {
                corpora: 1,
                min_innovation_slack: f64::INFINITY,
                min_expected_rate_slack: f64::INFINITY,
                ..Default::default()
            };
            let post = match exact_posterior(meta, corpus) {
                Ok(p) => p,
                // fixed-size priors cannot explain more observed statements than m
                Err(Error::InconsistentCorpus(_)) => return Ok(s),
                Err(e) => return Err(e),
            };
            let u = post.unseen();
            if u.is_empty() {
                return Ok(s);
            }
            let reg = regularity_ratio(&post)?;
            s.max_r = reg.r;
            if symmetric_exact {
                let want = (target - post.observed().len()) as f64 / u.len() as f64;
                s.max_marginal_error = u
                    .iter()
                    .map(|&y| (post.fact_marginals()[y] - want).abs())
                    .fold(0.0, f64::max);
            }
            if symmetric {
                s.max_regularity_error = (reg.r - 1.0).abs();
            }
            let r = regularity_for(meta, &post)?;
            let mut rng = trial_rng(seed, i as u64);
            for g in exact_battery(corpus, &post, &mut rng)? {
                let c = exact_check_innovation_with(&post, &g, r)?;
                s.innovation_checks += 1;
                s.innovation_failures += usize::from(!c.holds);
                s.min_innovation_slack = s.min_innovation_slack.min(c.slack);
                let e = exact_check_expected_rate_with(&post, &g, r)?;
                s.expected_rate_checks += 1;
                s.expected_rate_failures += usize::from(!e.holds);
                s.min_expected_rate_slack = s.min_expected_rate_slack.min(e.slack);
            }
            Ok(s)
        })
        .collect::<Result<_>>()?;

    Ok(parts.into_iter().fold(
        ExactSweep {
            min_innovation_slack: f64::INFINITY,
            min_expected_rate_slack: f64::INFINITY,
            ..Default::default()
        },
        |a, b| ExactSweep {
            corpora: a.corpora + b.corpora,
            max_marginal_error: a.max_marginal_error.max(b.max_marginal_error),
            max_regularity_error: a.max_regularity_error.max(b.max_regularity_error),
            innovation_checks: a.innovation_checks + b.innovation_checks,
            innovation_failures: a.innovation_failures + b.innovation_failures,
            expected_rate_checks: a.expected_rate_checks + b.expected_rate_checks,
            expected_rate_failures: a.expected_rate_failures + b.expected_rate_failures,
            min_innovation_slack: a.min_innovation_slack.min(b.min_innovation_slack),
            min_expected_rate_slack: a.min_expected_rate_slack.min(b.min_expected_rate_slack),
            max_r: a.max_r.max(b.max_r),
        },
    ))
}

/// Counts for one unconditional check across a randomized sweep.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CheckTally {
    pub name: String,
    pub instances: usize,
    pub failures: usize,
    pub min_slack: f64,
}

impl CheckTally {
    fn record(&mut self, c: &BoundCheck) {
        self.instances += 1;
        self.failures += usize::from(!c.holds);
        self.min_slack = self.min_slack.min(c.slack);
    }

    fn merge(&mut self, o: &CheckTally) {
        self.instances += o.instances;
        self.failures += o.failures;
        self.min_slack = self.min_slack.min(o.min_slack);
    }
}

/// One random `(meta, world, corpus, partition, model)` instance with `N ≤ max_n`.
pub struct RandomInstance {
    pub k: usize,
    pub world: World,
    pub corpus: Corpus,
    pub partition: Partition,
    pub model: Model,
}

pub fn random_instance(seed: u64, max_n: usize) -> Result<RandomInstance> {
    let mut rng = seeded(seed);
    let n = rng.random_range(2..=max_n.max(2));
    let k = rng.random_range(1..=(n - 1).min(16));
    let alpha = [0.1, 0.5, 1.0, 3.0].choose(&mut rng).copied().unwrap_or(1.0);
    let prior = match rng.random_range(0..3) {
        0 => SupportPrior::UniformK,
        1 => SupportPrior::UniformMixed,
        _ => SupportPrior::Weighted {
            weights: (0..n).map(|_| rng.random_range(0.5..4.0)).collect(),
        },
    };
    let meta = MetaSpec::new(n, k, prior, alpha, seed)?;
    let world = sample_world(&meta, &mut rng);
    let draws = rng.random_range(1..=(3 * k) as u64);
    let corpus = sample_corpus(&world, draws, &mut rng)?;
    let partition = Partition::random(n, rng.random_range(1..=n), &mut rng)?;
    let battery = ModelKind::battery();
    let kind = battery.choose(&mut rng).expect("nonempty battery");
    let model = kind.build(&world, &corpus, &mut rng)?;
    Ok(RandomInstance {
        k,
        world,
        corpus,
        partition,
        model,
    })
}

/// Runs the four unconditional checks on `instances` random instances.
pub fn unconditional_sweep(instances: usize, max_n: usize, seed: u64) -> Result<Vec<CheckTally>> {
    let names = ["hall_implies_innov", "calib_mm_innov", "coarsening_lemma", "coarsening_lemma_cells", "innov_mm"];
    let empty = || -> Vec<CheckTally> {
        names
            .iter()
            .map(|n| CheckTally {
                name: (*n).into(),
                min_slack: f64::INFINITY,
                ..Default::default()
            })
            .collect()
    };
    let per: Vec<Vec<CheckTally>> = (0..instances as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<CheckTally>> {
            let inst = random_instance(derive_seed(seed, i), max_n)?;
            let mut t = empty();
            t[0].record(&check_hall_implies_innov(&inst.model, &inst.world, &inst.corpus));
            t[1].record(&check_calib_mm_innov(&inst.world, &inst.corpus, &inst.partition)?);
            t[2].record(&check_coarsening_lemma(&inst.world, &inst.corpus, &inst.partition, inst.k)?);
            for c in check_coarsening_lemma_cells(&inst.world, &inst.corpus, &inst.partition, inst.k)? {
                t[3].record(&c);
            }
            t[4].record(&check_innov_mm(&inst.model, &inst.world, &inst.corpus, &inst.partition, inst.k)?);
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut total = empty();
    for t in &per {
        for (a, b) in total.iter_mut().zip(t) {
            a.merge(b);
        }
    }
    Ok(total)
}
