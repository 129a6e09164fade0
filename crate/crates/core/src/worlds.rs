//! Meta-distributions over worlds, world and corpus sampling, and the exact
//! posterior over fact supports given a corpus.
//!
//! A world is drawn in two stages: a fact set `F` from the support prior,
//! then in-support weights from a symmetric Dirichlet(α). Because the
//! Dirichlet is symmetric, the marginal likelihood of a corpus given `F`
//! depends on `F` only through `|F|`, which keeps exact enumeration cheap.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Open01};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::dist::{Corpus, Dist, StatementId, MAX_STATEMENTS};
use crate::error::{check_dims, Error, Result};

/// Default cap on the number of candidate supports enumerated exactly.
pub const ENUMERATION_CAP: usize = 2_000_000;

/// Ratio `K/N` above which the sparsity regime is considered violated.
pub const SPARSITY_WARN_RATIO: f64 = 0.25;

/// Law of the fact set `F`.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportPrior {
    /// Uniform over subsets of size exactly `K`.
    UniformK,
    /// Size uniform on `1..=K`, then a uniform subset of that size.
    UniformMixed,
    /// Subsets of size `K` with probability proportional to `Π_{y∈F} w_y`.
    Weighted { weights: Vec<f64> },
    /// Uniform over subsets of size exactly `m ≤ K`.
    FixedSize { m: usize },
}

impl SupportPrior {
    pub fn name(&self) -> &'static str {
        match self {
            SupportPrior::UniformK => "uniform_k",
            SupportPrior::UniformMixed => "uniform_mixed",
            SupportPrior::Weighted { .. } => "weighted",
            SupportPrior::FixedSize { .. } => "fixed_size",
        }
    }
}

/// Parameters of a meta-distribution over worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetaSpecRepr", into = "MetaSpecRepr")]
pub struct MetaSpec {
    pub n_statements: usize,
    pub k_max: usize,
    pub support_prior: SupportPrior,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct MetaSpecRepr {
    n_statements: usize,
    k_max: usize,
    #[serde(default = "default_prior")]
    support_prior: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    support_size: Option<usize>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default)]
    seed: u64,
}

fn default_prior() -> String {
    "uniform_k".into()
}

fn default_alpha() -> f64 {
    1.0
}

impl TryFrom<MetaSpecRepr> for MetaSpec {
    type Error = Error;
    fn try_from(r: MetaSpecRepr) -> Result<Self> {
        let support_prior = match r.support_prior.as_str() {
            "uniform_k" => SupportPrior::UniformK,
            "uniform_mixed" => SupportPrior::UniformMixed,
            "weighted" => SupportPrior::Weighted {
                weights: r
                    .weights
                    .ok_or_else(|| Error::param("weighted support prior needs `weights`"))?,
            },
            "fixed_size" => SupportPrior::FixedSize {
                m: r
                    .support_size
                    .ok_or_else(|| Error::param("fixed_size support prior needs `support_size`"))?,
            },
            other => return Err(Error::param(format!("unknown support_prior `{other}`"))),
        };
        let meta = MetaSpec {
            n_statements: r.n_statements,
            k_max: r.k_max,
            support_prior,
            alpha: r.alpha,
            seed: r.seed,
        };
        meta.validate()?;
        Ok(meta)
    }
}

impl From<MetaSpec> for MetaSpecRepr {
    fn from(m: MetaSpec) -> Self {
        let (weights, support_size) = match &m.support_prior {
            SupportPrior::Weighted { weights } => (Some(weights.clone()), None),
            SupportPrior::FixedSize { m } => (None, Some(*m)),
            _ => (None, None),
        };
        MetaSpecRepr {
            n_statements: m.n_statements,
            k_max: m.k_max,
            support_prior: m.support_prior.name().into(),
            weights,
            support_size,
            alpha: m.alpha,
            seed: m.seed,
        }
    }
}

impl MetaSpec {
    pub fn new(n_statements: usize, k_max: usize, support_prior: SupportPrior, alpha: f64, seed: u64) -> Result<Self> {
        let meta = MetaSpec {
            n_statements,
            k_max,
            support_prior,
            alpha,
            seed,
        };
        meta.validate()?;
        Ok(meta)
    }

    pub fn uniform_k(n_statements: usize, k_max: usize) -> Result<Self> {
        MetaSpec::new(n_statements, k_max, SupportPrior::UniformK, 1.0, 0)
    }

    /// Weighted-subsets prior with `ρ` on the first half of `Ω` and 1 on the rest.
    pub fn two_class(n_statements: usize, k_max: usize, rho: f64) -> Result<Self> {
        let weights = (0..n_statements)
            .map(|y| if y < n_statements / 2 { rho } else { 1.0 })
            .collect();
        MetaSpec::new(n_statements, k_max, SupportPrior::Weighted { weights }, 1.0, 0)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        self.alpha = alpha;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, k) = (self.n_statements, self.k_max);
        if n > MAX_STATEMENTS {
            return Err(Error::param(format!("n_statements {n} exceeds cap {MAX_STATEMENTS}")));
        }
        if k < 1 || k >= n {
            return Err(Error::param(format!("need 1 <= k_max < n_statements, got K={k}, N={n}")));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::param(format!("alpha must be positive, got {}", self.alpha)));
        }
        match &self.support_prior {
            SupportPrior::Weighted { weights } => {
                check_dims(weights.len(), n)?;
                if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                    return Err(Error::param(format!("weights must be positive, found {w}")));
                }
            }
            SupportPrior::FixedSize { m } if *m < 1 || *m > k => {
                return Err(Error::param(format!("support_size {m} outside 1..=K ({k})")));
            }
            _ => {}
        }
        Ok(())
    }

    /// True when `K/N` leaves the sparse regime the bounds are meant for.
    pub fn sparsity_warning(&self) -> bool {
        self.k_max as f64 / self.n_statements as f64 > SPARSITY_WARN_RATIO
    }

    /// Support sizes with positive prior mass.
    pub fn admissible_sizes(&self) -> Vec<usize> {
        match &self.support_prior {
            SupportPrior::UniformK | SupportPrior::Weighted { .. } => vec![self.k_max],
            SupportPrior::UniformMixed => (1..=self.k_max).collect(),
            SupportPrior::FixedSize { m } => vec![*m],
        }
    }

    /// Prior log-mass of a support of size `size`, up to the factor
    /// `Π_{y∈F} w_y` for the weighted prior (see [`Self::log_weight`]).
    fn log_size_term(&self, size: usize) -> f64 {
        let n = self.n_statements;
        match &self.support_prior {
            SupportPrior::UniformK | SupportPrior::FixedSize { .. } => -ln_choose(n, size),
            SupportPrior::UniformMixed => -(self.k_max as f64).ln() - ln_choose(n, size),
            SupportPrior::Weighted { weights } => -log_elementary_symmetric(weights, self.k_max)[0][self.k_max],
        }
    }

    fn log_weight(&self, y: StatementId) -> f64 {
        match &self.support_prior {
            SupportPrior::Weighted { weights } => weights[y].ln(),
            _ => 0.0,
        }
    }

    /// Exact prior probability of a particular support.
    pub fn support_probability(&self, support: &[StatementId]) -> f64 {
        let s = support.len();
        if !self.admissible_sizes().contains(&s) {
            return 0.0;
        }
        let lw: f64 = support.iter().map(|&y| self.log_weight(y)).sum();
        (self.log_size_term(s) + lw).exp()
    }

    fn sample_support<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<StatementId> {
        let n = self.n_statements;
        let mut f = match &self.support_prior {
            SupportPrior::UniformK => index::sample(rng, n, self.k_max).into_vec(),
            SupportPrior::FixedSize { m } => index::sample(rng, n, *m).into_vec(),
            SupportPrior::UniformMixed => {
                let s = rng.random_range(1..=self.k_max);
                index::sample(rng, n, s).into_vec()
            }
            SupportPrior::Weighted { weights } => sample_weighted_subset(weights, self.k_max, rng),
        };
        f.sort_unstable();
        f
    }
}

/// `ln C(n, k)`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// `table[i][k] = ln e_k(w_i, …, w_{N-1})` for `k ≤ k_max`.
fn log_elementary_symmetric(weights: &[f64], k_max: usize) -> Vec<Vec<f64>> {
    let n = weights.len();
    let mut table = vec![vec![f64::NEG_INFINITY; k_max + 1]; n + 1];
    table[n][0] = 0.0;
    for i in (0..n).rev() {
        let lw = weights[i].ln();
        table[i][0] = 0.0;
        for k in 1..=k_max {
            table[i][k] = log_add(table[i + 1][k], lw + table[i + 1][k - 1]);
        }
    }
    table
}

/// Exact draw of a `k`-subset with probability proportional to `Π w_y`,
/// by sequential inclusion against suffix elementary symmetric sums.
fn sample_weighted_subset<R: Rng + ?Sized>(weights: &[f64], k: usize, rng: &mut R) -> Vec<StatementId> {
    let table = log_elementary_symmetric(weights, k);
    let mut need = k;
    let mut out = Vec::with_capacity(k);
    for (i, &w) in weights.iter().enumerate() {
        if need == 0 {
            break;
        }
        let p_in = (w.ln() + table[i + 1][need - 1] - table[i][need]).exp();
        if rng.random::<f64>() < p_in {
            out.push(i);
            need -= 1;
        }
    }
    out
}

/// Dirichlet draw with concentration `alpha(y)` on `support`, zero elsewhere.
/// Gamma variates are drawn in log space so that small concentrations do
/// not underflow to an all-zero vector.
fn dirichlet_on<R: Rng + ?Sized>(
    n: usize,
    support: &[StatementId],
    alpha: impl Fn(StatementId) -> f64,
    rng: &mut R,
) -> Dist {
    let logs: Vec<f64> = support
        .iter()
        .map(|&y| {
            let a = alpha(y);
            // G(a) = G(a + 1) · U^{1/a}
            let g = Gamma::new(a + 1.0, 1.0).expect("positive shape").sample(rng);
            let u: f64 = Open01.sample(rng);
            g.ln() + u.ln() / a
        })
        .collect();
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x = (*x / total).max(f64::MIN_POSITIVE);
    }
    let total: f64 = w.iter().sum();
    let mut mass = vec![0.0; n];
    for (&y, x) in support.iter().zip(&w) {
        mass[y] = x / total;
    }
    Dist::new(mass).expect("normalized dirichlet draw")
}

/// A document distribution together with its fact set.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    facts: Vec<StatementId>,
    is_fact: Vec<bool>,
    dist: Dist,
}

impl World {
    /// The fact set is the support of `dist`.
    pub fn from_dist(dist: Dist) -> Self {
        let facts = dist.support();
        let mut is_fact = vec![false; dist.len()];
        for &y in &facts {
            is_fact[y] = true;
        }
        World { facts, is_fact, dist }
    }

    pub fn n_statements(&self) -> usize {
        self.dist.len()
    }

    pub fn dist(&self) -> &Dist {
        &self.dist
    }

    /// `F`, ascending.
    pub fn facts(&self) -> &[StatementId] {
        &self.facts
    }

    /// `H = Ω \ F`, ascending.
    pub fn hallucinations(&self) -> Vec<StatementId> {
        (0..self.n_statements()).filter(|&y| !self.is_fact[y]).collect()
    }

    pub fn is_fact(&self, y: StatementId) -> bool {
        self.is_fact[y]
    }
}

pub fn sample_world<R: Rng + ?Sized>(meta: &MetaSpec, rng: &mut R) -> World {
    let facts = meta.sample_support(rng);
    let dist = dirichlet_on(meta.n_statements, &facts, |_| meta.alpha, rng);
    World::from_dist(dist)
}

/// `n` i.i.d. draws from the world's distribution.
pub fn sample_corpus<R: Rng + ?Sized>(world: &World, n: u64, rng: &mut R) -> Result<Corpus> {
    if n == 0 {
        return Err(Error::param("corpus size must be at least 1"));
    }
    let facts = world.facts();
    let weights: Vec<f64> = facts.iter().map(|&y| world.dist.get(y)).collect();
    let picker = WeightedIndex::new(&weights).map_err(|e| Error::InvalidDist(e.to_string()))?;
    let mut counts = vec![0u64; world.n_statements()];
    for _ in 0..n {
        counts[facts[picker.sample(rng)]] += 1;
    }
    Corpus::from_counts(counts)
}

/// Exact posterior over fact supports given a corpus.
#[derive(Debug, Clone)]
pub struct Posterior {
    n_statements: usize,
    k_max: usize,
    alpha: f64,
    counts: Vec<u64>,
    n: u64,
    observed: Vec<StatementId>,
    unseen: Vec<StatementId>,
    /// `F ∩ U` for every candidate support; `F = O ∪ extras`.
    extras: Vec<Vec<StatementId>>,
    weights: Vec<f64>,
    fact_marginals: Vec<f64>,
    expected_fu: f64,
}

/// Number of candidate supports the posterior would enumerate.
pub fn candidate_count(meta: &MetaSpec, corpus: &Corpus) -> f64 {
    let n_obs = corpus.n_observed();
    let n_uns = corpus.n_unseen();
    meta.admissible_sizes()
        .into_iter()
        .filter(|&s| s >= n_obs && s - n_obs <= n_uns)
        .map(|s| ln_choose(n_uns, s - n_obs).exp())
        .sum()
}

pub fn exact_posterior(meta: &MetaSpec, corpus: &Corpus) -> Result<Posterior> {
    exact_posterior_capped(meta, corpus, ENUMERATION_CAP)
}

pub fn exact_posterior_capped(meta: &MetaSpec, corpus: &Corpus, cap: usize) -> Result<Posterior> {
    check_dims(meta.n_statements, corpus.n_statements())?;
    let observed = corpus.observed();
    let unseen = corpus.unseen();
    let n_obs = observed.len();
    let sizes: Vec<usize> = meta
        .admissible_sizes()
        .into_iter()
        .filter(|&s| s >= n_obs && s - n_obs <= unseen.len())
        .collect();
    if sizes.is_empty() {
        return Err(Error::InconsistentCorpus(format!(
            "{n_obs} observed statements but admissible support sizes are {:?}",
            meta.admissible_sizes()
        )));
    }
    let count = candidate_count(meta, corpus);
    if count > cap as f64 {
        return Err(Error::PosteriorTooLarge { candidates: count, cap });
    }

    let n = corpus.n() as f64;
    let alpha = meta.alpha;
    // ln of the Dirichlet-multinomial likelihood, dropping the factor that
    // only depends on the observed counts (identical for every candidate).
    let log_lik = |s: usize| ln_gamma(s as f64 * alpha) - ln_gamma(n + s as f64 * alpha);
    let obs_lw: f64 = observed.iter().map(|&y| meta.log_weight(y)).sum();

    let mut extras = Vec::new();
    let mut log_w = Vec::new();
    for &s in &sizes {
        let base = meta.log_size_term(s) + log_lik(s) + obs_lw;
        for_each_combination(unseen.len(), s - n_obs, |idx| {
            let e: Vec<StatementId> = idx.iter().map(|&i| unseen[i]).collect();
            let lw: f64 = e.iter().map(|&y| meta.log_weight(y)).sum();
            extras.push(e);
            log_w.push(base + lw);
        });
    }

    let max = log_w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut weights: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);

    let mut fact_marginals = vec![0.0; meta.n_statements];
    for &y in &observed {
        fact_marginals[y] = 1.0;
    }
    let mut expected_fu = 0.0;
    for (e, &w) in extras.iter().zip(&weights) {
        for &y in e {
            fact_marginals[y] += w;
        }
        expected_fu += w * e.len() as f64;
    }

    Ok(Posterior {
        n_statements: meta.n_statements,
        k_max: meta.k_max,
        alpha,
        counts: corpus.counts().to_vec(),
        n: corpus.n(),
        observed,
        unseen,
        extras,
        weights,
        fact_marginals,
        expected_fu,
    })
}

/// Calls `f` with every `k`-combination of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, mut f: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        f(&idx);
        let Some(i) = (0..k).rev().find(|&i| idx[i] != i + n - k) else {
            return;
        };
        idx[i] += 1;
        for j in i + 1..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

impl Posterior {
    pub fn n_statements(&self) -> usize {
        self.n_statements
    }

    pub fn k_max(&self) -> usize {
        self.k_max
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn observed(&self) -> &[StatementId] {
        &self.observed
    }

    pub fn unseen(&self) -> &[StatementId] {
        &self.unseen
    }

    pub fn n_candidates(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `F ∩ U` of candidate `i`.
    pub fn candidate_extras(&self, i: usize) -> &[StatementId] {
        &self.extras[i]
    }

    /// Full support `O ∪ extras` of candidate `i`, ascending.
    pub fn candidate_support(&self, i: usize) -> Vec<StatementId> {
        let mut f: Vec<StatementId> = self.observed.iter().chain(&self.extras[i]).copied().collect();
        f.sort_unstable();
        f
    }

    /// `(support, weight)` for every candidate.
    pub fn supports(&self) -> impl Iterator<Item = (Vec<StatementId>, f64)> + '_ {
        (0..self.n_candidates()).map(|i| (self.candidate_support(i), self.weights[i]))
    }

    /// `Pr[y ∈ F | X]`.
    pub fn fact_marginals(&self) -> &[f64] {
        &self.fact_marginals
    }

    /// `E[|F ∩ U| | X]`.
    pub fn expected_fu(&self) -> f64 {
        self.expected_fu
    }

    /// `E[p(y) | X]` under the Dirichlet posterior averaged over supports.
    pub fn expected_probabilities(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_statements];
        let n = self.n as f64;
        for (e, &w) in self.extras.iter().zip(&self.weights) {
            let s = (self.observed.len() + e.len()) as f64;
            let denom = n + s * self.alpha;
            for &y in self.observed.iter().chain(e) {
                out[y] += w * (self.counts[y] as f64 + self.alpha) / denom;
            }
        }
        out
    }

    /// Sampler over worlds drawn from this posterior.
    pub fn sampler(&self) -> WorldSampler<'_> {
        WorldSampler {
            post: self,
            picker: WeightedIndex::new(&self.weights).expect("posterior weights normalized"),
        }
    }
}

/// Regularity ratio `r` of a posterior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Regularity {
    pub r: f64,
    /// Set when no unseen statement can be a fact and `r = 1` by convention.
    pub degenerate: bool,
}

/// `r = max_{y∈U} Pr[y∈F|X] · |U| / E[|F∩U| | X]`.
pub fn regularity_ratio(post: &Posterior) -> Result<Regularity> {
    if post.unseen.is_empty() {
        return Err(Error::Precondition("regularity ratio needs |U| >= 1".into()));
    }
    if post.expected_fu <= 0.0 {
        return Ok(Regularity { r: 1.0, degenerate: true });
    }
    let max = post
        .unseen
        .iter()
        .map(|&y| post.fact_marginals[y])
        .fold(0.0, f64::max);
    let r = max * post.unseen.len() as f64 / post.expected_fu;
    Ok(Regularity { r: r.max(1.0), degenerate: false })
}

/// `Pr[g(H) > 0 | X]`, exact.
pub fn prob_hallucinate(g: &Dist, post: &Posterior) -> Result<f64> {
    check_dims(g.len(), post.n_statements)?;
    let mut on_unseen = vec![false; post.n_statements];
    let mut n_pos = 0;
    for &y in &post.unseen {
        if g.get(y) > 0.0 {
            on_unseen[y] = true;
            n_pos += 1;
        }
    }
    if n_pos == 0 {
        return Ok(0.0);
    }
    // g(H) > 0 iff some y ∈ U with g(y) > 0 falls outside F.
    Ok(post
        .extras
        .iter()
        .zip(&post.weights)
        .filter(|(e, _)| e.iter().filter(|&&y| on_unseen[y]).count() < n_pos)
        .map(|(_, w)| w)
        .sum::<f64>()
        .min(1.0))
}

/// `E[g(H) | X] = Σ_{y∈U} g(y) (1 − Pr[y∈F|X])`, exact.
pub fn expected_hallucination(g: &Dist, post: &Posterior) -> Result<f64> {
    check_dims(g.len(), post.n_statements)?;
    Ok(post
        .unseen
        .iter()
        .map(|&y| g.get(y) * (1.0 - post.fact_marginals[y]))
        .sum())
}

/// Draws worlds from the posterior: a support by posterior weight, then
/// in-support weights from Dirichlet(α + counts).
pub struct WorldSampler<'a> {
    post: &'a Posterior,
    picker: WeightedIndex<f64>,
}

impl WorldSampler<'_> {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> World {
        let i = self.picker.sample(rng);
        let support = self.post.candidate_support(i);
        let alpha = self.post.alpha;
        let counts = &self.post.counts;
        World::from_dist(dirichlet_on(
            self.post.n_statements,
            &support,
            |y| alpha + counts[y] as f64,
            rng,
        ))
    }

    /// Index of a candidate support drawn by posterior weight.
    pub fn sample_candidate<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.picker.sample(rng)
    }
}

pub fn conditional_world_sampler<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> World {
    post.sampler().sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::collections::HashMap;

    /// Brute force: every subset of Ω, prior × likelihood via explicit
    /// Dirichlet-multinomial with gamma functions over the full support.
    fn brute_marginals(meta: &MetaSpec, corpus: &Corpus) -> (Vec<f64>, f64) {
        let n = meta.n_statements;
        let a = meta.alpha;
        let total_n = corpus.n() as f64;
        let mut marg = vec![0.0; n];
        let mut z = 0.0;
        for mask in 0u32..(1 << n) {
            let f: Vec<usize> = (0..n).filter(|y| mask >> y & 1 == 1).collect();
            if corpus.observed().iter().any(|y| !f.contains(y)) {
                continue;
            }
            let prior = meta.support_probability(&f);
            if prior == 0.0 {
                continue;
            }
            let s = f.len() as f64;
            let mut ll = ln_gamma(s * a) - ln_gamma(total_n + s * a);
            for &y in &f {
                ll += ln_gamma(corpus.count(y) as f64 + a) - ln_gamma(a);
            }
            let w = prior * ll.exp();
            z += w;
            for &y in &f {
                marg[y] += w;
            }
        }
        for m in &mut marg {
            *m /= z;
        }
        let efu = corpus.unseen().iter().map(|&y| marg[y]).sum();
        (marg, efu)
    }

    #[test]
    fn ln_choose_small() {
        assert!((ln_choose(10, 3).exp() - 120.0).abs() < 1e-9);
        assert_eq!(ln_choose(3, 4), f64::NEG_INFINITY);
    }

    #[test]
    fn combinations_enumerate_all() {
        let mut seen = Vec::new();
        for_each_combination(5, 2, |c| seen.push(c.to_vec()));
        assert_eq!(seen.len(), 10);
        assert_eq!(seen[0], vec![0, 1]);
        assert_eq!(seen[9], vec![3, 4]);
        let mut empty = 0;
        for_each_combination(4, 0, |c| {
            assert!(c.is_empty());
            empty += 1;
        });
        assert_eq!(empty, 1);
    }

    #[test]
    fn meta_validation() {
        assert!(MetaSpec::uniform_k(10, 0).is_err());
        assert!(MetaSpec::uniform_k(10, 10).is_err());
        assert!(MetaSpec::new(10, 3, SupportPrior::Weighted { weights: vec![1.0; 9] }, 1.0, 0).is_err());
        assert!(MetaSpec::new(10, 3, SupportPrior::Weighted { weights: vec![0.0; 10] }, 1.0, 0).is_err());
        assert!(MetaSpec::new(10, 3, SupportPrior::FixedSize { m: 4 }, 1.0, 0).is_err());
        assert!(MetaSpec::uniform_k(10, 3).unwrap().with_alpha(0.0).is_err());
        assert!(MetaSpec::uniform_k(10, 3).unwrap().sparsity_warning());
        assert!(!MetaSpec::uniform_k(100, 3).unwrap().sparsity_warning());
    }

    #[test]
    fn meta_json_keys() {
        let m: MetaSpec = serde_json::from_str(
            r#"{"n_statements":8,"k_max":2,"support_prior":"weighted","weights":[2,2,2,2,1,1,1,1],"alpha":0.5,"seed":3}"#,
        )
        .unwrap();
        assert_eq!(m, MetaSpec::two_class(8, 2, 2.0).unwrap().with_alpha(0.5).map(|mut m| {
            m.seed = 3;
            m
        }).unwrap());
        let back = serde_json::to_value(&m).unwrap();
        assert_eq!(back["support_prior"], "weighted");
        assert!(serde_json::from_str::<MetaSpec>(r#"{"n_statements":8,"k_max":2,"support_prior":"weighted"}"#).is_err());
    }

    #[test]
    fn k_one_world_is_point_mass() {
        let meta = MetaSpec::uniform_k(10, 1).unwrap();
        let mut rng = seeded(1);
        for _ in 0..20 {
            let w = sample_world(&meta, &mut rng);
            assert_eq!(w.facts().len(), 1);
            assert_eq!(w.dist().get(w.facts()[0]), 1.0);
        }
    }

    #[test]
    fn worlds_respect_sparsity_and_support() {
        let mut rng = seeded(2);
        for prior in [
            SupportPrior::UniformK,
            SupportPrior::UniformMixed,
            SupportPrior::FixedSize { m: 2 },
            SupportPrior::Weighted { weights: (1..=30).map(|i| i as f64).collect() },
        ] {
            let meta = MetaSpec::new(30, 5, prior, 0.05, 0).unwrap();
            for _ in 0..200 {
                let w = sample_world(&meta, &mut rng);
                assert!(w.facts().len() <= 5 && !w.facts().is_empty());
                for y in 0..30 {
                    assert_eq!(w.dist().get(y) > 0.0, w.is_fact(y));
                }
            }
        }
    }

    #[test]
    fn uniform_k_subsets_pass_chi_squared() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let meta = MetaSpec::uniform_k(10, 3).unwrap();
        let mut rng = seeded(11);
        let draws = 100_000;
        let mut freq: HashMap<Vec<usize>, u64> = HashMap::new();
        for _ in 0..draws {
            *freq.entry(meta.sample_support(&mut rng)).or_default() += 1;
        }
        assert_eq!(freq.len(), 120);
        let expected = draws as f64 / 120.0;
        let stat: f64 = freq.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        let crit = ChiSquared::new(119.0).unwrap().inverse_cdf(0.999);
        assert!(stat < crit, "chi2 {stat} >= {crit}");
    }

    #[test]
    fn weighted_subsets_match_enumerated_law() {
        // enumerate all 3-subsets of 8 with weights w = (2,1,...,1)
        let n = 8;
        let mut weights = vec![1.0; n];
        weights[0] = 2.0;
        let meta = MetaSpec::new(n, 3, SupportPrior::Weighted { weights: weights.clone() }, 1.0, 0).unwrap();
        let (mut z, mut z0) = (0.0, 0.0);
        for_each_combination(n, 3, |c| {
            let w: f64 = c.iter().map(|&i| weights[i]).product();
            z += w;
            if c.contains(&0) {
                z0 += w;
            }
        });
        for_each_combination(n, 3, |c| {
            let w: f64 = c.iter().map(|&i| weights[i]).product();
            assert!((meta.support_probability(c) - w / z).abs() < 1e-12);
        });
        let p0 = z0 / z;
        let mut rng = seeded(5);
        let draws = 100_000;
        let hits = (0..draws)
            .filter(|_| meta.sample_support(&mut rng).contains(&0))
            .count() as f64;
        let sigma = (p0 * (1.0 - p0) / draws as f64).sqrt();
        assert!((hits / draws as f64 - p0).abs() < 3.0 * sigma, "{} vs {p0}", hits / draws as f64);
        // the prior normalizes over all supports
        let mut total = 0.0;
        for_each_combination(n, 3, |c| total += meta.support_probability(c));
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn point_mass_world_has_no_missing_mass() {
        let world = World::from_dist(Dist::point_mass(6, 4).unwrap());
        let c = sample_corpus(&world, 17, &mut seeded(0)).unwrap();
        assert_eq!(c.counts()[4], 17);
        assert_eq!(world.dist().mass_where(|y| !c.is_observed(y)), 0.0);
        assert!(sample_corpus(&world, 0, &mut seeded(0)).is_err());
    }

    #[test]
    fn single_draw_from_uniform_world() {
        let world = World::from_dist(Dist::uniform_on(10, &[1, 3, 5, 7]).unwrap());
        let c = sample_corpus(&world, 1, &mut seeded(9)).unwrap();
        assert_eq!(world.dist().mass_where(|y| !c.is_observed(y)), 0.75);
    }

    #[test]
    fn missing_mass_decays_like_closed_form() {
        let mut rng = seeded(21);
        let meta = MetaSpec::uniform_k(40, 8).unwrap();
        let world = sample_world(&meta, &mut rng);
        let p = world.dist();
        let mut prev = f64::INFINITY;
        for n in [10u64, 100, 1000] {
            let exact: f64 = p.mass().iter().map(|&q| q * (1.0 - q).powi(n as i32)).sum();
            let trials = 4000;
            let samples: Vec<f64> = (0..trials)
                .map(|_| {
                    let c = sample_corpus(&world, n, &mut rng).unwrap();
                    p.mass_where(|y| !c.is_observed(y))
                })
                .collect();
            let mean = samples.iter().sum::<f64>() / trials as f64;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
            let se = (var / trials as f64).sqrt();
            assert!((mean - exact).abs() <= 3.0 * se + 1e-12, "n={n}: {mean} vs {exact}");
            assert!(exact < prev);
            prev = exact;
        }
    }

    #[test]
    fn uniform_posterior_has_symmetric_marginals() {
        let meta = MetaSpec::uniform_k(10, 3).unwrap();
        let corpus = Corpus::from_draws(10, &[2, 2, 7]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let (brute, brute_efu) = brute_marginals(&meta, &corpus);
        let expect = (3.0 - 2.0) / 8.0;
        for &y in post.unseen() {
            assert!((post.fact_marginals()[y] - expect).abs() < 1e-12);
            assert!((brute[y] - expect).abs() < 1e-12);
        }
        for &y in post.observed() {
            assert_eq!(post.fact_marginals()[y], 1.0);
        }
        assert!((post.expected_fu() - brute_efu).abs() < 1e-12);
        assert!((regularity_ratio(&post).unwrap().r - 1.0).abs() < 1e-12);
        let total: f64 = post.weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn full_observation_forces_support() {
        let meta = MetaSpec::uniform_k(10, 3).unwrap();
        let corpus = Corpus::from_draws(10, &[0, 4, 9, 4]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        assert_eq!(post.n_candidates(), 1);
        assert_eq!(post.candidate_support(0), vec![0, 4, 9]);
        assert!(post.unseen().iter().all(|&y| post.fact_marginals()[y] == 0.0));
        let reg = regularity_ratio(&post).unwrap();
        assert!(reg.degenerate && reg.r == 1.0);
    }

    #[test]
    fn weighted_posterior_matches_brute_force() {
        let meta = MetaSpec::two_class(8, 2, 2.0).unwrap();
        let corpus = Corpus::from_draws(8, &[5, 5, 5]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let (brute, brute_efu) = brute_marginals(&meta, &corpus);
        for y in 0..8 {
            assert!((post.fact_marginals()[y] - brute[y]).abs() < 1e-12, "y={y}");
        }
        // heavier half is more likely to hold the missing fact
        assert!(post.fact_marginals()[0] > post.fact_marginals()[6]);
        // oracle: one extra fact, Pr ∝ w_y, so r = 2·7 / (4·2 + 3·1)
        let reg = regularity_ratio(&post).unwrap();
        assert!((reg.r - 14.0 / 11.0).abs() < 1e-12, "r = {}", reg.r);
        assert!((post.expected_fu() - brute_efu).abs() < 1e-12);
    }

    #[test]
    fn mixed_size_posterior_matches_brute_force() {
        let meta = MetaSpec::new(9, 3, SupportPrior::UniformMixed, 0.7, 0).unwrap();
        let corpus = Corpus::from_draws(9, &[1, 1, 1, 1]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let (brute, _) = brute_marginals(&meta, &corpus);
        for y in 0..9 {
            assert!((post.fact_marginals()[y] - brute[y]).abs() < 1e-12);
        }
        assert!((regularity_ratio(&post).unwrap().r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_errors() {
        let meta = MetaSpec::uniform_k(10, 2).unwrap();
        let too_many = Corpus::from_draws(10, &[0, 1, 2]).unwrap();
        assert!(matches!(exact_posterior(&meta, &too_many), Err(Error::InconsistentCorpus(_))));
        let big = MetaSpec::uniform_k(4000, 10).unwrap();
        let c = Corpus::from_draws(4000, &[0]).unwrap();
        assert!(matches!(exact_posterior(&big, &c), Err(Error::PosteriorTooLarge { .. })));
    }

    #[test]
    fn regular_probabilities_under_uniform_prior() {
        let meta = MetaSpec::new(10, 3, SupportPrior::UniformMixed, 0.5, 0).unwrap();
        let corpus = Corpus::from_draws(10, &[3, 3, 8]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let ep = post.expected_probabilities();
        let u = post.unseen();
        for &y in u {
            assert!((ep[y] - ep[u[0]]).abs() < 1e-12);
        }
        assert!((ep.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn prob_hallucinate_cases() {
        let meta = MetaSpec::uniform_k(10, 3).unwrap();
        let corpus = Corpus::from_draws(10, &[0, 1]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let emp = Dist::new(vec![0.5, 0.5, 0., 0., 0., 0., 0., 0., 0., 0.]).unwrap();
        assert_eq!(prob_hallucinate(&emp, &post).unwrap(), 0.0);
        let spike = Dist::point_mass(10, 6).unwrap();
        let want = 1.0 - (3.0 - 2.0) / 8.0;
        assert!((prob_hallucinate(&spike, &post).unwrap() - want).abs() < 1e-12);
        let everywhere = Dist::uniform(10).unwrap();
        assert!((prob_hallucinate(&everywhere, &post).unwrap() - 1.0).abs() < 1e-12);
        // expected hallucination via candidate-by-candidate sum
        let g = Dist::random(10, &mut seeded(3)).unwrap();
        let direct: f64 = post
            .supports()
            .map(|(f, w)| w * g.mass_where(|y| !f.contains(&y)))
            .sum();
        assert!((expected_hallucination(&g, &post).unwrap() - direct).abs() < 1e-12);
        let gu = g.mass_where(|y| !corpus.is_observed(y));
        assert!((direct - gu * (1.0 - 1.0 / 8.0)).abs() < 1e-12);
    }

    #[test]
    fn sampler_frequencies_match_weights() {
        let meta = MetaSpec::two_class(8, 3, 3.0).unwrap();
        let corpus = Corpus::from_draws(8, &[6, 6, 7]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let sampler = post.sampler();
        let mut rng = seeded(4);
        let draws = 100_000;
        let mut hits = vec![0u64; post.n_candidates()];
        for _ in 0..draws {
            let w = sampler.sample(&mut rng);
            assert!(post.observed().iter().all(|&y| w.is_fact(y)));
            let e: Vec<usize> = w.facts().iter().copied().filter(|y| !corpus.is_observed(*y)).collect();
            let i = (0..post.n_candidates()).find(|&i| post.candidate_extras(i) == e.as_slice()).unwrap();
            hits[i] += 1;
        }
        for (i, &h) in hits.iter().enumerate() {
            let p = post.weights()[i];
            let sigma = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((h as f64 / draws as f64 - p).abs() < 4.0 * sigma, "candidate {i}");
        }
    }

    #[test]
    fn single_candidate_sampler_is_constant() {
        let meta = MetaSpec::uniform_k(6, 2).unwrap();
        let corpus = Corpus::from_draws(6, &[1, 4]).unwrap();
        let post = exact_posterior(&meta, &corpus).unwrap();
        let mut rng = seeded(0);
        for _ in 0..50 {
            assert_eq!(conditional_world_sampler(&post, &mut rng).facts(), &[1, 4]);
        }
    }
}
