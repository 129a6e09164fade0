//! Discrete distributions over a finite statement universe, partitions,
//! coarsening, total variation and miscalibration.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{check_dims, Error, Result};

/// Index of a statement in `Ω = {0, …, N-1}`.
pub type StatementId = usize;

/// Default cap on the universe size for dense simulation.
pub const MAX_STATEMENTS: usize = 4096;

/// Inputs within this distance of unit mass are accepted unchanged.
pub const NORM_TOL: f64 = 1e-9;
/// Inputs within this distance of unit mass are renormalized; beyond it they
/// are rejected.
pub const RENORM_TOL: f64 = 1e-6;

/// A probability vector over `N` statements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistRepr", into = "DistRepr")]
pub struct Dist {
    mass: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DistRepr {
    mass: Vec<f64>,
}

impl TryFrom<DistRepr> for Dist {
    type Error = Error;
    fn try_from(r: DistRepr) -> Result<Self> {
        Dist::new(r.mass)
    }
}

impl From<Dist> for DistRepr {
    fn from(d: Dist) -> Self {
        DistRepr { mass: d.mass }
    }
}

impl Dist {
    /// Validates a mass vector: finite, non-negative, summing to one.
    pub fn new(mut mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::InvalidDist("empty mass vector".into()));
        }
        for (i, &m) in mass.iter().enumerate() {
            if !m.is_finite() || m < 0.0 {
                return Err(Error::InvalidDist(format!("entry {i} = {m}")));
            }
        }
        let total: f64 = mass.iter().sum();
        let drift = (total - 1.0).abs();
        if drift > RENORM_TOL {
            return Err(Error::InvalidDist(format!("mass sums to {total}")));
        }
        if drift > NORM_TOL {
            mass.iter_mut().for_each(|m| *m /= total);
        }
        Ok(Dist { mass })
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidDist(format!(
                "weights must be non-negative with positive finite sum (sum = {total})"
            )));
        }
        Dist::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDist("empty universe".into()));
        }
        Ok(Dist {
            mass: vec![1.0 / n as f64; n],
        })
    }

    pub fn point_mass(n: usize, at: StatementId) -> Result<Self> {
        if at >= n {
            return Err(Error::OutOfRange { id: at, n });
        }
        let mut mass = vec![0.0; n];
        mass[at] = 1.0;
        Ok(Dist { mass })
    }

    /// Uniform on `support`, zero elsewhere.
    pub fn uniform_on(n: usize, support: &[StatementId]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidDist("empty support".into()));
        }
        let mut mass = vec![0.0; n];
        let w = 1.0 / support.len() as f64;
        for &y in support {
            if y >= n {
                return Err(Error::OutOfRange { id: y, n });
            }
            mass[y] = w;
        }
        Dist::new(mass)
    }

    /// A draw from the flat Dirichlet over all `n` statements.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let w: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
        Dist::from_weights(&w)
    }

    pub fn len(&self) -> usize {
        self.mass.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mass.is_empty()
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, y: StatementId) -> f64 {
        self.mass[y]
    }

    pub fn support(&self) -> Vec<StatementId> {
        (0..self.len()).filter(|&y| self.mass[y] > 0.0).collect()
    }

    /// `p(S)` for a set of statement ids.
    pub fn mass_on(&self, ids: &[StatementId]) -> Result<f64> {
        let n = self.len();
        let mut total = 0.0;
        for &y in ids {
            if y >= n {
                return Err(Error::OutOfRange { id: y, n });
            }
            total += self.mass[y];
        }
        Ok(total)
    }

    /// `p(S)` where `S` is given as a membership mask.
    pub fn mass_where(&self, mask: impl Fn(StatementId) -> bool) -> f64 {
        self.mass
            .iter()
            .enumerate()
            .filter(|(y, _)| mask(*y))
            .map(|(_, m)| m)
            .sum()
    }

    /// `(1 - eps) * self + eps * other`.
    pub fn mix(&self, other: &Dist, eps: f64) -> Result<Dist> {
        check_dims(self.len(), other.len())?;
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::param(format!("mixing weight {eps} outside [0,1]")));
        }
        Dist::new(
            self.mass
                .iter()
                .zip(&other.mass)
                .map(|(a, b)| (1.0 - eps) * a + eps * b)
                .collect(),
        )
    }
}

/// Free-function form of [`Dist::mass_on`].
pub fn mass_on(p: &Dist, ids: &[StatementId]) -> Result<f64> {
    p.mass_on(ids)
}

/// A partition of the universe into nonempty cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PartitionRepr", into = "PartitionRepr")]
pub struct Partition {
    cell_of: Vec<usize>,
    n_cells: usize,
}

#[derive(Serialize, Deserialize)]
struct PartitionRepr {
    cell_of: Vec<usize>,
}

impl TryFrom<PartitionRepr> for Partition {
    type Error = Error;
    fn try_from(r: PartitionRepr) -> Result<Self> {
        Partition::new(r.cell_of)
    }
}

impl From<Partition> for PartitionRepr {
    fn from(p: Partition) -> Self {
        PartitionRepr { cell_of: p.cell_of }
    }
}

impl Partition {
    /// Cell labels must be `0..n_cells` with every label used.
    pub fn new(cell_of: Vec<usize>) -> Result<Self> {
        if cell_of.is_empty() {
            return Err(Error::InvalidPartition("empty universe".into()));
        }
        let n_cells = cell_of.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; n_cells];
        for &c in &cell_of {
            used[c] = true;
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::InvalidPartition(format!("cell {c} is empty")));
        }
        Ok(Partition { cell_of, n_cells })
    }

    /// Relabels arbitrary cell keys into a valid partition, numbering cells
    /// by first appearance.
    pub fn from_labels<K: std::hash::Hash + Eq>(labels: impl IntoIterator<Item = K>) -> Result<Self> {
        let mut ids: HashMap<K, usize> = HashMap::new();
        let cell_of = labels
            .into_iter()
            .map(|k| {
                let next = ids.len();
                *ids.entry(k).or_insert(next)
            })
            .collect();
        Partition::new(cell_of)
    }

    /// Builds a partition from explicit cells covering `0..n` exactly once.
    pub fn from_cells(n: usize, cells: &[Vec<StatementId>]) -> Result<Self> {
        let mut cell_of = vec![usize::MAX; n];
        for (c, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::InvalidPartition(format!("cell {c} is empty")));
            }
            for &y in cell {
                if y >= n {
                    return Err(Error::OutOfRange { id: y, n });
                }
                if cell_of[y] != usize::MAX {
                    return Err(Error::InvalidPartition(format!("statement {y} in two cells")));
                }
                cell_of[y] = c;
            }
        }
        if let Some(y) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(Error::InvalidPartition(format!("statement {y} not covered")));
        }
        Partition::new(cell_of)
    }

    pub fn singletons(n: usize) -> Result<Self> {
        Partition::new((0..n).collect())
    }

    pub fn single_cell(n: usize) -> Result<Self> {
        Partition::new(vec![0; n])
    }

    /// Uniformly random cell labels in `0..max_cells`, compacted.
    pub fn random<R: Rng + ?Sized>(n: usize, max_cells: usize, rng: &mut R) -> Result<Self> {
        let k = max_cells.max(1);
        Partition::from_labels((0..n).map(|_| rng.random_range(0..k)))
    }

    pub fn len(&self) -> usize {
        self.cell_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_of.is_empty()
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn cell_of(&self, y: StatementId) -> usize {
        self.cell_of[y]
    }

    pub fn labels(&self) -> &[usize] {
        &self.cell_of
    }

    pub fn cells(&self) -> Vec<Vec<StatementId>> {
        let mut cells = vec![Vec::new(); self.n_cells];
        for (y, &c) in self.cell_of.iter().enumerate() {
            cells[c].push(y);
        }
        cells
    }

    pub fn cell_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_cells];
        for &c in &self.cell_of {
            sizes[c] += 1;
        }
        sizes
    }
}

/// Total variation distance, computed as half the L1 distance.
pub fn tv_distance(p: &Dist, q: &Dist) -> Result<f64> {
    check_dims(p.len(), q.len())?;
    let l1: f64 = p.mass.iter().zip(&q.mass).map(|(a, b)| (a - b).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

/// The `Π`-coarsening: each statement receives the mean mass of its cell.
pub fn coarsen(p: &Dist, pi: &Partition) -> Result<Dist> {
    check_dims(p.len(), pi.len())?;
    let mut cell_mass = vec![0.0; pi.n_cells()];
    for (y, &m) in p.mass.iter().enumerate() {
        cell_mass[pi.cell_of[y]] += m;
    }
    let sizes = pi.cell_sizes();
    let avg: Vec<f64> = cell_mass
        .iter()
        .zip(&sizes)
        .map(|(m, &s)| m / s as f64)
        .collect();
    Dist::new(pi.cell_of.iter().map(|&c| avg[c]).collect())
}

/// Level sets of `g` under exact value equality, cells numbered by
/// ascending probability.
pub fn level_set_partition(g: &Dist) -> Partition {
    level_set_partition_eps(g, 0.0)
}

/// Like [`level_set_partition`], but sorted neighbours within `eps` of each
/// other share a cell. `eps = 0` is exact equality.
pub fn level_set_partition_eps(g: &Dist, eps: f64) -> Partition {
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g.mass[a].total_cmp(&g.mass[b]).then(a.cmp(&b)));
    let mut cell_of = vec![0; g.len()];
    let mut cell = 0;
    for w in 0..order.len() {
        if w > 0 {
            let prev = g.mass[order[w - 1]];
            let cur = g.mass[order[w]];
            let same = if eps == 0.0 { cur == prev } else { cur - prev <= eps };
            if !same {
                cell += 1;
            }
        }
        cell_of[order[w]] = cell;
    }
    Partition {
        cell_of,
        n_cells: cell + 1,
    }
}

/// `Mis(g, p) = ‖g − p^{B_g}‖_TV`.
pub fn miscalibration(g: &Dist, p: &Dist) -> Result<f64> {
    check_dims(g.len(), p.len())?;
    let coarse = coarsen(p, &level_set_partition(g))?;
    tv_distance(g, &coarse)
}

/// A corpus of `n` draws summarized by per-statement counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Corpus {
    counts: Vec<u64>,
    n: u64,
}

impl Corpus {
    pub fn from_counts(counts: Vec<u64>) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::Empty("corpus universe"));
        }
        let n = counts.iter().sum();
        Ok(Corpus { counts, n })
    }

    pub fn from_draws(n_statements: usize, draws: &[StatementId]) -> Result<Self> {
        let mut counts = vec![0u64; n_statements];
        for &y in draws {
            if y >= n_statements {
                return Err(Error::OutOfRange { id: y, n: n_statements });
            }
            counts[y] += 1;
        }
        Corpus::from_counts(counts)
    }

    pub fn n_statements(&self) -> usize {
        self.counts.len()
    }

    /// Total number of draws.
    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn count(&self, y: StatementId) -> u64 {
        self.counts[y]
    }

    pub fn is_observed(&self, y: StatementId) -> bool {
        self.counts[y] > 0
    }

    /// `O`, in ascending order.
    pub fn observed(&self) -> Vec<StatementId> {
        (0..self.counts.len()).filter(|&y| self.counts[y] > 0).collect()
    }

    /// `U = Ω \ O`, in ascending order.
    pub fn unseen(&self) -> Vec<StatementId> {
        (0..self.counts.len()).filter(|&y| self.counts[y] == 0).collect()
    }

    pub fn n_observed(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn n_unseen(&self) -> usize {
        self.counts.len() - self.n_observed()
    }

    /// Number of statements seen exactly once.
    pub fn singletons(&self) -> usize {
        self.counts.iter().filter(|&&c| c == 1).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use proptest::prelude::*;
    use rand::Rng;

    fn d(v: &[f64]) -> Dist {
        Dist::new(v.to_vec()).unwrap()
    }

    #[test]
    fn tv_examples() {
        assert_eq!(tv_distance(&d(&[0.3, 0.7]), &d(&[0.3, 0.7])).unwrap(), 0.0);
        assert_eq!(tv_distance(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])).unwrap(), 1.0);
        assert_eq!(tv_distance(&d(&[0.5, 0.5]), &d(&[1.0, 0.0])).unwrap(), 0.5);
        assert!(matches!(
            tv_distance(&d(&[1.0]), &d(&[0.5, 0.5])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn coarsen_examples() {
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(coarsen(&p, &Partition::singletons(4).unwrap()).unwrap(), p);
        assert_eq!(
            coarsen(&p, &Partition::single_cell(4).unwrap()).unwrap().mass(),
            &[0.25; 4]
        );
        let pi = Partition::from_cells(3, &[vec![0, 1], vec![2]]).unwrap();
        assert_eq!(coarsen(&d(&[0.6, 0.4, 0.0]), &pi).unwrap().mass(), &[0.5, 0.5, 0.0]);
        assert!(coarsen(&p, &Partition::singletons(3).unwrap()).is_err());
    }

    #[test]
    fn level_sets() {
        let u = Dist::uniform(5).unwrap();
        assert_eq!(level_set_partition(&u).n_cells(), 1);
        let two = level_set_partition(&d(&[0.5, 0.5, 0.0]));
        assert_eq!(two.n_cells(), 2);
        // ascending value numbering: the zero cell comes first
        assert_eq!(two.labels(), &[1, 1, 0]);
        assert_eq!(level_set_partition(&d(&[0.1, 0.2, 0.3, 0.4])).n_cells(), 4);
    }

    #[test]
    fn epsilon_grouping_merges_float_noise() {
        let g = d(&[0.25, 0.25 + 1e-15, 0.5 - 1e-15]);
        assert_eq!(level_set_partition(&g).n_cells(), 3);
        assert_eq!(level_set_partition_eps(&g, 1e-12).n_cells(), 2);
    }

    #[test]
    fn miscalibration_examples() {
        let p = d(&[0.1, 0.2, 0.3, 0.4]);
        let pi = Partition::from_cells(4, &[vec![0, 3], vec![1, 2]]).unwrap();
        assert_eq!(miscalibration(&coarsen(&p, &pi).unwrap(), &p).unwrap(), 0.0);
        assert_eq!(miscalibration(&p, &p).unwrap(), 0.0);
        assert_eq!(miscalibration(&d(&[0.5, 0.5]), &d(&[1.0, 0.0])).unwrap(), 0.0);
        assert!(miscalibration(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])).unwrap() > 0.0);
    }

    #[test]
    fn mass_on_examples() {
        let p = d(&[0.2, 0.3, 0.5]);
        assert_eq!(p.mass_on(&[]).unwrap(), 0.0);
        assert!((p.mass_on(&[0, 1, 2]).unwrap() - 1.0).abs() < 1e-15);
        assert!((p.mass_on(&[0, 2]).unwrap() - 0.7).abs() < 1e-15);
        assert!(matches!(p.mass_on(&[3]), Err(Error::OutOfRange { id: 3, n: 3 })));
    }

    #[test]
    fn construction_tolerances() {
        assert_eq!(Dist::new(vec![0.5, 0.5 + 1e-10]).unwrap().mass()[1], 0.5 + 1e-10);
        let r = Dist::new(vec![0.5, 0.5 + 1e-7]).unwrap();
        assert!((r.mass().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(Dist::new(vec![0.5, 0.6]).is_err());
        assert!(Dist::new(vec![1.5, -0.5]).is_err());
        assert!(Dist::new(vec![f64::NAN, 1.0]).is_err());
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![0, 2]).is_err());
        assert!(Partition::from_cells(3, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(Partition::from_cells(3, &[vec![0, 1]]).is_err());
        let p = Partition::from_labels(["a", "b", "a"]).unwrap();
        assert_eq!(p.cells(), vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn json_field_names() {
        let p = d(&[0.25, 0.75]);
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"mass":[0.25,0.75]}"#);
        let pi = Partition::singletons(2).unwrap();
        assert_eq!(serde_json::to_string(&pi).unwrap(), r#"{"cell_of":[0,1]}"#);
        let back: Partition = serde_json::from_str(r#"{"cell_of":[1,0,1]}"#).unwrap();
        assert_eq!(back.n_cells(), 2);
        assert!(serde_json::from_str::<Dist>(r#"{"mass":[0.9,0.9]}"#).is_err());
    }

    #[test]
    fn corpus_sets() {
        let c = Corpus::from_draws(5, &[0, 0, 3]).unwrap();
        assert_eq!(c.n(), 3);
        assert_eq!(c.observed(), vec![0, 3]);
        assert_eq!(c.unseen(), vec![1, 2, 4]);
        assert_eq!(c.n_observed() + c.n_unseen(), 5);
        assert_eq!(c.singletons(), 1);
    }

    fn random_instance(seed: u64) -> (Dist, Partition) {
        let mut rng = seeded(seed);
        let n = rng.random_range(1..=64);
        // sparse-ish p so that zero cells appear
        let w: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random::<f64>() })
            .collect();
        let p = Dist::from_weights(&w).unwrap_or_else(|_| Dist::uniform(n).unwrap());
        let k = rng.random_range(1..=n);
        (p, Partition::random(n, k, &mut rng).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn coarsening_is_calibrated(seed in any::<u64>()) {
            let (p, pi) = random_instance(seed);
            let g = coarsen(&p, &pi).unwrap();
            prop_assert!(miscalibration(&g, &p).unwrap() <= 1e-12);
        }

        #[test]
        fn coarsen_is_idempotent_on_own_level_sets(seed in any::<u64>()) {
            let (p, pi) = random_instance(seed);
            let g = coarsen(&p, &pi).unwrap();
            let again = coarsen(&g, &level_set_partition(&g)).unwrap();
            prop_assert!(tv_distance(&g, &again).unwrap() <= 1e-12);
        }

        #[test]
        fn coarsen_preserves_cell_mass(seed in any::<u64>()) {
            let (p, pi) = random_instance(seed);
            let g = coarsen(&p, &pi).unwrap();
            for cell in pi.cells() {
                let a = p.mass_on(&cell).unwrap();
                let b = g.mass_on(&cell).unwrap();
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn tv_is_a_metric(seed in any::<u64>()) {
            let mut rng = seeded(seed);
            let n = rng.random_range(1..=64);
            let p = Dist::random(n, &mut rng).unwrap();
            let q = Dist::random(n, &mut rng).unwrap();
            let r = Dist::random(n, &mut rng).unwrap();
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert_eq!(pq, tv_distance(&q, &p).unwrap());
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert!((0.0..=1.0).contains(&pq));
        }
    }
}
