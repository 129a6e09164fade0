//! Predictive distributions `g = A(X)` used to exercise the bounds.
//!
//! The calibrated constructors receive the true world. That is a
//! simulation-only privilege: a real trainer never sees `p`.

use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dist::{coarsen, level_set_partition, miscalibration, tv_distance, Corpus, Dist, Partition};
use crate::error::{check_dims, Error, Result};
use crate::worlds::World;

/// A predictive distribution with a record of how it was built.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Model {
    pub dist: Dist,
    pub provenance: String,
}

impl Model {
    pub fn dist(&self) -> &Dist {
        &self.dist
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.provenance)
    }
}

/// `g(y) = counts[y] / n`; never innovates.
pub fn empirical_model(corpus: &Corpus) -> Result<Model> {
    if corpus.n() == 0 {
        return Err(Error::Empty("corpus"));
    }
    let n = corpus.n() as f64;
    Ok(Model {
        dist: Dist::new(corpus.counts().iter().map(|&c| c as f64 / n).collect())?,
        provenance: "empirical".into(),
    })
}

/// `g = p^Π` for the true world `p`.
pub fn calibrated_model(world: &World, pi: &Partition) -> Result<Model> {
    check_dims(world.n_statements(), pi.len())?;
    Ok(Model {
        dist: coarsen(world.dist(), pi)?,
        provenance: format!("calibrated(cells={})", pi.n_cells()),
    })
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::param(format!("beta {beta} outside [0,1]")));
    }
    Ok(())
}

/// `(1 − beta)` on the empirical distribution plus `extra` on unseen mass.
fn empirical_plus(corpus: &Corpus, beta: f64, mut unseen_mass: impl FnMut(usize) -> f64) -> Result<Dist> {
    if corpus.n() == 0 {
        return Err(Error::Empty("corpus"));
    }
    let n = corpus.n() as f64;
    Dist::new(
        corpus
            .counts()
            .iter()
            .enumerate()
            .map(|(y, &c)| if c > 0 { (1.0 - beta) * c as f64 / n } else { unseen_mass(y) })
            .collect(),
    )
}

/// Empirical mass scaled by `1 − beta`, plus `beta` on one unseen statement
/// chosen uniformly with the caller's RNG.
pub fn spike_model<R: Rng + ?Sized>(corpus: &Corpus, beta: f64, rng: &mut R) -> Result<Model> {
    check_beta(beta)?;
    let unseen = corpus.unseen();
    if beta == 0.0 {
        let mut m = empirical_model(corpus)?;
        m.provenance = "spike(beta=0)".into();
        return Ok(m);
    }
    let &target = unseen
        .choose(rng)
        .ok_or_else(|| Error::Precondition("spike model needs an unseen statement".into()))?;
    spike_at(corpus, beta, target)
}

/// Spike model with an explicit target `y* ∈ U`.
pub fn spike_at(corpus: &Corpus, beta: f64, target: usize) -> Result<Model> {
    check_beta(beta)?;
    if target >= corpus.n_statements() || corpus.is_observed(target) {
        return Err(Error::Precondition(format!("spike target {target} is not an unseen statement")));
    }
    Ok(Model {
        dist: empirical_plus(corpus, beta, |y| if y == target { beta } else { 0.0 })?,
        provenance: format!("spike(beta={beta},target={target})"),
    })
}

/// Empirical mass scaled by `1 − beta`, plus `beta` spread uniformly over `U`.
pub fn scatter_model(corpus: &Corpus, beta: f64) -> Result<Model> {
    check_beta(beta)?;
    let n_unseen = corpus.n_unseen();
    if beta > 0.0 && n_unseen == 0 {
        return Err(Error::Precondition("scatter model needs an unseen statement".into()));
    }
    let each = if n_unseen > 0 { beta / n_unseen as f64 } else { 0.0 };
    Ok(Model {
        dist: empirical_plus(corpus, beta, |_| each)?,
        provenance: format!("scatter(beta={beta})"),
    })
}

/// A calibrated model mixed with a random distribution.
#[derive(Debug, Clone)]
pub struct Perturbed {
    pub model: Model,
    /// `‖g − p^Π‖_TV`, at most `eps`.
    pub mixing_tv: f64,
    /// `Mis(g, p)` recomputed on the perturbed level sets.
    pub miscalibration: f64,
}

/// `g = (1 − eps)·p^Π + eps·q` with `q` a flat-Dirichlet draw.
pub fn perturbed_calibrated_model<R: Rng + ?Sized>(
    world: &World,
    pi: &Partition,
    eps: f64,
    rng: &mut R,
) -> Result<Perturbed> {
    if !(0.0..1.0).contains(&eps) {
        return Err(Error::param(format!("eps {eps} outside [0,1)")));
    }
    let base = coarsen(world.dist(), pi)?;
    let dist = if eps == 0.0 {
        base.clone()
    } else {
        base.mix(&Dist::random(world.n_statements(), rng)?, eps)?
    };
    let mixing_tv = tv_distance(&dist, &base)?;
    let mis = miscalibration(&dist, world.dist())?;
    Ok(Perturbed {
        model: Model {
            dist,
            provenance: format!("perturbed(eps={eps},cells={})", pi.n_cells()),
        },
        mixing_tv,
        miscalibration: mis,
    })
}

/// An arbitrary model: a flat-Dirichlet draw over all of `Ω`.
pub fn random_model<R: Rng + ?Sized>(n_statements: usize, rng: &mut R) -> Result<Model> {
    Ok(Model {
        dist: Dist::random(n_statements, rng)?,
        provenance: "random".into(),
    })
}

/// Partition used by the calibrated constructors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum CellChoice {
    Singletons,
    SingleCell,
    /// Level sets of the true distribution.
    LevelSets,
    Random { max_cells: usize },
}

impl CellChoice {
    pub fn build<R: Rng + ?Sized>(&self, world: &World, rng: &mut R) -> Result<Partition> {
        let n = world.n_statements();
        match self {
            CellChoice::Singletons => Partition::singletons(n),
            CellChoice::SingleCell => Partition::single_cell(n),
            CellChoice::LevelSets => Ok(level_set_partition(world.dist())),
            CellChoice::Random { max_cells } => Partition::random(n, *max_cells, rng),
        }
    }
}

/// Constructor selection for batteries and Monte Carlo runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ModelKind {
    Empirical,
    Spike { beta: f64 },
    Scatter { beta: f64 },
    Calibrated { cells: CellChoice },
    Perturbed { eps: f64, cells: CellChoice },
    Random,
}

impl ModelKind {
    /// Builds `g` from the corpus. `world` is the world that generated it.
    pub fn build<R: Rng + ?Sized>(&self, world: &World, corpus: &Corpus, rng: &mut R) -> Result<Model> {
        match self {
            ModelKind::Empirical => empirical_model(corpus),
            ModelKind::Spike { beta } => spike_model(corpus, *beta, rng),
            ModelKind::Scatter { beta } => scatter_model(corpus, *beta),
            ModelKind::Calibrated { cells } => calibrated_model(world, &cells.build(world, rng)?),
            ModelKind::Perturbed { eps, cells } => {
                let pi = cells.build(world, rng)?;
                Ok(perturbed_calibrated_model(world, &pi, *eps, rng)?.model)
            }
            ModelKind::Random => random_model(world.n_statements(), rng),
        }
    }

    pub fn label(&self) -> String {
        match self {
            ModelKind::Empirical => "empirical".into(),
            ModelKind::Spike { beta } => format!("spike(beta={beta})"),
            ModelKind::Scatter { beta } => format!("scatter(beta={beta})"),
            ModelKind::Calibrated { cells } => format!("calibrated({})", cells_label(cells)),
            ModelKind::Perturbed { eps, cells } => format!("perturbed(eps={eps},{})", cells_label(cells)),
            ModelKind::Random => "random".into(),
        }
    }

    /// The default battery exercised by sweeps.
    pub fn battery() -> Vec<ModelKind> {
        vec![
            ModelKind::Empirical,
            ModelKind::Spike { beta: 0.5 },
            ModelKind::Scatter { beta: 0.5 },
            ModelKind::Calibrated { cells: CellChoice::Singletons },
            ModelKind::Calibrated { cells: CellChoice::Random { max_cells: 4 } },
            ModelKind::Perturbed {
                eps: 0.1,
                cells: CellChoice::Random { max_cells: 4 },
            },
            ModelKind::Random,
        ]
    }
}

fn cells_label(c: &CellChoice) -> String {
    match c {
        CellChoice::Singletons => "singletons".into(),
        CellChoice::SingleCell => "single_cell".into(),
        CellChoice::LevelSets => "level_sets".into(),
        CellChoice::Random { max_cells } => format!("random{max_cells}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::worlds::{sample_corpus, sample_world, MetaSpec};

    fn gu(m: &Model, c: &Corpus) -> f64 {
        m.dist.mass_where(|y| !c.is_observed(y))
    }

    #[test]
    fn empirical_is_relative_frequency() {
        let c = Corpus::from_counts(vec![2, 1, 0, 0]).unwrap();
        let m = empirical_model(&c).unwrap();
        assert_eq!(m.dist.mass(), &[2.0 / 3.0, 1.0 / 3.0, 0.0, 0.0]);
        assert_eq!(gu(&m, &c), 0.0);
        let one = Corpus::from_counts(vec![0, 5, 0]).unwrap();
        assert_eq!(empirical_model(&one).unwrap().dist, Dist::point_mass(3, 1).unwrap());
        assert!(empirical_model(&Corpus::from_counts(vec![0, 0]).unwrap()).is_err());
    }

    #[test]
    fn spike_and_scatter_innovate_at_beta() {
        let c = Corpus::from_counts(vec![3, 0, 1, 0, 0]).unwrap();
        let mut rng = seeded(1);
        for beta in [0.0, 0.2, 0.5, 1.0] {
            let s = spike_model(&c, beta, &mut rng).unwrap();
            assert!((gu(&s, &c) - beta).abs() < 1e-12);
            let sc = scatter_model(&c, beta).unwrap();
            assert!((gu(&sc, &c) - beta).abs() < 1e-12);
            let max_u = c.unseen().iter().map(|&y| sc.dist.get(y)).fold(0.0, f64::max);
            assert!((max_u - beta / 3.0).abs() < 1e-15);
        }
        let emp = empirical_model(&c).unwrap();
        assert_eq!(spike_model(&c, 0.0, &mut rng).unwrap().dist, emp.dist);
        assert_eq!(scatter_model(&c, 0.0).unwrap().dist, emp.dist);
        let full = spike_model(&c, 1.0, &mut rng).unwrap();
        assert_eq!(full.dist.support().len(), 1);
    }

    #[test]
    fn spike_needs_unseen() {
        let c = Corpus::from_counts(vec![1, 2]).unwrap();
        assert!(spike_model(&c, 0.3, &mut seeded(0)).is_err());
        assert!(scatter_model(&c, 0.3).is_err());
        assert!(spike_model(&c, 0.0, &mut seeded(0)).is_ok());
        assert!(spike_at(&Corpus::from_counts(vec![1, 0]).unwrap(), 0.5, 0).is_err());
        assert!(scatter_model(&c, 1.5).is_err());
    }

    #[test]
    fn calibrated_examples() {
        let p = Dist::new(vec![0.5, 0.3, 0.2, 0.0, 0.0, 0.0]).unwrap();
        let w = World::from_dist(p.clone());
        assert_eq!(calibrated_model(&w, &Partition::singletons(6).unwrap()).unwrap().dist, p);
        let c = Corpus::from_counts(vec![4, 0, 0, 0, 0, 0]).unwrap();
        let one = calibrated_model(&w, &Partition::single_cell(6).unwrap()).unwrap();
        assert!((gu(&one, &c) - 5.0 / 6.0).abs() < 1e-12);
        assert!(calibrated_model(&w, &Partition::singletons(5).unwrap()).is_err());
    }

    /// Set partitions of `0..n` as restricted growth strings.
    fn all_partitions(n: usize) -> Vec<Partition> {
        fn rec(i: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Partition>) {
            if i == n {
                out.push(Partition::new(cur.clone()).unwrap());
                return;
            }
            let max = cur.iter().max().map_or(0, |m| m + 1);
            for c in 0..=max {
                cur.push(c);
                rec(i + 1, n, cur, out);
                cur.pop();
            }
        }
        let mut out = Vec::new();
        rec(0, n, &mut Vec::new(), &mut out);
        out
    }

    #[test]
    fn calibration_with_missing_mass_innovates_for_every_partition() {
        let mut rng = seeded(8);
        assert_eq!(all_partitions(6).len(), 203);
        for n in 2..=6 {
            let parts = all_partitions(n);
            for _ in 0..20 {
                let meta = MetaSpec::uniform_k(n, n - 1).unwrap();
                let world = sample_world(&meta, &mut rng);
                let c = sample_corpus(&world, 2, &mut rng).unwrap();
                let pu = world.dist().mass_where(|y| !c.is_observed(y));
                for pi in &parts {
                    let g = calibrated_model(&world, pi).unwrap();
                    assert!(miscalibration(&g.dist, world.dist()).unwrap() <= 1e-12);
                    if pu > 0.0 {
                        assert!(gu(&g, &c) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn perturbation_is_bounded() {
        let mut rng = seeded(3);
        let meta = MetaSpec::uniform_k(30, 5).unwrap();
        for i in 0..1000 {
            let world = sample_world(&meta, &mut rng);
            let pi = Partition::random(30, 6, &mut rng).unwrap();
            let eps = if i == 0 { 0.0 } else { rng.random_range(0.0..0.9) };
            let p = perturbed_calibrated_model(&world, &pi, eps, &mut rng).unwrap();
            assert!(p.mixing_tv <= eps + 1e-12);
            assert!(p.miscalibration.is_finite() && p.miscalibration <= 1.0);
            if eps == 0.0 {
                assert!(p.miscalibration <= 1e-12);
            }
        }
        let world = sample_world(&meta, &mut rng);
        assert!(perturbed_calibrated_model(&world, &Partition::singletons(30).unwrap(), 1.0, &mut rng).is_err());
    }

    #[test]
    fn hallucination_implies_innovation_for_every_kind() {
        let mut rng = seeded(12);
        let meta = MetaSpec::uniform_k(20, 4).unwrap();
        for _ in 0..300 {
            let world = sample_world(&meta, &mut rng);
            let c = sample_corpus(&world, 3, &mut rng).unwrap();
            for kind in ModelKind::battery() {
                let g = kind.build(&world, &c, &mut rng).unwrap();
                let gh = g.dist.mass_where(|y| !world.is_fact(y));
                let gu = gu(&g, &c);
                assert!(gh <= gu + 1e-15, "{}", kind.label());
                if gh > 0.0 {
                    assert!(gu > 0.0);
                }
            }
        }
    }

    #[test]
    fn model_kind_json() {
        let k: ModelKind = serde_json::from_str(r#"{"kind":"scatter","beta":0.25}"#).unwrap();
        assert_eq!(k, ModelKind::Scatter { beta: 0.25 });
        let c: ModelKind = serde_json::from_str(r#"{"kind":"calibrated","cells":{"kind":"random","max_cells":3}}"#).unwrap();
        assert_eq!(c.label(), "calibrated(random3)");
    }
}
