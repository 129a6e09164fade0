//! Scalar estimators: innovation and hallucination rates, missing mass,
//! Good-Turing, Clopper-Pearson intervals, and embedding-based semantic
//! innovation.

use std::collections::HashSet;
use std::hash::Hash;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use thiserror::Error;

use crate::dist::{Corpus, Dist};
use crate::error::{check_dims, Error, Result};
use crate::models::Model;
use crate::worlds::World;

/// `g(U)`: mass the model puts on statements absent from the corpus.
pub fn innovation_rate(g: &Model, corpus: &Corpus) -> Result<f64> {
    unseen_mass(&g.dist, corpus)
}

fn unseen_mass(d: &Dist, corpus: &Corpus) -> Result<f64> {
    check_dims(d.len(), corpus.n_statements())?;
    Ok(d.mass_where(|y| !corpus.is_observed(y)))
}

/// `g(H)` for the world's hallucination set `H = Ω \ F`.
pub fn hallucination_rate(g: &Model, world: &World) -> Result<f64> {
    check_dims(g.dist.len(), world.n_statements())?;
    Ok(g.dist.mass_where(|y| !world.is_fact(y)))
}

/// `p(U)` under the world's true distribution.
pub fn missing_mass(world: &World, corpus: &Corpus) -> Result<f64> {
    unseen_mass(world.dist(), corpus)
}

/// Good-Turing missing-mass estimate `N1 / n`. Zero for an empty corpus.
pub fn good_turing(corpus: &Corpus) -> f64 {
    if corpus.n() == 0 {
        return 0.0;
    }
    corpus.singletons() as f64 / corpus.n() as f64
}

/// A point estimate with a confidence interval, all in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IntervalEstimate {
    pub point: f64,
    pub lo: f64,
    pub hi: f64,
    pub confidence: f64,
}

/// Inverse of the regularized incomplete beta function by bisection.
fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Exact (Clopper-Pearson) binomial interval for `successes / trials`.
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> Result<IntervalEstimate> {
    if trials == 0 || successes > trials {
        return Err(Error::param(format!("invalid binomial counts {successes}/{trials}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::param(format!("confidence {confidence} outside (0,1)")));
    }
    let (k, n) = (successes as f64, trials as f64);
    let tail = (1.0 - confidence) / 2.0;
    let lo = if successes == 0 { 0.0 } else { beta_quantile(tail, k, n - k + 1.0) };
    let hi = if successes == trials { 1.0 } else { beta_quantile(1.0 - tail, k + 1.0, n - k) };
    let point = k / n;
    Ok(IntervalEstimate {
        point,
        lo: lo.min(point),
        hi: hi.max(point),
        confidence,
    })
}

/// `⟨u,v⟩ / (‖u‖‖v‖)`, clamped to `[-1, 1]`.
pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::param("cosine similarity of a zero vector"));
    }
    Ok((dot / (nu * nv)).clamp(-1.0, 1.0))
}

/// Threshold below which a generation counts as semantically novel.
pub const SEMANTIC_THRESHOLD: f64 = 0.95;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("bad magic {0:?}, expected \"IEMB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}, expected 1")]
    BadVersion(u32),
    #[error("truncated file: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("file has {extra} trailing bytes after the payload")]
    TrailingBytes { extra: u64 },
    #[error("row {row} has norm {norm}, expected 1 within 1e-4")]
    NotNormalized { row: usize, norm: f64 },
    #[error("row {row} has length {len}, expected {dim}")]
    RaggedRow { row: usize, len: usize, dim: usize },
}

const IEMB_MAGIC: &[u8; 4] = b"IEMB";
const IEMB_VERSION: u32 = 1;
const IEMB_HEADER: usize = 16;
const NORM_SLACK: f64 = 1e-4;

/// Row-major table of L2-normalized embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    count: usize,
    dim: usize,
    rows: Vec<f32>,
}

impl EmbeddingTable {
    /// Builds a table from rows, L2-normalizing each one. Zero rows are
    /// rejected.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(EmbeddingError::RaggedRow { row: i, len: r.len(), dim }.into());
            }
            let norm = r.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::param(format!("embedding row {i} is zero")));
            }
            flat.extend(r.iter().map(|&x| (x as f64 / norm) as f32));
        }
        Ok(EmbeddingTable { count: rows.len(), dim, rows: flat })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    /// Parses the `IEMB` v1 binary layout.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, EmbeddingError> {
        if bytes.len() < IEMB_HEADER {
            return Err(EmbeddingError::Truncated {
                expected: IEMB_HEADER as u64,
                actual: bytes.len() as u64,
            });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        if &magic != IEMB_MAGIC {
            return Err(EmbeddingError::BadMagic(magic));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let version = word(4);
        if version != IEMB_VERSION {
            return Err(EmbeddingError::BadVersion(version));
        }
        let (count, dim) = (word(8) as usize, word(12) as usize);
        let expected = IEMB_HEADER as u64 + 4 * count as u64 * dim as u64;
        let actual = bytes.len() as u64;
        if actual < expected {
            return Err(EmbeddingError::Truncated { expected, actual });
        }
        if actual > expected {
            return Err(EmbeddingError::TrailingBytes { extra: actual - expected });
        }
        let rows: Vec<f32> = bytes[IEMB_HEADER..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        for i in 0..count {
            let norm = rows[i * dim..(i + 1) * dim]
                .iter()
                .map(|&x| (x as f64).powi(2))
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > NORM_SLACK {
                return Err(EmbeddingError::NotNormalized { row: i, norm });
            }
        }
        Ok(EmbeddingTable { count, dim, rows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(IEMB_HEADER + 4 * self.rows.len());
        out.extend_from_slice(IEMB_MAGIC);
        out.extend_from_slice(&IEMB_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.count as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.rows {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    /// Largest cosine similarity between row `i` of `self` and any row of
    /// `other`. Rows are unit vectors so this is a dot product.
    fn max_similarity(&self, i: usize, other: &EmbeddingTable) -> f64 {
        let u = self.row(i);
        (0..other.count)
            .map(|j| {
                u.iter()
                    .zip(other.row(j))
                    .map(|(&a, &b)| a as f64 * b as f64)
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-row novelty flags: max cosine to every training row `< threshold`.
pub fn semantic_novelty(generated: &EmbeddingTable, training: &EmbeddingTable, threshold: f64) -> Result<Vec<bool>> {
    check_dims(generated.dim, training.dim)?;
    Ok((0..generated.count)
        .into_par_iter()
        .map(|i| generated.max_similarity(i, training) < threshold)
        .collect())
}

/// Fraction of generated rows whose max cosine to the training rows falls
/// strictly below `threshold`.
pub fn semantic_innovation_rate(generated: &EmbeddingTable, training: &EmbeddingTable, threshold: f64) -> Result<f64> {
    if generated.count == 0 {
        return Err(Error::Empty("generated embeddings"));
    }
    let novel = semantic_novelty(generated, training, threshold)?;
    Ok(novel.iter().filter(|&&b| b).count() as f64 / novel.len() as f64)
}

/// Fraction of generations absent from the training set, counting repeated
/// generations separately.
pub fn empirical_innovation_rate<T: Hash + Eq>(generated: &[T], training: &HashSet<T>) -> Result<f64> {
    if generated.is_empty() {
        return Err(Error::Empty("generated statements"));
    }
    let novel = generated.iter().filter(|s| !training.contains(*s)).count();
    Ok(novel as f64 / generated.len() as f64)
}

/// Like [`empirical_innovation_rate`] over distinct generations only.
pub fn empirical_innovation_rate_dedup<T: Hash + Eq>(generated: &[T], training: &HashSet<T>) -> Result<f64> {
    let distinct: HashSet<&T> = generated.iter().collect();
    if distinct.is_empty() {
        return Err(Error::Empty("generated statements"));
    }
    let novel = distinct.iter().filter(|s| !training.contains(**s)).count();
    Ok(novel as f64 / distinct.len() as f64)
}
