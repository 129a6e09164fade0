//! Innovation and hallucination in the calibrated-language-model framework.
//!
//! A statement universe `Ω = {0, …, N-1}` carries document distributions
//! ([`Dist`]); a meta-distribution over worlds ([`worlds::MetaSpec`]) draws a
//! true distribution whose support is the fact set. A corpus is a multiset of
//! draws from it and a model is any predictive distribution built from the
//! corpus. The crate computes the quantities that tie these together
//! (innovation rate `g(U)`, hallucination rate `g(H)`, missing mass `p(U)`)
//! and checks every lower bound relating them, both exactly by enumerating
//! the posterior over supports and statistically by Monte Carlo.
//!
//! The [`textlab`] module holds the n-gram experiment pipeline used to
//! compare innovation with judged hallucination on real text.

pub mod dist;
pub mod error;
pub mod measures;
pub mod models;
pub mod rng;
pub mod svg;
pub mod textlab;
pub mod verify;
pub mod worlds;

pub use dist::{Corpus, Dist, Partition, StatementId};
pub use error::{Error, Result};
pub use measures::{EmbeddingTable, IntervalEstimate};
pub use models::{Model, ModelKind};
pub use verify::{BoundCheck, Theorem, TrialReport};
pub use worlds::{MetaSpec, Posterior, SupportPrior, World};
