//! Candidate lexicon induction.
//!
//! Users and words are embedded jointly in one space, with a separate copy
//! of every word vector per annual snapshot. Users are clustered with
//! k-means and each word is scored by its best cosine similarity to a user
//! centroid in the ranking year.

mod cluster;
mod rank;
mod store;
mod train;
mod training_set;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{annual_snapshots, Corpus, CorpusError};

pub use cluster::{cluster_users, inertia, kmeans, ClusterModel, KMeansResult};
pub use rank::{rank_candidates, RankedLexicon, RankedWord};
pub use store::{read_space, write_space, SpaceSidecar, SPACE_FORMAT_VERSION};
pub use train::{train_embeddings, EmbeddingSpace, TrainingLog};
pub use training_set::{build_training_set, TrainingSet, UsageEvent};

#[derive(Debug, Error)]
pub enum InductionError {
    #[error("invalid induction config: {0}")]
    Config(String),
    #[error("need at least 2 snapshots, got {0}")]
    TooFewSnapshots(usize),
    #[error("no {0} survive the activity filters")]
    EmptyModel(&'static str),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },
    #[error("{users} users cannot form {clusters} clusters")]
    TooFewUsers { users: usize, clusters: usize },
    #[error("year {0} is not part of the embedding space")]
    UnknownYear(i32),
    #[error("embedding file: {0}")]
    Format(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Induction hyperparameters. Defaults follow the published configuration;
/// `negative_samples`, `noise_exponent` and `weight_decay` are engine
/// knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InductionConfig {
    /// Embedding dimension.
    #[serde(alias = "K")]
    pub dim: usize,
    /// Weight of unobserved user–word pairs, per vocabulary word. Each usage
    /// event's sampled negatives carry total weight `negative_weight * |V|`.
    #[serde(alias = "c_0", alias = "c0")]
    pub negative_weight: f64,
    /// Precision of the random walk linking a word's vectors in consecutive
    /// snapshots.
    #[serde(alias = "lambda_1")]
    pub temporal_weight: f64,
    /// L2 penalty on all vectors.
    #[serde(alias = "lambda_2")]
    pub l2_weight: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub early_stop_patience: usize,
    pub early_stop_tolerance: f64,
    pub n_clusters: usize,
    /// A word is kept when strictly more distinct users than this use it.
    pub min_users_per_word: usize,
    /// A user is kept when active in at least this many snapshots.
    pub min_active_timesteps_per_user: usize,
    pub negative_samples: usize,
    pub noise_exponent: f64,
    /// Decoupled (AdamW) weight decay.
    pub weight_decay: f64,
}

impl Default for InductionConfig {
    fn default() -> Self {
        InductionConfig {
            dim: 100,
            negative_weight: 0.005,
            temporal_weight: 1.0,
            l2_weight: 10.0,
            learning_rate: 1e-5,
            batch_size: 40,
            seed: 42,
            max_epochs: 10_000,
            validation_fraction: 0.05,
            early_stop_patience: 100,
            early_stop_tolerance: 0.001,
            n_clusters: 5,
            min_users_per_word: 20,
            min_active_timesteps_per_user: 2,
            negative_samples: 5,
            noise_exponent: 0.75,
            weight_decay: 0.0,
        }
    }
}

impl InductionConfig {
    pub fn validate(&self) -> Result<(), InductionError> {
        let counts = [
            ("dim", self.dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("early_stop_patience", self.early_stop_patience),
            ("n_clusters", self.n_clusters),
            ("min_users_per_word", self.min_users_per_word),
            ("min_active_timesteps_per_user", self.min_active_timesteps_per_user),
            ("negative_samples", self.negative_samples),
        ];
        for (name, v) in counts {
            if v < 1 {
                return Err(InductionError::Config(format!("{name} must be >= 1")));
            }
        }
        let scalars = [
            ("negative_weight", self.negative_weight),
            ("temporal_weight", self.temporal_weight),
            ("l2_weight", self.l2_weight),
            ("learning_rate", self.learning_rate),
            ("early_stop_tolerance", self.early_stop_tolerance),
            ("noise_exponent", self.noise_exponent),
        ];
        for (name, v) in scalars {
            if !(v.is_finite() && v > 0.0) {
                return Err(InductionError::Config(format!("{name} must be a positive number")));
            }
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(InductionError::Config("weight_decay must be >= 0".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(InductionError::Config("validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Everything produced by one induction run.
#[derive(Debug, Clone)]
pub struct InductionRun {
    pub training: TrainingSet,
    pub space: EmbeddingSpace,
    pub log: TrainingLog,
    pub clusters: ClusterModel,
    pub lexicon: RankedLexicon,
}

/// Snapshot, train, cluster and rank in one go. Ranks against the last
/// year of the range unless `rank_year` is given.
pub fn induce(
    corpus: &Corpus,
    start_year: i32,
    end_year: i32,
    config: &InductionConfig,
    top_n: usize,
    rank_year: Option<i32>,
) -> Result<InductionRun, InductionError> {
    config.validate()?;
    let snapshots = annual_snapshots(corpus, start_year, end_year)?;
    let training = build_training_set(&snapshots, config)?;
    let (space, log) = train_embeddings(&training, config)?;
    let clusters = cluster_users(&space, config)?;
    let lexicon = rank_candidates(&space, &clusters, rank_year.unwrap_or(end_year), top_n)?;
    Ok(InductionRun {
        training,
        space,
        log,
        clusters,
        lexicon,
    })
}
