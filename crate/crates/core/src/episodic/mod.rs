//! N-way K-shot episodes: sampling, prototype matching, losses, training and
//! evaluation.
//!
//! Each query is classified against per-class prototypes (the frame-wise
//! mean of that class's enhanced supports) with logits `-metric(p_n, q) / tau`.
//! With the relation module switched off and the diagonal metric this is the
//! plain prototype baseline.

mod pipeline;
mod sampler;
mod train;

pub use pipeline::{
    episode_logits, episode_loss, prototypes, run_episode, EpisodeLoss, EpisodeResult,
};
pub(crate) use pipeline::loss_vars;
pub use sampler::{sample_episode, Episode};
pub use train::{evaluate, evaluate_with_workers, train, train_from, Adam, Evaluation, TrainLogRow, TrainOutput};

use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::relation::{IntraKind, PoolMode, RelationConfig, RelationFlags};

/// Everything that defines an experiment. Defaults are the desk-scale
/// settings used throughout the examples.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub way: usize,
    pub shot: usize,
    pub queries: usize,
    pub frames: usize,
    pub channels: usize,
    pub metric: MetricKind,
    pub relation: RelationFlags,
    pub pool_mode: PoolMode,
    pub intra: IntraKind,
    pub heads: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub lambda: f64,
    pub train_episodes: usize,
    pub eval_episodes: usize,
    pub temperature: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            way: 5,
            shot: 1,
            queries: 5,
            frames: 8,
            channels: 16,
            metric: MetricKind::BI_MHM,
            relation: RelationFlags::FULL,
            pool_mode: PoolMode::SupportAndQuery,
            intra: IntraKind::Msa,
            heads: 4,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            lambda: 1.0,
            train_episodes: 1000,
            eval_episodes: 2000,
            temperature: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.way < 2 {
            return bad(format!("way must be at least 2, got {}", self.way));
        }
        if self.shot < 1 {
            return bad("shot must be at least 1".into());
        }
        if self.queries < 1 {
            return bad("queries per episode must be at least 1".into());
        }
        if self.frames < 1 || self.channels < 1 {
            return bad("frames and channels must be at least 1".into());
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be positive, got {}", self.temperature));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        self.relation_config(1).validate()
    }

    /// Relation-module shape for a training pool with `num_classes` classes.
    pub fn relation_config(&self, num_classes: usize) -> RelationConfig {
        RelationConfig::new(self.intra, self.channels, self.heads, num_classes.max(1))
    }
}
