use super::{Episode, TrainConfig};
use crate::error::{Error, Result};
use crate::metrics::on_tape;
use crate::relation::{hybrid_relation_on, ParamVars, RelationParams};
use crate::tensor::{Tape, Tensor, Var};

/// The three loss terms of one episode.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeLoss {
    pub episodic: f64,
    pub regularization: f64,
    pub total: f64,
}

/// Per-query outcome of one episode.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeResult {
    /// One row of `N` logits per query.
    pub logits: Vec<Vec<f64>>,
    pub predictions: Vec<usize>,
    pub correct: Vec<bool>,
    pub episodic_loss: f64,
    /// Only available when the episode's store labels index the classifier
    /// head, i.e. on the training pool.
    pub regularization_loss: Option<f64>,
    pub total_loss: f64,
}

impl EpisodeResult {
    pub fn accuracy(&self) -> f64 {
        let hits = self.correct.iter().filter(|&&c| c).count();
        hits as f64 / self.correct.len() as f64
    }
}

/// Frame-wise mean of the `K` supports of each class.
pub fn prototypes(supports: &[Vec<Tensor>]) -> Result<Vec<Tensor>> {
    let tape = Tape::new();
    let vars: Vec<Vec<Var>> = supports
        .iter()
        .map(|class| class.iter().map(|t| tape.leaf(t.clone())).collect())
        .collect();
    vars.iter()
        .map(|class| prototype_on(&tape, class).map(|v| (*tape.value(v)).clone()))
        .collect()
}

fn prototype_on(tape: &Tape, members: &[Var]) -> Result<Var> {
    let Some((&first, rest)) = members.split_first() else {
        return Err(Error::Domain("a prototype needs at least one support".into()));
    };
    let mut sum = first;
    for &m in rest {
        sum = tape.add(sum, m)?;
    }
    Ok(tape.div_scalar(sum, members.len() as f64))
}

/// Recorded forward pass of one episode.
pub(crate) struct Forward {
    /// `Q x N`.
    pub logits: Var,
    /// Time-pooled enhanced features (`[C]`) of every support and query, one
    /// group per query invocation.
    pub pooled: Vec<Var>,
    /// Store label of each entry of `pooled`.
    pub pooled_labels: Vec<usize>,
}

pub(crate) fn forward_on(
    tape: &Tape,
    episode: &Episode,
    p: &ParamVars,
    cfg: &TrainConfig,
    collect_pooled: bool,
) -> Result<Forward> {
    let supports: Vec<Var> = episode
        .supports
        .iter()
        .map(|s| tape.leaf(s.features.clone()))
        .collect();
    let queries: Vec<Var> = episode
        .queries
        .iter()
        .map(|q| tape.leaf(q.features.clone()))
        .collect();
    forward_vars(tape, episode, &supports, &queries, p, cfg, collect_pooled)
}

/// As [`forward_on`], with the support and query features supplied as
/// variables; `episode` only provides labels and the way/shot layout.
pub(crate) fn forward_vars(
    tape: &Tape,
    episode: &Episode,
    supports: &[Var],
    queries: &[Var],
    p: &ParamVars,
    cfg: &TrainConfig,
    collect_pooled: bool,
) -> Result<Forward> {
    if episode.queries.is_empty() {
        return Err(Error::Config("episode has no queries".into()));
    }
    let (n, k) = (episode.way, episode.shot);
    let support_labels: Vec<usize> = episode
        .supports
        .iter()
        .map(|s| episode.class_ids[s.label])
        .collect();

    let mut rows = Vec::with_capacity(episode.queries.len());
    let mut pooled = Vec::new();
    let mut pooled_labels = Vec::new();
    for (query, &q) in episode.queries.iter().zip(queries) {
        let enhanced = hybrid_relation_on(tape, supports, q, p, cfg.relation, cfg.pool_mode)?;
        let mut distances = Vec::with_capacity(n);
        for way in 0..n {
            let proto = prototype_on(tape, &enhanced.supports[way * k..(way + 1) * k])?;
            distances.push(on_tape::metric(tape, cfg.metric, proto, enhanced.query)?);
        }
        let d = tape.concat(&distances)?;
        rows.push(tape.div_scalar(d, -cfg.temperature));
        if collect_pooled {
            for &s in &enhanced.supports {
                pooled.push(tape.mean_rows(s)?);
            }
            pooled.push(tape.mean_rows(enhanced.query)?);
            pooled_labels.extend_from_slice(&support_labels);
            pooled_labels.push(episode.class_ids[query.label]);
        }
    }
    Ok(Forward {
        logits: tape.stack_rows(&rows)?,
        pooled,
        pooled_labels,
    })
}

/// Recorded loss terms: `(episodic, regularization, total, logits)`.
pub(crate) fn loss_on(
    tape: &Tape,
    episode: &Episode,
    p: &ParamVars,
    cfg: &TrainConfig,
) -> Result<(Var, Var, Var, Var)> {
    let fwd = forward_on(tape, episode, p, cfg, true)?;
    loss_from(tape, episode, fwd, p, cfg)
}

pub(crate) fn loss_vars(
    tape: &Tape,
    episode: &Episode,
    supports: &[Var],
    queries: &[Var],
    p: &ParamVars,
    cfg: &TrainConfig,
) -> Result<(Var, Var, Var, Var)> {
    let fwd = forward_vars(tape, episode, supports, queries, p, cfg, true)?;
    loss_from(tape, episode, fwd, p, cfg)
}

fn loss_from(
    tape: &Tape,
    episode: &Episode,
    fwd: Forward,
    p: &ParamVars,
    cfg: &TrainConfig,
) -> Result<(Var, Var, Var, Var)> {
    if !(cfg.lambda >= 0.0) {
        return Err(Error::Config(format!("lambda must be non-negative, got {}", cfg.lambda)));
    }
    let episodic = tape.cross_entropy(fwd.logits, &episode.query_labels())?;
    let features = tape.stack_rows(&fwd.pooled)?;
    let head = tape.matmul(features, p.get("head.w"))?;
    let reg = tape.cross_entropy(head, &fwd.pooled_labels)?;
    let total = tape.add(episodic, tape.scale(reg, cfg.lambda))?;
    Ok((episodic, reg, total, fwd.logits))
}

/// `-metric(prototype_n, query) / tau` for every query, as `Q` rows of `N`.
pub fn episode_logits(
    episode: &Episode,
    params: &RelationParams,
    cfg: &TrainConfig,
) -> Result<Vec<Vec<f64>>> {
    let tape = Tape::new();
    let p = params.register(&tape);
    let fwd = forward_on(&tape, episode, &p, cfg, false)?;
    Ok(rows_of(&tape.value(fwd.logits)))
}

/// Episodic cross-entropy, regularization cross-entropy of the classifier
/// head on pooled enhanced features, and `episodic + lambda * reg`.
pub fn episode_loss(
    episode: &Episode,
    params: &RelationParams,
    cfg: &TrainConfig,
) -> Result<EpisodeLoss> {
    let tape = Tape::new();
    let p = params.register(&tape);
    let (e, r, t, _) = loss_on(&tape, episode, &p, cfg)?;
    Ok(EpisodeLoss {
        episodic: tape.value(e).item(),
        regularization: tape.value(r).item(),
        total: tape.value(t).item(),
    })
}

/// Logits, predictions and losses. The regularization term is included when
/// `with_regularization` is set.
pub fn run_episode(
    episode: &Episode,
    params: &RelationParams,
    cfg: &TrainConfig,
    with_regularization: bool,
) -> Result<EpisodeResult> {
    let tape = Tape::new();
    let p = params.register(&tape);
    let (logits, episodic, reg, total) = if with_regularization {
        let (e, r, t, l) = loss_on(&tape, episode, &p, cfg)?;
        let reg = tape.value(r).item();
        (l, tape.value(e).item(), Some(reg), tape.value(t).item())
    } else {
        let fwd = forward_on(&tape, episode, &p, cfg, false)?;
        let e = tape.cross_entropy(fwd.logits, &episode.query_labels())?;
        let e = tape.value(e).item();
        (fwd.logits, e, None, e)
    };
    let logits = rows_of(&tape.value(logits));
    if logits.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite {
            episode: 0,
            detail: "non-finite logits".into(),
        });
    }
    let predictions: Vec<usize> = logits.iter().map(|row| argmax(row)).collect();
    let correct = predictions
        .iter()
        .zip(&episode.queries)
        .map(|(&p, q)| p == q.label)
        .collect();
    Ok(EpisodeResult {
        logits,
        predictions,
        correct,
        episodic_loss: episodic,
        regularization_loss: reg,
        total_loss: total,
    })
}

fn rows_of(t: &Tensor) -> Vec<Vec<f64>> {
    t.row_iter().map(<[f64]>::to_vec).collect()
}

/// First index of the largest value.
pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}
