use std::collections::BTreeMap;

use rayon::prelude::*;

use super::pipeline::{loss_on, run_episode};
use super::{sample_episode, TrainConfig};
use crate::data::FeatureStore;
use crate::error::{Error, Result};
use crate::relation::RelationParams;
use crate::rng::Stream;
use crate::tensor::{Tape, Tensor};

/// Adam with bias correction; state is keyed by parameter name.
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    steps: i32,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            steps: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn from_config(cfg: &TrainConfig) -> Self {
        Self::new(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
    }

    /// One update. Parameters without an entry in `grads` see a zero
    /// gradient.
    pub fn step(&mut self, params: &mut RelationParams, grads: &BTreeMap<String, Tensor>) {
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps);
        let c2 = 1.0 - self.beta2.powi(self.steps);
        for (name, value) in params.iter_mut() {
            let n = value.len();
            let (m, v) = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let g = grads.get(name).map(Tensor::data);
            for (i, x) in value.data_mut().iter_mut().enumerate() {
                let gi = g.map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *x -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainLogRow {
    pub episode_index: usize,
    pub episodic_loss: f64,
    pub reg_loss: f64,
    pub total_loss: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub params: RelationParams,
    pub log: Vec<TrainLogRow>,
}

/// Mean per-episode accuracy with a 95% normal interval half-width.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub accuracy: f64,
    pub ci95: f64,
    pub per_episode: Vec<f64>,
}

pub(crate) fn check_store(store: &FeatureStore, cfg: &TrainConfig) -> Result<()> {
    for (i, v) in store.videos().iter().enumerate() {
        if v.channels() != cfg.channels || v.frames() != cfg.frames {
            return Err(Error::Config(format!(
                "video {i} is {}x{} but the config expects frames = {} and channels = {}",
                v.frames(),
                v.channels(),
                cfg.frames,
                cfg.channels
            )));
        }
    }
    Ok(())
}

fn check_params(params: &RelationParams, cfg: &TrainConfig) -> Result<()> {
    let pc = params.config();
    if pc.channels != cfg.channels || pc.intra != cfg.intra {
        return Err(Error::Config(format!(
            "parameters are for {} with {} channels, config asks for {} with {}",
            pc.intra, pc.channels, cfg.intra, cfg.channels
        )));
    }
    Ok(())
}

/// Trains freshly initialised parameters on `store`.
pub fn train(store: &FeatureStore, cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let params = RelationParams::init(cfg.relation_config(store.num_classes()), cfg.seed)?;
    train_from(store, cfg, params)
}

/// Runs `cfg.train_episodes` Adam steps, one per sampled episode, in order.
pub fn train_from(
    store: &FeatureStore,
    cfg: &TrainConfig,
    mut params: RelationParams,
) -> Result<TrainOutput> {
    cfg.validate()?;
    check_store(store, cfg)?;
    check_params(&params, cfg)?;
    if params.config().num_classes != store.num_classes() {
        return Err(Error::Config(format!(
            "classifier head has {} outputs but the training store has {} classes",
            params.config().num_classes,
            store.num_classes()
        )));
    }
    let mut adam = Adam::from_config(cfg);
    let mut log = Vec::with_capacity(cfg.train_episodes);
    for i in 0..cfg.train_episodes {
        let episode = sample_episode(store, cfg, Stream::TrainEpisodes, i as u64)?;
        let tape = Tape::new();
        let p = params.register(&tape);
        let (e, r, t, _) = loss_on(&tape, &episode, &p, cfg)?;
        let row = TrainLogRow {
            episode_index: i,
            episodic_loss: tape.value(e).item(),
            reg_loss: tape.value(r).item(),
            total_loss: tape.value(t).item(),
        };
        if !row.total_loss.is_finite() {
            return Err(Error::NonFinite {
                episode: i,
                detail: format!(
                    "episodic {} regularization {}",
                    row.episodic_loss, row.reg_loss
                ),
            });
        }
        let grads = tape.backward(t)?;
        let mut named = BTreeMap::new();
        for (name, var) in p.iter() {
            if let Some(g) = grads.get(var) {
                if !g.is_finite() {
                    return Err(Error::NonFinite {
                        episode: i,
                        detail: format!("gradient of {name}"),
                    });
                }
                named.insert(name.to_string(), g.clone());
            }
        }
        adam.step(&mut params, &named);
        log.push(row);
    }
    Ok(TrainOutput { params, log })
}

/// Mean query accuracy over `episodes` evaluation episodes, using the
/// global rayon pool.
pub fn evaluate(
    store: &FeatureStore,
    params: &RelationParams,
    cfg: &TrainConfig,
    episodes: usize,
) -> Result<Evaluation> {
    evaluate_with_workers(store, params, cfg, episodes, None)
}

/// As [`evaluate`], on a dedicated pool of `workers` threads. Episodes are
/// seeded by index, so the result does not depend on the thread count.
pub fn evaluate_with_workers(
    store: &FeatureStore,
    params: &RelationParams,
    cfg: &TrainConfig,
    episodes: usize,
    workers: Option<usize>,
) -> Result<Evaluation> {
    cfg.validate()?;
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    check_store(store, cfg)?;
    check_params(params, cfg)?;
    let run = || -> Vec<Result<f64>> {
        (0..episodes)
            .into_par_iter()
            .map(|i| {
                let episode = sample_episode(store, cfg, Stream::EvalEpisodes, i as u64)?;
                run_episode(&episode, params, cfg, false)
                    .map(|r| r.accuracy())
                    .map_err(|e| match e {
                        Error::NonFinite { detail, .. } => Error::NonFinite { episode: i, detail },
                        other => other,
                    })
            })
            .collect()
    };
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} workers: {e}")))?
            .install(run),
        None => run(),
    };
    let per_episode = results.into_iter().collect::<Result<Vec<f64>>>()?;
    let (accuracy, ci95) = mean_ci95(&per_episode);
    Ok(Evaluation {
        accuracy,
        ci95,
        per_episode,
    })
}

/// Mean and `1.96 * sd / sqrt(n)` (sample standard deviation; 0 for n = 1).
pub(crate) fn mean_ci95(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}
