use rand::seq::index;
use rand::seq::SliceRandom;

use super::TrainConfig;
use crate::data::{FeatureStore, FrameSequence};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};

/// One N-way K-shot task.
#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// `N * K` supports in class-major order, labels re-indexed to `0..N`.
    pub supports: Vec<FrameSequence>,
    /// Queries with re-indexed labels.
    pub queries: Vec<FrameSequence>,
    /// Store label of each way.
    pub class_ids: Vec<usize>,
    /// Store index of every support, then every query.
    pub video_ids: Vec<usize>,
    pub way: usize,
    pub shot: usize,
    pub seed: u64,
}

impl Episode {
    /// The `K` supports of one way.
    pub fn way_supports(&self, way: usize) -> &[FrameSequence] {
        &self.supports[way * self.shot..(way + 1) * self.shot]
    }

    pub fn query_labels(&self) -> Vec<usize> {
        self.queries.iter().map(|q| q.label).collect()
    }

    /// Store labels of every support then every query.
    pub fn original_labels(&self) -> Vec<usize> {
        self.supports
            .iter()
            .chain(&self.queries)
            .map(|v| self.class_ids[v.label])
            .collect()
    }
}

/// Draws episode `index` of `stream`. Classes with at least `K + 1` videos
/// are eligible; `N` of them are chosen without replacement, each
/// contributes `K` supports, and up to `Q` queries are drawn from the
/// leftover videos of the chosen classes.
pub fn sample_episode(
    store: &FeatureStore,
    cfg: &TrainConfig,
    stream: Stream,
    index: u64,
) -> Result<Episode> {
    let (n, k) = (cfg.way, cfg.shot);
    let groups = store.by_class();
    let eligible: Vec<usize> = (0..groups.len()).filter(|&c| groups[c].len() > k).collect();
    if eligible.len() < n {
        return Err(Error::Config(format!(
            "{n}-way {k}-shot episodes need {n} classes with at least {} videos each; \
             the store has {} such classes out of {}",
            k + 1,
            eligible.len(),
            groups.len()
        )));
    }
    let seed = crate::rng::derive_seed(cfg.seed, stream, index);
    let mut rng = stream_rng(cfg.seed, stream, index);
    let chosen: Vec<usize> = index::sample(&mut rng, eligible.len(), n)
        .into_iter()
        .map(|i| eligible[i])
        .collect();

    let mut supports = Vec::with_capacity(n * k);
    let mut video_ids = Vec::with_capacity(n * k + cfg.queries);
    let mut leftovers = Vec::new();
    for (way, &class) in chosen.iter().enumerate() {
        let mut members = groups[class].clone();
        members.shuffle(&mut rng);
        for &v in &members[..k] {
            supports.push(relabel(&store.videos()[v], way));
            video_ids.push(v);
        }
        leftovers.extend(members[k..].iter().map(|&v| (v, way)));
    }
    let q = cfg.queries.min(leftovers.len());
    let picks = index::sample(&mut rng, leftovers.len(), q);
    let queries = picks
        .into_iter()
        .map(|i| {
            let (v, way) = leftovers[i];
            video_ids.push(v);
            relabel(&store.videos()[v], way)
        })
        .collect();
    Ok(Episode {
        supports,
        queries,
        class_ids: chosen,
        video_ids,
        way: n,
        shot: k,
        seed,
    })
}

fn relabel(v: &FrameSequence, label: usize) -> FrameSequence {
    FrameSequence {
        features: v.features.clone(),
        label,
    }
}
