//! Samples one 3-way 2-shot episode and shows its layout, logits, losses and
//! predictions for the relation-off baseline and the untrained full model.
//!
//! ```text
//! cargo run --example episode_walkthrough
//! ```

use relmatch::data::{generate, SynthSpec, WarpMode};
use relmatch::episodic::{episode_loss, run_episode, sample_episode, TrainConfig};
use relmatch::metrics::MetricKind;
use relmatch::relation::{RelationFlags, RelationParams};
use relmatch::rng::Stream;

fn main() -> relmatch::Result<()> {
    let spec = SynthSpec {
        num_classes: 6,
        videos_per_class: 5,
        warp: WarpMode::Jitter,
        warp_magnitude: 2,
        sigma_w: 1.0,
        seed: 8,
        ..SynthSpec::default()
    };
    let store = generate(&spec)?;
    let full = TrainConfig {
        way: 3,
        shot: 2,
        queries: 2,
        ..TrainConfig::default()
    };
    let episode = sample_episode(&store, &full, Stream::EvalEpisodes, 0)?;
    println!("classes (store ids): {:?}", episode.class_ids);
    let labels = episode.original_labels();
    let (supports, queries) = labels.split_at(episode.supports.len());
    println!("support store ids:   {supports:?}");
    println!("query store ids:     {queries:?} (episode labels {:?})", episode.query_labels());

    let baseline = TrainConfig {
        metric: MetricKind::DIAGONAL,
        relation: RelationFlags::OFF,
        ..full.clone()
    };
    let params = RelationParams::init(full.relation_config(store.num_classes()), 0)?;
    for (name, cfg) in [("baseline", &baseline), ("full model", &full)] {
        let result = run_episode(&episode, &params, cfg, true)?;
        let loss = episode_loss(&episode, &params, cfg)?;
        println!("{name}:");
        for (q, row) in result.logits.iter().enumerate() {
            println!("  query {q}: logits {row:.4?} -> predicted {}", result.predictions[q]);
        }
        println!(
            "  accuracy {:.2}, episodic {:.4}, regularization {:.4}, total {:.4}",
            result.accuracy(),
            loss.episodic,
            loss.regularization,
            loss.total
        );
    }
    Ok(())
}
