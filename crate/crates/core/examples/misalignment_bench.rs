//! Untrained-feature accuracy of several metrics on aligned and on
//! cyclically shifted synthetic videos.
//!
//! ```text
//! cargo run --release --example misalignment_bench -- [episodes]
//! ```

use relmatch::data::{generate, SynthSpec, WarpMode};
use relmatch::episodic::{evaluate, TrainConfig};
use relmatch::metrics::MetricKind;
use relmatch::relation::{RelationFlags, RelationParams};

fn main() -> relmatch::Result<()> {
    let episodes = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(2000);
    for (warp, magnitude) in [(WarpMode::None, 0), (WarpMode::CyclicShift, 4)] {
        let spec = SynthSpec {
            warp,
            warp_magnitude: magnitude,
            seed: 7,
            ..SynthSpec::default()
        };
        let (_, test) = generate(&spec)?.split_classes(16)?;
        println!("warp = {warp} (magnitude {magnitude})");
        for metric in [MetricKind::DIAGONAL, MetricKind::PLAIN_DTW, MetricKind::BI_MHM] {
            let cfg = TrainConfig {
                metric,
                relation: RelationFlags::OFF,
                ..TrainConfig::default()
            };
            let params = RelationParams::init(cfg.relation_config(16), 0)?;
            let e = evaluate(&test, &params, &cfg, episodes)?;
            println!("  {metric:<12} {:.4} +- {:.4}", e.accuracy, e.ci95);
        }
    }
    Ok(())
}
