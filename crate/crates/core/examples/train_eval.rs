//! Meta-trains the relation module on 16 synthetic classes and evaluates on
//! 8 held-out classes, against the untrained model and the relation-off
//! diagonal baseline.
//!
//! ```text
//! cargo run --release --example train_eval -- [train_episodes] [eval_episodes] [sigma_w]
//! ```

use std::time::Instant;

use relmatch::data::{generate, SynthSpec, WarpMode};
use relmatch::episodic::{evaluate, train, TrainConfig};
use relmatch::metrics::MetricKind;
use relmatch::relation::{RelationFlags, RelationParams};

fn arg<T: std::str::FromStr>(i: usize, default: T) -> T {
    std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default)
}

fn main() -> relmatch::Result<()> {
    let spec = SynthSpec {
        warp: WarpMode::CyclicShift,
        warp_magnitude: 4,
        sigma_w: arg(3, 0.25),
        seed: 1,
        ..SynthSpec::default()
    };
    let (train_store, test_store) = generate(&spec)?.split_classes(16)?;
    let cfg = TrainConfig {
        train_episodes: arg(1, 1000),
        ..TrainConfig::default()
    };
    let episodes = arg(2, 2000);

    let baseline_cfg = TrainConfig {
        metric: MetricKind::DIAGONAL,
        relation: RelationFlags::OFF,
        ..cfg.clone()
    };
    let untrained = RelationParams::init(cfg.relation_config(16), cfg.seed)?;
    let base = evaluate(&test_store, &untrained, &baseline_cfg, episodes)?;
    println!("relation off + diagonal: {:.4} +- {:.4}", base.accuracy, base.ci95);
    let before = evaluate(&test_store, &untrained, &cfg, episodes)?;
    println!("untrained full model:    {:.4} +- {:.4}", before.accuracy, before.ci95);

    let start = Instant::now();
    let out = train(&train_store, &cfg)?;
    let n = out.log.len();
    let tenth = (n / 10).max(1);
    let mean = |rows: &[relmatch::episodic::TrainLogRow]| {
        rows.iter().map(|r| r.total_loss).sum::<f64>() / rows.len() as f64
    };
    println!(
        "trained {n} episodes in {:.1?}; loss {:.4} -> {:.4}",
        start.elapsed(),
        mean(&out.log[..tenth]),
        mean(&out.log[n - tenth..])
    );
    let after = evaluate(&test_store, &out.params, &cfg, episodes)?;
    println!("trained full model:      {:.4} +- {:.4}", after.accuracy, after.ci95);
    Ok(())
}
