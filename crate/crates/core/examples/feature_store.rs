//! Generates a synthetic store for each warp mode, writes it to disk, reads
//! it back and reports the nearest-centroid check on pooled features.
//!
//! ```text
//! cargo run --example feature_store
//! ```

use relmatch::data::{gap_centroid_accuracy, generate, FeatureStore, SynthSpec, WarpMode};

fn main() -> relmatch::Result<()> {
    let dir = std::env::temp_dir().join(format!("relmatch-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| relmatch::Error::Usage(e.to_string()))?;
    for warp in [WarpMode::None, WarpMode::CyclicShift, WarpMode::SegmentReorder, WarpMode::Jitter] {
        let spec = SynthSpec {
            num_classes: 16,
            warp,
            warp_magnitude: if warp == WarpMode::None { 0 } else { 3 },
            seed: 2,
            ..SynthSpec::default()
        };
        let store = generate(&spec)?;
        let path = dir.join(format!("{warp}.bin"));
        store.write(&path)?;
        let back = FeatureStore::read(&path)?;
        let bytes = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        let max_gap = store
            .videos()
            .iter()
            .zip(back.videos())
            .flat_map(|(a, b)| a.features.data().iter().zip(b.features.data()).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max);
        println!(
            "{warp:<16} {} videos, {bytes} bytes, f32 round-trip gap {max_gap:.2e}, centroid accuracy {:.3}",
            back.len(),
            gap_centroid_accuracy(&back)?
        );
    }
    println!("provenance: {}", FeatureStore::read(dir.join("jitter.bin"))?.provenance());
    let _ = std::fs::remove_dir_all(&dir);
    Ok(())
}
