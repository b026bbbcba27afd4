//! Distances between a sequence and a cyclically shifted copy of it.
//! The set metrics ignore frame order; the diagonal and DTW baselines do not.
//!
//! ```text
//! cargo run --example metric_comparison
//! ```

use relmatch::metrics::{distance, oracle_metric, DistanceMatrix, MetricKind};
use relmatch::Tensor;

fn main() -> relmatch::Result<()> {
    let x = Tensor::from_rows(&[
        [1.0, 0.0, 0.0],
        [0.7, 0.7, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.7, 0.7],
        [0.0, 0.0, 1.0],
    ])?;
    let shifted: Vec<&[f64]> = [2, 3, 4, 0, 1].iter().map(|&i| x.row(i)).collect();
    let y = Tensor::from_rows(&shifted)?;

    println!("cosine distances, rows = x frames, cols = shifted frames:");
    let d = DistanceMatrix::between(&x, &y)?;
    for a in 0..d.rows() {
        let row: Vec<String> = (0..d.cols()).map(|b| format!("{:.3}", d.get(a, b))).collect();
        println!("  {}", row.join(" "));
    }

    println!("{:<22} {:>10} {:>10} {:>10}", "metric", "d(x,x)", "d(x,y)", "oracle");
    for name in ["diagonal", "plain-dtw", "hausdorff", "directed-mhm", "bi-mhm"] {
        let kind: MetricKind = name.parse()?;
        println!(
            "{kind:<22} {:>10.4} {:>10.4} {:>10.4}",
            distance(kind, &x, &x)?,
            distance(kind, &x, &y)?,
            oracle_metric(kind, &x, &y)?
        );
    }
    Ok(())
}
