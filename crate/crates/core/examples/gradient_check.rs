//! Finite-difference check of every differentiable component.
//!
//! ```text
//! cargo run --release --example gradient_check -- [seed] [points]
//! ```

use std::time::Instant;

use relmatch::gradcheck::{run_suite, DEFAULT_TOLERANCE};

fn main() -> relmatch::Result<()> {
    let mut args = std::env::args().skip(1);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let points = args.next().and_then(|s| s.parse().ok()).unwrap_or(100);
    let start = Instant::now();
    let report = run_suite(seed, points)?;
    for r in &report {
        let verdict = if r.worst < DEFAULT_TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<24} {:.3e}  {verdict}", r.component, r.worst);
    }
    println!("{} components, {points} points each, {:.1?}", report.len(), start.elapsed());
    Ok(())
}
