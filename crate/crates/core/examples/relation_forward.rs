//! Runs the hybrid relation module on a 3-way 1-shot episode for every
//! intra-relation kind and both pool modes, and prints how far the
//! enhanced features move from their inputs.
//!
//! ```text
//! cargo run --example relation_forward
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use relmatch::relation::{
    hybrid_relation, inter_relation, IntraKind, PoolMode, RelationConfig, RelationFlags, RelationParams,
};
use relmatch::Tensor;

fn random_sequence(rng: &mut ChaCha8Rng, t: usize, c: usize) -> Tensor {
    let data = (0..t * c).map(|_| StandardNormal.sample(rng)).collect();
    Tensor::matrix(t, c, data).expect("shape matches data")
}

fn rms_change(a: &Tensor, b: &Tensor) -> f64 {
    let sq: f64 = a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum();
    (sq / a.len() as f64).sqrt()
}

fn main() -> relmatch::Result<()> {
    let (t, c) = (8, 16);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let supports: Vec<Tensor> = (0..3).map(|_| random_sequence(&mut rng, t, c)).collect();
    let query = random_sequence(&mut rng, t, c);

    for kind in [IntraKind::Msa, IntraKind::TransformerBlock, IntraKind::BiLstm, IntraKind::BiGru] {
        let params = RelationParams::init(RelationConfig::new(kind, c, 4, 10), 1)?;
        for mode in [PoolMode::SupportAndQuery, PoolMode::SupportOnly] {
            let out = hybrid_relation(&supports, &query, &params, RelationFlags::FULL, mode)?;
            let moved: Vec<String> = out
                .supports
                .iter()
                .zip(&supports)
                .map(|(a, b)| format!("{:.3}", rms_change(a, b)))
                .collect();
            println!(
                "{kind:<18} {mode:?}: supports moved [{}], query moved {:.3}",
                moved.join(", "),
                rms_change(&out.query, &query)
            );
        }
    }

    let params = RelationParams::init(RelationConfig::new(IntraKind::Msa, c, 4, 10), 1)?;
    let mut pool = supports.clone();
    pool.push(query);
    let (_, kappa) = inter_relation(&pool, &params)?;
    println!("correlation weights over the support-and-query pool:");
    for row in kappa.row_iter() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.3}")).collect();
        println!("  {}", cells.join(" "));
    }
    Ok(())
}
