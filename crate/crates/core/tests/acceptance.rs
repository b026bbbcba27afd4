//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use relmatch::data::{generate, FeatureStore, SynthSpec, WarpMode};
use relmatch::episodic::{evaluate, train, TrainConfig};
use relmatch::gradcheck::{run_suite, DEFAULT_TOLERANCE};
use relmatch::metrics::{self, oracle_metric, Direction, MetricFamily, MetricKind};
use relmatch::relation::{
    gru_cell, intra_relation, lstm_cell, IntraKind, RelationConfig, RelationFlags, RelationParams,
    Scan,
};
use relmatch::Tensor;

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn seq(r: &mut ChaCha8Rng, t: usize, c: usize) -> Tensor {
    let data = (0..t * c).map(|_| r.sample(StandardNormal)).collect();
    Tensor::matrix(t, c, data).unwrap()
}

fn permute_rows(x: &Tensor, order: &[usize]) -> Tensor {
    let rows: Vec<&[f64]> = order.iter().map(|&i| x.row(i)).collect();
    Tensor::from_rows(&rows).unwrap()
}

fn shuffled(r: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    order
}

fn within(elapsed: Duration, limit_s: u64) -> Result<(), String> {
    if elapsed <= Duration::from_secs(limit_s) {
        Ok(())
    } else {
        Err(format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let set_kinds = [
        MetricKind::HAUSDORFF,
        MetricKind::new(MetricFamily::Hausdorff, Direction::Forward),
        MetricKind::new(MetricFamily::Hausdorff, Direction::Backward),
        MetricKind::DIRECTED_MHM,
        MetricKind::new(MetricFamily::DirectedMhm, Direction::Backward),
        MetricKind::BI_MHM,
    ];
    let mut r = rng(11);
    let mut worst: f64 = 0.0;
    let mut dtw_pairs = 0;
    for pair in 0..1000 {
        let c = r.gen_range(1..=4);
        let (tx, ty) = (r.gen_range(1..=6), r.gen_range(1..=6));
        let (x, y) = (seq(&mut r, tx, c), seq(&mut r, ty, c));
        for kind in set_kinds {
            let fast = metrics::distance(kind, &x, &y).map_err(|e| e.to_string())?;
            let slow = oracle_metric(kind, &x, &y).map_err(|e| e.to_string())?;
            worst = worst.max((fast - slow).abs());
            if (fast - slow).abs() > 1e-12 {
                return Err(format!("pair {pair}: {kind} fast {fast} oracle {slow}"));
            }
        }
        if tx <= 5 && ty <= 5 {
            dtw_pairs += 1;
            let fast = metrics::plain_dtw(&x, &y).map_err(|e| e.to_string())?;
            let slow = oracle_metric(MetricKind::PLAIN_DTW, &x, &y).map_err(|e| e.to_string())?;
            if fast != slow {
                return Err(format!("pair {pair}: plain-dtw fast {fast} oracle {slow}"));
            }
        }
    }
    within(start.elapsed(), 30)?;
    Ok(format!(
        "1000 pairs, worst set-metric gap {worst:e}, {dtw_pairs} exact DTW pairs, {:.2} s",
        start.elapsed().as_secs_f64()
    ))
}

/// Rows chosen so that reversing `y` moves the diagonal and DTW costs.
const WITNESS_X: [[f64; 2]; 3] = [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
const WITNESS_Y: [[f64; 2]; 3] = [[1.0, 0.1], [1.0, 1.0], [0.1, 1.0]];

fn metric_properties() -> Outcome {
    let start = Instant::now();
    let mut r = rng(12);
    let check = |ok: bool, what: &str, pair: usize| {
        if ok {
            Ok(())
        } else {
            Err(format!("pair {pair}: {what}"))
        }
    };
    for pair in 0..1000 {
        let c = r.gen_range(1..=6);
        let t = r.gen_range(1..=8);
        let ty = r.gen_range(1..=8);
        let (x, y) = (seq(&mut r, t, c), seq(&mut r, ty, c));
        let y_eq = seq(&mut r, t, c);
        let e = |v: relmatch::Result<f64>| v.unwrap();

        let bi = e(metrics::bi_mhm(&x, &y));
        check(bi == e(metrics::bi_mhm(&y, &x)), "bi_mhm symmetry", pair)?;
        let h = e(metrics::hausdorff(&x, &y));
        check(h == e(metrics::hausdorff(&y, &x)), "hausdorff symmetry", pair)?;
        let sum = e(metrics::directed_mhm(&x, &y)) + e(metrics::directed_mhm(&y, &x));
        check(bi == sum, "bi_mhm equals the sum of directed terms", pair)?;

        for kind in [
            MetricKind::BI_MHM,
            MetricKind::HAUSDORFF,
            MetricKind::DIRECTED_MHM,
            MetricKind::DIAGONAL,
            MetricKind::PLAIN_DTW,
        ] {
            check(e(metrics::distance(kind, &x, &x)) == 0.0, "identity is zero", pair)?;
            check(e(metrics::distance(kind, &x, &y_eq)) >= 0.0, "non-negative", pair)?;
        }

        let (px, py) = (shuffled(&mut r, t), shuffled(&mut r, ty));
        let (xp, yp) = (permute_rows(&x, &px), permute_rows(&y, &py));
        for kind in [
            MetricKind::BI_MHM,
            MetricKind::HAUSDORFF,
            MetricKind::DIRECTED_MHM,
            MetricKind::new(MetricFamily::DirectedMhm, Direction::Backward),
        ] {
            let before = e(metrics::distance(kind, &x, &y));
            let after = e(metrics::distance(kind, &xp, &yp));
            check(before == after, "frame-permutation invariance", pair)?;
        }

        let dtw = e(metrics::plain_dtw(&x, &y_eq));
        let diag = e(metrics::diagonal(&x, &y_eq));
        check(dtw <= t as f64 * diag + 1e-12, "dtw <= T * diagonal", pair)?;
    }

    let x = Tensor::from_rows(&WITNESS_X).unwrap();
    let y = Tensor::from_rows(&WITNESS_Y).unwrap();
    let y_rev = permute_rows(&y, &[2, 1, 0]);
    let pairs = [
        ("diagonal", metrics::diagonal(&x, &y).unwrap(), metrics::diagonal(&x, &y_rev).unwrap()),
        ("plain-dtw", metrics::plain_dtw(&x, &y).unwrap(), metrics::plain_dtw(&x, &y_rev).unwrap()),
    ];
    for (name, a, b) in pairs {
        if a == b {
            return Err(format!("witness pair leaves {name} unchanged ({a})"));
        }
    }
    if metrics::bi_mhm(&x, &y).unwrap() != metrics::bi_mhm(&x, &y_rev).unwrap() {
        return Err("witness pair moves bi_mhm".into());
    }
    within(start.elapsed(), 30)?;
    Ok(format!(
        "1000 pairs, witness diagonal {:.4} -> {:.4}, plain-dtw {:.4} -> {:.4}, {:.2} s",
        pairs[0].1,
        pairs[0].2,
        pairs[1].1,
        pairs[1].2,
        start.elapsed().as_secs_f64()
    ))
}

fn gradient_checks() -> Outcome {
    let start = Instant::now();
    let report = run_suite(3, 100).map_err(|e| e.to_string())?;
    let failing: Vec<String> = report
        .iter()
        .filter(|c| !(c.worst < DEFAULT_TOLERANCE))
        .map(|c| format!("{} {:e}", c.component, c.worst))
        .collect();
    if !failing.is_empty() {
        return Err(format!("above {DEFAULT_TOLERANCE:e}: {}", failing.join(", ")));
    }
    for needed in ["relation msa", "bi_mhm", "episode loss", "matmul", "dtw"] {
        if !report.iter().any(|c| c.component == needed) {
            return Err(format!("suite is missing {needed}"));
        }
    }
    within(start.elapsed(), 120)?;
    let worst = report.iter().map(|c| c.worst).fold(0.0, f64::max);
    Ok(format!(
        "{} components x 100 points, worst relative error {worst:e}, {:.1} s",
        report.len(),
        start.elapsed().as_secs_f64()
    ))
}

fn zero_weight_identity() -> Outcome {
    let mut r = rng(14);
    for kind in [IntraKind::Msa, IntraKind::TransformerBlock] {
        for (t, c, heads) in [(1, 4, 1), (3, 8, 2), (8, 16, 4)] {
            let p = RelationParams::zeros(RelationConfig::new(kind, c, heads, 3)).unwrap();
            let f = seq(&mut r, t, c);
            let out = intra_relation(&f, &p).map_err(|e| e.to_string())?;
            let same = out.data().iter().zip(f.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            if !same || out.shape() != f.shape() {
                return Err(format!("{kind} T={t} C={c} does not reproduce its input"));
            }
        }
    }
    let v = Tensor::vector(vec![1.0, -2.0, 0.25, 3.0]).unwrap();
    let x = Tensor::vector(vec![0.3, -1.0, 2.0, 0.0]).unwrap();
    let zero = Tensor::zeros(&[4]);
    let lstm = RelationParams::zeros(RelationConfig::new(IntraKind::BiLstm, 4, 1, 3)).unwrap();
    let gru = RelationParams::zeros(RelationConfig::new(IntraKind::BiGru, 4, 1, 3)).unwrap();
    for scan in [Scan::Forward, Scan::Reverse] {
        let (h, c) = lstm_cell(&x, &zero, &zero, &lstm, scan).unwrap();
        if h.data() != [0.0; 4] || c.data() != [0.0; 4] {
            return Err("lstm with zero state is not zero".into());
        }
        let (h, c) = lstm_cell(&x, &zero, &v, &lstm, scan).unwrap();
        for i in 0..4 {
            let ci = 0.5 * v.data()[i];
            if c.data()[i] != ci || h.data()[i] != 0.5 * ci.tanh() {
                return Err(format!("lstm closed form fails at channel {i}"));
            }
        }
        let h = gru_cell(&x, &v, &gru, scan).unwrap();
        if h.data().iter().zip(v.data()).any(|(a, b)| *a != 0.5 * b) {
            return Err("gru with h_prev = v is not 0.5 v".into());
        }
        if gru_cell(&x, &zero, &gru, scan).unwrap().data() != [0.0; 4] {
            return Err("gru with zero state is not zero".into());
        }
    }
    Ok("MSA and Transformer bit-exact; LSTM and GRU closed forms exact".into())
}

fn warped_test_store(warp: WarpMode, magnitude: usize, sigma_w: f64, seed: u64) -> (FeatureStore, FeatureStore) {
    let spec = SynthSpec {
        num_classes: 24,
        frames: 8,
        channels: 16,
        sigma_w,
        warp,
        warp_magnitude: magnitude,
        seed,
        ..SynthSpec::default()
    };
    generate(&spec).unwrap().split_classes(16).unwrap()
}

fn untrained_accuracy(store: &FeatureStore, metric: MetricKind, episodes: usize) -> f64 {
    let cfg = TrainConfig {
        metric,
        relation: RelationFlags::OFF,
        seed: 5,
        ..TrainConfig::default()
    };
    let params = RelationParams::init(cfg.relation_config(16), 0).unwrap();
    evaluate(store, &params, &cfg, episodes).unwrap().accuracy
}

fn misalignment_robustness() -> Outcome {
    let start = Instant::now();
    let (_, shifted) = warped_test_store(WarpMode::CyclicShift, 4, 0.25, 7);
    let diag = untrained_accuracy(&shifted, MetricKind::DIAGONAL, 2000);
    let dtw = untrained_accuracy(&shifted, MetricKind::PLAIN_DTW, 2000);
    let bi = untrained_accuracy(&shifted, MetricKind::BI_MHM, 2000);
    let (_, aligned) = warped_test_store(WarpMode::None, 0, 0.25, 7);
    let diag_none = untrained_accuracy(&aligned, MetricKind::DIAGONAL, 2000);
    let bi_none = untrained_accuracy(&aligned, MetricKind::BI_MHM, 2000);
    let detail = format!(
        "shifted: diagonal {diag:.4}, plain-dtw {dtw:.4}, bi-mhm {bi:.4}; aligned: diagonal {diag_none:.4}, bi-mhm {bi_none:.4}"
    );
    if !(bi >= diag + 0.10 && bi >= dtw && (bi_none - diag_none).abs() <= 0.03) {
        return Err(detail);
    }
    within(start.elapsed(), 180)?;
    Ok(format!("{detail}, {:.1} s", start.elapsed().as_secs_f64()))
}

fn ablation_direction() -> Outcome {
    let start = Instant::now();
    let mut gains = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..3 {
        let (train_pool, test_pool) = warped_test_store(WarpMode::CyclicShift, 4, 1.0, 100 + seed);
        let full = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        let out = train(&train_pool, &full).map_err(|e| e.to_string())?;
        let n = out.log.len() / 10;
        let mean = |rows: &[relmatch::episodic::TrainLogRow]| {
            rows.iter().map(|r| r.total_loss).sum::<f64>() / rows.len() as f64
        };
        let (early, late) = (mean(&out.log[..n]), mean(&out.log[out.log.len() - n..]));
        if !(late < early) {
            return Err(format!("seed {seed}: loss did not decrease ({early:.4} -> {late:.4})"));
        }
        let trained = evaluate(&test_pool, &out.params, &full, 2000).unwrap().accuracy;
        let baseline_cfg = TrainConfig {
            metric: MetricKind::DIAGONAL,
            relation: RelationFlags::OFF,
            seed,
            ..TrainConfig::default()
        };
        let params = RelationParams::init(baseline_cfg.relation_config(16), seed).unwrap();
        let baseline = evaluate(&test_pool, &params, &baseline_cfg, 2000).unwrap().accuracy;
        gains.push(trained - baseline);
        lines.push(format!("seed {seed}: {baseline:.4} -> {trained:.4}"));
    }
    let gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let detail = format!("{}; mean gain {:.1} points", lines.join(", "), 100.0 * gain);
    if gain < 0.05 {
        return Err(detail);
    }
    within(start.elapsed(), 900)?;
    Ok(format!("{detail}, {:.1} s", start.elapsed().as_secs_f64()))
}

fn chance_level() -> Outcome {
    let spec = SynthSpec {
        sigma_b: 1e-9,
        sigma_w: 1.0,
        seed: 21,
        ..SynthSpec::default()
    };
    let store = generate(&spec).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        seed: 4,
        ..TrainConfig::default()
    };
    let params = RelationParams::init(cfg.relation_config(store.num_classes()), 4).unwrap();
    let acc = evaluate(&store, &params, &cfg, 2000).map_err(|e| e.to_string())?.accuracy;
    if (0.17..=0.23).contains(&acc) {
        Ok(format!("5-way accuracy {acc:.4} on random features"))
    } else {
        Err(format!("5-way accuracy {acc:.4} outside [0.17, 0.23]"))
    }
}

fn run_cli(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_relmatch"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(())
    } else {
        Err(format!(
            "relmatch {} failed: {}",
            args.join(" "),
            String::from_utf8_lossy(&out.stderr)
        ))
    }
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let p = |name: &str| dir.path().join(name);
    let s = |name: &str| p(name).to_str().unwrap().to_string();
    std::fs::write(
        p("spec.txt"),
        "num_classes = 12\nvideos_per_class = 8\nwarp = jitter\nwarp_magnitude = 2\nsigma_w = 0.8\nseed = 9\n",
    )
    .unwrap();
    std::fs::write(p("cfg.txt"), "train_episodes = 30\nchannels = 16\nheads = 2\nseed = 6\n").unwrap();

    let mut compared = 0;
    for run in 0..2 {
        let tag = |name: &str| s(&format!("{name}{run}"));
        run_cli(&["gen-synth", "--spec", &s("spec.txt"), "--out", &tag("train"), "--split-at", "7", "--test-out", &tag("test")])?;
        run_cli(&["train", "--config", &s("cfg.txt"), "--store", &tag("train"), "--out-params", &tag("params"), "--log", &tag("log.csv")])?;
        for workers in ["1", "4"] {
            let w = |name: &str| s(&format!("{name}{run}w{workers}"));
            run_cli(&[
                "bench-metrics", "--store", &tag("test"), "--way", "5", "--shot", "1",
                "--metrics", "diagonal,plain-dtw,bi-mhm", "--episodes", "200", "--seed", "3",
                "--out", &w("bench.csv"), "--workers", workers,
            ])?;
            run_cli(&[
                "eval", "--config", &s("cfg.txt"), "--store", &tag("test"), "--params", &tag("params"),
                "--episodes", "200", "--out", &w("eval.csv"), "--workers", workers,
            ])?;
        }
    }
    let mut same = |a: String, b: String| -> Result<(), String> {
        compared += 1;
        if read(&p(&a)) == read(&p(&b)) {
            Ok(())
        } else {
            Err(format!("{a} and {b} differ"))
        }
    };
    for name in ["train", "test", "params", "log.csv"] {
        same(format!("{name}0"), format!("{name}1"))?;
    }
    for name in ["bench.csv", "eval.csv"] {
        for (a, b) in [("0w1", "0w4"), ("0w1", "1w1"), ("0w4", "1w4")] {
            same(format!("{name}{a}"), format!("{name}{b}"))?;
        }
    }
    Ok(format!("{compared} output pairs byte-identical across reruns and 1 vs 4 workers"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("oracle equivalence", oracle_equivalence),
        ("metric property suite", metric_properties),
        ("gradient checks", gradient_checks),
        ("zero-weight identity", zero_weight_identity),
        ("misalignment robustness", misalignment_robustness),
        ("ablation direction", ablation_direction),
        ("chance-level calibration", chance_level),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        match check() {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
