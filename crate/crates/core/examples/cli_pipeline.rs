//! Drives the command-line front end end to end in a temporary directory:
//! generate split stores, benchmark metrics, train, then evaluate.
//!
//! ```text
//! cargo run --release --example cli_pipeline
//! ```

use relmatch::cli::config::render_train_config;
use relmatch::cli::run;
use relmatch::episodic::TrainConfig;

fn main() {
    let dir = std::env::temp_dir().join(format!("relmatch-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("temporary directory");
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();

    std::fs::write(
        path("spec.txt"),
        "# 16 train + 8 test classes, shifted by up to 4 frames\n\
         num_classes = 24\nwarp = cyclic-shift\nwarp_magnitude = 4\nsigma_w = 1.0\nseed = 5\n",
    )
    .expect("write spec");
    let cfg = TrainConfig {
        train_episodes: 500,
        ..TrainConfig::default()
    };
    std::fs::write(path("train.cfg"), render_train_config(&cfg)).expect("write config");

    let steps: Vec<Vec<String>> = vec![
        vec!["gen-synth", "--spec", &path("spec.txt"), "--out", &path("train.bin"), "--split-at", "16", "--test-out", &path("test.bin")],
        vec!["bench-metrics", "--store", &path("test.bin"), "--way", "5", "--shot", "1", "--metrics", "diagonal,plain-dtw,bi-mhm", "--episodes", "500", "--seed", "1", "--out", &path("bench.csv")],
        vec!["train", "--config", &path("train.cfg"), "--store", &path("train.bin"), "--out-params", &path("params.bin"), "--log", &path("log.csv"), "--test-store", &path("test.bin")],
        vec!["eval", "--config", &path("train.cfg"), "--store", &path("test.bin"), "--params", &path("params.bin"), "--episodes", "500", "--out", &path("eval.csv"), "--train-store", &path("train.bin")],
    ]
    .into_iter()
    .map(|s| s.into_iter().map(String::from).collect())
    .collect();

    for step in steps {
        println!("$ relmatch {}", step[0]);
        let code = run(std::iter::once("relmatch".to_string()).chain(step));
        if code != 0 {
            eprintln!("step failed with exit code {code}");
            std::process::exit(code);
        }
    }
    for csv in ["bench.csv", "eval.csv"] {
        println!("--- {csv}");
        print!("{}", std::fs::read_to_string(path(csv)).unwrap_or_default());
    }
    let _ = std::fs::remove_dir_all(&dir);
}
