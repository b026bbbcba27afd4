use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relmatch::data::FeatureStore;
use tempfile::TempDir;

fn relmatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relmatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        self.path(name).to_str().unwrap().to_string()
    }

    fn write(&self, name: &str, text: &str) -> String {
        std::fs::write(self.path(name), text).unwrap();
        self.arg(name)
    }

    fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.path(name)).unwrap()
    }

    fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap()
    }

    /// Generates a split synthetic pool into `train` and `test`.
    fn pools(&self) {
        let spec = self.write(
            "spec.txt",
            "num_classes = 12\nvideos_per_class = 8\nwarp = cyclic-shift\nwarp_magnitude = 2\nseed = 4\n",
        );
        let out = relmatch(&[
            "gen-synth", "--spec", &spec, "--out", &self.arg("train"), "--split-at", "7",
            "--test-out", &self.arg("test"),
        ]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
}

fn ok(out: &Output) {
    assert_eq!(code(out), 0, "{}", stderr(out));
}

#[test]
fn gen_synth_is_readable_and_deterministic() {
    let ws = Workspace::new();
    let spec = ws.write("spec.txt", "num_classes = 3\nvideos_per_class = 2\nframes = 4\nchannels = 3\n");
    for out in ["a", "b"] {
        ok(&relmatch(&["gen-synth", "--spec", &spec, "--out", &ws.arg(out)]));
    }
    assert_eq!(ws.read("a"), ws.read("b"));
    let store = FeatureStore::read(ws.path("a")).unwrap();
    assert_eq!(store.len(), 6);
    assert_eq!(store.channels(), Some(3));
    assert_eq!(store.class_names()[2], "class_002");
}

#[test]
fn sixteen_class_default_spec_is_learnable() {
    let ws = Workspace::new();
    let spec = ws.write("spec.txt", "num_classes = 16\nsigma_w = 0.25\nsigma_b = 1.0\n");
    let out = relmatch(&["gen-synth", "--spec", &spec, "--out", &ws.arg("s")]);
    ok(&out);
    let store = FeatureStore::read(ws.path("s")).unwrap();
    let acc = relmatch::data::gap_centroid_accuracy(&store).unwrap();
    assert!(acc > 0.9, "{acc}");
}

#[test]
fn bad_spec_and_missing_files_use_distinct_exit_codes() {
    let ws = Workspace::new();
    let spec = ws.write("spec.txt", "num_classes = 3\nsigma_w = -1\n");
    let out = relmatch(&["gen-synth", "--spec", &spec, "--out", &ws.arg("s")]);
    assert_eq!(code(&out), 1, "{}", stderr(&out));
    let typo = ws.write("typo.txt", "num_clases = 3\n");
    let out = relmatch(&["gen-synth", "--spec", &typo, "--out", &ws.arg("s")]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("num_clases"), "{}", stderr(&out));

    let out = relmatch(&["gen-synth", "--spec", &ws.arg("nope.txt"), "--out", &ws.arg("s")]);
    assert_eq!(code(&out), 2);

    std::fs::write(ws.path("junk"), b"NOTASTOREATALL").unwrap();
    let cfg = ws.write("cfg.txt", "");
    let out = relmatch(&["eval", "--config", &cfg, "--store", &ws.arg("junk"), "--out", &ws.arg("o")]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("offset 0"), "{}", stderr(&out));
    assert!(!ws.path("o").exists());
}

#[test]
fn unknown_flags_and_commands_are_usage_errors() {
    assert_eq!(code(&relmatch(&["train", "--bogus"])), 1);
    assert_eq!(code(&relmatch(&["dance"])), 1);
    assert_eq!(code(&relmatch(&[])), 1);
    assert_eq!(code(&relmatch(&["--help"])), 0);
    assert_eq!(code(&relmatch(&["eval", "--help"])), 0);
}

#[test]
fn bench_metrics_csv_and_unknown_metric() {
    let ws = Workspace::new();
    ws.pools();
    let run = |out: &str| {
        relmatch(&[
            "bench-metrics", "--store", &ws.arg("test"), "--way", "3", "--shot", "2",
            "--metrics", "diagonal,bi-mhm,hausdorff:forward", "--episodes", "40", "--seed", "8",
            "--out", &ws.arg(out),
        ])
    };
    ok(&run("a.csv"));
    ok(&run("b.csv"));
    assert_eq!(ws.read("a.csv"), ws.read("b.csv"));
    let text = ws.text("a.csv");
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "metric,way,shot,episodes,accuracy,ci95");
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("diagonal,3,2,40,"));
    assert!(lines[3].starts_with("hausdorff:forward,3,2,40,"));

    let out = relmatch(&[
        "bench-metrics", "--store", &ws.arg("test"), "--way", "3", "--shot", "1",
        "--metrics", "diagonal,euclid", "--episodes", "5", "--seed", "1", "--out", &ws.arg("c.csv"),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("euclid") && err.contains("bi-mhm") && err.contains("plain-dtw"), "{err}");
    assert!(!ws.path("c.csv").exists());
}

#[test]
fn single_episode_on_a_forced_pool_scores_zero_or_one() {
    let ws = Workspace::new();
    let spec = ws.write("spec.txt", "num_classes = 5\nvideos_per_class = 2\nseed = 2\n");
    ok(&relmatch(&["gen-synth", "--spec", &spec, "--out", &ws.arg("s")]));
    for metric in ["diagonal", "plain-dtw", "bi-mhm"] {
        let out = relmatch(&[
            "bench-metrics", "--store", &ws.arg("s"), "--way", "5", "--shot", "1", "--queries", "1",
            "--metrics", metric, "--episodes", "1", "--seed", "0", "--out", &ws.arg("o.csv"),
        ]);
        ok(&out);
        let text = ws.text("o.csv");
        let acc: f64 = text.lines().nth(1).unwrap().split(',').nth(4).unwrap().parse().unwrap();
        assert!(acc == 0.0 || acc == 1.0, "{metric}: {acc}");
    }
}

#[test]
fn grad_check_passes_fails_and_repeats() {
    let run = |tol: &str| relmatch(&["grad-check", "--seed", "5", "--tolerance", tol, "--points", "3"]);
    let a = run("1e-4");
    ok(&a);
    let b = run("1e-4");
    assert_eq!(a.stdout, b.stdout);
    let report = String::from_utf8_lossy(&a.stdout);
    for component in ["matmul", "dtw", "relation msa", "bi_mhm", "episode loss"] {
        assert!(report.contains(component), "{report}");
    }

    let strict = run("1e-12");
    assert_eq!(code(&strict), 2);
    assert!(stderr(&strict).contains("episode loss"), "{}", stderr(&strict));
}

fn train_and_eval(ws: &Workspace, cfg: &str, tag: &str, workers: &str) {
    let out = relmatch(&[
        "train", "--config", cfg, "--store", &ws.arg("train"), "--out-params", &ws.arg(&format!("p{tag}")),
        "--log", &ws.arg(&format!("log{tag}.csv")), "--test-store", &ws.arg("test"),
    ]);
    ok(&out);
    let out = relmatch(&[
        "eval", "--config", cfg, "--store", &ws.arg("test"), "--params", &ws.arg(&format!("p{tag}")),
        "--episodes", "60", "--out", &ws.arg(&format!("eval{tag}.csv")), "--train-store", &ws.arg("train"),
        "--workers", workers, "--episode-log", &ws.arg(&format!("ep{tag}.csv")),
    ]);
    ok(&out);
}

#[test]
fn train_and_eval_are_deterministic() {
    let ws = Workspace::new();
    ws.pools();
    let cfg = ws.write("cfg.txt", "# small run\ntrain_episodes = 20\nheads = 2\nseed = 3\n");
    train_and_eval(&ws, &cfg, "a", "1");
    train_and_eval(&ws, &cfg, "b", "3");
    for name in ["p", "log", "eval", "ep"] {
        let ext = if name == "p" { "" } else { ".csv" };
        assert_eq!(ws.read(&format!("{name}a{ext}")), ws.read(&format!("{name}b{ext}")), "{name}");
    }
    let log = ws.text("loga.csv");
    assert!(log.starts_with("episode_index,episodic_loss,reg_loss,total_loss\n"));
    assert_eq!(log.lines().count(), 21);
    let eval = ws.text("evala.csv");
    assert!(eval.starts_with("way,shot,episodes,accuracy,ci95\n5,1,60,"), "{eval}");
    let ep = ws.text("epa.csv");
    assert!(ep.starts_with("episode_index,accuracy\n0,"));
    assert_eq!(ep.lines().count(), 61);
}

#[test]
fn zero_learning_rate_leaves_eval_unchanged() {
    let ws = Workspace::new();
    ws.pools();
    let cfg = ws.write("cfg.txt", "learning_rate = 0\ntrain_episodes = 5\nseed = 12\n");
    ok(&relmatch(&[
        "train", "--config", &cfg, "--store", &ws.arg("train"), "--out-params", &ws.arg("p"),
        "--log", &ws.arg("log.csv"),
    ]));
    let eval = |params: Option<&str>, out: &str| {
        let mut args = vec!["eval", "--config", &cfg, "--store", "", "--episodes", "80", "--out", ""];
        let (store, o) = (ws.arg("test"), ws.arg(out));
        args[4] = &store;
        args[8] = &o;
        let p;
        if let Some(name) = params {
            p = ws.arg(name);
            args.extend(["--params", &p]);
        }
        ok(&relmatch(&args));
    };
    eval(None, "before.csv");
    eval(Some("p"), "after.csv");
    assert_eq!(ws.read("before.csv"), ws.read("after.csv"));
}

#[test]
fn zero_queries_is_a_configuration_error() {
    let ws = Workspace::new();
    ws.pools();
    let cfg = ws.write("cfg.txt", "queries = 0\n");
    let out = relmatch(&["eval", "--config", &cfg, "--store", &ws.arg("test"), "--out", &ws.arg("o.csv")]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("queries"), "{}", stderr(&out));
}

#[test]
fn overlapping_stores_are_refused_with_names() {
    let ws = Workspace::new();
    ws.pools();
    let cfg = ws.write("cfg.txt", "train_episodes = 2\n");
    let out = relmatch(&[
        "eval", "--config", &cfg, "--store", &ws.arg("train"), "--out", &ws.arg("o.csv"),
        "--train-store", &ws.arg("train"),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("class_000") && err.contains("class_006"), "{err}");
    assert!(!Path::new(&ws.arg("o.csv")).exists());

    let out = relmatch(&[
        "train", "--config", &cfg, "--store", &ws.arg("test"), "--out-params", &ws.arg("p"),
        "--log", &ws.arg("l.csv"), "--test-store", &ws.arg("test"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!ws.path("p").exists());
}
