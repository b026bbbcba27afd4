//! The `relmatch` command line.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and data errors. All output files are written once, at the end.

pub mod config;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::data::{gap_centroid_accuracy, generate, FeatureStore};
use crate::episodic::{evaluate_with_workers, train, TrainConfig};
use crate::error::{Error, Result};
use crate::gradcheck::{run_suite, DEFAULT_TOLERANCE};
use crate::metrics::MetricKind;
use crate::relation::{RelationFlags, RelationParams};

use self::config::{parse_synth_spec, parse_train_config, read_text};

#[derive(Parser, Debug)]
#[command(name = "relmatch", version, about = "Few-shot video matching with relation-enhanced set metrics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic feature store from a spec file.
    GenSynth(GenSynthArgs),
    /// Compare metrics on raw features over one shared episode stream.
    BenchMetrics(BenchArgs),
    /// Run the finite-difference gradient suite.
    GradCheck(GradCheckArgs),
    /// Meta-train the relation module.
    Train(TrainArgs),
    /// Evaluate on held-out classes.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenSynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Keep the first N classes in --out and write the rest to --test-out.
    #[arg(long, requires = "test_out")]
    split_at: Option<usize>,
    #[arg(long, requires = "split_at")]
    test_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    way: usize,
    #[arg(long)]
    shot: usize,
    /// Comma-separated metric names.
    #[arg(long)]
    metrics: String,
    #[arg(long)]
    episodes: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    queries: usize,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args, Debug)]
struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
    tolerance: f64,
    /// Tie-free random points per component.
    #[arg(long, default_value_t = 100)]
    points: usize,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    out_params: PathBuf,
    #[arg(long)]
    log: PathBuf,
    /// Meta-test store; refused if it shares any class with --store.
    #[arg(long)]
    test_store: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    store: PathBuf,
    /// Trained checkpoint; without it the untrained initialisation is used.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Overrides `eval_episodes` from the config.
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Meta-training store; refused if it shares any class with --store.
    #[arg(long)]
    train_store: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Per-episode accuracies (`episode_index,accuracy`).
    #[arg(long)]
    episode_log: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Messages go to stdout, errors to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenSynth(a) => gen_synth(a),
        Command::BenchMetrics(a) => bench_metrics(a),
        Command::GradCheck(a) => grad_check(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn gen_synth(a: GenSynthArgs) -> Result<()> {
    let source = a.spec.display().to_string();
    let spec = parse_synth_spec(&read_text(&a.spec)?, &source)?;
    let store = generate(&spec)?;
    let check = gap_centroid_accuracy(&store).ok();
    match (a.split_at, &a.test_out) {
        (Some(n), Some(test_out)) => {
            let (train, test) = store.split_classes(n)?;
            train.write(&a.out)?;
            test.write(test_out)?;
            println!(
                "wrote {} videos to {} and {} videos to {}",
                train.len(),
                a.out.display(),
                test.len(),
                test_out.display()
            );
        }
        _ => {
            store.write(&a.out)?;
            println!("wrote {} videos to {}", store.len(), a.out.display());
        }
    }
    if let Some(acc) = check {
        println!("nearest-centroid accuracy on pooled features: {acc:.4}");
    }
    Ok(())
}

/// Frame count shared by every video of the store.
fn uniform_shape(store: &FeatureStore) -> Result<(usize, usize)> {
    let first = store
        .videos()
        .first()
        .ok_or_else(|| Error::Domain("the store is empty".into()))?;
    let (t, c) = (first.frames(), first.channels());
    if let Some((i, v)) = store.videos().iter().enumerate().find(|(_, v)| v.frames() != t) {
        return Err(Error::Domain(format!(
            "video {i} has {} frames but video 0 has {t}",
            v.frames()
        )));
    }
    Ok((t, c))
}

fn bench_metrics(a: BenchArgs) -> Result<()> {
    let metrics: Vec<MetricKind> = a
        .metrics
        .split(',')
        .map(|s| s.trim().parse())
        .collect::<Result<_>>()?;
    let store = FeatureStore::read(&a.store)?;
    let (frames, channels) = uniform_shape(&store)?;
    let mut csv = String::from("metric,way,shot,episodes,accuracy,ci95\n");
    for metric in metrics {
        let cfg = TrainConfig {
            way: a.way,
            shot: a.shot,
            queries: a.queries,
            frames,
            channels,
            metric,
            relation: RelationFlags::OFF,
            heads: 1,
            seed: a.seed,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        let params = RelationParams::zeros(cfg.relation_config(1))?;
        let e = evaluate_with_workers(&store, &params, &cfg, a.episodes, a.workers)?;
        println!("{metric}: {:.4} +- {:.4}", e.accuracy, e.ci95);
        let _ = writeln!(csv, "{metric},{},{},{},{},{}", a.way, a.shot, a.episodes, e.accuracy, e.ci95);
    }
    write_file(&a.out, &csv)
}

fn grad_check(a: GradCheckArgs) -> Result<()> {
    if !(a.tolerance > 0.0) {
        return Err(Error::Config(format!("tolerance must be positive, got {}", a.tolerance)));
    }
    let report = run_suite(a.seed, a.points)?;
    let mut failed = Vec::new();
    for r in &report {
        let ok = r.worst < a.tolerance;
        println!("{:<24} {:e} {}", r.component, r.worst, if ok { "ok" } else { "FAIL" });
        if !ok {
            failed.push(r.component.clone());
        }
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "gradient error above {:e} in: {}",
            a.tolerance,
            failed.join(", ")
        )))
    }
}

fn refuse_overlap(a: &FeatureStore, b: &FeatureStore) -> Result<()> {
    let shared = a.shared_classes(b);
    if shared.is_empty() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "meta-train and meta-test stores share {} classes: {}",
            shared.len(),
            shared.join(", ")
        )))
    }
}

fn load_config(path: &Path) -> Result<TrainConfig> {
    let cfg = parse_train_config(&read_text(path)?, &path.display().to_string())?;
    cfg.validate()?;
    Ok(cfg)
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let store = FeatureStore::read(&a.store)?;
    if let Some(test) = &a.test_store {
        refuse_overlap(&store, &FeatureStore::read(test)?)?;
    }
    let out = train(&store, &cfg)?;
    let mut csv = String::from("episode_index,episodic_loss,reg_loss,total_loss\n");
    for r in &out.log {
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            r.episode_index, r.episodic_loss, r.reg_loss, r.total_loss
        );
    }
    out.params.save(&a.out_params)?;
    write_file(&a.log, &csv)?;
    if let (Some(first), Some(last)) = (out.log.first(), out.log.last()) {
        println!(
            "trained {} episodes; total loss {:.4} -> {:.4}",
            out.log.len(),
            first.total_loss,
            last.total_loss
        );
    }
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let cfg = load_config(&a.config)?;
    let store = FeatureStore::read(&a.store)?;
    if let Some(train) = &a.train_store {
        refuse_overlap(&FeatureStore::read(train)?, &store)?;
    }
    let params = match &a.params {
        Some(p) => RelationParams::load(p)?,
        None => RelationParams::init(cfg.relation_config(1), cfg.seed)?,
    };
    let episodes = a.episodes.unwrap_or(cfg.eval_episodes);
    let e = evaluate_with_workers(&store, &params, &cfg, episodes, a.workers)?;
    println!("accuracy {:.4} +- {:.4} over {episodes} episodes", e.accuracy, e.ci95);
    let csv = format!(
        "way,shot,episodes,accuracy,ci95\n{},{},{},{},{}\n",
        cfg.way, cfg.shot, episodes, e.accuracy, e.ci95
    );
    if let Some(path) = &a.episode_log {
        let mut log = String::from("episode_index,accuracy\n");
        for (i, acc) in e.per_episode.iter().enumerate() {
            let _ = writeln!(log, "{i},{acc}");
        }
        write_file(path, &log)?;
    }
    write_file(&a.out, &csv)
}
