//! Flat `key = value` configuration files. `#` starts a comment; blank lines
//! are ignored; every key may appear at most once and unknown keys are
//! rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::data::{SynthSpec, WarpMode};
use crate::episodic::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricKind;
use crate::relation::{IntraKind, PoolMode, RelationFlags};

/// Parsed entries with the line each came from.
struct Entries {
    values: BTreeMap<String, (String, usize)>,
    source: String,
}

impl Entries {
    fn parse(text: &str, source: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{source}:{}: expected `key = value`, got {raw:?}",
                    i + 1
                )));
            };
            let (k, v) = (k.trim(), v.trim());
            if values.insert(k.to_string(), (v.to_string(), i + 1)).is_some() {
                return Err(Error::Config(format!("{source}:{}: duplicate key {k:?}", i + 1)));
            }
        }
        Ok(Self {
            values,
            source: source.to_string(),
        })
    }

    /// Applies `key` if present.
    fn take<T: FromStr>(&mut self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: std::fmt::Display,
    {
        if let Some((v, line)) = self.values.remove(key) {
            *slot = v.parse().map_err(|e| {
                Error::Config(format!("{}:{line}: bad value {v:?} for {key}: {e}", self.source))
            })?;
        }
        Ok(())
    }

    fn finish(self, known: &[&str]) -> Result<()> {
        if let Some((k, (_, line))) = self.values.into_iter().next() {
            return Err(Error::Config(format!(
                "{}:{line}: unknown key {k:?} (known keys: {})",
                self.source,
                known.join(", ")
            )));
        }
        Ok(())
    }
}

fn pool_mode_name(m: PoolMode) -> &'static str {
    match m {
        PoolMode::SupportAndQuery => "support-and-query",
        PoolMode::SupportOnly => "support-only",
    }
}

struct PoolModeArg(PoolMode);

impl FromStr for PoolModeArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "support-and-query" => Ok(Self(PoolMode::SupportAndQuery)),
            "support-only" => Ok(Self(PoolMode::SupportOnly)),
            _ => Err("expected support-and-query or support-only".into()),
        }
    }
}

pub const TRAIN_KEYS: [&str; 20] = [
    "way",
    "shot",
    "queries",
    "frames",
    "channels",
    "metric",
    "intra_relation",
    "inter_relation",
    "pool_mode",
    "intra_kind",
    "heads",
    "learning_rate",
    "beta1",
    "beta2",
    "epsilon",
    "lambda",
    "train_episodes",
    "eval_episodes",
    "temperature",
    "seed",
];

/// Parses a training configuration; missing keys keep their defaults.
pub fn parse_train_config(text: &str, source: &str) -> Result<TrainConfig> {
    let mut e = Entries::parse(text, source)?;
    let mut c = TrainConfig::default();
    e.take("way", &mut c.way)?;
    e.take("shot", &mut c.shot)?;
    e.take("queries", &mut c.queries)?;
    e.take("frames", &mut c.frames)?;
    e.take("channels", &mut c.channels)?;
    e.take::<MetricKind>("metric", &mut c.metric)?;
    e.take("intra_relation", &mut c.relation.intra)?;
    e.take("inter_relation", &mut c.relation.inter)?;
    let mut mode = PoolModeArg(c.pool_mode);
    e.take("pool_mode", &mut mode)?;
    c.pool_mode = mode.0;
    e.take::<IntraKind>("intra_kind", &mut c.intra)?;
    e.take("heads", &mut c.heads)?;
    e.take("learning_rate", &mut c.learning_rate)?;
    e.take("beta1", &mut c.beta1)?;
    e.take("beta2", &mut c.beta2)?;
    e.take("epsilon", &mut c.epsilon)?;
    e.take("lambda", &mut c.lambda)?;
    e.take("train_episodes", &mut c.train_episodes)?;
    e.take("eval_episodes", &mut c.eval_episodes)?;
    e.take("temperature", &mut c.temperature)?;
    e.take("seed", &mut c.seed)?;
    e.finish(&TRAIN_KEYS)?;
    Ok(c)
}

/// Writes every key of `c`; parsing the result gives `c` back.
pub fn render_train_config(c: &TrainConfig) -> String {
    let RelationFlags { intra, inter } = c.relation;
    let mut s = String::new();
    let _ = writeln!(s, "way = {}", c.way);
    let _ = writeln!(s, "shot = {}", c.shot);
    let _ = writeln!(s, "queries = {}", c.queries);
    let _ = writeln!(s, "frames = {}", c.frames);
    let _ = writeln!(s, "channels = {}", c.channels);
    let _ = writeln!(s, "metric = {}", c.metric);
    let _ = writeln!(s, "intra_relation = {intra}");
    let _ = writeln!(s, "inter_relation = {inter}");
    let _ = writeln!(s, "pool_mode = {}", pool_mode_name(c.pool_mode));
    let _ = writeln!(s, "intra_kind = {}", c.intra);
    let _ = writeln!(s, "heads = {}", c.heads);
    let _ = writeln!(s, "learning_rate = {:?}", c.learning_rate);
    let _ = writeln!(s, "beta1 = {:?}", c.beta1);
    let _ = writeln!(s, "beta2 = {:?}", c.beta2);
    let _ = writeln!(s, "epsilon = {:?}", c.epsilon);
    let _ = writeln!(s, "lambda = {:?}", c.lambda);
    let _ = writeln!(s, "train_episodes = {}", c.train_episodes);
    let _ = writeln!(s, "eval_episodes = {}", c.eval_episodes);
    let _ = writeln!(s, "temperature = {:?}", c.temperature);
    let _ = writeln!(s, "seed = {}", c.seed);
    s
}

pub const SYNTH_KEYS: [&str; 10] = [
    "num_classes",
    "videos_per_class",
    "frames",
    "channels",
    "sigma_w",
    "sigma_b",
    "signature_gain",
    "warp",
    "warp_magnitude",
    "seed",
];

pub fn parse_synth_spec(text: &str, source: &str) -> Result<SynthSpec> {
    let mut e = Entries::parse(text, source)?;
    let mut s = SynthSpec::default();
    e.take("num_classes", &mut s.num_classes)?;
    e.take("videos_per_class", &mut s.videos_per_class)?;
    e.take("frames", &mut s.frames)?;
    e.take("channels", &mut s.channels)?;
    e.take("sigma_w", &mut s.sigma_w)?;
    e.take("sigma_b", &mut s.sigma_b)?;
    e.take("signature_gain", &mut s.signature_gain)?;
    e.take::<WarpMode>("warp", &mut s.warp)?;
    e.take("warp_magnitude", &mut s.warp_magnitude)?;
    e.take("seed", &mut s.seed)?;
    e.finish(&SYNTH_KEYS)?;
    Ok(s)
}

pub fn render_synth_spec(s: &SynthSpec) -> String {
    format!(
        "num_classes = {}\nvideos_per_class = {}\nframes = {}\nchannels = {}\n\
         sigma_w = {:?}\nsigma_b = {:?}\nsignature_gain = {:?}\nwarp = {}\n\
         warp_magnitude = {}\nseed = {}\n",
        s.num_classes,
        s.videos_per_class,
        s.frames,
        s.channels,
        s.sigma_w,
        s.sigma_b,
        s.signature_gain,
        s.warp,
        s.warp_magnitude,
        s.seed
    )
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}
