use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::{Tape, Tensor, Var};

pub const PARAMS_MAGIC: &[u8; 8] = b"HRSMPARM";
pub const PARAMS_VERSION: u32 = 1;

/// Which operator refines each sequence on its own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum IntraKind {
    Msa,
    TransformerBlock,
    BiLstm,
    BiGru,
}

impl fmt::Display for IntraKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            IntraKind::Msa => "msa",
            IntraKind::TransformerBlock => "transformer",
            IntraKind::BiLstm => "bilstm",
            IntraKind::BiGru => "bigru",
        })
    }
}

impl FromStr for IntraKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "msa" => Ok(IntraKind::Msa),
            "transformer" | "transformer-block" => Ok(IntraKind::TransformerBlock),
            "bilstm" | "bi-lstm" => Ok(IntraKind::BiLstm),
            "bigru" | "bi-gru" => Ok(IntraKind::BiGru),
            other => Err(Error::Config(format!(
                "unknown intra-relation kind {other:?} (msa, transformer, bilstm, bigru)"
            ))),
        }
    }
}

/// Shape hyperparameters of a [`RelationParams`] set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelationConfig {
    pub intra: IntraKind,
    pub channels: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    /// Output width of the auxiliary classifier over the training classes.
    pub num_classes: usize,
}

impl RelationConfig {
    /// `heads` only applies to the attention kinds; recurrent configs store 1.
    pub fn new(intra: IntraKind, channels: usize, heads: usize, num_classes: usize) -> Self {
        let attention = matches!(intra, IntraKind::Msa | IntraKind::TransformerBlock);
        Self {
            intra,
            channels,
            heads: if attention { heads } else { 1 },
            ffn_hidden: 2 * channels,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.heads == 0 || self.num_classes == 0 || self.ffn_hidden == 0 {
            return Err(Error::Config(format!("degenerate relation config {self:?}")));
        }
        if !self.channels.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "head count {} does not divide channel count {}",
                self.heads, self.channels
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.channels / self.heads
    }

    /// Every parameter name with its `(rows, cols)` shape. Biases are `1 x n`.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let c = self.channels;
        let mut out = Vec::new();
        let mut push = |name: String, r: usize, k: usize| out.push((name, r, k));
        match self.intra {
            IntraKind::Msa | IntraKind::TransformerBlock => {
                for h in 0..self.heads {
                    for w in ["wq", "wk", "wv"] {
                        push(format!("msa.head{h}.{w}"), c, self.head_dim());
                    }
                }
                push("msa.wo".into(), c, c);
                if self.intra == IntraKind::TransformerBlock {
                    push("ffn.w1".into(), c, self.ffn_hidden);
                    push("ffn.b1".into(), 1, self.ffn_hidden);
                    push("ffn.w2".into(), self.ffn_hidden, c);
                    push("ffn.b2".into(), 1, c);
                }
            }
            IntraKind::BiLstm => {
                for dir in ["fwd", "bwd"] {
                    for gate in ["f", "i", "c", "o"] {
                        push(format!("lstm.{dir}.{gate}.wh"), c, c);
                        push(format!("lstm.{dir}.{gate}.wx"), c, c);
                        push(format!("lstm.{dir}.{gate}.b"), 1, c);
                    }
                }
                push("lstm.merge.w".into(), c, c);
                push("lstm.merge.b".into(), 1, c);
            }
            IntraKind::BiGru => {
                for dir in ["fwd", "bwd"] {
                    for gate in ["z", "r", "h"] {
                        push(format!("gru.{dir}.{gate}.w"), c, c);
                        push(format!("gru.{dir}.{gate}.u"), c, c);
                        push(format!("gru.{dir}.{gate}.b"), 1, c);
                    }
                }
                push("gru.merge.w".into(), c, c);
                push("gru.merge.b".into(), 1, c);
            }
        }
        push("inter.pq".into(), c, c);
        push("inter.pk".into(), c, c);
        push("fuse.w".into(), 2 * c, c);
        push("fuse.b".into(), 1, c);
        push("head.w".into(), c, self.num_classes);
        out
    }

    /// Recovers the config from a set of parameter shapes.
    fn infer(tensors: &BTreeMap<String, Tensor>) -> Result<Self> {
        let missing = |n: &str| Error::Config(format!("parameter set lacks {n:?}"));
        let fuse = tensors.get("fuse.w").ok_or_else(|| missing("fuse.w"))?;
        let head = tensors.get("head.w").ok_or_else(|| missing("head.w"))?;
        let channels = fuse.cols();
        let has = |p: &str| tensors.keys().any(|k| k.starts_with(p));
        let intra = if has("lstm.") {
            IntraKind::BiLstm
        } else if has("gru.") {
            IntraKind::BiGru
        } else if has("ffn.") {
            IntraKind::TransformerBlock
        } else {
            IntraKind::Msa
        };
        let heads = tensors
            .keys()
            .filter(|k| k.starts_with("msa.head") && k.ends_with(".wq"))
            .count()
            .max(1);
        let ffn_hidden = tensors.get("ffn.w1").map_or(2 * channels, |t| t.cols());
        let cfg = Self {
            intra,
            channels,
            heads,
            ffn_hidden,
            num_classes: head.cols(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// FNV-1a hash of a parameter name.
fn name_key(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// All learnable weights, keyed by name.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationParams {
    config: RelationConfig,
    tensors: BTreeMap<String, Tensor>,
}

/// The parameters recorded as leaves on one tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub(crate) config: RelationConfig,
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    pub fn get(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("no parameter named {name:?} for {:?}", self.config.intra))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn config(&self) -> &RelationConfig {
        &self.config
    }
}

impl RelationParams {
    /// All-zero parameters.
    pub fn zeros(config: RelationConfig) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(n, r, c)| (n, Tensor::zeros(&[r, c])))
            .collect();
        Ok(Self { config, tensors })
    }

    /// Weights uniform in `±sqrt(6/(fan_in+fan_out))`, biases zero. Each
    /// tensor has its own random stream keyed by its name, so the size of
    /// one (say the classifier head) never shifts the values of another.
    pub fn init(config: RelationConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let tensors = config
            .layout()
            .into_iter()
            .map(|(n, r, c)| {
                let mut rng = stream_rng(seed, Stream::ParamInit, name_key(&n));
                let t = if r == 1 && is_bias(&n) {
                    Tensor::zeros(&[1, c])
                } else {
                    let limit = (6.0 / (r + c) as f64).sqrt();
                    let data = (0..r * c).map(|_| rng.gen_range(-limit..limit)).collect();
                    Tensor::from_parts(vec![r, c], data)
                };
                (n, t)
            })
            .collect();
        Ok(Self { config, tensors })
    }

    pub fn config(&self) -> &RelationConfig {
        &self.config
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    /// Replaces one parameter; the shape must match the existing one.
    pub fn set(&mut self, name: &str, value: Tensor) -> Result<()> {
        let slot = self
            .tensors
            .get_mut(name)
            .ok_or_else(|| Error::Config(format!("no parameter named {name:?}")))?;
        if slot.shape() != value.shape() {
            return Err(Error::dim("RelationParams::set", slot.shape(), value.shape()));
        }
        *slot = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.tensors.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(Tensor::len).sum()
    }

    pub fn register(&self, tape: &Tape) -> ParamVars {
        ParamVars {
            config: self.config,
            vars: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
                .collect(),
        }
    }

    /// Pairs `vars` (one per parameter, in [`iter`](Self::iter) order) with
    /// the parameter names. Lets callers record perturbed copies as leaves.
    pub fn bind(&self, vars: &[Var]) -> Result<ParamVars> {
        if vars.len() != self.tensors.len() {
            return Err(Error::dim("RelationParams::bind", &[self.tensors.len()], &[vars.len()]));
        }
        Ok(ParamVars {
            config: self.config,
            vars: self.tensors.keys().cloned().zip(vars.iter().copied()).collect(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        for (name, t) in &self.tensors {
            let (rows, cols) = (t.rows(), t.cols());
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = crate::data::ByteReader::new(bytes);
        r.magic(PARAMS_MAGIC, "HRSMPARM")?;
        r.version(PARAMS_VERSION)?;
        let mut tensors = BTreeMap::new();
        while !r.is_at_end() {
            let at = r.offset();
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::Malformed {
                offset: at + 4,
                reason: "parameter name is not UTF-8".into(),
            })?;
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            if rows == 0 || cols == 0 {
                return Err(Error::Malformed {
                    offset: at,
                    reason: format!("parameter {name:?} has an empty shape"),
                });
            }
            let values_at = r.offset();
            let data = r.f64s(rows * cols)?;
            if data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Malformed {
                    offset: values_at,
                    reason: format!("parameter {name:?} holds non-finite values"),
                });
            }
            if tensors
                .insert(name.clone(), Tensor::from_parts(vec![rows, cols], data))
                .is_some()
            {
                return Err(Error::Malformed {
                    offset: at,
                    reason: format!("duplicate parameter {name:?}"),
                });
            }
        }
        let config = RelationConfig::infer(&tensors)?;
        for (name, rows, cols) in config.layout() {
            match tensors.get(&name) {
                Some(t) if t.shape() == [rows, cols] => {}
                Some(t) => return Err(Error::dim("checkpoint", t.shape(), &[rows, cols])),
                None => return Err(Error::Config(format!("checkpoint lacks {name:?}"))),
            }
        }
        if tensors.len() != config.layout().len() {
            return Err(Error::Config("checkpoint holds unexpected parameters".into()));
        }
        Ok(Self { config, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with(".b") || name.ends_with(".b1") || name.ends_with(".b2")
}
