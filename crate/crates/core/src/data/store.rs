use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STORE_MAGIC: &[u8; 8] = b"HRSMFEAT";
pub const STORE_VERSION: u32 = 1;

/// One video: `T x C` frame features and its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub features: Tensor,
    pub label: usize,
}

impl FrameSequence {
    pub fn new(features: Tensor, label: usize) -> Result<Self> {
        if features.ndim() != 2 {
            return Err(Error::Domain(format!(
                "a frame sequence is T x C, got shape {:?}",
                features.shape()
            )));
        }
        Ok(Self { features, label })
    }

    pub fn frames(&self) -> usize {
        self.features.rows()
    }

    pub fn channels(&self) -> usize {
        self.features.cols()
    }
}

/// A labelled collection of frame sequences with a uniform channel count.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    videos: Vec<FrameSequence>,
    class_names: Vec<String>,
    provenance: String,
}

impl FeatureStore {
    pub fn new(
        videos: Vec<FrameSequence>,
        class_names: Vec<String>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        if let Some(first) = videos.first() {
            let c = first.channels();
            for (i, v) in videos.iter().enumerate() {
                if v.channels() != c {
                    return Err(Error::Domain(format!(
                        "video {i} has {} channels, store uses {c}",
                        v.channels()
                    )));
                }
                if v.label >= class_names.len() {
                    return Err(Error::Domain(format!(
                        "video {i} has label {} but only {} class names",
                        v.label,
                        class_names.len()
                    )));
                }
            }
        }
        Ok(Self {
            videos,
            class_names,
            provenance: provenance.into(),
        })
    }

    pub fn videos(&self) -> &[FrameSequence] {
        &self.videos
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn channels(&self) -> Option<usize> {
        self.videos.first().map(FrameSequence::channels)
    }

    /// Video indices grouped by label, in store order.
    pub fn by_class(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.class_names.len()];
        for (i, v) in self.videos.iter().enumerate() {
            out[v.label].push(i);
        }
        out
    }

    /// Splits into the first `n` classes and the remaining ones; labels in
    /// the second store are renumbered from zero.
    pub fn split_classes(&self, n: usize) -> Result<(FeatureStore, FeatureStore)> {
        if n == 0 || n >= self.num_classes() {
            return Err(Error::Config(format!(
                "cannot split {} classes at {n}",
                self.num_classes()
            )));
        }
        let (head, tail): (Vec<_>, Vec<_>) =
            self.videos.iter().cloned().partition(|v| v.label < n);
        let tail = tail
            .into_iter()
            .map(|mut v| {
                v.label -= n;
                v
            })
            .collect();
        Ok((
            FeatureStore::new(
                head,
                self.class_names[..n].to_vec(),
                format!("{} [classes 0..{n}]", self.provenance),
            )?,
            FeatureStore::new(
                tail,
                self.class_names[n..].to_vec(),
                format!("{} [classes {n}..{}]", self.provenance, self.num_classes()),
            )?,
        ))
    }

    /// Class names present in both stores, sorted.
    pub fn shared_classes(&self, other: &FeatureStore) -> Vec<String> {
        let mine: BTreeSet<&String> = self.class_names.iter().collect();
        let theirs: BTreeSet<&String> = other.class_names.iter().collect();
        mine.intersection(&theirs).map(|s| s.to_string()).collect()
    }

    /// Feature file bytes. Values are stored as `f32`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(STORE_MAGIC);
        out.extend_from_slice(&STORE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.videos.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.channels().unwrap_or(0) as u32).to_le_bytes());
        for v in &self.videos {
            out.extend_from_slice(&(v.label as u32).to_le_bytes());
            out.extend_from_slice(&(v.frames() as u32).to_le_bytes());
            for &x in v.features.data() {
                out.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses feature file bytes. `class_names` may be `None`, in which case
    /// names `class_000`, `class_001`, ... are generated.
    pub fn from_bytes(
        bytes: &[u8],
        class_names: Option<Vec<String>>,
        provenance: impl Into<String>,
    ) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(STORE_MAGIC, "HRSMFEAT")?;
        r.version(STORE_VERSION)?;
        let count = r.u32()? as usize;
        let channels = r.u32()? as usize;
        if count > 0 && channels == 0 {
            return Err(Error::Malformed {
                offset: 16,
                reason: "zero channels".into(),
            });
        }
        let mut videos = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let label = r.u32()? as usize;
            let at = r.offset();
            let frames = r.u32()? as usize;
            if frames == 0 {
                return Err(Error::Malformed {
                    offset: at,
                    reason: "video with zero frames".into(),
                });
            }
            let values = r.f32s(frames * channels)?;
            videos.push(FrameSequence {
                features: Tensor::from_parts(vec![frames, channels], values),
                label,
            });
        }
        if !r.is_at_end() {
            return Err(Error::Malformed {
                offset: r.offset(),
                reason: "trailing bytes after last video".into(),
            });
        }
        let names = match class_names {
            Some(n) => n,
            None => {
                let k = videos.iter().map(|v| v.label + 1).max().unwrap_or(0);
                default_class_names(k)
            }
        };
        FeatureStore::new(videos, names, provenance)
    }

    /// Writes the feature file and its adjacent class-name file.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))?;
        let names_path = class_names_path(path);
        let mut text = self.class_names.join("\n");
        text.push('\n');
        std::fs::write(&names_path, text).map_err(|e| Error::io(names_path, e))
    }

    /// Reads a feature file and, when present, its class-name file.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let names_path = class_names_path(path);
        let names = match std::fs::read_to_string(&names_path) {
            Ok(text) => Some(text.lines().map(str::to_string).collect()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => None,
            Err(e) => return Err(Error::io(names_path, e)),
        };
        Self::from_bytes(&bytes, names, path.display().to_string())
    }
}

pub fn default_class_names(n: usize) -> Vec<String> {
    (0..n).map(|k| format!("class_{k:03}")).collect()
}

/// `features.bin` -> `features.bin.classes`.
pub fn class_names_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".classes");
    PathBuf::from(s)
}

/// Little-endian cursor that reports byte offsets in its errors.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> usize {
        self.pos
    }

    pub(crate) fn is_at_end(&self) -> bool {
        self.pos == self.bytes.len()
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn magic(&mut self, expected: &[u8; 8], label: &'static str) -> Result<()> {
        let at = self.pos;
        let got = self.take(8).map_err(|_| Error::BadMagic {
            offset: at,
            expected: label,
        })?;
        if got != expected {
            return Err(Error::BadMagic {
                offset: at,
                expected: label,
            });
        }
        Ok(())
    }

    pub(crate) fn version(&mut self, expected: u32) -> Result<()> {
        let at = self.pos;
        let found = self.u32()?;
        if found != expected {
            return Err(Error::VersionMismatch {
                offset: at,
                found,
                expected,
            });
        }
        Ok(())
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(8).ok_or_else(|| self.overflow())?)?;
        Ok(b.chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    pub(crate) fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        let b = self.take(n.checked_mul(4).ok_or_else(|| self.overflow())?)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect())
    }

    fn overflow(&self) -> Error {
        Error::Malformed {
            offset: self.pos,
            reason: "length overflows".into(),
        }
    }
}
