use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::store::{default_class_names, FeatureStore, FrameSequence};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, Stream};
use crate::tensor::Tensor;

/// How frames of each generated video are reordered.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum WarpMode {
    #[default]
    None,
    /// Rotate the frame order by a random offset in `0..=magnitude`.
    CyclicShift,
    /// Swap two non-overlapping blocks of `magnitude` frames.
    SegmentReorder,
    /// Sort frames by `t + u`, `u ~ U(-magnitude, magnitude)`.
    Jitter,
}

impl WarpMode {
    pub const NAMES: [&'static str; 4] = ["none", "cyclic-shift", "segment-reorder", "jitter"];
}

impl fmt::Display for WarpMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            WarpMode::None => 0,
            WarpMode::CyclicShift => 1,
            WarpMode::SegmentReorder => 2,
            WarpMode::Jitter => 3,
        };
        f.pad(Self::NAMES[i])
    }
}

impl FromStr for WarpMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(WarpMode::None),
            "cyclic-shift" => Ok(WarpMode::CyclicShift),
            "segment-reorder" => Ok(WarpMode::SegmentReorder),
            "jitter" => Ok(WarpMode::Jitter),
            _ => Err(Error::Config(format!(
                "unknown warp mode '{s}' (expected one of: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

/// Parameters of the synthetic feature generator.
///
/// Class `k` owns a center `c_k ~ N(0, sigma_b^2 I)` and one signature per
/// frame, `s_kt ~ N(0, (gain * sigma_b)^2 I)`. The class template is
/// `c_k + s_kt`; each video adds `N(0, sigma_w^2 I)` noise per frame and is
/// then warped. With a large gain, two frames of the same class at different
/// positions are nearly as far apart as frames of different classes, so a
/// frame-aligned metric suffers when videos are out of phase.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub videos_per_class: usize,
    pub frames: usize,
    pub channels: usize,
    pub sigma_w: f64,
    pub sigma_b: f64,
    pub signature_gain: f64,
    pub warp: WarpMode,
    pub warp_magnitude: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 24,
            videos_per_class: 20,
            frames: 8,
            channels: 16,
            sigma_w: 0.25,
            sigma_b: 1.0,
            signature_gain: 3.0,
            warp: WarpMode::None,
            warp_magnitude: 0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.num_classes == 0 || self.videos_per_class == 0 {
            return bad("num_classes and videos_per_class must be positive".into());
        }
        if self.frames == 0 || self.channels == 0 {
            return bad("frames and channels must be positive".into());
        }
        if !(self.sigma_w > 0.0 && self.sigma_w.is_finite()) {
            return bad(format!("sigma_w must be positive, got {}", self.sigma_w));
        }
        if !(self.sigma_b > 0.0 && self.sigma_b.is_finite()) {
            return bad(format!("sigma_b must be positive, got {}", self.sigma_b));
        }
        if !(self.signature_gain >= 0.0 && self.signature_gain.is_finite()) {
            return bad(format!("signature_gain must be >= 0, got {}", self.signature_gain));
        }
        if self.warp_magnitude >= self.frames {
            return bad(format!(
                "warp magnitude {} must be below the frame count {}",
                self.warp_magnitude, self.frames
            ));
        }
        Ok(())
    }

    fn provenance(&self) -> String {
        format!(
            "synthetic classes={} videos_per_class={} frames={} channels={} sigma_w={} sigma_b={} \
             signature_gain={} warp={} warp_magnitude={} seed={}",
            self.num_classes,
            self.videos_per_class,
            self.frames,
            self.channels,
            self.sigma_w,
            self.sigma_b,
            self.signature_gain,
            self.warp,
            self.warp_magnitude,
            self.seed
        )
    }
}

fn normal(rng: &mut impl Rng, scale: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    scale * z
}

/// Frame order after warping; `order[t]` is the template frame shown at `t`.
fn warp_order(spec: &SynthSpec, rng: &mut impl Rng) -> Vec<usize> {
    let t = spec.frames;
    let m = spec.warp_magnitude;
    let mut order: Vec<usize> = (0..t).collect();
    match spec.warp {
        WarpMode::None => {}
        WarpMode::CyclicShift => {
            let offset = rng.gen_range(0..=m);
            order.rotate_left(offset);
        }
        WarpMode::SegmentReorder => {
            let len = m.min(t / 2);
            if len > 0 {
                let a = rng.gen_range(0..=t - 2 * len);
                let b = rng.gen_range(a + len..=t - len);
                for k in 0..len {
                    order.swap(a + k, b + k);
                }
            }
        }
        WarpMode::Jitter => {
            if m > 0 {
                let m = m as f64;
                let keys: Vec<f64> = (0..t).map(|i| i as f64 + rng.gen_range(-m..=m)).collect();
                order.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
            }
        }
    }
    order
}

/// Generates a store; the same spec always yields the same bytes.
pub fn generate(spec: &SynthSpec) -> Result<FeatureStore> {
    spec.validate()?;
    let (t, c) = (spec.frames, spec.channels);
    let mut videos = Vec::with_capacity(spec.num_classes * spec.videos_per_class);
    for k in 0..spec.num_classes {
        let mut rng = stream_rng(spec.seed, Stream::SynthTemplates, k as u64);
        let center: Vec<f64> = (0..c).map(|_| normal(&mut rng, spec.sigma_b)).collect();
        let sig_scale = spec.sigma_b * spec.signature_gain;
        let template: Vec<f64> = (0..t * c)
            .map(|i| center[i % c] + normal(&mut rng, sig_scale))
            .collect();
        for v in 0..spec.videos_per_class {
            let index = (k * spec.videos_per_class + v) as u64;
            let mut noise = stream_rng(spec.seed, Stream::SynthNoise, index);
            let noisy: Vec<f64> = template
                .iter()
                .map(|&x| x + normal(&mut noise, spec.sigma_w))
                .collect();
            let mut warp = stream_rng(spec.seed, Stream::SynthWarp, index);
            let order = warp_order(spec, &mut warp);
            let features = Tensor::from_parts(vec![t, c], noisy).select_rows(&order);
            videos.push(FrameSequence { features, label: k });
        }
    }
    FeatureStore::new(videos, default_class_names(spec.num_classes), spec.provenance())
}

/// Learnability diagnostic: nearest class centroid on time-pooled features.
/// Centroids come from even-indexed videos of each class and are scored on
/// the odd-indexed ones (Euclidean distance). Returns accuracy in `[0, 1]`.
pub fn gap_centroid_accuracy(store: &FeatureStore) -> Result<f64> {
    let c = store
        .channels()
        .ok_or_else(|| Error::Domain("empty store".into()))?;
    let pooled: Vec<Vec<f64>> = store
        .videos()
        .iter()
        .map(|v| {
            let mut m = vec![0.0; c];
            for row in v.features.row_iter() {
                for (a, b) in m.iter_mut().zip(row) {
                    *a += b;
                }
            }
            m.iter().map(|x| x / v.frames() as f64).collect()
        })
        .collect();
    let groups = store.by_class();
    let mut centroids = Vec::new();
    for (label, members) in groups.iter().enumerate() {
        let train: Vec<usize> = members.iter().copied().step_by(2).collect();
        if train.is_empty() {
            continue;
        }
        let mut m = vec![0.0; c];
        for &i in &train {
            for (a, b) in m.iter_mut().zip(&pooled[i]) {
                *a += b;
            }
        }
        m.iter_mut().for_each(|x| *x /= train.len() as f64);
        centroids.push((label, m));
    }
    let (mut correct, mut total) = (0usize, 0usize);
    for (label, members) in groups.iter().enumerate() {
        for &i in members.iter().skip(1).step_by(2) {
            let best = centroids
                .iter()
                .map(|(l, m)| {
                    let d: f64 = m.iter().zip(&pooled[i]).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, *l)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, l)| l);
            correct += usize::from(best == Some(label));
            total += 1;
        }
    }
    if total == 0 {
        return Err(Error::Domain("every class needs at least two videos".into()));
    }
    Ok(correct as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(warp: WarpMode, magnitude: usize) -> SynthSpec {
        SynthSpec {
            num_classes: 3,
            videos_per_class: 4,
            frames: 6,
            channels: 4,
            warp,
            warp_magnitude: magnitude,
            seed: 11,
            ..SynthSpec::default()
        }
    }

    fn frame_multiset(t: &Tensor) -> Vec<Vec<u64>> {
        let mut rows: Vec<Vec<u64>> = t
            .row_iter()
            .map(|r| r.iter().map(|x| x.to_bits()).collect())
            .collect();
        rows.sort();
        rows
    }

    #[test]
    fn tiny_noise_makes_class_videos_identical() {
        let spec = SynthSpec {
            sigma_w: 1e-300,
            ..small(WarpMode::None, 0)
        };
        let store = generate(&spec).unwrap();
        for members in store.by_class() {
            let first = &store.videos()[members[0]].features;
            for &i in &members[1..] {
                assert_eq!(&store.videos()[i].features, first);
            }
        }
    }

    #[test]
    fn zero_cyclic_shift_equals_no_warp() {
        let a = generate(&small(WarpMode::None, 0)).unwrap();
        let b = generate(&small(WarpMode::CyclicShift, 0)).unwrap();
        assert_eq!(a.to_bytes(), b.to_bytes());
    }

    #[test]
    fn deterministic_bytes() {
        let spec = small(WarpMode::Jitter, 2);
        assert_eq!(generate(&spec).unwrap().to_bytes(), generate(&spec).unwrap().to_bytes());
        let other = SynthSpec { seed: 12, ..spec };
        assert_ne!(generate(&other).unwrap().to_bytes(), generate(&small(WarpMode::Jitter, 2)).unwrap().to_bytes());
    }

    #[test]
    fn every_warp_preserves_the_frame_multiset() {
        let plain = generate(&small(WarpMode::None, 0)).unwrap();
        for warp in [WarpMode::CyclicShift, WarpMode::SegmentReorder, WarpMode::Jitter] {
            let warped = generate(&small(warp, 3)).unwrap();
            let mut moved = 0;
            for (a, b) in plain.videos().iter().zip(warped.videos()) {
                assert_eq!(frame_multiset(&a.features), frame_multiset(&b.features));
                moved += usize::from(a.features != b.features);
            }
            assert!(moved > 0, "{warp} never moved a frame");
        }
    }

    #[test]
    fn invalid_specs_are_config_errors() {
        for spec in [
            SynthSpec { sigma_w: 0.0, ..SynthSpec::default() },
            SynthSpec { sigma_b: -1.0, ..SynthSpec::default() },
            SynthSpec { warp_magnitude: 8, ..SynthSpec::default() },
            SynthSpec { frames: 0, ..SynthSpec::default() },
        ] {
            assert!(matches!(generate(&spec), Err(Error::Config(_))));
        }
    }

    #[test]
    fn warp_names_round_trip() {
        for name in WarpMode::NAMES {
            assert_eq!(name.parse::<WarpMode>().unwrap().to_string(), name);
        }
        assert!("shift".parse::<WarpMode>().is_err());
    }

    #[test]
    fn default_pool_is_learnable_by_nearest_centroid() {
        let spec = SynthSpec {
            num_classes: 16,
            videos_per_class: 20,
            sigma_b: 1.0,
            sigma_w: 0.25,
            seed: 3,
            ..SynthSpec::default()
        };
        let acc = gap_centroid_accuracy(&generate(&spec).unwrap()).unwrap();
        assert!(acc > 0.9, "nearest-centroid accuracy {acc}");
    }
}
