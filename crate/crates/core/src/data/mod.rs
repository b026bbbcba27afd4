//! Frame-feature stores: the on-disk format and a synthetic generator.
//!
//! File layout (all integers little-endian):
//!
//! ```text
//! "HRSMFEAT"  u32 version=1  u32 videos  u32 C
//! per video:  u32 label  u32 T  T*C f32
//! ```
//!
//! Class names live next to the feature file in `<file>.classes`, one per
//! line.

mod store;
mod synth;

pub(crate) use store::ByteReader;
pub use store::{
    class_names_path, default_class_names, FeatureStore, FrameSequence, STORE_MAGIC,
    STORE_VERSION,
};
pub use synth::{gap_centroid_accuracy, generate, SynthSpec, WarpMode};
