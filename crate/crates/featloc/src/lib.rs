//! Global 6-DoF localization of a depth-sensing camera in a sparse map of
//! positioned visual features.
//!
//! The pipeline runs in two stages. A coarse pose is estimated from a small
//! set of descriptor-space matches filtered for mutual rigid consistency.
//! That pose then guides spatial matching: each observed feature is searched
//! for near its predicted map location and gated by the descriptor deviation
//! recorded for the candidate during mapping. A RANSAC fit over the spatial
//! matches produces the final pose. Every estimate is independent of the
//! previous one, so the localizer works in the kidnapped-robot setting.
//!
//! The crate also ships a synthetic world generator ([`simworld`]) that
//! reproduces the perceptual-aliasing failure modes of descriptor-only
//! matching, and a benchmark harness ([`harness`]) that compares the
//! pipeline against plain k-nearest-neighbor baselines and emits CSV tables
//! and SVG plots.
//!
//! See the `examples/` directory for runnable entry points covering each
//! capability; the `featloc` binary exposes the same flows as subcommands.

pub mod estimation;
pub mod feature_map;
pub mod geometry;
pub mod harness;
pub mod index;
pub mod matching;
pub mod simworld;

pub use estimation::{
    localize, localize_baseline, CoarseParams, LocalizationReport, Outcome, RansacParams,
};
pub use feature_map::{
    build_map, load_map, save_map, Descriptor, FeatureMap, MapBuildParams, MapFeature,
    ObservationFrame, ObservedFeature,
};
pub use geometry::{estimate_rigid_transform, Pose};
pub use index::{DescriptorIndex, SpatialIndex};

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Point configuration too thin to determine a rigid transform.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A mapping frame arrived without a ground-truth pose.
    #[error("frame {frame_index} has no ground-truth pose")]
    MissingGroundTruth { frame_index: u64 },

    /// Descriptor dimensions disagree.
    #[error("descriptor dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Query against a map with no features.
    #[error("map contains no features")]
    EmptyMap,

    /// Batched matching ran past the end of the frame.
    #[error("feature batch start {start} is past the frame feature count {count}")]
    ExhaustedFeatures { start: usize, count: usize },

    /// A generation spec failed validation.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    /// Aligned sequences have different lengths.
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed file at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
