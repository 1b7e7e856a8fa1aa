//! Online skeleton-based action recognition.
//!
//! The pipeline: parse a skeleton stream, extract viewpoint-robust
//! geometric features (joint collection distances, line/plane primitives)
//! plus two-scale motion features, mix recent and long-term frames with a
//! memory group sampler, classify each sampled window with a small 1D CNN
//! trained from scratch, and average the per-step class probabilities into
//! a running prediction.

pub mod engine;
pub mod error;
pub mod features;
pub mod geometry;
pub mod nn;
pub mod sampler;
pub mod schema;
pub mod skeleton;
pub mod stream;
pub mod topology;

pub use engine::{average_probabilities, Averaging, Engine, EngineConfig, Prediction, SamplerKind};
pub use error::{Error, Result};
pub use features::{assemble_sequence_tensor, jcd, motion_features, SequenceFeatureTensor};
pub use sampler::{halve, SampleBatch, SamplerState, SlidingWindowState};
pub use schema::{build_schema, enumerate_lines, enumerate_planes, FeatureSchema, SchemaConfig};
pub use skeleton::{
    apply_rigid_transform, center_on_root, resample_sequence, SkeletonFrame, SkeletonSequence,
    StreamEvent,
};
pub use stream::{parse_stream_line, serialize_frame};
pub use topology::{builtin_topology, Topology};
