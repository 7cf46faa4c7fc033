//! Interface-centric structural state for 3D assemblies: canonical charts,
//! partition hints, two-stream tokens, pair-biased context, seam scoring and
//! repair, component-owned realization and structural metrics.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels index several arrays per loop variable.
#![allow(clippy::needless_range_loop)]

pub mod chart;
pub mod context;
pub mod error;
pub mod geom;
pub mod metrics;
pub mod ingest;
pub mod nn;
pub mod partition;
pub mod pipeline;
pub mod realize;
pub mod seam;
pub mod synth;
pub mod tokenizer;

pub use chart::{Chart, ChartConfig};
pub use error::{Error, Result};
pub use geom::{Pose, Rotation, Vec3};
pub use ingest::{ObjectRecord, SurfaceObject};
pub use nn::NnIndex;
pub use partition::Partition;
pub use pipeline::{Report, RunConfig};
pub use seam::SeamCandidate;
pub use synth::GroundTruth;
pub use tokenizer::TokenPair;
