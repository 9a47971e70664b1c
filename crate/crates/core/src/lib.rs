//! Decision-level fusion of object detections from two sensors.
//!
//! Detections of the same target are paired across sensors with a
//! distance-decay IoU ([`geometry::ddiou`]), their confidences are fused with
//! compatibility-weighted Dempster-Shafer combination ([`evidence`]), and the
//! result is scored with precision/recall/AP ([`metrics`]). [`sim`] produces
//! paired synthetic detections for experiments.

pub mod error;
pub mod evidence;
pub mod geometry;
pub mod matching;
pub mod metrics;
pub mod pipeline;
pub mod sim;

pub use error::{EvidenceError, GeometryError, MatchError, MetricsError, PipelineError, SimError};
pub use evidence::{
    dempster_combine, fuse_weighted, mass_from_confidence, weight_masses, Frame, MassFunction,
    Subset, WeightedMassSet,
};
pub use geometry::{ddiou, iou, iou_star, BoundingBox, SimilarityConfig};
pub use matching::{match_detections, Detection, MatchConfig, MatchMetric, MatchResult, MatchStrategy};
pub use metrics::{evaluate, EvalConfig, EvalReport, GroundTruthBox, Interpolation};
pub use pipeline::{fuse_dataset, fuse_scene, FusedDetection, FusionConfig, Provenance, Scene};
pub use sim::{generate, ScenarioConfig, SensorModel, SimDataset};
