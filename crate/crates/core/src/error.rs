use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("box coordinates must be finite, got ({cx}, {cy}, {w}, {h})")]
    NonFinite { cx: f64, cy: f64, w: f64, h: f64 },
    #[error("box must have positive width and height, got w={w}, h={h}")]
    Degenerate { w: f64, h: f64 },
    #[error("image size must be positive, got {width}x{height}")]
    ImageSize { width: f64, height: f64 },
    #[error("similarity weight {name} must be finite and non-negative, got {value}")]
    Weight { name: &'static str, value: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvidenceError {
    #[error("frame must have between 1 and 16 hypotheses, got {0}")]
    FrameSize(usize),
    #[error("frame labels must be unique and non-empty, offending label {0:?}")]
    FrameLabel(String),
    #[error("expected a frame with {expected} hypotheses, got {found}")]
    FrameArity { expected: usize, found: usize },
    #[error("mass functions are defined on different frames")]
    FrameMismatch,
    #[error("subset {mask:#b} is not part of a frame with {size} hypotheses")]
    SubsetOutOfFrame { mask: u32, size: usize },
    #[error("hypothesis index {index} is out of range for a frame with {size} hypotheses")]
    HypothesisIndex { index: usize, size: usize },
    #[error("the empty set cannot carry mass ({0})")]
    EmptySetMass(f64),
    #[error("mass {value} on subset {mask:#b} is negative or not finite")]
    InvalidMass { mask: u32, value: f64 },
    #[error("masses sum to {0}, expected 1")]
    NotNormalized(f64),
    #[error("confidence score {0} is outside [0, 1]")]
    Score(f64),
    #[error("need at least {needed} pieces of evidence, got {found}")]
    TooFewEvidence { needed: usize, found: usize },
    #[error("weighting supports singleton and full-frame masses only, found mass on {mask:#b}")]
    UnsupportedStructure { mask: u32 },
    #[error("evidence is in total conflict (non-conflicting mass {0:e})")]
    TotalConflict(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("detection score {0} is outside [0, 1]")]
    Score(f64),
    #[error("match threshold {0} is outside [0, 1]")]
    Threshold(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("scenes without a counterpart in the other source: {0:?}")]
    MissingPair(Vec<String>),
    #[error("duplicate scene id {0:?}")]
    DuplicateScene(String),
    #[error("invalid fusion config: {0}")]
    Config(String),
    #[error(transparent)]
    Evidence(#[from] EvidenceError),
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("IoU threshold {0} must lie in (0, 1)")]
    IouThreshold(f64),
    #[error("detection score {0} is not finite")]
    Score(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error("could not place target {target} in scene {scene} without overlap after {attempts} attempts")]
    Placement {
        scene: usize,
        target: usize,
        attempts: usize,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}
