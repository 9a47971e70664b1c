//! Scene-level fusion: match the two sensors' detections, fuse the
//! confidences of every matched pair with weighted Dempster-Shafer
//! combination, and carry unmatched detections through.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::PipelineError;
use crate::evidence::{fuse_weighted, mass_from_confidence, Frame};
use crate::geometry::{BoundingBox, SimilarityConfig};
use crate::matching::{match_detections, Detection, MatchConfig, MatchMetric, MatchStrategy};

/// Scores are clamped into `[SCORE_CLAMP, 1 - SCORE_CLAMP]` before building
/// masses so that opposed certainties never reach total conflict.
pub const SCORE_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Both,
    AOnly,
    BOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SingletonPolicy {
    /// Keep the single-sensor score unchanged.
    #[default]
    Passthrough,
    /// Shafer discounting: `factor` of the evidence is kept, the rest
    /// becomes uncertainty.
    Discount { factor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeometryPolicy {
    #[default]
    ScoreWeightedMean,
    MaxScoreBox,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputScore {
    #[default]
    ExistsMass,
    /// Exists mass plus half of the uncertainty.
    ExistsPlusHalfTheta,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionConfig {
    pub similarity: SimilarityConfig,
    pub match_metric: MatchMetric,
    pub match_threshold: f64,
    pub match_strategy: MatchStrategy,
    pub singleton_policy: SingletonPolicy,
    pub geometry_policy: GeometryPolicy,
    pub output_score: OutputScore,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            match_metric: MatchMetric::Ddiou,
            match_threshold: 0.3,
            match_strategy: MatchStrategy::Optimal,
            singleton_policy: SingletonPolicy::Passthrough,
            geometry_policy: GeometryPolicy::ScoreWeightedMean,
            output_score: OutputScore::ExistsMass,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.similarity.validate()?;
        if !(0.0..=1.0).contains(&self.match_threshold) {
            return Err(PipelineError::Config(format!(
                "match_threshold {} is outside [0, 1]",
                self.match_threshold
            )));
        }
        if let SingletonPolicy::Discount { factor } = self.singleton_policy {
            if !(0.0..=1.0).contains(&factor) {
                return Err(PipelineError::Config(format!(
                    "discount factor {factor} is outside [0, 1]"
                )));
            }
        }
        Ok(())
    }

    pub fn match_config(&self) -> MatchConfig {
        MatchConfig {
            similarity: self.similarity,
            metric: self.match_metric,
            threshold: self.match_threshold,
            strategy: self.match_strategy,
        }
    }
}

/// One output target. `exists + absent + uncertainty == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedDetection {
    pub bbox: BoundingBox,
    pub box_a: Option<BoundingBox>,
    pub box_b: Option<BoundingBox>,
    pub class_id: u32,
    pub image_id: String,
    pub provenance: Provenance,
    /// Ranking score, derived from the masses by [`OutputScore`].
    pub score: f64,
    pub exists: f64,
    pub absent: f64,
    pub uncertainty: f64,
}

impl FusedDetection {
    /// Detection carrying the canonical box and ranking score.
    pub fn to_detection(&self, source: &str) -> Detection {
        Detection::new(
            self.bbox,
            self.score.clamp(0.0, 1.0),
            self.class_id,
            self.image_id.clone(),
            source,
        )
        .expect("score clamped into [0, 1]")
    }
}

/// Detections of one source for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image_id: String,
    pub detections: Vec<Detection>,
}

impl Scene {
    pub fn new(image_id: impl Into<String>, detections: Vec<Detection>) -> Self {
        Self {
            image_id: image_id.into(),
            detections,
        }
    }
}

/// Fused output for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedScene {
    pub image_id: String,
    pub detections: Vec<FusedDetection>,
    pub pairs: usize,
    pub a_only: usize,
    pub b_only: usize,
}

fn output_score(mode: OutputScore, exists: f64, uncertainty: f64) -> f64 {
    match mode {
        OutputScore::ExistsMass => exists,
        OutputScore::ExistsPlusHalfTheta => (exists + 0.5 * uncertainty).min(1.0),
    }
}

fn fuse_boxes(
    a: &BoundingBox,
    b: &BoundingBox,
    score_a: f64,
    score_b: f64,
    policy: GeometryPolicy,
) -> Result<BoundingBox, PipelineError> {
    match policy {
        GeometryPolicy::MaxScoreBox => Ok(if score_b > score_a { *b } else { *a }),
        GeometryPolicy::ScoreWeightedMean => {
            let total = score_a + score_b;
            let (wa, wb) = if total > 0.0 {
                (score_a / total, score_b / total)
            } else {
                (0.5, 0.5)
            };
            let mix = |x: f64, y: f64| wa * x + wb * y;
            Ok(BoundingBox::new(
                mix(a.cx(), b.cx()),
                mix(a.cy(), b.cy()),
                mix(a.w(), b.w()),
                mix(a.h(), b.h()),
            )?)
        }
    }
}

fn singleton(det: &Detection, provenance: Provenance, cfg: &FusionConfig) -> FusedDetection {
    let s = det.score();
    let (exists, absent, uncertainty) = match cfg.singleton_policy {
        SingletonPolicy::Passthrough => (s, 1.0 - s, 0.0),
        SingletonPolicy::Discount { factor } => (factor * s, factor * (1.0 - s), 1.0 - factor),
    };
    let (box_a, box_b) = match provenance {
        Provenance::BOnly => (None, Some(*det.bbox())),
        _ => (Some(*det.bbox()), None),
    };
    FusedDetection {
        bbox: *det.bbox(),
        box_a,
        box_b,
        class_id: det.class_id(),
        image_id: det.image_id().to_owned(),
        provenance,
        score: output_score(cfg.output_score, exists, uncertainty),
        exists,
        absent,
        uncertainty,
    }
}

fn fused_order(x: &FusedDetection, y: &FusedDetection) -> Ordering {
    y.score
        .total_cmp(&x.score)
        .then(x.provenance.cmp(&y.provenance))
        .then(x.bbox.cx().total_cmp(&y.bbox.cx()))
        .then(x.bbox.cy().total_cmp(&y.bbox.cy()))
}

/// Fuses one scene. Output is sorted by descending score, then provenance
/// and box center.
pub fn fuse_scene(
    a: &[Detection],
    b: &[Detection],
    cfg: &FusionConfig,
) -> Result<Vec<FusedDetection>, PipelineError> {
    cfg.validate()?;
    let matches = match_detections(a, b, &cfg.match_config())?;
    let frame = Arc::new(Frame::binary());
    let clamp = |s: f64| s.clamp(SCORE_CLAMP, 1.0 - SCORE_CLAMP);

    let mut out = Vec::with_capacity(a.len() + b.len() - matches.pairs.len());
    for pair in &matches.pairs {
        let (da, db) = (&a[pair.a], &b[pair.b]);
        let (sa, sb) = (clamp(da.score()), clamp(db.score()));
        let fused = fuse_weighted(&[
            mass_from_confidence(&frame, sa)?,
            mass_from_confidence(&frame, sb)?,
        ])?;
        let exists = fused.singleton_mass(Frame::EXISTS);
        let absent = fused.singleton_mass(Frame::ABSENT);
        let uncertainty = fused.uncertainty();
        out.push(FusedDetection {
            bbox: fuse_boxes(da.bbox(), db.bbox(), sa, sb, cfg.geometry_policy)?,
            box_a: Some(*da.bbox()),
            box_b: Some(*db.bbox()),
            class_id: da.class_id(),
            image_id: da.image_id().to_owned(),
            provenance: Provenance::Both,
            score: output_score(cfg.output_score, exists, uncertainty),
            exists,
            absent,
            uncertainty,
        });
    }
    out.extend(
        matches
            .unmatched_a
            .iter()
            .map(|&i| singleton(&a[i], Provenance::AOnly, cfg)),
    );
    out.extend(
        matches
            .unmatched_b
            .iter()
            .map(|&j| singleton(&b[j], Provenance::BOnly, cfg)),
    );
    out.sort_by(fused_order);
    Ok(out)
}

/// Pairs scenes of the two sources by image id, in the order of `a`.
pub fn pair_scenes(a: Vec<Scene>, b: Vec<Scene>) -> Result<Vec<(Scene, Scene)>, PipelineError> {
    let mut by_id: HashMap<String, Scene> = HashMap::with_capacity(b.len());
    let mut b_order = Vec::with_capacity(b.len());
    for scene in b {
        if by_id.contains_key(&scene.image_id) {
            return Err(PipelineError::DuplicateScene(scene.image_id));
        }
        b_order.push(scene.image_id.clone());
        by_id.insert(scene.image_id.clone(), scene);
    }
    let mut seen_a = std::collections::HashSet::with_capacity(a.len());
    let mut missing = Vec::new();
    let mut pairs = Vec::with_capacity(a.len());
    for scene in a {
        if !seen_a.insert(scene.image_id.clone()) {
            return Err(PipelineError::DuplicateScene(scene.image_id));
        }
        match by_id.remove(&scene.image_id) {
            Some(other) => pairs.push((scene, other)),
            None => missing.push(scene.image_id),
        }
    }
    missing.extend(b_order.into_iter().filter(|id| by_id.contains_key(id)));
    if missing.is_empty() {
        Ok(pairs)
    } else {
        Err(PipelineError::MissingPair(missing))
    }
}

/// Fuses every scene pair. `workers` of 0 or 1 runs sequentially; more uses
/// a dedicated thread pool. Output order follows the input order either way.
pub fn fuse_dataset(
    pairs: &[(Scene, Scene)],
    cfg: &FusionConfig,
    workers: usize,
) -> Result<Vec<FusedScene>, PipelineError> {
    cfg.validate()?;
    let fuse_one = |(a, b): &(Scene, Scene)| -> Result<FusedScene, PipelineError> {
        let matches_counts = |detections: &[FusedDetection], p: Provenance| {
            detections.iter().filter(|d| d.provenance == p).count()
        };
        let detections = fuse_scene(&a.detections, &b.detections, cfg)?;
        Ok(FusedScene {
            image_id: a.image_id.clone(),
            pairs: matches_counts(&detections, Provenance::Both),
            a_only: matches_counts(&detections, Provenance::AOnly),
            b_only: matches_counts(&detections, Provenance::BOnly),
            detections,
        })
    };
    if workers <= 1 {
        return pairs.iter().map(fuse_one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| pairs.par_iter().map(fuse_one).collect())
}
