//! Precision, recall and average precision against ground truth.
//!
//! Detections are ranked by descending score (ties keep input order) and
//! each one claims the unclaimed ground truth of the same image and class
//! with the highest IoU, provided it reaches the IoU threshold. The PR curve
//! has one point per distinct score, so tied detections enter together.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::MetricsError;
use crate::geometry::{iou, BoundingBox};
use crate::matching::Detection;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BoundingBox,
    pub class_id: u32,
    pub image_id: String,
}

impl GroundTruthBox {
    pub fn new(bbox: BoundingBox, class_id: u32, image_id: impl Into<String>) -> Self {
        Self {
            bbox,
            class_id,
            image_id: image_id.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Interpolation {
    /// Area under the monotone precision envelope at every recall step.
    #[default]
    #[serde(rename = "all")]
    AllPoints,
    /// Mean envelope precision at recall 0, 0.1, ..., 1.
    #[serde(rename = "11pt")]
    ElevenPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            interpolation: Interpolation::AllPoints,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// One point per distinct score, from the highest score down.
    pub pr_points: Vec<PrPoint>,
    pub ap: f64,
    pub iou_threshold: f64,
    pub interpolation: Interpolation,
}

impl EvalReport {
    /// Precision with every detection kept; 0 when there are none.
    pub fn precision(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_positives)
    }

    /// Recall with every detection kept; 0 when there is no ground truth.
    pub fn recall(&self) -> f64 {
        ratio(self.true_positives, self.true_positives + self.false_negatives)
    }

    pub fn ground_truth_count(&self) -> usize {
        self.true_positives + self.false_negatives
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Ranks detections and labels each as a true positive or not. Returns the
/// ranking (indices into `dets`) and the matching flags.
pub fn assign(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> (Vec<usize>, Vec<bool>) {
    let mut by_key: HashMap<(&str, u32), Vec<usize>> = HashMap::new();
    for (g, gt) in gts.iter().enumerate() {
        by_key
            .entry((gt.image_id.as_str(), gt.class_id))
            .or_default()
            .push(g);
    }
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&x, &y| dets[y].score().total_cmp(&dets[x].score()));

    let mut claimed = vec![false; gts.len()];
    let is_tp = order
        .iter()
        .map(|&d| {
            let det = &dets[d];
            let Some(candidates) = by_key.get(&(det.image_id(), det.class_id())) else {
                return false;
            };
            let mut best: Option<(usize, f64)> = None;
            for &g in candidates {
                if claimed[g] {
                    continue;
                }
                let overlap = iou(det.bbox(), &gts[g].bbox);
                if best.is_none_or(|(_, b)| overlap > b) {
                    best = Some((g, overlap));
                }
            }
            match best {
                Some((g, overlap)) if overlap >= iou_threshold => {
                    claimed[g] = true;
                    true
                }
                _ => false,
            }
        })
        .collect();
    (order, is_tp)
}

pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    cfg: &EvalConfig,
) -> Result<EvalReport, MetricsError> {
    if !(cfg.iou_threshold > 0.0 && cfg.iou_threshold < 1.0) {
        return Err(MetricsError::IouThreshold(cfg.iou_threshold));
    }
    if let Some(d) = dets.iter().find(|d| !d.score().is_finite()) {
        return Err(MetricsError::Score(d.score()));
    }
    let (order, is_tp) = assign(dets, gts, cfg.iou_threshold);

    let total_gt = gts.len();
    let mut pr_points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    for (rank, &d) in order.iter().enumerate() {
        if is_tp[rank] {
            tp += 1;
        } else {
            fp += 1;
        }
        let last_of_score = order
            .get(rank + 1)
            .is_none_or(|&next| dets[next].score() != dets[d].score());
        if last_of_score {
            pr_points.push(PrPoint {
                recall: ratio(tp, total_gt),
                precision: ratio(tp, tp + fp),
            });
        }
    }

    let ap = match cfg.interpolation {
        Interpolation::AllPoints => all_points_ap(&pr_points),
        Interpolation::ElevenPoint => eleven_point_ap(&pr_points),
    };
    Ok(EvalReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: total_gt - tp,
        pr_points,
        ap,
        iou_threshold: cfg.iou_threshold,
        interpolation: cfg.interpolation,
    })
}

/// Precision envelope: each point's precision replaced by the best
/// precision at that recall or beyond. Non-increasing along the curve.
pub fn precision_envelope(points: &[PrPoint]) -> Vec<f64> {
    let mut envelope: Vec<f64> = points.iter().map(|p| p.precision).collect();
    for i in (0..envelope.len().saturating_sub(1)).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    envelope
}

fn all_points_ap(points: &[PrPoint]) -> f64 {
    let envelope = precision_envelope(points);
    let mut previous = 0.0;
    let mut ap = 0.0;
    for (p, env) in points.iter().zip(&envelope) {
        ap += (p.recall - previous) * env;
        previous = p.recall;
    }
    ap.clamp(0.0, 1.0)
}

fn eleven_point_ap(points: &[PrPoint]) -> f64 {
    let envelope = precision_envelope(points);
    let sum: f64 = (0..=10)
        .map(|t| {
            let level = t as f64 / 10.0;
            points
                .iter()
                .position(|p| p.recall >= level - 1e-12)
                .map_or(0.0, |i| envelope[i])
        })
        .sum();
    sum / 11.0
}

/// PR curve as `recall,precision` CSV with six decimals. Non-empty curves
/// start with the `(0, 1)` anchor row.
pub fn pr_curve_csv(report: &EvalReport) -> String {
    let mut out = String::from("recall,precision\n");
    if report.pr_points.is_empty() {
        return out;
    }
    out.push_str("0.000000,1.000000\n");
    for p in &report.pr_points {
        let _ = writeln!(out, "{:.6},{:.6}", p.recall, p.precision);
    }
    out
}
