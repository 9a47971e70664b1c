//! Cross-source association of detections within one scene.
//!
//! Scores are oriented so that higher is always better: DDIoU and IoU are
//! used as-is, the weighted Euclidean dissimilarity is negated. Pairs of
//! different classes never match.

use serde::{Deserialize, Serialize};

use crate::error::MatchError;
use crate::geometry::{ddiou, euclid_similarity, iou, BoundingBox, SimilarityConfig};

/// Score given to cross-class pairs.
pub const CROSS_CLASS_SCORE: f64 = f64::NEG_INFINITY;

/// A scored box reported by one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    bbox: BoundingBox,
    score: f64,
    class_id: u32,
    image_id: String,
    source: String,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        score: f64,
        class_id: u32,
        image_id: impl Into<String>,
        source: impl Into<String>,
    ) -> Result<Self, MatchError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(MatchError::Score(score));
        }
        Ok(Self {
            bbox,
            score,
            class_id,
            image_id: image_id.into(),
            source: source.into(),
        })
    }

    pub fn bbox(&self) -> &BoundingBox {
        &self.bbox
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// Same detection with its box moved by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Self {
        Self {
            bbox: self.bbox.translated(dx, dy),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMetric {
    #[default]
    Ddiou,
    Iou,
    /// Negated weighted Euclidean dissimilarity.
    Euclid,
}

impl MatchMetric {
    pub fn score(&self, a: &BoundingBox, b: &BoundingBox, cfg: &SimilarityConfig) -> f64 {
        match self {
            MatchMetric::Ddiou => ddiou(a, b, cfg),
            MatchMetric::Iou => iou(a, b),
            MatchMetric::Euclid => -euclid_similarity(a, b, cfg),
        }
    }

    /// Whether a pair with this score is close enough to keep. For
    /// [`MatchMetric::Euclid`] the threshold is the largest accepted
    /// dissimilarity.
    pub fn passes(&self, score: f64, threshold: f64) -> bool {
        match self {
            MatchMetric::Ddiou | MatchMetric::Iou => score >= threshold,
            MatchMetric::Euclid => score >= -threshold,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchStrategy {
    /// Maximum total score over one-to-one assignments.
    #[default]
    Optimal,
    /// Repeatedly take the best remaining pair.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub similarity: SimilarityConfig,
    pub metric: MatchMetric,
    pub threshold: f64,
    pub strategy: MatchStrategy,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            metric: MatchMetric::Ddiou,
            threshold: 0.3,
            strategy: MatchStrategy::Optimal,
        }
    }
}

/// Dense row-major matrix of pair scores, rows indexing source A.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transposed(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }
}

/// Pairwise scores between `a` (rows) and `b` (columns).
pub fn score_matrix(
    a: &[Detection],
    b: &[Detection],
    cfg: &SimilarityConfig,
    metric: MatchMetric,
) -> ScoreMatrix {
    ScoreMatrix::from_fn(a.len(), b.len(), |i, j| {
        if a[i].class_id != b[j].class_id {
            CROSS_CLASS_SCORE
        } else {
            metric.score(&a[i].bbox, &b[j].bbox, cfg)
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchedPair {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    /// Sorted by index into source A.
    pub pairs: Vec<MatchedPair>,
    pub unmatched_a: Vec<usize>,
    pub unmatched_b: Vec<usize>,
}

impl MatchResult {
    pub fn total_score(&self) -> f64 {
        self.pairs.iter().map(|p| p.score).sum()
    }

    fn from_pairs(mut pairs: Vec<MatchedPair>, n_a: usize, n_b: usize) -> Self {
        pairs.sort_by_key(|p| p.a);
        let mut used_a = vec![false; n_a];
        let mut used_b = vec![false; n_b];
        for p in &pairs {
            used_a[p.a] = true;
            used_b[p.b] = true;
        }
        let unused = |used: Vec<bool>| {
            used.iter()
                .enumerate()
                .filter(|(_, &u)| !u)
                .map(|(i, _)| i)
                .collect()
        };
        Self {
            pairs,
            unmatched_a: unused(used_a),
            unmatched_b: unused(used_b),
        }
    }
}

/// Associates detections of two sources for the same scene.
pub fn match_detections(
    a: &[Detection],
    b: &[Detection],
    cfg: &MatchConfig,
) -> Result<MatchResult, MatchError> {
    if !(0.0..=1.0).contains(&cfg.threshold) {
        return Err(MatchError::Threshold(cfg.threshold));
    }
    let scores = score_matrix(a, b, &cfg.similarity, cfg.metric);
    Ok(match_scores(&scores, cfg.metric, cfg.threshold, cfg.strategy))
}

/// Matching on a precomputed score matrix.
pub fn match_scores(
    scores: &ScoreMatrix,
    metric: MatchMetric,
    threshold: f64,
    strategy: MatchStrategy,
) -> MatchResult {
    let keep = |s: f64| s.is_finite() && metric.passes(s, threshold);
    let pairs = match strategy {
        MatchStrategy::Optimal => optimal_assignment(scores)
            .into_iter()
            .map(|(i, j)| MatchedPair {
                a: i,
                b: j,
                score: scores.get(i, j),
            })
            .filter(|p| keep(p.score))
            .collect(),
        MatchStrategy::Greedy => greedy_assignment(scores, keep),
    };
    MatchResult::from_pairs(pairs, scores.rows, scores.cols)
}

fn greedy_assignment(scores: &ScoreMatrix, keep: impl Fn(f64) -> bool) -> Vec<MatchedPair> {
    let mut candidates: Vec<MatchedPair> = (0..scores.rows)
        .flat_map(|i| (0..scores.cols).map(move |j| (i, j)))
        .map(|(i, j)| MatchedPair {
            a: i,
            b: j,
            score: scores.get(i, j),
        })
        .filter(|p| keep(p.score))
        .collect();
    // Stable sort keeps (i, j) lexicographic order among equal scores.
    candidates.sort_by(|x, y| y.score.total_cmp(&x.score));
    let mut used_a = vec![false; scores.rows];
    let mut used_b = vec![false; scores.cols];
    let mut pairs = Vec::new();
    for p in candidates {
        if !used_a[p.a] && !used_b[p.b] {
            used_a[p.a] = true;
            used_b[p.b] = true;
            pairs.push(p);
        }
    }
    pairs
}

/// One-to-one assignment maximizing the total score; every row is assigned
/// when `rows <= cols`, every column otherwise. Non-finite entries are
/// forbidden and only used when nothing else is available.
pub fn optimal_assignment(scores: &ScoreMatrix) -> Vec<(usize, usize)> {
    if scores.rows == 0 || scores.cols == 0 {
        return Vec::new();
    }
    if scores.rows > scores.cols {
        return optimal_assignment(&scores.transposed())
            .into_iter()
            .map(|(j, i)| (i, j))
            .collect();
    }

    let finite = scores.data.iter().copied().filter(|s| s.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
        (lo.min(s), hi.max(s))
    });
    // Any assignment with fewer forbidden entries beats one with more.
    let forbidden = if lo.is_finite() {
        lo - (hi - lo + 1.0) * (scores.rows as f64 + 1.0)
    } else {
        -1.0
    };
    let cost: Vec<f64> = scores
        .data
        .iter()
        .map(|&s| if s.is_finite() { -s } else { -forbidden })
        .collect();

    let col_for_row = solve_lsap(scores.rows, scores.cols, &cost);
    col_for_row.into_iter().enumerate().collect()
}

/// Minimum-cost assignment of every row for `rows <= cols` by successive
/// shortest augmenting paths with dual potentials (Jonker-Volgenant style).
fn solve_lsap(rows: usize, cols: usize, cost: &[f64]) -> Vec<usize> {
    const NONE: usize = usize::MAX;
    let mut u = vec![0.0; rows];
    let mut v = vec![0.0; cols];
    let mut col_for_row = vec![NONE; rows];
    let mut row_for_col = vec![NONE; cols];
    let mut path = vec![NONE; cols];
    let mut shortest = vec![f64::INFINITY; cols];
    let mut remaining: Vec<usize> = Vec::with_capacity(cols);
    let mut row_seen = vec![false; rows];
    let mut col_seen = vec![false; cols];

    for start in 0..rows {
        row_seen.fill(false);
        col_seen.fill(false);
        shortest.fill(f64::INFINITY);
        remaining.clear();
        remaining.extend((0..cols).rev());

        let mut min_val = 0.0;
        let mut i = start;
        let sink = loop {
            row_seen[i] = true;
            let mut best = f64::INFINITY;
            let mut best_at = 0;
            for (at, &j) in remaining.iter().enumerate() {
                let reduced = min_val + cost[i * cols + j] - u[i] - v[j];
                if reduced < shortest[j] {
                    path[j] = i;
                    shortest[j] = reduced;
                }
                if shortest[j] < best || (shortest[j] == best && row_for_col[j] == NONE) {
                    best = shortest[j];
                    best_at = at;
                }
            }
            min_val = best;
            let j = remaining.swap_remove(best_at);
            col_seen[j] = true;
            if row_for_col[j] == NONE {
                break j;
            }
            i = row_for_col[j];
        };

        u[start] += min_val;
        for r in 0..rows {
            if row_seen[r] && r != start {
                u[r] += min_val - shortest[col_for_row[r]];
            }
        }
        for c in 0..cols {
            if col_seen[c] {
                v[c] -= min_val - shortest[c];
            }
        }

        let mut j = sink;
        loop {
            let r = path[j];
            row_for_col[j] = r;
            std::mem::swap(&mut col_for_row[r], &mut j);
            if r == start {
                break;
            }
        }
    }
    col_for_row
}
