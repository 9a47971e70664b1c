//! Dempster-Shafer evidence fusion over small frames of discernment.
//!
//! Subsets of a frame with `M <= 16` hypotheses are encoded as bitmasks, so
//! the whole power set fits in `2^M` masks and intersection is a bitwise and.
//! [`dempster_combine`] implements the classical rule for arbitrary focal
//! elements. [`weight_masses`] discounts each piece of evidence per
//! hypothesis by how well it agrees with the others (compatibility
//! coefficients) and moves the removed mass onto the full frame before
//! combination; [`fuse_weighted`] chains the two.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::EvidenceError;

/// Largest supported frame.
pub const MAX_HYPOTHESES: usize = 16;

/// Tolerance on the total mass of a mass function.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Non-conflicting mass at or below this is treated as total conflict.
pub const TOTAL_CONFLICT_EPS: f64 = 1e-12;

/// Combined masses below this are dropped before renormalizing.
const PRUNE_EPS: f64 = 1e-15;

/// A subset of a frame, one bit per hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Subset(u32);

impl Subset {
    pub const EMPTY: Subset = Subset(0);

    pub fn from_bits(bits: u32) -> Self {
        Subset(bits)
    }

    pub fn bits(self) -> u32 {
        self.0
    }

    pub fn singleton(index: usize) -> Self {
        debug_assert!(index < MAX_HYPOTHESES);
        Subset(1 << index)
    }

    /// The subset containing all `size` hypotheses.
    pub fn full(size: usize) -> Self {
        debug_assert!(size <= MAX_HYPOTHESES);
        Subset(((1u64 << size) - 1) as u32)
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_singleton(self) -> bool {
        self.len() == 1
    }

    pub fn intersect(self, other: Subset) -> Subset {
        Subset(self.0 & other.0)
    }

    pub fn union(self, other: Subset) -> Subset {
        Subset(self.0 | other.0)
    }

    pub fn intersects(self, other: Subset) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset_of(self, other: Subset) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn contains(self, index: usize) -> bool {
        index < 32 && self.0 & (1 << index) != 0
    }

    /// Complement relative to a frame of `size` hypotheses.
    pub fn complement(self, size: usize) -> Subset {
        Subset(!self.0 & Subset::full(size).0)
    }
}

impl fmt::Display for Subset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#b}", self.0)
    }
}

/// Ordered set of mutually exclusive hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    labels: Vec<String>,
}

impl Frame {
    /// Index of the "target exists" hypothesis in [`Frame::binary`].
    pub const EXISTS: usize = 0;
    /// Index of the "target absent" hypothesis in [`Frame::binary`].
    pub const ABSENT: usize = 1;

    pub fn new<I, S>(labels: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() || labels.len() > MAX_HYPOTHESES {
            return Err(EvidenceError::FrameSize(labels.len()));
        }
        for (i, label) in labels.iter().enumerate() {
            if label.is_empty() || labels[..i].contains(label) {
                return Err(EvidenceError::FrameLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// The two-hypothesis frame `{exists, absent}` used for detections.
    pub fn binary() -> Self {
        Self {
            labels: vec!["exists".to_owned(), "absent".to_owned()],
        }
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Θ, the subset of every hypothesis.
    pub fn theta(&self) -> Subset {
        Subset::full(self.size())
    }

    pub fn contains(&self, subset: Subset) -> bool {
        subset.is_subset_of(self.theta())
    }

    /// Human-readable name of a subset, e.g. `{a,b}` or `Θ`.
    pub fn describe(&self, subset: Subset) -> String {
        if subset == self.theta() {
            return "Θ".to_owned();
        }
        if subset.is_empty() {
            return "∅".to_owned();
        }
        let names: Vec<&str> = (0..self.size())
            .filter(|&i| subset.contains(i))
            .map(|i| self.labels[i].as_str())
            .collect();
        if names.len() == 1 {
            names[0].to_owned()
        } else {
            format!("{{{}}}", names.join(","))
        }
    }
}

fn same_frame(a: &Arc<Frame>, b: &Arc<Frame>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Basic probability assignment over the power set of a frame. Only focal
/// elements (non-zero mass) are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct MassFunction {
    frame: Arc<Frame>,
    masses: BTreeMap<Subset, f64>,
}

impl MassFunction {
    /// Builds a mass function, summing repeated subsets. Masses must be
    /// non-negative and sum to 1 within [`NORMALIZATION_TOLERANCE`].
    pub fn new<I>(frame: Arc<Frame>, entries: I) -> Result<Self, EvidenceError>
    where
        I: IntoIterator<Item = (Subset, f64)>,
    {
        let mut masses = BTreeMap::new();
        for (subset, value) in entries {
            if !frame.contains(subset) {
                return Err(EvidenceError::SubsetOutOfFrame {
                    mask: subset.bits(),
                    size: frame.size(),
                });
            }
            if !(value.is_finite() && value >= 0.0) {
                return Err(EvidenceError::InvalidMass {
                    mask: subset.bits(),
                    value,
                });
            }
            if value == 0.0 {
                continue;
            }
            if subset.is_empty() {
                return Err(EvidenceError::EmptySetMass(value));
            }
            *masses.entry(subset).or_insert(0.0) += value;
        }
        let total: f64 = masses.values().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(EvidenceError::NotNormalized(total));
        }
        Ok(Self { frame, masses })
    }

    /// All mass on Θ: total ignorance, the neutral element of combination.
    pub fn vacuous(frame: Arc<Frame>) -> Self {
        let theta = frame.theta();
        Self {
            frame,
            masses: BTreeMap::from([(theta, 1.0)]),
        }
    }

    /// Mass `singletons[k]` on hypothesis `k`; whatever is left goes to Θ.
    pub fn from_singletons(frame: Arc<Frame>, singletons: &[f64]) -> Result<Self, EvidenceError> {
        if singletons.len() != frame.size() {
            return Err(EvidenceError::FrameArity {
                expected: frame.size(),
                found: singletons.len(),
            });
        }
        let assigned: f64 = singletons.iter().sum();
        let rest = if (1.0 - assigned).abs() <= NORMALIZATION_TOLERANCE {
            0.0
        } else {
            1.0 - assigned
        };
        let theta = frame.theta();
        let entries = singletons
            .iter()
            .enumerate()
            .map(|(k, &m)| (Subset::singleton(k), m))
            .chain(std::iter::once((theta, rest)))
            .collect::<Vec<_>>();
        Self::new(frame, entries)
    }

    pub fn frame(&self) -> &Arc<Frame> {
        &self.frame
    }

    /// Mass on exactly this subset (0 for non-focal subsets).
    pub fn mass(&self, subset: Subset) -> f64 {
        self.masses.get(&subset).copied().unwrap_or(0.0)
    }

    /// Mass on the singleton hypothesis `index`.
    pub fn singleton_mass(&self, index: usize) -> f64 {
        self.mass(Subset::singleton(index))
    }

    /// Mass on Θ.
    pub fn uncertainty(&self) -> f64 {
        self.mass(self.frame.theta())
    }

    /// Focal elements in ascending mask order.
    pub fn focal_elements(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.masses.iter().map(|(&s, &m)| (s, m))
    }

    pub fn total(&self) -> f64 {
        self.masses.values().sum()
    }

    /// `Bel(A)`: total mass of the subsets of `A`.
    pub fn belief(&self, subset: Subset) -> f64 {
        self.focal_elements()
            .filter(|(b, _)| b.is_subset_of(subset))
            .map(|(_, m)| m)
            .sum::<f64>()
            .min(1.0)
    }

    /// `pl(A)`: total mass of the subsets that intersect `A`.
    pub fn plausibility(&self, subset: Subset) -> f64 {
        self.focal_elements()
            .filter(|(b, _)| b.intersects(subset))
            .map(|(_, m)| m)
            .sum::<f64>()
            .min(1.0)
    }

    fn check_frame(&self, other: &MassFunction) -> Result<(), EvidenceError> {
        if same_frame(&self.frame, &other.frame) {
            Ok(())
        } else {
            Err(EvidenceError::FrameMismatch)
        }
    }
}

/// Mass function for a detection confidence on a binary `{exists, absent}`
/// frame: `m(exists) = score`, `m(absent) = 1 - score`, nothing on Θ.
pub fn mass_from_confidence(frame: &Arc<Frame>, score: f64) -> Result<MassFunction, EvidenceError> {
    if frame.size() != 2 {
        return Err(EvidenceError::FrameArity {
            expected: 2,
            found: frame.size(),
        });
    }
    if !(0.0..=1.0).contains(&score) {
        return Err(EvidenceError::Score(score));
    }
    MassFunction::new(
        frame.clone(),
        [
            (Subset::singleton(Frame::EXISTS), score),
            (Subset::singleton(Frame::ABSENT), 1.0 - score),
        ],
    )
}

/// Relative compatibility of two pieces of evidence on hypothesis `k`:
/// `2 x y / (x^2 + y^2)` for masses `x`, `y`. Two zero masses count as full
/// agreement.
pub fn compatibility(
    mi: &MassFunction,
    mj: &MassFunction,
    k: usize,
) -> Result<f64, EvidenceError> {
    mi.check_frame(mj)?;
    let size = mi.frame.size();
    if k >= size {
        return Err(EvidenceError::HypothesisIndex { index: k, size });
    }
    Ok(compatibility_of(mi.singleton_mass(k), mj.singleton_mass(k)))
}

fn compatibility_of(x: f64, y: f64) -> f64 {
    let scale = x.max(y);
    if scale == 0.0 {
        return 1.0;
    }
    // Scaling keeps tiny masses from underflowing in the squares.
    let (u, v) = (x / scale, y / scale);
    (2.0 * u * v / (u * u + v * v)).min(1.0)
}

/// Evidence after compatibility weighting.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMassSet {
    original: Vec<MassFunction>,
    weights: Vec<Vec<f64>>,
    discounted: Vec<MassFunction>,
}

impl WeightedMassSet {
    pub fn original(&self) -> &[MassFunction] {
        &self.original
    }

    /// `weights()[i][k]` is the weight of evidence `i` on hypothesis `k`.
    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn discounted(&self) -> &[MassFunction] {
        &self.discounted
    }

    pub fn into_discounted(self) -> Vec<MassFunction> {
        self.discounted
    }
}

fn check_common_frame(evidence: &[MassFunction]) -> Result<(), EvidenceError> {
    if let Some((first, rest)) = evidence.split_first() {
        for m in rest {
            first.check_frame(m)?;
        }
    }
    Ok(())
}

/// Discounts every singleton mass by its weight, the mean compatibility of
/// that evidence with all others on the same hypothesis. Removed mass goes
/// to Θ. Inputs may only carry mass on singletons and Θ.
pub fn weight_masses(evidence: &[MassFunction]) -> Result<WeightedMassSet, EvidenceError> {
    let n = evidence.len();
    if n < 2 {
        return Err(EvidenceError::TooFewEvidence { needed: 2, found: n });
    }
    check_common_frame(evidence)?;
    let frame = evidence[0].frame.clone();
    let theta = frame.theta();
    for m in evidence {
        if let Some((s, _)) = m
            .focal_elements()
            .find(|(s, _)| !s.is_singleton() && *s != theta)
        {
            return Err(EvidenceError::UnsupportedStructure { mask: s.bits() });
        }
    }

    let size = frame.size();
    let weights: Vec<Vec<f64>> = (0..size)
        .map(|k| {
            let column: Vec<f64> = evidence.iter().map(|m| m.singleton_mass(k)).collect();
            (0..n)
                .map(|i| {
                    // Sum of R_ij over j != i, i.e. the absolute coefficient
                    // with the R_ii = 1 term already removed.
                    let absolute: f64 = (0..n)
                        .filter(|&j| j != i)
                        .map(|j| compatibility_of(column[i], column[j]))
                        .sum();
                    absolute / (n - 1) as f64
                })
                .collect()
        })
        .collect();
    // Transpose to evidence-major.
    let weights: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..size).map(|k| weights[k][i]).collect())
        .collect();

    let discounted = evidence
        .iter()
        .zip(&weights)
        .map(|(m, w)| {
            let singles: Vec<f64> = (0..size).map(|k| w[k] * m.singleton_mass(k)).collect();
            let rest = (1.0 - singles.iter().sum::<f64>()).max(0.0);
            let entries = singles
                .iter()
                .enumerate()
                .map(|(k, &v)| (Subset::singleton(k), v))
                .chain(std::iter::once((theta, rest)))
                .collect::<Vec<_>>();
            MassFunction::new(frame.clone(), entries)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(WeightedMassSet {
        original: evidence.to_vec(),
        weights,
        discounted,
    })
}

/// Dempster's rule for any number of mass functions on a common frame,
/// folded pairwise from the left.
pub fn dempster_combine(evidence: &[MassFunction]) -> Result<MassFunction, EvidenceError> {
    let (first, rest) = evidence
        .split_first()
        .ok_or(EvidenceError::TooFewEvidence { needed: 1, found: 0 })?;
    check_common_frame(evidence)?;
    rest.iter()
        .try_fold(first.clone(), |acc, m| combine_pair(&acc, m))
}

fn combine_pair(a: &MassFunction, b: &MassFunction) -> Result<MassFunction, EvidenceError> {
    let mut acc: BTreeMap<Subset, f64> = BTreeMap::new();
    let mut agreeing = 0.0;
    for (sa, ma) in a.focal_elements() {
        for (sb, mb) in b.focal_elements() {
            let joint = sa.intersect(sb);
            if joint.is_empty() {
                continue;
            }
            let product = ma * mb;
            agreeing += product;
            *acc.entry(joint).or_insert(0.0) += product;
        }
    }
    if agreeing <= TOTAL_CONFLICT_EPS {
        return Err(EvidenceError::TotalConflict(agreeing));
    }
    acc.retain(|_, m| {
        *m /= agreeing;
        *m >= PRUNE_EPS
    });
    let total: f64 = acc.values().sum();
    for m in acc.values_mut() {
        *m /= total;
    }
    Ok(MassFunction {
        frame: a.frame.clone(),
        masses: acc,
    })
}

/// Weighting and combination results kept together for reporting.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedFusion {
    pub weighted: WeightedMassSet,
    pub fused: MassFunction,
}

/// [`weight_masses`] followed by [`dempster_combine`] on the discounted
/// evidence.
pub fn fuse_weighted(evidence: &[MassFunction]) -> Result<MassFunction, EvidenceError> {
    fuse_weighted_detailed(evidence).map(|f| f.fused)
}

pub fn fuse_weighted_detailed(evidence: &[MassFunction]) -> Result<WeightedFusion, EvidenceError> {
    let weighted = weight_masses(evidence)?;
    let fused = dempster_combine(weighted.discounted())?;
    Ok(WeightedFusion { weighted, fused })
}
