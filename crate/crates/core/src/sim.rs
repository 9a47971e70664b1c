//! Synthetic paired detections: ground-truth scenes observed by two
//! imperfect sensors with independent failure processes.
//!
//! Randomness is drawn from ChaCha8 with one stream per scene: the stream is
//! seeded with `seed` and selected with the scene index, so scenes can be
//! generated in any order or in parallel with identical results. Within a
//! scene, draws happen in a fixed order: target count, target placement,
//! sensor A (per-target outcomes, then false positives), sensor B (same).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::geometry::{iou, BoundingBox};
use crate::matching::Detection;
use crate::metrics::GroundTruthBox;
use crate::pipeline::Scene;

/// Targets within a scene never overlap more than this.
pub const MAX_TARGET_OVERLAP: f64 = 0.3;

/// Placement attempts per target before giving up.
pub const PLACEMENT_ATTEMPTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorModel {
    /// Source tag written on every detection.
    pub name: String,
    pub miss_rate: f64,
    pub occlusion_rate: f64,
    /// Expected spurious detections per scene (Poisson mean).
    pub false_positive_rate: f64,
    /// Standard deviation of center jitter, normalized units.
    pub center_noise_sigma: f64,
    /// Standard deviation of the log-size jitter.
    pub size_noise_sigma: f64,
    pub score_tp: BetaParams,
    pub score_fp: BetaParams,
}

impl Default for SensorModel {
    fn default() -> Self {
        Self {
            name: "sensor".to_owned(),
            miss_rate: 0.05,
            occlusion_rate: 0.0,
            false_positive_rate: 0.5,
            center_noise_sigma: 0.004,
            size_noise_sigma: 0.05,
            score_tp: BetaParams {
                alpha: 17.0,
                beta: 3.0,
            },
            score_fp: BetaParams {
                alpha: 4.0,
                beta: 6.0,
            },
        }
    }
}

impl SensorModel {
    /// A sensor that reports every target exactly.
    pub fn perfect(name: &str) -> Self {
        Self {
            name: name.to_owned(),
            miss_rate: 0.0,
            occlusion_rate: 0.0,
            false_positive_rate: 0.0,
            center_noise_sigma: 0.0,
            size_noise_sigma: 0.0,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str, v: f64| SimError::Config(format!("{}: {what} {v}", self.name));
        for (what, v) in [("miss_rate", self.miss_rate), ("occlusion_rate", self.occlusion_rate)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(bad(what, v));
            }
        }
        for (what, v) in [
            ("false_positive_rate", self.false_positive_rate),
            ("center_noise_sigma", self.center_noise_sigma),
            ("size_noise_sigma", self.size_noise_sigma),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(bad(what, v));
            }
        }
        for (what, p) in [("score_tp", self.score_tp), ("score_fp", self.score_fp)] {
            if !(p.alpha.is_finite() && p.alpha > 0.0 && p.beta.is_finite() && p.beta > 0.0) {
                return Err(SimError::Config(format!(
                    "{}: {what} needs positive alpha and beta",
                    self.name
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub scenes: usize,
    /// Inclusive `[min, max]` number of targets per scene.
    pub targets_per_scene: (usize, usize),
    /// Inclusive range for target width and height, normalized.
    pub size_range: (f64, f64),
    pub image_width_px: u32,
    pub image_height_px: u32,
    pub class_id: u32,
    pub sensor_a: SensorModel,
    pub sensor_b: SensorModel,
    /// Translation applied to every box of sensor B.
    pub offset_b: (f64, f64),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            scenes: 50,
            targets_per_scene: (5, 15),
            size_range: (0.04, 0.12),
            image_width_px: 640,
            image_height_px: 640,
            class_id: 0,
            sensor_a: SensorModel {
                name: "optical".to_owned(),
                occlusion_rate: 0.25,
                ..SensorModel::default()
            },
            sensor_b: SensorModel {
                name: "sar".to_owned(),
                miss_rate: 0.15,
                false_positive_rate: 1.0,
                ..SensorModel::default()
            },
            offset_b: (0.01, 0.01),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let (lo, hi) = self.targets_per_scene;
        if lo > hi {
            return Err(SimError::Config(format!("targets_per_scene [{lo}, {hi}] is empty")));
        }
        let (lo, hi) = self.size_range;
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(SimError::Config(format!(
                "size_range [{lo}, {hi}] must satisfy 0 < min <= max <= 1"
            )));
        }
        if self.image_width_px == 0 || self.image_height_px == 0 {
            return Err(SimError::Config("image size must be positive".to_owned()));
        }
        if !(self.offset_b.0.is_finite() && self.offset_b.1.is_finite()) {
            return Err(SimError::Config("offset_b must be finite".to_owned()));
        }
        self.sensor_a.validate()?;
        self.sensor_b.validate()
    }
}

/// One generated image with both sensors' views.
#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub image_id: String,
    pub ground_truth: Vec<GroundTruthBox>,
    pub detections_a: Vec<Detection>,
    pub detections_b: Vec<Detection>,
    /// Per target, whether sensor A reported it.
    pub seen_by_a: Vec<bool>,
    /// Per target, whether sensor B reported it.
    pub seen_by_b: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimDataset {
    pub scenes: Vec<SimScene>,
}

impl SimDataset {
    pub fn ground_truth(&self) -> Vec<GroundTruthBox> {
        self.scenes
            .iter()
            .flat_map(|s| s.ground_truth.iter().cloned())
            .collect()
    }

    pub fn detections_a(&self) -> Vec<Detection> {
        self.scenes
            .iter()
            .flat_map(|s| s.detections_a.iter().cloned())
            .collect()
    }

    pub fn detections_b(&self) -> Vec<Detection> {
        self.scenes
            .iter()
            .flat_map(|s| s.detections_b.iter().cloned())
            .collect()
    }

    pub fn scenes_a(&self) -> Vec<Scene> {
        self.scenes
            .iter()
            .map(|s| Scene::new(s.image_id.clone(), s.detections_a.clone()))
            .collect()
    }

    pub fn scenes_b(&self) -> Vec<Scene> {
        self.scenes
            .iter()
            .map(|s| Scene::new(s.image_id.clone(), s.detections_b.clone()))
            .collect()
    }

    pub fn target_count(&self) -> usize {
        self.scenes.iter().map(|s| s.ground_truth.len()).sum()
    }
}

pub fn image_id(index: usize) -> String {
    format!("scene_{index:05}")
}

/// RNG for one scene: the seed's ChaCha8 generator on stream `index`.
pub fn scene_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

pub fn generate(cfg: &ScenarioConfig) -> Result<SimDataset, SimError> {
    cfg.validate()?;
    let scenes = (0..cfg.scenes)
        .into_par_iter()
        .map(|index| generate_scene(cfg, index))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SimDataset { scenes })
}

fn generate_scene(cfg: &ScenarioConfig, index: usize) -> Result<SimScene, SimError> {
    let mut rng = scene_rng(cfg.seed, index);
    let id = image_id(index);
    let (lo, hi) = cfg.targets_per_scene;
    let count = rng.random_range(lo..=hi);

    let mut targets: Vec<BoundingBox> = Vec::with_capacity(count);
    for target in 0..count {
        let placed = (0..PLACEMENT_ATTEMPTS).find_map(|_| {
            let candidate = random_box(&mut rng, cfg.size_range);
            targets
                .iter()
                .all(|t| iou(t, &candidate) <= MAX_TARGET_OVERLAP)
                .then_some(candidate)
        });
        match placed {
            Some(b) => targets.push(b),
            None => {
                return Err(SimError::Placement {
                    scene: index,
                    target,
                    attempts: PLACEMENT_ATTEMPTS,
                })
            }
        }
    }

    let (detections_a, seen_by_a) =
        observe(&mut rng, cfg, &cfg.sensor_a, &targets, &id, (0.0, 0.0))?;
    let (detections_b, seen_by_b) = observe(&mut rng, cfg, &cfg.sensor_b, &targets, &id, cfg.offset_b)?;

    Ok(SimScene {
        ground_truth: targets
            .into_iter()
            .map(|b| GroundTruthBox::new(b, cfg.class_id, id.clone()))
            .collect(),
        image_id: id,
        detections_a,
        detections_b,
        seen_by_a,
        seen_by_b,
    })
}

fn random_box(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> BoundingBox {
    let w = rng.random_range(lo..=hi);
    let h = rng.random_range(lo..=hi);
    let cx = rng.random_range(w / 2.0..=1.0 - w / 2.0);
    let cy = rng.random_range(h / 2.0..=1.0 - h / 2.0);
    BoundingBox::new(cx, cy, w, h).expect("size range validated positive")
}

fn observe(
    rng: &mut ChaCha8Rng,
    cfg: &ScenarioConfig,
    sensor: &SensorModel,
    targets: &[BoundingBox],
    image_id: &str,
    (dx, dy): (f64, f64),
) -> Result<(Vec<Detection>, Vec<bool>), SimError> {
    let center_noise = Normal::new(0.0, sensor.center_noise_sigma).expect("validated sigma");
    let size_noise = Normal::new(0.0, sensor.size_noise_sigma).expect("validated sigma");
    let score_tp = Beta::new(sensor.score_tp.alpha, sensor.score_tp.beta).expect("validated beta");
    let score_fp = Beta::new(sensor.score_fp.alpha, sensor.score_fp.beta).expect("validated beta");
    let detection = |bbox: BoundingBox, score: f64| {
        Detection::new(bbox, score.clamp(0.0, 1.0), cfg.class_id, image_id, sensor.name.as_str())
            .expect("score clamped into [0, 1]")
    };

    let mut detections = Vec::with_capacity(targets.len());
    let mut seen = Vec::with_capacity(targets.len());
    for target in targets {
        let occluded = rng.random_bool(sensor.occlusion_rate);
        let missed = rng.random_bool(sensor.miss_rate);
        if occluded || missed {
            seen.push(false);
            continue;
        }
        let bbox = BoundingBox::new(
            target.cx() + center_noise.sample(rng) + dx,
            target.cy() + center_noise.sample(rng) + dy,
            target.w() * size_noise.sample(rng).exp(),
            target.h() * size_noise.sample(rng).exp(),
        )?;
        detections.push(detection(bbox, score_tp.sample(rng)));
        seen.push(true);
    }

    let spurious = if sensor.false_positive_rate > 0.0 {
        let poisson = Poisson::new(sensor.false_positive_rate).expect("validated rate");
        poisson.sample(rng) as usize
    } else {
        0
    };
    for _ in 0..spurious {
        let bbox = random_box(rng, cfg.size_range).translated(dx, dy);
        detections.push(detection(bbox, score_fp.sample(rng)));
    }
    Ok((detections, seen))
}
