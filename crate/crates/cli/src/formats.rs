//! JSON interchange files. Boxes are `[cx, cy, w, h]` normalized to the
//! image size unless read with [`BoxFormat::PixelCorners`].

use std::collections::HashMap;
use std::path::Path;

use ddfuse_core::geometry::BoundingBox;
use ddfuse_core::matching::Detection;
use ddfuse_core::metrics::GroundTruthBox;
use ddfuse_core::pipeline::{FusedScene, Provenance, Scene};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const FORMAT_VERSION: &str = "1.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionFile {
    pub format_version: String,
    pub source: String,
    pub scenes: Vec<DetectionScene>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionScene {
    pub image_id: String,
    pub image_width_px: u32,
    pub image_height_px: u32,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub bbox: [f64; 4],
    pub score: f64,
    pub class_id: u32,
    /// Fused output only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uncertainty: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_a: Option<[f64; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_b: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthFile {
    pub format_version: String,
    pub scenes: Vec<GroundTruthScene>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthScene {
    pub image_id: String,
    pub image_width_px: u32,
    pub image_height_px: u32,
    pub boxes: Vec<GroundTruthRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthRecord {
    pub bbox: [f64; 4],
    pub class_id: u32,
}

/// How `bbox` arrays are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BoxFormat {
    #[default]
    Normalized,
    /// `[x1, y1, x2, y2]` in pixels of the scene's image.
    PixelCorners,
}

pub fn to_array(b: &BoundingBox) -> [f64; 4] {
    [b.cx(), b.cy(), b.w(), b.h()]
}

fn to_box(raw: [f64; 4], format: BoxFormat, width: u32, height: u32, at: &str) -> Result<BoundingBox, CliError> {
    let [a, b, c, d] = raw;
    let parsed = match format {
        BoxFormat::Normalized => BoundingBox::new(a, b, c, d),
        BoxFormat::PixelCorners => {
            BoundingBox::from_pixel_corners(a, b, c, d, f64::from(width), f64::from(height))
        }
    };
    parsed.map_err(|e| CliError::Parse(format!("{at}: {e}")))
}

fn check_header(version: &str, scenes: impl Iterator<Item = (u32, u32)>) -> Result<(), CliError> {
    if version != FORMAT_VERSION {
        return Err(CliError::Parse(format!(
            "format_version: expected \"{FORMAT_VERSION}\", found \"{version}\""
        )));
    }
    for (i, (w, h)) in scenes.enumerate() {
        if w == 0 || h == 0 {
            return Err(CliError::Parse(format!("scenes[{i}]: image size {w}x{h} must be positive")));
        }
    }
    Ok(())
}

impl DetectionFile {
    pub fn new(source: impl Into<String>, scenes: Vec<DetectionScene>) -> Self {
        Self {
            format_version: FORMAT_VERSION.to_owned(),
            source: source.into(),
            scenes,
        }
    }

    /// Validated scenes. Detections take the file's `source` tag.
    pub fn to_scenes(&self, format: BoxFormat) -> Result<Vec<Scene>, CliError> {
        check_header(
            &self.format_version,
            self.scenes.iter().map(|s| (s.image_width_px, s.image_height_px)),
        )?;
        self.scenes
            .iter()
            .enumerate()
            .map(|(i, scene)| {
                let detections = scene
                    .detections
                    .iter()
                    .enumerate()
                    .map(|(j, r)| {
                        let at = format!("scenes[{i}].detections[{j}]");
                        let bbox = to_box(r.bbox, format, scene.image_width_px, scene.image_height_px, &at)?;
                        Detection::new(bbox, r.score, r.class_id, scene.image_id.as_str(), self.source.as_str())
                            .map_err(|e| CliError::Parse(format!("{at}: {e}")))
                    })
                    .collect::<Result<_, _>>()?;
                Ok(Scene::new(scene.image_id.clone(), detections))
            })
            .collect()
    }

    /// Image sizes by id.
    pub fn image_sizes(&self) -> HashMap<&str, (u32, u32)> {
        self.scenes
            .iter()
            .map(|s| (s.image_id.as_str(), (s.image_width_px, s.image_height_px)))
            .collect()
    }

    pub fn from_scenes(source: &str, scenes: &[Scene], image_size: (u32, u32)) -> Self {
        let scenes = scenes
            .iter()
            .map(|s| DetectionScene {
                image_id: s.image_id.clone(),
                image_width_px: image_size.0,
                image_height_px: image_size.1,
                detections: s
                    .detections
                    .iter()
                    .map(|d| DetectionRecord {
                        bbox: to_array(d.bbox()),
                        score: d.score(),
                        class_id: d.class_id(),
                        provenance: None,
                        uncertainty: None,
                        box_a: None,
                        box_b: None,
                    })
                    .collect(),
            })
            .collect();
        Self::new(source, scenes)
    }

    /// Fused output; image sizes are looked up by scene id.
    pub fn from_fused(source: &str, fused: &[FusedScene], sizes: &HashMap<&str, (u32, u32)>) -> Self {
        let scenes = fused
            .iter()
            .map(|s| {
                let (w, h) = sizes.get(s.image_id.as_str()).copied().unwrap_or((1, 1));
                DetectionScene {
                    image_id: s.image_id.clone(),
                    image_width_px: w,
                    image_height_px: h,
                    detections: s
                        .detections
                        .iter()
                        .map(|d| DetectionRecord {
                            bbox: to_array(&d.bbox),
                            score: d.score,
                            class_id: d.class_id,
                            provenance: Some(d.provenance),
                            uncertainty: Some(d.uncertainty),
                            box_a: d.box_a.as_ref().map(to_array),
                            box_b: d.box_b.as_ref().map(to_array),
                        })
                        .collect(),
                }
            })
            .collect();
        Self::new(source, scenes)
    }
}

impl GroundTruthFile {
    pub fn to_boxes(&self, format: BoxFormat) -> Result<Vec<GroundTruthBox>, CliError> {
        check_header(
            &self.format_version,
            self.scenes.iter().map(|s| (s.image_width_px, s.image_height_px)),
        )?;
        let mut out = Vec::new();
        for (i, scene) in self.scenes.iter().enumerate() {
            for (j, r) in scene.boxes.iter().enumerate() {
                let at = format!("scenes[{i}].boxes[{j}]");
                let bbox = to_box(r.bbox, format, scene.image_width_px, scene.image_height_px, &at)?;
                out.push(GroundTruthBox::new(bbox, r.class_id, scene.image_id.clone()));
            }
        }
        Ok(out)
    }

    pub fn from_boxes(image_ids: &[String], boxes: &[GroundTruthBox], image_size: (u32, u32)) -> Self {
        let mut scenes: Vec<GroundTruthScene> = image_ids
            .iter()
            .map(|id| GroundTruthScene {
                image_id: id.clone(),
                image_width_px: image_size.0,
                image_height_px: image_size.1,
                boxes: Vec::new(),
            })
            .collect();
        let index: HashMap<&str, usize> =
            image_ids.iter().enumerate().map(|(i, id)| (id.as_str(), i)).collect();
        for b in boxes {
            if let Some(&i) = index.get(b.image_id.as_str()) {
                scenes[i].boxes.push(GroundTruthRecord {
                    bbox: to_array(&b.bbox),
                    class_id: b.class_id,
                });
            }
        }
        Self {
            format_version: FORMAT_VERSION.to_owned(),
            scenes,
        }
    }
}

/// Reads a JSON file, reporting the failing field path and position.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let inner = e.into_inner();
        if field == "." || field == "?" {
            CliError::Parse(format!("{}: {inner}", path.display()))
        } else {
            CliError::Parse(format!("{}: field `{field}`: {inner}", path.display()))
        }
    })
}
