//! Score-map providers and caches.

mod craft;
mod oracle;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use craft::CraftBackbone;
pub use oracle::{oracle_render, to_map_coord, CharacterLayout, GlyphCenter, GlyphKind};

use crate::datamodel::{rwt_io, ImageTensor, ScoreMap};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderMode {
    PretrainedBackbone,
    SyntheticOracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub mode: ProviderMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_path: Option<PathBuf>,
    #[serde(default = "ProviderConfig::default_sigma")]
    pub oracle_sigma_px: f64,
}

impl ProviderConfig {
    pub const DEFAULT_ORACLE_SIGMA_PX: f64 = 3.0;

    fn default_sigma() -> f64 {
        Self::DEFAULT_ORACLE_SIGMA_PX
    }

    pub fn oracle(sigma_px: f64) -> Self {
        Self {
            mode: ProviderMode::SyntheticOracle,
            weights_path: None,
            oracle_sigma_px: sigma_px,
        }
    }

    pub fn pretrained(weights: impl Into<PathBuf>) -> Self {
        Self {
            mode: ProviderMode::PretrainedBackbone,
            weights_path: Some(weights.into()),
            oracle_sigma_px: Self::DEFAULT_ORACLE_SIGMA_PX,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, &self.weights_path) {
            (ProviderMode::PretrainedBackbone, None) => {
                return Err(Error::Config("pretrained_backbone mode needs weights_path".into()))
            }
            (ProviderMode::SyntheticOracle, Some(_)) => {
                return Err(Error::Config("weights_path is only valid for pretrained_backbone".into()))
            }
            _ => {}
        }
        if !(self.oracle_sigma_px > 0.0) {
            return Err(Error::Config(format!(
                "oracle_sigma_px must be positive, got {}",
                self.oracle_sigma_px
            )));
        }
        Ok(())
    }
}

/// An initialised score-map producer. Read-only after construction.
pub enum ScoreMapProvider {
    Oracle { sigma_px: f64 },
    Backbone(Box<CraftBackbone>),
}

impl ScoreMapProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(match cfg.mode {
            ProviderMode::SyntheticOracle => ScoreMapProvider::Oracle {
                sigma_px: cfg.oracle_sigma_px,
            },
            ProviderMode::PretrainedBackbone => {
                let path = cfg.weights_path.as_deref().expect("validated");
                ScoreMapProvider::Backbone(Box::new(CraftBackbone::load(path)?))
            }
        })
    }

    /// Computes the `(h/2, w/2)` score map of `image`. The oracle reads the
    /// ground-truth `layout`; the backbone ignores it.
    pub fn compute(&self, image: &ImageTensor, layout: Option<&CharacterLayout>) -> Result<ScoreMap> {
        image.ensure_pipeline_ready()?;
        match self {
            ScoreMapProvider::Oracle { sigma_px } => {
                let layout = layout.ok_or_else(|| {
                    Error::Config("synthetic oracle needs a character layout".into())
                })?;
                oracle_render(layout, image.height(), image.width(), *sigma_px)
            }
            ScoreMapProvider::Backbone(net) => net.score_map(image),
        }
    }
}

/// Convenience wrapper around [`ScoreMapProvider`] for one-off calls.
pub fn compute_score_maps(
    image: &ImageTensor,
    cfg: &ProviderConfig,
    layout: Option<&CharacterLayout>,
) -> Result<ScoreMap> {
    ScoreMapProvider::new(cfg)?.compute(image, layout)
}

/// Lookup of per-image score maps.
pub trait ScoreMapSource {
    fn score_map(&self, image_id: &str) -> Result<ScoreMap>;
}

impl ScoreMapSource for HashMap<String, ScoreMap> {
    fn score_map(&self, image_id: &str) -> Result<ScoreMap> {
        self.get(image_id)
            .cloned()
            .ok_or_else(|| Error::MissingScoreMap(image_id.to_string()))
    }
}

/// Directory of `<image_id>.rwt` score-map files.
#[derive(Debug, Clone)]
pub struct ScoreMapDir {
    root: PathBuf,
}

impl ScoreMapDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.root
            .join(format!("{image_id}.{}", rwt_io::TENSOR_EXTENSION))
    }

    pub fn store(&self, image_id: &str, map: &ScoreMap) -> Result<()> {
        std::fs::create_dir_all(&self.root).map_err(|e| Error::io(&self.root, e))?;
        rwt_io::write_tensor(&self.path_for(image_id), map)
    }
}

impl ScoreMapSource for ScoreMapDir {
    fn score_map(&self, image_id: &str) -> Result<ScoreMap> {
        let path = self.path_for(image_id);
        if !path.exists() {
            return Err(Error::MissingScoreMap(image_id.to_string()));
        }
        rwt_io::read_score_map(&path)
    }
}

/// Axis-aligned rectangle in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBox {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

/// Bounding boxes of the 8-connected components of region scores strictly
/// above `threshold`, scaled to image coordinates. For display only.
pub fn detector_boxes(map: &ScoreMap, threshold: f32) -> Vec<TextBox> {
    let (h, w) = (map.height(), map.width());
    let region = map.region();
    let mut seen = vec![false; h * w];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..h * w {
        if seen[start] || region[start] <= threshold {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let (mut y0, mut y1, mut x0, mut x1) = (h, 0, w, 0);
        while let Some(idx) = stack.pop() {
            let (y, x) = (idx / w, idx % w);
            y0 = y0.min(y);
            y1 = y1.max(y);
            x0 = x0.min(x);
            x1 = x1.max(x);
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let (ny, nx) = (y as i64 + dy, x as i64 + dx);
                    if ny < 0 || nx < 0 || ny >= h as i64 || nx >= w as i64 {
                        continue;
                    }
                    let n = ny as usize * w + nx as usize;
                    if !seen[n] && region[n] > threshold {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        boxes.push(TextBox {
            x: 2 * x0 as u32,
            y: 2 * y0 as u32,
            width: 2 * (x1 - x0 + 1) as u32,
            height: 2 * (y1 - y0 + 1) as u32,
        });
    }
    boxes
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gray(side: usize) -> ImageTensor {
        ImageTensor::filled(side, side, 0.5).unwrap()
    }

    #[test]
    fn oracle_on_blank_image_is_zero() {
        let map = compute_score_maps(&gray(64), &ProviderConfig::oracle(4.0), Some(&CharacterLayout::default())).unwrap();
        assert_eq!((map.height(), map.width()), (32, 32));
        assert!(map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn oracle_without_layout_is_an_error() {
        assert!(compute_score_maps(&gray(64), &ProviderConfig::oracle(4.0), None).is_err());
    }

    #[test]
    fn config_requires_weights_exactly_in_backbone_mode() {
        let mut cfg = ProviderConfig::oracle(3.0);
        assert!(cfg.validate().is_ok());
        cfg.weights_path = Some("w.safetensors".into());
        assert!(cfg.validate().is_err());
        cfg.mode = ProviderMode::PretrainedBackbone;
        assert!(cfg.validate().is_ok());
        cfg.weights_path = None;
        assert!(cfg.validate().is_err());
        assert!(ProviderConfig::oracle(0.0).validate().is_err());
    }

    #[test]
    fn missing_weights_fail_at_initialisation() {
        let cfg = ProviderConfig::pretrained("/nonexistent/craft.safetensors");
        assert!(matches!(ScoreMapProvider::new(&cfg), Err(Error::Weights(_))));
    }

    #[test]
    fn small_images_are_rejected_before_inference() {
        let cfg = ProviderConfig::oracle(3.0);
        let small = ImageTensor::filled(16, 16, 0.0).unwrap();
        assert!(compute_score_maps(&small, &cfg, Some(&CharacterLayout::default())).is_err());
    }

    #[test]
    fn zero_map_has_no_boxes() {
        assert!(detector_boxes(&ScoreMap::zeros(16, 16).unwrap(), 0.8).is_empty());
    }

    #[test]
    fn one_blob_gives_one_enclosing_box() {
        let layout = CharacterLayout {
            glyphs: vec![GlyphCenter {
                center_x: 25.0,
                center_y: 21.0,
                scale: 6.0,
                kind: GlyphKind::Scene,
            }],
            links: vec![],
        };
        let map = oracle_render(&layout, 48, 64, 6.0).unwrap();
        let boxes = detector_boxes(&map, 0.8);
        assert_eq!(boxes.len(), 1);
        // Independent count: cells with exp(-r^2 / 18) > 0.8, around cell (10, 12).
        let above: Vec<(usize, usize)> = (0..24)
            .flat_map(|i| (0..32).map(move |j| (i, j)))
            .filter(|&(i, j)| {
                let r2 = (i as f64 - 10.0).powi(2) + (j as f64 - 12.0).powi(2);
                (-r2 / 18.0).exp() > 0.8
            })
            .collect();
        let ymin = above.iter().map(|p| p.0).min().unwrap();
        let ymax = above.iter().map(|p| p.0).max().unwrap();
        let xmin = above.iter().map(|p| p.1).min().unwrap();
        let xmax = above.iter().map(|p| p.1).max().unwrap();
        assert_eq!(
            boxes[0],
            TextBox {
                x: 2 * xmin as u32,
                y: 2 * ymin as u32,
                width: 2 * (xmax - xmin + 1) as u32,
                height: 2 * (ymax - ymin + 1) as u32,
            }
        );
    }

    #[test]
    fn separate_blobs_give_separate_boxes() {
        let mut region = vec![0.0f32; 8 * 8];
        region[9] = 0.9;
        region[10] = 0.95;
        region[54] = 0.85;
        let map = ScoreMap::from_planes(8, 8, region, vec![0.0; 64]).unwrap();
        let boxes = detector_boxes(&map, 0.8);
        assert_eq!(boxes.len(), 2);
        assert_eq!(boxes[0], TextBox { x: 2, y: 2, width: 4, height: 2 });
        assert_eq!(boxes[1], TextBox { x: 12, y: 12, width: 2, height: 2 });
    }

    #[test]
    fn directory_cache_round_trips_and_reports_missing() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreMapDir::new(dir.path().join("maps"));
        let map = ScoreMap::new(2, 2, vec![0.5; 8]).unwrap();
        cache.store("img-1", &map).unwrap();
        assert_eq!(cache.score_map("img-1").unwrap(), map);
        assert!(matches!(cache.score_map("img-2"), Err(Error::MissingScoreMap(_))));
    }
}
