//! Candidate selection by thresholded region-score mass.
//!
//! The gate score of an `h x w` image is
//!
//! ```text
//! G = 4 / (h * w) * sum_{i, j} R[i, j] * [R[i, j] > T]
//! ```
//!
//! over the whole `(h/2, w/2)` region channel `R`. Images with `G` above a
//! small cutoff are sent to annotators.

use serde::{Deserialize, Serialize};

use crate::datamodel::{DatasetManifest, ScoreMap};
use crate::error::{Error, Result};
use crate::scoremap::ScoreMapSource;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub region_threshold: f64,
    pub gate_cutoff: f64,
    /// `true` counts only scores strictly above the threshold.
    pub strict_indicator: bool,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            region_threshold: 0.8,
            gate_cutoff: 5e-4,
            strict_indicator: true,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.region_threshold > 0.0 && self.region_threshold < 1.0) {
            return Err(Error::Config(format!(
                "region_threshold must lie in (0, 1), got {}",
                self.region_threshold
            )));
        }
        if !(self.gate_cutoff > 0.0) {
            return Err(Error::Config(format!(
                "gate_cutoff must be positive, got {}",
                self.gate_cutoff
            )));
        }
        Ok(())
    }
}

pub fn region_gate_score(map: &ScoreMap, cfg: &GateConfig) -> f64 {
    let (h, w) = map.image_dims();
    let t = cfg.region_threshold;
    let mass: f64 = map
        .region()
        .iter()
        .map(|&r| r as f64)
        .filter(|&r| if cfg.strict_indicator { r > t } else { r >= t })
        .fold(0.0, |a, r| a + r);
    4.0 * mass / (h * w) as f64
}

/// Records every image's gate score and keeps those strictly above the cutoff,
/// preserving order.
pub fn select_candidates(
    manifest: &DatasetManifest,
    maps: &dyn ScoreMapSource,
    cfg: &GateConfig,
) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut kept = DatasetManifest::new();
    for record in manifest {
        let map = maps.score_map(&record.image_id)?;
        let g = region_gate_score(&map, cfg);
        log::debug!("{}: G = {g:.6}", record.image_id);
        if g > cfg.gate_cutoff {
            let mut r = record.clone();
            r.gate_score = Some(g);
            kept.push(r)?;
        }
    }
    log::info!("selected {} of {} images", kept.len(), manifest.len());
    Ok(kept)
}
