//! Labelled examples prepared for the training loop.

use std::path::Path;

use crate::datamodel::{DatasetManifest, ImageTensor, ScoreMap, Split};
use crate::scoremap::ScoreMapSource;
use crate::{Error, Result};

use super::preprocess::{resize_and_pad, resize_and_pad_map};

/// One preprocessed image with its score map and binary target.
#[derive(Debug, Clone)]
pub struct Example {
    pub id: String,
    pub image: ImageTensor,
    pub map: ScoreMap,
    /// 1 for positive, 0 for negative.
    pub target: f32,
}

impl Example {
    /// Resizes both inputs onto the square training canvas.
    pub fn prepared(id: impl Into<String>, image: &ImageTensor, map: &ScoreMap, target: f32, side: usize) -> Result<Self> {
        if !map.matches_image(image) {
            return Err(Error::ShapeMismatch(format!(
                "score map {}x{} does not match image {}x{}",
                map.height(),
                map.width(),
                image.height(),
                image.width()
            )));
        }
        Ok(Self {
            id: id.into(),
            image: resize_and_pad(image, side)?,
            map: resize_and_pad_map(map, side)?,
            target,
        })
    }

    pub fn is_positive(&self) -> bool {
        self.target >= 0.5
    }
}

/// Loads every record of `split` (all records when `None`) that carries a
/// binary class. Image paths are resolved against `root`.
pub fn load_examples(
    manifest: &DatasetManifest,
    root: &Path,
    maps: &dyn ScoreMapSource,
    split: Option<Split>,
    side: usize,
) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for rec in manifest.iter() {
        if split.is_some() && rec.split != split {
            continue;
        }
        let Some(class) = rec.binary_class else {
            continue;
        };
        let image = ImageTensor::load(&root.join(&rec.image_path))?;
        let map = maps.score_map(&rec.image_id)?;
        out.push(Example::prepared(&rec.image_id, &image, &map, class.as_target(), side)?);
    }
    Ok(out)
}

/// `(positives, negatives)`.
pub fn class_counts(examples: &[Example]) -> (usize, usize) {
    let pos = examples.iter().filter(|e| e.is_positive()).count();
    (pos, examples.len() - pos)
}
