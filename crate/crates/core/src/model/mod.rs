//! Mask-attention classifier and its two comparison variants.
//!
//! `craft_masked` mixes the two score-map channels with a large convolution,
//! rectifies, upsamples ×2 and multiplies the image before a residual head.
//! `unmasked_resnet` is the same head on the raw image, and
//! `binarized_linear` is logistic regression on the flattened score maps.

mod attention;
mod conv;
mod kernel;
mod params;
mod resnet;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use candle_core::{DType, Device, Tensor, Var, D};
use serde::{Deserialize, Serialize};

pub use attention::{attention_mask, AttentionParams, DEFAULT_INIT_SIGMA, DEFAULT_KERNEL_SIZE};
pub use conv::mask_conv;
pub use kernel::{gaussian_kernel, upsample2x, upsample2x_plane};
pub use params::{Param, ParamStore};
pub use resnet::{ResNetHead, STEM_WEIGHT};

use attention::AttentionLayer;
use params::Init;

use crate::datamodel::rwt_io::{read_bundle, write_bundle};
use crate::datamodel::{ImageTensor, ScoreMap};
use crate::{Error, Result};

pub const ATTENTION_KERNEL: &str = attention::KERNEL_NAME;
pub const ATTENTION_BIAS: &str = attention::BIAS_NAME;
pub const LINEAR_WEIGHT: &str = "linear.weight";
pub const LINEAR_BIAS: &str = "linear.bias";

const CHECKPOINT_FORMAT: &str = "rwt-checkpoint/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModelVariant {
    #[default]
    CraftMasked,
    UnmaskedResnet,
    BinarizedLinear,
}

impl ModelVariant {
    pub const ALL: [ModelVariant; 3] = [
        ModelVariant::CraftMasked,
        ModelVariant::UnmaskedResnet,
        ModelVariant::BinarizedLinear,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelVariant::CraftMasked => "craft_masked",
            ModelVariant::UnmaskedResnet => "unmasked_resnet",
            ModelVariant::BinarizedLinear => "binarized_linear",
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    /// Accepts `craft_masked` and `craft-masked` spellings.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        ModelVariant::ALL
            .into_iter()
            .find(|v| v.as_str() == norm)
            .ok_or_else(|| Error::InvalidValue(format!("unknown model variant {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub variant: ModelVariant,
    /// Side of the square network input; the linear baseline's grid is half.
    pub image_side: usize,
    pub head_width: usize,
    pub kernel_size: usize,
    pub init_sigma_px: f64,
    /// Multiplier on the sum-1 Gaussian used to initialise the mixing layer.
    pub init_gain: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: ModelVariant::CraftMasked,
            image_side: 224,
            head_width: 64,
            kernel_size: DEFAULT_KERNEL_SIZE,
            init_sigma_px: DEFAULT_INIT_SIGMA,
            init_gain: 1.0,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn new(variant: ModelVariant) -> Self {
        Self {
            variant,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.image_side < 32 || self.image_side % 2 != 0 {
            return Err(Error::Config(format!(
                "image_side must be even and at least 32, got {}",
                self.image_side
            )));
        }
        if self.head_width == 0 {
            return Err(Error::Config("head_width must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!("kernel_size must be odd, got {}", self.kernel_size)));
        }
        if !(self.init_sigma_px > 0.0) || !self.init_gain.is_finite() {
            return Err(Error::Config("init_sigma_px must be positive and init_gain finite".into()));
        }
        Ok(())
    }

    /// Score-map grid consumed by the linear baseline.
    pub fn canonical_grid(&self) -> (usize, usize) {
        (self.image_side / 2, self.image_side / 2)
    }
}

/// Score map resampled to `grid`, flattened region plane first.
pub fn binarized_features(map: &ScoreMap, grid: (usize, usize)) -> Result<Vec<f32>> {
    if (map.height(), map.width()) == grid {
        return Ok(map.data().to_vec());
    }
    Ok(map.resized(grid.0, grid.1)?.data().to_vec())
}

/// Flat index of `(channel, y, x)` in [`binarized_features`] output.
pub fn feature_index(grid: (usize, usize), channel: usize, y: usize, x: usize) -> usize {
    (channel * grid.0 + y) * grid.1 + x
}

pub fn images_to_tensor(images: &[&ImageTensor]) -> Result<Tensor> {
    let first = images.first().ok_or(Error::Empty("image batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(images.len() * 3 * h * w);
    for img in images {
        if (img.height(), img.width()) != (h, w) {
            return Err(Error::ShapeMismatch(format!(
                "batch mixes {}x{} and {}x{} images",
                h,
                w,
                img.height(),
                img.width()
            )));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::from_vec(data, (images.len(), 3, h, w), &Device::Cpu)?)
}

pub fn maps_to_tensor(maps: &[&ScoreMap]) -> Result<Tensor> {
    let first = maps.first().ok_or(Error::Empty("score-map batch"))?;
    let (h, w) = (first.height(), first.width());
    let mut data = Vec::with_capacity(maps.len() * 2 * h * w);
    for m in maps {
        if (m.height(), m.width()) != (h, w) {
            return Err(Error::ShapeMismatch("batch mixes score-map sizes".into()));
        }
        data.extend_from_slice(m.data());
    }
    Ok(Tensor::from_vec(data, (maps.len(), 2, h, w), &Device::Cpu)?)
}

struct LinearHead {
    weight: Var,
    bias: Var,
}

impl LinearHead {
    fn forward(&self, maps: &Tensor) -> Result<Tensor> {
        let x = maps.flatten_from(1)?;
        Ok(x
            .matmul(&self.weight.as_tensor().t()?)?
            .broadcast_add(self.bias.as_tensor())?
            .squeeze(D::Minus1)?)
    }
}

pub struct OverlayModel {
    config: ModelConfig,
    store: ParamStore,
    attention: Option<AttentionLayer>,
    head: Option<ResNetHead>,
    linear: Option<LinearHead>,
}

impl OverlayModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_dtype(config, DType::F32)
    }

    /// Same initial weights as [`Self::new`] held at the given precision
    /// (`F32` or `F64`).
    pub fn with_dtype(config: ModelConfig, dtype: DType) -> Result<Self> {
        config.validate()?;
        if !matches!(dtype, DType::F32 | DType::F64) {
            return Err(Error::Config(format!("unsupported dtype {dtype:?}")));
        }
        let mut store = ParamStore::new();
        let mut init = Init::with_dtype(config.seed, dtype);
        let (mut attention, mut head, mut linear) = (None, None, None);
        match config.variant {
            ModelVariant::CraftMasked => {
                let p = AttentionParams::gaussian(config.kernel_size, config.init_sigma_px, config.init_gain)?;
                attention = Some(AttentionLayer::new(&mut store, &init, &p)?);
                head = Some(ResNetHead::new(&mut store, &mut init, config.head_width)?);
            }
            ModelVariant::UnmaskedResnet => {
                head = Some(ResNetHead::new(&mut store, &mut init, config.head_width)?);
            }
            ModelVariant::BinarizedLinear => {
                let (gh, gw) = config.canonical_grid();
                let d = 2 * gh * gw;
                let bound = 1.0 / (d as f64).sqrt();
                linear = Some(LinearHead {
                    weight: store.add(LINEAR_WEIGHT, init.uniform(&[1, d], bound)?, true)?,
                    bias: store.add(LINEAR_BIAS, init.uniform(&[1], bound)?, true)?,
                });
            }
        }
        Ok(Self {
            config,
            store,
            attention,
            head,
            linear,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.iter().next().map(|p| p.var.dtype()).unwrap_or(DType::F32)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> ModelVariant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn attention_params(&self) -> Result<AttentionParams> {
        match &self.attention {
            Some(a) => a.params(),
            None => Err(Error::Config(format!("{} has no attention layer", self.variant()))),
        }
    }

    pub fn set_attention_params(&self, p: &AttentionParams) -> Result<()> {
        match &self.attention {
            Some(a) => a.set_params(p),
            None => Err(Error::Config(format!("{} has no attention layer", self.variant()))),
        }
    }

    /// `(N, 1, H, W)` image-resolution mask for `(N, 2, H/2, W/2)` maps.
    pub fn mask(&self, maps: &Tensor) -> Result<Tensor> {
        match &self.attention {
            Some(a) => a.forward(maps),
            None => Err(Error::Config(format!("{} has no attention layer", self.variant()))),
        }
    }

    /// Residual head applied directly to an image batch.
    pub fn head_logits(&self, images: &Tensor, train: bool) -> Result<Tensor> {
        match &self.head {
            Some(h) => h.forward(images, train),
            None => Err(Error::Config(format!("{} has no residual head", self.variant()))),
        }
    }

    /// Grid the score maps must be on when passed to [`Self::logits`].
    pub fn map_grid(&self, image_h: usize, image_w: usize) -> (usize, usize) {
        match self.config.variant {
            ModelVariant::BinarizedLinear => self.config.canonical_grid(),
            _ => (image_h / 2, image_w / 2),
        }
    }

    /// Batch logits, shape `(N,)`. `train` selects batch statistics for
    /// normalisation layers and updates their running estimates.
    pub fn logits(&self, images: &Tensor, maps: &Tensor, train: bool) -> Result<Tensor> {
        let dtype = self.dtype();
        let (images, maps) = (&images.to_dtype(dtype)?, &maps.to_dtype(dtype)?);
        match self.config.variant {
            ModelVariant::CraftMasked => {
                let (ih, iw) = (images.dim(2)?, images.dim(3)?);
                if maps.dims() != [images.dim(0)?, 2, ih / 2, iw / 2] || ih % 2 != 0 || iw % 2 != 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "maps {:?} do not match images {:?}",
                        maps.dims(),
                        images.dims()
                    )));
                }
                let mask = self.mask(maps)?;
                let y = images.broadcast_mul(&mask)?;
                self.head_logits(&y, train)
            }
            ModelVariant::UnmaskedResnet => self.head_logits(images, train),
            ModelVariant::BinarizedLinear => {
                let (gh, gw) = self.config.canonical_grid();
                if maps.dims()[1..] != [2, gh, gw] {
                    return Err(Error::ShapeMismatch(format!(
                        "linear baseline expects maps on a {gh}x{gw} grid, got {:?}",
                        maps.dims()
                    )));
                }
                self.linear.as_ref().expect("linear head").forward(maps)
            }
        }
    }

    /// Inference-mode probability for a single example.
    pub fn forward(&self, image: &ImageTensor, map: &ScoreMap) -> Result<f64> {
        Ok(self.predict(&[image], &[map])?[0])
    }

    /// Inference-mode probabilities; maps are resampled to the baseline grid
    /// when needed.
    pub fn predict(&self, images: &[&ImageTensor], maps: &[&ScoreMap]) -> Result<Vec<f64>> {
        if images.len() != maps.len() {
            return Err(Error::ShapeMismatch("images and maps differ in count".into()));
        }
        let x = images_to_tensor(images)?;
        let resized;
        let maps = if self.config.variant == ModelVariant::BinarizedLinear {
            let grid = self.config.canonical_grid();
            resized = maps
                .iter()
                .map(|m| {
                    if (m.height(), m.width()) == grid {
                        Ok((*m).clone())
                    } else {
                        m.resized(grid.0, grid.1)
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            resized.iter().collect::<Vec<_>>()
        } else {
            for (img, m) in images.iter().zip(maps) {
                if !m.matches_image(img) {
                    return Err(Error::ShapeMismatch(format!(
                        "score map {}x{} does not match image {}x{}",
                        m.height(),
                        m.width(),
                        img.height(),
                        img.width()
                    )));
                }
            }
            maps.to_vec()
        };
        let f = maps_to_tensor(&maps)?;
        let z = self.logits(&x, &f, false)?;
        let p = candle_nn::ops::sigmoid(&z)?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
        Ok(p)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let metadata = serde_json::json!({
            "format": CHECKPOINT_FORMAT,
            "variant": self.config.variant,
            "config": self.config,
            "kernel_normalization": "sum_to_one",
        });
        write_bundle(path, &metadata, &self.store.to_raw()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (metadata, tensors) = read_bundle(path)?;
        if metadata.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_FORMAT) {
            return Err(Error::Weights(format!("{} is not a model checkpoint", path.display())));
        }
        let config: ModelConfig = serde_json::from_value(
            metadata
                .get("config")
                .cloned()
                .ok_or_else(|| Error::Weights("checkpoint lacks config".into()))?,
        )?;
        let model = Self::new(config)?;
        model.store.load_raw(&tensors)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests;
