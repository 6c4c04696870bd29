//! Character-region detector backbone: a VGG16-BN encoder with a U-shaped
//! decoder producing region and affinity maps at half the input resolution.
//!
//! Weights are read from a safetensors file whose tensor names follow the
//! reference PyTorch layout (`basenet.slice1.0.weight`, `upconv1.conv.0.weight`,
//! `conv_cls.8.bias`, ...). A leading `module.` prefix, as left behind by
//! data-parallel training, is stripped on load. The backbone is inference-only.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Module, ModuleT, Tensor};
use candle_nn::{BatchNorm, BatchNormConfig, Conv2d, Conv2dConfig, VarBuilder, VarMap};

use crate::datamodel::{ImageTensor, ScoreMap, MIN_PIPELINE_SIDE};
use crate::error::{Error, Result};

const MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const STD: [f32; 3] = [0.229, 0.224, 0.225];

enum Layer {
    Conv(Conv2d),
    Bn(BatchNorm),
    Relu,
    Pool,
}

impl Layer {
    fn forward(&self, xs: &Tensor) -> candle_core::Result<Tensor> {
        match self {
            Layer::Conv(c) => c.forward(xs),
            Layer::Bn(b) => b.forward_t(xs, false),
            Layer::Relu => xs.relu(),
            Layer::Pool => xs.max_pool2d(2),
        }
    }
}

fn conv(vb: VarBuilder, cin: usize, cout: usize, k: usize, padding: usize, dilation: usize) -> candle_core::Result<Conv2d> {
    let cfg = Conv2dConfig {
        padding,
        dilation,
        ..Default::default()
    };
    candle_nn::conv2d(cin, cout, k, cfg, vb)
}

fn bn(vb: VarBuilder, c: usize) -> candle_core::Result<BatchNorm> {
    candle_nn::batch_norm(c, BatchNormConfig::default(), vb)
}

/// Torchvision `vgg16_bn().features`, indices 0..=38, split into the four
/// slices whose outputs feed the decoder.
fn vgg_slices(vb: VarBuilder) -> candle_core::Result<Vec<Vec<Layer>>> {
    // (index, spec) where spec is conv(cin, cout) / bn(c) / relu / pool.
    enum S {
        C(usize, usize),
        B(usize),
        R,
        P,
    }
    use S::*;
    let features = [
        C(3, 64), B(64), R, C(64, 64), B(64), R, P, C(64, 128), B(128), R, C(128, 128), B(128),
        R, P, C(128, 256), B(256), R, C(256, 256), B(256),
        R, C(256, 256), B(256), R, P, C(256, 512), B(512), R, C(512, 512), B(512),
        R, C(512, 512), B(512), R, P, C(512, 512), B(512), R, C(512, 512), B(512),
    ];
    let bounds = [(1, 0..12), (2, 12..19), (3, 19..29), (4, 29..39)];
    let mut slices = Vec::new();
    for (slice, range) in bounds {
        let svb = vb.pp(format!("slice{slice}"));
        let mut layers = Vec::new();
        for idx in range {
            let lvb = svb.pp(idx.to_string());
            layers.push(match features[idx] {
                C(cin, cout) => Layer::Conv(conv(lvb, cin, cout, 3, 1, 1)?),
                B(c) => Layer::Bn(bn(lvb, c)?),
                R => Layer::Relu,
                P => Layer::Pool,
            });
        }
        slices.push(layers);
    }
    Ok(slices)
}

struct DoubleConv {
    conv1: Conv2d,
    bn1: BatchNorm,
    conv2: Conv2d,
    bn2: BatchNorm,
}

impl DoubleConv {
    fn new(vb: VarBuilder, in_c: usize, mid_c: usize, out_c: usize) -> candle_core::Result<Self> {
        let vb = vb.pp("conv");
        Ok(Self {
            conv1: conv(vb.pp("0"), in_c + mid_c, mid_c, 1, 0, 1)?,
            bn1: bn(vb.pp("1"), mid_c)?,
            conv2: conv(vb.pp("3"), mid_c, out_c, 3, 1, 1)?,
            bn2: bn(vb.pp("4"), out_c)?,
        })
    }

    fn forward(&self, xs: &Tensor) -> candle_core::Result<Tensor> {
        let xs = self.bn1.forward_t(&self.conv1.forward(xs)?, false)?.relu()?;
        self.bn2.forward_t(&self.conv2.forward(&xs)?, false)?.relu()
    }
}

pub struct CraftBackbone {
    slices: Vec<Vec<Layer>>,
    fc6: Conv2d,
    fc7: Conv2d,
    upconvs: [DoubleConv; 4],
    cls: Vec<(Conv2d, bool)>,
}

impl CraftBackbone {
    pub fn new(vb: VarBuilder) -> candle_core::Result<Self> {
        let base = vb.pp("basenet");
        let slices = vgg_slices(base.clone())?;
        let s5 = base.pp("slice5");
        let fc6 = conv(s5.pp("1"), 512, 1024, 3, 6, 6)?;
        let fc7 = conv(s5.pp("2"), 1024, 1024, 1, 0, 1)?;
        let upconvs = [
            DoubleConv::new(vb.pp("upconv1"), 1024, 512, 256)?,
            DoubleConv::new(vb.pp("upconv2"), 512, 256, 128)?,
            DoubleConv::new(vb.pp("upconv3"), 256, 128, 64)?,
            DoubleConv::new(vb.pp("upconv4"), 128, 64, 32)?,
        ];
        let c = vb.pp("conv_cls");
        let cls = vec![
            (conv(c.pp("0"), 32, 32, 3, 1, 1)?, true),
            (conv(c.pp("2"), 32, 32, 3, 1, 1)?, true),
            (conv(c.pp("4"), 32, 16, 3, 1, 1)?, true),
            (conv(c.pp("6"), 16, 16, 1, 0, 1)?, true),
            (conv(c.pp("8"), 16, 2, 1, 0, 1)?, false),
        ];
        Ok(Self {
            slices,
            fc6,
            fc7,
            upconvs,
            cls,
        })
    }

    /// Loads weights from a safetensors file.
    pub fn load(path: &Path) -> Result<Self> {
        let device = Device::Cpu;
        let raw = candle_core::safetensors::load(path, &device)
            .map_err(|e| Error::Weights(format!("{}: {e}", path.display())))?;
        let tensors: HashMap<String, Tensor> = raw
            .into_iter()
            .map(|(k, v)| {
                let k = k.strip_prefix("module.").map(str::to_owned).unwrap_or(k);
                (k, v.to_dtype(DType::F32))
            })
            .map(|(k, v)| v.map(|v| (k, v)))
            .collect::<candle_core::Result<_>>()?;
        let vb = VarBuilder::from_tensors(tensors, DType::F32, &device);
        Self::new(vb).map_err(|e| Error::Weights(format!("{}: {e}", path.display())))
    }

    /// Writes a randomly initialised backbone; useful for wiring tests when
    /// trained weights are not at hand.
    pub fn save_random(path: &Path, seed: u64) -> Result<()> {
        let device = Device::Cpu;
        device.set_seed(seed)?;
        let varmap = VarMap::new();
        let vb = VarBuilder::from_varmap(&varmap, DType::F32, &device);
        Self::new(vb)?;
        varmap.save(path)?;
        Ok(())
    }

    /// Runs the network on `(N, 3, H, W)` normalised input, returning
    /// `(N, 2, H/2, W/2)` raw scores.
    pub fn forward(&self, xs: &Tensor) -> candle_core::Result<Tensor> {
        let mut sources = Vec::with_capacity(5);
        let mut h = xs.clone();
        for slice in &self.slices {
            for layer in slice {
                h = layer.forward(&h)?;
            }
            sources.push(h.clone());
        }
        // slice5: 3x3 stride-1 max pool (padding 1), dilated fc6, fc7.
        let pooled = pad_same_max_pool3(&h)?;
        let fc7 = self.fc7.forward(&self.fc6.forward(&pooled)?)?;

        let mut y = Tensor::cat(&[&fc7, &sources[3]], 1)?;
        y = self.upconvs[0].forward(&y)?;
        for (i, up) in self.upconvs.iter().enumerate().skip(1) {
            let skip = &sources[3 - i];
            let (_, _, sh, sw) = skip.dims4()?;
            y = y.upsample_bilinear2d(sh, sw, false)?;
            y = up.forward(&Tensor::cat(&[&y, skip], 1)?)?;
        }
        for (c, relu) in &self.cls {
            y = c.forward(&y)?;
            if *relu {
                y = y.relu()?;
            }
        }
        Ok(y)
    }

    pub fn score_map(&self, image: &ImageTensor) -> Result<ScoreMap> {
        if image.height() < MIN_PIPELINE_SIDE || image.width() < MIN_PIPELINE_SIDE {
            return Err(Error::ShapeMismatch(format!(
                "backbone needs at least {MIN_PIPELINE_SIDE}px per side, got {}x{}",
                image.height(),
                image.width()
            )));
        }
        image.ensure_pipeline_ready()?;
        let (h, w) = (image.height(), image.width());
        let x = Tensor::from_slice(image.data(), (1, 3, h, w), &Device::Cpu)?;
        let mean = Tensor::new(&MEAN, &Device::Cpu)?.reshape((1, 3, 1, 1))?;
        let std = Tensor::new(&STD, &Device::Cpu)?.reshape((1, 3, 1, 1))?;
        let x = x.broadcast_sub(&mean)?.broadcast_div(&std)?;
        let y = self.forward(&x)?.clamp(0f32, 1f32)?;
        let (_, _, mh, mw) = y.dims4()?;
        if (mh, mw) != (h / 2, w / 2) {
            return Err(Error::ShapeMismatch(format!(
                "backbone produced {mh}x{mw} for a {h}x{w} image"
            )));
        }
        let data = y.flatten_all()?.to_vec1::<f32>()?;
        ScoreMap::new(mh, mw, data)
    }
}

/// 3x3 stride-1 max pooling that keeps the spatial size.
fn pad_same_max_pool3(xs: &Tensor) -> candle_core::Result<Tensor> {
    // Inputs are post-ReLU (>= 0), so zero padding cannot win the max.
    let padded = xs.pad_with_zeros(2, 1, 1)?.pad_with_zeros(3, 1, 1)?;
    padded.max_pool2d_with_stride(3, 1)
}
