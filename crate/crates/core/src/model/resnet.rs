//! 18-layer residual classifier with a single-logit head.

use candle_core::{Tensor, Var, D};

use super::params::{Init, ParamStore};
use crate::Result;

const IMAGENET_MEAN: [f32; 3] = [0.485, 0.456, 0.406];
const IMAGENET_STD: [f32; 3] = [0.229, 0.224, 0.225];
const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

pub(crate) struct BatchNorm {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm {
    fn new(store: &mut ParamStore, init: &Init, name: &str, c: usize) -> Result<Self> {
        Ok(Self {
            gamma: store.add(format!("{name}.weight"), init.constant(&[c], 1.0)?, true)?,
            beta: store.add(format!("{name}.bias"), init.constant(&[c], 0.0)?, true)?,
            running_mean: store.add(format!("{name}.running_mean"), init.constant(&[c], 0.0)?, false)?,
            running_var: store.add(format!("{name}.running_var"), init.constant(&[c], 1.0)?, false)?,
        })
    }

    /// Batch statistics in training mode (running estimates updated as a side
    /// effect), running statistics otherwise.
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let c = x.dim(1)?;
        let (mean, var) = if train {
            let mean = x.mean_keepdim((0, 2, 3))?;
            let centred = x.broadcast_sub(&mean)?;
            let var = centred.sqr()?.mean_keepdim((0, 2, 3))?;
            let n = (x.elem_count() / c) as f64;
            let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let m = BN_MOMENTUM;
            let rm = (self.running_mean.as_tensor().affine(1.0 - m, 0.0)?
                + mean.detach().flatten_all()?.affine(m, 0.0)?)?;
            let rv = (self.running_var.as_tensor().affine(1.0 - m, 0.0)?
                + var.detach().flatten_all()?.affine(m * unbiased, 0.0)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape((1, c, 1, 1))?,
                self.running_var.as_tensor().reshape((1, c, 1, 1))?,
            )
        };
        let inv = (var + BN_EPS)?.sqrt()?.recip()?;
        let y = x.broadcast_sub(&mean)?.broadcast_mul(&inv)?;
        let y = y
            .broadcast_mul(&self.gamma.as_tensor().reshape((1, c, 1, 1))?)?
            .broadcast_add(&self.beta.as_tensor().reshape((1, c, 1, 1))?)?;
        Ok(y)
    }
}

/// One axis of a 3-wide, stride-2, pad-1 max pool.
fn pool_axis(x: &Tensor, dim: usize) -> Result<Tensor> {
    let n = x.dim(dim)?;
    let out = (n - 1) / 2 + 1;
    let mut pad_shape = x.dims().to_vec();
    pad_shape[dim] = 1;
    let front = Tensor::full(f32::MIN, pad_shape.clone(), x.device())?.to_dtype(x.dtype())?;
    pad_shape[dim] = 2 * out + 1 - n;
    let back = Tensor::full(f32::MIN, pad_shape, x.device())?.to_dtype(x.dtype())?;
    let padded = Tensor::cat(&[&front, x, &back], dim)?;
    let mut split = x.dims().to_vec();
    split[dim] = out;
    split.insert(dim + 1, 2);
    let tap = |d: usize| -> Result<Tensor> {
        Ok(padded
            .narrow(dim, d, 2 * out)?
            .reshape(split.clone())?
            .narrow(dim + 1, 0, 1)?
            .squeeze(dim + 1)?)
    };
    Ok(tap(0)?.maximum(&tap(1)?)?.maximum(&tap(2)?)?)
}

/// 3×3 max pool with stride 2 and padding 1, separable over rows and columns.
pub(crate) fn max_pool_3x3_s2(x: &Tensor) -> Result<Tensor> {
    pool_axis(&pool_axis(x, 2)?, 3)
}

pub(crate) struct Conv {
    weight: Var,
    stride: usize,
    padding: usize,
}

impl Conv {
    fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
    ) -> Result<Self> {
        // Kaiming normal, fan-out, ReLU gain.
        let std = (2.0 / (cout * k * k) as f64).sqrt();
        Ok(Self {
            weight: store.add(format!("{name}.weight"), init.normal(&[cout, cin, k, k], std)?, true)?,
            stride,
            padding: k / 2,
        })
    }

    fn forward(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.conv2d(&self.weight, self.padding, self.stride, 1, 1)?)
    }
}

struct BasicBlock {
    conv1: Conv,
    bn1: BatchNorm,
    conv2: Conv,
    bn2: BatchNorm,
    downsample: Option<(Conv, BatchNorm)>,
}

impl BasicBlock {
    fn new(
        store: &mut ParamStore,
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Result<Self> {
        let downsample = if stride != 1 || cin != cout {
            Some((
                Conv::new(store, init, &format!("{name}.downsample.0"), cin, cout, 1, stride)?,
                BatchNorm::new(store, init, &format!("{name}.downsample.1"), cout)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1: Conv::new(store, init, &format!("{name}.conv1"), cin, cout, 3, stride)?,
            bn1: BatchNorm::new(store, init, &format!("{name}.bn1"), cout)?,
            conv2: Conv::new(store, init, &format!("{name}.conv2"), cout, cout, 3, 1)?,
            bn2: BatchNorm::new(store, init, &format!("{name}.bn2"), cout)?,
            downsample,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.bn1.forward(&self.conv1.forward(x)?, train)?.relu()?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, train)?;
        let skip = match &self.downsample {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((y + skip)?.relu()?)
    }
}

/// Stem, four stages of two basic blocks (widths `w, 2w, 4w, 8w`), global
/// average pool and a one-logit linear layer.
pub struct ResNetHead {
    mean: Tensor,
    std: Tensor,
    stem: Conv,
    stem_bn: BatchNorm,
    blocks: Vec<BasicBlock>,
    fc_weight: Var,
    fc_bias: Var,
}

/// Name of the first convolution's weight tensor.
pub const STEM_WEIGHT: &str = "head.conv1.weight";

impl ResNetHead {
    pub(crate) fn new(store: &mut ParamStore, init: &mut Init, width: usize) -> Result<Self> {
        let stem = Conv::new(store, init, "head.conv1", 3, width, 7, 2)?;
        let stem_bn = BatchNorm::new(store, init, "head.bn1", width)?;
        let mut blocks = Vec::new();
        let mut cin = width;
        for stage in 0..4 {
            let cout = width << stage;
            for b in 0..2 {
                let stride = if stage > 0 && b == 0 { 2 } else { 1 };
                let name = format!("head.layer{}.{b}", stage + 1);
                blocks.push(BasicBlock::new(store, init, &name, cin, cout, stride)?);
                cin = cout;
            }
        }
        let bound = 1.0 / (cin as f64).sqrt();
        let fc_weight = store.add("head.fc.weight", init.uniform(&[1, cin], bound)?, true)?;
        let fc_bias = store.add("head.fc.bias", init.uniform(&[1], bound)?, true)?;
        let dev = candle_core::Device::Cpu;
        Ok(Self {
            mean: Tensor::from_slice(&IMAGENET_MEAN, (1, 3, 1, 1), &dev)?.to_dtype(init.dtype())?,
            std: Tensor::from_slice(&IMAGENET_STD, (1, 3, 1, 1), &dev)?.to_dtype(init.dtype())?,
            stem,
            stem_bn,
            blocks,
            fc_weight,
            fc_bias,
        })
    }

    /// `(N, 3, H, W)` image batch in `[0, 1]` → `(N,)` logits. Channel
    /// standardisation happens here, after any masking.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let x = x.broadcast_sub(&self.mean)?.broadcast_div(&self.std)?;
        let mut y = self.stem_bn.forward(&self.stem.forward(&x)?, train)?.relu()?;
        y = max_pool_3x3_s2(&y)?;
        for block in &self.blocks {
            y = block.forward(&y, train)?;
        }
        let pooled = y.mean((2, 3))?;
        let logits = pooled
            .matmul(&self.fc_weight.as_tensor().t()?)?
            .broadcast_add(self.fc_bias.as_tensor())?;
        Ok(logits.squeeze(D::Minus1)?)
    }
}
