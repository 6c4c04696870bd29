//! Mixing layer over score maps and the resulting image mask.

use candle_core::{DType, Device, Tensor, Var};

use super::conv::mask_conv;
use super::kernel::{gaussian_kernel, upsample2x, upsample2x_plane};
use super::params::{Init, ParamStore};
use crate::datamodel::ScoreMap;
use crate::{Error, Result};

pub const DEFAULT_KERNEL_SIZE: usize = 33;
pub const DEFAULT_INIT_SIGMA: f64 = 8.0;

/// Weights of the two-channel → one-channel mixing convolution.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub k: usize,
    /// `[region | affinity]`, each `k×k` row-major.
    pub kernel: Vec<f32>,
    pub bias: f32,
}

impl AttentionParams {
    /// Both channels share the normalised Gaussian at half weight, scaled by
    /// `gain`; bias 0.
    pub fn gaussian(k: usize, sigma: f64, gain: f64) -> Result<Self> {
        let g = gaussian_kernel(k, sigma)?;
        let half: Vec<f32> = g.iter().map(|v| (0.5 * gain * v) as f32).collect();
        Ok(Self {
            k,
            kernel: [half.clone(), half].concat(),
            bias: 0.0,
        })
    }

    pub fn zeros(k: usize) -> Self {
        Self {
            k,
            kernel: vec![0.0; 2 * k * k],
            bias: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k % 2 == 0 {
            return Err(Error::InvalidValue(format!("kernel size must be odd, got {}", self.k)));
        }
        if self.kernel.len() != 2 * self.k * self.k {
            return Err(Error::ShapeMismatch(format!(
                "kernel holds {} values, expected {}",
                self.kernel.len(),
                2 * self.k * self.k
            )));
        }
        if !self.bias.is_finite() || self.kernel.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidValue("non-finite attention weights".into()));
        }
        Ok(())
    }
}

/// Image-resolution mask `UpSample×2(ReLU(H(F)))` as a row-major plane of
/// size `(2h, 2w)` for an `h×w` score map.
pub fn attention_mask(map: &ScoreMap, p: &AttentionParams) -> Result<Vec<f32>> {
    p.validate()?;
    let (h, w) = (map.height(), map.width());
    let (k, r) = (p.k as isize, (p.k / 2) as isize);
    let mut mixed = vec![0f32; h * w];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0f64;
            for (c, plane) in [map.region(), map.affinity()].into_iter().enumerate() {
                for dy in 0..k {
                    let sy = y + dy - r;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for dx in 0..k {
                        let sx = x + dx - r;
                        if sx < 0 || sx >= w as isize {
                            continue;
                        }
                        let kv = p.kernel[c * p.k * p.k + (dy * k + dx) as usize];
                        acc += kv as f64 * plane[sy as usize * w + sx as usize] as f64;
                    }
                }
            }
            mixed[y as usize * w + x as usize] = ((acc + p.bias as f64) as f32).max(0.0);
        }
    }
    let mask = upsample2x_plane(&mixed, h, w);
    if mask.len() != map.image_dims().0 * map.image_dims().1 {
        return Err(Error::ShapeMismatch("upsampled mask does not match image grid".into()));
    }
    Ok(mask)
}

pub(crate) struct AttentionLayer {
    kernel: Var,
    bias: Var,
}

pub const KERNEL_NAME: &str = "attention.kernel";
pub const BIAS_NAME: &str = "attention.bias";

impl AttentionLayer {
    pub fn new(store: &mut ParamStore, init: &Init, p: &AttentionParams) -> Result<Self> {
        p.validate()?;
        let k = p.k;
        Ok(Self {
            kernel: store.add(KERNEL_NAME, init.from_vec(p.kernel.clone(), &[1, 2, k, k])?, true)?,
            bias: store.add(BIAS_NAME, init.from_vec(vec![p.bias], &[1])?, true)?,
        })
    }

    pub fn params(&self) -> Result<AttentionParams> {
        Ok(AttentionParams {
            k: self.kernel.dim(2)?,
            kernel: self.kernel.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1()?,
            bias: self.bias.as_tensor().to_dtype(DType::F32)?.to_vec1::<f32>()?[0],
        })
    }

    pub fn set_params(&self, p: &AttentionParams) -> Result<()> {
        p.validate()?;
        if p.k != self.kernel.dim(2)? {
            return Err(Error::ShapeMismatch(format!("kernel size {} != {}", p.k, self.kernel.dim(2)?)));
        }
        let (dev, dtype) = (Device::Cpu, self.kernel.dtype());
        self.kernel.set(&Tensor::from_vec(p.kernel.clone(), (1, 2, p.k, p.k), &dev)?.to_dtype(dtype)?)?;
        self.bias.set(&Tensor::from_vec(vec![p.bias], 1, &dev)?.to_dtype(dtype)?)?;
        Ok(())
    }

    /// `(N, 2, h, w)` maps → `(N, 1, 2h, 2w)` non-negative mask.
    pub fn forward(&self, maps: &Tensor) -> Result<Tensor> {
        let mixed = mask_conv(maps, self.kernel.as_tensor())?.broadcast_add(self.bias.as_tensor())?;
        upsample2x(&mixed.relu()?)
    }
}
