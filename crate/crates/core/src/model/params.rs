//! Named parameter registry shared by all model variants.

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::datamodel::RawTensor;
use crate::{Error, Result};

#[derive(Clone)]
pub struct Param {
    pub name: String,
    pub var: Var,
    /// Running statistics are stored here too but never see the optimiser.
    pub trainable: bool,
}

#[derive(Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, init: Tensor, trainable: bool) -> Result<Var> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(Error::Config(format!("duplicate parameter {name}")));
        }
        let var = Var::from_tensor(&init)?;
        self.params.push(Param {
            name,
            var: var.clone(),
            trainable,
        });
        Ok(var)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.trainable)
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.var)
    }

    /// Total number of trainable scalars.
    pub fn num_trainable(&self) -> usize {
        self.trainable().map(|p| p.var.elem_count()).sum()
    }

    pub fn to_raw(&self) -> Result<Vec<(String, RawTensor)>> {
        self.params
            .iter()
            .map(|p| {
                let data = p.var.as_tensor().flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?;
                Ok((p.name.clone(), RawTensor::new(p.var.dims().to_vec(), data)?))
            })
            .collect()
    }

    /// Overwrites every parameter from `tensors`; all names must be present
    /// with matching shapes.
    pub fn load_raw(&self, tensors: &[(String, RawTensor)]) -> Result<()> {
        for p in &self.params {
            let (_, t) = tensors
                .iter()
                .find(|(n, _)| *n == p.name)
                .ok_or_else(|| Error::Weights(format!("missing tensor {}", p.name)))?;
            if t.shape != p.var.dims() {
                return Err(Error::Weights(format!(
                    "{}: expected shape {:?}, found {:?}",
                    p.name,
                    p.var.dims(),
                    t.shape
                )));
            }
            let value = Tensor::from_vec(t.data.clone(), t.shape.clone(), &Device::Cpu)?;
            p.var.set(&value.to_dtype(p.var.dtype())?)?;
        }
        Ok(())
    }

    /// Copies values of every parameter whose name starts with `prefix` from
    /// `other`.
    pub fn copy_from(&self, other: &ParamStore, prefix: &str) -> Result<usize> {
        let mut copied = 0;
        for p in self.params.iter().filter(|p| p.name.starts_with(prefix)) {
            let src = other
                .get(&p.name)
                .ok_or_else(|| Error::Weights(format!("missing tensor {}", p.name)))?;
            p.var.set(&src.as_tensor().to_dtype(p.var.dtype())?)?;
            copied += 1;
        }
        Ok(copied)
    }

    pub fn all_finite(&self) -> Result<bool> {
        for p in &self.params {
            let v = p.var.as_tensor().flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?;
            if v.iter().any(|x| !x.is_finite()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// Seeded weight initialiser.
/// Values are always drawn in `f32` so both precisions see identical weights.
pub(crate) struct Init {
    rng: ChaCha8Rng,
    dtype: DType,
}

impl Init {
    #[cfg(test)]
    pub fn new(seed: u64) -> Self {
        Self::with_dtype(seed, DType::F32)
    }

    pub fn with_dtype(seed: u64, dtype: DType) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            dtype,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn normal(&mut self, shape: &[usize], std: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0f32, std as f32).map_err(|e| Error::InvalidValue(e.to_string()))?;
        let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?)
    }

    pub fn uniform(&mut self, shape: &[usize], bound: f64) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        let b = bound as f32;
        let dist = Uniform::new_inclusive(-b, b).map_err(|e| Error::InvalidValue(e.to_string()))?;
        let data: Vec<f32> = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?)
    }

    pub fn constant(&self, shape: &[usize], value: f32) -> Result<Tensor> {
        Ok(Tensor::full(value, shape, &Device::Cpu)?.to_dtype(self.dtype)?)
    }

    pub fn from_vec(&self, data: Vec<f32>, shape: &[usize]) -> Result<Tensor> {
        Ok(Tensor::from_vec(data, shape, &Device::Cpu)?.to_dtype(self.dtype)?)
    }
}
