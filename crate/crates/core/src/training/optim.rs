//! SGD with heavy-ball momentum and L2 weight decay, plus the BCE loss.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::model::ParamStore;
use crate::Result;

/// `g ← ∇ + wd·θ; v ← μ·v + g; θ ← θ − lr·v` on every trainable parameter.
pub struct Sgd {
    vars: Vec<(Var, Option<Tensor>)>,
    momentum: f64,
    weight_decay: f64,
}

impl Sgd {
    pub fn new(params: &ParamStore, momentum: f64, weight_decay: f64) -> Self {
        Self {
            vars: params.trainable().map(|p| (p.var.clone(), None)).collect(),
            momentum,
            weight_decay,
        }
    }

    /// Parameters without a gradient (unused in this graph) are left alone.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        for (var, buf) in &mut self.vars {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let g = if self.weight_decay != 0.0 {
                (g + (var.as_tensor() * self.weight_decay)?)?
            } else {
                g.clone()
            };
            let v = match buf.take() {
                Some(prev) => ((prev * self.momentum)? + g)?,
                None => g,
            };
            var.set(&(var.as_tensor() - (&v * lr)?)?)?;
            *buf = Some(v.detach());
        }
        Ok(())
    }

    pub fn backward_step(&mut self, loss: &Tensor, lr: f64) -> Result<()> {
        let grads = loss.backward()?;
        self.step(&grads, lr)
    }
}

/// Mean binary cross-entropy on logits, computed as
/// `max(z,0) − z·y + log(1 + e^{−|z|})` for stability.
pub fn bce_with_logits(logits: &Tensor, targets: &Tensor) -> Result<Tensor> {
    let targets = targets.to_dtype(logits.dtype())?;
    let softplus = logits.abs()?.neg()?.exp()?.affine(1.0, 1.0)?.log()?;
    let per = ((logits.relu()? - (logits * &targets)?)? + softplus)?;
    Ok(per.mean_all()?)
}
