//! Direct large-kernel convolution `(N, C, H, W) ⊛ (1, C, k, k) → (N, 1, H, W)`
//! with zero "same" padding, as a custom autograd op.
//!
//! The generic im2col path would materialise `C·k²` values per output cell,
//! which is prohibitive for k = 33.

use std::ops::{AddAssign, Mul};

use candle_core::{bail, CpuStorage, CustomOp2, Layout, Shape, Tensor};

trait Elem: Copy + Default + PartialEq + Mul<Output = Self> + AddAssign + Into<f64> {
    fn from_f64(v: f64) -> Self;
    fn wrap(v: Vec<Self>) -> CpuStorage;
}

impl Elem for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn wrap(v: Vec<Self>) -> CpuStorage {
        CpuStorage::F32(v)
    }
}

impl Elem for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn wrap(v: Vec<Self>) -> CpuStorage {
        CpuStorage::F64(v)
    }
}

fn window<'a, T>(data: &'a [T], l: &Layout) -> candle_core::Result<&'a [T]> {
    match l.contiguous_offsets() {
        Some((a, b)) => Ok(&data[a..b]),
        None => bail!("mask conv expects contiguous inputs"),
    }
}

/// Runs `f` on both operands once their element types agree.
macro_rules! dispatch {
    ($s1:expr, $l1:expr, $s2:expr, $l2:expr, $f:expr) => {
        match ($s1, $s2) {
            (CpuStorage::F32(a), CpuStorage::F32(b)) => $f(window(a, $l1)?, window(b, $l2)?),
            (CpuStorage::F64(a), CpuStorage::F64(b)) => $f(window(a, $l1)?, window(b, $l2)?),
            _ => bail!("mask conv expects matching f32 or f64 operands"),
        }
    };
}

fn dims4(l: &Layout) -> candle_core::Result<(usize, usize, usize, usize)> {
    l.shape().dims4()
}

/// Output rows `y` such that `y + d − p` lands inside `[0, len)`.
fn valid(len: usize, d: usize, p: usize) -> (usize, usize) {
    let off = d as isize - p as isize;
    let lo = ((-off).max(0) as usize).min(len);
    let hi = (len as isize - off).clamp(0, len as isize) as usize;
    (lo, hi.max(lo))
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    p: usize,
}

impl Geometry {
    /// Offset of input element `(n, c, y + dy − p, x0 + dx − p)`.
    fn src(&self, n: usize, c: usize, y: usize, dy: usize, dx: usize, x0: usize) -> usize {
        ((n * self.c + c) * self.h + y + dy - self.p) * self.w + dx + x0 - self.p
    }
}

/// Visits every `(n, c, dy, dx, y-range, x-range)` tap combination.
fn for_each_tap(g: &Geometry, mut f: impl FnMut(usize, usize, usize, usize, (usize, usize), (usize, usize))) {
    for n in 0..g.n {
        for c in 0..g.c {
            for dy in 0..g.k {
                let ys = valid(g.h, dy, g.p);
                for dx in 0..g.k {
                    let xs = valid(g.w, dx, g.p);
                    if ys.0 < ys.1 && xs.0 < xs.1 {
                        f(n, c, dy, dx, ys, xs);
                    }
                }
            }
        }
    }
}

fn forward<T: Elem>(x: &[T], kern: &[T], g: Geometry) -> CpuStorage {
    let (h, w, k) = (g.h, g.w, g.k);
    let mut out = vec![T::default(); g.n * h * w];
    for_each_tap(&g, |n, c, dy, dx, (y0, y1), (x0, x1)| {
        let wv = kern[(c * k + dy) * k + dx];
        if wv == T::default() {
            return;
        }
        for y in y0..y1 {
            let src = g.src(n, c, y, dy, dx, x0);
            let dst = (n * h + y) * w;
            for (o, &v) in out[dst + x0..dst + x1].iter_mut().zip(&x[src..src + x1 - x0]) {
                *o += wv * v;
            }
        }
    });
    T::wrap(out)
}

fn grad_input<T: Elem>(gout: &[T], kern: &[T], g: Geometry) -> CpuStorage {
    let (h, w, k) = (g.h, g.w, g.k);
    let mut gin = vec![T::default(); g.n * g.c * h * w];
    for_each_tap(&g, |n, c, dy, dx, (y0, y1), (x0, x1)| {
        let wv = kern[(c * k + dy) * k + dx];
        for y in y0..y1 {
            let dst = g.src(n, c, y, dy, dx, x0);
            let src = (n * h + y) * w;
            for (o, &v) in gin[dst..dst + x1 - x0].iter_mut().zip(&gout[src + x0..src + x1]) {
                *o += wv * v;
            }
        }
    });
    T::wrap(gin)
}

fn grad_kernel<T: Elem>(x: &[T], gout: &[T], g: Geometry) -> CpuStorage {
    let (h, w, k) = (g.h, g.w, g.k);
    let mut acc = vec![0f64; g.c * k * k];
    for_each_tap(&g, |n, c, dy, dx, (y0, y1), (x0, x1)| {
        let mut s = T::default();
        for y in y0..y1 {
            let src = g.src(n, c, y, dy, dx, x0);
            let go = (n * h + y) * w;
            for (&a, &b) in x[src..src + x1 - x0].iter().zip(&gout[go + x0..go + x1]) {
                s += a * b;
            }
        }
        acc[(c * k + dy) * k + dx] += s.into();
    });
    T::wrap(acc.into_iter().map(T::from_f64).collect())
}

pub(crate) struct MaskConv;

impl CustomOp2 for MaskConv {
    fn name(&self) -> &'static str {
        "mask-conv"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (n, c, h, w) = dims4(l1)?;
        let (o, kc, k, k2) = dims4(l2)?;
        if o != 1 || kc != c || k != k2 || k % 2 == 0 {
            bail!("mask conv kernel shape {:?} incompatible with input {:?}", l2.dims(), l1.dims());
        }
        let g = Geometry { n, c, h, w, k, p: k / 2 };
        let out = dispatch!(s1, l1, s2, l2, |a, b| forward(a, b, g));
        Ok((out, Shape::from((n, 1, h, w))))
    }

    fn bwd(
        &self,
        input: &Tensor,
        kernel: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        let grad = grad.contiguous()?;
        let gi = grad.apply_op2_no_bwd(&kernel.contiguous()?, &MaskConvGradInput)?;
        let gk = input.contiguous()?.apply_op2_no_bwd(&grad, &MaskConvGradKernel { k: kernel.dim(2)? })?;
        Ok((Some(gi), Some(gk)))
    }
}

/// `(N,1,H,W)` output gradient and `(1,C,k,k)` kernel → `(N,C,H,W)`.
struct MaskConvGradInput;

impl CustomOp2 for MaskConvGradInput {
    fn name(&self) -> &'static str {
        "mask-conv-grad-input"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (n, _, h, w) = dims4(l1)?;
        let (_, c, k, _) = dims4(l2)?;
        let g = Geometry { n, c, h, w, k, p: k / 2 };
        let out = dispatch!(s1, l1, s2, l2, |a, b| grad_input(a, b, g));
        Ok((out, Shape::from((n, c, h, w))))
    }
}

/// `(N,C,H,W)` input and `(N,1,H,W)` output gradient → `(1,C,k,k)`.
struct MaskConvGradKernel {
    k: usize,
}

impl CustomOp2 for MaskConvGradKernel {
    fn name(&self) -> &'static str {
        "mask-conv-grad-kernel"
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (n, c, h, w) = dims4(l1)?;
        let k = self.k;
        let g = Geometry { n, c, h, w, k, p: k / 2 };
        let out = dispatch!(s1, l1, s2, l2, |a, b| grad_kernel(a, b, g));
        Ok((out, Shape::from((1, c, k, k))))
    }
}

/// Zero-padded same-size convolution of `x` with a single-output kernel.
pub fn mask_conv(x: &Tensor, kernel: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op2(&kernel.contiguous()?, MaskConv)
}
