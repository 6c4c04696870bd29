//! Gaussian initialisation kernel and the ×2 bilinear upsampler.

use candle_core::Tensor;

use crate::{Error, Result};

/// `k×k` Gaussian centred on the middle cell, normalised to sum 1 (row-major).
pub fn gaussian_kernel(k: usize, sigma: f64) -> Result<Vec<f64>> {
    if k == 0 || k % 2 == 0 {
        return Err(Error::InvalidValue(format!("kernel size must be odd, got {k}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidValue(format!("sigma must be positive, got {sigma}")));
    }
    let c = (k / 2) as f64;
    let mut out = Vec::with_capacity(k * k);
    for y in 0..k {
        for x in 0..k {
            let (dy, dx) = (y as f64 - c, x as f64 - c);
            out.push((-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= total);
    Ok(out)
}

/// Doubles one spatial axis of an NCHW tensor with half-pixel-centre bilinear
/// weights (¾ own cell, ¼ neighbour, edges clamped).
///
/// Written as `x + ¼·(neighbour − x)` so constant inputs come back bit-exact.
fn upsample_axis(x: &Tensor, dim: usize) -> Result<Tensor> {
    let n = x.dim(dim)?;
    let (prev, next) = if n == 1 {
        (x.clone(), x.clone())
    } else {
        let prev = Tensor::cat(&[x.narrow(dim, 0, 1)?, x.narrow(dim, 0, n - 1)?], dim)?;
        let next = Tensor::cat(&[x.narrow(dim, 1, n - 1)?, x.narrow(dim, n - 1, 1)?], dim)?;
        (prev, next)
    };
    let even = (x + (prev - x)?.affine(0.25, 0.0)?)?;
    let odd = (x + (next - x)?.affine(0.25, 0.0)?)?;
    let mut dims = x.dims().to_vec();
    dims[dim] *= 2;
    Ok(Tensor::stack(&[even, odd], dim + 1)?.reshape(dims)?)
}

/// ×2 bilinear upsample of an `(N, C, H, W)` tensor to `(N, C, 2H, 2W)`.
pub fn upsample2x(x: &Tensor) -> Result<Tensor> {
    if x.rank() != 4 {
        return Err(Error::ShapeMismatch(format!("expected NCHW, got {:?}", x.dims())));
    }
    upsample_axis(&upsample_axis(x, 3)?, 2)
}

fn upsample_line(src: &[f32], dst: &mut [f32]) {
    let n = src.len();
    for i in 0..n {
        let x = src[i];
        let prev = src[i.saturating_sub(1)];
        let next = src[(i + 1).min(n - 1)];
        dst[2 * i] = x + 0.25 * (prev - x);
        dst[2 * i + 1] = x + 0.25 * (next - x);
    }
}

/// Same arithmetic as [`upsample2x`] on a single row-major plane.
pub fn upsample2x_plane(src: &[f32], h: usize, w: usize) -> Vec<f32> {
    assert_eq!(src.len(), h * w);
    let mut rows = vec![0.0f32; h * 2 * w];
    for y in 0..h {
        upsample_line(&src[y * w..(y + 1) * w], &mut rows[y * 2 * w..(y + 1) * 2 * w]);
    }
    let w2 = 2 * w;
    let mut out = vec![0.0f32; 4 * h * w];
    let mut col = vec![0.0f32; h];
    let mut col2 = vec![0.0f32; 2 * h];
    for x in 0..w2 {
        for y in 0..h {
            col[y] = rows[y * w2 + x];
        }
        upsample_line(&col, &mut col2);
        for y in 0..2 * h {
            out[y * w2 + x] = col2[y];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;
    use proptest::prelude::*;

    #[test]
    fn kernel_normalised_and_symmetric() {
        for &(k, s) in &[(1, 1.0), (5, 8.0), (33, 8.0), (9, 0.7)] {
            let g = gaussian_kernel(k, s).unwrap();
            let sum: f64 = g.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            let c = k / 2;
            let max = g.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(g[c * k + c], max);
            for y in 0..k {
                for x in 0..k {
                    let v = g[y * k + x];
                    assert_eq!(v, g[(k - 1 - y) * k + x]);
                    assert_eq!(v, g[y * k + (k - 1 - x)]);
                    assert_eq!(v, g[x * k + y]);
                }
            }
        }
    }

    #[test]
    fn corner_to_centre_ratio() {
        let g = gaussian_kernel(5, 8.0).unwrap();
        let ratio = g[0] / g[12];
        assert!((ratio - (-8.0f64 / 128.0).exp()).abs() < 1e-12);
        assert!((ratio - 0.93941).abs() < 1e-5);
    }

    #[test]
    fn even_or_bad_sigma_rejected() {
        assert!(gaussian_kernel(4, 8.0).is_err());
        assert!(gaussian_kernel(5, 0.0).is_err());
        assert!(gaussian_kernel(5, f64::NAN).is_err());
    }

    /// Independent reference: explicit interpolation weights from source
    /// coordinate `(o + 0.5) / 2 − 0.5`, clamped at the borders.
    fn reference_weights(n: usize) -> Vec<Vec<(usize, f64)>> {
        (0..2 * n)
            .map(|o| {
                let src = ((o as f64 + 0.5) / 2.0 - 0.5).max(0.0);
                let i0 = (src.floor() as usize).min(n - 1);
                let i1 = (i0 + 1).min(n - 1);
                let f = src - i0 as f64;
                vec![(i0, 1.0 - f), (i1, f)]
            })
            .collect()
    }

    #[test]
    fn plane_matches_reference_interpolation() {
        let (h, w) = (3, 4);
        let src: Vec<f32> = (0..h * w).map(|i| (i * 7 % 11) as f32 / 10.0).collect();
        let up = upsample2x_plane(&src, h, w);
        let (wy, wx) = (reference_weights(h), reference_weights(w));
        for oy in 0..2 * h {
            for ox in 0..2 * w {
                let mut v = 0.0;
                for &(iy, a) in &wy[oy] {
                    for &(ix, b) in &wx[ox] {
                        v += a * b * src[iy * w + ix] as f64;
                    }
                }
                assert!((up[oy * 2 * w + ox] as f64 - v).abs() < 1e-6, "({oy},{ox})");
            }
        }
    }

    #[test]
    fn tensor_matches_plane() {
        let (h, w) = (5, 3);
        let src: Vec<f32> = (0..h * w).map(|i| ((i * 13) % 17) as f32 * 0.05).collect();
        let t = Tensor::from_vec(src.clone(), (1, 1, h, w), &Device::Cpu).unwrap();
        let up = upsample2x(&t).unwrap();
        assert_eq!(up.dims(), &[1, 1, 2 * h, 2 * w]);
        let got = up.flatten_all().unwrap().to_vec1::<f32>().unwrap();
        assert_eq!(got, upsample2x_plane(&src, h, w));
    }

    #[test]
    fn single_cell_broadcasts() {
        let up = upsample2x_plane(&[0.3], 1, 1);
        assert_eq!(up, vec![0.3; 4]);
    }

    proptest! {
        #[test]
        fn constants_preserved_exactly(c in -1e6f32..1e6, h in 1usize..9, w in 1usize..9) {
            let t = Tensor::full(c, (2, 1, h, w), &Device::Cpu).unwrap();
            let up = upsample2x(&t).unwrap().flatten_all().unwrap().to_vec1::<f32>().unwrap();
            prop_assert!(up.iter().all(|&v| v == c));
        }

        #[test]
        fn stays_within_input_range(src in proptest::collection::vec(-10f32..10.0, 12)) {
            let up = upsample2x_plane(&src, 3, 4);
            let lo = src.iter().cloned().fold(f32::MAX, f32::min);
            let hi = src.iter().cloned().fold(f32::MIN, f32::max);
            prop_assert!(up.iter().all(|&v| v >= lo && v <= hi));
        }
    }
}
