//! Aspect-preserving resize onto a square black canvas.

use image::imageops::{self, FilterType};
use image::{ImageBuffer, Luma, Rgb};

use crate::datamodel::{ImageTensor, ScoreMap};
use crate::{Error, Result};

/// Placement of resized content inside a `side × side` canvas.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Fit {
    pub height: usize,
    pub width: usize,
    pub top: usize,
    pub left: usize,
}

impl Fit {
    /// Longer side scaled to `side`, shorter side rounded, content centred
    /// (odd remainders go to the bottom/right).
    pub fn new(h: usize, w: usize, side: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::ZeroDimension(vec![h, w]));
        }
        if side == 0 {
            return Err(Error::Config("target side must be positive".into()));
        }
        let scale = side as f64 / h.max(w) as f64;
        let nh = ((h as f64 * scale).round() as usize).clamp(1, side);
        let nw = ((w as f64 * scale).round() as usize).clamp(1, side);
        Ok(Self {
            height: nh,
            width: nw,
            top: (side - nh) / 2,
            left: (side - nw) / 2,
        })
    }
}

fn place(planes: Vec<Vec<f32>>, fit: Fit, side: usize) -> Vec<f32> {
    let mut out = vec![0f32; planes.len() * side * side];
    for (c, plane) in planes.iter().enumerate() {
        for y in 0..fit.height {
            let dst = (c * side + fit.top + y) * side + fit.left;
            out[dst..dst + fit.width].copy_from_slice(&plane[y * fit.width..(y + 1) * fit.width]);
        }
    }
    out
}

fn resize_plane(src: &[f32], h: usize, w: usize, nh: usize, nw: usize) -> Vec<f32> {
    if (h, w) == (nh, nw) {
        return src.to_vec();
    }
    let buf: ImageBuffer<Luma<f32>, Vec<f32>> =
        ImageBuffer::from_raw(w as u32, h as u32, src.to_vec()).expect("plane size");
    imageops::resize(&buf, nw as u32, nh as u32, FilterType::Triangle).into_raw()
}

/// Scales the longer side to `side` (triangle filter) and pads the shorter
/// one symmetrically with black.
pub fn resize_and_pad(image: &ImageTensor, side: usize) -> Result<ImageTensor> {
    let (h, w) = (image.height(), image.width());
    let fit = Fit::new(h, w, side)?;
    if (h, w) == (side, side) {
        return Ok(image.clone());
    }
    let content = if (fit.height, fit.width) == (h, w) {
        image.data().to_vec()
    } else {
        let mut hwc = Vec::with_capacity(3 * h * w);
        for y in 0..h {
            for x in 0..w {
                hwc.extend((0..3).map(|c| image.get(c, y, x)));
            }
        }
        let buf: ImageBuffer<Rgb<f32>, Vec<f32>> =
            ImageBuffer::from_raw(w as u32, h as u32, hwc).expect("image size");
        let small = imageops::resize(&buf, fit.width as u32, fit.height as u32, FilterType::Triangle);
        let mut chw = vec![0f32; 3 * fit.height * fit.width];
        for (x, y, px) in small.enumerate_pixels() {
            for c in 0..3 {
                chw[(c * fit.height + y as usize) * fit.width + x as usize] = px.0[c].clamp(0.0, 1.0);
            }
        }
        chw
    };
    let planes = content.chunks(fit.height * fit.width).map(<[f32]>::to_vec).collect();
    ImageTensor::new(side, side, place(planes, fit, side))
}

/// Same placement for a half-resolution score map onto a `side/2` grid; padded
/// cells carry no response.
pub fn resize_and_pad_map(map: &ScoreMap, side: usize) -> Result<ScoreMap> {
    let grid = side / 2;
    let (h, w) = (map.height(), map.width());
    if (h, w) == (grid, grid) {
        return Ok(map.clone());
    }
    let fit = Fit::new(h, w, grid)?;
    let planes = [map.region(), map.affinity()]
        .into_iter()
        .map(|p| {
            resize_plane(p, h, w, fit.height, fit.width)
                .into_iter()
                .map(|v| v.clamp(0.0, 1.0))
                .collect()
        })
        .collect();
    ScoreMap::new(grid, grid, place(planes, fit, grid))
}
