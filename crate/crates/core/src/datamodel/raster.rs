//! In-memory rasters: RGB images and half-resolution score maps.
//!
//! Both store channel planes back to back, each plane row-major, which is the
//! `(C, H, W)` layout the tensor backend consumes without a transpose.

use crate::error::{Error, Result};

/// Smallest side accepted by the detection pipeline.
pub const MIN_PIPELINE_SIDE: usize = 32;

/// RGB raster with values in `[0, 1]`, stored as three row-major planes.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageTensor {
    pub const CHANNELS: usize = 3;

    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension(vec![Self::CHANNELS, height, width]));
        }
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::ShapeMismatch(format!(
                "image {height}x{width} needs {} values, got {}",
                Self::CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("pixel value {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Result<Self> {
        Self::new(height, width, vec![value; Self::CHANNELS * height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn plane(&self, channel: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[channel * n..(channel + 1) * n]
    }

    pub fn get(&self, channel: usize, y: usize, x: usize) -> f32 {
        self.data[(channel * self.height + y) * self.width + x]
    }

    /// Checks the size contract of the detection pipeline: both sides at least
    /// [`MIN_PIPELINE_SIDE`] and even, so the score map has integral dimensions.
    pub fn ensure_pipeline_ready(&self) -> Result<()> {
        if self.height < MIN_PIPELINE_SIDE || self.width < MIN_PIPELINE_SIDE {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} is below the {MIN_PIPELINE_SIDE}px minimum",
                self.height, self.width
            )));
        }
        if self.height % 2 != 0 || self.width % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "image {}x{} has an odd side; pad it first",
                self.height, self.width
            )));
        }
        Ok(())
    }

    /// Pads an odd bottom row and/or right column with black.
    pub fn pad_to_even(&self) -> ImageTensor {
        let h = self.height + self.height % 2;
        let w = self.width + self.width % 2;
        if h == self.height && w == self.width {
            return self.clone();
        }
        let mut data = vec![0.0; Self::CHANNELS * h * w];
        for c in 0..Self::CHANNELS {
            for y in 0..self.height {
                let src = &self.data[(c * self.height + y) * self.width..][..self.width];
                data[(c * h + y) * w..][..self.width].copy_from_slice(src);
            }
        }
        ImageTensor {
            height: h,
            width: w,
            data,
        }
    }

    pub fn from_rgb8(img: &image::RgbImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; Self::CHANNELS * h * w];
        for (x, y, px) in img.enumerate_pixels() {
            for c in 0..Self::CHANNELS {
                data[(c * h + y as usize) * w + x as usize] = px.0[c] as f32 / 255.0;
            }
        }
        Self::new(h, w, data)
    }

    pub fn to_rgb8(&self) -> image::RgbImage {
        image::RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let px = |c| (self.get(c, y as usize, x as usize) * 255.0).round() as u8;
            image::Rgb([px(0), px(1), px(2)])
        })
    }

    /// Decodes a PNG or JPEG file.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb8(&img)
    }

    pub fn save_png(&self, path: &std::path::Path) -> Result<()> {
        self.to_rgb8()
            .save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

/// Two-channel (region, affinity) character-detector output at half the
/// source image resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ScoreMap {
    pub const CHANNELS: usize = 2;

    /// `data` holds the region plane followed by the affinity plane.
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::ZeroDimension(vec![Self::CHANNELS, height, width]));
        }
        if data.len() != Self::CHANNELS * height * width {
            return Err(Error::ShapeMismatch(format!(
                "score map {height}x{width} needs {} values, got {}",
                Self::CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("score {v} outside [0,1]")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn from_planes(height: usize, width: usize, region: Vec<f32>, affinity: Vec<f32>) -> Result<Self> {
        let mut data = region;
        data.extend(affinity);
        Self::new(height, width, data)
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0.0; Self::CHANNELS * height * width])
    }

    /// Zero map matching an image of `image_h x image_w` (both even).
    pub fn zeros_for_image(image_h: usize, image_w: usize) -> Result<Self> {
        if image_h % 2 != 0 || image_w % 2 != 0 {
            return Err(Error::ShapeMismatch(format!(
                "image {image_h}x{image_w} has an odd side"
            )));
        }
        Self::zeros(image_h / 2, image_w / 2)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn region(&self) -> &[f32] {
        &self.data[..self.height * self.width]
    }

    pub fn affinity(&self) -> &[f32] {
        &self.data[self.height * self.width..]
    }

    pub fn region_at(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn affinity_at(&self, y: usize, x: usize) -> f32 {
        self.data[(self.height + y) * self.width + x]
    }

    /// Source image dimensions this map corresponds to.
    pub fn image_dims(&self) -> (usize, usize) {
        (self.height * 2, self.width * 2)
    }

    pub fn matches_image(&self, image: &ImageTensor) -> bool {
        image.height() == self.height * 2 && image.width() == self.width * 2
    }

    /// Bilinearly resamples both channels to `height x width` (half-pixel
    /// centers). Used to bring maps onto a fixed feature grid.
    pub fn resized(&self, height: usize, width: usize) -> Result<ScoreMap> {
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let n = self.height * self.width;
        let mut out = Vec::with_capacity(Self::CHANNELS * height * width);
        for c in 0..Self::CHANNELS {
            let plane = &self.data[c * n..(c + 1) * n];
            out.extend(resample_plane(plane, self.height, self.width, height, width));
        }
        for v in out.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        ScoreMap::new(height, width, out)
    }
}

/// Bilinear resampling of a single plane with half-pixel centers and edge
/// clamping.
pub(crate) fn resample_plane(src: &[f32], sh: usize, sw: usize, dh: usize, dw: usize) -> Vec<f32> {
    let taps = |dst: usize, src_len: usize| -> Vec<(usize, usize, f32)> {
        let scale = src_len as f64 / dst as f64;
        (0..dst)
            .map(|i| {
                let pos = ((i as f64 + 0.5) * scale - 0.5).max(0.0);
                let i0 = (pos.floor() as usize).min(src_len - 1);
                let i1 = (i0 + 1).min(src_len - 1);
                (i0, i1, (pos - i0 as f64) as f32)
            })
            .collect()
    };
    let ys = taps(dh, sh);
    let xs = taps(dw, sw);
    let mut out = Vec::with_capacity(dh * dw);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let a = src[y0 * sw + x0] * (1.0 - fx) + src[y0 * sw + x1] * fx;
            let b = src[y1 * sw + x0] * (1.0 - fx) + src[y1 * sw + x1] * fx;
            out.push(a * (1.0 - fy) + b * fy);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn image_rejects_out_of_range_values() {
        assert!(ImageTensor::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
        assert!(ImageTensor::new(1, 1, vec![0.0, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn image_rejects_zero_dimension() {
        assert!(matches!(
            ImageTensor::new(0, 4, vec![]),
            Err(Error::ZeroDimension(_))
        ));
    }

    #[test]
    fn pipeline_contract_rejects_small_and_odd() {
        assert!(ImageTensor::filled(30, 64, 0.0).unwrap().ensure_pipeline_ready().is_err());
        assert!(ImageTensor::filled(33, 64, 0.0).unwrap().ensure_pipeline_ready().is_err());
        assert!(ImageTensor::filled(32, 64, 0.0).unwrap().ensure_pipeline_ready().is_ok());
    }

    #[test]
    fn pad_to_even_adds_black_row_and_column() {
        let img = ImageTensor::filled(33, 35, 1.0).unwrap();
        let padded = img.pad_to_even();
        assert_eq!((padded.height(), padded.width()), (34, 36));
        assert_eq!(padded.get(0, 32, 34), 1.0);
        assert_eq!(padded.get(1, 33, 0), 0.0);
        assert_eq!(padded.get(2, 0, 35), 0.0);
        assert!(padded.ensure_pipeline_ready().is_ok());
    }

    #[test]
    fn rgb8_round_trip_is_exact_on_quantized_values() {
        let data: Vec<f32> = (0..3 * 4 * 6).map(|i| (i * 7 % 256) as f32 / 255.0).collect();
        let img = ImageTensor::new(4, 6, data).unwrap();
        let back = ImageTensor::from_rgb8(&img.to_rgb8()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn score_map_planes_are_split_in_order() {
        let m = ScoreMap::from_planes(1, 2, vec![0.1, 0.2], vec![0.3, 0.4]).unwrap();
        assert_eq!(m.region(), &[0.1, 0.2]);
        assert_eq!(m.affinity(), &[0.3, 0.4]);
        assert_eq!(m.affinity_at(0, 1), 0.4);
        assert_eq!(m.image_dims(), (2, 4));
    }

    #[test]
    fn resampling_preserves_constants() {
        let m = ScoreMap::new(3, 5, vec![0.25; 30]).unwrap();
        let r = m.resized(7, 4).unwrap();
        assert!(r.data().iter().all(|&v| (v - 0.25).abs() < 1e-7));
    }
}
