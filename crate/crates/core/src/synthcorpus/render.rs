//! Minimal raster canvas: anti-aliased strokes, filled quads, blending.

pub type Rgb = [f32; 3];

/// Row-major RGB canvas with values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct Canvas {
    pub height: usize,
    pub width: usize,
    pixels: Vec<Rgb>,
}

impl Canvas {
    pub fn new(height: usize, width: usize, fill: Rgb) -> Self {
        Self {
            height,
            width,
            pixels: vec![fill; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// `alpha` blends `color` over the existing pixel.
    pub fn blend(&mut self, y: usize, x: usize, color: Rgb, alpha: f32) {
        if alpha <= 0.0 {
            return;
        }
        let a = alpha.min(1.0);
        let p = &mut self.pixels[y * self.width + x];
        for c in 0..3 {
            p[c] += a * (color[c] - p[c]);
        }
    }

    /// Mean colour over the pixels of a box, clamped to the canvas.
    pub fn mean_in(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> Rgb {
        let (xa, xb) = (clamp_idx(x0, self.width), clamp_idx(x1, self.width));
        let (ya, yb) = (clamp_idx(y0, self.height), clamp_idx(y1, self.height));
        let mut acc = [0f64; 3];
        let mut n = 0usize;
        for y in ya..=yb {
            for x in xa..=xb {
                let p = self.get(y, x);
                for c in 0..3 {
                    acc[c] += p[c] as f64;
                }
                n += 1;
            }
        }
        acc.map(|v| (v / n as f64) as f32)
    }

    /// Paints `coverage(x + 0.5, y + 0.5)` of `color` inside the pixel bounds.
    pub fn paint(&mut self, bounds: [f64; 4], color: Rgb, opacity: f32, coverage: impl Fn(f64, f64) -> f64) {
        let [x0, y0, x1, y1] = bounds;
        if x1 < 0.0 || y1 < 0.0 || x0 >= self.width as f64 || y0 >= self.height as f64 {
            return;
        }
        for y in clamp_idx(y0, self.height)..=clamp_idx(y1, self.height) {
            for x in clamp_idx(x0, self.width)..=clamp_idx(x1, self.width) {
                let c = coverage(x as f64 + 0.5, y as f64 + 0.5);
                if c > 0.0 {
                    self.blend(y, x, color, opacity * c.min(1.0) as f32);
                }
            }
        }
    }

    /// Thick segment; `soft` widens the edge ramp (0.5 is a crisp 1-pixel ramp).
    pub fn segment(&mut self, a: (f64, f64), b: (f64, f64), half_width: f64, soft: f64, color: Rgb, opacity: f32) {
        let r = half_width + soft + 1.0;
        let bounds = [a.0.min(b.0) - r, a.1.min(b.1) - r, a.0.max(b.0) + r, a.1.max(b.1) + r];
        self.paint(bounds, color, opacity, |x, y| {
            let d = dist_to_segment((x, y), a, b);
            ((half_width + soft - d) / (2.0 * soft)).clamp(0.0, 1.0)
        });
    }

    /// Convex quadrilateral given clockwise or anticlockwise.
    pub fn quad(&mut self, q: [(f64, f64); 4], color: Rgb, opacity: f32) {
        let xs = q.map(|p| p.0);
        let ys = q.map(|p| p.1);
        let bounds = [
            xs.iter().cloned().fold(f64::INFINITY, f64::min),
            ys.iter().cloned().fold(f64::INFINITY, f64::min),
            xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            ys.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        ];
        self.paint(bounds, color, opacity, |x, y| {
            let mut sign = 0.0f64;
            for i in 0..4 {
                let (p, n) = (q[i], q[(i + 1) % 4]);
                let cross = (n.0 - p.0) * (y - p.1) - (n.1 - p.1) * (x - p.0);
                if cross != 0.0 {
                    if sign != 0.0 && cross.signum() != sign {
                        return 0.0;
                    }
                    sign = cross.signum();
                }
            }
            1.0
        });
    }

    pub fn rect(&mut self, x0: f64, y0: f64, x1: f64, y1: f64, color: Rgb, opacity: f32) {
        self.quad([(x0, y0), (x1, y0), (x1, y1), (x0, y1)], color, opacity);
    }

    /// Adds per-pixel noise from `noise` and clamps to `[0, 1]`.
    pub fn perturb(&mut self, mut noise: impl FnMut() -> f32) {
        for p in &mut self.pixels {
            let n = noise();
            for c in p.iter_mut() {
                *c = (*c + n).clamp(0.0, 1.0);
            }
        }
    }

    /// Planar CHW copy.
    pub fn to_chw(&self) -> Vec<f32> {
        let n = self.height * self.width;
        let mut out = vec![0f32; 3 * n];
        for (i, p) in self.pixels.iter().enumerate() {
            for c in 0..3 {
                out[c * n + i] = p[c].clamp(0.0, 1.0);
            }
        }
        out
    }
}

fn clamp_idx(v: f64, len: usize) -> usize {
    (v.floor().max(0.0) as usize).min(len - 1)
}

fn dist_to_segment(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Projective map of the plane, row-major 3×3.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography(pub [f64; 9]);

impl Homography {
    pub fn identity() -> Self {
        Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn translate(tx: f64, ty: f64) -> Self {
        Self([1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0])
    }

    pub fn scale(s: f64) -> Self {
        Self([s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn rotate(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self([c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0])
    }

    pub fn shear(k: f64) -> Self {
        Self([1.0, k, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0])
    }

    /// Foreshortening: the `w` row picks up `(px, py)`.
    pub fn perspective(px: f64, py: f64) -> Self {
        Self([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, px, py, 1.0])
    }

    /// `self ∘ other`: apply `other` first.
    pub fn then_after(&self, other: &Homography) -> Homography {
        let (a, b) = (&self.0, &other.0);
        let mut m = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                m[r * 3 + c] = (0..3).map(|k| a[r * 3 + k] * b[k * 3 + c]).sum();
            }
        }
        Homography(m)
    }

    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let m = &self.0;
        let w = m[6] * p.0 + m[7] * p.1 + m[8];
        ((m[0] * p.0 + m[1] * p.1 + m[2]) / w, (m[3] * p.0 + m[4] * p.1 + m[5]) / w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn crisp_segment_covers_its_pixels() {
        let mut c = Canvas::new(8, 8, [0.0; 3]);
        c.segment((1.0, 4.0), (7.0, 4.0), 1.0, 0.5, [1.0; 3], 1.0);
        assert_eq!(c.get(4, 4), [1.0; 3]);
        assert_eq!(c.get(3, 4), [1.0; 3]);
        assert_eq!(c.get(1, 4), [0.0; 3]);
    }

    #[test]
    fn quad_and_blend() {
        let mut c = Canvas::new(6, 6, [0.0; 3]);
        c.rect(1.0, 1.0, 4.0, 4.0, [1.0, 0.5, 0.0], 0.5);
        assert_eq!(c.get(2, 2), [0.5, 0.25, 0.0]);
        assert_eq!(c.get(5, 5), [0.0; 3]);
        let m = c.mean_in(1.0, 1.0, 3.9, 3.9);
        assert!((m[0] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn homography_composition() {
        let h = Homography::translate(2.0, 3.0).then_after(&Homography::scale(2.0));
        assert_eq!(h.apply((1.0, 1.0)), (4.0, 5.0));
        let r = Homography::rotate(std::f64::consts::FRAC_PI_2).apply((1.0, 0.0));
        assert!((r.0).abs() < 1e-12 && (r.1 - 1.0).abs() < 1e-12);
        let p = Homography::perspective(0.5, 0.0).apply((2.0, 2.0));
        assert_eq!(p, (1.0, 1.0));
    }
}
