//! Synthetic stand-in for a character-region detector.
//!
//! Every glyph contributes a unit-peak isotropic Gaussian to the region
//! channel and every linked glyph pair one to the affinity channel, at the
//! pair midpoint. Overlapping responses combine by element-wise maximum, so
//! scores stay in `[0, 1]`.

use serde::{Deserialize, Serialize};

use crate::datamodel::ScoreMap;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlyphKind {
    Scene,
    Overlay,
}

/// One rendered character. Coordinates are continuous image coordinates,
/// pixel `i` covering `[i, i + 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlyphCenter {
    pub center_x: f64,
    pub center_y: f64,
    pub scale: f64,
    pub kind: GlyphKind,
}

/// Ground-truth character placement, with links between neighbouring
/// characters of the same word.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CharacterLayout {
    pub glyphs: Vec<GlyphCenter>,
    #[serde(default)]
    pub links: Vec<(usize, usize)>,
}

impl CharacterLayout {
    pub fn is_empty(&self) -> bool {
        self.glyphs.is_empty()
    }

    pub fn count(&self, kind: GlyphKind) -> usize {
        self.glyphs.iter().filter(|g| g.kind == kind).count()
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        for (i, g) in self.glyphs.iter().enumerate() {
            let inside = (0.0..=width as f64).contains(&g.center_x)
                && (0.0..=height as f64).contains(&g.center_y);
            if !inside {
                return Err(Error::InvalidValue(format!(
                    "glyph {i} center ({}, {}) outside {height}x{width} image",
                    g.center_x, g.center_y
                )));
            }
            if !(g.scale > 0.0) {
                return Err(Error::InvalidValue(format!("glyph {i} has scale {}", g.scale)));
            }
        }
        for &(a, b) in &self.links {
            if a >= self.glyphs.len() || b >= self.glyphs.len() {
                return Err(Error::InvalidValue(format!(
                    "link ({a}, {b}) references a missing glyph"
                )));
            }
        }
        Ok(())
    }
}

/// Maps a continuous image coordinate onto the half-resolution grid, in cell
/// index units (cell `j` is centred on image coordinate `2j + 1`).
pub fn to_map_coord(image_coord: f64) -> f64 {
    image_coord / 2.0 - 0.5
}

fn splat_max(plane: &mut [f32], height: usize, width: usize, u: f64, v: f64, sigma_cells: f64) {
    let inv = 1.0 / (2.0 * sigma_cells * sigma_cells);
    // exp(-r^2 inv) underflows f32 well before 6 sigma.
    let reach = (6.0 * sigma_cells).ceil();
    let y0 = ((v - reach).floor().max(0.0)) as usize;
    let y1 = ((v + reach).ceil().min(height as f64 - 1.0)).max(0.0) as usize;
    let x0 = ((u - reach).floor().max(0.0)) as usize;
    let x1 = ((u + reach).ceil().min(width as f64 - 1.0)).max(0.0) as usize;
    for i in y0..=y1 {
        let dy = i as f64 - v;
        for j in x0..=x1 {
            let dx = j as f64 - u;
            let val = (-(dx * dx + dy * dy) * inv).exp() as f32;
            let cell = &mut plane[i * width + j];
            if val > *cell {
                *cell = val;
            }
        }
    }
}

/// Renders the oracle score map of an `image_h x image_w` image. `sigma_px` is
/// the Gaussian spread in image pixels.
pub fn oracle_render(
    layout: &CharacterLayout,
    image_h: usize,
    image_w: usize,
    sigma_px: f64,
) -> Result<ScoreMap> {
    if image_h % 2 != 0 || image_w % 2 != 0 || image_h == 0 || image_w == 0 {
        return Err(Error::ShapeMismatch(format!(
            "oracle needs even, non-zero image sides, got {image_h}x{image_w}"
        )));
    }
    if !(sigma_px > 0.0) {
        return Err(Error::Config(format!("oracle sigma must be positive, got {sigma_px}")));
    }
    layout.validate(image_h, image_w)?;
    let (h, w) = (image_h / 2, image_w / 2);
    let sigma = sigma_px / 2.0;
    let mut region = vec![0.0f32; h * w];
    let mut affinity = vec![0.0f32; h * w];
    for g in &layout.glyphs {
        splat_max(&mut region, h, w, to_map_coord(g.center_x), to_map_coord(g.center_y), sigma);
    }
    for &(a, b) in &layout.links {
        let (ga, gb) = (&layout.glyphs[a], &layout.glyphs[b]);
        let mx = (ga.center_x + gb.center_x) / 2.0;
        let my = (ga.center_y + gb.center_y) / 2.0;
        splat_max(&mut affinity, h, w, to_map_coord(mx), to_map_coord(my), sigma);
    }
    ScoreMap::from_planes(h, w, region, affinity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn glyph(x: f64, y: f64) -> GlyphCenter {
        GlyphCenter {
            center_x: x,
            center_y: y,
            scale: 6.0,
            kind: GlyphKind::Overlay,
        }
    }

    fn argmax(plane: &[f32], width: usize) -> (usize, usize) {
        let (i, _) = plane
            .iter()
            .enumerate()
            .fold((0, f32::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
        (i % width, i / width)
    }

    #[test]
    fn empty_layout_renders_zero_map() {
        let m = oracle_render(&CharacterLayout::default(), 64, 48, 4.0).unwrap();
        assert_eq!((m.height(), m.width()), (32, 24));
        assert!(m.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_glyph_peaks_at_half_resolution_center() {
        let layout = CharacterLayout {
            glyphs: vec![glyph(32.0, 16.0)],
            links: vec![],
        };
        let m = oracle_render(&layout, 64, 64, 4.0).unwrap();
        let (x, y) = argmax(m.region(), m.width());
        assert!(x.abs_diff(16) <= 1 && y.abs_diff(8) <= 1, "peak at ({x}, {y})");
    }

    #[test]
    fn single_glyph_mass_matches_direct_sum_and_is_symmetric() {
        // Center on cell (10, 12): image coordinate 2 * 12 + 1 = 25, 2 * 10 + 1 = 21.
        let layout = CharacterLayout {
            glyphs: vec![glyph(25.0, 21.0)],
            links: vec![],
        };
        let sigma_px = 6.0;
        let m = oracle_render(&layout, 48, 64, sigma_px).unwrap();
        let s = sigma_px / 2.0;
        let mut mass = 0.0f64;
        for i in 0..24 {
            for j in 0..32 {
                let (dx, dy) = (j as f64 - 12.0, i as f64 - 10.0);
                mass += (-(dx * dx + dy * dy) / (2.0 * s * s)).exp();
            }
        }
        let sum: f64 = m.region().iter().map(|&v| v as f64).sum();
        assert!((sum - mass).abs() < 1e-4, "{sum} vs {mass}");
        assert_eq!(m.region_at(10, 12), 1.0);
        for d in 1..8 {
            assert_eq!(m.region_at(10, 12 + d), m.region_at(10, 12 - d));
            assert_eq!(m.region_at(10 + d, 12), m.region_at(10 - d, 12));
            assert_eq!(m.region_at(10 + d, 12 + d), m.region_at(10 - d, 12 - d));
        }
        assert!(m.affinity().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linked_pair_puts_affinity_at_midpoint() {
        let layout = CharacterLayout {
            glyphs: vec![glyph(9.0, 21.0), glyph(25.0, 21.0)],
            links: vec![(0, 1)],
        };
        let m = oracle_render(&layout, 48, 64, 3.0).unwrap();
        // Midpoint (17, 21) sits on cell x = 8, y = 10.
        assert_eq!(argmax(m.affinity(), m.width()), (8, 10));
        assert_eq!(m.affinity_at(10, 8), 1.0);
    }

    #[test]
    fn out_of_bounds_glyph_is_rejected() {
        let layout = CharacterLayout {
            glyphs: vec![glyph(70.0, 10.0)],
            links: vec![],
        };
        assert!(oracle_render(&layout, 64, 64, 4.0).is_err());
        let bad_link = CharacterLayout {
            glyphs: vec![glyph(10.0, 10.0)],
            links: vec![(0, 1)],
        };
        assert!(oracle_render(&bad_link, 64, 64, 4.0).is_err());
    }

    #[test]
    fn odd_dimensions_are_rejected() {
        assert!(oracle_render(&CharacterLayout::default(), 63, 64, 4.0).is_err());
    }

    proptest! {
        #[test]
        fn adding_a_glyph_never_lowers_region_scores(
            pts in prop::collection::vec((0.0f64..64.0, 0.0f64..48.0), 0..6),
            extra in (0.0f64..64.0, 0.0f64..48.0),
            sigma in 1.0f64..8.0,
        ) {
            let mut layout = CharacterLayout {
                glyphs: pts.iter().map(|&(x, y)| glyph(x, y)).collect(),
                links: vec![],
            };
            let before = oracle_render(&layout, 48, 64, sigma).unwrap();
            layout.glyphs.push(glyph(extra.0, extra.1));
            let after = oracle_render(&layout, 48, 64, sigma).unwrap();
            prop_assert_eq!((after.height(), after.width()), (24, 32));
            for (a, b) in after.region().iter().zip(before.region()) {
                prop_assert!(a >= b);
            }
            prop_assert!(after.data().iter().all(|v| (0.0..=1.0).contains(v)));
            let again = oracle_render(&layout, 48, 64, sigma).unwrap();
            prop_assert_eq!(again, after);
        }
    }
}
