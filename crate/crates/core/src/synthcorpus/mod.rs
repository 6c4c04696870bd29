//! Labelled synthetic room images with overlaid and/or in-scene text.
//!
//! Overlay text is axis-aligned, crisp and alpha-composited anywhere in the
//! frame. Scene text sits on a sign in the room: it is perspective-warped,
//! soft-edged, low-contrast and sometimes partly occluded. Backgrounds carry
//! letter-like clutter that no detector should fire on.

mod render;

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::annotation::{split_dataset, AggregationConfig};
use crate::datamodel::{
    write_manifest, write_votes, AggregatedLabel, DatasetManifest, FourClass, ImageTensor, Label, LabelSource,
    ManifestRecord, VoteRecord, CATEGORIES,
};
use crate::scoremap::{oracle_render, CharacterLayout, GlyphCenter, GlyphKind, ScoreMapDir};
use crate::selection::{region_gate_score, GateConfig};
use crate::{Error, Result};

pub use render::{Canvas, Homography};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OverlaySpec {
    /// Glyph height as a fraction of the image side.
    pub font_scale_range: (f64, f64),
    pub opacity_range: (f64, f64),
    pub words_range: (usize, usize),
}

impl Default for OverlaySpec {
    fn default() -> Self {
        Self {
            font_scale_range: (0.11, 0.19),
            opacity_range: (0.3, 1.0),
            words_range: (1, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneTextSpec {
    pub perspective: bool,
    pub occlusion_probability: f64,
    pub font_scale_range: (f64, f64),
    /// Ink-to-sign brightness difference.
    pub contrast_range: (f64, f64),
    pub words_range: (usize, usize),
}

impl Default for SceneTextSpec {
    fn default() -> Self {
        Self {
            perspective: true,
            occlusion_probability: 0.3,
            font_scale_range: (0.11, 0.19),
            contrast_range: (0.1, 0.25),
            words_range: (1, 2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundSpec {
    pub furniture_range: (usize, usize),
    pub clutter_range: (usize, usize),
    pub window_probability: f64,
    pub noise_std: f64,
}

impl Default for BackgroundSpec {
    fn default() -> Self {
        Self {
            furniture_range: (1, 3),
            clutter_range: (0, 2),
            window_probability: 0.5,
            noise_std: 0.015,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub image_side: usize,
    /// Probabilities of Overlaying, Organic, Both, None. The default leans
    /// on Organic: images that reach the classifier have passed the text
    /// gate, so most negatives carry scene text.
    pub class_mix: [f64; 4],
    pub overlay: OverlaySpec,
    pub scene_text: SceneTextSpec,
    pub background: BackgroundSpec,
    pub oracle_sigma_px: f64,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            image_side: 64,
            class_mix: [0.2, 0.4, 0.2, 0.2],
            overlay: OverlaySpec::default(),
            scene_text: SceneTextSpec::default(),
            background: BackgroundSpec::default(),
            oracle_sigma_px: 3.0,
            split_ratio: 0.8,
            seed: 0,
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64, max: f64) -> Result<()> {
    if !(lo >= min && hi <= max && lo <= hi) {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) must lie within [{min}, {max}]")));
    }
    Ok(())
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_side < crate::datamodel::MIN_PIPELINE_SIDE || self.image_side % 2 != 0 {
            return Err(Error::Config(format!(
                "image_side must be even and at least {}, got {}",
                crate::datamodel::MIN_PIPELINE_SIDE,
                self.image_side
            )));
        }
        if self.class_mix.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Config("class_mix entries must be non-negative".into()));
        }
        let total: f64 = self.class_mix.iter().sum();
        if total == 0.0 {
            return Err(Error::Config("class_mix has no support".into()));
        }
        if (total - 1.0).abs() > 1e-6 {
            return Err(Error::Config(format!("class_mix sums to {total}, expected 1")));
        }
        check_range("overlay.opacity", self.overlay.opacity_range, f64::MIN_POSITIVE, 1.0)?;
        check_range("overlay.font_scale", self.overlay.font_scale_range, 0.02, 0.5)?;
        check_range("scene_text.font_scale", self.scene_text.font_scale_range, 0.02, 0.5)?;
        check_range("scene_text.contrast", self.scene_text.contrast_range, 0.0, 1.0)?;
        check_range("occlusion_probability", (self.scene_text.occlusion_probability, self.scene_text.occlusion_probability), 0.0, 1.0)?;
        check_range("window_probability", (self.background.window_probability, self.background.window_probability), 0.0, 1.0)?;
        for (name, (lo, hi)) in [
            ("overlay.words", self.overlay.words_range),
            ("scene_text.words", self.scene_text.words_range),
        ] {
            if lo == 0 || lo > hi {
                return Err(Error::Config(format!("{name} range ({lo}, {hi}) must be non-empty and positive")));
            }
        }
        if !(self.oracle_sigma_px > 0.0) || !(self.background.noise_std >= 0.0) {
            return Err(Error::Config("oracle_sigma_px must be positive and noise_std non-negative".into()));
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return Err(Error::Config(format!("split_ratio must lie in (0, 1), got {}", self.split_ratio)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticExample {
    pub image: ImageTensor,
    pub label: FourClass,
    pub layout: CharacterLayout,
}

// Stroke glyphs on a unit box, x to the right, y down.
type Stroke = ((f64, f64), (f64, f64));
const GLYPHS: [&[Stroke]; 14] = [
    &[((0.0, 0.0), (0.0, 1.0)), ((0.0, 0.0), (1.0, 0.0)), ((0.0, 0.5), (0.8, 0.5)), ((0.0, 1.0), (1.0, 1.0))],
    &[((0.0, 0.0), (0.0, 1.0)), ((1.0, 0.0), (1.0, 1.0)), ((0.0, 0.5), (1.0, 0.5))],
    &[((0.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 1.0))],
    &[((0.0, 0.0), (1.0, 0.0)), ((0.5, 0.0), (0.5, 1.0))],
    &[((0.0, 1.0), (0.0, 0.0)), ((0.0, 0.0), (1.0, 1.0)), ((1.0, 1.0), (1.0, 0.0))],
    &[((0.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 1.0))],
    &[((0.0, 1.0), (0.5, 0.0)), ((0.5, 0.0), (1.0, 1.0)), ((0.25, 0.55), (0.75, 0.55))],
    &[((0.0, 0.0), (0.5, 1.0)), ((0.5, 1.0), (1.0, 0.0))],
    &[((0.0, 0.0), (1.0, 1.0)), ((1.0, 0.0), (0.0, 1.0))],
    &[((0.0, 0.0), (1.0, 0.0)), ((1.0, 0.0), (1.0, 1.0)), ((1.0, 1.0), (0.0, 1.0)), ((0.0, 1.0), (0.0, 0.0))],
    &[((0.0, 0.0), (0.0, 1.0)), ((0.0, 1.0), (1.0, 1.0)), ((1.0, 1.0), (1.0, 0.0))],
    &[((0.0, 0.0), (0.0, 1.0)), ((0.0, 0.0), (1.0, 0.0)), ((0.0, 0.5), (0.7, 0.5))],
    &[((0.0, 0.0), (0.0, 1.0)), ((0.0, 0.55), (1.0, 0.0)), ((0.3, 0.4), (1.0, 1.0))],
    &[((0.0, 0.0), (0.5, 0.5)), ((1.0, 0.0), (0.5, 0.5)), ((0.5, 0.5), (0.5, 1.0))],
];
const GLYPH_WIDTH: f64 = 0.6;
const ADVANCE: f64 = 0.85;

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn count(rng: &mut ChaCha8Rng, (lo, hi): (usize, usize)) -> usize {
    rng.random_range(lo..=hi.max(lo))
}

fn muted(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> render::Rgb {
    let base = uniform(rng, (lo, hi));
    let tint = [rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08)];
    tint.map(|t: f64| (base + t).clamp(0.0, 1.0) as f32)
}

fn luma(c: render::Rgb) -> f32 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

/// Word-local coordinates (glyph-height units) of glyph `i`'s box corner.
fn glyph_origin(i: usize) -> f64 {
    i as f64 * ADVANCE
}

fn word_width(n: usize) -> f64 {
    glyph_origin(n - 1) + GLYPH_WIDTH
}

/// A placed word: glyph choices plus the map from word-local units to pixels.
struct Word {
    glyphs: Vec<usize>,
    to_image: Homography,
}

impl Word {
    fn corners(&self, pad: f64) -> [(f64, f64); 4] {
        let w = word_width(self.glyphs.len());
        [(-pad, -pad), (w + pad, -pad), (w + pad, 1.0 + pad), (-pad, 1.0 + pad)].map(|p| self.to_image.apply(p))
    }

    fn inside(&self, side: usize, margin: f64) -> bool {
        self.corners(0.0)
            .iter()
            .all(|&(x, y)| x >= margin && y >= margin && x <= side as f64 - margin && y <= side as f64 - margin)
    }

    fn centers(&self) -> Vec<(f64, f64)> {
        (0..self.glyphs.len())
            .map(|i| self.to_image.apply((glyph_origin(i) + GLYPH_WIDTH / 2.0, 0.5)))
            .collect()
    }

    fn draw(&self, canvas: &mut Canvas, half_width: f64, soft: f64, color: render::Rgb, opacity: f32) {
        for (i, &g) in self.glyphs.iter().enumerate() {
            let x0 = glyph_origin(i);
            for &(a, b) in GLYPHS[g] {
                let pa = self.to_image.apply((x0 + a.0 * GLYPH_WIDTH, a.1));
                let pb = self.to_image.apply((x0 + b.0 * GLYPH_WIDTH, b.1));
                canvas.segment(pa, pb, half_width, soft, color, opacity);
            }
        }
    }

    fn record(&self, layout: &mut CharacterLayout, kind: GlyphKind, scale: f64) {
        let base = layout.glyphs.len();
        for (cx, cy) in self.centers() {
            layout.glyphs.push(GlyphCenter {
                center_x: cx,
                center_y: cy,
                scale,
                kind,
            });
        }
        layout.links.extend((1..self.glyphs.len()).map(|i| (base + i - 1, base + i)));
    }
}

fn random_glyphs(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..GLYPHS.len())).collect()
}

fn paint_background(canvas: &mut Canvas, spec: &BackgroundSpec, rng: &mut ChaCha8Rng) {
    let s = canvas.width as f64;
    let floor_y = s * uniform(rng, (0.6, 0.82));
    let floor = muted(rng, 0.2, 0.55);
    canvas.rect(0.0, floor_y, s, s, floor, 1.0);
    let boards = rng.random_range(2..5);
    for i in 0..boards {
        let y = floor_y + (i as f64 + 0.5) * (s - floor_y) / boards as f64;
        canvas.segment((0.0, y), (s, y), 0.4, 0.8, floor.map(|c| c * 0.8), 0.6);
    }
    if rng.random_bool(spec.window_probability) {
        let (w, h) = (s * uniform(rng, (0.2, 0.35)), s * uniform(rng, (0.2, 0.35)));
        let (x, y) = (uniform(rng, (0.0, s - w)), uniform(rng, (0.0, (floor_y - h).max(1.0))));
        canvas.rect(x, y, x + w, y + h, muted(rng, 0.8, 0.95), 1.0);
        let frame = muted(rng, 0.3, 0.6);
        canvas.segment((x + w / 2.0, y), (x + w / 2.0, y + h), 0.6, 0.5, frame, 1.0);
        canvas.segment((x, y + h / 2.0), (x + w, y + h / 2.0), 0.6, 0.5, frame, 1.0);
    }
    for _ in 0..count(rng, spec.furniture_range) {
        let (w, h) = (s * uniform(rng, (0.15, 0.45)), s * uniform(rng, (0.15, 0.4)));
        let x = uniform(rng, (-w / 3.0, s - 2.0 * w / 3.0));
        let y = uniform(rng, (floor_y - h, (floor_y + h / 3.0).min(s - h / 2.0)));
        let c = muted(rng, 0.15, 0.75);
        canvas.rect(x, y, x + w, y + h, c, 1.0);
        canvas.rect(x, y, x + w, y + h * 0.12, c.map(|v| v * 0.75), 1.0);
    }
    // Letter-like clutter: single rotated glyph shapes on surfaces.
    for _ in 0..count(rng, spec.clutter_range) {
        let g = rng.random_range(0..GLYPHS.len());
        let h = s * uniform(rng, (0.08, 0.2));
        let to_image = Homography::translate(uniform(rng, (0.1 * s, 0.9 * s)), uniform(rng, (0.1 * s, 0.9 * s)))
            .then_after(&Homography::rotate(uniform(rng, (-1.2, 1.2))))
            .then_after(&Homography::scale(h))
            .then_after(&Homography::translate(-GLYPH_WIDTH / 2.0, -0.5));
        let word = Word { glyphs: vec![g], to_image };
        let color = muted(rng, 0.05, 0.95);
        word.draw(canvas, (0.07 * h).max(0.5), 0.5, color, uniform(rng, (0.5, 1.0)) as f32);
    }
}

fn place_overlay(spec: &OverlaySpec, side: usize, rng: &mut ChaCha8Rng) -> Word {
    let s = side as f64;
    let mut h = s * uniform(rng, spec.font_scale_range);
    for attempt in 0.. {
        let max_glyphs = (((s - 2.0) / h - GLYPH_WIDTH) / ADVANCE).floor() as usize + 1;
        let n = rng.random_range(2..=5).min(max_glyphs.max(1));
        let w = word_width(n) * h;
        let x = uniform(rng, (1.0, (s - 1.0 - w).max(1.0)));
        let y = uniform(rng, (1.0, (s - 1.0 - h).max(1.0)));
        let word = Word {
            glyphs: random_glyphs(rng, n),
            to_image: Homography::translate(x, y).then_after(&Homography::scale(h)),
        };
        if word.inside(side, 0.5) || attempt >= 20 {
            return word;
        }
        h *= 0.9;
    }
    unreachable!()
}

fn place_scene(spec: &SceneTextSpec, side: usize, rng: &mut ChaCha8Rng) -> (Word, f64) {
    let s = side as f64;
    let mut h = s * uniform(rng, spec.font_scale_range);
    for attempt in 0.. {
        let n = rng.random_range(2..=5);
        let warp = if spec.perspective {
            let theta = uniform(rng, (0.15, 0.6)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let p = uniform(rng, (0.006, 0.018)) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            Homography::perspective(p, uniform(rng, (-0.006, 0.006)))
                .then_after(&Homography::rotate(theta))
                .then_after(&Homography::shear(uniform(rng, (-0.35, 0.35))))
        } else {
            Homography::identity()
        };
        let to_image = Homography::translate(uniform(rng, (0.05 * s, 0.95 * s)), uniform(rng, (0.05 * s, 0.95 * s)))
            .then_after(&warp)
            .then_after(&Homography::scale(h))
            .then_after(&Homography::translate(-word_width(n) / 2.0, -0.5));
        let word = Word {
            glyphs: random_glyphs(rng, n),
            to_image,
        };
        if word.inside(side, 1.0) {
            return (word, h);
        }
        if attempt >= 40 {
            // Shrink towards the centre until it fits.
            h *= 0.85;
        }
    }
    unreachable!()
}

fn draw_overlay(canvas: &mut Canvas, word: &Word, h: f64, spec: &OverlaySpec, rng: &mut ChaCha8Rng) {
    let [x0, y0, x1, y1] = {
        let c = word.corners(0.0);
        [c[0].0, c[0].1, c[2].0, c[2].1]
    };
    let bg = luma(canvas.mean_in(x0, y0, x1, y1));
    let ink: render::Rgb = match rng.random_range(0..3) {
        0 => [1.0, 1.0, 1.0],
        1 => [0.0, 0.0, 0.0],
        _ => {
            let mut c = [0.0f32; 3];
            c[rng.random_range(0..3)] = 1.0;
            if bg < 0.5 {
                c.map(|v| v.max(0.45))
            } else {
                c.map(|v| v * 0.8)
            }
        }
    };
    // Keep the ink on the far side of the local background.
    let ink = if (luma(ink) - bg).abs() < 0.35 { ink.map(|v| 1.0 - v) } else { ink };
    let opacity = uniform(rng, spec.opacity_range) as f32;
    word.draw(canvas, (0.09 * h).max(0.6), 0.5, ink, opacity);
}

fn draw_scene(canvas: &mut Canvas, word: &Word, h: f64, spec: &SceneTextSpec, rng: &mut ChaCha8Rng) {
    let sign = muted(rng, 0.3, 0.75);
    canvas.quad(word.corners(0.35), sign, 1.0);
    let delta = uniform(rng, spec.contrast_range) as f32 * if luma(sign) > 0.5 { -1.0 } else { 1.0 };
    let ink = sign.map(|c| (c + delta).clamp(0.0, 1.0));
    word.draw(canvas, (0.08 * h).max(0.5), uniform(rng, (1.0, 1.6)), ink, 1.0);
    if rng.random_bool(spec.occlusion_probability) {
        let n = word.glyphs.len() as f64;
        let start = uniform(rng, (0.0, word_width(word.glyphs.len()) - ADVANCE));
        let width = ADVANCE * uniform(rng, (0.6, (n / 2.0).max(0.8)));
        let q = [(start, -0.5), (start + width, -0.5), (start + width, 1.5), (start, 1.5)].map(|p| word.to_image.apply(p));
        canvas.quad(q, muted(rng, 0.1, 0.6), 1.0);
    }
}

/// One composite drawn from `spec` using `rng`.
pub fn generate_example(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Result<SyntheticExample> {
    spec.validate()?;
    let label = FourClass::ALL[WeightedIndex::new(spec.class_mix)
        .map_err(|e| Error::Config(format!("class_mix: {e}")))?
        .sample(rng)];
    let side = spec.image_side;
    let mut canvas = Canvas::new(side, side, muted(rng, 0.45, 0.85));
    paint_background(&mut canvas, &spec.background, rng);
    let mut layout = CharacterLayout::default();
    if label.has_scene_text() {
        for _ in 0..count(rng, spec.scene_text.words_range) {
            let (word, h) = place_scene(&spec.scene_text, side, rng);
            draw_scene(&mut canvas, &word, h, &spec.scene_text, rng);
            word.record(&mut layout, GlyphKind::Scene, h);
        }
    }
    if label.has_overlay() {
        for _ in 0..count(rng, spec.overlay.words_range) {
            let word = place_overlay(&spec.overlay, side, rng);
            let h = word.to_image.0[0];
            draw_overlay(&mut canvas, &word, h, &spec.overlay, rng);
            word.record(&mut layout, GlyphKind::Overlay, h);
        }
    }
    if spec.background.noise_std > 0.0 {
        let noise = Normal::new(0.0f32, spec.background.noise_std as f32).map_err(|e| Error::Config(e.to_string()))?;
        canvas.perturb(|| noise.sample(rng));
    }
    layout.validate(side, side)?;
    Ok(SyntheticExample {
        image: ImageTensor::new(side, side, canvas.to_chw())?,
        label,
        layout,
    })
}

/// Independent stream for example `index`, so any subset can be regenerated
/// alone and in any order.
pub fn example_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub fn example_id(index: usize) -> String {
    format!("syn_{index:05}")
}

/// In-memory examples `0..n` with their oracle score maps.
pub fn generate_examples(spec: &SyntheticSpec, n: usize) -> Result<Vec<(SyntheticExample, crate::datamodel::ScoreMap)>> {
    spec.validate()?;
    (0..n)
        .map(|i| {
            let ex = generate_example(spec, &mut example_rng(spec.seed, i as u64))?;
            let map = oracle_render(&ex.layout, spec.image_side, spec.image_side, spec.oracle_sigma_px)?;
            Ok((ex, map))
        })
        .collect()
}

/// Votes from five agreeing workers for every example.
fn unanimous_votes(id: &str, label: FourClass, index: usize, rng: &mut ChaCha8Rng) -> Vec<VoteRecord> {
    (0..5)
        .map(|w| VoteRecord {
            worker_id: format!("synth_w{w}"),
            image_id: id.to_string(),
            label,
            vote_time_s: uniform(rng, (4.0, 30.0)),
            batch: (index / 100) as u32,
        })
        .collect()
}

/// Writes `images/`, `maps/`, `layouts/`, `manifest.jsonl` and `votes.csv`
/// under `out`, returning the split manifest.
pub fn generate_corpus(spec: &SyntheticSpec, n: usize, out: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::Empty("synthetic corpus size"));
    }
    let layouts = out.join("layouts");
    for dir in [out.join("images"), layouts.clone()] {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let maps = ScoreMapDir::new(out.join("maps"));
    let gate = GateConfig::default();
    let mut manifest = DatasetManifest::new();
    let mut votes = Vec::with_capacity(5 * n);
    for (i, (ex, map)) in generate_examples(spec, n)?.into_iter().enumerate() {
        let id = example_id(i);
        let image_path = format!("images/{id}.png");
        ex.image.save_png(&out.join(&image_path))?;
        maps.store(&id, &map)?;
        let layout_path = layouts.join(format!("{id}.json"));
        std::fs::write(&layout_path, serde_json::to_vec_pretty(&ex.layout)?).map_err(|e| Error::io(&layout_path, e))?;

        let mut rng = example_rng(spec.seed ^ 0x766f_7465, i as u64);
        let category = CATEGORIES[rng.random_range(0..CATEGORIES.len())];
        let mut rec = ManifestRecord::new(&id, image_path, category);
        rec.set_aggregated(AggregatedLabel {
            image_id: id.clone(),
            label: Label::Class(ex.label),
            votes_for_winner: 5,
            total_votes: 5,
            ambiguous: false,
            source: LabelSource::Vote,
        });
        rec.gate_score = Some(region_gate_score(&map, &gate));
        rec.n_text_regions = words_in(&ex.layout) as u32;
        votes.extend(unanimous_votes(&id, ex.label, i, &mut rng));
        manifest.push(rec)?;
    }
    let manifest = split_dataset(
        &manifest,
        &AggregationConfig {
            split_ratio: spec.split_ratio,
            split_seed: spec.seed,
            ..AggregationConfig::default()
        },
    )?;
    write_manifest(&out.join("manifest.jsonl"), &manifest)?;
    write_votes(&out.join("votes.csv"), &votes)?;
    let spec_path = out.join("spec.json");
    std::fs::write(&spec_path, serde_json::to_vec_pretty(spec)?).map_err(|e| Error::io(&spec_path, e))?;
    Ok(manifest)
}

/// Connected runs of linked glyphs.
pub fn words_in(layout: &CharacterLayout) -> usize {
    layout.glyphs.len() - layout.links.len()
}
