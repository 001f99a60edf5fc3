//! Seeded synthetic inscription corpus.
//!
//! Each image carries glyph-like dark strokes over a background whose style
//! depends on the material (stone grain, brushed metal, paper fibre) and on
//! the background class: regular backgrounds are flat with mild noise, while
//! irregular ones add an illumination gradient, dark stains and heavy noise.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::classify::{Background, Material};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::raster::{save_gray, GrayRaster, RasterError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthParams {
    /// Images per (material, background) class.
    pub per_class: usize,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            per_class: 25,
            seed: 7,
            width: 128,
            height: 128,
        }
    }
}

struct Stroke {
    a: (f64, f64),
    b: (f64, f64),
    half_width: f64,
}

impl Stroke {
    fn covers(&self, y: f64, x: f64) -> bool {
        let (dy, dx) = (self.b.0 - self.a.0, self.b.1 - self.a.1);
        let len2 = dy * dy + dx * dx;
        let t = if len2 == 0.0 {
            0.0
        } else {
            (((y - self.a.0) * dy + (x - self.a.1) * dx) / len2).clamp(0.0, 1.0)
        };
        let (py, px) = (self.a.0 + t * dy - y, self.a.1 + t * dx - x);
        py * py + px * px <= self.half_width * self.half_width
    }

    /// Marks covered pixel centers, visiting only the stroke's bounding box.
    fn paint(&self, mask: &mut [bool], width: usize, height: usize) {
        let pad = self.half_width + 1.0;
        let r0 = (self.a.0.min(self.b.0) - pad).max(0.0) as usize;
        let r1 = ((self.a.0.max(self.b.0) + pad).ceil() as usize).min(height);
        let c0 = (self.a.1.min(self.b.1) - pad).max(0.0) as usize;
        let c1 = ((self.a.1.max(self.b.1) + pad).ceil() as usize).min(width);
        for r in r0..r1 {
            for c in c0..c1 {
                if self.covers(r as f64 + 0.5, c as f64 + 0.5) {
                    mask[r * width + c] = true;
                }
            }
        }
    }
}

/// Lays glyphs out on a loose grid of text lines.
fn glyph_strokes(rng: &mut ChaCha8Rng, width: usize, height: usize) -> Vec<Stroke> {
    let cell = 18.0;
    let margin = 8.0;
    let cols = ((width as f64 - 2.0 * margin) / cell).floor() as usize;
    let rows = ((height as f64 - 2.0 * margin) / (cell * 1.4)).floor() as usize;
    let mut strokes = Vec::new();
    for line in 0..rows {
        let top = margin + line as f64 * cell * 1.4;
        for g in 0..cols {
            if rng.gen_bool(0.2) {
                continue;
            }
            let left = margin + g as f64 * cell;
            let half_width = rng.gen_range(1.0..1.8);
            // Devanagari-style headline over part of the glyph.
            if rng.gen_bool(0.7) {
                strokes.push(Stroke {
                    a: (top + 2.0, left),
                    b: (top + 2.0, left + cell - 3.0),
                    half_width,
                });
            }
            for _ in 0..rng.gen_range(2..=3) {
                let a = (
                    top + rng.gen_range(2.0..cell - 2.0),
                    left + rng.gen_range(1.0..cell - 4.0),
                );
                let b = (
                    top + rng.gen_range(2.0..cell - 2.0),
                    left + rng.gen_range(1.0..cell - 4.0),
                );
                strokes.push(Stroke { a, b, half_width });
            }
        }
    }
    strokes
}

/// Smooth value noise: bilinear interpolation of a coarse random grid in [-1, 1].
fn value_noise(rng: &mut ChaCha8Rng, width: usize, height: usize, cell: usize) -> Vec<f64> {
    let gw = width / cell + 2;
    let gh = height / cell + 2;
    let grid: Vec<f64> = (0..gw * gh).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut out = Vec::with_capacity(width * height);
    for r in 0..height {
        let fy = r as f64 / cell as f64;
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        for c in 0..width {
            let fx = c as f64 / cell as f64;
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let g = |y: usize, x: usize| grid[y * gw + x];
            let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
            let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

fn material_texture(
    rng: &mut ChaCha8Rng,
    material: Material,
    width: usize,
    height: usize,
) -> Vec<f64> {
    match material {
        Material::Stone => value_noise(rng, width, height, 4),
        Material::Metal => {
            let rows: Vec<f64> = (0..height).map(|_| rng.gen_range(-1.0..1.0)).collect();
            (0..width * height).map(|i| rows[i / width]).collect()
        }
        Material::Document => {
            let cols: Vec<f64> = (0..width).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let fibre = value_noise(rng, width, height, 16);
            (0..width * height)
                .map(|i| 0.5 * cols[i % width] + 0.5 * fibre[i])
                .collect()
        }
    }
}

/// Renders one image. Deterministic in `rng`'s state.
pub fn render(
    rng: &mut ChaCha8Rng,
    material: Material,
    background: Background,
    width: usize,
    height: usize,
) -> GrayRaster {
    let strokes = glyph_strokes(rng, width, height);
    let texture = material_texture(rng, material, width, height);
    let n = width * height;

    let (mut bg, ink_ratio, noise_sd, texture_amp) = match background {
        Background::Regular => {
            let level = rng.gen_range(185.0..215.0);
            (vec![level; n], None, 3.0, 4.0)
        }
        Background::Irregular => {
            let level = rng.gen_range(165.0..200.0);
            let angle: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let amp = rng.gen_range(50.0..90.0);
            let (sy, sx) = angle.sin_cos();
            let diag = ((width * width + height * height) as f64).sqrt();
            let mut bg: Vec<f64> = (0..n)
                .map(|i| {
                    let (r, c) = ((i / width) as f64, (i % width) as f64);
                    let proj =
                        ((r - height as f64 / 2.0) * sy + (c - width as f64 / 2.0) * sx) / diag;
                    level + amp * proj
                })
                .collect();
            for _ in 0..rng.gen_range(2..=4) {
                let cy = rng.gen_range(0.0..height as f64);
                let cx = rng.gen_range(0.0..width as f64);
                let radius: f64 = rng.gen_range(8.0..24.0);
                let depth = rng.gen_range(40.0..80.0);
                for (i, v) in bg.iter_mut().enumerate() {
                    let (r, c) = ((i / width) as f64, (i % width) as f64);
                    let d2 = (r - cy).powi(2) + (c - cx).powi(2);
                    *v -= depth * (-d2 / (2.0 * radius * radius)).exp();
                }
            }
            (bg, Some(rng.gen_range(0.45..0.6)), 16.0, 12.0)
        }
    };
    for (v, t) in bg.iter_mut().zip(&texture) {
        *v += texture_amp * t;
    }
    let ink_level = rng.gen_range(15.0..35.0);
    let noise = Normal::new(0.0, noise_sd).expect("positive sd");

    let mut inked = vec![false; n];
    for s in &strokes {
        s.paint(&mut inked, width, height);
    }
    let mut data = Vec::with_capacity(n);
    for (&b, &inked) in bg.iter().zip(&inked) {
        let base = match (inked, ink_ratio) {
            (false, _) => b,
            (true, None) => ink_level,
            // Irregular ink follows the local illumination.
            (true, Some(ratio)) => b * ratio,
        };
        let v = base + noise.sample(rng);
        data.push(v.round().clamp(0.0, 255.0) as u8);
    }
    GrayRaster::new(width, height, data).expect("dimensions are valid")
}

/// Writes `per_class` images for every (material, background) pair plus a
/// `manifest.json` into `out_dir`.
pub fn generate_synthetic_corpus(
    out_dir: impl AsRef<Path>,
    params: SynthParams,
) -> Result<DatasetManifest, RasterError> {
    if params.per_class < 2 {
        return Err(RasterError::InvalidRaster(
            "at least 2 images per class are required".into(),
        ));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut entries = Vec::new();
    for material in Material::ALL {
        for background in Background::ALL {
            for i in 0..params.per_class {
                let img = render(&mut rng, material, background, params.width, params.height);
                let image_id = format!("{material}-{background}-{i:03}");
                let file = format!("{image_id}.pgm");
                save_gray(&img, out_dir.join(&file))?;
                entries.push(ManifestEntry {
                    path: file,
                    image_id,
                    material,
                    background,
                });
            }
        }
    }
    let manifest = DatasetManifest {
        entries,
        base_dir: out_dir.to_path_buf(),
    };
    fs::write(out_dir.join("manifest.json"), manifest.to_json())?;
    Ok(manifest)
}
