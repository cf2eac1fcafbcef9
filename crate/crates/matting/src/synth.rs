//! Procedural training data: soft-alpha shapes with class-determined color
//! families composited over configurable backgrounds. Every sample is a
//! pure function of (seed, index).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use zippo_core::pixel::{dequantize8, quantize8};
use zippo_core::{rng, AlphaMatte, Image};

use crate::composite::composite;
use crate::error::{Error, Result};
use crate::manifest::{DatasetManifest, ManifestRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Disc,
    Ring,
    Box,
    Stripes,
    Fuzz,
}

pub const ALL_CLASSES: [ShapeClass; 5] = [
    ShapeClass::Disc,
    ShapeClass::Ring,
    ShapeClass::Box,
    ShapeClass::Stripes,
    ShapeClass::Fuzz,
];

impl ShapeClass {
    pub fn name(self) -> &'static str {
        match self {
            ShapeClass::Disc => "disc",
            ShapeClass::Ring => "ring",
            ShapeClass::Box => "box",
            ShapeClass::Stripes => "stripes",
            ShapeClass::Fuzz => "fuzz",
        }
    }

    pub fn parse(s: &str) -> Result<ShapeClass> {
        ALL_CLASSES
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown class {:?}", s)))
    }

    /// Prompt ids are stable: 0 stays reserved for the empty prompt.
    pub fn prompt_id(self) -> usize {
        match self {
            ShapeClass::Disc => 1,
            ShapeClass::Ring => 2,
            ShapeClass::Box => 3,
            ShapeClass::Stripes => 4,
            ShapeClass::Fuzz => 5,
        }
    }

    pub fn from_prompt_id(id: usize) -> Option<ShapeClass> {
        ALL_CLASSES.into_iter().find(|c| c.prompt_id() == id)
    }

    /// Centre of the class's hue family, in degrees.
    pub fn hue_center(self) -> f32 {
        match self {
            ShapeClass::Disc => 0.0,      // red
            ShapeClass::Stripes => 60.0,  // yellow
            ShapeClass::Ring => 120.0,    // green
            ShapeClass::Box => 240.0,     // blue
            ShapeClass::Fuzz => 300.0,    // magenta
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    Black,
    SolidRandom,
    Noise,
}

impl BackgroundMode {
    pub fn parse(s: &str) -> Result<BackgroundMode> {
        match s {
            "black" => Ok(BackgroundMode::Black),
            "solid-random" => Ok(BackgroundMode::SolidRandom),
            "noise" => Ok(BackgroundMode::Noise),
            other => Err(Error::invalid(format!(
                "unknown background mode {:?}, expected black|solid-random|noise",
                other
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub resolution: usize,
    pub count: usize,
    pub classes: Vec<ShapeClass>,
    pub background: BackgroundMode,
    /// Gaussian blur sigma applied to the binary shape for soft edges.
    pub edge_sigma: f32,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            resolution: 32,
            count: 64,
            classes: ALL_CLASSES.to_vec(),
            background: BackgroundMode::Black,
            edge_sigma: 0.7,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.count < 1 {
            return Err(Error::invalid("synth: count must be >= 1"));
        }
        if self.resolution < 8 {
            return Err(Error::invalid("synth: resolution must be >= 8"));
        }
        if self.classes.is_empty() {
            return Err(Error::invalid("synth: class set is empty"));
        }
        Ok(())
    }
}

/// One rendered sample plus the layers it was composited from.
#[derive(Debug, Clone)]
pub struct SynthSample {
    pub image: Image,
    pub matte: AlphaMatte,
    pub foreground: Image,
    pub background: Image,
    pub class: ShapeClass,
}

fn hsv_to_rgb(h: f32, s: f32, v: f32) -> [f32; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r + m, g + m, b + m]
}

/// Hue in degrees, or None for near-greys.
pub fn rgb_to_hue(r: f32, g: f32, b: f32) -> Option<f32> {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    if delta < 1e-4 {
        return None;
    }
    let h = if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    Some(h.rem_euclid(360.0))
}

/// Nearest class family by circular hue distance.
pub fn classify_hue(hue: f32) -> ShapeClass {
    let mut best = ShapeClass::Disc;
    let mut best_d = f32::INFINITY;
    for c in ALL_CLASSES {
        let d = (hue - c.hue_center()).rem_euclid(360.0);
        let d = d.min(360.0 - d);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Majority hue family among pixels with alpha at or above the threshold.
pub fn dominant_class_by_hue(
    image: &Image,
    alpha: &AlphaMatte,
    alpha_threshold: f32,
) -> Option<ShapeClass> {
    let mut counts = [0usize; 5];
    for y in 0..image.height() {
        for x in 0..image.width() {
            if alpha.get(x, y) < alpha_threshold {
                continue;
            }
            if let Some(h) = rgb_to_hue(image.get(0, x, y), image.get(1, x, y), image.get(2, x, y))
            {
                let class = classify_hue(h);
                counts[ALL_CLASSES.iter().position(|c| *c == class).unwrap()] += 1;
            }
        }
    }
    let (idx, &n) = counts.iter().enumerate().max_by_key(|(_, &n)| n)?;
    (n > 0).then(|| ALL_CLASSES[idx])
}

fn gaussian_blur(mask: &[f32], w: usize, h: usize, sigma: f32) -> Vec<f32> {
    if sigma <= 0.0 {
        return mask.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut norm = 0.0f32;
    for i in -radius..=radius {
        let v = (-(i as f32).powi(2) / (2.0 * sigma * sigma)).exp();
        kernel.push(v);
        norm += v;
    }
    for k in &mut kernel {
        *k /= norm;
    }
    // horizontal then vertical; outside the frame counts as transparent
    let mut tmp = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sx = x as isize + ki as isize - radius;
                if sx >= 0 && sx < w as isize {
                    acc += k * mask[y * w + sx as usize];
                }
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![0.0f32; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (ki, k) in kernel.iter().enumerate() {
                let sy = y as isize + ki as isize - radius;
                if sy >= 0 && sy < h as isize {
                    acc += k * tmp[sy as usize * w + x];
                }
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    out
}

fn draw_shape(class: ShapeClass, res: usize, r: &mut ChaCha8Rng) -> Vec<f32> {
    let mut mask = vec![0.0f32; res * res];
    let resf = res as f32;
    let cx = resf * r.gen_range(0.35..0.65);
    let cy = resf * r.gen_range(0.35..0.65);
    let mut set = |x: isize, y: isize, mask: &mut Vec<f32>| {
        if x >= 0 && y >= 0 && x < res as isize && y < res as isize {
            mask[y as usize * res + x as usize] = 1.0;
        }
    };
    match class {
        ShapeClass::Disc | ShapeClass::Fuzz => {
            let radius = resf * r.gen_range(0.15..0.26);
            for y in 0..res {
                for x in 0..res {
                    let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                    if d2 <= radius * radius {
                        mask[y * res + x] = 1.0;
                    }
                }
            }
            if class == ShapeClass::Fuzz {
                // short strokes off the boundary, fur-like
                let strokes = 18 + rng::uniform_index(r, 18);
                for _ in 0..strokes {
                    let angle = r.gen_range(0.0..std::f32::consts::TAU);
                    let len = resf * r.gen_range(0.04..0.11);
                    let (dx, dy) = (angle.cos(), angle.sin());
                    let mut px = cx + dx * (radius - 1.0);
                    let mut py = cy + dy * (radius - 1.0);
                    let steps = len.ceil() as usize + 1;
                    for _ in 0..steps {
                        set(px.round() as isize, py.round() as isize, &mut mask);
                        px += dx;
                        py += dy;
                    }
                }
            }
        }
        ShapeClass::Ring => {
            let outer = resf * r.gen_range(0.18..0.27);
            let inner = outer * r.gen_range(0.45..0.62);
            for y in 0..res {
                for x in 0..res {
                    let d2 = (x as f32 - cx).powi(2) + (y as f32 - cy).powi(2);
                    if d2 <= outer * outer && d2 >= inner * inner {
                        mask[y * res + x] = 1.0;
                    }
                }
            }
        }
        ShapeClass::Box => {
            let hw = resf * r.gen_range(0.12..0.24);
            let hh = resf * r.gen_range(0.12..0.24);
            for y in 0..res {
                for x in 0..res {
                    if (x as f32 - cx).abs() <= hw && (y as f32 - cy).abs() <= hh {
                        mask[y * res + x] = 1.0;
                    }
                }
            }
        }
        ShapeClass::Stripes => {
            let hw = resf * r.gen_range(0.16..0.26);
            let hh = resf * r.gen_range(0.16..0.26);
            let period = r.gen_range(3..=(res / 6).max(4));
            let duty = (period / 2).max(1);
            for y in 0..res {
                for x in 0..res {
                    if (x as f32 - cx).abs() <= hw
                        && (y as f32 - cy).abs() <= hh
                        && (x % period) < duty
                    {
                        mask[y * res + x] = 1.0;
                    }
                }
            }
        }
    }
    mask
}

/// Render sample `index` of the dataset. Pure in (config, index).
pub fn render_sample(cfg: &SynthConfig, index: usize) -> Result<SynthSample> {
    cfg.validate()?;
    let res = cfg.resolution;
    let mut r = rng::stream(cfg.seed, &[0xDA7A, index as u64]);
    let class = cfg.classes[rng::uniform_index(&mut r, cfg.classes.len())];

    let mask = draw_shape(class, res, &mut r);
    let soft = gaussian_blur(&mask, res, res, cfg.edge_sigma);
    // quantize the matte up front so the stored PNG, the in-memory matte,
    // and the composited image are mutually consistent byte-for-byte
    let matte = AlphaMatte::from_fn(res, res, |x, y| dequantize8(quantize8(soft[y * res + x])));

    let hue = class.hue_center() + r.gen_range(-14.0..14.0);
    let sat = r.gen_range(0.75..1.0);
    let val = r.gen_range(0.75..1.0);
    let rgb = hsv_to_rgb(hue, sat, val);
    let foreground = Image::from_fn(res, res, |c, _, _| rgb[c]);

    let background = match cfg.background {
        BackgroundMode::Black => Image::zeros(res, res),
        BackgroundMode::SolidRandom => {
            let b = [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)];
            Image::from_fn(res, res, |c, _, _| b[c])
        }
        BackgroundMode::Noise => {
            let vals: Vec<f32> = (0..3 * res * res).map(|_| r.gen_range(0.0..1.0)).collect();
            Image::new(res, res, vals).map_err(|e| Error::invalid(e.to_string()))?
        }
    };

    let blended = composite(&foreground, &matte, &background)?;
    let image = Image::from_fn(res, res, |c, x, y| {
        dequantize8(quantize8(blended.get(c, x, y)))
    });

    Ok(SynthSample {
        image,
        matte,
        foreground,
        background,
        class,
    })
}

/// Generate `cfg.count` samples under `out_dir` and write the manifest as
/// `manifest.tsv`. Returns the manifest; byte-identical for equal configs.
pub fn synth_dataset(cfg: &SynthConfig, out_dir: &std::path::Path) -> Result<DatasetManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(zippo_core::Error::from)?;
    let samples: Vec<SynthSample> = (0..cfg.count)
        .into_par_iter()
        .map(|i| render_sample(cfg, i))
        .collect::<Result<_>>()?;
    let records: Vec<ManifestRecord> = samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let image_path = format!("image_{i:05}.png");
            let matte_path = format!("matte_{i:05}.png");
            crate::io::save_image(&out_dir.join(&image_path), &s.image)?;
            crate::io::save_matte(&out_dir.join(&matte_path), &s.matte)?;
            Ok(ManifestRecord {
                image_path,
                matte_path,
                prompt_id: s.class.prompt_id(),
                class_name: s.class.name().to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let manifest = DatasetManifest { records };
    manifest.write(&out_dir.join("manifest.tsv"))?;
    Ok(manifest)
}
