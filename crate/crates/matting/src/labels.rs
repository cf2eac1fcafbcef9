//! Pseudo-label curation: binarization, IoU filtering against segmentation
//! masks, trimap estimation, and the pluggable refinement seam.

use std::collections::HashMap;

use zippo_core::pixel::quantize8;
use zippo_core::AlphaMatte;

use crate::error::{Error, Result};
use crate::metrics::{iou, BinaryMask};

/// Default binarization threshold (8-bit).
pub const DEFAULT_BINARIZE_THRESHOLD: u8 = 25;
/// Labels are kept only when IoU strictly exceeds this.
pub const DEFAULT_IOU_THRESHOLD: f64 = 0.9;
pub const DEFAULT_TRIMAP_RADIUS: usize = 3;

/// Pixel true iff the 8-bit quantized matte value reaches `h`.
pub fn binarize(matte: &AlphaMatte, h: u8) -> BinaryMask {
    BinaryMask::from_fn(matte.width(), matte.height(), |x, y| {
        quantize8(matte.get(x, y)) >= h
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterDecision {
    pub keep: bool,
    pub iou: f64,
}

/// Keep a pseudo-label iff IoU(binarize(matte, h), segmask) strictly
/// exceeds the threshold.
pub fn filter_by_iou(
    matte: &AlphaMatte,
    segmask: &BinaryMask,
    h: u8,
    iou_threshold: f64,
) -> Result<FilterDecision> {
    let value = iou(&binarize(matte, h), segmask)?;
    Ok(FilterDecision {
        keep: value > iou_threshold,
        iou: value,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrimapLabel {
    Fg,
    Bg,
    Unknown,
}

/// Three-way labeling covering every pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trimap {
    width: usize,
    height: usize,
    labels: Vec<TrimapLabel>,
}

impl Trimap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> TrimapLabel {
        self.labels[y * self.width + x]
    }

    pub fn labels(&self) -> &[TrimapLabel] {
        &self.labels
    }
}

/// Unknown band = square dilation of the quantized transition set; FG/BG
/// are the exact 8-bit extremes minus the band.
pub fn estimate_trimap(matte: &AlphaMatte, radius: usize) -> Result<Trimap> {
    if radius < 1 {
        return Err(Error::invalid("estimate_trimap: radius must be >= 1"));
    }
    let (w, h) = (matte.width(), matte.height());
    let q: Vec<u8> = matte.data().iter().map(|&v| quantize8(v)).collect();
    let transition: Vec<bool> = q.iter().map(|&v| v != 0 && v != 255).collect();
    let mut unknown = vec![false; w * h];
    let r = radius as isize;
    for y in 0..h as isize {
        for x in 0..w as isize {
            if !transition[y as usize * w + x as usize] {
                continue;
            }
            for dy in -r..=r {
                for dx in -r..=r {
                    let (nx, ny) = (x + dx, y + dy);
                    if nx >= 0 && ny >= 0 && nx < w as isize && ny < h as isize {
                        unknown[ny as usize * w + nx as usize] = true;
                    }
                }
            }
        }
    }
    let labels = (0..w * h)
        .map(|i| {
            if unknown[i] {
                TrimapLabel::Unknown
            } else if q[i] == 255 {
                TrimapLabel::Fg
            } else {
                TrimapLabel::Bg
            }
        })
        .collect();
    Ok(Trimap {
        width: w,
        height: h,
        labels,
    })
}

pub type RefineFn = dyn Fn(&AlphaMatte, &Trimap) -> Result<AlphaMatte> + Send + Sync;

/// Named refiners. `identity` passes the matte through; `oracle` returns a
/// registered ground truth (for synthetic pipelines). External refiners
/// may be registered under any other name.
pub struct RefinerRegistry {
    refiners: HashMap<String, Box<RefineFn>>,
}

impl RefinerRegistry {
    pub fn with_builtins() -> RefinerRegistry {
        let mut registry = RefinerRegistry {
            refiners: HashMap::new(),
        };
        registry.register("identity", |matte, _| Ok(matte.clone()));
        registry
    }

    pub fn register(
        &mut self,
        name: impl Into<String>,
        f: impl Fn(&AlphaMatte, &Trimap) -> Result<AlphaMatte> + Send + Sync + 'static,
    ) {
        self.refiners.insert(name.into(), Box::new(f));
    }

    /// Install the `oracle` refiner returning this ground truth.
    pub fn register_oracle(&mut self, gt: AlphaMatte) {
        self.register("oracle", move |_, _| Ok(gt.clone()));
    }

    pub fn names(&self) -> Vec<&str> {
        self.refiners.keys().map(|s| s.as_str()).collect()
    }

    fn get(&self, name: &str) -> Result<&RefineFn> {
        self.refiners
            .get(name)
            .map(|b| b.as_ref())
            .ok_or_else(|| Error::invalid(format!("unknown refiner {:?}", name)))
    }
}

/// Run the named refiner, then force trimap-definite pixels: FG to 1,
/// BG to 0, regardless of what the refiner produced.
pub fn refine_matte(
    matte: &AlphaMatte,
    trimap: &Trimap,
    registry: &RefinerRegistry,
    refiner: &str,
) -> Result<AlphaMatte> {
    if trimap.width() != matte.width() || trimap.height() != matte.height() {
        return Err(Error::invalid(format!(
            "refine_matte: trimap {}x{} vs matte {}x{}",
            trimap.width(),
            trimap.height(),
            matte.width(),
            matte.height()
        )));
    }
    let refined = registry.get(refiner)?(matte, trimap)?;
    if refined.width() != matte.width() || refined.height() != matte.height() {
        return Err(Error::invalid(format!(
            "refiner {:?} changed dims to {}x{}",
            refiner,
            refined.width(),
            refined.height()
        )));
    }
    Ok(AlphaMatte::from_fn(matte.width(), matte.height(), |x, y| {
        match trimap.get(x, y) {
            TrimapLabel::Fg => 1.0,
            TrimapLabel::Bg => 0.0,
            TrimapLabel::Unknown => refined.get(x, y),
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_threshold_boundary() {
        // exactly h=25 at the 8-bit level is kept; 24 is not
        let matte = AlphaMatte::new(2, 1, vec![25.0 / 255.0, 24.0 / 255.0]).unwrap();
        let mask = binarize(&matte, 25);
        assert!(mask.get(0, 0));
        assert!(!mask.get(1, 0));

        let zeros = AlphaMatte::zeros(3, 3);
        assert_eq!(binarize(&zeros, 25).count(), 0);
    }

    #[test]
    fn binarize_idempotent_on_masks() {
        let matte = AlphaMatte::from_fn(4, 4, |x, y| f32::from((x + y) % 2 == 0));
        for h in [1u8, 25, 255] {
            let mask = binarize(&matte, h);
            let as_matte = AlphaMatte::from_fn(4, 4, |x, y| f32::from(mask.get(x, y)));
            assert_eq!(binarize(&as_matte, h), mask, "h={}", h);
        }
    }

    #[test]
    fn iou_filter_decisions() {
        // perfect agreement keeps
        let matte = AlphaMatte::from_fn(4, 5, |x, _| f32::from(x < 2));
        let seg = binarize(&matte, 25);
        let d = filter_by_iou(&matte, &seg, 25, 0.9).unwrap();
        assert!(d.keep);
        assert!((d.iou - 1.0).abs() < 1e-12);

        // constructed 17/20 overlap: |a ∩ b| = 17, |a ∪ b| = 20 -> 0.85
        let a = BinaryMask::from_fn(5, 4, |_, _| true); // 20 px
        let matte_b = AlphaMatte::from_fn(5, 4, |x, y| f32::from(y * 5 + x < 17));
        let d = filter_by_iou(&matte_b, &a, 25, 0.9).unwrap();
        assert!((d.iou - 0.85).abs() < 1e-12);
        assert!(!d.keep);

        // exactly 0.9 is rejected (strict >): 18 of 20
        let matte_c = AlphaMatte::from_fn(5, 4, |x, y| f32::from(y * 5 + x < 18));
        let d = filter_by_iou(&matte_c, &a, 25, 0.9).unwrap();
        assert!((d.iou - 0.9).abs() < 1e-12);
        assert!(!d.keep);
    }

    #[test]
    fn iou_monotone_in_agreement() {
        let seg = BinaryMask::from_fn(6, 6, |x, y| x < 3 && y < 3);
        let mut last = 0.0;
        for grow in 0..=3usize {
            // matte agrees on a growing subset of the segmentation
            let matte = AlphaMatte::from_fn(6, 6, |x, y| f32::from(x < grow && y < 3));
            let d = filter_by_iou(&matte, &seg, 25, 0.9).unwrap();
            assert!(d.iou >= last, "{} < {}", d.iou, last);
            last = d.iou;
        }
    }

    #[test]
    fn trimap_binary_matte_has_no_unknown() {
        let matte = AlphaMatte::from_fn(6, 6, |x, _| f32::from(x < 3));
        let trimap = estimate_trimap(&matte, 3).unwrap();
        assert!(trimap.labels().iter().all(|&l| l != TrimapLabel::Unknown));
        assert_eq!(trimap.get(0, 0), TrimapLabel::Fg);
        assert_eq!(trimap.get(5, 0), TrimapLabel::Bg);
    }

    #[test]
    fn trimap_single_transition_pixel_dilates_to_neighbourhood() {
        let matte = AlphaMatte::from_fn(5, 5, |x, y| if x == 2 && y == 2 { 0.5 } else { 0.0 });
        let trimap = estimate_trimap(&matte, 1).unwrap();
        let mut unknown = 0;
        for y in 0..5 {
            for x in 0..5 {
                let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
                assert_eq!(trimap.get(x, y) == TrimapLabel::Unknown, inside);
                unknown += usize::from(trimap.get(x, y) == TrimapLabel::Unknown);
            }
        }
        assert_eq!(unknown, 9);
        assert!(estimate_trimap(&matte, 0).is_err());
    }

    #[test]
    fn trimap_labels_partition() {
        for trial in 0..10u64 {
            let mut r = zippo_core::rng::stream(trial, &[0x71]);
            let values: Vec<f32> = (0..64)
                .map(|_| zippo_core::rng::uniform_index(&mut r, 256) as f32 / 255.0)
                .collect();
            let matte = AlphaMatte::new(8, 8, values).unwrap();
            let trimap = estimate_trimap(&matte, 2).unwrap();
            // every pixel has exactly one label by construction; the
            // definite labels must agree with the quantized extremes
            for y in 0..8 {
                for x in 0..8 {
                    let q = zippo_core::pixel::quantize8(matte.get(x, y));
                    match trimap.get(x, y) {
                        TrimapLabel::Fg => assert_eq!(q, 255),
                        TrimapLabel::Bg => assert_eq!(q, 0),
                        TrimapLabel::Unknown => {}
                    }
                }
            }
        }
    }

    #[test]
    fn refiners() {
        let matte = AlphaMatte::from_fn(4, 4, |x, _| x as f32 / 3.0);
        let trimap = estimate_trimap(&matte, 1).unwrap();
        let mut registry = RefinerRegistry::with_builtins();

        let out = refine_matte(&matte, &trimap, &registry, "identity").unwrap();
        for y in 0..4 {
            for x in 0..4 {
                match trimap.get(x, y) {
                    TrimapLabel::Fg => assert_eq!(out.get(x, y), 1.0),
                    TrimapLabel::Bg => assert_eq!(out.get(x, y), 0.0),
                    TrimapLabel::Unknown => assert_eq!(out.get(x, y), matte.get(x, y)),
                }
            }
        }

        let gt = AlphaMatte::from_fn(4, 4, |_, y| y as f32 / 3.0);
        registry.register_oracle(gt.clone());
        let out = refine_matte(&matte, &trimap, &registry, "oracle").unwrap();
        for y in 0..4 {
            for x in 0..4 {
                match trimap.get(x, y) {
                    TrimapLabel::Fg => assert_eq!(out.get(x, y), 1.0),
                    TrimapLabel::Bg => assert_eq!(out.get(x, y), 0.0),
                    TrimapLabel::Unknown => assert_eq!(out.get(x, y), gt.get(x, y)),
                }
            }
        }

        assert!(refine_matte(&matte, &trimap, &registry, "nonexistent").is_err());
    }
}
