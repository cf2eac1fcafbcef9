//! Pixel-domain carriers: RGB images and single-channel alpha mattes,
//! both f32 in [0, 1].

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 3-channel RGB image, channel-major (CHW) storage.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// Single-channel transparency map, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaMatte {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

pub fn quantize8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize8(k: u8) -> f32 {
    k as f32 / 255.0
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Image> {
        if data.len() != 3 * width * height {
            return Err(Error::shape(
                "Image::new",
                format!(
                    "{}x{} image wants {} values, got {}",
                    width,
                    height,
                    3 * width * height,
                    data.len()
                ),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("image value {} outside [0,1]", v)));
        }
        Ok(Image { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> Image {
        Image {
            width,
            height,
            data: vec![0.0; 3 * width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize, usize) -> f32) -> Image {
        let mut data = vec![0.0; 3 * width * height];
        for c in 0..3 {
            for y in 0..height {
                for x in 0..width {
                    data[(c * height + y) * width + x] = f(c, x, y).clamp(0.0, 1.0);
                }
            }
        }
        Image { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, c: usize, x: usize, y: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Rec. 601 luminance.
    pub fn luminance(&self, x: usize, y: usize) -> f32 {
        0.299 * self.get(0, x, y) + 0.587 * self.get(1, x, y) + 0.114 * self.get(2, x, y)
    }

    /// `[3, H, W]` tensor view of the pixels.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(self.data.clone(), &[3, self.height, self.width])
            .expect("consistent shape")
    }

    /// Rebuild from a `[3, H, W]` tensor, clamping into [0, 1].
    pub fn from_tensor_clamped(t: &Tensor) -> Result<Image> {
        let &[c, h, w] = t.shape() else {
            return Err(Error::shape(
                "Image::from_tensor",
                format!("expected [3,H,W], got {:?}", t.shape()),
            ));
        };
        if c != 3 {
            return Err(Error::shape(
                "Image::from_tensor",
                format!("expected 3 channels, got {}", c),
            ));
        }
        let data = t.data().iter().map(|v| v.clamp(0.0, 1.0)).collect();
        Ok(Image {
            width: w,
            height: h,
            data,
        })
    }
}

impl AlphaMatte {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<AlphaMatte> {
        if data.len() != width * height {
            return Err(Error::shape(
                "AlphaMatte::new",
                format!(
                    "{}x{} matte wants {} values, got {}",
                    width,
                    height,
                    width * height,
                    data.len()
                ),
            ));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("matte value {} outside [0,1]", v)));
        }
        Ok(AlphaMatte { width, height, data })
    }

    pub fn zeros(width: usize, height: usize) -> AlphaMatte {
        AlphaMatte {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f32) -> AlphaMatte {
        let mut data = vec![0.0; width * height];
        for y in 0..height {
            for x in 0..width {
                data[y * width + x] = f(x, y).clamp(0.0, 1.0);
            }
        }
        AlphaMatte { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn same_dims(&self, other: &AlphaMatte) -> bool {
        self.width == other.width && self.height == other.height
    }
}
