//! 8-bit PNG I/O for images, mattes, and RGBA composites.

use std::path::Path;

use image::{GrayImage, RgbImage, RgbaImage};
use zippo_core::pixel::{dequantize8, quantize8};
use zippo_core::{AlphaMatte, Image};

use crate::error::Result;

pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    let mut out = RgbImage::new(img.width() as u32, img.height() as u32);
    for y in 0..img.height() {
        for x in 0..img.width() {
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgb([
                    quantize8(img.get(0, x, y)),
                    quantize8(img.get(1, x, y)),
                    quantize8(img.get(2, x, y)),
                ]),
            );
        }
    }
    out.save(path)?;
    Ok(())
}

pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Image::from_fn(w, h, |c, x, y| {
        dequantize8(img.get_pixel(x as u32, y as u32).0[c])
    }))
}

pub fn save_matte(path: &Path, matte: &AlphaMatte) -> Result<()> {
    let mut out = GrayImage::new(matte.width() as u32, matte.height() as u32);
    for y in 0..matte.height() {
        for x in 0..matte.width() {
            out.put_pixel(x as u32, y as u32, image::Luma([quantize8(matte.get(x, y))]));
        }
    }
    out.save(path)?;
    Ok(())
}

pub fn load_matte(path: &Path) -> Result<AlphaMatte> {
    let img = image::open(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(AlphaMatte::from_fn(w, h, |x, y| {
        dequantize8(img.get_pixel(x as u32, y as u32).0[0])
    }))
}

/// Write a 4-channel RGBA file from a color image and its matte.
pub fn save_rgba(path: &Path, color: &Image, alpha: &AlphaMatte) -> Result<()> {
    let mut out = RgbaImage::new(color.width() as u32, color.height() as u32);
    for y in 0..color.height() {
        for x in 0..color.width() {
            out.put_pixel(
                x as u32,
                y as u32,
                image::Rgba([
                    quantize8(color.get(0, x, y)),
                    quantize8(color.get(1, x, y)),
                    quantize8(color.get(2, x, y)),
                    quantize8(alpha.get(x, y)),
                ]),
            );
        }
    }
    out.save(path)?;
    Ok(())
}
