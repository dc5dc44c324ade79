//! PNG load/save helpers built on the `image` crate.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb, Rgba};

use crate::error::{Error, Result};
use crate::raster::{Image, Mask, Raster};

pub fn decode_rgb(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory(bytes)?.to_rgb32f();
    let (w, h) = img.dimensions();
    Image::from_vec(w as usize, h as usize, 3, img.into_raw())
}

pub fn decode_rgba(bytes: &[u8]) -> Result<Image> {
    let img = image::load_from_memory(bytes)?.to_rgba32f();
    let (w, h) = img.dimensions();
    Image::from_vec(w as usize, h as usize, 4, img.into_raw())
}

/// Any nonzero luma counts as inside the mask.
pub fn decode_mask(bytes: &[u8]) -> Result<Mask> {
    let img = image::load_from_memory(bytes)?.to_luma16();
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        img.into_raw().into_iter().map(|x| x > 0).collect(),
    )
}

/// 16-bit (or 8-bit) grayscale depth scaled to meters.
pub fn decode_depth_png(bytes: &[u8], scale: f64) -> Result<Raster<f32>> {
    let dynimg = image::load_from_memory(bytes)?;
    let img = match dynimg {
        DynamicImage::ImageLuma16(b) => b,
        other => other.to_luma16(),
    };
    let (w, h) = img.dimensions();
    Raster::from_vec(
        w as usize,
        h as usize,
        img.into_raw()
            .into_iter()
            .map(|x| (x as f64 * scale) as f32)
            .collect(),
    )
}

pub fn load_rgb(path: impl AsRef<Path>) -> Result<Image> {
    decode_rgb(&std::fs::read(path)?)
}

pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes = img.to_u8();
    let dynimg = match img.channels() {
        1 => DynamicImage::ImageLuma8(
            ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes).expect("sized buffer"),
        ),
        3 => DynamicImage::ImageRgb8(
            ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes).expect("sized buffer"),
        ),
        4 => DynamicImage::ImageRgba8(
            ImageBuffer::<Rgba<u8>, _>::from_raw(w, h, bytes).expect("sized buffer"),
        ),
        c => {
            return Err(Error::InvalidInput(format!(
                "cannot encode {c}-channel image as PNG"
            )))
        }
    };
    let mut out = std::io::Cursor::new(Vec::new());
    dynimg.write_to(&mut out, image::ImageFormat::Png)?;
    Ok(out.into_inner())
}

pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, encode_png(img)?)?;
    Ok(())
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let img = Image::from_fn(mask.width(), mask.height(), 1, |u, v, _| {
        if *mask.get(u, v) {
            1.0
        } else {
            0.0
        }
    });
    save_png(&img, path)
}

pub fn save_depth_png16(depth: &Raster<f32>, scale: f64, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = depth.dims();
    let raw: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| (d as f64 / scale).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, raw).expect("sized buffer");
    buf.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
