//! PNG masks, RGB images and probability-map debug dumps.

use std::path::Path;

use scenefit_core::mask::BinaryMask;
use scenefit_core::raster::ProbMap;
use scenefit_core::RgbImage;

use crate::Result;

/// Encode a mask as PNG bytes, 8-bit grayscale, 255 = set.
pub fn encode_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    let buf: Vec<u8> = mask.bits().iter().map(|b| if *b { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(mask.width() as u32, mask.height() as u32, buf)
        .expect("buffer sized to mask");
    encode_bytes(image::DynamicImage::ImageLuma8(img))
}

/// Decode a mask from PNG bytes; any nonzero luma is set.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask> {
    let img = image::load_from_memory(bytes)?.into_luma8();
    let bits = img.pixels().map(|p| p.0[0] > 0).collect();
    BinaryMask::new(img.width() as usize, img.height() as usize, bits).map_err(Into::into)
}

pub fn encode_rgb(img: &RgbImage) -> Result<Vec<u8>> {
    let buf = image::RgbImage::from_raw(
        img.width() as u32,
        img.height() as u32,
        img.data().to_vec(),
    )
    .expect("buffer sized to image");
    encode_bytes(image::DynamicImage::ImageRgb8(buf))
}

pub fn decode_rgb(bytes: &[u8]) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes)?.into_rgb8();
    RgbImage::new(
        img.width() as usize,
        img.height() as usize,
        img.into_raw(),
    )
    .map_err(Into::into)
}

/// Save a mask as 8-bit grayscale, 255 = set.
pub fn save_mask(path: &Path, mask: &BinaryMask) -> Result<()> {
    crate::atomic_write(path, &encode_mask(mask)?)
}

/// Load a mask; any nonzero luma is set.
pub fn load_mask(path: &Path) -> Result<BinaryMask> {
    decode_mask(&std::fs::read(path)?)
}

pub fn save_rgb(path: &Path, img: &RgbImage) -> Result<()> {
    crate::atomic_write(path, &encode_rgb(img)?)
}

pub fn load_rgb(path: &Path) -> Result<RgbImage> {
    decode_rgb(&std::fs::read(path)?)
}

/// Debug dump of a probability map as 8-bit grayscale.
pub fn save_probmap(path: &Path, pm: &ProbMap) -> Result<()> {
    let buf: Vec<u8> = pm
        .values()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = image::GrayImage::from_raw(pm.width() as u32, pm.height() as u32, buf)
        .expect("buffer sized to map");
    crate::atomic_write(path, &encode_bytes(image::DynamicImage::ImageLuma8(img))?)
}

fn encode_bytes(img: image::DynamicImage) -> Result<Vec<u8>> {
    let mut bytes: Vec<u8> = Vec::new();
    img.write_to(
        &mut std::io::Cursor::new(&mut bytes),
        image::ImageFormat::Png,
    )?;
    Ok(bytes)
}
