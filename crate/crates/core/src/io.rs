//! Image and heat-map file I/O.
//!
//! Heat maps are written twice: a 16-bit grayscale PNG (`score × 65535`, invalid
//! pixels 0) for viewing, and a raw sidecar holding the exact scores:
//!
//! ```text
//! offset 0  "THM1"
//! offset 4  u16 LE width
//! offset 6  u16 LE height
//! offset 8  width × height f32 LE scores, row-major; NaN marks invalid pixels
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, RgbImage};

use crate::error::{Error, Result};
use crate::image::{ColorSpace, HeatMap, Image};

pub const HEATMAP_MAGIC: &[u8; 4] = b"THM1";

/// Loads PNG or JPEG. Grayscale sources stay single-channel; everything else
/// becomes RGB.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let dynimg = image::open(path.as_ref())?;
    from_dynamic(&dynimg)
}

pub fn from_dynamic(dynimg: &DynamicImage) -> Result<Image> {
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    match dynimg {
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLuma16(_) => {
            let g = dynimg.to_luma16();
            let data = g.as_raw().iter().map(|v| *v as f64 / 65535.0).collect();
            Image::new(w, h, ColorSpace::Gray, data)
        }
        _ => {
            let rgb = dynimg.to_rgb16();
            let n = w * h;
            let mut data = vec![0.0; 3 * n];
            for (i, px) in rgb.pixels().enumerate() {
                for c in 0..3 {
                    data[c * n + i] = px.0[c] as f64 / 65535.0;
                }
            }
            Image::new(w, h, ColorSpace::Rgb, data)
        }
    }
}

fn quantize8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Converts to an 8-bit buffer (HSV images are converted to RGB first).
pub fn to_dynamic(img: &Image) -> Result<DynamicImage> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    match img.colorspace() {
        ColorSpace::Gray => {
            let buf: Vec<u8> = img.plane(0).iter().map(|v| quantize8(*v)).collect();
            let g = GrayImage::from_raw(w, h, buf).ok_or_else(|| Error::Format("buffer size".into()))?;
            Ok(DynamicImage::ImageLuma8(g))
        }
        _ => {
            let rgb = img.rgb()?;
            let n = rgb.pixel_count();
            let mut buf = Vec::with_capacity(3 * n);
            for i in 0..n {
                for c in 0..3 {
                    buf.push(quantize8(rgb.data()[c * n + i]));
                }
            }
            let im = RgbImage::from_raw(w, h, buf).ok_or_else(|| Error::Format("buffer size".into()))?;
            Ok(DynamicImage::ImageRgb8(im))
        }
    }
}

/// Saves as 8-bit; format follows the file extension.
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    to_dynamic(img)?.save(path.as_ref())?;
    Ok(())
}

/// Writes a binary mask as an 8-bit PNG (255 = set).
pub fn save_mask(mask: &[bool], width: usize, height: usize, path: impl AsRef<Path>) -> Result<()> {
    let buf = mask.iter().map(|m| if *m { 255u8 } else { 0 }).collect();
    let g = GrayImage::from_raw(width as u32, height as u32, buf)
        .ok_or_else(|| Error::Format("mask size does not match dimensions".into()))?;
    g.save(path.as_ref())?;
    Ok(())
}

/// Reads a binary mask; any nonzero luma counts as set.
pub fn load_mask(path: impl AsRef<Path>) -> Result<(Vec<bool>, usize, usize)> {
    let g = image::open(path.as_ref())?.to_luma8();
    let (w, h) = (g.width() as usize, g.height() as usize);
    Ok((g.as_raw().iter().map(|v| *v > 127).collect(), w, h))
}

fn check_dims(hm: &HeatMap) -> Result<(u16, u16)> {
    let w = u16::try_from(hm.width).map_err(|_| Error::Format("heat map wider than 65535".into()))?;
    let h = u16::try_from(hm.height).map_err(|_| Error::Format("heat map taller than 65535".into()))?;
    Ok((w, h))
}

pub fn write_heatmap_png(hm: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = check_dims(hm)?;
    let buf: Vec<u16> = hm
        .scores
        .iter()
        .zip(&hm.valid)
        .map(|(s, v)| if *v { (s.clamp(0.0, 1.0) * 65535.0).round() as u16 } else { 0 })
        .collect();
    let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_raw(w as u32, h as u32, buf)
        .ok_or_else(|| Error::Format("heat map buffer size".into()))?;
    img.save(path.as_ref())?;
    Ok(())
}

pub fn encode_heatmap_sidecar(hm: &HeatMap) -> Result<Vec<u8>> {
    let (w, h) = check_dims(hm)?;
    let mut out = Vec::with_capacity(8 + 4 * hm.scores.len());
    out.extend_from_slice(HEATMAP_MAGIC);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    for (s, v) in hm.scores.iter().zip(&hm.valid) {
        let f = if *v { *s as f32 } else { f32::NAN };
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_heatmap_sidecar(bytes: &[u8]) -> Result<HeatMap> {
    if bytes.len() < 8 || &bytes[..4] != HEATMAP_MAGIC {
        return Err(Error::Format("missing THM1 header".into()));
    }
    let w = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
    let h = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
    let body = &bytes[8..];
    if body.len() != 4 * w * h {
        return Err(Error::Format(format!(
            "sidecar body is {} bytes, expected {}",
            body.len(),
            4 * w * h
        )));
    }
    let mut scores = Vec::with_capacity(w * h);
    let mut valid = Vec::with_capacity(w * h);
    for chunk in body.chunks_exact(4) {
        let f = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        valid.push(!f.is_nan());
        scores.push(if f.is_nan() { 0.0 } else { f as f64 });
    }
    HeatMap::new(w, h, scores, valid)
}

pub fn write_heatmap_sidecar(hm: &HeatMap, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(fs::File::create(path.as_ref())?);
    f.write_all(&encode_heatmap_sidecar(hm)?)?;
    f.flush()?;
    Ok(())
}

pub fn read_heatmap_sidecar(path: impl AsRef<Path>) -> Result<HeatMap> {
    decode_heatmap_sidecar(&fs::read(path.as_ref())?)
}
