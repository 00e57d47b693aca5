//! PNG encoding and decoding for RGB images and binary masks.
//!
//! Images are `h × w × 3` tensors with values in `[0, 1]`, quantized to 8 bits
//! on write. Masks are 8-bit grayscale with 0 / 255; any non-zero pixel reads
//! back as `true`.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use crate::error::{Error, IoContext, Result};
use crate::tensor::{Mask2, Tensor3};

/// Raw 8-bit PNG pixel data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub channels: u8,
    pub pixels: Vec<u8>,
}

pub fn encode_png(raster: &Raster) -> Result<Vec<u8>> {
    let color = match raster.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        4 => png::ColorType::Rgba,
        n => return Err(Error::invalid(format!("unsupported channel count {n}"))),
    };
    let expected = raster.width as usize * raster.height as usize * raster.channels as usize;
    if raster.pixels.len() != expected {
        return Err(Error::shape(format!(
            "raster has {} bytes, expected {expected}",
            raster.pixels.len()
        )));
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, raster.width, raster.height);
        enc.set_color(color);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(png_err)?;
        writer.write_image_data(&raster.pixels).map_err(png_err)?;
        writer.finish().map_err(png_err)?;
    }
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Raster> {
    let mut dec = png::Decoder::new(Cursor::new(bytes));
    dec.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = dec.read_info().map_err(png_decode_err)?;
    let size = reader.output_buffer_size().ok_or_else(|| Error::Format {
        what: "PNG",
        detail: "image too large".into(),
    })?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(png_decode_err)?;
    buf.truncate(info.buffer_size());
    let channels = match info.color_type {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => {
            return Err(Error::Format {
                what: "PNG",
                detail: "unexpanded palette".into(),
            })
        }
    };
    Ok(Raster {
        width: info.width,
        height: info.height,
        channels,
        pixels: buf,
    })
}

fn png_err(e: png::EncodingError) -> Error {
    Error::Format {
        what: "PNG",
        detail: e.to_string(),
    }
}

fn png_decode_err(e: png::DecodingError) -> Error {
    Error::Format {
        what: "PNG",
        detail: e.to_string(),
    }
}

#[inline]
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Converts an RGB tensor with values in `[0, 1]` to 8-bit pixels.
pub fn image_to_raster(img: &Tensor3) -> Result<Raster> {
    if img.channels() != 3 {
        return Err(Error::shape(format!(
            "expected 3 channels, got {}",
            img.channels()
        )));
    }
    Ok(Raster {
        width: img.width() as u32,
        height: img.height() as u32,
        channels: 3,
        pixels: img.data().iter().map(|v| quantize(*v)).collect(),
    })
}

/// Converts 8-bit pixels to an RGB tensor in `[0, 1]`; gray and alpha inputs are adapted.
pub fn raster_to_image(r: &Raster) -> Result<Tensor3> {
    let n = r.width as usize * r.height as usize;
    let mut data = Vec::with_capacity(n * 3);
    let ch = r.channels as usize;
    for px in r.pixels.chunks_exact(ch) {
        match ch {
            1 | 2 => data.extend([px[0]; 3].map(|v| f32::from(v) / 255.0)),
            _ => data.extend(px[..3].iter().map(|v| f32::from(*v) / 255.0)),
        }
    }
    Tensor3::new(r.height as usize, r.width as usize, 3, data)
}

pub fn mask_to_raster(m: &Mask2) -> Raster {
    Raster {
        width: m.width() as u32,
        height: m.height() as u32,
        channels: 1,
        pixels: m.bits().iter().map(|b| if *b { 255 } else { 0 }).collect(),
    }
}

pub fn raster_to_mask(r: &Raster) -> Result<Mask2> {
    let ch = r.channels as usize;
    let bits = r.pixels.chunks_exact(ch).map(|px| px[0] != 0).collect();
    Mask2::new(r.height as usize, r.width as usize, bits)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).at(parent)?;
    }
    fs::write(path, bytes).at(path)
}

pub fn save_image(path: impl AsRef<Path>, img: &Tensor3) -> Result<()> {
    write_file(path.as_ref(), &encode_png(&image_to_raster(img)?)?)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor3> {
    let path = path.as_ref();
    raster_to_image(&decode_png(&fs::read(path).at(path)?)?)
}

pub fn save_mask(path: impl AsRef<Path>, m: &Mask2) -> Result<()> {
    write_file(path.as_ref(), &encode_png(&mask_to_raster(m))?)
}

pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask2> {
    let path = path.as_ref();
    raster_to_mask(&decode_png(&fs::read(path).at(path)?)?)
}

pub fn save_raster(path: impl AsRef<Path>, r: &Raster) -> Result<()> {
    write_file(path.as_ref(), &encode_png(r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mask_round_trip() {
        let m = Mask2::from_fn(5, 7, |r, c| (r + c) % 3 == 0);
        let back = raster_to_mask(&decode_png(&encode_png(&mask_to_raster(&m)).unwrap()).unwrap())
            .unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn quantized_image_round_trip_is_exact() {
        let data: Vec<f32> = (0..4 * 3 * 3)
            .map(|i| ((i * 17) % 256) as f32 / 255.0)
            .collect();
        let img = Tensor3::new(4, 3, 3, data).unwrap();
        let back = raster_to_image(
            &decode_png(&encode_png(&image_to_raster(&img).unwrap()).unwrap()).unwrap(),
        )
        .unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(decode_png(b"not a png").is_err());
    }
}
