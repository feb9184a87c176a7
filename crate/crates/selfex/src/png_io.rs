//! PNG images and masks.
//!
//! Images load from 8- or 16-bit grayscale, grayscale+alpha, RGB, RGBA or
//! 8-bit palette files (alpha is dropped) and always save as 8-bit.
//! Masks are single-channel with 255 marking a hole.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use png::{BitDepth, ColorType, Transformations};
use selfex_core::{Image, Mask};

use crate::error::{Error, Result};

struct Decoded {
    width: usize,
    height: usize,
    channels: usize,
    /// Interleaved samples scaled to `[0, 1]`, alpha removed.
    samples: Vec<f32>,
}

fn decode(path: &Path) -> Result<Decoded> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e.to_string()))?;
    let info = reader.info();
    let source_depth = info.bit_depth;
    let palette = info.color_type == ColorType::Indexed;
    if !(palette || matches!(source_depth, BitDepth::Eight | BitDepth::Sixteen)) {
        return Err(Error::format(
            path,
            format!("unsupported bit depth {source_depth:?}; expected 8 or 16"),
        ));
    }
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::format(path, "image too large"))?];
    let frame = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e.to_string()))?;
    let (color, depth) = (frame.color_type, frame.bit_depth);
    let (stored, channels) = match color {
        ColorType::Grayscale => (1, 1),
        ColorType::GrayscaleAlpha => (2, 1),
        ColorType::Rgb => (3, 3),
        ColorType::Rgba => (4, 3),
        ColorType::Indexed => return Err(Error::format(path, "palette was not expanded")),
    };
    let bytes = &buf[..frame.buffer_size()];
    let values: Vec<f32> = match depth {
        BitDepth::Eight => bytes.iter().map(|&b| b as f32 / 255.0).collect(),
        BitDepth::Sixteen => bytes
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 65535.0)
            .collect(),
        other => return Err(Error::format(path, format!("unsupported bit depth {other:?}"))),
    };
    let samples = values
        .chunks_exact(stored)
        .flat_map(|px| px[..channels].iter().copied())
        .collect();
    Ok(Decoded {
        width: frame.width as usize,
        height: frame.height as usize,
        channels,
        samples,
    })
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let d = decode(path)?;
    Image::new(d.height, d.width, d.channels, d.samples).map_err(|e| Error::format(path, e.to_string()))
}

/// Rounds to the nearest 8-bit level.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn encode(path: &Path, width: usize, height: usize, color: ColorType, bytes: &[u8]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::format(path, e.to_string()))?;
    writer
        .write_image_data(bytes)
        .map_err(|e| Error::format(path, e.to_string()))?;
    writer.finish().map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let color = if image.channels() == 1 { ColorType::Grayscale } else { ColorType::Rgb };
    let bytes: Vec<u8> = image.data().iter().map(|&v| quantize(v)).collect();
    encode(path.as_ref(), image.width(), image.height(), color, &bytes)
}

/// Any sample at or above half intensity is a hole. Colour masks use their
/// first channel.
pub fn load_mask(path: impl AsRef<Path>) -> Result<Mask> {
    let path = path.as_ref();
    let d = decode(path)?;
    let data = d
        .samples
        .chunks_exact(d.channels)
        .map(|px| u8::from(px[0] >= 0.5))
        .collect();
    Mask::new(d.height, d.width, data).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    let bytes: Vec<u8> = mask.data().iter().map(|&m| m * 255).collect();
    encode(path.as_ref(), mask.width(), mask.height(), ColorType::Grayscale, &bytes)
}
