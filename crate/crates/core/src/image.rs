//! Pixel containers, masking arithmetic, compositing and geometric transforms.
//!
//! Images hold unit-range `f32` intensities in row-major `(y, x, c)` order.
//! Masks are binary with `1` marking a missing pixel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from raw `(y, x, c)` data, clamping every value into `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, mut data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("non-empty image", format!("{height}x{width}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::shape("1 or 3 channels", format!("{channels} channels")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} values", height * width * channels),
                format!("{} values", data.len()),
            ));
        }
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::numeric("NaN pixel value"));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Self {
        Self::new(height, width, channels, vec![value; height * width * channels])
            .expect("filled image with valid shape")
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(y, x, c));
                }
            }
        }
        Self::new(height, width, channels, data).expect("from_fn image with valid shape")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }

    /// Replicates a grayscale image into three channels; RGB images are cloned.
    pub fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        Image::from_fn(self.height, self.width, 3, |y, x, _| self.get(y, x, 0))
    }

    /// Averages the channels of an RGB image; grayscale images are cloned.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        Image::from_fn(self.height, self.width, 1, |y, x, _| {
            (self.get(y, x, 0) + self.get(y, x, 1) + self.get(y, x, 2)) / 3.0
        })
    }

    pub fn mean(&self) -> f32 {
        let sum: f64 = self.data.iter().map(|&v| v as f64).sum();
        (sum / self.data.len() as f64) as f32
    }

    fn check_mask(&self, mask: &Mask) -> Result<()> {
        if self.height != mask.height || self.width != mask.width {
            return Err(Error::shape(
                format!("mask {}x{}", self.height, self.width),
                format!("mask {}x{}", mask.height, mask.width),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::shape("non-empty mask", format!("{height}x{width}")));
        }
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} values", height * width),
                format!("{} values", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|&&v| v > 1) {
            return Err(Error::shape("binary mask values", format!("value {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![0; height * width]).expect("valid mask shape")
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self::new(height, width, vec![1; height * width]).expect("valid mask shape")
    }

    pub fn from_fn(height: usize, width: usize, mut hole: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(hole(y, x) as u8);
            }
        }
        Self::new(height, width, data).expect("valid mask shape")
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn is_hole(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub(crate) fn set(&mut self, y: usize, x: usize, hole: bool) {
        self.data[y * self.width + x] = hole as u8;
    }

    pub fn holes(&self) -> usize {
        self.data.iter().filter(|&&v| v == 1).count()
    }

    pub fn complement(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }
}

/// `image ⊙ (1 − mask)`: zeroes every pixel under a hole.
pub fn apply_mask(image: &Image, mask: &Mask) -> Result<Image> {
    image.check_mask(mask)?;
    let c = image.channels;
    let data = image
        .data
        .iter()
        .enumerate()
        .map(|(i, &v)| if mask.data[i / c] == 1 { 0.0 } else { v })
        .collect();
    Ok(image.with_data(data))
}

/// Keeps `input` outside the hole and takes `prediction` inside it.
pub fn composite(prediction: &Image, input: &Image, mask: &Mask) -> Result<Image> {
    if !prediction.same_dims(input) {
        return Err(Error::shape(
            format!("{}x{}x{}", input.height, input.width, input.channels),
            format!(
                "{}x{}x{}",
                prediction.height, prediction.width, prediction.channels
            ),
        ));
    }
    input.check_mask(mask)?;
    let c = input.channels;
    let data = input
        .data
        .iter()
        .zip(&prediction.data)
        .enumerate()
        .map(|(i, (&x, &p))| if mask.data[i / c] == 1 { p } else { x })
        .collect();
    Ok(input.with_data(data))
}

impl Image {
    /// Same shape as `self`, new data; callers guarantee length and range.
    fn with_data(&self, data: Vec<f32>) -> Image {
        debug_assert_eq!(data.len(), self.data.len());
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data,
        }
    }
}

/// Pixel-permuting geometric transforms (the dihedral group minus transposes).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum Transform {
    Identity,
    FlipHorizontal,
    FlipVertical,
    /// Clockwise quarter turn.
    Rotate90,
    Rotate180,
    Rotate270,
}

impl Transform {
    pub const ALL: [Transform; 6] = [
        Transform::Identity,
        Transform::FlipHorizontal,
        Transform::FlipVertical,
        Transform::Rotate90,
        Transform::Rotate180,
        Transform::Rotate270,
    ];

    pub fn inverse(self) -> Transform {
        match self {
            Transform::Rotate90 => Transform::Rotate270,
            Transform::Rotate270 => Transform::Rotate90,
            other => other,
        }
    }

    fn swaps_axes(self) -> bool {
        matches!(self, Transform::Rotate90 | Transform::Rotate270)
    }

    /// Source coordinate for output position `(y, x)` of an `h×w` input.
    #[inline]
    fn source(self, y: usize, x: usize, h: usize, w: usize) -> (usize, usize) {
        match self {
            Transform::Identity => (y, x),
            Transform::FlipHorizontal => (y, w - 1 - x),
            Transform::FlipVertical => (h - 1 - y, x),
            Transform::Rotate90 => (h - 1 - x, y),
            Transform::Rotate180 => (h - 1 - y, w - 1 - x),
            Transform::Rotate270 => (x, w - 1 - y),
        }
    }

    fn permute<T: Copy>(self, h: usize, w: usize, c: usize, data: &[T]) -> Result<Vec<T>> {
        if self.swaps_axes() && h != w {
            return Err(Error::shape(
                "square raster for quarter-turn rotation",
                format!("{h}x{w}"),
            ));
        }
        let mut out = Vec::with_capacity(data.len());
        for y in 0..h {
            for x in 0..w {
                let (sy, sx) = self.source(y, x, h, w);
                let base = (sy * w + sx) * c;
                out.extend_from_slice(&data[base..base + c]);
            }
        }
        Ok(out)
    }

    pub fn apply(self, image: &Image) -> Result<Image> {
        let data = self.permute(image.height, image.width, image.channels, &image.data)?;
        Ok(image.with_data(data))
    }

    pub fn apply_mask(self, mask: &Mask) -> Result<Mask> {
        let data = self.permute(mask.height, mask.width, 1, &mask.data)?;
        Ok(Mask {
            height: mask.height,
            width: mask.width,
            data,
        })
    }
}
