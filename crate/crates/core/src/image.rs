//! Planar floating-point raster shared by every stage of the pipeline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::KahanSum;

/// Which value convention the pixels follow.
///
/// Diffusion states live in `Model` range (nominally `[-1, 1]`) and are never
/// clamped while sampling; `Display` (`[0, 1]`) is used for IO, degradation and
/// metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueRange {
    Model,
    Display,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl Shape {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.width, self.height, self.channels)
    }
}

/// Channel-planar image: `data[c * w * h + y * w + x]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    shape: Shape,
    data: Vec<f64>,
    range: ValueRange,
}

impl Image {
    pub fn zeros(width: usize, height: usize, channels: usize, range: ValueRange) -> Self {
        Self::filled(width, height, channels, 0.0, range)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64, range: ValueRange) -> Self {
        let shape = Shape::new(width, height, channels);
        Self {
            shape,
            data: vec![value; shape.len()],
            range,
        }
    }

    pub fn from_vec(
        width: usize,
        height: usize,
        channels: usize,
        data: Vec<f64>,
        range: ValueRange,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("zero image dimension {width}x{height}")));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::invalid(format!("unsupported channel count {channels}")));
        }
        let shape = Shape::new(width, height, channels);
        if data.len() != shape.len() {
            return Err(Error::invalid(format!(
                "pixel buffer holds {} values, {} expected for {}",
                data.len(),
                shape.len(),
                shape
            )));
        }
        if let Some(bad) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {bad}")));
        }
        Ok(Self { shape, data, range })
    }

    /// Builds an image from a per-pixel function `f(channel, y, x)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        range: ValueRange,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let shape = Shape::new(width, height, channels);
        let mut data = Vec::with_capacity(shape.len());
        for c in 0..channels {
            for y in 0..height {
                for x in 0..width {
                    data.push(f(c, y, x));
                }
            }
        }
        Self { shape, data, range }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn width(&self) -> usize {
        self.shape.width
    }

    pub fn height(&self) -> usize {
        self.shape.height
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn range(&self) -> ValueRange {
        self.range
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.shape.width * self.shape.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.width * self.shape.height;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.shape.height + y) * self.shape.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        let w = self.shape.width;
        let h = self.shape.height;
        self.data[(c * h + y) * w + x] = v;
    }

    pub fn with_range(mut self, range: ValueRange) -> Self {
        self.range = range;
        self
    }

    /// Fails unless `other` has the same width, height and channel count.
    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(self.shape, other.shape));
        }
        Ok(())
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Image {
        Image {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            range: self.range,
        }
    }

    /// Elementwise combination; the result keeps `self`'s range tag.
    pub fn zip_map(&self, other: &Image, f: impl Fn(f64, f64) -> f64) -> Result<Image> {
        self.ensure_same_shape(other)?;
        Ok(Image {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
            range: self.range,
        })
    }

    pub fn add(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Image) -> Result<Image> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, k: f64) -> Image {
        self.map(|v| v * k)
    }

    /// `a * self + b * other`, elementwise.
    pub fn axpby(&self, a: f64, other: &Image, b: f64) -> Result<Image> {
        self.zip_map(other, |x, y| a * x + b * y)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().copied().collect::<KahanSum>().value()
    }

    pub fn sum_sq(&self) -> f64 {
        self.data.iter().map(|v| v * v).collect::<KahanSum>().value()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.data.len() as f64
    }

    pub fn max_abs_diff(&self, other: &Image) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// `[0, 1]` display values to `[-1, 1]` model values.
    pub fn to_model_range(&self) -> Image {
        match self.range {
            ValueRange::Model => self.clone(),
            ValueRange::Display => self.map(|v| v * 2.0 - 1.0).with_range(ValueRange::Model),
        }
    }

    pub fn to_display_range(&self) -> Image {
        match self.range {
            ValueRange::Display => self.clone(),
            ValueRange::Model => self.map(|v| (v + 1.0) * 0.5).with_range(ValueRange::Display),
        }
    }

    /// Clamps to the nominal interval of the current range tag.
    pub fn clamped(&self) -> Image {
        match self.range {
            ValueRange::Model => self.map(|v| v.clamp(-1.0, 1.0)),
            ValueRange::Display => self.map(|v| v.clamp(0.0, 1.0)),
        }
    }

    /// Quantizes a display-range image to 8-bit levels, row-major interleaved.
    pub fn to_u8_interleaved(&self) -> Vec<u8> {
        let disp = self.to_display_range();
        let (w, h, c) = (self.width(), self.height(), self.channels());
        let mut out = Vec::with_capacity(w * h * c);
        for y in 0..h {
            for x in 0..w {
                for ch in 0..c {
                    let v = disp.get(ch, y, x).clamp(0.0, 1.0);
                    out.push((v * 255.0).round() as u8);
                }
            }
        }
        out
    }

    /// Inverse of [`Image::to_u8_interleaved`]; values land in display range.
    pub fn from_u8_interleaved(width: usize, height: usize, channels: usize, bytes: &[u8]) -> Result<Image> {
        if bytes.len() != width * height * channels {
            return Err(Error::invalid(format!(
                "byte buffer holds {} values, {} expected",
                bytes.len(),
                width * height * channels
            )));
        }
        let mut img = Image::zeros(width, height, channels, ValueRange::Display);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.set(c, y, x, f64::from(bytes[(y * width + x) * channels + c]) / 255.0);
                }
            }
        }
        Ok(img)
    }
}
