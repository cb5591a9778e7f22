use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlurKind {
    Gaussian,
    Mean,
    Median,
    Motion,
}

impl BlurKind {
    /// Largest legal kernel size.
    pub fn max_size(self) -> usize {
        match self {
            BlurKind::Motion => 25,
            _ => 15,
        }
    }

    pub fn is_linear(self) -> bool {
        !matches!(self, BlurKind::Median)
    }

    pub fn name(self) -> &'static str {
        match self {
            BlurKind::Gaussian => "gaussian",
            BlurKind::Mean => "mean",
            BlurKind::Median => "median",
            BlurKind::Motion => "motion",
        }
    }
}

impl fmt::Display for BlurKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BlurKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(BlurKind::Gaussian),
            "mean" => Ok(BlurKind::Mean),
            "median" => Ok(BlurKind::Median),
            "motion" => Ok(BlurKind::Motion),
            other => Err(Error::invalid(format!("unknown blur kind `{other}`"))),
        }
    }
}

/// Mirror index without repeating the edge sample (`-1 → 1`).
#[inline]
pub(crate) fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

fn check_size(kind: BlurKind, size: usize) -> Result<()> {
    if size.is_multiple_of(2) || size == 0 || size > kind.max_size() {
        return Err(Error::invalid(format!(
            "{kind} blur kernel must be odd and in [1, {}], got {size}",
            kind.max_size()
        )));
    }
    Ok(())
}

/// Square kernel of side `size`, row-major, summing to one.
pub fn kernel(kind: BlurKind, size: usize, angle_deg: f64) -> Result<Vec<f64>> {
    check_size(kind, size)?;
    let r = (size / 2) as f64;
    let mut k = vec![0.0; size * size];
    match kind {
        BlurKind::Gaussian => {
            let sigma = size as f64 / 6.0;
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f64 - r, y as f64 - r);
                    k[y * size + x] = (-(dx * dx + dy * dy) / (2.0 * sigma * sigma)).exp();
                }
            }
        }
        BlurKind::Mean => k.iter_mut().for_each(|v| *v = 1.0),
        BlurKind::Motion => {
            let (s, c) = angle_deg.to_radians().sin_cos();
            let samples = 8 * size;
            for i in 0..=samples {
                let d = -r + 2.0 * r * i as f64 / samples as f64;
                let x = (r + d * c).round() as usize;
                let y = (r - d * s).round() as usize;
                k[y.min(size - 1) * size + x.min(size - 1)] = 1.0;
            }
        }
        BlurKind::Median => {
            return Err(Error::invalid("median blur has no convolution kernel"));
        }
    }
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Reflect-padded 2-D convolution with a square kernel.
pub fn convolve(img: &Image, k: &[f64], size: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let r = (size / 2) as isize;
    let mut out = img.clone();
    for ch in 0..img.channels() {
        let src = img.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for ky in 0..size {
                    let sy = reflect(y as isize + ky as isize - r, h);
                    let row = &src[sy * w..(sy + 1) * w];
                    for kx in 0..size {
                        let sx = reflect(x as isize + kx as isize - r, w);
                        acc += k[ky * size + kx] * row[sx];
                    }
                }
                dst[y * w + x] = acc;
            }
        }
    }
    out
}

fn median_filter(img: &Image, size: usize) -> Image {
    let (w, h) = (img.width(), img.height());
    let r = (size / 2) as isize;
    let mut out = img.clone();
    let mut window = Vec::with_capacity(size * size);
    for ch in 0..img.channels() {
        let src = img.plane(ch);
        let dst = out.plane_mut(ch);
        for y in 0..h {
            for x in 0..w {
                window.clear();
                for dy in -r..=r {
                    let sy = reflect(y as isize + dy, h);
                    for dx in -r..=r {
                        window.push(src[sy * w + reflect(x as isize + dx, w)]);
                    }
                }
                let mid = window.len() / 2;
                window.select_nth_unstable_by(mid, f64::total_cmp);
                dst[y * w + x] = window[mid];
            }
        }
    }
    out
}

/// Blurs with the given kind; `angle_deg` only matters for motion blur.
/// Gaussian blur uses `σ = size / 6`.
pub fn blur(img: &Image, kind: BlurKind, size: usize, angle_deg: f64) -> Result<Image> {
    check_size(kind, size)?;
    if size == 1 {
        return Ok(img.clone());
    }
    match kind {
        BlurKind::Median => Ok(median_filter(img, size)),
        _ => Ok(convolve(img, &kernel(kind, size, angle_deg)?, size)),
    }
}
