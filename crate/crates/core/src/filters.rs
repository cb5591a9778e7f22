//! The low-pass operator `Φ_N` (area-average down by `N`, interpolate back up)
//! and the separable resamplers behind it. Every operator here is linear in
//! pixel values and preserves constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;

/// Down/up factor `N ≥ 1` of the low-pass filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct FilterFactor(usize);

impl FilterFactor {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("filter factor must be at least 1"));
        }
        Ok(Self(n))
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn check_divides(self, img: &Image) -> Result<()> {
        if !img.width().is_multiple_of(self.0) || !img.height().is_multiple_of(self.0) {
            return Err(Error::NotDivisible {
                factor: self.0,
                width: img.width(),
                height: img.height(),
            });
        }
        Ok(())
    }
}

impl TryFrom<usize> for FilterFactor {
    type Error = Error;

    fn try_from(n: usize) -> Result<Self> {
        Self::new(n)
    }
}

impl From<FilterFactor> for usize {
    fn from(f: FilterFactor) -> usize {
        f.0
    }
}

/// Interpolation used when enlarging.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Kernel {
    #[default]
    Bilinear,
    Bicubic,
}

type Taps = Vec<Vec<(usize, f64)>>;

/// Per-output-index source taps for resampling one axis from `src` to `dst`.
fn axis_taps(src: usize, dst: usize, kernel: Kernel) -> Taps {
    if src == dst {
        return (0..dst).map(|i| vec![(i, 1.0)]).collect();
    }
    if dst < src {
        // Box average over the exact footprint [i·s, (i+1)·s).
        let s = src as f64 / dst as f64;
        return (0..dst)
            .map(|i| {
                let lo = i as f64 * s;
                let hi = lo + s;
                let mut taps = Vec::new();
                let mut j = lo.floor() as usize;
                while (j as f64) < hi && j < src {
                    let overlap = (hi.min(j as f64 + 1.0) - lo.max(j as f64)).max(0.0);
                    if overlap > 0.0 {
                        taps.push((j, overlap / s));
                    }
                    j += 1;
                }
                taps
            })
            .collect();
    }
    let scale = src as f64 / dst as f64;
    let last = (src - 1) as isize;
    (0..dst)
        .map(|i| {
            let u = (i as f64 + 0.5) * scale - 0.5;
            let mut taps: Vec<(usize, f64)> = Vec::with_capacity(4);
            let mut push = |j: isize, w: f64| {
                let j = j.clamp(0, last) as usize;
                match taps.iter_mut().find(|(k, _)| *k == j) {
                    Some(t) => t.1 += w,
                    None => taps.push((j, w)),
                }
            };
            match kernel {
                Kernel::Bilinear => {
                    let u = u.clamp(0.0, last as f64);
                    let i0 = u.floor();
                    let f = u - i0;
                    push(i0 as isize, 1.0 - f);
                    if f > 0.0 {
                        push(i0 as isize + 1, f);
                    }
                }
                Kernel::Bicubic => {
                    let i0 = u.floor();
                    let f = u - i0;
                    for k in -1..=2 {
                        let w = keys_cubic(f - k as f64);
                        if w != 0.0 {
                            push(i0 as isize + k, w);
                        }
                    }
                }
            }
            taps
        })
        .collect()
}

/// Keys cubic convolution kernel, `a = -0.5`.
fn keys_cubic(x: f64) -> f64 {
    const A: f64 = -0.5;
    let x = x.abs();
    if x <= 1.0 {
        ((A + 2.0) * x - (A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((A * x - 5.0 * A) * x + 8.0 * A) * x - 4.0 * A
    } else {
        0.0
    }
}

fn apply_taps(img: &Image, new_w: usize, new_h: usize, kernel: Kernel) -> Image {
    let (w, h, c) = (img.width(), img.height(), img.channels());
    let tx = axis_taps(w, new_w, kernel);
    let ty = axis_taps(h, new_h, kernel);
    let mut out = Image::zeros(new_w, new_h, c, img.range());
    let mut rows = vec![0.0; h * new_w];
    for ch in 0..c {
        let src = img.plane(ch);
        for y in 0..h {
            let row = &src[y * w..(y + 1) * w];
            for (x, taps) in tx.iter().enumerate() {
                rows[y * new_w + x] = taps.iter().map(|&(j, wt)| wt * row[j]).sum();
            }
        }
        let dst = out.plane_mut(ch);
        for (y, taps) in ty.iter().enumerate() {
            for x in 0..new_w {
                dst[y * new_w + x] = taps.iter().map(|&(j, wt)| wt * rows[j * new_w + x]).sum();
            }
        }
    }
    out
}

/// Area average when shrinking an axis, `kernel` interpolation when enlarging it.
pub fn resize_with(img: &Image, new_w: usize, new_h: usize, kernel: Kernel) -> Result<Image> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::invalid(format!("zero target dimension {new_w}x{new_h}")));
    }
    if new_w == img.width() && new_h == img.height() {
        return Ok(img.clone());
    }
    Ok(apply_taps(img, new_w, new_h, kernel))
}

pub fn resize(img: &Image, new_w: usize, new_h: usize) -> Result<Image> {
    resize_with(img, new_w, new_h, Kernel::Bilinear)
}

/// Block-average decimation by an exact integer factor.
pub fn area_downsample(img: &Image, f: FilterFactor) -> Result<Image> {
    f.check_divides(img)?;
    resize(img, img.width() / f.get(), img.height() / f.get())
}

/// `Φ_N`: area-average down by `N`, then interpolate back to the input shape.
pub fn lowpass_with(img: &Image, f: FilterFactor, kernel: Kernel) -> Result<Image> {
    f.check_divides(img)?;
    if f.get() == 1 {
        return Ok(img.clone());
    }
    let small = apply_taps(img, img.width() / f.get(), img.height() / f.get(), kernel);
    Ok(apply_taps(&small, img.width(), img.height(), kernel))
}

pub fn lowpass(img: &Image, f: FilterFactor) -> Result<Image> {
    lowpass_with(img, f, Kernel::Bilinear)
}

/// `(I - Φ_N)(img)`.
pub fn highpass_residual_with(img: &Image, f: FilterFactor, kernel: Kernel) -> Result<Image> {
    img.sub(&lowpass_with(img, f, kernel)?)
}

pub fn highpass_residual(img: &Image, f: FilterFactor) -> Result<Image> {
    highpass_residual_with(img, f, Kernel::Bilinear)
}

/// `Φ_N(y) + (I - Φ_N)(x)`: keeps `x`'s detail on top of `y`'s low band.
pub fn freq_swap_with(x: &Image, y: &Image, f: FilterFactor, kernel: Kernel) -> Result<Image> {
    x.ensure_same_shape(y)?;
    f.check_divides(x)?;
    if f.get() == 1 {
        return Ok(y.clone().with_range(x.range()));
    }
    let ly = lowpass_with(y, f, kernel)?;
    let lx = lowpass_with(x, f, kernel)?;
    let mut out = x.clone();
    for ((o, a), b) in out.data_mut().iter_mut().zip(ly.data()).zip(lx.data()) {
        *o += a - b;
    }
    Ok(out)
}

pub fn freq_swap(x: &Image, y: &Image, f: FilterFactor) -> Result<Image> {
    freq_swap_with(x, y, f, Kernel::Bilinear)
}
