//! Pixel-domain baseline JPEG: block DCT, quantize, dequantize, inverse DCT.
//! No entropy coding and no chroma subsampling.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::image::{Image, ValueRange};

use super::blur::reflect;

#[rustfmt::skip]
const LUMA: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61,
    12, 12, 14, 19, 26, 58, 60, 55,
    14, 13, 16, 24, 40, 57, 69, 56,
    14, 17, 22, 29, 51, 87, 80, 62,
    18, 22, 37, 56, 68, 109, 103, 77,
    24, 35, 55, 64, 81, 104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101,
    72, 92, 95, 98, 112, 100, 103, 99,
];

#[rustfmt::skip]
const CHROMA: [u16; 64] = [
    17, 18, 24, 47, 99, 99, 99, 99,
    18, 21, 26, 66, 99, 99, 99, 99,
    24, 26, 56, 99, 99, 99, 99, 99,
    47, 66, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
    99, 99, 99, 99, 99, 99, 99, 99,
];

fn check_quality(quality: u8) -> Result<()> {
    if !(1..=100).contains(&quality) {
        return Err(Error::invalid(format!("JPEG quality must be in [1, 100], got {quality}")));
    }
    Ok(())
}

/// libjpeg quality scaling: `5000/q` below 50, `200 - 2q` otherwise.
pub fn quality_scale(quality: u8) -> Result<u32> {
    check_quality(quality)?;
    let q = quality as u32;
    Ok(if q < 50 { 5000 / q } else { 200 - 2 * q })
}

/// Scaled quantization table (row-major 8×8), entries clamped to `[1, 255]`.
pub fn quant_table(quality: u8, chroma: bool) -> Result<[f64; 64]> {
    let scale = quality_scale(quality)?;
    let base = if chroma { &CHROMA } else { &LUMA };
    let mut out = [0.0; 64];
    for (o, &b) in out.iter_mut().zip(base) {
        *o = ((b as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    Ok(out)
}

/// `C[u][x] = c(u)/2 · cos((2x+1)uπ/16)`; orthonormal 8-point DCT-II.
fn dct_matrix() -> &'static [[f64; 8]; 8] {
    static M: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    M.get_or_init(|| {
        let mut m = [[0.0; 8]; 8];
        for (u, row) in m.iter_mut().enumerate() {
            let c = if u == 0 { (0.5f64).sqrt() } else { 1.0 };
            for (x, v) in row.iter_mut().enumerate() {
                *v = 0.5 * c * ((2 * x + 1) as f64 * u as f64 * PI / 16.0).cos();
            }
        }
        m
    })
}

fn transform(block: &mut [f64; 64], inverse: bool) {
    let m = dct_matrix();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8)
                .map(|x| {
                    let c = if inverse { m[x][u] } else { m[u][x] };
                    c * block[y * 8 + x]
                })
                .sum();
        }
    }
    for v in 0..8 {
        for x in 0..8 {
            block[v * 8 + x] = (0..8)
                .map(|y| {
                    let c = if inverse { m[y][v] } else { m[v][y] };
                    c * tmp[y * 8 + x]
                })
                .sum();
        }
    }
}

/// Quantizes one 0–255 plane in place; the plane is reflect-padded to whole blocks.
fn code_plane(plane: &mut [f64], w: usize, h: usize, table: &[f64; 64]) {
    let pw = w.div_ceil(8) * 8;
    let ph = h.div_ceil(8) * 8;
    let mut block = [0.0; 64];
    for by in (0..ph).step_by(8) {
        for bx in (0..pw).step_by(8) {
            for y in 0..8 {
                let sy = reflect((by + y) as isize, h);
                for x in 0..8 {
                    let sx = reflect((bx + x) as isize, w);
                    block[y * 8 + x] = plane[sy * w + sx] - 128.0;
                }
            }
            transform(&mut block, false);
            for (b, q) in block.iter_mut().zip(table) {
                *b = (*b / q).round() * q;
            }
            transform(&mut block, true);
            for y in 0..8.min(h.saturating_sub(by)) {
                for x in 0..8.min(w.saturating_sub(bx)) {
                    plane[(by + y) * w + bx + x] = block[y * 8 + x] + 128.0;
                }
            }
        }
    }
}

/// Display-range JPEG degradation. Three-channel images go through YCbCr;
/// input and output are clamped to `[0, 1]` but not rounded to 8 bits.
pub fn jpeg_transform(img: &Image, quality: u8) -> Result<Image> {
    let luma = quant_table(quality, false)?;
    let chroma = quant_table(quality, true)?;
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let src = img.to_display_range().clamped();
    let mut planes: Vec<Vec<f64>> = (0..img.channels())
        .map(|c| src.plane(c).iter().map(|v| v * 255.0).collect())
        .collect();
    if planes.len() == 3 {
        let mut ycc = vec![vec![0.0; n]; 3];
        for i in 0..n {
            let (r, g, b) = (planes[0][i], planes[1][i], planes[2][i]);
            ycc[0][i] = 0.299 * r + 0.587 * g + 0.114 * b;
            ycc[1][i] = -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0;
            ycc[2][i] = 0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0;
        }
        planes = ycc;
    }
    for (c, plane) in planes.iter_mut().enumerate() {
        code_plane(plane, w, h, if c == 0 { &luma } else { &chroma });
    }
    if planes.len() == 3 {
        let mut rgb = vec![vec![0.0; n]; 3];
        for i in 0..n {
            let (y, cb, cr) = (planes[0][i], planes[1][i] - 128.0, planes[2][i] - 128.0);
            rgb[0][i] = y + 1.402 * cr;
            rgb[1][i] = y - 0.344_136 * cb - 0.714_136 * cr;
            rgb[2][i] = y + 1.772 * cb;
        }
        planes = rgb;
    }
    let data: Vec<f64> = planes
        .into_iter()
        .flatten()
        .map(|v| (v / 255.0).clamp(0.0, 1.0))
        .collect();
    let out = Image::from_vec(w, h, img.channels(), data, ValueRange::Display)?;
    Ok(match img.range() {
        ValueRange::Display => out,
        ValueRange::Model => out.to_model_range(),
    })
}
