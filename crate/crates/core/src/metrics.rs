//! Full-reference quality metrics: MSE, PSNR and windowed SSIM.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numeric::{mean_var, KahanSum};

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: KahanSum = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    Ok(s.value() / a.len() as f64)
}

/// `10 · log10(peak² / MSE)`; `+∞` for identical images.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::invalid(format!("peak must be positive, got {peak}")));
    }
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / m).log10())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsimParams {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
    pub dynamic_range: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
            dynamic_range: 1.0,
        }
    }
}

impl SsimParams {
    pub fn c1(&self) -> f64 {
        (self.k1 * self.dynamic_range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.dynamic_range).powi(2)
    }

    /// Normalized separable Gaussian taps.
    pub fn gaussian_1d(&self) -> Vec<f64> {
        let r = (self.window / 2) as f64;
        let g: Vec<f64> = (0..self.window)
            .map(|i| {
                let d = i as f64 - r;
                (-(d * d) / (2.0 * self.sigma * self.sigma)).exp()
            })
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }
}

/// Separable "valid" filtering of one plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64]) -> (Vec<f64>, usize, usize) {
    let k = g.len();
    let ow = w + 1 - k;
    let oh = h + 1 - k;
    let mut tmp = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            tmp[y * ow + x] = (0..k).map(|i| g[i] * plane[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..k).map(|i| g[i] * tmp[(y + i) * ow + x]).sum();
        }
    }
    (out, ow, oh)
}

/// Mean local SSIM over the valid window positions, averaged across channels.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    a.ensure_same_shape(b)?;
    if a.width() < params.window || a.height() < params.window {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than the {}-pixel SSIM window",
            a.width(),
            a.height(),
            params.window
        )));
    }
    let g = params.gaussian_1d();
    let (c1, c2) = (params.c1(), params.c2());
    let (w, h) = (a.width(), a.height());
    let mut total = 0.0;
    for ch in 0..a.channels() {
        let pa = a.plane(ch);
        let pb = b.plane(ch);
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x * y).collect();
        let (mu_a, _, _) = filter_valid(pa, w, h, &g);
        let (mu_b, _, _) = filter_valid(pb, w, h, &g);
        let (e_aa, _, _) = filter_valid(&aa, w, h, &g);
        let (e_bb, _, _) = filter_valid(&bb, w, h, &g);
        let (e_ab, _, _) = filter_valid(&ab, w, h, &g);
        let map: KahanSum = (0..mu_a.len())
            .map(|i| {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let va = e_aa[i] - ma * ma;
                let vb = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
            })
            .collect();
        total += map.value() / mu_a.len() as f64;
    }
    Ok(total / a.channels() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImageScores {
    pub name: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub images: Vec<ImageScores>,
    pub mean_psnr_db: f64,
    pub std_psnr_db: f64,
    pub mean_ssim: f64,
    pub std_ssim: f64,
    pub mean_mse: f64,
    pub std_mse: f64,
}

/// Scores display-range pairs after clamping both sides to `[0, 1]`.
pub fn score_pair(name: &str, restored: &Image, reference: &Image) -> Result<ImageScores> {
    let a = restored.to_display_range().clamped();
    let b = reference.to_display_range().clamped();
    Ok(ImageScores {
        name: name.to_string(),
        psnr_db: psnr(&a, &b, 1.0)?,
        ssim: ssim(&a, &b, &SsimParams::default())?,
        mse: mse(&a, &b)?,
    })
}

impl MetricReport {
    pub fn from_scores(images: Vec<ImageScores>) -> Self {
        let col = |f: fn(&ImageScores) -> f64| {
            let v: Vec<f64> = images.iter().map(f).collect();
            let (m, var) = mean_var(&v);
            (m, var.sqrt())
        };
        let (mean_psnr_db, std_psnr_db) = col(|s| s.psnr_db);
        let (mean_ssim, std_ssim) = col(|s| s.ssim);
        let (mean_mse, std_mse) = col(|s| s.mse);
        Self {
            images,
            mean_psnr_db,
            std_psnr_db,
            mean_ssim,
            std_ssim,
            mean_mse,
            std_mse,
        }
    }
}
