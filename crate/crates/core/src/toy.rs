//! Procedural smooth images and the models a desk-scale pipeline needs.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use crate::denoiser::{fit_patch_denoiser, PatchFitConfig};
use crate::error::{Error, Result};
use crate::filters::{lowpass_with, resize_with, FilterFactor};
use crate::image::{Image, ValueRange};
use crate::pipeline::{Models, PipelineConfig, StageKind};
use crate::rng::{item_seed, SeededRng};

/// A display-range image made of a few low-frequency colour waves and soft
/// elliptical blobs, clamped to `[0.02, 0.98]`.
pub fn smooth_image(size: usize, channels: usize, rng: &mut SeededRng) -> Image {
    struct Wave {
        fx: f64,
        fy: f64,
        phase: f64,
        amp: Vec<f64>,
    }
    struct Blob {
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
        amp: Vec<f64>,
    }
    let base: Vec<f64> = (0..channels).map(|_| rng.uniform_range(0.3, 0.7)).collect();
    let waves: Vec<Wave> = (0..4)
        .map(|k| {
            let scale = 0.18 / (1.0 + k as f64);
            let shared = rng.uniform_range(-1.0, 1.0);
            Wave {
                fx: rng.uniform_range(-3.0, 3.0),
                fy: rng.uniform_range(-3.0, 3.0),
                phase: rng.uniform_range(0.0, TAU),
                amp: (0..channels)
                    .map(|_| scale * (0.7 * shared + 0.3 * rng.uniform_range(-1.0, 1.0)))
                    .collect(),
            }
        })
        .collect();
    let blobs: Vec<Blob> = (0..2)
        .map(|_| {
            let shared = rng.uniform_range(-0.3, 0.3);
            Blob {
                cx: rng.uniform_range(0.2, 0.8),
                cy: rng.uniform_range(0.2, 0.8),
                rx: rng.uniform_range(0.08, 0.25),
                ry: rng.uniform_range(0.08, 0.25),
                amp: (0..channels)
                    .map(|_| shared + 0.1 * rng.uniform_range(-1.0, 1.0))
                    .collect(),
            }
        })
        .collect();
    let n = size as f64;
    Image::from_fn(size, size, channels, ValueRange::Display, |c, y, x| {
        let (u, v) = ((x as f64 + 0.5) / n, (y as f64 + 0.5) / n);
        let mut val = base[c];
        for w in &waves {
            val += w.amp[c] * (TAU * (w.fx * u + w.fy * v) + w.phase).cos();
        }
        for b in &blobs {
            let d = ((u - b.cx) / b.rx).powi(2) + ((v - b.cy) / b.ry).powi(2);
            val += b.amp[c] * (-0.5 * d).exp();
        }
        val.clamp(0.02, 0.98)
    })
}

/// Item `i` is drawn from `SeededRng::new(item_seed(seed, i))`.
pub fn toy_dataset(count: usize, size: usize, channels: usize, seed: u64) -> Vec<Image> {
    (0..count)
        .map(|i| smooth_image(size, channels, &mut SeededRng::new(item_seed(seed, i as u64))))
        .collect()
}

/// Fit settings used with [`PipelineConfig::desk`]: wide 7×7 patches for the
/// low and mid models, 3×3 for the conditional detail model, whose condition
/// already carries the coarse structure.
pub fn desk_fit(kind: StageKind) -> PatchFitConfig {
    PatchFitConfig {
        radius: if kind == StageKind::Gdb { 1 } else { 3 },
        samples_per_bucket: 32,
        ..PatchFitConfig::default()
    }
}

/// Fits one patch model per denoiser id in `cfg` from clean display-range
/// images at the final resolution.
///
/// LRS and ADR models are unconditional and see the clean images resized to
/// their stage. The GDB model is conditional; its condition during fitting is
/// `Φ_r(x0)` with `r` the resolution step into GDB, which stands in for the
/// upsampled output of the previous stage.
pub fn fit_models(clean: &[Image], cfg: &PipelineConfig, fit: &PatchFitConfig, seed: u64) -> Result<Models> {
    fit_models_with(clean, cfg, seed, |_| fit.clone())
}

/// Like [`fit_models`], with the fit settings chosen per stage kind.
pub fn fit_models_with(
    clean: &[Image],
    cfg: &PipelineConfig,
    seed: u64,
    fit: impl Fn(StageKind) -> PatchFitConfig,
) -> Result<Models> {
    cfg.validate()?;
    let mut wanted: BTreeMap<&str, (usize, Option<usize>, StageKind)> = BTreeMap::new();
    for (i, st) in cfg.stages.iter().enumerate() {
        let cond = match st.kind {
            StageKind::Gdb => {
                let prev = cfg.stages[i - 1].resolution;
                if st.resolution % prev != 0 {
                    return Err(Error::invalid(format!(
                        "GDB resolution {} is not a multiple of {prev}",
                        st.resolution
                    )));
                }
                Some(st.resolution / prev)
            }
            _ => None,
        };
        match wanted.insert(&st.denoiser, (st.resolution, cond, st.kind)) {
            Some(old) if old != (st.resolution, cond, st.kind) => {
                return Err(Error::invalid(format!(
                    "denoiser `{}` is used by stages with different resolutions or roles",
                    st.denoiser
                )));
            }
            _ => {}
        }
    }
    let base = SeededRng::new(seed);
    let mut models = Models::new();
    for (k, (id, (res, cond, kind))) in wanted.into_iter().enumerate() {
        let sched = cfg.schedule.for_resolution(res)?;
        let pairs = clean
            .iter()
            .map(|x| {
                let x0 = resize_with(x, res, res, cfg.kernel)?;
                let c = match cond {
                    Some(r) => lowpass_with(&x0, FilterFactor::new(r)?, cfg.kernel)?,
                    None => x0.clone(),
                };
                Ok((x0, c))
            })
            .collect::<Result<Vec<_>>>()?;
        let fc = PatchFitConfig {
            conditional: cond.is_some(),
            ..fit(kind)
        };
        let mut model = fit_patch_denoiser(&pairs, &sched, &fc, &mut base.derive(k as u64))?;
        model.name = id.to_string();
        models.insert_patch(id, model);
    }
    Ok(models)
}
