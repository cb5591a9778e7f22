//! Synthetic degradation `y = JPEG_q((x ⊛ k) ↓r + n)` with a replayable
//! record of every random choice.
//!
//! Everything here works in display range. Noise is never clamped; only the
//! JPEG stage clamps, because it models an 8-bit codec.

mod blur;
mod jpeg;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use blur::{blur, convolve, kernel, BlurKind};
pub(crate) use blur::reflect;
pub use jpeg::{jpeg_transform, quality_scale, quant_table};

use crate::error::{Error, Result};
use crate::filters::{area_downsample, FilterFactor};
use crate::image::Image;
use crate::rng::SeededRng;

/// Area-average decimation by `r`.
pub fn downsample(img: &Image, r: usize) -> Result<Image> {
    area_downsample(img, FilterFactor::new(r)?)
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!("noise sigma must be finite and >= 0, got {sigma}")));
    }
    Ok(())
}

/// `img + σ·ε`, σ in display units.
pub fn add_gaussian_noise(img: &Image, sigma: f64, rng: &mut SeededRng) -> Result<Image> {
    check_sigma(sigma)?;
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    Ok(img.map(|v| v + sigma * rng.normal()))
}

/// Shot noise at the level where a mid-gray `σ·255` matches `scale` 8-bit units:
/// each pixel becomes `Poisson(v·P)/P` with `P = (255/scale)²`.
pub fn add_poisson_noise(img: &Image, scale: f64, rng: &mut SeededRng) -> Result<Image> {
    check_sigma(scale)?;
    if scale == 0.0 {
        return Ok(img.clone());
    }
    let peak = (255.0 / scale).powi(2);
    Ok(img.map(|v| rng.poisson(v.max(0.0) * peak) / peak))
}

/// Inclusive range of odd kernel sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeRange {
    pub min: usize,
    pub max: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualityRange {
    pub min: u8,
    pub max: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationConfig {
    pub blur_prob: f64,
    /// Drawn uniformly when the blur coin lands; any of gaussian, mean, median.
    pub blur_kinds: Vec<BlurKind>,
    pub blur_kernel: SizeRange,
    pub motion_blur_prob: f64,
    pub motion_kernel: SizeRange,
    pub downsample_factor: usize,
    pub noise_prob: f64,
    /// Display units.
    pub noise_sigma: Interval,
    #[serde(default)]
    pub poisson_prob: f64,
    /// 8-bit units, see [`add_poisson_noise`].
    #[serde(default = "zero_interval")]
    pub poisson_scale: Interval,
    pub jpeg_prob: f64,
    pub jpeg_quality: QualityRange,
}

fn zero_interval() -> Interval {
    Interval { min: 0.0, max: 0.0 }
}

/// Named built-in configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    TrainFfhqStyle,
    CelebaTestStyle,
    Desk,
    None,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::TrainFfhqStyle,
        Preset::CelebaTestStyle,
        Preset::Desk,
        Preset::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::TrainFfhqStyle => "train-ffhq-style",
            Preset::CelebaTestStyle => "celeba-test-style",
            Preset::Desk => "desk",
            Preset::None => "none",
        }
    }

    pub fn config(self) -> DegradationConfig {
        match self {
            Preset::TrainFfhqStyle => DegradationConfig::train_ffhq_style(),
            Preset::CelebaTestStyle => DegradationConfig::celeba_test_style(),
            Preset::Desk => DegradationConfig::desk(),
            Preset::None => DegradationConfig::identity(),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown degradation preset `{s}`")))
    }
}

const ALL_BLURS: [BlurKind; 3] = [BlurKind::Gaussian, BlurKind::Mean, BlurKind::Median];

impl DegradationConfig {
    /// Training mix: blur 50%, motion 50%, r = 8, noise 20% up to σ = 0.1,
    /// JPEG 70% with q in [10, 65].
    pub fn train_ffhq_style() -> Self {
        Self {
            blur_prob: 0.5,
            blur_kinds: ALL_BLURS.to_vec(),
            blur_kernel: SizeRange { min: 3, max: 15 },
            motion_blur_prob: 0.5,
            motion_kernel: SizeRange { min: 5, max: 25 },
            downsample_factor: 8,
            noise_prob: 0.2,
            noise_sigma: Interval { min: 0.0, max: 0.1 },
            poisson_prob: 0.0,
            poisson_scale: zero_interval(),
            jpeg_prob: 0.7,
            jpeg_quality: QualityRange { min: 10, max: 65 },
        }
    }

    /// Evaluation mix: blur 50% sizes 3–9, r = 8, Gaussian σ in 5–30 and
    /// Poisson 0–10 (8-bit units) each at 50%, JPEG 50% with q in [30, 95].
    pub fn celeba_test_style() -> Self {
        Self {
            blur_prob: 0.5,
            blur_kinds: ALL_BLURS.to_vec(),
            blur_kernel: SizeRange { min: 3, max: 9 },
            motion_blur_prob: 0.0,
            motion_kernel: SizeRange { min: 5, max: 25 },
            downsample_factor: 8,
            noise_prob: 0.5,
            noise_sigma: Interval { min: 5.0 / 255.0, max: 30.0 / 255.0 },
            poisson_prob: 0.5,
            poisson_scale: Interval { min: 0.0, max: 10.0 },
            jpeg_prob: 0.5,
            jpeg_quality: QualityRange { min: 30, max: 95 },
        }
    }

    /// Desk-scale mix for 64-pixel images on a 16→32→64 ladder: the training
    /// mix with `r = 2`, small kernels and no motion blur.
    pub fn desk() -> Self {
        Self {
            blur_prob: 0.5,
            blur_kinds: ALL_BLURS.to_vec(),
            blur_kernel: SizeRange { min: 3, max: 7 },
            motion_blur_prob: 0.0,
            motion_kernel: SizeRange { min: 5, max: 9 },
            downsample_factor: 2,
            noise_prob: 1.0,
            noise_sigma: Interval { min: 0.05, max: 0.1 },
            poisson_prob: 0.0,
            poisson_scale: zero_interval(),
            jpeg_prob: 0.7,
            jpeg_quality: QualityRange { min: 10, max: 65 },
        }
    }

    /// Applies nothing.
    pub fn identity() -> Self {
        Self {
            blur_prob: 0.0,
            blur_kinds: ALL_BLURS.to_vec(),
            blur_kernel: SizeRange { min: 3, max: 15 },
            motion_blur_prob: 0.0,
            motion_kernel: SizeRange { min: 5, max: 25 },
            downsample_factor: 1,
            noise_prob: 0.0,
            noise_sigma: zero_interval(),
            poisson_prob: 0.0,
            poisson_scale: zero_interval(),
            jpeg_prob: 0.0,
            jpeg_quality: QualityRange { min: 10, max: 65 },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("blur_prob", self.blur_prob),
            ("motion_blur_prob", self.motion_blur_prob),
            ("noise_prob", self.noise_prob),
            ("poisson_prob", self.poisson_prob),
            ("jpeg_prob", self.jpeg_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(format!("{name} must be in [0, 1], got {p}")));
            }
        }
        if self.blur_kinds.is_empty() && self.blur_prob > 0.0 {
            return Err(Error::invalid("blur_kinds is empty but blur_prob > 0"));
        }
        if self.blur_kinds.contains(&BlurKind::Motion) {
            return Err(Error::invalid("motion blur has its own probability; remove it from blur_kinds"));
        }
        for (name, r, lo, hi) in [
            ("blur_kernel", self.blur_kernel, 3, 15),
            ("motion_kernel", self.motion_kernel, 5, 25),
        ] {
            if r.min % 2 == 0 || r.max % 2 == 0 || r.min < lo || r.max > hi || r.min > r.max {
                return Err(Error::invalid(format!(
                    "{name} must be odd sizes with {lo} <= min <= max <= {hi}, got [{}, {}]",
                    r.min, r.max
                )));
            }
        }
        if self.downsample_factor == 0 {
            return Err(Error::invalid("downsample_factor must be at least 1"));
        }
        for (name, iv) in [("noise_sigma", self.noise_sigma), ("poisson_scale", self.poisson_scale)] {
            if !(iv.min >= 0.0) || !(iv.max >= iv.min) || !iv.max.is_finite() {
                return Err(Error::invalid(format!(
                    "{name} must satisfy 0 <= min <= max, got [{}, {}]",
                    iv.min, iv.max
                )));
            }
        }
        let q = self.jpeg_quality;
        if q.min < 1 || q.max > 100 || q.min > q.max {
            return Err(Error::invalid(format!(
                "jpeg_quality must satisfy 1 <= min <= max <= 100, got [{}, {}]",
                q.min, q.max
            )));
        }
        Ok(())
    }
}

/// One applied stage with every parameter needed to replay it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "stage", rename_all = "kebab-case")]
pub enum Applied {
    Blur { kind: BlurKind, size: usize },
    MotionBlur { size: usize, angle_deg: f64 },
    Downsample { factor: usize },
    GaussianNoise { sigma: f64, seed: u64 },
    PoissonNoise { scale: f64, seed: u64 },
    Jpeg { quality: u8 },
}

impl Applied {
    /// Position in the fixed stage order.
    fn order(&self) -> u8 {
        match self {
            Applied::Blur { .. } => 0,
            Applied::MotionBlur { .. } => 1,
            Applied::Downsample { .. } => 2,
            Applied::GaussianNoise { .. } => 3,
            Applied::PoissonNoise { .. } => 4,
            Applied::Jpeg { .. } => 5,
        }
    }

    pub fn apply(&self, img: &Image) -> Result<Image> {
        match *self {
            Applied::Blur { kind, size } => blur(img, kind, size, 0.0),
            Applied::MotionBlur { size, angle_deg } => blur(img, BlurKind::Motion, size, angle_deg),
            Applied::Downsample { factor } => downsample(img, factor),
            Applied::GaussianNoise { sigma, seed } => {
                add_gaussian_noise(img, sigma, &mut SeededRng::new(seed))
            }
            Applied::PoissonNoise { scale, seed } => {
                add_poisson_noise(img, scale, &mut SeededRng::new(seed))
            }
            Applied::Jpeg { quality } => jpeg_transform(img, quality),
        }
    }
}

/// Stages actually applied, in pipeline order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecord {
    pub stages: Vec<Applied>,
}

impl DegradationRecord {
    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn is_ordered(&self) -> bool {
        self.stages.windows(2).all(|w| w[0].order() < w[1].order())
    }

    /// Re-runs the recorded stages through the deterministic operators.
    pub fn replay(&self, x: &Image) -> Result<Image> {
        let mut y = x.clone();
        for s in &self.stages {
            y = s.apply(&y)?;
        }
        Ok(y)
    }

    /// `(blur_kind, kernel, sigma, quality, r)` manifest cells. Multiple blurs
    /// join with `+`; absent stages are empty, except `r` which is always set.
    pub fn manifest_fields(&self) -> [String; 5] {
        let mut kinds = Vec::new();
        let mut sizes = Vec::new();
        let mut sigma = String::new();
        let mut quality = String::new();
        let mut r = 1;
        for s in &self.stages {
            match s {
                Applied::Blur { kind, size } => {
                    kinds.push(kind.name().to_string());
                    sizes.push(size.to_string());
                }
                Applied::MotionBlur { size, .. } => {
                    kinds.push("motion".into());
                    sizes.push(size.to_string());
                }
                Applied::Downsample { factor } => r = *factor,
                Applied::GaussianNoise { sigma: s, .. } => sigma = format!("{s}"),
                Applied::PoissonNoise { .. } => {}
                Applied::Jpeg { quality: q } => quality = q.to_string(),
            }
        }
        [kinds.join("+"), sizes.join("+"), sigma, quality, r.to_string()]
    }
}

fn odd_size(rng: &mut SeededRng, range: SizeRange) -> usize {
    let slots = (range.max - range.min) / 2;
    range.min + 2 * rng.int_inclusive(0, slots)
}

/// Samples and applies one degradation. `x` should be in display range.
///
/// Each stage always consumes the same draws whether or not its coin lands,
/// so changing one probability leaves the other stages' choices unchanged.
pub fn synthesize(x: &Image, cfg: &DegradationConfig, rng: &mut SeededRng) -> Result<(Image, DegradationRecord)> {
    cfg.validate()?;
    let mut stages = Vec::new();

    let coin = rng.uniform();
    let kind_draw = rng.int_inclusive(0, cfg.blur_kinds.len().saturating_sub(1));
    let size = odd_size(rng, cfg.blur_kernel);
    if coin < cfg.blur_prob {
        stages.push(Applied::Blur {
            kind: cfg.blur_kinds[kind_draw],
            size,
        });
    }

    let coin = rng.uniform();
    let size = odd_size(rng, cfg.motion_kernel);
    let angle_deg = rng.uniform_range(0.0, 180.0);
    if coin < cfg.motion_blur_prob {
        stages.push(Applied::MotionBlur { size, angle_deg });
    }

    if cfg.downsample_factor > 1 {
        stages.push(Applied::Downsample {
            factor: cfg.downsample_factor,
        });
    }

    let coin = rng.uniform();
    let sigma = rng.uniform_range(cfg.noise_sigma.min, cfg.noise_sigma.max);
    let seed = rng.next_u64();
    if coin < cfg.noise_prob {
        stages.push(Applied::GaussianNoise { sigma, seed });
    }

    let coin = rng.uniform();
    let scale = rng.uniform_range(cfg.poisson_scale.min, cfg.poisson_scale.max);
    let seed = rng.next_u64();
    if coin < cfg.poisson_prob {
        stages.push(Applied::PoissonNoise { scale, seed });
    }

    let coin = rng.uniform();
    let quality = rng.int_inclusive(cfg.jpeg_quality.min as usize, cfg.jpeg_quality.max as usize) as u8;
    if coin < cfg.jpeg_prob {
        stages.push(Applied::Jpeg { quality });
    }

    let record = DegradationRecord { stages };
    let y = record.replay(x)?;
    Ok((y, record))
}
