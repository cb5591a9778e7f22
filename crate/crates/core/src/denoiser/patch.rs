//! Closed-form conditional patch denoiser.
//!
//! For every pixel the feature vector is the `(2k+1)²` reflect-padded
//! neighbourhood of each `x_t` channel, then of each condition channel, then a
//! constant 1. One affine map per time bucket sends it to the `ε` of every
//! channel at that pixel; the maps minimize `‖ε - ε̂‖²` plus a ridge penalty
//! on all non-bias weights.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::degrade::reflect;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::numeric::{mean_var, KahanSum};
use crate::rng::SeededRng;
use crate::schedule::{forward_sample, VarianceSchedule};

use super::Denoiser;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Contiguous inclusive step ranges covering `[1, T]` in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeBuckets {
    steps: usize,
    bounds: Vec<(usize, usize)>,
}

impl TimeBuckets {
    /// `count` near-equal buckets; bucket `b` starts at `1 + ⌊bT/count⌋`.
    pub fn uniform(steps: usize, count: usize) -> Result<Self> {
        if count == 0 || count > steps {
            return Err(Error::invalid(format!("bucket count must be in [1, {steps}], got {count}")));
        }
        let bounds = (0..count)
            .map(|b| (1 + b * steps / count, (b + 1) * steps / count))
            .collect();
        Self::from_bounds(steps, bounds)
    }

    pub fn from_bounds(steps: usize, bounds: Vec<(usize, usize)>) -> Result<Self> {
        let mut next = 1;
        for &(lo, hi) in &bounds {
            if lo != next || hi < lo {
                return Err(Error::invalid(format!(
                    "time buckets must tile [1, {steps}] in order; got ({lo}, {hi}) after {}",
                    next - 1
                )));
            }
            next = hi + 1;
        }
        if next != steps + 1 {
            return Err(Error::invalid(format!("time buckets end at {} instead of {steps}", next - 1)));
        }
        Ok(Self { steps, bounds })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }

    pub fn bounds(&self) -> &[(usize, usize)] {
        &self.bounds
    }

    pub fn bucket_of(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.steps {
            return Err(Error::StepOutOfRange {
                t,
                min: 1,
                max: self.steps,
            });
        }
        Ok(self.bounds.partition_point(|&(_, hi)| hi < t))
    }
}

/// Missing fields take their defaults when deserialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PatchFitConfig {
    /// Patch radius `k`; the patch side is `2k + 1`.
    pub radius: usize,
    pub buckets: usize,
    /// Penalty on the per-row normalized normal equations.
    pub ridge_lambda: f64,
    /// Noised training images drawn per bucket; every pixel of each is a row.
    pub samples_per_bucket: usize,
    pub conditional: bool,
}

impl Default for PatchFitConfig {
    fn default() -> Self {
        Self {
            radius: 1,
            buckets: 16,
            ridge_lambda: 1e-3,
            samples_per_bucket: 64,
            conditional: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchBucket {
    pub t_min: usize,
    pub t_max: usize,
    /// `channels × features`, row-major; the last column is the bias.
    pub weights: Vec<f64>,
    /// Mean squared error per value on the training draws.
    pub train_loss: f64,
    /// Same for the all-zero predictor.
    pub zero_loss: f64,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDenoiserModel {
    pub version: u32,
    pub name: String,
    pub schedule_fingerprint: String,
    pub steps: usize,
    pub radius: usize,
    pub channels: usize,
    /// Zero for an unconditional model.
    pub cond_channels: usize,
    pub ridge_lambda: f64,
    pub buckets: Vec<PatchBucket>,
}

fn patch_area(radius: usize) -> usize {
    (2 * radius + 1) * (2 * radius + 1)
}

/// Writes the features of every pixel as rows of `f` (`pixels × features`).
fn feature_rows(planes: &[&[f64]], w: usize, h: usize, radius: usize, f: &mut DMatrix<f64>) {
    let r = radius as isize;
    let area = patch_area(radius);
    let bias = planes.len() * area;
    for y in 0..h {
        for x in 0..w {
            let row = y * w + x;
            for (p, plane) in planes.iter().enumerate() {
                let mut j = p * area;
                for dy in -r..=r {
                    let sy = reflect(y as isize + dy, h);
                    for dx in -r..=r {
                        f[(row, j)] = plane[sy * w + reflect(x as isize + dx, w)];
                        j += 1;
                    }
                }
            }
            f[(row, bias)] = 1.0;
        }
    }
}

fn planes_of<'a>(x_t: &'a Image, cond: Option<&'a Image>) -> Vec<&'a [f64]> {
    let mut planes: Vec<&[f64]> = (0..x_t.channels()).map(|c| x_t.plane(c)).collect();
    if let Some(c) = cond {
        planes.extend((0..c.channels()).map(|ch| c.plane(ch)));
    }
    planes
}

impl PatchDenoiserModel {
    pub fn features(&self) -> usize {
        (self.channels + self.cond_channels) * patch_area(self.radius) + 1
    }

    pub fn time_buckets(&self) -> Result<TimeBuckets> {
        TimeBuckets::from_bounds(self.steps, self.buckets.iter().map(|b| (b.t_min, b.t_max)).collect())
    }

    /// All-zero weights over `buckets` uniform buckets.
    pub fn zeros(
        sched: &VarianceSchedule,
        radius: usize,
        channels: usize,
        cond_channels: usize,
        buckets: usize,
    ) -> Result<Self> {
        let tb = TimeBuckets::uniform(sched.steps(), buckets)?;
        let d = (channels + cond_channels) * patch_area(radius) + 1;
        Ok(Self {
            version: MODEL_FORMAT_VERSION,
            name: "patch".into(),
            schedule_fingerprint: sched.fingerprint(),
            steps: sched.steps(),
            radius,
            channels,
            cond_channels,
            ridge_lambda: 0.0,
            buckets: tb
                .bounds()
                .iter()
                .map(|&(t_min, t_max)| PatchBucket {
                    t_min,
                    t_max,
                    weights: vec![0.0; channels * d],
                    train_loss: 0.0,
                    zero_loss: 0.0,
                    rows: 0,
                })
                .collect(),
        })
    }

    /// Structural checks, run after deserialization.
    pub fn validate(&self) -> Result<()> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(Error::ModelFormat(format!(
                "model version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.version
            )));
        }
        if self.channels == 0 {
            return Err(Error::ModelFormat("model has zero channels".into()));
        }
        self.time_buckets()
            .map_err(|e| Error::ModelFormat(format!("bad bucket table: {e}")))?;
        let expected = self.channels * self.features();
        for (i, b) in self.buckets.iter().enumerate() {
            if b.weights.len() != expected {
                return Err(Error::ModelFormat(format!(
                    "bucket {i} holds {} weights, {expected} expected",
                    b.weights.len()
                )));
            }
            if b.weights.iter().any(|w| !w.is_finite()) {
                return Err(Error::ModelFormat(format!("bucket {i} has non-finite weights")));
            }
        }
        Ok(())
    }

    /// Fails unless the model was fitted on exactly this schedule.
    pub fn check_schedule(&self, sched: &VarianceSchedule) -> Result<()> {
        if self.schedule_fingerprint != sched.fingerprint() {
            return Err(Error::ModelFormat(format!(
                "model `{}` was fitted on a different schedule (fingerprint {}…)",
                self.name,
                &self.schedule_fingerprint[..self.schedule_fingerprint.len().min(12)]
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let probe: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ModelFormat(format!("not a model file: {e}")))?;
        match probe.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_FORMAT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::ModelFormat(format!(
                    "model version {v} is not supported (expected {MODEL_FORMAT_VERSION})"
                )))
            }
            None => return Err(Error::ModelFormat("missing version field".into())),
        }
        let model: Self = serde_json::from_value(probe).map_err(|e| Error::ModelFormat(e.to_string()))?;
        model.validate()?;
        Ok(model)
    }

    fn check_inputs(&self, x_t: &Image, t: usize, condition: Option<&Image>) -> Result<usize> {
        if x_t.channels() != self.channels {
            return Err(Error::shape(
                x_t.shape(),
                format!("{} channels expected by `{}`", self.channels, self.name),
            ));
        }
        match (self.cond_channels, condition) {
            (0, Some(_)) => return Err(Error::UnexpectedCondition(self.name.clone())),
            (0, None) => {}
            (_, None) => return Err(Error::MissingCondition(self.name.clone())),
            (cc, Some(c)) => {
                if c.channels() != cc || c.width() != x_t.width() || c.height() != x_t.height() {
                    return Err(Error::shape(c.shape(), x_t.shape()));
                }
            }
        }
        if t == 0 || t > self.steps {
            return Err(Error::StepOutOfRange {
                t,
                min: 1,
                max: self.steps,
            });
        }
        Ok(self.buckets.partition_point(|b| b.t_max < t))
    }
}

impl Denoiser for PatchDenoiserModel {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_conditional(&self) -> bool {
        self.cond_channels > 0
    }

    fn predict_eps(&self, x_t: &Image, t: usize, condition: Option<&Image>) -> Result<Image> {
        let b = self.check_inputs(x_t, t, condition)?;
        let (w, h) = (x_t.width(), x_t.height());
        let d = self.features();
        let mut f = DMatrix::zeros(w * h, d);
        feature_rows(&planes_of(x_t, condition), w, h, self.radius, &mut f);
        let wt = DMatrix::from_row_slice(self.channels, d, &self.buckets[b].weights);
        let pred = f * wt.transpose();
        let mut out = Image::zeros(w, h, self.channels, x_t.range());
        for c in 0..self.channels {
            out.plane_mut(c).copy_from_slice(pred.column(c).as_slice());
        }
        Ok(out)
    }
}

fn validate_pairs(pairs: &[(Image, Image)], conditional: bool) -> Result<(usize, usize)> {
    let Some((x0, c0)) = pairs.first() else {
        return Err(Error::invalid("no training pairs"));
    };
    for (x, c) in pairs {
        x.ensure_same_shape(x0)?;
        if conditional {
            c.ensure_same_shape(c0)?;
            if c.width() != x.width() || c.height() != x.height() {
                return Err(Error::shape(c.shape(), x.shape()));
            }
        }
    }
    Ok((x0.channels(), if conditional { c0.channels() } else { 0 }))
}

struct Draw {
    t: usize,
    x_t: Image,
    eps: Image,
    pair: usize,
}

fn draw(pairs: &[(Image, Image)], sched: &VarianceSchedule, lo: usize, hi: usize, rng: &mut SeededRng) -> Result<Draw> {
    let pair = rng.int_inclusive(0, pairs.len() - 1);
    let t = rng.int_inclusive(lo, hi);
    let x0 = pairs[pair].0.to_model_range();
    let eps = rng.normal_like(&x0);
    let x_t = forward_sample(&x0, t, &eps, sched)?;
    Ok(Draw { t, x_t, eps, pair })
}

fn fit_bucket(
    index: usize,
    (lo, hi): (usize, usize),
    pairs: &[(Image, Image)],
    conds: &[Image],
    sched: &VarianceSchedule,
    cfg: &PatchFitConfig,
    channels: usize,
    d: usize,
    mut rng: SeededRng,
) -> Result<PatchBucket> {
    let mut xtx = DMatrix::<f64>::zeros(d, d);
    let mut xty = DMatrix::<f64>::zeros(d, channels);
    let mut yty = KahanSum::new();
    let mut rows = 0;
    for _ in 0..cfg.samples_per_bucket {
        let s = draw(pairs, sched, lo, hi, &mut rng)?;
        let (w, h) = (s.x_t.width(), s.x_t.height());
        let mut f = DMatrix::zeros(w * h, d);
        let cond = cfg.conditional.then(|| &conds[s.pair]);
        feature_rows(&planes_of(&s.x_t, cond), w, h, cfg.radius, &mut f);
        let y = DMatrix::from_column_slice(w * h, channels, s.eps.data());
        xtx.gemm_tr(1.0, &f, &f, 1.0);
        xty.gemm_tr(1.0, &f, &y, 1.0);
        for v in s.eps.data() {
            yty.add(v * v);
        }
        rows += w * h;
    }
    let n = rows as f64;
    let mut a = &xtx / n;
    for j in 0..d - 1 {
        a[(j, j)] += cfg.ridge_lambda;
    }
    let b = &xty / n;
    let chol = a.clone().cholesky().ok_or(Error::SingularSystem { bucket: index })?;
    if cfg.ridge_lambda == 0.0 {
        let l = chol.l_dirty();
        let max_diag = (0..d).map(|j| a[(j, j)]).fold(0.0, f64::max);
        let min_pivot = (0..d).map(|j| l[(j, j)] * l[(j, j)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot > 1e-12 * max_diag) {
            return Err(Error::SingularSystem { bucket: index });
        }
    }
    let wmat = chol.solve(&b);
    // ‖Y - FW‖² = YᵀY - 2 tr(WᵀFᵀY) + tr(WᵀFᵀF W), from the accumulated moments.
    let cross = (wmat.transpose() * &xty).trace();
    let quad = (wmat.transpose() * &xtx * &wmat).trace();
    let total = rows as f64 * channels as f64;
    let sse = (yty.value() - 2.0 * cross + quad).max(0.0);
    let weights: Vec<f64> = (0..channels)
        .flat_map(|c| wmat.column(c).iter().copied().collect::<Vec<_>>())
        .collect();
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::SingularSystem { bucket: index });
    }
    Ok(PatchBucket {
        t_min: lo,
        t_max: hi,
        weights,
        train_loss: sse / total,
        zero_loss: yty.value() / total,
        rows,
    })
}

/// Ridge fit of one affine patch map per time bucket.
///
/// Each bucket draws `samples_per_bucket` (pair, t, ε) triples with `t`
/// uniform in the bucket, from its own stream derived from `rng`; buckets fit
/// in parallel. Clean images and conditions are taken to model range.
pub fn fit_patch_denoiser(
    pairs: &[(Image, Image)],
    sched: &VarianceSchedule,
    cfg: &PatchFitConfig,
    rng: &mut SeededRng,
) -> Result<PatchDenoiserModel> {
    let (channels, cond_channels) = validate_pairs(pairs, cfg.conditional)?;
    if cfg.samples_per_bucket == 0 {
        return Err(Error::invalid("samples_per_bucket must be positive"));
    }
    if !(cfg.ridge_lambda >= 0.0) || !cfg.ridge_lambda.is_finite() {
        return Err(Error::invalid(format!("ridge_lambda must be finite and >= 0, got {}", cfg.ridge_lambda)));
    }
    let tb = TimeBuckets::uniform(sched.steps(), cfg.buckets)?;
    let conds: Vec<Image> = pairs.iter().map(|(_, c)| c.to_model_range()).collect();
    let d = (channels + cond_channels) * patch_area(cfg.radius) + 1;
    let base = SeededRng::new(rng.next_u64());
    let buckets = tb
        .bounds()
        .par_iter()
        .enumerate()
        .map(|(i, &bounds)| fit_bucket(i, bounds, pairs, &conds, sched, cfg, channels, d, base.derive(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PatchDenoiserModel {
        version: MODEL_FORMAT_VERSION,
        name: if cfg.conditional { "patch-conditional" } else { "patch" }.into(),
        schedule_fingerprint: sched.fingerprint(),
        steps: sched.steps(),
        radius: cfg.radius,
        channels,
        cond_channels,
        ridge_lambda: cfg.ridge_lambda,
        buckets,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BucketLoss {
    pub bucket: usize,
    pub loss: f64,
    pub zero_loss: f64,
    /// Standard error of `loss` across draws.
    pub stderr: f64,
    pub draws: usize,
}

/// Held-out per-bucket loss of any denoiser on fresh draws.
pub fn evaluate_loss(
    den: &dyn Denoiser,
    pairs: &[(Image, Image)],
    sched: &VarianceSchedule,
    buckets: &TimeBuckets,
    draws: usize,
    rng: &mut SeededRng,
) -> Result<Vec<BucketLoss>> {
    if pairs.is_empty() || draws == 0 {
        return Err(Error::invalid("evaluation needs at least one pair and one draw"));
    }
    let conds: Vec<Image> = pairs.iter().map(|(_, c)| c.to_model_range()).collect();
    let base = SeededRng::new(rng.next_u64());
    buckets
        .bounds()
        .par_iter()
        .enumerate()
        .map(|(i, &(lo, hi))| {
            let mut rng = base.derive(i as u64);
            let mut losses = Vec::with_capacity(draws);
            let mut zeros = Vec::with_capacity(draws);
            for _ in 0..draws {
                let s = draw(pairs, sched, lo, hi, &mut rng)?;
                let cond = den.is_conditional().then(|| &conds[s.pair]);
                let eps_hat = den.predict_eps(&s.x_t, s.t, cond)?;
                losses.push(crate::metrics::mse(&s.eps, &eps_hat)?);
                zeros.push(s.eps.sum_sq() / s.eps.len() as f64);
            }
            let (loss, var) = mean_var(&losses);
            let (zero_loss, _) = mean_var(&zeros);
            Ok(BucketLoss {
                bucket: i,
                loss,
                zero_loss,
                stderr: (var / draws as f64).sqrt(),
                draws,
            })
        })
        .collect()
}
