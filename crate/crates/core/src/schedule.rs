//! Variance schedules, the closed-form forward process, SNR curves and
//! cross-resolution breakpoint matching.
//!
//! Steps are 1-based (`t ∈ 1..=T`) everywhere in the public API; the tables
//! are stored zero-based, so step `t` lives at index `t - 1`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::numeric::{mean_var, KahanSum};
use crate::rng::SeededRng;

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_START: f64 = 1e-4;
pub const DEFAULT_BETA_END: f64 = 0.02;
pub const DESK_STEPS: usize = 200;
pub const DEFAULT_SNR_GUARD_DB: f64 = 3.0;
pub const DEFAULT_MC_SAMPLES: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceSchedule {
    betas: Vec<f64>,
    alphas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

/// Reverse-process noise scale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PosteriorVariance {
    /// `σ_t = √β_t`
    #[default]
    Beta,
    /// `σ_t = √(β_t (1 - ᾱ_{t-1}) / (1 - ᾱ_t))`
    BetaTilde,
}

impl VarianceSchedule {
    /// Linearly spaced `β` from `beta_start` to `beta_end` over `steps` steps.
    pub fn linear(steps: usize, beta_start: f64, beta_end: f64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("schedule needs at least 2 steps, got {steps}")));
        }
        if !(beta_start > 0.0) {
            return Err(Error::invalid(format!("beta_start must be > 0, got {beta_start}")));
        }
        if !(beta_end < 1.0) {
            return Err(Error::invalid(format!("beta_end must be < 1, got {beta_end}")));
        }
        if beta_start > beta_end {
            return Err(Error::invalid(format!(
                "beta_start {beta_start} exceeds beta_end {beta_end}"
            )));
        }
        let denom = (steps - 1) as f64;
        let betas = (0..steps)
            .map(|i| beta_start + (beta_end - beta_start) * i as f64 / denom)
            .collect();
        Self::from_betas(betas)
    }

    /// Standard endpoints (`1e-4 .. 0.02` at `T = 1000`) rescaled by `1000 / steps`
    /// so that shorter chains still end near pure noise.
    pub fn rescaled_linear(steps: usize) -> Result<Self> {
        let k = DEFAULT_STEPS as f64 / steps as f64;
        Self::linear(steps, DEFAULT_BETA_START * k, DEFAULT_BETA_END * k)
    }

    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 {
            return Err(Error::invalid("schedule needs at least 2 steps"));
        }
        if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
            return Err(Error::invalid(format!("beta {b} outside (0, 1)")));
        }
        let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bars = Vec::with_capacity(alphas.len());
        let mut acc = 1.0;
        for a in &alphas {
            acc *= a;
            alpha_bars.push(acc);
        }
        if !(alpha_bars[alpha_bars.len() - 1] > 0.0) {
            return Err(Error::invalid("cumulative alpha underflows to zero"));
        }
        Ok(Self {
            betas,
            alphas,
            alpha_bars,
        })
    }

    /// Schedule whose per-step signal-to-noise ratio `ᾱ/(1-ᾱ)` is `gain` times
    /// this one's. With `gain = (side / base_side)²` a model at `side` pixels
    /// sees, per pixel, the SNR that base-resolution noise leaves after
    /// averaging down to `base_side`.
    pub fn snr_shifted(&self, gain: f64) -> Result<Self> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::invalid(format!("SNR gain must be positive, got {gain}")));
        }
        if gain == 1.0 {
            return Ok(self.clone());
        }
        let mut betas = Vec::with_capacity(self.steps());
        let mut prev = 1.0;
        for &ab in &self.alpha_bars {
            let snr = gain * ab / (1.0 - ab);
            let shifted = snr / (1.0 + snr);
            betas.push(1.0 - shifted / prev);
            prev = shifted;
        }
        Self::from_betas(betas)
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(Error::StepOutOfRange {
                t,
                min: 1,
                max: self.steps(),
            });
        }
        Ok(())
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// `β_t`; panics outside `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        if t == 0 {
            1.0
        } else {
            self.alpha_bars[t - 1]
        }
    }

    pub fn sigma(&self, t: usize, kind: PosteriorVariance) -> f64 {
        match kind {
            PosteriorVariance::Beta => self.beta(t).sqrt(),
            PosteriorVariance::BetaTilde => {
                (self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))).sqrt()
            }
        }
    }

    /// Hex SHA-256 over the little-endian bit patterns of `β`.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.steps() as u64).to_le_bytes());
        for b in &self.betas {
            h.update(b.to_bits().to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Linear schedule family shared by every resolution of a ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleProfile {
    pub steps: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    /// Resolution at which the linear schedule is used unshifted.
    pub base_resolution: usize,
    /// Raise per-pixel SNR by `(resolution / base_resolution)²` at higher resolutions.
    #[serde(default = "default_true")]
    pub resolution_shift: bool,
}

fn default_true() -> bool {
    true
}

impl ScheduleProfile {
    /// `T = 200` with rescaled standard endpoints, unshifted at 16 px.
    pub fn desk() -> Self {
        let k = DEFAULT_STEPS as f64 / DESK_STEPS as f64;
        Self {
            steps: DESK_STEPS,
            beta_start: DEFAULT_BETA_START * k,
            beta_end: DEFAULT_BETA_END * k,
            base_resolution: 16,
            resolution_shift: true,
        }
    }

    pub fn standard(base_resolution: usize) -> Self {
        Self {
            steps: DEFAULT_STEPS,
            beta_start: DEFAULT_BETA_START,
            beta_end: DEFAULT_BETA_END,
            base_resolution,
            resolution_shift: true,
        }
    }

    pub fn base(&self) -> Result<VarianceSchedule> {
        VarianceSchedule::linear(self.steps, self.beta_start, self.beta_end)
    }

    pub fn for_resolution(&self, resolution: usize) -> Result<VarianceSchedule> {
        if resolution == 0 || self.base_resolution == 0 {
            return Err(Error::invalid("resolution must be positive"));
        }
        let base = self.base()?;
        if !self.resolution_shift {
            return Ok(base);
        }
        let ratio = resolution as f64 / self.base_resolution as f64;
        base.snr_shifted(ratio * ratio)
    }
}

/// A truncated stretch `t_end < t ≤ t_begin` of the reverse chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeWindow {
    pub t_begin: usize,
    pub t_end: usize,
}

impl TimeWindow {
    pub fn new(t_begin: usize, t_end: usize) -> Result<Self> {
        let w = Self { t_begin, t_end };
        w.validate(None)?;
        Ok(w)
    }

    /// Checks `1 ≤ t_end < t_begin` (and `t_begin ≤ T` when `steps` is given).
    pub fn validate(&self, steps: Option<usize>) -> Result<()> {
        if self.t_end == 0 {
            return Err(Error::invalid("window t_end must be at least 1"));
        }
        if self.t_begin <= self.t_end {
            return Err(Error::invalid(format!(
                "empty window: t_begin {} must exceed t_end {}",
                self.t_begin, self.t_end
            )));
        }
        if let Some(steps) = steps {
            if self.t_begin > steps {
                return Err(Error::invalid(format!(
                    "window t_begin {} exceeds schedule length {steps}",
                    self.t_begin
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.t_begin - self.t_end
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `x_t = √ᾱ_t · x0 + √(1 - ᾱ_t) · ε`.
pub fn forward_sample(x0: &Image, t: usize, eps: &Image, sched: &VarianceSchedule) -> Result<Image> {
    sched.check_step(t)?;
    x0.ensure_same_shape(eps)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
    Ok(x0.zip_map(eps, |x, e| a * x + b * e)?.with_range(x0.range()))
}

/// `10 · log10(Σ x_t² / Σ (x_t - x0)²)` in dB.
///
/// Returns `+∞` when the images coincide (and are not all zero) and `-∞` when
/// `x_t` is all zero but `x0` is not.
pub fn snr_db(x_t: &Image, x0: &Image) -> Result<f64> {
    x_t.ensure_same_shape(x0)?;
    let num = x_t.sum_sq();
    let den: KahanSum = x_t
        .data()
        .iter()
        .zip(x0.data())
        .map(|(a, b)| (a - b) * (a - b))
        .collect();
    ratio_db(num, den.value())
}

fn ratio_db(num: f64, den: f64) -> Result<f64> {
    match (num > 0.0, den > 0.0) {
        (false, false) => Err(Error::Undefined(
            "SNR of identical all-zero images".to_string(),
        )),
        (true, false) => Ok(f64::INFINITY),
        (false, true) => Ok(f64::NEG_INFINITY),
        (true, true) => Ok(10.0 * (num / den).log10()),
    }
}

/// SNR in dB of the ratio of expectations `E Σ x_t² / E Σ (x_t - x0)²`.
pub fn expected_snr_db(x0: &Image, t: usize, sched: &VarianceSchedule) -> Result<f64> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let s = x0.sum_sq();
    let p = x0.len() as f64;
    let num = ab * s + (1.0 - ab) * p;
    let den = (1.0 - ab.sqrt()).powi(2) * s + (1.0 - ab) * p;
    ratio_db(num, den)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrCurve {
    pub resolution: usize,
    /// `values[t - 1]` is the mean SNR in dB at step `t`.
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mc_samples: usize,
}

impl SnrCurve {
    pub fn at(&self, t: usize) -> f64 {
        self.values[t - 1]
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    /// Steps `t` where `values[t] > values[t-1] + k · combined standard error`.
    pub fn monotonicity_violations(&self, k_se: f64) -> Vec<usize> {
        (1..self.values.len())
            .filter(|&i| {
                let se = (self.stderr[i].powi(2) + self.stderr[i - 1].powi(2)).sqrt();
                self.values[i] > self.values[i - 1] + k_se * se
            })
            .map(|i| i + 1)
            .collect()
    }

    /// CSV with header `t,snr_db,stderr_db`, LF line endings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,snr_db,stderr_db\n");
        for (i, (v, s)) in self.values.iter().zip(&self.stderr).enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, v, s));
        }
        out
    }
}

/// Monte-Carlo mean SNR curve over `dataset × mc_samples` forward draws.
///
/// Each (image, draw) pair owns a noise image derived from `(seed, pair index)`
/// and reuses it for all steps, so neighbouring steps share noise. Per-pair
/// curves are reduced in index order, making the result independent of thread
/// scheduling.
pub fn expected_snr_curve(
    dataset: &[Image],
    sched: &VarianceSchedule,
    mc_samples: usize,
    seed: u64,
) -> Result<SnrCurve> {
    let first = dataset
        .first()
        .ok_or_else(|| Error::invalid("empty dataset"))?;
    if mc_samples < 1 {
        return Err(Error::invalid("mc_samples must be at least 1"));
    }
    for img in dataset {
        first.ensure_same_shape(img)?;
    }
    let base = SeededRng::new(seed);
    let steps = sched.steps();
    let pairs = dataset.len() * mc_samples;
    let per_pair: Vec<Vec<f64>> = (0..pairs)
        .into_par_iter()
        .map(|p| {
            let x0 = &dataset[p / mc_samples];
            let eps = base.derive(p as u64).normal_like(x0);
            // Σx0², Σx0·ε, Σε² determine every step's sums in closed form.
            let s0 = x0.sum_sq();
            let cross: KahanSum = x0.data().iter().zip(eps.data()).map(|(a, b)| a * b).collect();
            let cross = cross.value();
            let ee = eps.sum_sq();
            (1..=steps)
                .map(|t| {
                    let ab = sched.alpha_bar(t);
                    let (a, b) = (ab.sqrt(), (1.0 - ab).sqrt());
                    let num = a * a * s0 + 2.0 * a * b * cross + b * b * ee;
                    let d = a - 1.0;
                    let den = d * d * s0 + 2.0 * d * b * cross + b * b * ee;
                    ratio_db(num.max(0.0), den.max(0.0)).unwrap_or(f64::NAN)
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(steps);
    let mut stderr = Vec::with_capacity(steps);
    let mut column = Vec::with_capacity(pairs);
    for t in 0..steps {
        column.clear();
        column.extend(per_pair.iter().map(|c| c[t]));
        let (m, v) = mean_var(&column);
        values.push(m);
        stderr.push((v / pairs as f64).sqrt());
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Undefined(
            "SNR curve is not finite; dataset is degenerate".to_string(),
        ));
    }
    Ok(SnrCurve {
        resolution: first.width(),
        values,
        stderr,
        mc_samples,
    })
}

/// Step whose SNR is closest to `target_db`; ties go to the smaller step.
pub fn match_breakpoint(target_db: f64, curve: &SnrCurve, guard_db: f64) -> Result<usize> {
    if curve.values.is_empty() {
        return Err(Error::invalid("empty SNR curve"));
    }
    let (lo, hi) = curve
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !target_db.is_finite() || target_db < lo - guard_db || target_db > hi + guard_db {
        return Err(Error::NoComparableSnr {
            target: target_db,
            min: lo,
            max: hi,
            guard: guard_db,
        });
    }
    let mut best = 0;
    let mut best_dist = f64::INFINITY;
    for (i, v) in curve.values.iter().enumerate() {
        let d = (v - target_db).abs();
        if d < best_dist {
            best = i;
            best_dist = d;
        }
    }
    Ok(best + 1)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseStats {
    pub mean: f64,
    pub variance: f64,
    pub samples: usize,
}

/// Mean and variance, over all pixels and `mc_samples` draws, of `x_t - x0`.
pub fn noise_consistency(
    x0: &Image,
    sched: &VarianceSchedule,
    t: usize,
    mc_samples: usize,
    seed: u64,
) -> Result<NoiseStats> {
    if mc_samples < 1 {
        return Err(Error::invalid("mc_samples must be at least 1"));
    }
    sched.check_step(t)?;
    let mut rng = SeededRng::new(seed);
    let mut sum = KahanSum::new();
    let mut sum_sq = KahanSum::new();
    for _ in 0..mc_samples {
        let eps = rng.normal_like(x0);
        let xt = forward_sample(x0, t, &eps, sched)?;
        for (a, b) in xt.data().iter().zip(x0.data()) {
            let d = a - b;
            sum.add(d);
            sum_sq.add(d * d);
        }
    }
    let n = (mc_samples * x0.len()) as f64;
    let mean = sum.value() / n;
    let variance = if n > 1.0 {
        ((sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(NoiseStats {
        mean,
        variance,
        samples: n as usize,
    })
}

/// One stage of a breakpoint plan.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub resolution: usize,
    pub t_begin: usize,
    pub t_end: usize,
    pub matched_snr_db: f64,
}

/// Chains windows across a resolution ladder: each stage starts at the step
/// whose SNR on its own curve best matches the previous stage's `t_end`.
///
/// `curves[i]` is the curve for stage `i`; `lengths[i]` its window length.
/// The first stage ends at `first_t_end`.
pub fn plan_breakpoints(
    curves: &[SnrCurve],
    lengths: &[usize],
    first_t_end: usize,
    guard_db: f64,
) -> Result<Vec<PlanEntry>> {
    if curves.is_empty() || curves.len() != lengths.len() {
        return Err(Error::invalid("one curve and one window length per stage"));
    }
    let mut plan = Vec::with_capacity(curves.len());
    let first_begin = first_t_end + lengths[0];
    if first_begin > curves[0].steps() || first_t_end == 0 {
        return Err(Error::invalid("first window does not fit the schedule"));
    }
    plan.push(PlanEntry {
        resolution: curves[0].resolution,
        t_begin: first_begin,
        t_end: first_t_end,
        matched_snr_db: curves[0].at(first_begin),
    });
    for i in 1..curves.len() {
        let prev = &plan[i - 1];
        let target = curves[i - 1].at(prev.t_end.max(1));
        let t_begin = match_breakpoint(target, &curves[i], guard_db)?;
        let last = i + 1 == curves.len();
        if (t_begin <= lengths[i] && !last) || t_begin < 2 {
            return Err(Error::invalid(format!(
                "stage {i}: window of {} steps does not fit below t_begin {t_begin}",
                lengths[i]
            )));
        }
        plan.push(PlanEntry {
            resolution: curves[i].resolution,
            t_begin,
            // The last stage may be cut short so that it still ends at step 1.
            t_end: t_begin.saturating_sub(lengths[i]).max(1),
            matched_snr_db: curves[i].at(t_begin),
        });
    }
    Ok(plan)
}

/// Plain-text plan: one blank-line-separated block of `key=value` lines per stage.
pub fn plan_to_text(plan: &[PlanEntry]) -> String {
    plan.iter()
        .map(|e| {
            format!(
                "resolution={}\nt_begin={}\nt_end={}\nmatched_snr_db={}\n",
                e.resolution, e.t_begin, e.t_end, e.matched_snr_db
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn plan_from_text(text: &str) -> Result<Vec<PlanEntry>> {
    let mut out = Vec::new();
    for (bi, block) in text.split("\n\n").enumerate() {
        if block.trim().is_empty() {
            continue;
        }
        let mut entry = PlanEntry {
            resolution: 0,
            t_begin: 0,
            t_end: 0,
            matched_snr_db: f64::NAN,
        };
        for line in block.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("plan block {bi}: malformed line `{line}`")))?;
            let bad = || Error::invalid(format!("plan block {bi}: bad value for `{k}`"));
            match k.trim() {
                "resolution" => entry.resolution = v.trim().parse().map_err(|_| bad())?,
                "t_begin" => entry.t_begin = v.trim().parse().map_err(|_| bad())?,
                "t_end" => entry.t_end = v.trim().parse().map_err(|_| bad())?,
                "matched_snr_db" => entry.matched_snr_db = v.trim().parse().map_err(|_| bad())?,
                other => return Err(Error::invalid(format!("plan block {bi}: unknown key `{other}`"))),
            }
        }
        out.push(entry);
    }
    Ok(out)
}
