use std::fmt::Write as _;
use std::time::{Duration, Instant};

use truncdiff::degrade::{synthesize, DegradationConfig};
use truncdiff::filters::resize_with;
use truncdiff::pipeline::{full_chain, restore, step_budget, Models, PipelineConfig, Sampler, StepBudget};
use truncdiff::rng::{item_seed, SeededRng};
use truncdiff::toy::{fit_models_with, toy_dataset};
use truncdiff::Image;

use crate::config::FitSection;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub budget: StepBudget,
    pub images: usize,
    pub truncated: Duration,
    pub baseline: Duration,
    /// Denoiser calls summed over the restoration traces.
    pub truncated_evals: usize,
    /// The same sum recomputed from the per-stage counters.
    pub truncated_evals_from_stages: usize,
    pub baseline_evals: usize,
    pub exhausted: usize,
}

impl BenchReport {
    pub fn wall_ratio(&self) -> f64 {
        self.baseline.as_secs_f64() / self.truncated.as_secs_f64()
    }

    pub fn measured_eval_ratio(&self) -> f64 {
        self.baseline_evals as f64 / self.truncated_evals as f64
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let b = &self.budget;
        let _ = writeln!(s, "truncated_evals = {}", b.truncated_evals);
        let _ = writeln!(s, "full_baseline_evals = {}", b.full_baseline_evals);
        let _ = writeln!(s, "ratio = {:.4}", b.ratio);
        let _ = writeln!(s, "images = {}", self.images);
        let _ = writeln!(s, "trace_evaluations = {}", self.truncated_evals);
        let _ = writeln!(s, "trace_evaluations_from_stages = {}", self.truncated_evals_from_stages);
        let _ = writeln!(s, "baseline_evaluations = {}", self.baseline_evals);
        let _ = writeln!(s, "measured_eval_ratio = {:.4}", self.measured_eval_ratio());
        let _ = writeln!(s, "exhausted_runs = {}", self.exhausted);
        let _ = writeln!(s, "truncated_seconds = {:.6}", self.truncated.as_secs_f64());
        let _ = writeln!(s, "baseline_seconds = {:.6}", self.baseline.as_secs_f64());
        let _ = writeln!(s, "wall_ratio = {:.4}", self.wall_ratio());
        s
    }
}

/// Degraded toy inputs at the final resolution of `cfg`.
pub fn toy_batch(cfg: &PipelineConfig, degradation: &DegradationConfig, count: usize, seed: u64) -> Result<Vec<Image>> {
    let res = cfg.final_resolution();
    toy_dataset(count, res, 3, seed)
        .iter()
        .enumerate()
        .map(|(i, x)| Ok(synthesize(x, degradation, &mut SeededRng::new(item_seed(seed, i as u64)).derive(1))?.0))
        .collect()
}

/// Patch models for every denoiser id in `cfg`, fitted on procedural images.
pub fn toy_models(cfg: &PipelineConfig, fit: &FitSection, seed: u64) -> Result<Models> {
    let clean = toy_dataset(32, cfg.final_resolution(), 3, seed);
    Ok(fit_models_with(&clean, cfg, seed, |k| fit.for_kind(k))?)
}

/// Times the truncated pipeline against an untruncated chain of the last
/// stage's denoiser at the final resolution, image by image on this thread.
/// The baseline conditions on the degraded input resized to that resolution.
pub fn bench(cfg: &PipelineConfig, models: &Models, batch: &[Image], seed: u64) -> Result<BenchReport> {
    cfg.validate()?;
    let last = cfg.stages.last().expect("validated config has stages");
    let sched = cfg.schedule.for_resolution(last.resolution)?;
    let sampler = Sampler {
        sched: &sched,
        variance: cfg.variance,
        kernel: cfg.kernel,
        swap: cfg.swap,
    };
    let den = models.get(&last.denoiser)?;
    let mut report = BenchReport {
        budget: step_budget(cfg),
        images: batch.len(),
        truncated: Duration::ZERO,
        baseline: Duration::ZERO,
        truncated_evals: 0,
        truncated_evals_from_stages: 0,
        baseline_evals: 0,
        exhausted: 0,
    };
    for (i, y) in batch.iter().enumerate() {
        let s = item_seed(seed, i as u64);
        let start = Instant::now();
        let (_, trace) = restore(y, models, cfg, s)?;
        report.truncated += start.elapsed();
        report.truncated_evals += trace.total_evaluations;
        report.truncated_evals_from_stages += trace.evaluations_from_stages();
        report.exhausted += usize::from(trace.any_exhausted());

        let start = Instant::now();
        let cond = resize_with(&y.to_model_range(), last.resolution, last.resolution, cfg.kernel)?;
        let out = full_chain(&cond, den, den.is_conditional().then_some(&cond), &sampler, &SeededRng::new(s))?;
        report.baseline += start.elapsed();
        report.baseline_evals += out.evaluations;
    }
    Ok(report)
}
