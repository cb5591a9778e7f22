use crate::denoiser::{check_condition, predict_x0, reverse_step_with_eps, Denoiser};
use crate::error::{Error, Result};
use crate::filters::{freq_swap_with, lowpass_with, FilterFactor, Kernel};
use crate::image::Image;
use crate::numeric::KahanSum;
use crate::rng::SeededRng;
use crate::schedule::{forward_sample, PosteriorVariance, TimeWindow, VarianceSchedule};

use super::config::{StageConfig, StageKind};
use super::trace::Attempt;

/// Sampling settings shared by every stage of a run.
#[derive(Debug, Clone, Copy)]
pub struct Sampler<'a> {
    pub sched: &'a VarianceSchedule,
    pub variance: PosteriorVariance,
    pub kernel: Kernel,
    /// Frequency swapping in LRS/ADR loops.
    pub swap: bool,
}

impl<'a> Sampler<'a> {
    pub fn new(sched: &'a VarianceSchedule) -> Self {
        Self {
            sched,
            variance: PosteriorVariance::Beta,
            kernel: Kernel::Bilinear,
            swap: true,
        }
    }
}

/// Result of one truncated sampling loop.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopOutput {
    /// Sampler state after the last step, `x'_{t_end}` (swapped when swapping).
    pub state: Image,
    /// `x̂0` from the last denoiser evaluation, at `t_end + 1`; this is what
    /// the stage hands on.
    pub estimate: Image,
    pub evaluations: usize,
}

/// `L_adr`: mean over pixels and channels of `(Φ_N(y) - Φ_N(x_end))²`.
pub fn compute_l_adr(x_end: &Image, y: &Image, f: FilterFactor) -> Result<f64> {
    compute_l_adr_with(x_end, y, f, Kernel::Bilinear)
}

pub fn compute_l_adr_with(x_end: &Image, y: &Image, f: FilterFactor, kernel: Kernel) -> Result<f64> {
    x_end.ensure_same_shape(y)?;
    let a = lowpass_with(y, f, kernel)?;
    let b = lowpass_with(x_end, f, kernel)?;
    let s: KahanSum = a.data().iter().zip(b.data()).map(|(p, q)| (p - q) * (p - q)).collect();
    Ok(s.value() / a.len() as f64)
}

fn check_stage(cfg: &StageConfig, kind: StageKind, img: &Image, sampler: &Sampler) -> Result<()> {
    if cfg.kind != kind {
        return Err(Error::invalid(format!("expected a {kind} stage config, got {}", cfg.kind)));
    }
    cfg.validate(sampler.sched.steps())?;
    if img.width() != cfg.resolution || img.height() != cfg.resolution {
        return Err(Error::shape(
            img.shape(),
            format!("{0}x{0} stage resolution", cfg.resolution),
        ));
    }
    Ok(())
}

/// Re-noises `x_in` to `t_begin`, then runs the reverse chain down to `t_end`.
/// With `swap = Some((y, N))` each new state's `Φ_N` band is replaced by that
/// of `y` forward-sampled to the same step with fresh noise.
///
/// Sampler noise comes from `rng.derive(0)` and swap noise from
/// `rng.derive(1)`, so turning swapping off leaves the sampler draws unchanged.
pub fn truncated_loop(
    x_in: &Image,
    window: TimeWindow,
    den: &dyn Denoiser,
    condition: Option<&Image>,
    swap: Option<(&Image, FilterFactor)>,
    sampler: &Sampler,
    rng: &SeededRng,
) -> Result<LoopOutput> {
    let sched = sampler.sched;
    window.validate(Some(sched.steps()))?;
    check_condition(den, x_in, condition)?;
    if let Some((y, f)) = swap {
        x_in.ensure_same_shape(y)?;
        f.check_divides(y)?;
    }
    let mut noise = rng.derive(0);
    let mut swap_noise = rng.derive(1);
    let eps = noise.normal_like(x_in);
    let mut x = forward_sample(x_in, window.t_begin, &eps, sched)?;
    let mut estimate = x_in.clone();
    let mut evaluations = 0;
    for t in (window.t_end + 1..=window.t_begin).rev() {
        let eps_hat = den.predict_eps(&x, t, condition)?;
        evaluations += 1;
        estimate = predict_x0(&x, &eps_hat, t, sched)?;
        x = reverse_step_with_eps(&x, &eps_hat, t, sched, sampler.variance, &mut noise)?;
        if let Some((y, f)) = swap {
            let y_prev = forward_sample(y, t - 1, &swap_noise.normal_like(y), sched)?;
            x = freq_swap_with(&x, &y_prev, f, sampler.kernel)?;
        }
    }
    Ok(LoopOutput {
        state: x,
        estimate,
        evaluations,
    })
}

/// Untruncated reference chain: pure noise at `T`, then every reverse step
/// down to `x_0`, `T` denoiser calls. `like` fixes the shape.
pub fn full_chain(
    like: &Image,
    den: &dyn Denoiser,
    condition: Option<&Image>,
    sampler: &Sampler,
    rng: &SeededRng,
) -> Result<LoopOutput> {
    let sched = sampler.sched;
    check_condition(den, like, condition)?;
    let mut noise = rng.derive(0);
    let mut x = noise.normal_like(like);
    let mut estimate = x.clone();
    for t in (1..=sched.steps()).rev() {
        let eps_hat = den.predict_eps(&x, t, condition)?;
        estimate = predict_x0(&x, &eps_hat, t, sched)?;
        x = reverse_step_with_eps(&x, &eps_hat, t, sched, sampler.variance, &mut noise)?;
    }
    Ok(LoopOutput {
        state: x,
        estimate,
        evaluations: sched.steps(),
    })
}

/// Low-resolution startup: sample from `y` itself with its `Φ_{N⁰}` band
/// swapped in at every step.
pub fn lrs_stage(y: &Image, cfg: &StageConfig, den: &dyn Denoiser, sampler: &Sampler, rng: &SeededRng) -> Result<LoopOutput> {
    check_stage(cfg, StageKind::Lrs, y, sampler)?;
    let f = cfg.filter.expect("validated LRS has a filter");
    let swap = sampler.swap.then_some((y, f));
    truncated_loop(y, cfg.window, den, None, swap, sampler, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdrOutput {
    pub output: LoopOutput,
    pub chosen: FilterFactor,
    pub attempts: Vec<Attempt>,
    pub exhausted: bool,
    /// Denoiser calls over all attempts.
    pub evaluations: usize,
}

/// Adaptive degradation removal: tries candidates coarse to fine and keeps
/// the first whose `L_adr` against `y_up` is within the threshold, or the
/// best one, flagged exhausted.
///
/// Attempt `N` draws from `rng.derive(N)`, so its result does not depend on
/// which candidates ran before it.
pub fn adr_stage(
    y_up: &Image,
    x_in: &Image,
    cfg: &StageConfig,
    den: &dyn Denoiser,
    sampler: &Sampler,
    rng: &SeededRng,
) -> Result<AdrOutput> {
    check_stage(cfg, StageKind::Adr, x_in, sampler)?;
    x_in.ensure_same_shape(y_up)?;
    let threshold = cfg.threshold.expect("validated ADR has a threshold");
    let mut attempts = Vec::new();
    let mut evaluations = 0;
    let mut best: Option<(f64, FilterFactor, LoopOutput)> = None;
    for f in cfg.search_order() {
        let swap = sampler.swap.then_some((y_up, f));
        let out = truncated_loop(x_in, cfg.window, den, None, swap, sampler, &rng.derive(f.get() as u64))?;
        evaluations += out.evaluations;
        let l = compute_l_adr_with(&out.estimate, y_up, f, sampler.kernel)?;
        attempts.push(Attempt { n: f.get(), l_adr: l });
        if l <= threshold {
            return Ok(AdrOutput {
                output: out,
                chosen: f,
                attempts,
                exhausted: false,
                evaluations,
            });
        }
        if best.as_ref().is_none_or(|(bl, _, _)| l < *bl) {
            best = Some((l, f, out));
        }
    }
    let (_, chosen, output) = best.ok_or_else(|| Error::invalid("ADR stage has no filter candidates"))?;
    Ok(AdrOutput {
        output,
        chosen,
        attempts,
        exhausted: true,
        evaluations,
    })
}

/// Generative detail boost: conditional sampling from `x_in` re-noised to
/// `t_begin`, without swapping.
pub fn gdb_stage(
    x_in: &Image,
    condition: &Image,
    cfg: &StageConfig,
    den: &dyn Denoiser,
    sampler: &Sampler,
    rng: &SeededRng,
) -> Result<LoopOutput> {
    check_stage(cfg, StageKind::Gdb, x_in, sampler)?;
    let cond = den.is_conditional().then_some(condition);
    truncated_loop(x_in, cfg.window, den, cond, None, sampler, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoiser::{AnalyticGaussianDenoiser, ZeroDenoiser};
    use crate::image::ValueRange;

    fn ff(n: usize) -> FilterFactor {
        FilterFactor::new(n).unwrap()
    }

    #[test]
    fn l_adr_examples() {
        let y = Image::zeros(8, 8, 1, ValueRange::Model);
        let x = Image::filled(8, 8, 1, 0.5, ValueRange::Model);
        for n in [1, 2, 4, 8] {
            assert!((compute_l_adr(&x, &y, ff(n)).unwrap() - 0.25).abs() < 1e-15);
            assert_eq!(compute_l_adr(&x, &x, ff(n)).unwrap(), 0.0);
        }
        assert!(compute_l_adr(&x, &Image::zeros(4, 4, 1, ValueRange::Model), ff(1)).is_err());
    }

    #[test]
    fn lrs_with_identity_filter_returns_noised_input() {
        let sched = VarianceSchedule::rescaled_linear(200).unwrap();
        let y = SeededRng::new(1).normal_image(8, 8, 1);
        let cfg = StageConfig::lrs(8, TimeWindow::new(20, 10).unwrap(), 1, "zero").unwrap();
        let rng = SeededRng::new(9);
        let out = lrs_stage(&y, &cfg, &ZeroDenoiser::default(), &Sampler::new(&sched), &rng).unwrap();
        assert_eq!(out.evaluations, 10);
        // Swap noise stream, step by step: the last draw is y at t_end.
        let mut sn = rng.derive(1);
        let mut last = None;
        for t in (11..=20).rev() {
            last = Some(forward_sample(&y, t - 1, &sn.normal_like(&y), &sched).unwrap());
        }
        assert_eq!(out.state, last.unwrap());
    }

    #[test]
    fn pass_through_gives_zero_loss_and_coarsest_choice() {
        let sched = VarianceSchedule::rescaled_linear(200).unwrap();
        let y = SeededRng::new(2).normal_image(16, 16, 3).scale(0.3);
        let den = AnalyticGaussianDenoiser::new(y.clone(), 0.0, sched.clone()).unwrap();
        let cfg = StageConfig::adr(16, TimeWindow::new(30, 10).unwrap(), &[8, 4, 2, 1], 2e-3, "pt").unwrap();
        let x_in = SeededRng::new(3).normal_image(16, 16, 3);
        let out = adr_stage(&y, &x_in, &cfg, &den, &Sampler::new(&sched), &SeededRng::new(4)).unwrap();
        assert_eq!(out.chosen.get(), 8);
        assert!(!out.exhausted);
        assert_eq!(out.attempts.len(), 1);
        assert!(out.attempts[0].l_adr < 1e-24);
        assert_eq!(out.evaluations, 20);
    }

    #[test]
    fn exhausted_keeps_best() {
        let sched = VarianceSchedule::rescaled_linear(200).unwrap();
        let y = Image::filled(16, 16, 1, 0.9, ValueRange::Model);
        let mu = Image::filled(16, 16, 1, -0.9, ValueRange::Model);
        let den = AnalyticGaussianDenoiser::new(mu, 0.0, sched.clone()).unwrap();
        let cfg = StageConfig::adr(16, TimeWindow::new(30, 10).unwrap(), &[4, 2], 1e-6, "pt").unwrap();
        let x_in = y.clone();
        let out = adr_stage(&y, &x_in, &cfg, &den, &Sampler::new(&sched), &SeededRng::new(4)).unwrap();
        assert!(out.exhausted);
        assert_eq!(out.attempts.len(), 2);
        assert_eq!(out.evaluations, 40);
        let min = out.attempts.iter().map(|a| a.l_adr).fold(f64::INFINITY, f64::min);
        let kept = out.attempts.iter().find(|a| a.n == out.chosen.get()).unwrap();
        assert_eq!(kept.l_adr, min);
    }

    #[test]
    fn stage_kind_and_shape_checked() {
        let sched = VarianceSchedule::rescaled_linear(200).unwrap();
        let y = SeededRng::new(1).normal_image(8, 8, 1);
        let cfg = StageConfig::gdb(8, TimeWindow::new(5, 1).unwrap(), "zero");
        let s = Sampler::new(&sched);
        assert!(lrs_stage(&y, &cfg, &ZeroDenoiser::default(), &s, &SeededRng::new(0)).is_err());
        let cfg16 = StageConfig::gdb(16, TimeWindow::new(5, 1).unwrap(), "zero");
        assert!(gdb_stage(&y, &y, &cfg16, &ZeroDenoiser::default(), &s, &SeededRng::new(0)).is_err());
        let out = gdb_stage(&y, &y, &cfg, &ZeroDenoiser { conditional: true }, &s, &SeededRng::new(0)).unwrap();
        assert_eq!(out.evaluations, 4);
    }
}
