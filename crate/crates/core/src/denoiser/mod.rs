//! ε-prediction models and the reverse transition that consumes them.

mod analytic;
mod patch;

pub use analytic::AnalyticGaussianDenoiser;
pub use patch::{
    evaluate_loss, fit_patch_denoiser, BucketLoss, PatchBucket, PatchDenoiserModel, PatchFitConfig, TimeBuckets,
    MODEL_FORMAT_VERSION,
};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::SeededRng;
use crate::schedule::{PosteriorVariance, VarianceSchedule};

/// Predicts the noise `ε` contained in `x_t`.
///
/// Implementations are deterministic; all sampling randomness lives in
/// [`reverse_step`].
pub trait Denoiser: Send + Sync {
    fn name(&self) -> &str;

    fn is_conditional(&self) -> bool {
        false
    }

    fn predict_eps(&self, x_t: &Image, t: usize, condition: Option<&Image>) -> Result<Image>;
}

/// Always predicts `ε̂ = 0`.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroDenoiser {
    pub conditional: bool,
}

impl Denoiser for ZeroDenoiser {
    fn name(&self) -> &str {
        "zero"
    }

    fn is_conditional(&self) -> bool {
        self.conditional
    }

    fn predict_eps(&self, x_t: &Image, _t: usize, _condition: Option<&Image>) -> Result<Image> {
        Ok(Image::zeros(x_t.width(), x_t.height(), x_t.channels(), x_t.range()))
    }
}

/// Checks a condition argument against the denoiser's contract.
pub fn check_condition(den: &dyn Denoiser, x_t: &Image, condition: Option<&Image>) -> Result<()> {
    match (den.is_conditional(), condition) {
        (true, None) => Err(Error::MissingCondition(den.name().to_string())),
        (true, Some(c)) => {
            if c.width() != x_t.width() || c.height() != x_t.height() {
                return Err(Error::shape(c.shape(), x_t.shape()));
            }
            Ok(())
        }
        _ => Ok(()),
    }
}

/// `x̂0 = (x_t - √(1-ᾱ_t) ε̂) / √ᾱ_t`.
pub fn predict_x0(x_t: &Image, eps: &Image, t: usize, sched: &VarianceSchedule) -> Result<Image> {
    sched.check_step(t)?;
    let ab = sched.alpha_bar(t);
    let (a, b) = (1.0 / ab.sqrt(), (1.0 - ab).sqrt() / ab.sqrt());
    x_t.axpby(a, eps, -b)
}

/// One reverse transition from a given prediction `ε̂`:
/// `μ = (x_t - (1-α_t)/√(1-ᾱ_t) ε̂)/√α_t`, plus `σ_t z` for `t > 1`.
pub fn reverse_step_with_eps(
    x_t: &Image,
    eps: &Image,
    t: usize,
    sched: &VarianceSchedule,
    variance: PosteriorVariance,
    rng: &mut SeededRng,
) -> Result<Image> {
    sched.check_step(t)?;
    x_t.ensure_same_shape(eps)?;
    let alpha = sched.alpha(t);
    let ab = sched.alpha_bar(t);
    let inv = 1.0 / alpha.sqrt();
    let coef = (1.0 - alpha) / (1.0 - ab).sqrt();
    let mut out = x_t.axpby(inv, eps, -coef * inv)?;
    if t > 1 {
        let sigma = sched.sigma(t, variance);
        if sigma > 0.0 {
            for v in out.data_mut() {
                *v += sigma * rng.normal();
            }
        }
    }
    Ok(out)
}

/// `x_{t-1}` given `x_t`; the final step `t = 1` is noiseless.
pub fn reverse_step(
    x_t: &Image,
    t: usize,
    den: &dyn Denoiser,
    condition: Option<&Image>,
    sched: &VarianceSchedule,
    variance: PosteriorVariance,
    rng: &mut SeededRng,
) -> Result<Image> {
    sched.check_step(t)?;
    check_condition(den, x_t, condition)?;
    let eps = den.predict_eps(x_t, t, condition)?;
    reverse_step_with_eps(x_t, &eps, t, sched, variance, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::ValueRange;

    #[test]
    fn zero_prediction_rescales() {
        let s = VarianceSchedule::rescaled_linear(100).unwrap();
        let x = SeededRng::new(1).normal_image(4, 4, 1);
        let eps = Image::zeros(4, 4, 1, ValueRange::Model);
        let out = reverse_step_with_eps(&x, &eps, 1, &s, PosteriorVariance::Beta, &mut SeededRng::new(0)).unwrap();
        let k = 1.0 / s.alpha(1).sqrt();
        for (o, v) in out.data().iter().zip(x.data()) {
            assert_eq!(*o, v * k);
        }
    }

    #[test]
    fn final_step_is_seed_independent() {
        let s = VarianceSchedule::rescaled_linear(100).unwrap();
        let x = SeededRng::new(1).normal_image(4, 4, 3);
        let den = ZeroDenoiser::default();
        let a = reverse_step(&x, 1, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(1)).unwrap();
        let b = reverse_step(&x, 1, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(2)).unwrap();
        assert_eq!(a, b);
        let c = reverse_step(&x, 2, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(1)).unwrap();
        let d = reverse_step(&x, 2, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(2)).unwrap();
        assert_ne!(c, d);
        assert!(reverse_step(&x, 0, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(2)).is_err());
        assert!(reverse_step(&x, 101, &den, None, &s, PosteriorVariance::Beta, &mut SeededRng::new(2)).is_err());
    }

    #[test]
    fn x0_estimate_matches_last_step() {
        let s = VarianceSchedule::rescaled_linear(100).unwrap();
        let x = SeededRng::new(3).normal_image(4, 4, 1);
        let eps = SeededRng::new(4).normal_image(4, 4, 1);
        let step = reverse_step_with_eps(&x, &eps, 1, &s, PosteriorVariance::Beta, &mut SeededRng::new(0)).unwrap();
        let x0 = predict_x0(&x, &eps, 1, &s).unwrap();
        assert!(step.max_abs_diff(&x0).unwrap() < 1e-12);
    }

    #[test]
    fn conditional_contract() {
        let x = Image::zeros(4, 4, 1, ValueRange::Model);
        let den = ZeroDenoiser { conditional: true };
        assert!(matches!(check_condition(&den, &x, None), Err(Error::MissingCondition(_))));
        let bad = Image::zeros(8, 8, 1, ValueRange::Model);
        assert!(check_condition(&den, &x, Some(&bad)).is_err());
        assert!(check_condition(&den, &x, Some(&x)).is_ok());
    }
}
