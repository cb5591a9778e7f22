use crate::error::{Error, Result};
use crate::image::Image;
use crate::schedule::VarianceSchedule;

use super::Denoiser;

/// Bayes-optimal ε-predictor for data drawn from `N(μ, σ² I)`.
#[derive(Debug, Clone)]
pub struct AnalyticGaussianDenoiser {
    mu: Image,
    sigma2: f64,
    sched: VarianceSchedule,
}

impl AnalyticGaussianDenoiser {
    pub fn new(mu: Image, sigma2: f64, sched: VarianceSchedule) -> Result<Self> {
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(Error::invalid(format!("sigma2 must be finite and >= 0, got {sigma2}")));
        }
        Ok(Self { mu, sigma2, sched })
    }

    pub fn mu(&self) -> &Image {
        &self.mu
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// `E[x0 | x_t] = (√ᾱ σ² x_t + (1-ᾱ) μ) / (ᾱ σ² + 1 - ᾱ)`.
    pub fn posterior_mean(&self, x_t: &Image, t: usize) -> Result<Image> {
        self.sched.check_step(t)?;
        x_t.ensure_same_shape(&self.mu)?;
        let ab = self.sched.alpha_bar(t);
        let denom = ab * self.sigma2 + 1.0 - ab;
        let a = ab.sqrt() * self.sigma2 / denom;
        let b = (1.0 - ab) / denom;
        Ok(x_t.axpby(a, &self.mu, b)?.with_range(x_t.range()))
    }
}

impl Denoiser for AnalyticGaussianDenoiser {
    fn name(&self) -> &str {
        "analytic"
    }

    fn predict_eps(&self, x_t: &Image, t: usize, _condition: Option<&Image>) -> Result<Image> {
        // Algebraically equal to `(x_t - √ᾱ E[x0|x_t]) / √(1-ᾱ)`, without the cancellation.
        self.sched.check_step(t)?;
        x_t.ensure_same_shape(&self.mu)?;
        let ab = self.sched.alpha_bar(t);
        let k = (1.0 - ab).sqrt() / (ab * self.sigma2 + 1.0 - ab);
        let m = ab.sqrt();
        x_t.zip_map(&self.mu, |x, mu| k * (x - m * mu))
    }
}
