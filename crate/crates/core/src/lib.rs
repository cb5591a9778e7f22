//! Truncated multi-resolution diffusion restoration at desk scale.
//!
//! Images flow from [`degrade`] through the three-stage [`pipeline`], whose
//! stages sample with a [`denoiser`] over truncated windows of a
//! [`schedule`], conditioning on the input through the [`filters`] low band.

pub mod degrade;
pub mod denoiser;
pub mod error;
pub mod filters;
pub mod image;
pub mod metrics;
pub mod numeric;
pub mod pipeline;
pub mod rng;
pub mod schedule;
pub mod toy;

pub use error::{Error, Result};
pub use image::{Image, Shape, ValueRange};
pub use rng::SeededRng;
