//! Next-event prediction from decoded kernel parameters.
//!
//! The expected time is the 1D integral `∫ t·λ*(t)·exp(-∫λ*) dt` over the
//! closed-form temporal marginal; the expected location is the kernel-
//! weighted anchor mean at the predicted time, which is exact for the
//! normalized symmetric spatial kernels.

use super::density::KernelHazard;
use super::model::{DeepStpp, ModelError};
use crate::events::WindowExample;
use crate::parametric::predict_next_time;
use crate::rng::SplitRng;

/// Predicted `(time, location)` of the next event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub t: f64,
    pub s: [f64; 2],
}

/// Latent handling for prediction.
pub enum LatentMode<'a> {
    /// Decode from the posterior mean (default).
    Mean,
    /// Average kernel parameters over this many reparameterized draws.
    Sampled { rng: &'a mut SplitRng, count: usize },
}

pub fn predict_event(
    model: &DeepStpp,
    window: &WindowExample,
    rep_rng: &mut SplitRng,
    latent: LatentMode<'_>,
    tail_tol: f64,
) -> Result<Prediction, ModelError> {
    let kp = match latent {
        LatentMode::Mean => model.kernel_params(window, rep_rng)?,
        LatentMode::Sampled { rng, count } => {
            model.kernel_params_sampled(window, rep_rng, rng, count)?
        }
    };
    let t_n = window.t_n();
    let hazard = KernelHazard { params: &kp, t_n };
    let t_hat = predict_next_time(&hazard, tail_tol)?;
    let s_hat = kp
        .location_mean(t_hat)
        .ok_or(ModelError::DegeneratePrediction)?;
    Ok(Prediction { t: t_hat, s: s_hat })
}
