//! Spatiotemporal point process (STPP) toolkit.
//!
//! An STPP describes events `(s, t)` on a planar spatial domain through a
//! conditional intensity `λ*(s, t)` given the event history. This crate
//! provides:
//!
//! - [`events`]: the event / sequence data model, JSONL ingestion, and
//!   windowed dataset splitting.
//! - [`kernels`]: Gaussian and exponential kernel primitives shared by the
//!   parametric and nonparametric models.
//! - [`simulate`]: exact samplers — Ogata modified thinning, generic STPP
//!   simulation, cluster-based spatiotemporal Hawkes simulation, and
//!   grid-discretized self-correcting simulation.
//! - [`parametric`]: spatiotemporal Hawkes (STH) and self-correcting (STSC)
//!   intensities, log-likelihoods, BFGS maximum-likelihood fitting, and
//!   expectation-based next-event prediction.
//! - [`ndiff`]: a minimal reverse-mode automatic differentiation substrate
//!   (dense f64 tensors, tape, attention layers, Adam).
//! - [`deepstpp`]: the kernel-intensity latent-variable model — transformer
//!   encoder, Gaussian latent, per-event kernel decoders, closed-form
//!   density, ELBO training, and prediction.
//! - [`eval`]: predictive log-likelihood decomposition, Hellinger distance
//!   between gridded densities, and temporal-intensity MAPE.

pub mod deepstpp;
pub mod eval;
pub mod events;
pub mod kernels;
pub mod ndiff;
pub mod optim;
pub mod parametric;
pub mod quad;
pub mod rng;
pub mod simulate;

pub use events::{Event, EventSequence, SpatialRegion, SplitDataset, SplitSpec, WindowExample};
pub use kernels::{exp_temporal, rbf_spatial, ExpDecay, Gauss2, Mat2};
pub use parametric::{SthpParams, StscParams};
pub use rng::SplitRng;
