//! The kernel-intensity latent-variable model: a transformer encoder maps an
//! event window to a Gaussian latent, three feed-forward decoders emit
//! per-anchor kernel parameters `(w, γ, β)`, and the resulting mixture
//! intensity has a closed-form compensator and conditional density. Training
//! maximizes the evidence lower bound with amortized variational inference.

pub mod density;
pub mod model;
pub mod predict;
pub mod train;

pub use density::{Anchor, KernelHazard, KernelParams, RepresentativePoints};
pub use model::{DeepStpp, DeepStppConfig, LatentDist, ModelError, Weights};
pub use predict::{predict_event, LatentMode, Prediction};
pub use train::{train, EpochStats, TrainResult};
