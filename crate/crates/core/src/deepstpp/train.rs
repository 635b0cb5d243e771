//! ELBO objective and mini-batch Adam training.
//!
//! The per-window objective is the negative evidence lower bound
//!
//! ```text
//! loss = -[log λ*(s*, t* | z) - ∫_{t_n}^{t*} λ*(τ|z) dτ] + κ·KL(q(z|H) ‖ N(0, I))
//! ```
//!
//! with `z` drawn once per window through the reparameterization trick and
//! `κ` the KL scale factor. The intensity at the target is clamped at 1e-30
//! before the log so a collapsing mixture cannot produce infinities; clamp
//! events are counted and surfaced on the training result.

use super::density::RepresentativePoints;
use super::model::{
    bind_tensors, decode_graph, encode_graph, sample_latent_graph, window_anchors, BoundModel,
    DeepStpp, DeepStppConfig, KernelVars, LatentVars, ModelError, Weights,
};
use crate::events::{SpatialRegion, SplitDataset, WindowExample};
use crate::ndiff::{AdamState, Tape, Tensor, Var};
use crate::rng::{streams, SplitRng};

/// Intensity floor under the log.
pub const INTENSITY_FLOOR: f64 = 1e-30;

/// Scalar pieces of one window's objective.
pub struct ElboParts {
    pub loss: Var,
    pub loglik: f64,
    pub kl: f64,
    pub clamped: bool,
}

/// Builds one window's negative-ELBO subgraph on the tape.
///
/// `eps = None` decodes from the posterior mean (deterministic evaluation);
/// `Some` applies the reparameterization sample.
pub fn elbo_graph(
    tape: &mut Tape,
    model: &BoundModel,
    window: &WindowExample,
    rep: &RepresentativePoints,
    eps: Option<&Tensor>,
    cfg: &DeepStppConfig,
) -> Result<ElboParts, ModelError> {
    debug_assert!(window.target.t >= window.t_n());
    let latent = encode_graph(tape, model, window, cfg)?;
    let z = match eps {
        Some(eps) => sample_latent_graph(tape, latent, eps)?,
        None => latent.mean,
    };
    let kernel = decode_graph(tape, model, z, window.input.len(), cfg)?;
    let (loglik, clamped) = target_loglik_graph(tape, kernel, window, rep)?;
    let kl = kl_graph(tape, latent)?;
    let neg_loglik = tape.neg(loglik);
    let weighted_kl = tape.scale(kl, cfg.kl_weight);
    let loss = tape.add(neg_loglik, weighted_kl)?;
    Ok(ElboParts {
        loss,
        loglik: tape.value(loglik).item(),
        kl: tape.value(kl).item(),
        clamped,
    })
}

/// `log λ*(s*, t*) - ∫_{t_n}^{t*} λ*(τ) dτ` as a tape subgraph over the
/// decoded kernel columns.
fn target_loglik_graph(
    tape: &mut Tape,
    kernel: KernelVars,
    window: &WindowExample,
    rep: &RepresentativePoints,
) -> Result<(Var, bool), ModelError> {
    let anchors = window_anchors(window, rep);
    let target = window.target;
    let t_n = window.t_n();
    let count = anchors.len();

    let mut dist = Vec::with_capacity(count);
    let mut dt_target = Vec::with_capacity(count);
    let mut gaps: Vec<(f64, f64)> = Vec::with_capacity(count);
    for a in &anchors {
        let dx = target.s[0] - a.s[0];
        let dy = target.s[1] - a.s[1];
        dist.push((dx * dx + dy * dy).sqrt());
        dt_target.push(target.t - a.t);
        gaps.push((t_n - a.t, target.t - a.t));
    }
    let dist_t = Tensor::matrix(1, count, dist);
    let dt_t = Tensor::matrix(1, count, dt_target);

    // Spatial kernel: (γ²/2π)·exp(-γ·d).
    let gd = tape.mul_const(kernel.bandwidth, &dist_t)?;
    let neg_gd = tape.neg(gd);
    let exp_gd = tape.exp(neg_gd);
    let gamma_sq = tape.mul(kernel.bandwidth, kernel.bandwidth)?;
    let ks_unscaled = tape.mul(gamma_sq, exp_gd)?;
    let ks = tape.scale(ks_unscaled, 1.0 / crate::kernels::TWO_PI);

    // Temporal kernel at the target: exp(-β·Δt), Δt ≥ 0.
    let bt = tape.mul_const(kernel.decay, &dt_t)?;
    let neg_bt = tape.neg(bt);
    let kt = tape.exp(neg_bt);

    let wks = tape.mul(kernel.weight, ks)?;
    let terms = tape.mul(wks, kt)?;
    let lambda = tape.sum_all(terms);
    let clamped = tape.value(lambda).item() <= INTENSITY_FLOOR;
    let safe_lambda = tape.clamp_min(lambda, INTENSITY_FLOOR);
    let log_lambda = tape.ln(safe_lambda)?;

    // Compensator: Σ wᵢ·∫_{aᵢ}^{bᵢ} e^{-βᵢ u} du with the series branch
    // handled inside the elementwise kernel.
    let integrals = tape.map_with(kernel.decay, |i, beta| {
        let (a, b) = gaps[i];
        super::density::decay_integral_with_derivative(beta, a, b)
    });
    let weighted = tape.mul(kernel.weight, integrals)?;
    let compensator = tape.sum_all(weighted);
    Ok((tape.sub(log_lambda, compensator)?, clamped))
}

/// Closed-form `KL(N(μ, diag σ²) ‖ N(0, I)) = ½ Σ (μ² + σ² - 1 - 2 log σ)`.
fn kl_graph(tape: &mut Tape, latent: LatentVars) -> Result<Var, ModelError> {
    let mu_sq = tape.mul(latent.mean, latent.mean)?;
    let sigma_sq_log = tape.scale(latent.log_std, 2.0);
    let sigma_sq = tape.exp(sigma_sq_log);
    let sum_terms = tape.add(mu_sq, sigma_sq)?;
    let shifted = tape.add_scalar(sum_terms, -1.0);
    let centered = tape.sub(shifted, sigma_sq_log)?;
    let total = tape.sum_all(centered);
    Ok(tape.scale(total, 0.5))
}

/// Per-epoch aggregates on the training trace.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_neg_elbo: f64,
}

#[derive(Debug)]
pub struct TrainResult {
    /// Model carrying the best-validation weights.
    pub model: DeepStpp,
    /// Weights after the final epoch.
    pub final_weights: Weights,
    pub trace: Vec<EpochStats>,
    pub best_epoch: usize,
    /// Number of windows whose target intensity hit the log floor.
    pub clamp_events: usize,
}

/// Mini-batch Adam over the negative ELBO. Deterministic given the config
/// seed: shuffling, representative points, and latent noise each draw from
/// their own named streams.
pub fn train(dataset: &SplitDataset, cfg: DeepStppConfig) -> Result<TrainResult, ModelError> {
    cfg.validate()?;
    if dataset.train.is_empty() {
        return Err(ModelError::EmptyTrainSplit);
    }
    let mut cfg = cfg;
    if cfg.max_events == 0 {
        cfg.max_events = dataset
            .all_windows()
            .map(|w| w.input.len())
            .max()
            .unwrap_or(1);
    }
    let rep_region = training_region(&dataset.train);
    let model = DeepStpp::init(cfg.clone(), rep_region)?;
    let cfg = model.cfg.clone();

    let names: Vec<String> = model
        .weights
        .entries()
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let mut params: Vec<Tensor> = model.weights.tensors().cloned().collect();
    let mut adam = AdamState::new(cfg.lr, &params);
    let root = SplitRng::new(cfg.seed);

    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut clamp_events = 0usize;
    let mut best: Option<(f64, Vec<Tensor>, usize)> = None;

    for epoch in 1..=cfg.epochs {
        if cfg.lr_decay != 1.0 && cfg.lr_decay_every > 0 && epoch > 1 {
            let drops = ((epoch - 1) / cfg.lr_decay_every) as i32;
            adam.lr = cfg.lr * cfg.lr_decay.powi(drops);
        }
        let mut order: Vec<usize> = (0..dataset.train.len()).collect();
        root.stream_indexed(streams::SHUFFLE, epoch as u64)
            .shuffle(&mut order);
        let mut rep_rng = root.stream_indexed(streams::REP_POINTS, epoch as u64);
        let mut latent_rng = root.stream_indexed(streams::LATENT, epoch as u64);

        let mut epoch_loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let bound = bind_tensors(&mut tape, &params, &cfg);
            let mut batch_losses = Vec::with_capacity(chunk.len());
            for &idx in chunk {
                let window = &dataset.train[idx];
                let rep = RepresentativePoints::sample(
                    cfg.rep_points,
                    &rep_region,
                    window.t_n(),
                    &mut rep_rng,
                );
                let eps = Tensor::matrix(
                    1,
                    cfg.d_z,
                    (0..cfg.d_z).map(|_| latent_rng.normal()).collect(),
                );
                let parts = elbo_graph(&mut tape, &bound, window, &rep, Some(&eps), &cfg)?;
                if parts.clamped {
                    clamp_events += 1;
                }
                epoch_loss_sum += tape.value(parts.loss).item();
                batch_losses.push(parts.loss);
            }
            let mut batch_loss = batch_losses[0];
            for &extra in &batch_losses[1..] {
                batch_loss = tape.add(batch_loss, extra)?;
            }
            let batch_loss = tape.scale(batch_loss, 1.0 / chunk.len() as f64);
            if !tape.value(batch_loss).item().is_finite() {
                return Err(ModelError::Diverged { epoch });
            }
            let grads = tape.backward(batch_loss)?;
            let mut grad_tensors: Vec<Tensor> = bound
                .leaves
                .iter()
                .zip(&params)
                .map(|(&leaf, p)| {
                    grads
                        .get(leaf)
                        .cloned()
                        .unwrap_or_else(|| Tensor::zeros(p.shape().to_vec()))
                })
                .collect();
            clip_global_norm(&mut grad_tensors, cfg.grad_clip);
            adam.step(&mut params, &grad_tensors)?;
        }

        let train_loss = epoch_loss_sum / dataset.train.len() as f64;
        let val_neg_elbo = if dataset.val.is_empty() {
            train_loss
        } else {
            validation_neg_elbo(&params, &dataset.val, &rep_region, &cfg, &root)?
        };
        if !val_neg_elbo.is_finite() {
            return Err(ModelError::Diverged { epoch });
        }
        trace.push(EpochStats {
            epoch,
            train_loss,
            val_neg_elbo,
        });
        let improved = best
            .as_ref()
            .map_or(true, |(best_val, _, _)| val_neg_elbo < *best_val);
        if improved {
            best = Some((val_neg_elbo, params.clone(), epoch));
        }
    }

    let (_, best_params, best_epoch) = best.expect("at least one epoch ran");
    let rebuild =
        |tensors: Vec<Tensor>| Weights::from_named(names.iter().cloned().zip(tensors).collect());
    Ok(TrainResult {
        model: DeepStpp {
            cfg,
            weights: rebuild(best_params),
            rep_region,
        },
        final_weights: rebuild(params),
        trace,
        best_epoch,
        clamp_events,
    })
}

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) {
    if max_norm <= 0.0 {
        return;
    }
    let norm = grads
        .iter()
        .map(|g| g.data().iter().map(|v| v * v).sum::<f64>())
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / norm;
        for g in grads {
            for v in g.data_mut() {
                *v *= scale;
            }
        }
    }
}

/// Deterministic validation objective: posterior-mean latent, fixed
/// representative points per window index.
pub fn validation_neg_elbo(
    params: &[Tensor],
    windows: &[WindowExample],
    rep_region: &SpatialRegion,
    cfg: &DeepStppConfig,
    root: &SplitRng,
) -> Result<f64, ModelError> {
    let mut total = 0.0;
    for (idx, window) in windows.iter().enumerate() {
        let mut rep_rng = root.stream_indexed("rep-points-val", idx as u64);
        let rep =
            RepresentativePoints::sample(cfg.rep_points, rep_region, window.t_n(), &mut rep_rng);
        let mut tape = Tape::new();
        let bound = bind_tensors(&mut tape, params, cfg);
        let parts = elbo_graph(&mut tape, &bound, window, &rep, None, cfg)?;
        total += tape.value(parts.loss).item();
    }
    Ok(total / windows.len() as f64)
}

/// Bounding box of the training windows' events (inputs and targets),
/// inflated by 10% per side.
pub fn training_region(windows: &[WindowExample]) -> SpatialRegion {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    let mut feed = |s: [f64; 2]| {
        for d in 0..2 {
            lo[d] = lo[d].min(s[d]);
            hi[d] = hi[d].max(s[d]);
        }
    };
    for w in windows {
        for e in w.input.events() {
            feed(e.s);
        }
        feed(w.target.s);
    }
    for d in 0..2 {
        if !(hi[d] - lo[d] > 1e-9) {
            lo[d] -= 0.5;
            hi[d] += 0.5;
        }
    }
    SpatialRegion::Rectangle { lo, hi }.inflated(0.1)
}
