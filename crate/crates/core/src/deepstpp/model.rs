//! Model configuration, weight store, and the encoder/decoder computation
//! graphs.
//!
//! The encoder embeds each `(t, x, y)` event through a linear map, adds a
//! sinusoidal positional encoding over normalized event times, runs a
//! pre-norm transformer stack, mean-pools over events, and projects to the
//! mean and log-std of a single Gaussian latent. Three separate feed-forward
//! decoders map a latent sample to the per-anchor kernel parameters
//! `(w, γ, β)` for the history events and the representative points.

use super::density::{Anchor, KernelParams, RepresentativePoints};
use crate::events::{SpatialRegion, WindowExample};
use crate::ndiff::checkpoint::{self, CheckpointError};
use crate::ndiff::nn::{
    attention_encoder, sinusoidal_positions, xavier_init, EncoderLayerVars, LinearVars,
};
use crate::ndiff::{NdiffError, Tape, Tensor, Var};
use crate::rng::{streams, SplitRng};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("window must hold at least one event")]
    EmptyWindow,
    #[error("window has {len} events but the decoders were sized for {max}")]
    WindowTooLong { len: usize, max: usize },
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("train split is empty")]
    EmptyTrainSplit,
    #[error("all kernel weights vanish at the predicted time")]
    DegeneratePrediction,
    #[error(transparent)]
    Ndiff(#[from] NdiffError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("prediction failed: {0}")]
    Predict(#[from] crate::parametric::ParametricError),
    #[error("checkpoint metadata missing or malformed: {0}")]
    BadCheckpointMeta(String),
}

/// Hyperparameters. Defaults follow the published training setup, with the
/// decoder output budget (`max_events`) sized at training time from the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DeepStppConfig {
    pub d_model: usize,
    pub layers: usize,
    pub heads: usize,
    pub d_hidden: usize,
    pub d_z: usize,
    pub decoder_hidden: usize,
    /// Hidden layers per decoder (the published description wavers between
    /// two hidden layers and a four-layer network; two is the default).
    pub decoder_depth: usize,
    /// Number of representative points J.
    pub rep_points: usize,
    /// Decoder output slots reserved for history events. Zero means "size
    /// from the training data".
    pub max_events: usize,
    pub kl_weight: f64,
    pub lr: f64,
    /// Multiply the learning rate by this factor every `lr_decay_every`
    /// epochs (1.0 disables the schedule).
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    /// Global-norm gradient clip per batch (0 disables).
    pub grad_clip: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub positional_scale: f64,
}

impl Default for DeepStppConfig {
    fn default() -> Self {
        Self {
            d_model: 128,
            layers: 3,
            heads: 2,
            d_hidden: 128,
            d_z: 128,
            decoder_hidden: 128,
            decoder_depth: 2,
            rep_points: 50,
            max_events: 0,
            kl_weight: 1e-3,
            lr: 0.01,
            lr_decay: 1.0,
            lr_decay_every: 0,
            grad_clip: 100.0,
            epochs: 200,
            batch_size: 128,
            seed: 0,
            positional_scale: 100.0,
        }
    }
}

impl DeepStppConfig {
    /// A desk-scale configuration for tests and smoke runs.
    pub fn small() -> Self {
        Self {
            d_model: 32,
            layers: 3,
            heads: 2,
            d_hidden: 64,
            d_z: 16,
            decoder_hidden: 64,
            rep_points: 20,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("d_model", self.d_model),
            ("layers", self.layers),
            ("heads", self.heads),
            ("d_hidden", self.d_hidden),
            ("d_z", self.d_z),
            ("decoder_hidden", self.decoder_hidden),
            ("decoder_depth", self.decoder_depth),
            ("rep_points", self.rep_points),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::BadConfig(format!("{name} must be positive")));
            }
        }
        if self.d_model % 2 != 0 {
            return Err(ModelError::BadConfig("d_model must be even".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(ModelError::BadConfig("heads must divide d_model".into()));
        }
        if !(self.lr >= 0.0) || !(self.kl_weight >= 0.0) || !(self.positional_scale > 0.0) {
            return Err(ModelError::BadConfig(
                "rates and scales must be non-negative".into(),
            ));
        }
        Ok(())
    }

    fn total_anchors(&self) -> usize {
        self.max_events + self.rep_points
    }
}

enum InitKind {
    Xavier { fan_in: usize, fan_out: usize },
    Zeros,
    Ones,
}

/// Canonical weight order shared by initialization and graph binding.
fn weight_plan(cfg: &DeepStppConfig) -> Vec<(String, Vec<usize>, InitKind)> {
    let d = cfg.d_model;
    let mut plan = Vec::new();
    let linear =
        |plan: &mut Vec<(String, Vec<usize>, InitKind)>, name: String, rows: usize, cols: usize| {
            plan.push((
                format!("{name}.w"),
                vec![rows, cols],
                InitKind::Xavier {
                    fan_in: rows,
                    fan_out: cols,
                },
            ));
            plan.push((format!("{name}.b"), vec![cols], InitKind::Zeros));
        };
    linear(&mut plan, "embed".into(), 3, d);
    for layer in 0..cfg.layers {
        plan.push((format!("enc{layer}.ln1.g"), vec![d], InitKind::Ones));
        plan.push((format!("enc{layer}.ln1.b"), vec![d], InitKind::Zeros));
        for proj in ["q", "k", "v", "o"] {
            linear(&mut plan, format!("enc{layer}.{proj}"), d, d);
        }
        plan.push((format!("enc{layer}.ln2.g"), vec![d], InitKind::Ones));
        plan.push((format!("enc{layer}.ln2.b"), vec![d], InitKind::Zeros));
        linear(&mut plan, format!("enc{layer}.ff1"), d, cfg.d_hidden);
        linear(&mut plan, format!("enc{layer}.ff2"), cfg.d_hidden, d);
    }
    linear(&mut plan, "head.mean".into(), d, cfg.d_z);
    // The log-std head starts at zero so the posterior opens at unit
    // variance; a random head can emit huge stds whose samples overflow the
    // decoders before the first update.
    plan.push(("head.logstd.w".into(), vec![d, cfg.d_z], InitKind::Zeros));
    plan.push(("head.logstd.b".into(), vec![cfg.d_z], InitKind::Zeros));
    for dec in ["w", "gamma", "beta"] {
        let mut width = cfg.d_z;
        for depth in 0..cfg.decoder_depth {
            linear(
                &mut plan,
                format!("dec.{dec}.h{depth}"),
                width,
                cfg.decoder_hidden,
            );
            width = cfg.decoder_hidden;
        }
        // Zero output layers start every anchor at the neutral kernel
        // (w = γ = softplus(0), β = 0); a random β of even modest size is
        // amplified by exp(-β·Δt) into enormous initial compensators.
        plan.push((
            format!("dec.{dec}.out.w"),
            vec![width, cfg.total_anchors()],
            InitKind::Zeros,
        ));
        plan.push((
            format!("dec.{dec}.out.b"),
            vec![cfg.total_anchors()],
            InitKind::Zeros,
        ));
    }
    plan
}

/// Ordered named tensors; the order is the canonical plan order, which the
/// optimizer and checkpoints rely on.
#[derive(Debug, Clone)]
pub struct Weights {
    entries: Vec<(String, Tensor)>,
    index: HashMap<String, usize>,
}

impl Weights {
    pub fn init(cfg: &DeepStppConfig, rng: &mut SplitRng) -> Self {
        let entries: Vec<(String, Tensor)> = weight_plan(cfg)
            .into_iter()
            .map(|(name, shape, kind)| {
                let tensor = match kind {
                    InitKind::Xavier { fan_in, fan_out } => xavier_init(fan_in, fan_out, rng),
                    InitKind::Zeros => Tensor::zeros(shape),
                    InitKind::Ones => Tensor::filled(shape, 1.0),
                };
                (name, tensor)
            })
            .collect();
        Self::from_named(entries)
    }

    /// Rebuilds the store from named tensors in canonical order.
    pub fn from_named(entries: Vec<(String, Tensor)>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, (name, _))| (name.clone(), i))
            .collect();
        Self { entries, index }
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self.entries[self.index[name]].1
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Weight tensors bound to a tape as gradient leaves, plus the structured
/// views the graph builders consume.
pub struct BoundModel {
    /// Leaves in canonical plan order, for gradient extraction.
    pub leaves: Vec<Var>,
    embed: LinearVars,
    encoder_layers: Vec<EncoderLayerVars>,
    head_mean: LinearVars,
    head_logstd: LinearVars,
    decoders: [DecoderVars; 3],
}

struct DecoderVars {
    hidden: Vec<LinearVars>,
    out: LinearVars,
}

struct Cursor<'a> {
    vars: &'a [Var],
    pos: usize,
}

impl Cursor<'_> {
    fn next(&mut self) -> Var {
        let v = self.vars[self.pos];
        self.pos += 1;
        v
    }

    fn linear(&mut self) -> LinearVars {
        LinearVars {
            weight: self.next(),
            bias: self.next(),
        }
    }
}

/// Inserts every weight tensor into the tape as a gradient leaf.
pub fn bind(tape: &mut Tape, weights: &Weights, cfg: &DeepStppConfig) -> BoundModel {
    bind_tensors(tape, weights.tensors(), cfg)
}

/// As [`bind`], from raw tensors in canonical plan order.
pub fn bind_tensors<'a>(
    tape: &mut Tape,
    tensors: impl IntoIterator<Item = &'a Tensor>,
    cfg: &DeepStppConfig,
) -> BoundModel {
    let leaves: Vec<Var> = tensors.into_iter().map(|t| tape.leaf(t.clone())).collect();
    let mut cur = Cursor {
        vars: &leaves,
        pos: 0,
    };
    let embed = cur.linear();
    let mut encoder_layers = Vec::with_capacity(cfg.layers);
    for _ in 0..cfg.layers {
        let ln1_gain = cur.next();
        let ln1_bias = cur.next();
        let query = cur.linear();
        let key = cur.linear();
        let value = cur.linear();
        let output = cur.linear();
        let ln2_gain = cur.next();
        let ln2_bias = cur.next();
        let ff1 = cur.linear();
        let ff2 = cur.linear();
        encoder_layers.push(EncoderLayerVars {
            ln1_gain,
            ln1_bias,
            query,
            key,
            value,
            output,
            ln2_gain,
            ln2_bias,
            ff1,
            ff2,
        });
    }
    let head_mean = cur.linear();
    let head_logstd = cur.linear();
    let decoders = [0, 1, 2].map(|_| DecoderVars {
        hidden: (0..cfg.decoder_depth).map(|_| cur.linear()).collect(),
        out: cur.linear(),
    });
    debug_assert_eq!(cur.pos, leaves.len());
    BoundModel {
        leaves,
        embed,
        encoder_layers,
        head_mean,
        head_logstd,
        decoders,
    }
}

/// Latent Gaussian as tape variables.
#[derive(Clone, Copy)]
pub struct LatentVars {
    pub mean: Var,
    pub log_std: Var,
}

/// Latent Gaussian as plain values.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDist {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

/// Encoder graph: window events to the latent distribution.
pub fn encode_graph(
    tape: &mut Tape,
    model: &BoundModel,
    window: &WindowExample,
    cfg: &DeepStppConfig,
) -> Result<LatentVars, ModelError> {
    let events = window.input.events();
    if events.is_empty() {
        return Err(ModelError::EmptyWindow);
    }
    let n = events.len();
    // Each event embeds as (inter-event gap, x, y): the gap carries the
    // window's absolute timescale, while order enters through the
    // positional encoding over normalized times.
    let mut features = Vec::with_capacity(n * 3);
    let mut prev_t = events[0].t;
    for e in events {
        features.extend_from_slice(&[e.t - prev_t, e.s[0], e.s[1]]);
        prev_t = e.t;
    }
    let x = tape.constant(Tensor::matrix(n, 3, features));
    let embedded = model.embed.apply(tape, x)?;
    let times: Vec<f64> = events.iter().map(|e| e.t).collect();
    let pe = tape.constant(sinusoidal_positions(
        &times,
        cfg.d_model,
        cfg.positional_scale,
    ));
    let with_positions = tape.add(embedded, pe)?;
    let encoded = attention_encoder(tape, with_positions, &model.encoder_layers, cfg.heads)?;
    let pooled = tape.mean_rows(encoded)?;
    let log_std_raw = model.head_logstd.apply(tape, pooled)?;
    let log_std_floor = tape.clamp_min(log_std_raw, LOG_STD_RANGE.0);
    Ok(LatentVars {
        mean: model.head_mean.apply(tape, pooled)?,
        log_std: tape.clamp_max(log_std_floor, LOG_STD_RANGE.1),
    })
}

/// Reparameterized sample `z = mean + exp(log_std) ⊙ ε`; gradients flow to
/// both distribution parameters.
pub fn sample_latent_graph(
    tape: &mut Tape,
    latent: LatentVars,
    eps: &Tensor,
) -> Result<Var, ModelError> {
    let std = tape.exp(latent.log_std);
    let scaled = tape.mul_const(std, eps)?;
    Ok(tape.add(latent.mean, scaled)?)
}

/// Decoded kernel parameter columns for `n` history events plus the
/// representative points.
#[derive(Clone, Copy)]
pub struct KernelVars {
    pub weight: Var,
    pub bandwidth: Var,
    pub decay: Var,
}

/// Bandwidths are clamped here after their softplus.
pub const GAMMA_FLOOR: f64 = 1e-6;

/// Posterior log-std is clamped to this range to keep reparameterized
/// samples inside the decoders' numeric envelope.
pub const LOG_STD_RANGE: (f64, f64) = (-8.0, 4.0);

/// Decoder graph: latent sample to per-anchor parameter rows `[1, n + J]`.
///
/// Each decoder reserves `max_events` output slots for history anchors and
/// `rep_points` slots for representative points. Event slots are
/// right-aligned so the most recent event always reads the same output unit
/// regardless of the window length.
pub fn decode_graph(
    tape: &mut Tape,
    model: &BoundModel,
    z: Var,
    n: usize,
    cfg: &DeepStppConfig,
) -> Result<KernelVars, ModelError> {
    if n == 0 {
        return Err(ModelError::EmptyWindow);
    }
    if n > cfg.max_events {
        return Err(ModelError::WindowTooLong {
            len: n,
            max: cfg.max_events,
        });
    }
    let mut heads = [Var(0); 3];
    for (slot, decoder) in heads.iter_mut().zip(&model.decoders) {
        let mut h = z;
        for lin in &decoder.hidden {
            let pre = lin.apply(tape, h)?;
            h = tape.softplus(pre);
        }
        let full = decoder.out.apply(tape, h)?;
        let event_slots = tape.slice_cols(full, cfg.max_events - n, cfg.max_events)?;
        let rep_slots = tape.slice_cols(full, cfg.max_events, cfg.max_events + cfg.rep_points)?;
        *slot = tape.concat_cols(&[event_slots, rep_slots])?;
    }
    let weight = tape.softplus(heads[0]);
    let gamma_raw = tape.softplus(heads[1]);
    let bandwidth = tape.clamp_min(gamma_raw, GAMMA_FLOOR);
    Ok(KernelVars {
        weight,
        bandwidth,
        decay: heads[2],
    })
}

/// Anchor list for a window: its events followed by representative points.
pub fn window_anchors(window: &WindowExample, rep: &RepresentativePoints) -> Vec<Anchor> {
    let mut anchors: Vec<Anchor> = window
        .input
        .events()
        .iter()
        .map(|e| Anchor { s: e.s, t: e.t })
        .collect();
    anchors.extend(rep.locations.iter().map(|&s| Anchor { s, t: rep.time }));
    anchors
}

/// Reads decoded kernel parameters out of the tape as plain values.
pub fn kernel_params_value(tape: &Tape, kernel: KernelVars, anchors: Vec<Anchor>) -> KernelParams {
    KernelParams::new(
        anchors,
        tape.value(kernel.weight).data().to_vec(),
        tape.value(kernel.bandwidth).data().to_vec(),
        tape.value(kernel.decay).data().to_vec(),
    )
}

/// A trained (or freshly initialized) model: configuration, weights, and the
/// sampling region for representative points.
#[derive(Debug, Clone)]
pub struct DeepStpp {
    pub cfg: DeepStppConfig,
    pub weights: Weights,
    pub rep_region: SpatialRegion,
}

impl DeepStpp {
    /// Fresh model with Xavier-initialized weights drawn from the seed's
    /// init stream.
    pub fn init(cfg: DeepStppConfig, rep_region: SpatialRegion) -> Result<Self, ModelError> {
        cfg.validate()?;
        if cfg.max_events == 0 {
            return Err(ModelError::BadConfig(
                "max_events must be set before initializing weights".into(),
            ));
        }
        let mut rng = SplitRng::new(cfg.seed).stream(streams::INIT);
        let weights = Weights::init(&cfg, &mut rng);
        Ok(Self {
            cfg,
            weights,
            rep_region,
        })
    }

    /// Posterior latent distribution for a window (no sampling).
    pub fn encode(&self, window: &WindowExample) -> Result<LatentDist, ModelError> {
        let mut tape = Tape::new();
        let model = bind(&mut tape, &self.weights, &self.cfg);
        let latent = encode_graph(&mut tape, &model, window, &self.cfg)?;
        Ok(LatentDist {
            mean: tape.value(latent.mean).data().to_vec(),
            log_std: tape.value(latent.log_std).data().to_vec(),
        })
    }

    /// Kernel parameters decoded from the posterior mean, with fresh
    /// representative points from `rep_rng`.
    pub fn kernel_params(
        &self,
        window: &WindowExample,
        rep_rng: &mut SplitRng,
    ) -> Result<KernelParams, ModelError> {
        let rep = RepresentativePoints::sample(
            self.cfg.rep_points,
            &self.rep_region,
            window.t_n(),
            rep_rng,
        );
        let mut tape = Tape::new();
        let model = bind(&mut tape, &self.weights, &self.cfg);
        let latent = encode_graph(&mut tape, &model, window, &self.cfg)?;
        let kernel = decode_graph(
            &mut tape,
            &model,
            latent.mean,
            window.input.len(),
            &self.cfg,
        )?;
        Ok(kernel_params_value(
            &tape,
            kernel,
            window_anchors(window, &rep),
        ))
    }

    /// Kernel parameters averaged over latent samples.
    pub fn kernel_params_sampled(
        &self,
        window: &WindowExample,
        rep_rng: &mut SplitRng,
        latent_rng: &mut SplitRng,
        n_samples: usize,
    ) -> Result<KernelParams, ModelError> {
        assert!(n_samples >= 1);
        let rep = RepresentativePoints::sample(
            self.cfg.rep_points,
            &self.rep_region,
            window.t_n(),
            rep_rng,
        );
        let anchors = window_anchors(window, &rep);
        let n_anchors = anchors.len();
        let mut acc: Option<KernelParams> = None;
        for _ in 0..n_samples {
            let mut tape = Tape::new();
            let model = bind(&mut tape, &self.weights, &self.cfg);
            let latent = encode_graph(&mut tape, &model, window, &self.cfg)?;
            let eps = Tensor::matrix(
                1,
                self.cfg.d_z,
                (0..self.cfg.d_z).map(|_| latent_rng.normal()).collect(),
            );
            let z = sample_latent_graph(&mut tape, latent, &eps)?;
            let kernel = decode_graph(&mut tape, &model, z, window.input.len(), &self.cfg)?;
            let kp = kernel_params_value(&tape, kernel, anchors.clone());
            match &mut acc {
                None => acc = Some(kp),
                Some(sum) => {
                    for i in 0..n_anchors {
                        sum.weight[i] += kp.weight[i];
                        sum.bandwidth[i] += kp.bandwidth[i];
                        sum.decay[i] += kp.decay[i];
                    }
                }
            }
        }
        let mut kp = acc.expect("n_samples >= 1");
        let scale = 1.0 / n_samples as f64;
        for i in 0..n_anchors {
            kp.weight[i] *= scale;
            kp.bandwidth[i] *= scale;
            kp.decay[i] *= scale;
        }
        Ok(kp)
    }

    /// Writes `<stem>.bin` / `<stem>.json` with config and region metadata.
    pub fn save(&self, stem: &Path) -> Result<(), ModelError> {
        let meta = serde_json::json!({
            "config": self.cfg,
            "rep_region": self.rep_region,
        });
        checkpoint::save(stem, self.weights.entries(), meta)?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Self, ModelError> {
        let (entries, meta) = checkpoint::load(stem)?;
        let cfg: DeepStppConfig = serde_json::from_value(meta["config"].clone())
            .map_err(|e| ModelError::BadCheckpointMeta(e.to_string()))?;
        let rep_region: SpatialRegion = serde_json::from_value(meta["rep_region"].clone())
            .map_err(|e| ModelError::BadCheckpointMeta(e.to_string()))?;
        Ok(Self {
            cfg,
            weights: Weights::from_named(entries),
            rep_region,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{Event, EventSequence};

    fn toy_window(n: usize) -> WindowExample {
        let mut rng = SplitRng::new(13);
        let mut t = 0.0;
        let events: Vec<Event> = (0..n)
            .map(|_| {
                t += rng.exponential(1.0);
                Event::new(t, rng.uniform_in(-1.0, 1.0), rng.uniform_in(-1.0, 1.0))
            })
            .collect();
        let target = Event::new(t + 0.7, 0.2, -0.1);
        WindowExample {
            input: EventSequence::new(events, t).unwrap(),
            target,
        }
    }

    fn toy_cfg() -> DeepStppConfig {
        DeepStppConfig {
            d_model: 8,
            layers: 1,
            heads: 2,
            d_hidden: 8,
            d_z: 4,
            decoder_hidden: 8,
            decoder_depth: 2,
            rep_points: 3,
            max_events: 12,
            seed: 5,
            ..DeepStppConfig::default()
        }
    }

    #[test]
    fn encode_is_deterministic_and_finite() {
        let model = DeepStpp::init(toy_cfg(), SpatialRegion::unit_square()).unwrap();
        let window = toy_window(30.min(12));
        let a = model.encode(&window).unwrap();
        let b = model.encode(&window).unwrap();
        assert_eq!(a, b);
        assert!(a.mean.iter().all(|v| v.is_finite()));
        assert!(a.log_std.iter().all(|v| v.is_finite()));
        assert_eq!(a.mean.len(), 4);
    }

    #[test]
    fn encode_rejects_empty_window() {
        let model = DeepStpp::init(toy_cfg(), SpatialRegion::unit_square()).unwrap();
        let window = WindowExample {
            input: EventSequence::new(vec![], 1.0).unwrap(),
            target: Event::new(2.0, 0.0, 0.0),
        };
        assert!(matches!(
            model.encode(&window),
            Err(ModelError::EmptyWindow)
        ));
    }

    #[test]
    fn encoder_is_locally_smooth_in_event_locations() {
        let model = DeepStpp::init(toy_cfg(), SpatialRegion::unit_square()).unwrap();
        let window = toy_window(6);
        let base = model.encode(&window).unwrap();
        let mut nudged_events = window.input.events().to_vec();
        nudged_events[2].s[0] += 1e-6;
        let nudged = WindowExample {
            input: EventSequence::new(nudged_events, window.input.t_end()).unwrap(),
            target: window.target,
        };
        let out = model.encode(&nudged).unwrap();
        let delta = base
            .mean
            .iter()
            .zip(&out.mean)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(delta < 1e-3, "perturbation amplified to {delta}");
        assert!(delta > 0.0, "encoder ignored the location perturbation");
    }

    #[test]
    fn decoded_parameters_respect_ranges_and_length() {
        let cfg = toy_cfg();
        let model = DeepStpp::init(cfg.clone(), SpatialRegion::unit_square()).unwrap();
        let window = toy_window(7);
        let mut rep_rng = SplitRng::new(8).stream(streams::REP_POINTS);
        let kp = model.kernel_params(&window, &mut rep_rng).unwrap();
        assert_eq!(kp.len(), 7 + cfg.rep_points);
        for i in 0..kp.len() {
            assert!(kp.weight[i] >= 0.0);
            assert!(kp.bandwidth[i] >= GAMMA_FLOOR);
            assert!(kp.decay[i].is_finite());
        }
        // Representative-point anchors all sit at t_n.
        for a in &kp.anchors[7..] {
            assert_eq!(a.t, window.t_n());
        }
    }

    #[test]
    fn window_longer_than_budget_is_rejected() {
        let model = DeepStpp::init(toy_cfg(), SpatialRegion::unit_square()).unwrap();
        let window = toy_window(13);
        let mut rng = SplitRng::new(8);
        assert!(matches!(
            model.kernel_params(&window, &mut rng),
            Err(ModelError::WindowTooLong { len: 13, max: 12 })
        ));
    }

    #[test]
    fn latent_sampling_statistics_match_distribution() {
        // Sample mean over many draws approaches the posterior mean within
        // CLT error, and collapses exactly to it as std → 0.
        let mut tape = Tape::new();
        let mean_t = Tensor::matrix(1, 3, vec![0.5, -1.0, 2.0]);
        // A tiny first std stands in for the std → 0 collapse limit.
        let log_std_t = Tensor::matrix(1, 3, vec![(1e-12f64).ln(), 0.2f64.ln(), 1.0f64.ln()]);
        let mean = tape.leaf(mean_t);
        let log_std = tape.leaf(log_std_t);
        let latent = LatentVars { mean, log_std };
        let mut rng = SplitRng::new(17);
        let draws = 100_000;
        let mut sums = [0.0; 3];
        for _ in 0..draws {
            let eps = Tensor::matrix(1, 3, (0..3).map(|_| rng.normal()).collect());
            let mut t2 = Tape::new();
            let m = t2.leaf(tape.value(latent.mean).clone());
            let ls = t2.leaf(tape.value(latent.log_std).clone());
            let z = sample_latent_graph(
                &mut t2,
                LatentVars {
                    mean: m,
                    log_std: ls,
                },
                &eps,
            )
            .unwrap();
            for (acc, v) in sums.iter_mut().zip(t2.value(z).data()) {
                *acc += v;
            }
        }
        let stds = [1e-12, 0.2, 1.0];
        let means = [0.5, -1.0, 2.0];
        for i in 0..3 {
            let sample_mean = sums[i] / draws as f64;
            let tol = 4.0 * stds[i] / (draws as f64).sqrt();
            assert!(
                (sample_mean - means[i]).abs() <= tol.max(1e-9),
                "coordinate {i}: {sample_mean} vs {} ± {tol}",
                means[i]
            );
        }
    }

    #[test]
    fn reparameterization_passes_unit_gradient_to_mean() {
        let mut tape = Tape::new();
        let mean = tape.leaf(Tensor::matrix(1, 2, vec![0.3, -0.4]));
        let log_std = tape.leaf(Tensor::matrix(1, 2, vec![-0.5, 0.1]));
        let eps = Tensor::matrix(1, 2, vec![0.7, -1.3]);
        let z = sample_latent_graph(&mut tape, LatentVars { mean, log_std }, &eps).unwrap();
        let s = tape.sum_all(z);
        let grads = tape.backward(s).unwrap();
        for g in grads.get(mean).unwrap().data() {
            assert!((g - 1.0).abs() < 1e-15);
        }
        // d z / d log_std = σ·ε.
        let expect = [(-0.5f64).exp() * 0.7, (0.1f64).exp() * -1.3];
        for (g, e) in grads.get(log_std).unwrap().data().iter().zip(expect) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn checkpoint_round_trip_preserves_model() {
        let model = DeepStpp::init(toy_cfg(), SpatialRegion::unit_square()).unwrap();
        let dir = std::env::temp_dir().join("stpp-model-test");
        std::fs::create_dir_all(&dir).unwrap();
        let stem = dir.join("ckpt");
        model.save(&stem).unwrap();
        let back = DeepStpp::load(&stem).unwrap();
        assert_eq!(back.cfg.d_model, model.cfg.d_model);
        assert_eq!(back.rep_region, model.rep_region);
        let window = toy_window(5);
        assert_eq!(
            model.encode(&window).unwrap(),
            back.encode(&window).unwrap()
        );
    }
}
