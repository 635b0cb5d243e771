//! Parametric spatiotemporal models: the self-exciting Hawkes process (STH)
//! and the self-correcting process (STSC).
//!
//! Provides the intensity functions, exact (STH) and quadrature (STSC)
//! log-likelihoods, quasi-Newton maximum-likelihood fitting with log/Cholesky
//! reparameterization, and expectation-based next-event prediction through
//! 1D integration of the predictive density.

use crate::events::{Event, EventSequence, SpatialRegion};
use crate::kernels::{Gauss2, Mat2};
use crate::optim::{bfgs_minimize, BfgsOptions, OptimError};
use crate::quad;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParametricError {
    #[error("{name} must be positive, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("invalid kernel: {0}")]
    Kernel(#[from] crate::kernels::KernelError),
    #[error("self-correcting model needs a bounded rectangular region")]
    UnboundedRegion,
    #[error("optimizer failed: {0}")]
    Optim(#[from] OptimError),
    #[error("quadrature failed: {0}")]
    Quad(#[from] quad::QuadError),
    #[error(
        "predictive survival never reached tail tolerance {tail_tol:e} within {span} time units"
    )]
    Divergence { tail_tol: f64, span: f64 },
    #[error("sequence has no events to fit")]
    EmptySequence,
}

/// Exponent below which `exp(-x)` underflows to zero in f64; history terms
/// past this contribute nothing and are skipped exactly.
const EXP_UNDERFLOW: f64 = 700.0;

/// Spatiotemporal Hawkes parameters: `λ*(s,t) = μ g₀(s) + Σ α e^{-β(t-tᵢ)} g₂(s, sᵢ)`
/// with Gaussian kernels (11 scalar parameters).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SthpParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s_mu: [f64; 2],
    pub cov_g0: Mat2,
    pub cov_g2: Mat2,
}

impl SthpParams {
    pub fn new(
        mu: f64,
        alpha: f64,
        beta: f64,
        s_mu: [f64; 2],
        cov_g0: Mat2,
        cov_g2: Mat2,
    ) -> Result<Self, ParametricError> {
        let p = Self {
            mu,
            alpha,
            beta,
            s_mu,
            cov_g0,
            cov_g2,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParametricError> {
        for (name, value) in [("mu", self.mu), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParametricError::NotPositive { name, value });
            }
        }
        Gauss2::new(self.s_mu, self.cov_g0)?;
        Gauss2::new([0.0, 0.0], self.cov_g2)?;
        Ok(())
    }

    /// Background density `g₀ = N(s_μ, Σ_g0)`.
    pub fn background(&self) -> Gauss2 {
        Gauss2 {
            mean: self.s_mu,
            cov: self.cov_g0,
        }
    }

    /// Triggering density `g₂(·, sᵢ) = N(sᵢ, Σ_g2)`.
    pub fn trigger_kernel(&self, center: [f64; 2]) -> Gauss2 {
        Gauss2 {
            mean: center,
            cov: self.cov_g2,
        }
    }

    /// Branching ratio `α/β`; subcritical below one.
    pub fn branching_ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Space-time intensity given history (events at `tᵢ < t` contribute).
    pub fn intensity(&self, hist: &[Event], s: [f64; 2], t: f64) -> f64 {
        let mut lambda = self.mu * self.background().pdf(s);
        for e in relevant_suffix(hist, t, self.beta) {
            if e.t < t {
                lambda +=
                    self.alpha * (-self.beta * (t - e.t)).exp() * self.trigger_kernel(e.s).pdf(s);
            }
        }
        lambda
    }

    /// Marginal temporal intensity `λ*(t) = μ + Σ α e^{-β(t-tᵢ)}` — the
    /// spatial kernels integrate to one over the plane.
    pub fn temporal_intensity(&self, times: &[f64], t: f64) -> f64 {
        let start = times.partition_point(|&ti| self.beta * (t - ti) > EXP_UNDERFLOW);
        self.mu
            + times[start..]
                .iter()
                .filter(|&&ti| ti < t)
                .map(|&ti| self.alpha * (-self.beta * (t - ti)).exp())
                .sum::<f64>()
    }

    /// Iterator-friendly variant for simulators holding `Event` history.
    pub fn temporal_intensity_times<I: Iterator<Item = f64>>(&self, times: I, t: f64) -> f64 {
        self.mu
            + times
                .filter(|&ti| ti < t && self.beta * (t - ti) <= EXP_UNDERFLOW)
                .map(|ti| self.alpha * (-self.beta * (t - ti)).exp())
                .sum::<f64>()
    }

    /// Closed-form compensator `∫_0^T λ*(τ)dτ = μT + (α/β) Σ (1 - e^{-β(T-tᵢ)})`.
    pub fn compensator(&self, times: &[f64], t_end: f64) -> f64 {
        let tail: f64 = times
            .iter()
            .filter(|&&ti| ti <= t_end)
            .map(|&ti| 1.0 - (-self.beta * (t_end - ti)).exp())
            .sum();
        self.mu * t_end + self.alpha / self.beta * tail
    }
}

/// Events late enough to matter for an evaluation at `t`.
fn relevant_suffix(hist: &[Event], t: f64, beta: f64) -> &[Event] {
    let start = hist.partition_point(|e| beta * (t - e.t) > EXP_UNDERFLOW);
    &hist[start..]
}

/// STH log-likelihood with the closed-form compensator.
///
/// `t_end = None` treats the horizon as the last event time. Returns `-∞`
/// if any event's intensity vanishes numerically.
pub fn sthp_loglik(p: &SthpParams, seq: &EventSequence, t_end: Option<f64>) -> f64 {
    let events = seq.events();
    let Some(last) = seq.last_time() else {
        return f64::NEG_INFINITY;
    };
    let t_end = t_end.unwrap_or(last);
    let mut ll = 0.0;
    for (i, e) in events.iter().enumerate() {
        let lambda = p.intensity(&events[..i], e.s, e.t);
        if !(lambda > 0.0) {
            return f64::NEG_INFINITY;
        }
        ll += lambda.ln();
    }
    let times: Vec<f64> = seq.times().collect();
    ll - p.compensator(&times, t_end)
}

/// Self-correcting parameters on a bounded rectangle:
/// `λ*(s,t) = μ exp(g₀(s)βt - Σ α g₂(s, sᵢ))` with region-truncated Gaussian
/// densities.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StscParams {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s_mu: [f64; 2],
    pub cov_g0: Mat2,
    pub cov_g2: Mat2,
    pub region: SpatialRegion,
}

impl StscParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mu: f64,
        alpha: f64,
        beta: f64,
        s_mu: [f64; 2],
        cov_g0: Mat2,
        cov_g2: Mat2,
        region: SpatialRegion,
    ) -> Result<Self, ParametricError> {
        let p = Self {
            mu,
            alpha,
            beta,
            s_mu,
            cov_g0,
            cov_g2,
            region,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParametricError> {
        for (name, value) in [("mu", self.mu), ("alpha", self.alpha), ("beta", self.beta)] {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ParametricError::NotPositive { name, value });
            }
        }
        if !matches!(self.region, SpatialRegion::Rectangle { .. }) {
            return Err(ParametricError::UnboundedRegion);
        }
        Gauss2::new(self.s_mu, self.cov_g0)?;
        Gauss2::new([0.0, 0.0], self.cov_g2)?;
        Ok(())
    }

    /// Region-truncated background density at `s`.
    pub fn background_density(&self, s: [f64; 2]) -> f64 {
        let g = Gauss2 {
            mean: self.s_mu,
            cov: self.cov_g0,
        };
        g.truncated_pdf(s, &self.region)
            .expect("validated region mass")
    }

    /// Region-truncated triggering density centered at a past event.
    pub fn trigger_density(&self, s: [f64; 2], center: [f64; 2]) -> f64 {
        let g = Gauss2 {
            mean: center,
            cov: self.cov_g2,
        };
        g.truncated_pdf(s, &self.region)
            .expect("validated region mass")
    }

    /// Space-time intensity; zero outside the region.
    pub fn intensity(&self, hist: &[Event], s: [f64; 2], t: f64) -> f64 {
        if !self.region.contains(s) {
            return 0.0;
        }
        let suppression: f64 = hist
            .iter()
            .filter(|e| e.t < t)
            .map(|e| self.alpha * self.trigger_density(s, e.s))
            .sum();
        self.mu * (self.background_density(s) * self.beta * t - suppression).exp()
    }
}

/// STSC log-likelihood: exact event term plus a compensator integrated on a
/// spatial grid (cell centers) with adaptive quadrature in time per
/// inter-event segment.
pub fn stsc_loglik(
    p: &StscParams,
    seq: &EventSequence,
    grid: (usize, usize),
    quad_tol: f64,
) -> Result<f64, ParametricError> {
    let SpatialRegion::Rectangle { lo, hi } = p.region else {
        return Err(ParametricError::UnboundedRegion);
    };
    let events = seq.events();
    let mut ll = 0.0;
    for (i, e) in events.iter().enumerate() {
        let lambda = p.intensity(&events[..i], e.s, e.t);
        if !(lambda > 0.0) {
            return Ok(f64::NEG_INFINITY);
        }
        ll += lambda.ln();
    }

    // Cell centers and per-cell static quantities.
    let (nx, ny) = grid;
    let cell = [(hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64];
    let mut centers = Vec::with_capacity(nx * ny);
    for ix in 0..nx {
        for iy in 0..ny {
            centers.push([
                lo[0] + (ix as f64 + 0.5) * cell[0],
                lo[1] + (iy as f64 + 0.5) * cell[1],
            ]);
        }
    }
    let g0: Vec<f64> = centers.iter().map(|c| p.background_density(*c)).collect();
    let area = p.region.area();
    let n_cells = centers.len() as f64;

    // Segment boundaries: 0, event times, horizon.
    let mut bounds: Vec<f64> = vec![0.0];
    bounds.extend(events.iter().map(|e| e.t).filter(|t| *t < seq.t_end()));
    bounds.push(seq.t_end());
    let n_segments = (bounds.len() - 1).max(1);

    let mut suppression = vec![0.0; centers.len()];
    let mut compensator = 0.0;
    let mut event_idx = 0usize;
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b > a {
            let lambda_bar = |t: f64| -> f64 {
                let sum: f64 = g0
                    .iter()
                    .zip(&suppression)
                    .map(|(g, sup)| p.mu * (g * p.beta * t - sup).exp())
                    .sum();
                sum / n_cells * area
            };
            compensator +=
                quad::integrate_1d(&mut |t| lambda_bar(t), a, b, quad_tol / n_segments as f64)?;
        }
        // The event at the segment's right edge starts suppressing afterwards.
        if event_idx < events.len() && events[event_idx].t == b {
            let s_i = events[event_idx].s;
            for (sup, c) in suppression.iter_mut().zip(&centers) {
                *sup += p.alpha * p.trigger_density(*c, s_i);
            }
            event_idx += 1;
        }
    }
    Ok(ll - compensator)
}

/// Options for maximum-likelihood fitting.
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub bfgs: BfgsOptions,
    /// Observation horizon; `None` uses the last event time.
    pub t_end: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            bfgs: BfgsOptions::default(),
            t_end: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitResult<P> {
    pub params: P,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Negative log-likelihood after each accepted quasi-Newton step.
    pub trace: Vec<f64>,
}

fn cholesky_to_theta(cov: &Mat2) -> [f64; 3] {
    let [l00, l10, l11] = cov.cholesky();
    [l00.ln(), l10, l11.ln()]
}

fn theta_to_cov(theta: &[f64]) -> Mat2 {
    let (l00, l10, l11) = (theta[0].exp(), theta[1], theta[2].exp());
    Mat2([l00 * l00, l00 * l10, l00 * l10, l10 * l10 + l11 * l11])
}

/// Fits the 9 free STH scalars by BFGS on the negative log-likelihood.
///
/// `s_μ` is estimated directly as the mean event location; positivity is kept
/// by log reparameterization and the covariances stay SPD through their
/// Cholesky factors.
pub fn fit_sthp_mle(
    seq: &EventSequence,
    init: &SthpParams,
    opts: &FitOptions,
) -> Result<FitResult<SthpParams>, ParametricError> {
    if seq.is_empty() {
        return Err(ParametricError::EmptySequence);
    }
    init.validate()?;
    let n = seq.len() as f64;
    let s_mu = seq.events().iter().fold([0.0, 0.0], |acc, e| {
        [acc[0] + e.s[0] / n, acc[1] + e.s[1] / n]
    });

    let g0_theta = cholesky_to_theta(&init.cov_g0);
    let g2_theta = cholesky_to_theta(&init.cov_g2);
    let theta0 = [
        init.mu.ln(),
        init.alpha.ln(),
        init.beta.ln(),
        g0_theta[0],
        g0_theta[1],
        g0_theta[2],
        g2_theta[0],
        g2_theta[1],
        g2_theta[2],
    ];

    let params_of = |theta: &[f64]| SthpParams {
        mu: theta[0].exp(),
        alpha: theta[1].exp(),
        beta: theta[2].exp(),
        s_mu,
        cov_g0: theta_to_cov(&theta[3..6]),
        cov_g2: theta_to_cov(&theta[6..9]),
    };

    let objective = |theta: &[f64]| -sthp_loglik(&params_of(theta), seq, opts.t_end);
    let res = bfgs_minimize(objective, &theta0, &opts.bfgs)?;
    let params = params_of(&res.x);
    Ok(FitResult {
        params,
        loglik: -res.value,
        converged: res.converged,
        iterations: res.iterations,
        trace: res.trace,
    })
}

/// Best-effort STSC fit through the quadrature likelihood (the three scalar
/// rates only; kernel covariances are kept at their initial values. The
/// quadrature tolerances make this considerably rougher than the STH fit).
pub fn fit_stsc_mle(
    seq: &EventSequence,
    init: &StscParams,
    grid: (usize, usize),
    quad_tol: f64,
    opts: &FitOptions,
) -> Result<FitResult<StscParams>, ParametricError> {
    if seq.is_empty() {
        return Err(ParametricError::EmptySequence);
    }
    init.validate()?;
    let base = *init;
    let params_of = move |theta: &[f64]| StscParams {
        mu: theta[0].exp(),
        alpha: theta[1].exp(),
        beta: theta[2].exp(),
        ..base
    };
    let theta0 = [init.mu.ln(), init.alpha.ln(), init.beta.ln()];
    let objective = |theta: &[f64]| {
        stsc_loglik(&params_of(theta), seq, grid, quad_tol).map_or(f64::NAN, |ll| -ll)
    };
    let res = bfgs_minimize(objective, &theta0, &opts.bfgs)?;
    let params = params_of(&res.x);
    Ok(FitResult {
        params,
        loglik: -res.value,
        converged: res.converged,
        iterations: res.iterations,
        trace: res.trace,
    })
}

/// A temporal predictive model after its last observed event: the rate
/// `λ*(t)` and the cumulative hazard `∫_{t_n}^t λ*(τ)dτ`.
pub trait TemporalHazard {
    fn t_n(&self) -> f64;
    fn rate(&self, t: f64) -> f64;
    fn cumulative(&self, t: f64) -> f64;
}

/// STH hazard after `t_n`, with the history folded into the sufficient
/// statistic `A = Σ e^{-β(t_n - tⱼ)}`.
#[derive(Debug, Clone, Copy)]
pub struct SthpHazard {
    pub mu: f64,
    pub alpha: f64,
    pub beta: f64,
    pub decay_sum: f64,
    pub t_n: f64,
}

impl SthpHazard {
    pub fn from_history(p: &SthpParams, times: &[f64], t_n: f64) -> Self {
        let decay_sum = times
            .iter()
            .filter(|&&tj| tj <= t_n && p.beta * (t_n - tj) <= EXP_UNDERFLOW)
            .map(|&tj| (-p.beta * (t_n - tj)).exp())
            .sum();
        Self {
            mu: p.mu,
            alpha: p.alpha,
            beta: p.beta,
            decay_sum,
            t_n,
        }
    }
}

impl TemporalHazard for SthpHazard {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn rate(&self, t: f64) -> f64 {
        self.mu + self.alpha * (-self.beta * (t - self.t_n)).exp() * self.decay_sum
    }

    fn cumulative(&self, t: f64) -> f64 {
        let dt = t - self.t_n;
        self.mu * dt - self.alpha / self.beta * ((-self.beta * dt).exp() - 1.0) * self.decay_sum
    }
}

/// Constant-rate hazard (homogeneous Poisson baseline).
#[derive(Debug, Clone, Copy)]
pub struct ConstHazard {
    pub rate: f64,
    pub t_n: f64,
}

impl TemporalHazard for ConstHazard {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn rate(&self, _t: f64) -> f64 {
        self.rate
    }

    fn cumulative(&self, t: f64) -> f64 {
        self.rate * (t - self.t_n)
    }
}

/// Upper truncation point where survival drops below `tail_tol`.
fn survival_horizon(h: &impl TemporalHazard, tail_tol: f64) -> Result<f64, ParametricError> {
    let t_n = h.t_n();
    let base_gap = 1.0 / h.rate(t_n).max(1e-12);
    let mut span = base_gap;
    let max_span = 1e6 * base_gap;
    loop {
        if (-h.cumulative(t_n + span)).exp() < tail_tol {
            return Ok(t_n + span);
        }
        span *= 2.0;
        if span > max_span {
            return Err(ParametricError::Divergence { tail_tol, span });
        }
    }
}

/// Expected next event time `E[t_{n+1} | H] = ∫ t·f*(t) dt` by adaptive 1D
/// quadrature, truncated where survival falls below `tail_tol`.
pub fn predict_next_time(h: &impl TemporalHazard, tail_tol: f64) -> Result<f64, ParametricError> {
    let t_n = h.t_n();
    let upper = survival_horizon(h, tail_tol)?;
    // Integrate in the gap variable for conditioning, then shift back.
    let mean_gap = quad::integrate_1d(
        &mut |u: f64| u * h.rate(t_n + u) * (-h.cumulative(t_n + u)).exp(),
        0.0,
        upper - t_n,
        1e-10 * (upper - t_n).max(1.0),
    )?;
    Ok(t_n + mean_gap)
}

/// Expected next event location for an STH model: the 1D integral
/// `∫ exp(-Λ(t)) (μ s_μ + α Σ e^{-β(t-tⱼ)} sⱼ) dt` over `t > t_n`.
pub fn predict_next_location_sthp(
    p: &SthpParams,
    hist: &[Event],
    tail_tol: f64,
) -> Result<[f64; 2], ParametricError> {
    let t_n = hist.last().map_or(0.0, |e| e.t);
    let times: Vec<f64> = hist.iter().map(|e| e.t).collect();
    let hazard = SthpHazard::from_history(p, &times, t_n);
    let upper = survival_horizon(&hazard, tail_tol)?;
    // Location-weighted decay sum B = Σ e^{-β(t_n - tⱼ)} sⱼ.
    let mut weighted = [0.0, 0.0];
    for e in hist {
        let w = (-p.beta * (t_n - e.t)).exp();
        weighted[0] += w * e.s[0];
        weighted[1] += w * e.s[1];
    }
    let mut out = [0.0, 0.0];
    for d in 0..2 {
        out[d] = quad::integrate_1d(
            &mut |u: f64| {
                let decay = (-p.beta * u).exp();
                let num = p.mu * p.s_mu[d] + p.alpha * decay * weighted[d];
                num * (-hazard.cumulative(t_n + u)).exp()
            },
            0.0,
            upper - t_n,
            1e-10,
        )?;
    }
    Ok(out)
}
