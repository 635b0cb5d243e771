//! Evaluation of predictive distributions against ground truth: the
//! space/time log-likelihood decomposition, Hellinger distance between
//! gridded predictive densities, and temporal-intensity MAPE.
//!
//! Every metric consumes a [`WindowModel`]: a predictive model conditioned
//! on one window's input events. Adapters are provided for the parametric
//! ground-truth processes, decoded kernel parameters, and a constant-rate
//! Poisson baseline. Ground truth and learned models are conditioned on the
//! same visible history so the comparison is like for like.

use crate::deepstpp::KernelParams;
use crate::events::{Event, SpatialRegion};
use crate::parametric::{SthpHazard, SthpParams, StscParams, TemporalHazard};
use crate::quad;
use crate::simulate::StscTemporalGrid;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("grids differ in region or resolution")]
    GridMismatch,
    #[error("hellinger distance needs normalized grids")]
    NotNormalized,
    #[error("grid region must be a bounded rectangle")]
    UnboundedGrid,
    #[error("truth intensity is non-positive at t = {0}")]
    NonPositiveTruth(f64),
    #[error("quadrature failed: {0}")]
    Quad(#[from] quad::QuadError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A predictive model conditioned on one window: the space-time intensity,
/// its temporal marginal, and the cumulative hazard after the window edge.
pub trait WindowModel {
    fn t_n(&self) -> f64;
    fn intensity(&self, s: [f64; 2], t: f64) -> f64;
    fn temporal_intensity(&self, t: f64) -> f64;
    /// `∫_{t_n}^{t} λ*(τ) dτ`.
    fn compensator(&self, t: f64) -> f64;
}

/// Ground-truth self-exciting model bound to a window history.
pub struct SthpWindow<'a> {
    params: &'a SthpParams,
    hist: &'a [Event],
    hazard: SthpHazard,
}

impl<'a> SthpWindow<'a> {
    pub fn new(params: &'a SthpParams, hist: &'a [Event], t_n: f64) -> Self {
        let times: Vec<f64> = hist.iter().map(|e| e.t).collect();
        Self {
            params,
            hist,
            hazard: SthpHazard::from_history(params, &times, t_n),
        }
    }
}

impl WindowModel for SthpWindow<'_> {
    fn t_n(&self) -> f64 {
        self.hazard.t_n
    }

    fn intensity(&self, s: [f64; 2], t: f64) -> f64 {
        self.params.intensity(self.hist, s, t)
    }

    fn temporal_intensity(&self, t: f64) -> f64 {
        self.hazard.rate(t)
    }

    fn compensator(&self, t: f64) -> f64 {
        self.hazard.cumulative(t)
    }
}

/// Ground-truth self-correcting model bound to a window history, with its
/// temporal marginal on the simulator's grid discretization.
pub struct StscWindow<'a> {
    params: &'a StscParams,
    hist: &'a [Event],
    grid: StscTemporalGrid<'a>,
    t_n: f64,
    quad_tol: f64,
}

impl<'a> StscWindow<'a> {
    pub fn new(params: &'a StscParams, hist: &'a [Event], t_n: f64, grid: (usize, usize)) -> Self {
        Self {
            params,
            hist,
            grid: StscTemporalGrid::new(params, hist, grid),
            t_n,
            quad_tol: 1e-8,
        }
    }
}

impl WindowModel for StscWindow<'_> {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn intensity(&self, s: [f64; 2], t: f64) -> f64 {
        self.params.intensity(self.hist, s, t)
    }

    fn temporal_intensity(&self, t: f64) -> f64 {
        self.grid.temporal_intensity(t)
    }

    fn compensator(&self, t: f64) -> f64 {
        quad::integrate_1d(
            &mut |tau| self.grid.temporal_intensity(tau),
            self.t_n,
            t,
            self.quad_tol,
        )
        .unwrap_or(f64::NAN)
    }
}

/// Decoded kernel-intensity model bound to its window.
pub struct KernelWindow {
    pub params: KernelParams,
    pub t_n: f64,
}

impl WindowModel for KernelWindow {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn intensity(&self, s: [f64; 2], t: f64) -> f64 {
        self.params.intensity(s, t)
    }

    fn temporal_intensity(&self, t: f64) -> f64 {
        self.params.temporal_intensity(t)
    }

    fn compensator(&self, t: f64) -> f64 {
        self.params.temporal_compensator(self.t_n, t)
    }
}

/// Constant-rate Poisson baseline with a uniform spatial density.
pub struct PoissonWindow {
    pub rate: f64,
    pub region: SpatialRegion,
    pub t_n: f64,
}

impl WindowModel for PoissonWindow {
    fn t_n(&self) -> f64 {
        self.t_n
    }

    fn intensity(&self, s: [f64; 2], t: f64) -> f64 {
        if self.region.contains(s) {
            self.temporal_intensity(t) / self.region.area()
        } else {
            0.0
        }
    }

    fn temporal_intensity(&self, _t: f64) -> f64 {
        self.rate
    }

    fn compensator(&self, t: f64) -> f64 {
        self.rate * (t - self.t_n)
    }
}

/// Space/time decomposition of the predictive log-likelihood of one target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoglikSplit {
    pub ll_space: f64,
    pub ll_time: f64,
}

impl LoglikSplit {
    pub fn total(&self) -> f64 {
        self.ll_space + self.ll_time
    }
}

/// `ll_time = log λ*(t*) - ∫ λ*`, `ll_space = log f*(s*|t*) = log λ*(s*,t*)
/// - log λ*(t*)`; their sum is the joint log-density. A vanishing temporal
/// intensity yields `-∞` sentinels.
pub fn loglik_split(model: &(impl WindowModel + ?Sized), target: &Event) -> LoglikSplit {
    let lambda_t = model.temporal_intensity(target.t);
    if !(lambda_t > 0.0) {
        return LoglikSplit {
            ll_space: f64::NEG_INFINITY,
            ll_time: f64::NEG_INFINITY,
        };
    }
    let lambda_st = model.intensity(target.s, target.t);
    let ll_time = lambda_t.ln() - model.compensator(target.t);
    let ll_space = if lambda_st > 0.0 {
        lambda_st.ln() - lambda_t.ln()
    } else {
        f64::NEG_INFINITY
    };
    LoglikSplit { ll_space, ll_time }
}

/// A density or intensity field sampled at rectangular cell centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Row-major over x then y: index = ix·ny + iy.
    pub values: Vec<f64>,
    pub normalized: bool,
}

impl DensityGrid {
    pub fn from_fn(
        region: &SpatialRegion,
        nx: usize,
        ny: usize,
        mut f: impl FnMut([f64; 2]) -> f64,
    ) -> Result<Self, EvalError> {
        let SpatialRegion::Rectangle { lo, hi } = *region else {
            return Err(EvalError::UnboundedGrid);
        };
        let (dx, dy) = ((hi[0] - lo[0]) / nx as f64, (hi[1] - lo[1]) / ny as f64);
        let mut values = Vec::with_capacity(nx * ny);
        for ix in 0..nx {
            for iy in 0..ny {
                let s = [
                    lo[0] + (ix as f64 + 0.5) * dx,
                    lo[1] + (iy as f64 + 0.5) * dy,
                ];
                values.push(f(s));
            }
        }
        Ok(Self {
            lo,
            hi,
            nx,
            ny,
            values,
            normalized: false,
        })
    }

    pub fn cell_area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) / self.nx as f64 * (self.hi[1] - self.lo[1]) / self.ny as f64
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        let dx = (self.hi[0] - self.lo[0]) / self.nx as f64;
        let dy = (self.hi[1] - self.lo[1]) / self.ny as f64;
        [
            self.lo[0] + (ix as f64 + 0.5) * dx,
            self.lo[1] + (iy as f64 + 0.5) * dy,
        ]
    }

    /// Riemann mass `Σ value · cell_area`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_area()
    }

    /// Rescales so the Riemann mass is one.
    pub fn normalize(mut self) -> Self {
        let mass = self.mass();
        if mass > 0.0 {
            for v in &mut self.values {
                *v /= mass;
            }
        }
        self.normalized = true;
        self
    }

    /// CSV export: header `x,y,value`, cells in row-major order.
    pub fn write_csv(&self, path: &Path) -> Result<(), EvalError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,y,value")?;
        for ix in 0..self.nx {
            for iy in 0..self.ny {
                let c = self.cell_center(ix, iy);
                writeln!(out, "{},{},{}", c[0], c[1], self.values[ix * self.ny + iy])?;
            }
        }
        Ok(())
    }
}

/// Evaluates `λ*(s, t_query)` (or the normalized spatial slice when
/// `normalized`) on a grid over the region.
pub fn density_grid_from_model(
    model: &(impl WindowModel + ?Sized),
    t_query: f64,
    region: &SpatialRegion,
    nx: usize,
    ny: usize,
    normalized: bool,
) -> Result<DensityGrid, EvalError> {
    let grid = DensityGrid::from_fn(region, nx, ny, |s| model.intensity(s, t_query))?;
    Ok(if normalized { grid.normalize() } else { grid })
}

/// Discrete Hellinger distance `√(½ Σ (√(p·a) - √(q·a))²)` between two
/// normalized grids over the same region and resolution.
pub fn hellinger(p: &DensityGrid, q: &DensityGrid) -> Result<f64, EvalError> {
    if p.lo != q.lo || p.hi != q.hi || p.nx != q.nx || p.ny != q.ny {
        return Err(EvalError::GridMismatch);
    }
    if !p.normalized || !q.normalized {
        return Err(EvalError::NotNormalized);
    }
    let area = p.cell_area();
    let sum: f64 = p
        .values
        .iter()
        .zip(&q.values)
        .map(|(pv, qv)| {
            let d = (pv * area).max(0.0).sqrt() - (qv * area).max(0.0).sqrt();
            d * d
        })
        .sum();
    Ok((0.5 * sum).sqrt().min(1.0))
}

/// Mean absolute percentage error `100·mean |λ̂(τ) - λ(τ)| / λ(τ)` over the
/// sample times.
pub fn temporal_mape(
    model: &(impl WindowModel + ?Sized),
    truth: &(impl WindowModel + ?Sized),
    times: &[f64],
) -> Result<f64, EvalError> {
    assert!(!times.is_empty());
    let mut acc = 0.0;
    for &t in times {
        let reference = truth.temporal_intensity(t);
        if !(reference > 0.0) {
            return Err(EvalError::NonPositiveTruth(t));
        }
        acc += (model.temporal_intensity(t) - reference).abs() / reference;
    }
    Ok(100.0 * acc / times.len() as f64)
}

/// Default MAPE sampling: `count` equally spaced times spanning one window
/// length after the last input event.
pub fn mape_sample_times(t_n: f64, window_length: f64, count: usize) -> Vec<f64> {
    (1..=count)
        .map(|k| t_n + window_length * k as f64 / count as f64)
        .collect()
}

/// Aggregated metrics for a split, serialized to the report JSON.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ll_space: f64,
    pub ll_time: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mape: Option<f64>,
}
