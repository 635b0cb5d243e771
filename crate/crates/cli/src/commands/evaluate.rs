//! `stpp evaluate`: predictive-distribution metrics for a model on a window
//! split — mean space/time log-likelihoods, and when a ground-truth process
//! is supplied, Hellinger distance of the spatial predictive densities
//! (averaged over query times per window) and temporal-intensity MAPE.

use crate::common::{
    load_sequence, numeric, split_dataset, sthp_preset, stsc_preset, validation, CliResult,
    OutputGuard,
};
use crate::config::{KeySpec, Kind, RunConfig};
use rayon::prelude::*;
use std::path::Path;
use stpp_core::deepstpp::DeepStpp;
use stpp_core::eval::{
    density_grid_from_model, hellinger, loglik_split, mape_sample_times, temporal_mape,
    KernelWindow, PoissonWindow, SthpWindow, StscWindow, WindowModel,
};
use stpp_core::events::{SpatialRegion, WindowExample};
use stpp_core::parametric::{SthpParams, StscParams};
use stpp_core::rng::SplitRng;

pub static SPECS: &[KeySpec] = &[
    KeySpec {
        key: "data",
        kind: Kind::Str,
        default: "",
        help: "input JSONL event file",
    },
    KeySpec {
        key: "data.normalize-time",
        kind: Kind::Bool,
        default: "false",
        help: "rescale times to unit mean gap at ingestion",
    },
    KeySpec {
        key: "split.window-length",
        kind: Kind::Float,
        default: "0",
        help: "window duration (0 = horizon/50)",
    },
    KeySpec {
        key: "split.ratios",
        kind: Kind::Str,
        default: "0.8,0.1,0.1",
        help: "train,val,test fractions",
    },
    KeySpec {
        key: "split.seed",
        kind: Kind::Int,
        default: "0",
        help: "window shuffle seed",
    },
    KeySpec {
        key: "eval.split",
        kind: Kind::Str,
        default: "test",
        help: "which split to score: train | val | test",
    },
    KeySpec {
        key: "model.checkpoint",
        kind: Kind::Str,
        default: "",
        help: "trained checkpoint stem",
    },
    KeySpec {
        key: "model.params",
        kind: Kind::Str,
        default: "",
        help: "fitted sthp parameter JSON (fit-mle output)",
    },
    KeySpec {
        key: "model.poisson-rate",
        kind: Kind::Float,
        default: "",
        help: "constant-rate baseline model",
    },
    KeySpec {
        key: "truth.process",
        kind: Kind::Str,
        default: "sthp",
        help: "ground-truth family: sthp | stsc",
    },
    KeySpec {
        key: "truth.preset",
        kind: Kind::Str,
        default: "",
        help: "ground-truth preset ds1 | ds2 | ds3 (enables hd and mape)",
    },
    KeySpec {
        key: "eval.grid.nx",
        kind: Kind::Int,
        default: "51",
        help: "density grid cells in x",
    },
    KeySpec {
        key: "eval.grid.ny",
        kind: Kind::Int,
        default: "51",
        help: "density grid cells in y",
    },
    KeySpec {
        key: "eval.times-per-window",
        kind: Kind::Int,
        default: "10",
        help: "query times per window for hd",
    },
    KeySpec {
        key: "eval.mape-samples",
        kind: Kind::Int,
        default: "100",
        help: "sample times for mape",
    },
    KeySpec {
        key: "eval.stsc-grid",
        kind: Kind::Int,
        default: "101",
        help: "stsc truth temporal grid resolution",
    },
    KeySpec {
        key: "eval.seed",
        kind: Kind::Int,
        default: "0",
        help: "seed for per-window representative points",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/metrics.json",
        help: "metrics JSON path",
    },
];

enum ModelSource {
    Checkpoint(Box<DeepStpp>),
    Sthp(SthpParams),
    Poisson(f64),
}

enum TruthSource {
    Sthp(SthpParams),
    Stsc(StscParams),
    None,
}

fn resolve_model(cfg: &RunConfig) -> CliResult<ModelSource> {
    let sources = [
        cfg.opt_str("model.checkpoint").is_some(),
        cfg.opt_str("model.params").is_some(),
        cfg.opt_str("model.poisson-rate").is_some(),
    ];
    if sources.iter().filter(|s| **s).count() != 1 {
        return Err(crate::common::CliError::Validation(
            "exactly one of model.checkpoint, model.params, model.poisson-rate is required".into(),
        ));
    }
    if let Some(stem) = cfg.opt_str("model.checkpoint") {
        let model = DeepStpp::load(Path::new(stem)).map_err(validation)?;
        return Ok(ModelSource::Checkpoint(Box::new(model)));
    }
    if let Some(path) = cfg.opt_str("model.params") {
        let text = std::fs::read_to_string(path).map_err(validation)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(validation)?;
        // Accept both a bare parameter object and the fit-mle report wrapper.
        let params_value = if value.get("params").is_some() {
            &value["params"]
        } else {
            &value
        };
        let params: SthpParams =
            serde_json::from_value(params_value.clone()).map_err(validation)?;
        params.validate().map_err(validation)?;
        return Ok(ModelSource::Sthp(params));
    }
    Ok(ModelSource::Poisson(cfg.f64("model.poisson-rate")))
}

fn resolve_truth(cfg: &RunConfig) -> CliResult<TruthSource> {
    match cfg.opt_str("truth.preset") {
        None => Ok(TruthSource::None),
        Some(preset) => match cfg.str("truth.process") {
            "sthp" => Ok(TruthSource::Sthp(sthp_preset(preset)?)),
            "stsc" => Ok(TruthSource::Stsc(stsc_preset(preset)?)),
            other => Err(crate::common::CliError::Validation(format!(
                "truth.process must be sthp or stsc, got `{other}`"
            ))),
        },
    }
}

/// Bounding box of every event in the scored windows, inflated 10%.
fn eval_region(windows: &[WindowExample]) -> SpatialRegion {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for w in windows {
        for e in w.input.events().iter().chain(std::iter::once(&w.target)) {
            for d in 0..2 {
                lo[d] = lo[d].min(e.s[d]);
                hi[d] = hi[d].max(e.s[d]);
            }
        }
    }
    for d in 0..2 {
        if !(hi[d] - lo[d] > 1e-9) {
            lo[d] -= 0.5;
            hi[d] += 0.5;
        }
    }
    SpatialRegion::Rectangle { lo, hi }.inflated(0.1)
}

struct WindowScore {
    ll_space: f64,
    ll_time: f64,
    hd: Option<f64>,
    mape: Option<f64>,
}

#[allow(clippy::too_many_arguments)]
fn score_window(
    idx: usize,
    window: &WindowExample,
    source: &ModelSource,
    truth: &TruthSource,
    region: &SpatialRegion,
    window_length: f64,
    cfg: &RunConfig,
) -> CliResult<WindowScore> {
    let t_n = window.t_n();
    let hist = window.input.events();
    let model: Box<dyn WindowModel> = match source {
        ModelSource::Checkpoint(m) => {
            let mut rep_rng =
                SplitRng::new(cfg.u64("eval.seed")).stream_indexed("rep-points-eval", idx as u64);
            let kp = m.kernel_params(window, &mut rep_rng).map_err(numeric)?;
            Box::new(KernelWindow { params: kp, t_n })
        }
        ModelSource::Sthp(p) => Box::new(SthpWindow::new(p, hist, t_n)),
        ModelSource::Poisson(rate) => Box::new(PoissonWindow {
            rate: *rate,
            region: *region,
            t_n,
        }),
    };
    let stsc_grid = cfg.usize("eval.stsc-grid");
    let truth_model: Option<Box<dyn WindowModel>> = match truth {
        TruthSource::Sthp(p) => Some(Box::new(SthpWindow::new(p, hist, t_n))),
        TruthSource::Stsc(p) => Some(Box::new(StscWindow::new(
            p,
            hist,
            t_n,
            (stsc_grid, stsc_grid),
        ))),
        TruthSource::None => None,
    };

    let lls = loglik_split(model.as_ref(), &window.target);
    let mut hd = None;
    let mut mape = None;
    if let Some(truth_model) = truth_model {
        let (nx, ny) = (cfg.usize("eval.grid.nx"), cfg.usize("eval.grid.ny"));
        let times = cfg.usize("eval.times-per-window");
        let mut acc = 0.0;
        for k in 1..=times {
            let tau = t_n + (window.target.t - t_n) * k as f64 / times as f64;
            let model_grid = density_grid_from_model(model.as_ref(), tau, region, nx, ny, true)
                .map_err(numeric)?;
            let truth_grid =
                density_grid_from_model(truth_model.as_ref(), tau, region, nx, ny, true)
                    .map_err(numeric)?;
            acc += hellinger(&model_grid, &truth_grid).map_err(numeric)?;
        }
        hd = Some(acc / times as f64);
        let sample_times = mape_sample_times(t_n, window_length, cfg.usize("eval.mape-samples"));
        mape = Some(
            temporal_mape(model.as_ref(), truth_model.as_ref(), &sample_times).map_err(numeric)?,
        );
    }
    Ok(WindowScore {
        ll_space: lls.ll_space,
        ll_time: lls.ll_time,
        hd,
        mape,
    })
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let seq = load_sequence(cfg)?;
    let dataset = split_dataset(cfg, &seq)?;
    let windows = match cfg.str("eval.split") {
        "train" => &dataset.train,
        "val" => &dataset.val,
        "test" => &dataset.test,
        other => {
            return Err(crate::common::CliError::Validation(format!(
                "eval.split must be train, val, or test, got `{other}`"
            )))
        }
    };
    if windows.is_empty() {
        return Err(crate::common::CliError::Validation(
            "selected split holds no windows".into(),
        ));
    }
    let source = resolve_model(cfg)?;
    let truth = resolve_truth(cfg)?;
    let region = eval_region(windows);
    let window_length = crate::common::effective_window_length(cfg, &seq);

    let scores: Vec<CliResult<WindowScore>> = windows
        .par_iter()
        .enumerate()
        .map(|(idx, w)| score_window(idx, w, &source, &truth, &region, window_length, cfg))
        .collect();
    let mut ll_space = 0.0;
    let mut ll_time = 0.0;
    let mut hd_acc = (0.0, 0usize);
    let mut mape_acc = (0.0, 0usize);
    for score in scores {
        let score = score?;
        ll_space += score.ll_space;
        ll_time += score.ll_time;
        if let Some(hd) = score.hd {
            hd_acc = (hd_acc.0 + hd, hd_acc.1 + 1);
        }
        if let Some(m) = score.mape {
            mape_acc = (mape_acc.0 + m, mape_acc.1 + 1);
        }
    }
    let count = windows.len() as f64;
    let report = serde_json::json!({
        "split": cfg.str("eval.split"),
        "windows": windows.len(),
        "ll_space": ll_space / count,
        "ll_time": ll_time / count,
        "hd": (hd_acc.1 > 0).then(|| hd_acc.0 / hd_acc.1 as f64),
        "mape": (mape_acc.1 > 0).then(|| mape_acc.0 / mape_acc.1 as f64),
    });

    let out_path = Path::new(cfg.str("out")).to_path_buf();
    let mut guard = OutputGuard::new();
    guard.track(&out_path);
    crate::common::write_json(&out_path, &report)?;
    guard.disarm();
    println!("{}", serde_json::to_string(&report).map_err(numeric)?);
    println!("wrote {}", out_path.display());
    Ok(())
}
