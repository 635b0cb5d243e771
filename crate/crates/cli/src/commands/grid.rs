//! `stpp grid`: export intensity (or normalized density) surfaces of a model
//! around one window as CSV grids, for external plotting.

use crate::common::{
    load_sequence, numeric, split_dataset, sthp_preset, stsc_preset, validation, CliResult,
    OutputGuard,
};
use crate::config::{KeySpec, Kind, RunConfig};
use std::path::{Path, PathBuf};
use stpp_core::deepstpp::DeepStpp;
use stpp_core::eval::{density_grid_from_model, KernelWindow, SthpWindow, StscWindow, WindowModel};
use stpp_core::events::SpatialRegion;
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
        help: "split holding the window: train | val | test",
    },
    KeySpec {
        key: "grid.window",
        kind: Kind::Int,
        default: "0",
        help: "window index within the split",
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
        help: "fitted sthp parameter JSON",
    },
    KeySpec {
        key: "truth.process",
        kind: Kind::Str,
        default: "sthp",
        help: "preset family: sthp | stsc",
    },
    KeySpec {
        key: "truth.preset",
        kind: Kind::Str,
        default: "",
        help: "ground-truth preset to render instead of a model",
    },
    KeySpec {
        key: "grid.times",
        kind: Kind::Str,
        default: "1.0",
        help: "query times as fractions of (target - t_n) after t_n",
    },
    KeySpec {
        key: "grid.nx",
        kind: Kind::Int,
        default: "101",
        help: "grid cells in x",
    },
    KeySpec {
        key: "grid.ny",
        kind: Kind::Int,
        default: "101",
        help: "grid cells in y",
    },
    KeySpec {
        key: "grid.normalized",
        kind: Kind::Bool,
        default: "false",
        help: "export f*(s|t) instead of intensity",
    },
    KeySpec {
        key: "grid.region",
        kind: Kind::Str,
        default: "",
        help: "lo_x,lo_y,hi_x,hi_y (default: data bounding box)",
    },
    KeySpec {
        key: "eval.stsc-grid",
        kind: Kind::Int,
        default: "101",
        help: "stsc temporal grid resolution",
    },
    KeySpec {
        key: "eval.seed",
        kind: Kind::Int,
        default: "0",
        help: "seed for representative points",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/grids",
        help: "output directory",
    },
];

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
    let idx = cfg.usize("grid.window");
    let window = windows.get(idx).ok_or_else(|| {
        crate::common::CliError::Validation(format!(
            "grid.window {idx} out of range (split has {} windows)",
            windows.len()
        ))
    })?;
    let t_n = window.t_n();
    let hist = window.input.events();

    // One model source: checkpoint, fitted params, or a ground-truth preset.
    let sthp_params;
    let stsc_params;
    let stsc_grid = cfg.usize("eval.stsc-grid");
    let model: Box<dyn WindowModel> = if let Some(stem) = cfg.opt_str("model.checkpoint") {
        let m = DeepStpp::load(Path::new(stem)).map_err(validation)?;
        let mut rep_rng =
            SplitRng::new(cfg.u64("eval.seed")).stream_indexed("rep-points-eval", idx as u64);
        let kp = m.kernel_params(window, &mut rep_rng).map_err(numeric)?;
        Box::new(KernelWindow { params: kp, t_n })
    } else if let Some(path) = cfg.opt_str("model.params") {
        let text = std::fs::read_to_string(path).map_err(validation)?;
        let value: serde_json::Value = serde_json::from_str(&text).map_err(validation)?;
        let params_value = if value.get("params").is_some() {
            &value["params"]
        } else {
            &value
        };
        sthp_params =
            serde_json::from_value::<stpp_core::parametric::SthpParams>(params_value.clone())
                .map_err(validation)?;
        Box::new(SthpWindow::new(&sthp_params, hist, t_n))
    } else if let Some(preset) = cfg.opt_str("truth.preset") {
        match cfg.str("truth.process") {
            "sthp" => {
                sthp_params = sthp_preset(preset)?;
                Box::new(SthpWindow::new(&sthp_params, hist, t_n))
            }
            "stsc" => {
                stsc_params = stsc_preset(preset)?;
                Box::new(StscWindow::new(
                    &stsc_params,
                    hist,
                    t_n,
                    (stsc_grid, stsc_grid),
                ))
            }
            other => {
                return Err(crate::common::CliError::Validation(format!(
                    "truth.process must be sthp or stsc, got `{other}`"
                )))
            }
        }
    } else {
        return Err(crate::common::CliError::Validation(
            "one of model.checkpoint, model.params, truth.preset is required".into(),
        ));
    };

    let region = match cfg.opt_str("grid.region") {
        Some(_) => {
            let coords = cfg.f64_list("grid.region").map_err(validation)?;
            if coords.len() != 4 {
                return Err(crate::common::CliError::Validation(
                    "grid.region needs lo_x,lo_y,hi_x,hi_y".into(),
                ));
            }
            SpatialRegion::rectangle([coords[0], coords[1]], [coords[2], coords[3]])
                .map_err(validation)?
        }
        None => {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for e in seq.events() {
                for d in 0..2 {
                    lo[d] = lo[d].min(e.s[d]);
                    hi[d] = hi[d].max(e.s[d]);
                }
            }
            SpatialRegion::Rectangle { lo, hi }.inflated(0.1)
        }
    };

    let fractions = cfg.f64_list("grid.times").map_err(validation)?;
    let out_dir = PathBuf::from(cfg.str("out"));
    std::fs::create_dir_all(&out_dir).map_err(validation)?;
    let mut guard = OutputGuard::new();
    let (nx, ny) = (cfg.usize("grid.nx"), cfg.usize("grid.ny"));
    let normalized = cfg.bool("grid.normalized");
    let mut written = Vec::new();
    for (k, fraction) in fractions.iter().enumerate() {
        let tau = t_n + (window.target.t - t_n) * fraction;
        let grid = density_grid_from_model(model.as_ref(), tau, &region, nx, ny, normalized)
            .map_err(numeric)?;
        let path = out_dir.join(format!("grid_{k:02}.csv"));
        guard.track(&path);
        grid.write_csv(&path).map_err(validation)?;
        written.push((path, tau));
    }
    guard.disarm();
    for (path, tau) in written {
        println!("wrote {} (t = {tau})", path.display());
    }
    Ok(())
}
