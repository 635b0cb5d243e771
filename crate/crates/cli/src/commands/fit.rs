//! `stpp fit-mle`: maximum-likelihood fit of a parametric model to a JSONL
//! sequence; writes the parameter JSON and a convergence trace CSV.

use crate::common::{load_sequence, numeric, validation, CliResult, OutputGuard};
use crate::config::{KeySpec, Kind, RunConfig};
use std::io::Write;
use std::path::Path;
use stpp_core::events::SpatialRegion;
use stpp_core::kernels::Mat2;
use stpp_core::optim::BfgsOptions;
use stpp_core::parametric::{fit_sthp_mle, fit_stsc_mle, FitOptions, SthpParams, StscParams};

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
        key: "fit.process",
        kind: Kind::Str,
        default: "sthp",
        help: "model family: sthp | stsc",
    },
    KeySpec {
        key: "fit.init.mu",
        kind: Kind::Float,
        default: "0.5",
        help: "initial mu",
    },
    KeySpec {
        key: "fit.init.alpha",
        kind: Kind::Float,
        default: "0.3",
        help: "initial alpha",
    },
    KeySpec {
        key: "fit.init.beta",
        kind: Kind::Float,
        default: "1.0",
        help: "initial beta",
    },
    KeySpec {
        key: "fit.init.sigma-g0",
        kind: Kind::Float,
        default: "1.0",
        help: "initial isotropic background covariance diagonal",
    },
    KeySpec {
        key: "fit.init.sigma-g2",
        kind: Kind::Float,
        default: "0.5",
        help: "initial isotropic trigger covariance diagonal",
    },
    KeySpec {
        key: "fit.max-iters",
        kind: Kind::Int,
        default: "500",
        help: "quasi-Newton iteration cap",
    },
    KeySpec {
        key: "fit.grad-tol",
        kind: Kind::Float,
        default: "1e-6",
        help: "gradient max-norm termination",
    },
    KeySpec {
        key: "fit.t-end",
        kind: Kind::Str,
        default: "last-event",
        help: "likelihood horizon: last-event | file",
    },
    KeySpec {
        key: "fit.grid.nx",
        kind: Kind::Int,
        default: "51",
        help: "stsc compensator grid cells in x",
    },
    KeySpec {
        key: "fit.grid.ny",
        kind: Kind::Int,
        default: "51",
        help: "stsc compensator grid cells in y",
    },
    KeySpec {
        key: "fit.quad-tol",
        kind: Kind::Float,
        default: "1e-6",
        help: "stsc compensator quadrature tolerance",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/fit_params.json",
        help: "fitted parameter JSON path",
    },
    KeySpec {
        key: "trace-out",
        kind: Kind::Str,
        default: "out/fit_trace.csv",
        help: "convergence trace CSV path",
    },
];

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let seq = load_sequence(cfg)?;
    let fit_opts = FitOptions {
        bfgs: BfgsOptions {
            max_iterations: cfg.usize("fit.max-iters"),
            grad_tol: cfg.f64("fit.grad-tol"),
            ..BfgsOptions::default()
        },
        t_end: match cfg.str("fit.t-end") {
            "last-event" => None,
            "file" => Some(seq.t_end()),
            other => {
                return Err(crate::common::CliError::Validation(format!(
                    "fit.t-end must be last-event or file, got `{other}`"
                )))
            }
        },
    };

    let out_path = Path::new(cfg.str("out")).to_path_buf();
    let trace_path = Path::new(cfg.str("trace-out")).to_path_buf();
    let mut guard = OutputGuard::new();
    guard.track(&out_path);
    guard.track(&trace_path);

    let (params_json, trace, loglik, converged, iterations) = match cfg.str("fit.process") {
        "sthp" => {
            let g0 = cfg.f64("fit.init.sigma-g0");
            let g2 = cfg.f64("fit.init.sigma-g2");
            let init = SthpParams::new(
                cfg.f64("fit.init.mu"),
                cfg.f64("fit.init.alpha"),
                cfg.f64("fit.init.beta"),
                [0.0, 0.0],
                Mat2::diagonal(g0, g0),
                Mat2::diagonal(g2, g2),
            )
            .map_err(validation)?;
            let fit = fit_sthp_mle(&seq, &init, &fit_opts).map_err(numeric)?;
            (
                serde_json::to_value(fit.params).map_err(numeric)?,
                fit.trace,
                fit.loglik,
                fit.converged,
                fit.iterations,
            )
        }
        "stsc" => {
            let g0 = cfg.f64("fit.init.sigma-g0");
            let g2 = cfg.f64("fit.init.sigma-g2");
            let init = StscParams::new(
                cfg.f64("fit.init.mu"),
                cfg.f64("fit.init.alpha"),
                cfg.f64("fit.init.beta"),
                [0.0, 0.0],
                Mat2::diagonal(g0, g0),
                Mat2::diagonal(g2, g2),
                SpatialRegion::unit_square(),
            )
            .map_err(validation)?;
            let grid = (cfg.usize("fit.grid.nx"), cfg.usize("fit.grid.ny"));
            let fit = fit_stsc_mle(&seq, &init, grid, cfg.f64("fit.quad-tol"), &fit_opts)
                .map_err(numeric)?;
            (
                serde_json::to_value(fit.params).map_err(numeric)?,
                fit.trace,
                fit.loglik,
                fit.converged,
                fit.iterations,
            )
        }
        other => {
            return Err(crate::common::CliError::Validation(format!(
                "fit.process must be sthp or stsc, got `{other}`"
            )))
        }
    };

    let report = serde_json::json!({
        "params": params_json,
        "loglik": loglik,
        "converged": converged,
        "iterations": iterations,
        "n_events": seq.len(),
    });
    crate::common::write_json(&out_path, &report)?;

    crate::common::ensure_parent_dir(&trace_path)?;
    let mut trace_file =
        std::io::BufWriter::new(std::fs::File::create(&trace_path).map_err(validation)?);
    writeln!(trace_file, "iteration,neg_loglik").map_err(validation)?;
    for (i, v) in trace.iter().enumerate() {
        writeln!(trace_file, "{i},{v}").map_err(validation)?;
    }
    drop(trace_file);

    guard.disarm();
    println!(
        "fit {}: loglik {loglik:.4}, converged {converged} in {iterations} iterations",
        cfg.str("fit.process")
    );
    println!("wrote {} and {}", out_path.display(), trace_path.display());
    Ok(())
}
