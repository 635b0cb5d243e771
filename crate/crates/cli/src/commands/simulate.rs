//! `stpp simulate`: draw event sequences from a synthetic process and write
//! them as JSONL files plus a manifest.

use crate::common::{
    ensure_parent_dir, numeric, sthp_preset, stsc_preset, validation, CliResult, OutputGuard,
};
use crate::config::{KeySpec, Kind, RunConfig};
use std::path::PathBuf;
use stpp_core::events::{write_jsonl, SpatialRegion};
use stpp_core::parametric::{SthpParams, StscParams};
use stpp_core::rng::{streams, SplitRng};
use stpp_core::simulate::{
    simulate_sthp_cluster, simulate_stpp, simulate_stsc_grid, UniformPoisson,
};

pub static SPECS: &[KeySpec] = &[
    KeySpec {
        key: "sim.process",
        kind: Kind::Str,
        default: "sthp",
        help: "process: sthp | stsc | poisson",
    },
    KeySpec {
        key: "sim.preset",
        kind: Kind::Str,
        default: "ds1",
        help: "parameter preset: ds1 | ds2 | ds3",
    },
    KeySpec {
        key: "sim.mu",
        kind: Kind::Float,
        default: "",
        help: "override background rate mu",
    },
    KeySpec {
        key: "sim.alpha",
        kind: Kind::Float,
        default: "",
        help: "override excitation / correction alpha",
    },
    KeySpec {
        key: "sim.beta",
        kind: Kind::Float,
        default: "",
        help: "override decay / growth beta",
    },
    KeySpec {
        key: "sim.sigma-g0",
        kind: Kind::Float,
        default: "",
        help: "override isotropic background covariance diagonal",
    },
    KeySpec {
        key: "sim.sigma-g2",
        kind: Kind::Float,
        default: "",
        help: "override isotropic trigger covariance diagonal",
    },
    KeySpec {
        key: "sim.rate",
        kind: Kind::Float,
        default: "1.0",
        help: "poisson process rate",
    },
    KeySpec {
        key: "sim.horizon",
        kind: Kind::Float,
        default: "1000",
        help: "observation horizon T",
    },
    KeySpec {
        key: "sim.seqs",
        kind: Kind::Int,
        default: "1",
        help: "number of sequences (independent RNG streams)",
    },
    KeySpec {
        key: "sim.seed",
        kind: Kind::Int,
        default: "0",
        help: "master seed",
    },
    KeySpec {
        key: "sim.grid.nx",
        kind: Kind::Int,
        default: "101",
        help: "stsc spatial grid cells in x",
    },
    KeySpec {
        key: "sim.grid.ny",
        kind: Kind::Int,
        default: "101",
        help: "stsc spatial grid cells in y",
    },
    KeySpec {
        key: "sim.sthp-method",
        kind: Kind::Str,
        default: "cluster",
        help: "sthp sampler: cluster | thinning",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/sim",
        help: "output directory",
    },
];

enum Process {
    Sthp(SthpParams, String),
    Stsc(StscParams),
    Poisson(f64),
}

fn resolve_process(cfg: &RunConfig) -> CliResult<Process> {
    let preset = cfg.str("sim.preset");
    match cfg.str("sim.process") {
        "sthp" => {
            let mut p = sthp_preset(preset)?;
            if let Some(mu) = cfg.opt_f64("sim.mu") {
                p.mu = mu;
            }
            if let Some(alpha) = cfg.opt_f64("sim.alpha") {
                p.alpha = alpha;
            }
            if let Some(beta) = cfg.opt_f64("sim.beta") {
                p.beta = beta;
            }
            if let Some(s) = cfg.opt_f64("sim.sigma-g0") {
                p.cov_g0 = stpp_core::kernels::Mat2::diagonal(s, s);
            }
            if let Some(s) = cfg.opt_f64("sim.sigma-g2") {
                p.cov_g2 = stpp_core::kernels::Mat2::diagonal(s, s);
            }
            p.validate().map_err(validation)?;
            if p.alpha >= p.beta {
                return Err(crate::common::CliError::Validation(format!(
                    "refusing supercritical alpha={} >= beta={}",
                    p.alpha, p.beta
                )));
            }
            Ok(Process::Sthp(p, cfg.str("sim.sthp-method").to_string()))
        }
        "stsc" => {
            let mut p = stsc_preset(preset)?;
            if let Some(mu) = cfg.opt_f64("sim.mu") {
                p.mu = mu;
            }
            if let Some(alpha) = cfg.opt_f64("sim.alpha") {
                p.alpha = alpha;
            }
            if let Some(beta) = cfg.opt_f64("sim.beta") {
                p.beta = beta;
            }
            if let Some(s) = cfg.opt_f64("sim.sigma-g0") {
                p.cov_g0 = stpp_core::kernels::Mat2::diagonal(s, s);
            }
            if let Some(s) = cfg.opt_f64("sim.sigma-g2") {
                p.cov_g2 = stpp_core::kernels::Mat2::diagonal(s, s);
            }
            p.validate().map_err(validation)?;
            Ok(Process::Stsc(p))
        }
        "poisson" => Ok(Process::Poisson(cfg.f64("sim.rate"))),
        other => Err(crate::common::CliError::Validation(format!(
            "unknown process `{other}` (expected sthp, stsc, or poisson)"
        ))),
    }
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let horizon = cfg.f64("sim.horizon");
    if !(horizon > 0.0) {
        return Err(crate::common::CliError::Validation(format!(
            "sim.horizon must be positive, got {horizon}"
        )));
    }
    let n_seqs = cfg.usize("sim.seqs");
    if n_seqs == 0 {
        return Err(crate::common::CliError::Validation(
            "sim.seqs must be at least 1".into(),
        ));
    }
    let process = resolve_process(cfg)?;
    let seed = cfg.u64("sim.seed");
    let out_dir = PathBuf::from(cfg.str("out"));
    std::fs::create_dir_all(&out_dir).map_err(validation)?;

    let mut guard = OutputGuard::new();
    let root = SplitRng::new(seed);
    let grid = (cfg.usize("sim.grid.nx"), cfg.usize("sim.grid.ny"));
    if matches!(process, Process::Stsc(_)) && (grid.0 < 2 || grid.1 < 2) {
        return Err(crate::common::CliError::Validation(
            "sim.grid.nx and sim.grid.ny must be at least 2".into(),
        ));
    }

    // Independent stream per sequence index keeps parallel or partial reruns
    // reproducible; the simulations themselves run in order.
    let mut files = Vec::with_capacity(n_seqs);
    for k in 0..n_seqs {
        let mut rng = root.stream_indexed(streams::SIM, k as u64);
        let seq = match &process {
            Process::Sthp(p, method) => match method.as_str() {
                "cluster" => simulate_sthp_cluster(p, horizon, &mut rng).map_err(numeric)?,
                "thinning" => {
                    simulate_stpp(&stpp_core::simulate::SthpThinning(p), horizon, &mut rng)
                        .map_err(numeric)?
                }
                other => {
                    return Err(crate::common::CliError::Validation(format!(
                        "unknown sim.sthp-method `{other}` (expected cluster or thinning)"
                    )))
                }
            },
            Process::Stsc(p) => simulate_stsc_grid(p, grid, horizon, &mut rng).map_err(numeric)?,
            Process::Poisson(rate) => {
                let model = UniformPoisson {
                    rate: *rate,
                    region: SpatialRegion::unit_square(),
                };
                simulate_stpp(&model, horizon, &mut rng).map_err(numeric)?
            }
        };
        let path = out_dir.join(format!("seq_{k:03}.jsonl"));
        guard.track(&path);
        write_jsonl(&seq, &path).map_err(validation)?;
        files.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            seq.len(),
        ));
    }

    let manifest_path = out_dir.join("manifest.json");
    guard.track(&manifest_path);
    let params_json = match &process {
        Process::Sthp(p, method) => serde_json::json!({
            "process": "sthp", "method": method, "params": p,
        }),
        Process::Stsc(p) => {
            serde_json::json!({"process": "stsc", "params": p, "grid": [grid.0, grid.1]})
        }
        Process::Poisson(rate) => serde_json::json!({"process": "poisson", "rate": rate}),
    };
    let manifest = serde_json::json!({
        "model": params_json,
        "preset": cfg.str("sim.preset"),
        "seed": seed,
        "horizon": horizon,
        "sequences": files.iter().map(|(name, count)| serde_json::json!({
            "file": name, "events": count,
        })).collect::<Vec<_>>(),
    });
    ensure_parent_dir(&manifest_path)?;
    std::fs::write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest).map_err(numeric)?,
    )
    .map_err(validation)?;

    guard.disarm();
    for (name, count) in &files {
        println!("wrote {} ({count} events)", out_dir.join(name).display());
    }
    println!("wrote {}", manifest_path.display());
    Ok(())
}
