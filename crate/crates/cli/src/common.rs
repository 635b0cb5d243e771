//! Shared command plumbing: error-to-exit-code mapping, parameter presets,
//! dataset loading, and cleanup of partial outputs on failure.

use std::path::{Path, PathBuf};
use stpp_core::events::{self, EventSequence, SpatialRegion, SplitDataset, SplitSpec};
use stpp_core::kernels::Mat2;
use stpp_core::parametric::{SthpParams, StscParams};

use crate::config::RunConfig;

/// Validation problems exit with 2, numeric failures with 3.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Validation(m) | CliError::Numeric(m) => m,
        }
    }
}

pub fn validation(e: impl std::fmt::Display) -> CliError {
    CliError::Validation(e.to_string())
}

pub fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

pub type CliResult<T> = Result<T, CliError>;

/// Deletes registered output files unless the command disarms it, so failed
/// runs leave no partial outputs behind.
pub struct OutputGuard {
    paths: Vec<PathBuf>,
    armed: bool,
}

impl OutputGuard {
    pub fn new() -> Self {
        Self {
            paths: Vec::new(),
            armed: true,
        }
    }

    pub fn track(&mut self, path: &Path) {
        self.paths.push(path.to_path_buf());
    }

    pub fn disarm(mut self) {
        self.armed = false;
    }
}

impl Drop for OutputGuard {
    fn drop(&mut self) {
        if self.armed {
            for path in &self.paths {
                let _ = std::fs::remove_file(path);
            }
        }
    }
}

pub const STH_PRESETS: [&str; 3] = ["ds1", "ds2", "ds3"];

/// Synthetic self-exciting parameter presets.
pub fn sthp_preset(name: &str) -> CliResult<SthpParams> {
    let (alpha, beta, mu, g0, g2) = match name {
        "ds1" => (0.5, 1.0, 0.2, 0.2, 0.5),
        "ds2" => (0.5, 0.6, 0.15, 5.0, 0.1),
        "ds3" => (0.3, 2.0, 1.0, 1.0, 0.1),
        other => {
            return Err(CliError::Validation(format!(
                "unknown preset `{other}`; valid presets: {}",
                STH_PRESETS.join(", ")
            )))
        }
    };
    SthpParams::new(
        mu,
        alpha,
        beta,
        [0.0, 0.0],
        Mat2::diagonal(g0, g0),
        Mat2::diagonal(g2, g2),
    )
    .map_err(validation)
}

/// Synthetic self-correcting parameter presets (unit-square region).
pub fn stsc_preset(name: &str) -> CliResult<StscParams> {
    let (alpha, beta, mu, g0, g2) = match name {
        "ds1" => (0.2, 0.2, 1.0, 1.0, 0.85),
        "ds2" => (0.3, 0.2, 1.0, 0.4, 0.3),
        "ds3" => (0.4, 0.2, 1.0, 0.25, 0.2),
        other => {
            return Err(CliError::Validation(format!(
                "unknown preset `{other}`; valid presets: {}",
                STH_PRESETS.join(", ")
            )))
        }
    };
    StscParams::new(
        mu,
        alpha,
        beta,
        [0.0, 0.0],
        Mat2::diagonal(g0, g0),
        Mat2::diagonal(g2, g2),
        SpatialRegion::unit_square(),
    )
    .map_err(validation)
}

/// Loads a JSONL sequence, optionally rescaling to unit mean gap.
pub fn load_sequence(cfg: &RunConfig) -> CliResult<EventSequence> {
    let path = cfg
        .opt_str("data")
        .ok_or_else(|| CliError::Validation("`data` (JSONL event file) is required".into()))?;
    let seq = events::read_jsonl(Path::new(path)).map_err(validation)?;
    if cfg.bool("data.normalize-time") {
        let (scaled, _) = seq.rescaled_to_unit_gap().map_err(validation)?;
        Ok(scaled)
    } else {
        Ok(seq)
    }
}

/// Splits a sequence into windowed examples per the `split.*` keys. A zero
/// window length defaults to one fiftieth of the horizon.
pub fn split_dataset(cfg: &RunConfig, seq: &EventSequence) -> CliResult<SplitDataset> {
    let mut window_length = cfg.f64("split.window-length");
    if window_length == 0.0 {
        window_length = seq.t_end() / 50.0;
    }
    let ratios = cfg.f64_list("split.ratios").map_err(validation)?;
    if ratios.len() != 3 {
        return Err(CliError::Validation(
            "split.ratios needs exactly 3 fractions".into(),
        ));
    }
    let spec = SplitSpec::new(
        window_length,
        [ratios[0], ratios[1], ratios[2]],
        cfg.u64("split.seed"),
    )
    .map_err(validation)?;
    events::window_split(seq, &spec).map_err(validation)
}

/// Effective window length used for split and MAPE ranges.
pub fn effective_window_length(cfg: &RunConfig, seq: &EventSequence) -> f64 {
    let wl = cfg.f64("split.window-length");
    if wl == 0.0 {
        seq.t_end() / 50.0
    } else {
        wl
    }
}

pub fn ensure_parent_dir(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::Validation(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    Ok(())
}

pub fn write_json(path: &Path, value: &impl serde::Serialize) -> CliResult<()> {
    ensure_parent_dir(path)?;
    let text = serde_json::to_string_pretty(value).map_err(numeric)?;
    std::fs::write(path, text).map_err(validation)
}
