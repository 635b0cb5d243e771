//! `stpp predict`: next-event (time, location) expectations for every window
//! of a split, written as JSONL.

use crate::common::{load_sequence, numeric, split_dataset, validation, CliResult, OutputGuard};
use crate::config::{KeySpec, Kind, RunConfig};
use std::io::Write;
use std::path::Path;
use stpp_core::deepstpp::{predict_event, DeepStpp, LatentMode};
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
        help: "which split to predict: train | val | test",
    },
    KeySpec {
        key: "model.checkpoint",
        kind: Kind::Str,
        default: "",
        help: "trained checkpoint stem",
    },
    KeySpec {
        key: "predict.tail-tol",
        kind: Kind::Float,
        default: "1e-8",
        help: "survival truncation for the time integral",
    },
    KeySpec {
        key: "predict.latent-samples",
        kind: Kind::Int,
        default: "0",
        help: "latent draws to average (0 = posterior mean)",
    },
    KeySpec {
        key: "eval.seed",
        kind: Kind::Int,
        default: "0",
        help: "seed for representative points and latent draws",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/predictions.jsonl",
        help: "prediction JSONL path",
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
    if windows.is_empty() {
        return Err(crate::common::CliError::Validation(
            "selected split holds no windows".into(),
        ));
    }
    let stem = cfg.opt_str("model.checkpoint").ok_or_else(|| {
        crate::common::CliError::Validation("model.checkpoint is required".into())
    })?;
    let model = DeepStpp::load(Path::new(stem)).map_err(validation)?;

    let out_path = Path::new(cfg.str("out")).to_path_buf();
    let mut guard = OutputGuard::new();
    guard.track(&out_path);
    crate::common::ensure_parent_dir(&out_path)?;
    let mut out = std::io::BufWriter::new(std::fs::File::create(&out_path).map_err(validation)?);

    let root = SplitRng::new(cfg.u64("eval.seed"));
    let tail_tol = cfg.f64("predict.tail-tol");
    let latent_samples = cfg.usize("predict.latent-samples");
    for (idx, window) in windows.iter().enumerate() {
        let mut rep_rng = root.stream_indexed("rep-points-eval", idx as u64);
        let prediction = if latent_samples == 0 {
            predict_event(&model, window, &mut rep_rng, LatentMode::Mean, tail_tol)
        } else {
            let mut latent_rng = root.stream_indexed("latent-eval", idx as u64);
            predict_event(
                &model,
                window,
                &mut rep_rng,
                LatentMode::Sampled {
                    rng: &mut latent_rng,
                    count: latent_samples,
                },
                tail_tol,
            )
        }
        .map_err(|e| numeric(format!("window {idx}: {e}")))?;
        let line = serde_json::json!({
            "window": idx,
            "t_n": window.t_n(),
            "t_hat": prediction.t,
            "x_hat": prediction.s[0],
            "y_hat": prediction.s[1],
            "target_t": window.target.t,
            "target_x": window.target.s[0],
            "target_y": window.target.s[1],
        });
        writeln!(out, "{line}").map_err(validation)?;
    }
    drop(out);
    guard.disarm();
    println!(
        "wrote {} predictions to {}",
        windows.len(),
        out_path.display()
    );
    Ok(())
}
