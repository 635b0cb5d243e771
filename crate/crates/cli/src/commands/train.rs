//! `stpp train`: window-split a sequence, train the kernel-intensity model,
//! and write the best-validation checkpoint plus a loss trace CSV.

use crate::common::{load_sequence, numeric, split_dataset, validation, CliResult, OutputGuard};
use crate::config::{KeySpec, Kind, RunConfig};
use std::io::Write;
use std::path::Path;
use stpp_core::deepstpp::{train, DeepStppConfig};

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
        key: "train.d-model",
        kind: Kind::Int,
        default: "128",
        help: "embedding width",
    },
    KeySpec {
        key: "train.layers",
        kind: Kind::Int,
        default: "3",
        help: "encoder layers",
    },
    KeySpec {
        key: "train.heads",
        kind: Kind::Int,
        default: "2",
        help: "attention heads",
    },
    KeySpec {
        key: "train.d-hidden",
        kind: Kind::Int,
        default: "128",
        help: "encoder feed-forward width",
    },
    KeySpec {
        key: "train.d-z",
        kind: Kind::Int,
        default: "128",
        help: "latent dimension",
    },
    KeySpec {
        key: "train.decoder-hidden",
        kind: Kind::Int,
        default: "128",
        help: "decoder hidden width",
    },
    KeySpec {
        key: "train.decoder-depth",
        kind: Kind::Int,
        default: "2",
        help: "decoder hidden layers",
    },
    KeySpec {
        key: "train.j",
        kind: Kind::Int,
        default: "50",
        help: "representative points J",
    },
    KeySpec {
        key: "train.max-events",
        kind: Kind::Int,
        default: "0",
        help: "decoder event slots (0 = size from data)",
    },
    KeySpec {
        key: "train.kl-weight",
        kind: Kind::Float,
        default: "1e-3",
        help: "KL scale factor in the loss",
    },
    KeySpec {
        key: "train.lr",
        kind: Kind::Float,
        default: "0.01",
        help: "Adam learning rate",
    },
    KeySpec {
        key: "train.lr-decay",
        kind: Kind::Float,
        default: "1.0",
        help: "learning-rate decay factor (1 = constant)",
    },
    KeySpec {
        key: "train.lr-decay-every",
        kind: Kind::Int,
        default: "0",
        help: "epochs between learning-rate decays (0 = never)",
    },
    KeySpec {
        key: "train.grad-clip",
        kind: Kind::Float,
        default: "100",
        help: "global-norm gradient clip (0 = off)",
    },
    KeySpec {
        key: "train.epochs",
        kind: Kind::Int,
        default: "200",
        help: "training epochs",
    },
    KeySpec {
        key: "train.batch",
        kind: Kind::Int,
        default: "128",
        help: "mini-batch size",
    },
    KeySpec {
        key: "train.seed",
        kind: Kind::Int,
        default: "0",
        help: "training seed (init, shuffle, latent, rep points)",
    },
    KeySpec {
        key: "train.positional-scale",
        kind: Kind::Float,
        default: "100",
        help: "positional encoding span per window",
    },
    KeySpec {
        key: "out",
        kind: Kind::Str,
        default: "out/deepstpp",
        help: "checkpoint stem (writes .bin and .json)",
    },
    KeySpec {
        key: "trace-out",
        kind: Kind::Str,
        default: "out/deepstpp_trace.csv",
        help: "loss trace CSV path",
    },
];

pub fn config_from(cfg: &RunConfig) -> DeepStppConfig {
    DeepStppConfig {
        d_model: cfg.usize("train.d-model"),
        layers: cfg.usize("train.layers"),
        heads: cfg.usize("train.heads"),
        d_hidden: cfg.usize("train.d-hidden"),
        d_z: cfg.usize("train.d-z"),
        decoder_hidden: cfg.usize("train.decoder-hidden"),
        decoder_depth: cfg.usize("train.decoder-depth"),
        rep_points: cfg.usize("train.j"),
        max_events: cfg.usize("train.max-events"),
        kl_weight: cfg.f64("train.kl-weight"),
        lr: cfg.f64("train.lr"),
        lr_decay: cfg.f64("train.lr-decay"),
        lr_decay_every: cfg.usize("train.lr-decay-every"),
        grad_clip: cfg.f64("train.grad-clip"),
        epochs: cfg.usize("train.epochs"),
        batch_size: cfg.usize("train.batch"),
        seed: cfg.u64("train.seed"),
        positional_scale: cfg.f64("train.positional-scale"),
    }
}

pub fn run(cfg: &RunConfig) -> CliResult<()> {
    let seq = load_sequence(cfg)?;
    let dataset = split_dataset(cfg, &seq)?;
    println!(
        "windows: {} train / {} val / {} test",
        dataset.train.len(),
        dataset.val.len(),
        dataset.test.len()
    );
    let model_cfg = config_from(cfg);

    let stem = Path::new(cfg.str("out")).to_path_buf();
    let trace_path = Path::new(cfg.str("trace-out")).to_path_buf();
    let mut guard = OutputGuard::new();
    guard.track(&stem.with_extension("bin"));
    guard.track(&stem.with_extension("json"));
    guard.track(&trace_path);

    let result = train(&dataset, model_cfg).map_err(numeric)?;

    crate::common::ensure_parent_dir(&stem)?;
    result.model.save(&stem).map_err(numeric)?;

    crate::common::ensure_parent_dir(&trace_path)?;
    let mut trace_file =
        std::io::BufWriter::new(std::fs::File::create(&trace_path).map_err(validation)?);
    writeln!(trace_file, "epoch,train_loss,val_neg_elbo").map_err(validation)?;
    for row in &result.trace {
        writeln!(
            trace_file,
            "{},{},{}",
            row.epoch, row.train_loss, row.val_neg_elbo
        )
        .map_err(validation)?;
    }
    drop(trace_file);

    guard.disarm();
    let last = result.trace.last().expect("at least one epoch");
    println!(
        "trained {} epochs; best validation neg-ELBO {:.4} at epoch {}; final train loss {:.4}",
        result.trace.len(),
        result
            .trace
            .iter()
            .map(|r| r.val_neg_elbo)
            .fold(f64::INFINITY, f64::min),
        result.best_epoch,
        last.train_loss
    );
    if result.clamp_events > 0 {
        eprintln!(
            "warning: target intensity hit the log floor {} times",
            result.clamp_events
        );
    }
    println!(
        "wrote {}.bin / {}.json and {}",
        stem.display(),
        stem.display(),
        trace_path.display()
    );
    Ok(())
}
