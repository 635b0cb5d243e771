//! Command-line surface for the spatiotemporal point process toolkit.
//!
//! Subcommands: `simulate`, `fit-mle`, `train`, `evaluate`, `predict`,
//! `grid`. Every subcommand reads an optional `--config FILE` of flat
//! `key = value` lines with `--key value` overrides taking precedence;
//! `--help` lists each key with its default. Exit codes: 0 success, 2
//! validation error, 3 numeric failure.
//!
//! `STPP_THREADS` caps the worker threads used by parallel evaluation.

mod commands;
mod common;
mod config;

use config::{parse_args, render_help, KeySpec, RunConfig};

struct Subcommand {
    name: &'static str,
    summary: &'static str,
    specs: &'static [KeySpec],
    run: fn(&RunConfig) -> common::CliResult<()>,
}

static SUBCOMMANDS: &[Subcommand] = &[
    Subcommand {
        name: "simulate",
        summary: "simulate synthetic event sequences to JSONL",
        specs: commands::simulate::SPECS,
        run: commands::simulate::run,
    },
    Subcommand {
        name: "fit-mle",
        summary: "maximum-likelihood fit of a parametric model",
        specs: commands::fit::SPECS,
        run: commands::fit::run,
    },
    Subcommand {
        name: "train",
        summary: "train the kernel-intensity model on windowed data",
        specs: commands::train::SPECS,
        run: commands::train::run,
    },
    Subcommand {
        name: "evaluate",
        summary: "score a model's predictive distribution on a split",
        specs: commands::evaluate::SPECS,
        run: commands::evaluate::run,
    },
    Subcommand {
        name: "predict",
        summary: "expected next-event time and location per window",
        specs: commands::predict::SPECS,
        run: commands::predict::run,
    },
    Subcommand {
        name: "grid",
        summary: "export intensity/density surfaces as CSV grids",
        specs: commands::grid::SPECS,
        run: commands::grid::run,
    },
];

fn top_level_help() -> String {
    let mut out = String::from("stpp — spatiotemporal point process toolkit\n\nsubcommands:\n");
    for sub in SUBCOMMANDS {
        out.push_str(&format!("  {:<10} {}\n", sub.name, sub.summary));
    }
    out.push_str("\nrun `stpp <subcommand> --help` for that command's config keys\n");
    out
}

fn init_thread_pool() {
    if let Ok(n) = std::env::var("STPP_THREADS") {
        if let Ok(n) = n.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build_global();
        }
    }
}

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let Some(name) = args.first() else {
        eprint!("{}", top_level_help());
        std::process::exit(2);
    };
    if name == "--help" || name == "-h" || name == "help" {
        print!("{}", top_level_help());
        return;
    }
    let Some(sub) = SUBCOMMANDS.iter().find(|s| s.name == name.as_str()) else {
        eprintln!("unknown subcommand `{name}`\n");
        eprint!("{}", top_level_help());
        std::process::exit(2);
    };
    let (config_file, overrides, help) = match parse_args(&args[1..]) {
        Ok(parsed) => parsed,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    if help {
        print!("{}", render_help(sub.name, sub.summary, sub.specs));
        return;
    }
    let cfg = match RunConfig::resolve(sub.specs, config_file.as_deref(), &overrides) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(2);
        }
    };
    init_thread_pool();
    match (sub.run)(&cfg) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {}", e.message());
            std::process::exit(e.exit_code());
        }
    }
}
