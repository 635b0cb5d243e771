//! Flat key-value run configuration.
//!
//! Configuration comes from an optional `key = value` text file plus
//! `--key value` command-line overrides, which take precedence. Every key a
//! subcommand understands is declared in its table with a typed default;
//! unknown keys are rejected and values are type-checked at parse time.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Float,
    Int,
    Bool,
    Str,
}

pub struct KeySpec {
    pub key: &'static str,
    pub kind: Kind,
    pub default: &'static str,
    pub help: &'static str,
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Resolves defaults, then the config file, then CLI overrides.
    pub fn resolve(
        specs: &'static [KeySpec],
        config_file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut values: BTreeMap<&'static str, String> = specs
            .iter()
            .map(|s| (s.key, s.default.to_string()))
            .collect();
        let lookup = |key: &str| -> Result<&'static KeySpec, ConfigError> {
            specs
                .iter()
                .find(|s| s.key == key)
                .ok_or_else(|| ConfigError(format!("unknown config key `{key}`")))
        };
        if let Some(path) = config_file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let Some((key, value)) = line.split_once('=') else {
                    return Err(ConfigError(format!(
                        "config line {} is not `key = value`: {line}",
                        lineno + 1
                    )));
                };
                let spec = lookup(key.trim())?;
                let value = value.trim().to_string();
                check_type(spec, &value)?;
                values.insert(spec.key, value);
            }
        }
        for (key, value) in overrides {
            let spec = lookup(key)?;
            check_type(spec, value)?;
            values.insert(spec.key, value.clone());
        }
        Ok(Self { values })
    }

    pub fn str(&self, key: &str) -> &str {
        self.values
            .get(key)
            .unwrap_or_else(|| panic!("key `{key}` missing from spec table"))
    }

    /// Empty string means "not set".
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        let v = self.str(key);
        (!v.is_empty()).then_some(v)
    }

    pub fn f64(&self, key: &str) -> f64 {
        self.str(key).parse().expect("validated at parse")
    }

    pub fn opt_f64(&self, key: &str) -> Option<f64> {
        self.opt_str(key)
            .map(|v| v.parse().expect("validated at parse"))
    }

    pub fn usize(&self, key: &str) -> usize {
        self.str(key).parse().expect("validated at parse")
    }

    pub fn u64(&self, key: &str) -> u64 {
        self.str(key).parse().expect("validated at parse")
    }

    pub fn bool(&self, key: &str) -> bool {
        self.str(key).parse().expect("validated at parse")
    }

    /// Comma-separated floats.
    pub fn f64_list(&self, key: &str) -> Result<Vec<f64>, ConfigError> {
        self.str(key)
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| ConfigError(format!("`{key}` must be comma-separated numbers")))
            })
            .collect()
    }
}

fn check_type(spec: &KeySpec, value: &str) -> Result<(), ConfigError> {
    if value.is_empty() {
        return Ok(());
    }
    let ok = match spec.kind {
        Kind::Float => value.parse::<f64>().is_ok(),
        Kind::Int => value.parse::<u64>().is_ok(),
        Kind::Bool => value.parse::<bool>().is_ok(),
        Kind::Str => true,
    };
    if ok {
        Ok(())
    } else {
        Err(ConfigError(format!(
            "value `{value}` for key `{}` is not a valid {:?}",
            spec.key, spec.kind
        )))
    }
}

/// `--help` body: every key, its default, and a one-line description.
pub fn render_help(command: &str, summary: &str, specs: &[KeySpec]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "stpp {command} — {summary}");
    let _ = writeln!(
        out,
        "\nusage: stpp {command} [--config FILE] [--KEY VALUE]...\n"
    );
    let _ = writeln!(out, "keys (defaults in brackets):");
    for spec in specs {
        let default = if spec.default.is_empty() {
            "unset"
        } else {
            spec.default
        };
        let _ = writeln!(out, "  --{:<28} {}  [{default}]", spec.key, spec.help);
    }
    out
}

/// Splits raw CLI arguments into an optional config path and key overrides.
pub fn parse_args(
    args: &[String],
) -> Result<(Option<std::path::PathBuf>, Vec<(String, String)>, bool), ConfigError> {
    let mut config = None;
    let mut overrides = Vec::new();
    let mut help = false;
    let mut it = args.iter().peekable();
    while let Some(arg) = it.next() {
        if arg == "--help" || arg == "-h" {
            help = true;
            continue;
        }
        let Some(key) = arg.strip_prefix("--") else {
            return Err(ConfigError(format!(
                "unexpected argument `{arg}` (flags are --key value)"
            )));
        };
        let value = it
            .next()
            .ok_or_else(|| ConfigError(format!("flag --{key} is missing its value")))?;
        if key == "config" {
            config = Some(std::path::PathBuf::from(value));
        } else {
            overrides.push((key.to_string(), value.clone()));
        }
    }
    Ok((config, overrides, help))
}
