use std::io::Write;
use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

use crate::commands::{Failure, Outcome};
use crate::config::{Format, RunConfig};

pub const OUT_ENV: &str = "DYADIC_LAB_OUT";

/// Everything except `meta` is a pure function of the resolved config.
#[derive(Serialize)]
struct Report<'a> {
    command: &'a str,
    config: &'a RunConfig,
    pass: bool,
    failures: &'a [Failure],
    results: &'a Value,
    meta: Meta,
}

#[derive(Serialize)]
struct Meta {
    version: &'static str,
    timestamp_unix: u64,
    threads_used: usize,
}

/// Explicit `--out` wins, then `$DYADIC_LAB_OUT/<command>.<ext>`, then stdout.
pub fn destination(cfg: &RunConfig) -> Option<PathBuf> {
    if let Some(p) = &cfg.out {
        return Some(p.clone());
    }
    let dir = std::env::var_os(OUT_ENV)?;
    let ext = match cfg.format {
        Format::Json => "json",
        Format::Csv => "csv",
    };
    Some(PathBuf::from(dir).join(format!("{}.{ext}", cfg.command)))
}

pub fn render(cfg: &RunConfig, outcome: &Outcome) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    match (&outcome.csv, cfg.format) {
        (Some(body), Format::Csv) => {
            // csv readers that honour '#' comments skip this line
            writeln!(buf, "# config: {}", serde_json::to_string(cfg)?)?;
            buf.extend_from_slice(body);
        }
        _ => {
            let meta = Meta {
                version: env!("CARGO_PKG_VERSION"),
                timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
                threads_used: rayon::current_num_threads(),
            };
            let report = Report {
                command: &cfg.command,
                config: cfg,
                pass: outcome.failures.is_empty(),
                failures: &outcome.failures,
                results: &outcome.results,
                meta,
            };
            serde_json::to_writer_pretty(&mut buf, &report)?;
            buf.push(b'\n');
        }
    }
    Ok(buf)
}

pub fn write(cfg: &RunConfig, bytes: &[u8]) -> Result<Option<PathBuf>> {
    match destination(cfg) {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
            }
            std::fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
            Ok(Some(path))
        }
        None => {
            std::io::stdout().write_all(bytes)?;
            Ok(None)
        }
    }
}
