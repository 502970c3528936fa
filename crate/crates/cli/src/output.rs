use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOL: &str = "gina";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::data(format!("cannot write {}: {e}", path.display()))
}

/// Creates the output directory and echoes the effective config into it,
/// both as a reloadable `effective_config.toml` and as `run.json` with the
/// tool version.
pub fn prepare(config: &RunConfig, command: &str) -> Result<PathBuf, CliError> {
    let out = config
        .out
        .clone()
        .ok_or_else(|| CliError::config("missing --out"))?;
    fs::create_dir_all(&out).map_err(|e| write_error(&out, e))?;
    let toml_text = toml::to_string(config).map_err(|e| CliError::config(e.to_string()))?;
    let header = format!("# {TOOL} {VERSION}, command `{command}`\n");
    let path = out.join("effective_config.toml");
    fs::write(&path, header + &toml_text).map_err(|e| write_error(&path, e))?;
    let record = RunRecord {
        tool: TOOL,
        version: VERSION,
        command,
        config,
    };
    write_json(&out.join("run.json"), &record)?;
    Ok(out)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| write_error(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| write_error(path, e))?;
    w.write_all(b"\n").map_err(|e| write_error(path, e))?;
    w.flush().map_err(|e| write_error(path, e))
}

/// One JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| write_error(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| write_error(path, e))?;
        w.write_all(b"\n").map_err(|e| write_error(path, e))?;
    }
    w.flush().map_err(|e| write_error(path, e))
}

pub fn write_trace(path: &Path, trace: &[f64]) -> Result<(), CliError> {
    let mut text = String::from("epoch,bound\n");
    for (e, b) in trace.iter().enumerate() {
        text += &format!("{},{}\n", e + 1, gina_core::dataio::format_number(*b));
    }
    fs::write(path, text).map_err(|e| write_error(path, e))
}
