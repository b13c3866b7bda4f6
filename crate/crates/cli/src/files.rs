//! Config loading, config echoes and atomic output.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, CliResult};

pub const TOOL: &str = "tirefit";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn is_toml(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml"))
}

/// Parse a TOML or JSON document (chosen by extension) into a JSON value.
pub fn read_document(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Read { path: path.into(), source })?;
    let parsed = if is_toml(path) {
        toml::from_str::<Value>(&text).map_err(|e| e.to_string())
    } else {
        serde_json::from_str::<Value>(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| CliError::Parse { file: path.into(), message })
}

/// Deserialize `value`, reporting the offending field path on failure.
pub fn from_value<T: DeserializeOwned>(value: Value, file: &Path) -> CliResult<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let field = e.path().to_string();
        CliError::Config { file: file.into(), field, message: e.into_inner().to_string() }
    })
}

/// Load a typed document. A config echo written by `command` is unwrapped.
pub fn load_config<T: DeserializeOwned>(path: &Path, command: &str) -> CliResult<T> {
    let mut doc = read_document(path)?;
    if let Some(obj) = doc.as_object_mut() {
        if obj.get("tool").and_then(Value::as_str) == Some(TOOL) && obj.contains_key("config") {
            let echoed = obj.get("command").and_then(Value::as_str).unwrap_or_default();
            if echoed != command {
                return Err(CliError::Usage(format!(
                    "{} is a config echo of `{echoed}`, not `{command}`",
                    path.display()
                )));
            }
            doc = obj.remove("config").unwrap_or(Value::Null);
        }
    }
    from_value(doc, path)
}

pub fn load_typed<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    from_value(read_document(path)?, path)
}

pub fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|source| CliError::Read { path: path.into(), source })
}

/// Write `path` through a temporary file in the same directory and rename it into place.
pub fn write_atomic<F>(path: &Path, fill: F) -> CliResult<()>
where
    F: FnOnce(&mut dyn Write) -> Result<(), tirefit::io::IoError>,
{
    let werr = |source: std::io::Error| CliError::Write { path: path.into(), source };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(werr)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(werr)?;
    {
        let mut buf = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut buf).map_err(|e| match e {
            tirefit::io::IoError::Io(source) => werr(source),
            other => CliError::Data { path: path.into(), source: other },
        })?;
        buf.flush().map_err(werr)?;
    }
    tmp.persist(path).map_err(|e| werr(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

/// Record the effective settings next to the outputs so a run can be replayed
/// with `--config`.
pub fn write_echo<T: Serialize>(path: &Path, command: &str, config: &T) -> CliResult<()> {
    let echo = json!({ "tool": TOOL, "version": VERSION, "command": command, "config": config });
    write_json(path, &echo)
}

/// `dir/stem.suffix` for an output file `path`, e.g. `result.json` -> `result.config.json`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    path.with_file_name(format!("{stem}.{suffix}"))
}
