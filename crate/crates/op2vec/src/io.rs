//! File helpers: atomic writes, JSON/TOML documents and embedding CSVs.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{AppError, AppResult};

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> AppResult<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| AppError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| AppError::io(path, e))?;
    tmp.as_file().sync_all().map_err(|e| AppError::io(path, e))?;
    tmp.persist(path).map_err(|e| AppError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| AppError::data(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> AppResult<T> {
    let text = fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    toml::from_str(&text).map_err(|e| AppError::data(format!("{}: {e}", path.display())))
}

pub fn write_toml<T: Serialize>(path: &Path, value: &T) -> AppResult<()> {
    let text = toml::to_string_pretty(value).map_err(|e| AppError::data(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

/// Renders rows as CSV text.
pub fn csv_bytes<H, R, F>(header: H, rows: R) -> AppResult<Vec<u8>>
where
    H: IntoIterator<Item = String>,
    R: IntoIterator<Item = F>,
    F: IntoIterator<Item = String>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(|e| AppError::data(e.to_string()))?;
    for row in rows {
        w.write_record(row).map_err(|e| AppError::data(e.to_string()))?;
    }
    w.into_inner().map_err(|e| AppError::data(e.to_string()))
}

pub fn write_csv<H, R, F>(path: &Path, header: H, rows: R) -> AppResult<()>
where
    H: IntoIterator<Item = String>,
    R: IntoIterator<Item = F>,
    F: IntoIterator<Item = String>,
{
    write_atomic(path, &csv_bytes(header, rows)?)
}
