//! Output formatting and file writing.

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::AnalysisConfig;
use crate::error::{CliError, CliResult};

/// Rounds like the printed reference table: no decimals from 100 up, one
/// from 10 up, two below. NaN and missing values print as `NaN`.
pub fn table_round(v: Option<f64>) -> String {
    let Some(v) = v.filter(|v| !v.is_nan()) else {
        return "NaN".into();
    };
    let s = match v.abs() {
        a if a >= 100.0 => format!("{v:.0}"),
        a if a >= 10.0 => format!("{v:.1}"),
        _ => format!("{v:.2}"),
    };
    match s.strip_prefix('-') {
        Some(rest) if rest.chars().all(|c| c == '0' || c == '.') => rest.to_string(),
        _ => s,
    }
}

/// The resolved configuration as `#` comment lines.
pub fn config_comment(cfg: &AnalysisConfig) -> String {
    cfg.to_toml().lines().map(|l| format!("# {l}\n")).collect()
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<PathBuf> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, contents).map_err(|source| CliError::Output {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}
