//! Analysis configuration, read from TOML and overridden by flags.

use std::path::{Path, PathBuf};

use puf_entropy::codes::{code_by_name, STANDARD_CODES};
use puf_entropy::dataset::{Delimiter, FormatDescriptor, MeasurementReduction, Orientation};
use puf_entropy::grouping::RepresentativeMode;
use puf_entropy::keyrank::DEFAULT_BINS;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: Option<PathBuf>,
    pub orientation: Orientation,
    pub delimiter: Delimiter,
    pub header: bool,
    pub measurements_per_device: usize,
    pub reduction: MeasurementReduction,
    /// Devices kept for analysis, by index; all when absent.
    pub devices: Option<Vec<usize>>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        let f = FormatDescriptor::default();
        Self {
            path: None,
            orientation: f.orientation,
            delimiter: f.delimiter,
            header: f.header,
            measurements_per_device: f.measurements_per_device,
            reduction: MeasurementReduction::default(),
            devices: None,
        }
    }
}

impl DatasetConfig {
    pub fn format(&self) -> FormatDescriptor {
        FormatDescriptor {
            orientation: self.orientation,
            delimiter: self.delimiter,
            header: self.header,
            measurements_per_device: self.measurements_per_device,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub dataset: DatasetConfig,
    pub codes: Vec<String>,
    pub theta_delta: Vec<f64>,
    pub mode: RepresentativeMode,
    /// Entropy lost to the hash function, in bits.
    pub hash_loss: f64,
    /// Compute the exact columns where feasible.
    pub exact: bool,
    pub seed: u64,
    pub keys: usize,
    pub bins: usize,
    pub output_dir: PathBuf,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            codes: STANDARD_CODES.iter().map(|s| s.to_string()).collect(),
            theta_delta: vec![0.05, 0.1],
            mode: RepresentativeMode::Highest,
            hash_loss: 0.0,
            exact: true,
            seed: 1,
            keys: 10,
            bins: DEFAULT_BINS,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl AnalysisConfig {
    /// Reads a TOML file; a relative dataset path is taken relative to the
    /// file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(p) = &cfg.dataset.path {
            if p.is_relative() {
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.dataset.path = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.codes.is_empty() {
            return Err(CliError::Config("no codes configured".into()));
        }
        for c in &self.codes {
            code_by_name(c).map_err(|e| CliError::Config(e.to_string()))?;
        }
        for &t in &self.theta_delta {
            if !(t > 0.0 && t <= 1.0) {
                return Err(CliError::Config(format!("theta_delta {t} is outside (0, 1]")));
            }
        }
        if !(self.hash_loss.is_finite() && self.hash_loss >= 0.0) {
            return Err(CliError::Config(format!("hash_loss {} must be >= 0", self.hash_loss)));
        }
        if self.keys == 0 || self.bins == 0 {
            return Err(CliError::Config("keys and bins must be positive".into()));
        }
        if self.dataset.measurements_per_device == 0 {
            return Err(CliError::Config("measurements_per_device must be positive".into()));
        }
        Ok(())
    }

    /// The resolved configuration as TOML text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// Parses `0-191,195` style index lists.
pub fn parse_device_list(s: &str) -> CliResult<Vec<usize>> {
    let bad = || CliError::Config(format!("invalid device list {s:?}"));
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    if out.is_empty() {
        return Err(bad());
    }
    Ok(out)
}
