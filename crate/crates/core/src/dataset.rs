//! Ring-oscillator frequency ingestion, response derivation and Bit-Alias.
//!
//! A response bit is obtained from two adjacent oscillators of a device:
//! bit `i` is 1 iff oscillator `2i` runs faster than oscillator `2i + 1`.
//! Pairs are mutually exclusive, so `ro_count` oscillators yield
//! `ro_count / 2` bits. Exact frequency ties produce a 0 and are recorded.

use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::numeric::log2_dominant;
use crate::{Error, Result};

/// How devices are laid out in a frequency file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    #[default]
    DevicesInRows,
    DevicesInCols,
}

/// Token separator of a frequency file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Delimiter {
    Whitespace,
    Comma,
    /// Commas and whitespace both separate tokens.
    #[default]
    Any,
}

/// How repeated measurements of one device are reduced to a single response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasurementReduction {
    #[default]
    First,
    /// Per-bit majority over all measurements; an even split yields 0.
    MajorityVote,
}

/// Declared layout of a frequency file. Nothing is sniffed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FormatDescriptor {
    pub orientation: Orientation,
    pub delimiter: Delimiter,
    /// Skip the first non-comment line.
    pub header: bool,
    /// Consecutive records (after orientation is applied) that belong to one
    /// device.
    pub measurements_per_device: usize,
}

impl Default for FormatDescriptor {
    fn default() -> Self {
        Self {
            orientation: Orientation::DevicesInRows,
            delimiter: Delimiter::Any,
            header: false,
            measurements_per_device: 1,
        }
    }
}

/// Oscillator frequencies, one record per device measurement.
///
/// Records are stored device-major: the `measurements` records of device `d`
/// are rows `d * measurements .. (d + 1) * measurements`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyMatrix {
    values: Vec<f64>,
    device_count: usize,
    ro_count: usize,
    measurements: usize,
}

impl FrequencyMatrix {
    /// Builds a matrix from one row per device. Rejects ragged or
    /// non-positive input.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_records(rows, 1)
    }

    pub fn from_records(rows: Vec<Vec<f64>>, measurements: usize) -> Result<Self> {
        if measurements == 0 {
            return Err(Error::Parameter("measurements_per_device must be >= 1".into()));
        }
        let ro_count = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || ro_count == 0 {
            return Err(Error::Shape("empty frequency matrix".into()));
        }
        if !rows.len().is_multiple_of(measurements) {
            return Err(Error::Shape(format!(
                "{} records is not a multiple of {} measurements per device",
                rows.len(),
                measurements
            )));
        }
        let mut values = Vec::with_capacity(rows.len() * ro_count);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != ro_count {
                return Err(Error::Shape(format!(
                    "record {} has {} values, expected {}",
                    r + 1,
                    row.len(),
                    ro_count
                )));
            }
            for (c, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::Parse {
                        row: r + 1,
                        column: c + 1,
                        message: format!("frequency {v} is not finite and positive"),
                    });
                }
            }
            values.extend_from_slice(row);
        }
        Ok(Self {
            device_count: rows.len() / measurements,
            values,
            ro_count,
            measurements,
        })
    }

    pub fn device_count(&self) -> usize {
        self.device_count
    }

    pub fn ro_count(&self) -> usize {
        self.ro_count
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    /// Frequencies of measurement `m` of device `d`.
    pub fn record(&self, device: usize, measurement: usize) -> &[f64] {
        let r = device * self.measurements + measurement;
        &self.values[r * self.ro_count..(r + 1) * self.ro_count]
    }

    /// First measurement of each device.
    pub fn device(&self, device: usize) -> &[f64] {
        self.record(device, 0)
    }

    /// Keeps the listed devices, in the listed order.
    pub fn select_devices(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Parameter("device selection is empty".into()));
        }
        let mut values = Vec::with_capacity(indices.len() * self.measurements * self.ro_count);
        for &d in indices {
            if d >= self.device_count {
                return Err(Error::Parameter(format!(
                    "device index {d} out of range (dataset has {} devices)",
                    self.device_count
                )));
            }
            for m in 0..self.measurements {
                values.extend_from_slice(self.record(d, m));
            }
        }
        Ok(Self {
            values,
            device_count: indices.len(),
            ro_count: self.ro_count,
            measurements: self.measurements,
        })
    }

    /// Appends the devices of `other` (same oscillator count and measurement
    /// layout required).
    pub fn concat(mut self, other: &FrequencyMatrix) -> Result<Self> {
        if other.ro_count != self.ro_count || other.measurements != self.measurements {
            return Err(Error::Shape(format!(
                "cannot join {}x{} (m={}) with {}x{} (m={})",
                self.device_count,
                self.ro_count,
                self.measurements,
                other.device_count,
                other.ro_count,
                other.measurements
            )));
        }
        self.values.extend_from_slice(&other.values);
        self.device_count += other.device_count;
        Ok(self)
    }
}

/// Parses a whitespace- or comma-separated numeric matrix.
///
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_frequencies<R: Read>(mut input: R, format: &FormatDescriptor) -> Result<FrequencyMatrix> {
    let mut text = String::new();
    input.read_to_string(&mut text)?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_pending = format.header;
    for (line_no, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let tokens: Vec<&str> = match format.delimiter {
            Delimiter::Whitespace => trimmed.split_whitespace().collect(),
            Delimiter::Comma => trimmed.split(',').map(str::trim).collect(),
            Delimiter::Any => trimmed
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|t| !t.is_empty())
                .collect(),
        };
        let mut row = Vec::with_capacity(tokens.len());
        for (col, tok) in tokens.iter().enumerate() {
            let v: f64 = tok.parse().map_err(|_| Error::Parse {
                row: line_no + 1,
                column: col + 1,
                message: format!("invalid number {tok:?}"),
            })?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parse {
                    row: line_no + 1,
                    column: col + 1,
                    message: format!("frequency {tok} is not finite and positive"),
                });
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(Error::Shape(format!(
                    "line {} has {} values, expected {}",
                    line_no + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Shape("input contains no data rows".into()));
    }

    let records = match format.orientation {
        Orientation::DevicesInRows => rows,
        Orientation::DevicesInCols => {
            let cols = rows[0].len();
            (0..cols).map(|c| rows.iter().map(|r| r[c]).collect()).collect()
        }
    };
    FrequencyMatrix::from_records(records, format.measurements_per_device)
}

/// A response position where both oscillators had identical frequency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TieRecord {
    pub device: usize,
    pub position: usize,
}

/// Binary responses, one row of `n` bits per device.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeviceResponses {
    bits: Vec<u8>,
    device_count: usize,
    n: usize,
    ties: Vec<TieRecord>,
}

impl DeviceResponses {
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let n = rows.first().map_or(0, Vec::len);
        if rows.is_empty() || n == 0 {
            return Err(Error::Shape("empty response matrix".into()));
        }
        let mut bits = Vec::with_capacity(rows.len() * n);
        for (d, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::Shape(format!(
                    "device {d} has {} bits, expected {n}",
                    row.len()
                )));
            }
            if let Some(&b) = row.iter().find(|&&b| b > 1) {
                return Err(Error::Parameter(format!("response bit value {b} is not 0 or 1")));
            }
            bits.extend_from_slice(row);
        }
        Ok(Self {
            device_count: rows.len(),
            bits,
            n,
            ties: Vec::new(),
        })
    }

    pub fn device_count(&self) -> usize {
        self.device_count
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn device(&self, d: usize) -> &[u8] {
        &self.bits[d * self.n..(d + 1) * self.n]
    }

    pub fn ties(&self) -> &[TieRecord] {
        &self.ties
    }

    /// Reorders (or subsets) devices.
    pub fn select_devices(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices
            .iter()
            .map(|&d| {
                if d < self.device_count {
                    Ok(self.device(d).to_vec())
                } else {
                    Err(Error::Parameter(format!("device index {d} out of range")))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(rows)
    }
}

fn compare_pairs(freqs: &[f64], device: usize, out: &mut Vec<u8>, ties: &mut Vec<TieRecord>) {
    for (i, pair) in freqs.chunks_exact(2).enumerate() {
        if pair[0] == pair[1] {
            ties.push(TieRecord { device, position: i });
        }
        out.push(u8::from(pair[0] > pair[1]));
    }
}

/// Derives responses from the first measurement of each device.
pub fn derive_responses(freqs: &FrequencyMatrix) -> Result<DeviceResponses> {
    derive_responses_with(freqs, MeasurementReduction::First)
}

pub fn derive_responses_with(
    freqs: &FrequencyMatrix,
    reduction: MeasurementReduction,
) -> Result<DeviceResponses> {
    if !freqs.ro_count.is_multiple_of(2) {
        return Err(Error::Shape(format!(
            "oscillator count {} is odd; exclusive pairing needs an even count",
            freqs.ro_count
        )));
    }
    let n = freqs.ro_count / 2;
    let mut bits = Vec::with_capacity(freqs.device_count * n);
    let mut ties = Vec::new();
    for d in 0..freqs.device_count {
        match reduction {
            MeasurementReduction::First => compare_pairs(freqs.device(d), d, &mut bits, &mut ties),
            MeasurementReduction::MajorityVote => {
                let m = freqs.measurements;
                let mut ones = vec![0usize; n];
                let mut scratch = Vec::with_capacity(n);
                let mut scratch_ties = Vec::new();
                for meas in 0..m {
                    scratch.clear();
                    compare_pairs(freqs.record(d, meas), d, &mut scratch, &mut scratch_ties);
                    for (o, &b) in ones.iter_mut().zip(&scratch) {
                        *o += b as usize;
                    }
                }
                // a tie only matters if it survives into the majority decision
                for (i, &o) in ones.iter().enumerate() {
                    if 2 * o == m {
                        ties.push(TieRecord { device: d, position: i });
                    }
                    bits.push(u8::from(2 * o > m));
                }
            }
        }
    }
    Ok(DeviceResponses {
        bits,
        device_count: freqs.device_count,
        n,
        ties,
    })
}

/// Per-position probability of a 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasVector {
    p: Vec<f64>,
}

impl BiasVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if let Some((i, v)) = p.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Parameter(format!("bias p[{i}] = {v} outside [0, 1]")));
        }
        Ok(Self { p })
    }

    /// Builds `p_i = ones_i / devices` from integer counts, so the value does
    /// not depend on the order in which devices were read.
    pub fn from_counts(ones: &[usize], devices: usize) -> Result<Self> {
        if devices == 0 {
            return Err(Error::Parameter("device count must be positive".into()));
        }
        Self::new(ones.iter().map(|&c| c as f64 / devices as f64).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> &[f64] {
        &self.p[range]
    }

    /// Arithmetic mean of all positions.
    pub fn mean(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }

    /// `index,p` CSV with full-precision values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,p\n");
        for (i, p) in self.p.iter().enumerate() {
            out.push_str(&format!("{i},{p}\n"));
        }
        out
    }

    /// Row-major grid of `width` positions per line, for heat-map plotting.
    pub fn heatmap_grid(&self, width: usize) -> String {
        let width = width.max(1);
        let mut out = String::new();
        for row in self.p.chunks(width) {
            let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    /// Per-position min-entropy `-log2(max(p, 1 - p))`.
    pub fn entropy_per_bit(&self) -> Vec<f64> {
        self.p.iter().map(|&p| -log2_dominant(p)).collect()
    }
}

/// Relative frequency of a 1 at each response position.
pub fn bit_alias(resp: &DeviceResponses) -> BiasVector {
    let mut ones = vec![0usize; resp.n];
    for d in 0..resp.device_count {
        for (o, &b) in ones.iter_mut().zip(resp.device(d)) {
            *o += b as usize;
        }
    }
    BiasVector::from_counts(&ones, resp.device_count).expect("device_count >= 1 by construction")
}

/// Positions where a bias was mirrored by [`normalize_bias`]; 1 = flipped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlipMask(pub Vec<u8>);

impl FlipMask {
    pub fn is_flipped(&self, i: usize) -> bool {
        self.0[i] == 1
    }

    /// Compact `0101...` rendering.
    pub fn to_bit_string(&self) -> String {
        self.0.iter().map(|&b| if b == 1 { '1' } else { '0' }).collect()
    }
}

/// Mirrors every `p_i < 0.5` to `1 - p_i`.
///
/// Min-entropy is unchanged; the same positions of helper data are inverted
/// to keep the construction consistent.
pub fn normalize_bias(p: &BiasVector) -> (BiasVector, FlipMask) {
    let mut mask = Vec::with_capacity(p.len());
    let values = p
        .p
        .iter()
        .map(|&v| {
            if v < 0.5 {
                mask.push(1);
                1.0 - v
            } else {
                mask.push(0);
                v
            }
        })
        .collect();
    (BiasVector { p: values }, FlipMask(mask))
}
