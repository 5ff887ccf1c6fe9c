//! CSV and JSON files, and seeded white Gaussian noise.
//!
//! Series files hold one sample per row. An optional header row is either
//! `value` or `index,value`; with the two-column form the first index sets
//! the series start. Lines starting with `#` are comments, and a
//! `# rate=<Hz>` comment sets the sample rate.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApmsError, Result};
use crate::scalar::Scalar;
use crate::signal_model::SampleSeries;

/// Name of the generator behind [`add_awgn`].
pub const RNG_ALGORITHM: &str = "ChaCha20Rng (rand_chacha 0.10)";

/// How a noisy series was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseMetadata {
    pub rng: String,
    pub seed: u64,
    /// `null` in JSON when no noise was added.
    pub snr_db: Option<f64>,
}

impl NoiseMetadata {
    pub fn new(seed: u64, snr_db: f64) -> Self {
        NoiseMetadata { rng: RNG_ALGORITHM.into(), seed, snr_db: snr_db.is_finite().then_some(snr_db) }
    }
}

fn parse_value<T: Scalar>(field: &str, row: usize) -> Result<T> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| ApmsError::Parse { row, message: format!("`{}` is not a number", field.trim()) })?;
    if !v.is_finite() {
        return Err(ApmsError::Parse { row, message: format!("`{}` is not finite", field.trim()) });
    }
    T::from_f64(v).ok_or_else(|| ApmsError::Parse { row, message: format!("{v} does not fit the sample type") })
}

/// Parses series text (see the module docs for the format).
pub fn parse_series<T: Scalar>(text: &str) -> Result<SampleSeries<T>> {
    let mut rate = 1.0;
    for line in text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some(r) = rest.trim().strip_prefix("rate=") {
                rate = r.trim().parse::<f64>().ok().filter(|v| v.is_finite() && *v > 0.0).ok_or_else(|| {
                    ApmsError::arg(format!("invalid sample rate `{}`", r.trim()))
                })?;
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut values = Vec::new();
    let mut start: Option<i64> = None;
    let mut columns: Option<usize> = None;
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| ApmsError::Parse {
            row: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let row = rec.position().map_or(k + 1, |p| p.line() as usize);
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if columns.is_none() {
            let fields: Vec<&str> = rec.iter().collect();
            match fields.as_slice() {
                ["value"] => {
                    columns = Some(1);
                    continue;
                }
                ["index", "value"] => {
                    columns = Some(2);
                    continue;
                }
                _ => columns = Some(rec.len()),
            }
        }
        let width = columns.unwrap_or(1);
        if rec.len() != width || !(1..=2).contains(&width) {
            return Err(ApmsError::Parse { row, message: format!("expected {width} column(s), found {}", rec.len()) });
        }
        if width == 2 {
            let idx: i64 = rec[0]
                .parse()
                .map_err(|_| ApmsError::Parse { row, message: format!("`{}` is not an integer index", &rec[0]) })?;
            let expected = start.map(|s| s + values.len() as i64);
            match expected {
                None => start = Some(idx),
                Some(e) if e != idx => {
                    return Err(ApmsError::Parse { row, message: format!("index {idx} breaks the sequence (expected {e})") })
                }
                _ => {}
            }
            values.push(parse_value(&rec[1], row)?);
        } else {
            values.push(parse_value(&rec[0], row)?);
        }
    }
    if values.is_empty() {
        return Err(ApmsError::arg("series file holds no samples"));
    }
    Ok(SampleSeries { values, start_index: start.unwrap_or(0), sample_rate: rate })
}

pub fn read_series<T: Scalar>(path: impl AsRef<Path>) -> Result<SampleSeries<T>> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| io_error(path.as_ref(), e))?;
    parse_series(&text)
}

/// Series text: a `value` header when the series starts at 0, otherwise
/// `index,value` rows; values use the shortest exact decimal form.
pub fn format_series<T: Scalar>(series: &SampleSeries<T>) -> String {
    let mut out = String::new();
    if series.sample_rate != 1.0 {
        out.push_str(&format!("# rate={}\n", series.sample_rate));
    }
    if series.start_index == 0 {
        out.push_str("value\n");
        for v in &series.values {
            out.push_str(&format!("{}\n", v.as_f64()));
        }
    } else {
        out.push_str("index,value\n");
        for (n, v) in series.indices().zip(&series.values) {
            out.push_str(&format!("{n},{}\n", v.as_f64()));
        }
    }
    out
}

pub fn write_series<T: Scalar>(series: &SampleSeries<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path.as_ref(), format_series(series)).map_err(|e| io_error(path.as_ref(), e))
}

fn io_error(path: &Path, e: std::io::Error) -> ApmsError {
    ApmsError::Io(format!("{}: {e}", path.display()))
}

/// Pretty JSON; floats survive a read-back bit for bit.
pub fn write_json<S: Serialize>(value: &S, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ApmsError::arg(format!("cannot serialize: {e}")))?;
    fs::write(path.as_ref(), text + "\n").map_err(|e| io_error(path.as_ref(), e))
}

pub fn read_json<D: DeserializeOwned>(path: impl AsRef<Path>) -> Result<D> {
    let text = fs::read_to_string(path.as_ref()).map_err(|e| io_error(path.as_ref(), e))?;
    serde_json::from_str(&text)
        .map_err(|e| ApmsError::Parse { row: e.line(), message: format!("{}: {e}", path.as_ref().display()) })
}

pub fn write_report<S: Serialize>(report: &S, path: impl AsRef<Path>) -> Result<()> {
    write_json(report, path)
}

pub fn write_model<S: Serialize>(model: &S, path: impl AsRef<Path>) -> Result<()> {
    write_json(model, path)
}

/// Adds zero-mean Gaussian noise with variance `mean_square / 10^(snr_db/10)`.
///
/// `snr_db = +∞` returns the series unchanged. The same seed always gives
/// the same noise.
pub fn add_awgn<T: Scalar>(series: &SampleSeries<T>, snr_db: f64, seed: u64) -> Result<SampleSeries<T>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(ApmsError::arg(format!("SNR must be a number or +inf, got {snr_db}")));
    }
    let power = series.mean_square().as_f64();
    if !(power > 0.0) {
        return Err(ApmsError::arg("cannot set an SNR on a zero-power series"));
    }
    if snr_db == f64::INFINITY {
        return Ok(series.clone());
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let values = series
        .values
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + T::lit(sigma * z)
        })
        .collect();
    Ok(SampleSeries { values, start_index: series.start_index, sample_rate: series.sample_rate })
}
