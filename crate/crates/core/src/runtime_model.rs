//! Quadratic inference-time law `time = k · (n² − n)` for a linker run over
//! all pairs of `n` records, fitted by least squares.

use std::io::{Read, Write};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::PairLinker;
use crate::records::Record;

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub record_count: u64,
    pub elapsed_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub k: f64,
    /// Zero unless fitted with [`fit_with_intercept`].
    #[serde(default)]
    pub intercept: f64,
    /// Root-mean-square residual in seconds.
    pub fit_residual: f64,
    pub n_points: usize,
}

fn regressor(n: u64) -> f64 {
    let n = n as f64;
    n * n - n
}

fn usable(measurements: &[Measurement]) -> Result<Vec<(f64, f64)>> {
    let pts: Vec<(f64, f64)> =
        measurements.iter().filter(|m| m.record_count >= 2).map(|m| (regressor(m.record_count), m.elapsed_seconds)).collect();
    if pts.is_empty() {
        return Err(Error::Invalid("runtime fit needs at least one measurement with n >= 2".into()));
    }
    if pts.iter().any(|&(_, t)| !(t.is_finite() && t >= 0.0)) {
        return Err(Error::Invalid("elapsed times must be finite and non-negative".into()));
    }
    Ok(pts)
}

fn rms(pts: &[(f64, f64)], k: f64, c: f64) -> f64 {
    (pts.iter().map(|&(x, t)| (t - (k * x + c)).powi(2)).sum::<f64>() / pts.len() as f64).sqrt()
}

/// Closed-form single-coefficient least squares:
/// `k = Σ t·x / Σ x²` with `x = n² − n`. Measurements with `n < 2` carry no
/// signal and are skipped.
pub fn fit(measurements: &[Measurement]) -> Result<RuntimeModel> {
    let pts = usable(measurements)?;
    let sxt: f64 = pts.iter().map(|&(x, t)| x * t).sum();
    let sxx: f64 = pts.iter().map(|&(x, _)| x * x).sum();
    let k = (sxt / sxx).max(0.0);
    Ok(RuntimeModel { k, intercept: 0.0, fit_residual: rms(&pts, k, 0.0), n_points: pts.len() })
}

/// Ordinary least squares with a constant term, for real benchmarks where
/// fixed overhead dominates small sizes. Falls back to [`fit`] with fewer
/// than two distinct sizes.
pub fn fit_with_intercept(measurements: &[Measurement]) -> Result<RuntimeModel> {
    let pts = usable(measurements)?;
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mt = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|&(x, _)| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return fit(measurements);
    }
    let sxt: f64 = pts.iter().map(|&(x, t)| (x - mx) * (t - mt)).sum();
    let k = (sxt / sxx).max(0.0);
    let c = mt - k * mx;
    Ok(RuntimeModel { k, intercept: c, fit_residual: rms(&pts, k, c), n_points: pts.len() })
}

impl RuntimeModel {
    pub fn with_k(k: f64) -> Self {
        Self { k, intercept: 0.0, fit_residual: 0.0, n_points: 0 }
    }
}

pub fn predict_seconds(model: &RuntimeModel, n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    model.k * regressor(n) + model.intercept
}

pub fn predict_days(model: &RuntimeModel, n: u64) -> f64 {
    predict_seconds(model, n) / SECONDS_PER_DAY
}

/// Wall-clock time for `linker` over every pair of the first `n` records,
/// for each `n` in `sizes`. One untimed warm-up pass over the smallest size
/// runs first.
pub fn benchmark(linker: &dyn PairLinker, sizes: &[usize], records: &[Record]) -> Result<Vec<Measurement>> {
    if let Some(&max) = sizes.iter().max() {
        if max > records.len() {
            return Err(Error::Invalid(format!("benchmark size {max} exceeds the {} available records", records.len())));
        }
    }
    let run = |n: usize| -> Result<usize> {
        let pool = &records[..n];
        let mut matches = 0;
        for i in 0..n {
            for b in &pool[i + 1..] {
                matches += usize::from(linker.link(&pool[i], b)?);
            }
        }
        Ok(matches)
    };
    if let Some(&smallest) = sizes.iter().min() {
        std::hint::black_box(run(smallest)?);
    }
    sizes
        .iter()
        .map(|&n| {
            let start = Instant::now();
            std::hint::black_box(run(n)?);
            Ok(Measurement { record_count: n as u64, elapsed_seconds: start.elapsed().as_secs_f64() })
        })
        .collect()
}

pub fn write_measurements_csv<W: Write>(ms: &[Measurement], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for m in ms {
        wtr.serialize(m)?;
    }
    wtr.flush().map_err(|e| Error::io("<measurements>", e))?;
    Ok(())
}

pub fn read_measurements_csv<R: Read>(r: R) -> Result<Vec<Measurement>> {
    csv::Reader::from_reader(r).deserialize().map(|m| m.map_err(Error::from)).collect()
}
