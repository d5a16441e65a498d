//! Match, non-match and macro-averaged F1, and the class-imbalance sweeps.

use std::collections::HashMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::matcher::classifier::{train_on_features, FeatureSet};
use crate::matcher::{extract_batch, FeatureSpec, Hyper, N_FEATURES};
use crate::pairing::{subsample_sweep, LabeledPair, PairKey};
use crate::records::RecordIndex;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    pub fn add(&mut self, predicted: bool, truth: bool) {
        match (predicted, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same counts seen with the classes swapped.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, tn: self.tp, fn_: self.fp }
    }
}

/// Compare predictions against truth over the same key set.
pub fn confusion(predictions: &[LabeledPair], truth: &[LabeledPair]) -> Result<ConfusionCounts> {
    let truth_by_key: HashMap<&PairKey, bool> = truth.iter().map(|p| (&p.key, p.label)).collect();
    let predicted_keys: std::collections::HashSet<&PairKey> = predictions.iter().map(|p| &p.key).collect();

    let mut missing_in_truth: Vec<&PairKey> = predictions.iter().map(|p| &p.key).filter(|k| !truth_by_key.contains_key(k)).collect();
    let mut missing_in_predictions: Vec<&PairKey> = truth.iter().map(|p| &p.key).filter(|k| !predicted_keys.contains(k)).collect();
    if !missing_in_truth.is_empty() || !missing_in_predictions.is_empty() || predictions.len() != truth.len() {
        missing_in_truth.sort();
        missing_in_predictions.sort();
        let first =
            missing_in_predictions.first().or(missing_in_truth.first()).map(|k| k.to_string()).unwrap_or_else(|| "duplicate keys".into());
        return Err(Error::KeyMismatch {
            missing_in_predictions: missing_in_predictions.len(),
            missing_in_truth: missing_in_truth.len(),
            first,
        });
    }

    let mut c = ConfusionCounts::default();
    for p in predictions {
        c.add(p.label, truth_by_key[&p.key]);
    }
    Ok(c)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// 2tp / (2tp + fp + fn); 0 when the denominator is 0.
pub fn match_f1(c: &ConfusionCounts) -> f64 {
    ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn_)
}

/// 2tn / (2tn + fp + fn); 0 when the denominator is 0.
pub fn nonmatch_f1(c: &ConfusionCounts) -> f64 {
    ratio(2 * c.tn, 2 * c.tn + c.fp + c.fn_)
}

/// tp / (2tp + fp + fn) + tn / (2tn + fp + fn).
///
/// Each term is exactly half the corresponding class F1 in floating point
/// (halving is exact), so this equals their mean bit for bit.
pub fn macro_f1(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, 2 * c.tp + c.fp + c.fn_) + ratio(c.tn, 2 * c.tn + c.fp + c.fn_)
}

/// Percentage rounded half-up to two decimals.
pub fn percent(x: f64) -> f64 {
    (x * 10_000.0 + 0.5).floor() / 100.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub counts: ConfusionCounts,
    pub match_f1: f64,
    pub nonmatch_f1: f64,
    pub macro_f1: f64,
}

impl EvalReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self { counts, match_f1: match_f1(&counts), nonmatch_f1: nonmatch_f1(&counts), macro_f1: macro_f1(&counts) }
    }

    /// `match / non-match / macro` as two-decimal percentages.
    pub fn table_row(&self) -> String {
        format!(
            "match F1 {:.2} | non-match F1 {:.2} | macro F1 {:.2}",
            percent(self.match_f1),
            percent(self.nonmatch_f1),
            percent(self.macro_f1)
        )
    }
}

pub fn evaluate(predictions: &[LabeledPair], truth: &[LabeledPair]) -> Result<EvalReport> {
    Ok(EvalReport::from_counts(confusion(predictions, truth)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepMode {
    /// Equal per-class counts; grid values are the per-class size.
    BalancedGrowth,
    /// Match count fixed at the anchor; grid values are non-match/match ratios.
    FixedMatchVaryNonmatch,
    /// Non-match count fixed at the anchor; grid values are match counts.
    FixedNonmatchVaryMatch,
}

impl SweepMode {
    pub fn name(self) -> &'static str {
        match self {
            SweepMode::BalancedGrowth => "balanced_growth",
            SweepMode::FixedMatchVaryNonmatch => "fixed_match_vary_nonmatch",
            SweepMode::FixedNonmatchVaryMatch => "fixed_nonmatch_vary_match",
        }
    }
}

impl std::str::FromStr for SweepMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [SweepMode::BalancedGrowth, SweepMode::FixedMatchVaryNonmatch, SweepMode::FixedNonmatchVaryMatch]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown sweep mode `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mode: SweepMode,
    pub grid: Vec<f64>,
    /// Fixed class size for the two fixed-class modes (ignored for
    /// `BalancedGrowth`).
    pub anchor: usize,
    pub seed: u64,
    pub hyper: Hyper,
}

impl SweepConfig {
    /// (match, non-match) training counts for every grid point.
    pub fn plan(&self) -> Result<Vec<(usize, usize)>> {
        if self.grid.is_empty() {
            return Err(Error::Invalid("sweep grid is empty".into()));
        }
        if self.grid.iter().any(|g| !(g.is_finite() && *g >= 0.0)) || self.grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Invalid(format!("sweep grid must be non-negative and strictly increasing: {:?}", self.grid)));
        }
        let count = |g: f64| g.round() as usize;
        Ok(self
            .grid
            .iter()
            .map(|&g| match self.mode {
                SweepMode::BalancedGrowth => (count(g), count(g)),
                SweepMode::FixedMatchVaryNonmatch => (self.anchor, count(self.anchor as f64 * g)),
                SweepMode::FixedNonmatchVaryMatch => (count(g), self.anchor),
            })
            .collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub mode: SweepMode,
    pub grid_value: f64,
    pub match_count: usize,
    pub nonmatch_count: usize,
    pub report: EvalReport,
    pub seed: u64,
}

/// For each grid point: subsample the labeled pool, train, predict the
/// full truth set and score it. Pool sizes are checked for every point
/// before any training starts.
pub fn run_sweep(
    cfg: &SweepConfig,
    pool: &[LabeledPair],
    truth: &[LabeledPair],
    records: &RecordIndex,
    spec: &FeatureSpec,
    exec: Exec,
) -> Result<Vec<SweepRow>> {
    let plan = cfg.plan()?;
    let pool_matches = pool.iter().filter(|p| p.label).count();
    let pool_non = pool.len() - pool_matches;
    for &(m, n) in &plan {
        for (class, requested, available) in [("match", m, pool_matches), ("non-match", n, pool_non)] {
            if requested > available {
                return Err(Error::InsufficientClass { class, requested, available });
            }
        }
    }
    if truth.is_empty() {
        return Err(Error::Invalid("sweep needs a non-empty truth set".into()));
    }

    // features are computed once per pool pair and once per truth pair
    let pool_keys: Vec<&PairKey> = pool.iter().map(|p| &p.key).collect();
    let pool_rows = extract_batch(&pool_keys, records, spec, exec)?;
    let row_of: HashMap<&PairKey, usize> = pool_keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let truth_keys: Vec<&PairKey> = truth.iter().map(|p| &p.key).collect();
    let truth_rows = extract_batch(&truth_keys, records, spec, exec)?;

    let points: Vec<(f64, (usize, usize))> = cfg.grid.iter().copied().zip(plan).collect();
    exec.try_map(&points, |&(grid_value, (m, n))| {
        let sample = subsample_sweep(pool, m, n, cfg.seed)?;
        let rows: Vec<[f64; N_FEATURES]> = sample.iter().map(|p| pool_rows[row_of[&p.key]]).collect();
        let labels: Vec<bool> = sample.iter().map(|p| p.label).collect();
        let mut counts = ConfusionCounts::default();
        if sample.is_empty() {
            // nothing to learn from: an untrained model predicts non-match
            truth.iter().for_each(|t| counts.add(false, t.label));
        } else {
            let hyper = Hyper { seed: cfg.seed, ..cfg.hyper };
            let (model, _) = train_on_features(FeatureSet { rows: &rows, labels: &labels }, None, &hyper, spec.clone())?;
            for (x, t) in truth_rows.iter().zip(truth) {
                counts.add(model.decide(model.probability_of(x)), t.label);
            }
        }
        Ok(SweepRow {
            mode: cfg.mode,
            grid_value,
            match_count: m,
            nonmatch_count: n,
            report: EvalReport::from_counts(counts),
            seed: cfg.seed,
        })
    })
}

pub const SWEEP_HEADER: [&str; 8] = ["mode", "grid_value", "match_count", "nonmatch_count", "match_f1", "nonmatch_f1", "macro_f1", "seed"];

pub fn write_sweep_csv<W: Write>(rows: &[SweepRow], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SWEEP_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.mode.name().to_owned(),
            r.grid_value.to_string(),
            r.match_count.to_string(),
            r.nonmatch_count.to_string(),
            format!("{:.6}", r.report.match_f1),
            format!("{:.6}", r.report.nonmatch_f1),
            format!("{:.6}", r.report.macro_f1),
            r.seed.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<sweep>", e))?;
    Ok(())
}
