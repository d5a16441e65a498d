//! L2-regularized logistic regression over pair features, trained by seeded
//! mini-batch gradient descent on z-scored inputs.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{extract_batch, extract_features, FeatureSpec, PairLinker, FEATURE_NAMES, N_FEATURES};
use crate::error::{Error, Result};
use crate::evaluate::{macro_f1, ConfusionCounts};
use crate::exec::Exec;
use crate::pairing::{LabeledPair, PairKey, Provenance};
use crate::records::{Record, RecordIndex};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
    /// Reweight the loss so both classes contribute equally.
    pub class_weighting: bool,
}

impl Default for Hyper {
    fn default() -> Self {
        Self { epochs: 10, batch_size: 32, learning_rate: 0.05, weight_decay: 0.01, seed: 0, class_weighting: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub weights: Vec<f64>,
    pub bias: f64,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    /// Constant features: std forced to 1 and weight held at 0.
    pub frozen: Vec<bool>,
    pub hyper: Hyper,
    pub decision_threshold: f64,
    pub feature_spec: FeatureSpec,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Training set had a single class; the model cannot learn a boundary.
    pub degenerate: bool,
    /// 1-based epoch whose weights were kept (0 when no epoch ran).
    pub best_epoch: usize,
    /// Regularized training loss after each epoch.
    pub epoch_loss: Vec<f64>,
    /// Validation macro F1 after each epoch, when a validation set was given.
    pub val_macro_f1: Vec<f64>,
}

impl ClassifierModel {
    /// A model with all-zero weights: every probability is exactly 0.5.
    pub fn zeroed(spec: FeatureSpec, hyper: Hyper) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names: FEATURE_NAMES.map(String::from).to_vec(),
            weights: vec![0.0; N_FEATURES],
            bias: 0.0,
            feature_means: vec![0.0; N_FEATURES],
            feature_stds: vec![1.0; N_FEATURES],
            frozen: vec![false; N_FEATURES],
            hyper,
            decision_threshold: 0.5,
            feature_spec: spec,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Invalid(format!("unsupported model format version {}", m.format_version)));
        }
        let n = m.feature_names.len();
        if n != N_FEATURES || [m.weights.len(), m.feature_means.len(), m.feature_stds.len(), m.frozen.len()].iter().any(|&l| l != n) {
            return Err(Error::Invalid("model vectors do not match the feature set".into()));
        }
        if m.feature_stds.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Invalid("model has non-positive feature std".into()));
        }
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn standardize(&self, x: &[f64; N_FEATURES]) -> [f64; N_FEATURES] {
        std::array::from_fn(|j| (x[j] - self.feature_means[j]) / self.feature_stds[j])
    }

    pub fn probability_of(&self, x: &[f64; N_FEATURES]) -> f64 {
        sigmoid(dot(&self.weights, &self.standardize(x)) + self.bias)
    }

    /// Ties at the threshold go to non-match.
    pub fn decide(&self, probability: f64) -> bool {
        probability > self.decision_threshold
    }

    /// Predictions for a batch of pairs, in input order.
    pub fn predict_batch(&self, keys: &[PairKey], records: &RecordIndex, exec: Exec) -> Result<Vec<LabeledPair>> {
        let refs: Vec<&PairKey> = keys.iter().collect();
        let rows = extract_batch(&refs, records, &self.feature_spec, exec)?;
        Ok(keys
            .iter()
            .zip(rows)
            .map(|(k, x)| LabeledPair::new(k.clone(), self.decide(self.probability_of(&x)), Provenance::Predicted))
            .collect())
    }
}

impl PairLinker for ClassifierModel {
    fn link(&self, a: &Record, b: &Record) -> Result<bool> {
        predict(self, a, b).map(|(label, _)| label)
    }
}

pub fn predict(model: &ClassifierModel, a: &Record, b: &Record) -> Result<(bool, f64)> {
    let x = extract_features(a, b, &model.feature_spec)?.to_array();
    let p = model.probability_of(&x);
    Ok((model.decide(p), p))
}

fn sigmoid(s: f64) -> f64 {
    if s >= 0.0 {
        1.0 / (1.0 + (-s).exp())
    } else {
        let e = s.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^x) without overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

/// Weighted mean logistic loss plus `weight_decay / 2 · ‖w‖²` (bias not
/// penalized), with its gradient. Returns `(loss, grad_w, grad_b)`.
pub fn loss_and_gradient<R: AsRef<[f64]>>(
    weights: &[f64],
    bias: f64,
    rows: &[R],
    labels: &[bool],
    sample_weights: Option<&[f64]>,
    weight_decay: f64,
) -> (f64, Vec<f64>, f64) {
    let n = rows.len().max(1) as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (i, (x, &y)) in rows.iter().zip(labels).enumerate() {
        let x = x.as_ref();
        let c = sample_weights.map_or(1.0, |s| s[i]);
        let s = dot(weights, x) + bias;
        // -log p(y | x)
        loss += c * if y { softplus(-s) } else { softplus(s) };
        let r = c * (sigmoid(s) - f64::from(u8::from(y)));
        for (g, xj) in gw.iter_mut().zip(x) {
            *g += r * xj;
        }
        gb += r;
    }
    loss /= n;
    gb /= n;
    for (g, w) in gw.iter_mut().zip(weights) {
        *g = *g / n + weight_decay * w;
    }
    loss += 0.5 * weight_decay * dot(weights, weights);
    (loss, gw, gb)
}

/// Per-feature mean and population std; constant features get std 1 and are
/// reported as frozen.
fn column_stats(rows: &[[f64; N_FEATURES]]) -> ([f64; N_FEATURES], [f64; N_FEATURES], [bool; N_FEATURES]) {
    let n = rows.len() as f64;
    let mut mean = [0.0; N_FEATURES];
    for r in rows {
        for j in 0..N_FEATURES {
            mean[j] += r[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = [0.0; N_FEATURES];
    for r in rows {
        for j in 0..N_FEATURES {
            var[j] += (r[j] - mean[j]).powi(2);
        }
    }
    let mut std = [1.0; N_FEATURES];
    let mut frozen = [false; N_FEATURES];
    for j in 0..N_FEATURES {
        let s = (var[j] / n).sqrt();
        if s > 1e-12 {
            std[j] = s;
        } else {
            frozen[j] = true;
        }
    }
    (mean, std, frozen)
}

fn class_weights(labels: &[bool], enabled: bool) -> Option<Vec<f64>> {
    if !enabled {
        return None;
    }
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|&&y| y).count() as f64;
    let neg = n - pos;
    Some(
        labels
            .iter()
            .map(|&y| {
                let count = if y { pos } else { neg };
                n / (2.0 * count)
            })
            .collect(),
    )
}

/// Labeled feature rows.
pub struct FeatureSet<'a> {
    pub rows: &'a [[f64; N_FEATURES]],
    pub labels: &'a [bool],
}

/// Train on precomputed feature rows. With a validation set the epoch with
/// the highest validation macro F1 (earliest on ties) is returned; otherwise
/// the final epoch.
pub fn train_on_features(
    train: FeatureSet<'_>,
    val: Option<FeatureSet<'_>>,
    hyper: &Hyper,
    spec: FeatureSpec,
) -> Result<(ClassifierModel, TrainReport)> {
    if train.rows.is_empty() {
        return Err(Error::Invalid("training set is empty".into()));
    }
    if hyper.batch_size == 0 || !(hyper.learning_rate >= 0.0) || !(hyper.weight_decay >= 0.0) {
        return Err(Error::Invalid(format!("invalid hyperparameters {hyper:?}")));
    }
    let (mean, std, frozen) = column_stats(train.rows);
    if frozen.iter().all(|&f| f) {
        return Err(Error::Invalid("every feature is constant over the training set".into()));
    }

    let mut model = ClassifierModel::zeroed(spec, *hyper);
    model.feature_means = mean.to_vec();
    model.feature_stds = std.to_vec();
    model.frozen = frozen.to_vec();

    let mut report = TrainReport::default();
    let positives = train.labels.iter().filter(|&&y| y).count();
    if positives == 0 || positives == train.labels.len() {
        log::warn!("training set has a single class ({positives} matches of {}); the model is degenerate", train.labels.len());
        report.degenerate = true;
    }

    let z: Vec<[f64; N_FEATURES]> = train.rows.iter().map(|x| model.standardize(x)).collect();
    let cw = class_weights(train.labels, hyper.class_weighting);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut order: Vec<usize> = (0..z.len()).collect();
    let mut best: Option<(f64, Vec<f64>, f64)> = None;

    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let rows: Vec<&[f64]> = batch.iter().map(|&i| &z[i][..]).collect();
            let labels: Vec<bool> = batch.iter().map(|&i| train.labels[i]).collect();
            let sw: Option<Vec<f64>> = cw.as_ref().map(|w| batch.iter().map(|&i| w[i]).collect());
            let (_, gw, gb) = loss_and_gradient(&model.weights, model.bias, &rows, &labels, sw.as_deref(), hyper.weight_decay);
            for ((w, g), frozen) in model.weights.iter_mut().zip(&gw).zip(&model.frozen) {
                if !frozen {
                    *w -= hyper.learning_rate * g;
                }
            }
            model.bias -= hyper.learning_rate * gb;
        }
        let (loss, _, _) = loss_and_gradient(&model.weights, model.bias, &z, train.labels, cw.as_deref(), hyper.weight_decay);
        report.epoch_loss.push(loss);

        match &val {
            Some(v) => {
                let score = macro_f1(&confusion_on(&model, v));
                report.val_macro_f1.push(score);
                if best.as_ref().is_none_or(|(b, _, _)| score > *b) {
                    best = Some((score, model.weights.clone(), model.bias));
                    report.best_epoch = epoch;
                }
            }
            None => report.best_epoch = epoch,
        }
    }
    if let Some((_, w, b)) = best {
        model.weights = w;
        model.bias = b;
    }
    Ok((model, report))
}

fn confusion_on(model: &ClassifierModel, set: &FeatureSet<'_>) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for (x, &y) in set.rows.iter().zip(set.labels) {
        c.add(model.decide(model.probability_of(x)), y);
    }
    c
}

/// Extract features for `train` (and `val`) and fit a model.
pub fn train_classifier(
    train: &[LabeledPair],
    val: Option<&[LabeledPair]>,
    records: &RecordIndex,
    hyper: &Hyper,
    spec: &FeatureSpec,
    exec: Exec,
) -> Result<(ClassifierModel, TrainReport)> {
    let features = |pairs: &[LabeledPair]| -> Result<(Vec<[f64; N_FEATURES]>, Vec<bool>)> {
        let keys: Vec<&PairKey> = pairs.iter().map(|p| &p.key).collect();
        Ok((extract_batch(&keys, records, spec, exec)?, pairs.iter().map(|p| p.label).collect()))
    };
    let (xt, yt) = features(train)?;
    let val = match val {
        Some(v) if !v.is_empty() => Some(features(v)?),
        _ => None,
    };
    train_on_features(
        FeatureSet { rows: &xt, labels: &yt },
        val.as_ref().map(|(x, y)| FeatureSet { rows: x, labels: y }),
        hyper,
        spec.clone(),
    )
}
