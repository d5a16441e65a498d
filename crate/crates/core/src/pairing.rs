//! Candidate pairs, labeled pairs, stratified splits and class-controlled
//! subsampling.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::matcher::haversine_km;
use crate::records::{Dataset, Record};

/// An unordered record pair stored in canonical (`uri_1 < uri_2`) order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawKey")]
pub struct PairKey {
    uri_1: String,
    uri_2: String,
}

#[derive(Deserialize)]
struct RawKey {
    uri_1: String,
    uri_2: String,
}

impl TryFrom<RawKey> for PairKey {
    type Error = Error;
    fn try_from(raw: RawKey) -> Result<Self> {
        PairKey::new(raw.uri_1, raw.uri_2)
    }
}

impl PairKey {
    /// Builds the canonical key; argument order does not matter.
    pub fn new(a: impl Into<String>, b: impl Into<String>) -> Result<Self> {
        let (a, b) = (a.into(), b.into());
        match a.cmp(&b) {
            std::cmp::Ordering::Less => Ok(Self { uri_1: a, uri_2: b }),
            std::cmp::Ordering::Greater => Ok(Self { uri_1: b, uri_2: a }),
            std::cmp::Ordering::Equal => Err(Error::Invalid(format!("self-pair on `{a}`"))),
        }
    }

    pub fn uri_1(&self) -> &str {
        &self.uri_1
    }

    pub fn uri_2(&self) -> &str {
        &self.uri_2
    }
}

impl std::fmt::Display for PairKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.uri_1, self.uri_2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Provenance {
    GroundTruth,
    #[serde(rename = "LLM")]
    Llm,
    /// The labeler never produced Yes/No; stored as a non-match.
    AbstainDefaulted,
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledPair {
    #[serde(flatten)]
    pub key: PairKey,
    #[serde(with = "label01")]
    pub label: bool,
    pub provenance: Provenance,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

mod label01 {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
        match u8::deserialize(d)? {
            0 => Ok(false),
            1 => Ok(true),
            n => Err(D::Error::custom(format!("label must be 0 or 1, got {n}"))),
        }
    }
}

impl LabeledPair {
    pub fn new(key: PairKey, label: bool, provenance: Provenance) -> Self {
        Self { key, label, provenance, raw_response: None }
    }
}

pub fn write_pairs_jsonl<W: Write>(pairs: &[LabeledPair], mut w: W) -> Result<()> {
    for p in pairs {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n").map_err(|e| Error::io("<pairs>", e))?;
    }
    Ok(())
}

pub fn read_pairs_jsonl<R: BufRead>(r: R) -> Result<Vec<LabeledPair>> {
    read_jsonl(r)
}

pub fn write_keys_jsonl<W: Write>(keys: &[PairKey], mut w: W) -> Result<()> {
    for k in keys {
        serde_json::to_writer(&mut w, k)?;
        w.write_all(b"\n").map_err(|e| Error::io("<pairs>", e))?;
    }
    Ok(())
}

pub fn read_keys_jsonl<R: BufRead>(r: R) -> Result<Vec<PairKey>> {
    read_jsonl(r)
}

fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line.map_err(|e| Error::io("<jsonl>", e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Optional spatial prefilter. Disabled unless a distance is set: pairs
/// with both locations known and farther apart than the limit are dropped,
/// pairs with a missing location are kept.
#[derive(Debug, Clone, Copy, Default)]
pub struct PairFilter {
    pub max_distance_km: Option<f64>,
}

/// All `n(n-1)/2` pairs over the pooled records of every dataset, within and
/// across databases, sorted by `(uri_1, uri_2)`.
pub fn enumerate_pairs(datasets: &[Dataset]) -> Result<Vec<PairKey>> {
    enumerate_pairs_with(datasets, PairFilter::default(), Exec::default())
}

pub fn enumerate_pairs_with(datasets: &[Dataset], filter: PairFilter, exec: Exec) -> Result<Vec<PairKey>> {
    let records: Vec<&Record> = datasets.iter().flat_map(|d| d.records.iter()).collect();
    enumerate_record_pairs(&records, filter, exec)
}

pub fn enumerate_record_pairs(records: &[&Record], filter: PairFilter, exec: Exec) -> Result<Vec<PairKey>> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.uri.as_str()) {
            return Err(Error::DuplicateUri(r.uri.clone()));
        }
    }
    let mut sorted: Vec<&Record> = records.to_vec();
    sorted.sort_by(|a, b| a.uri.cmp(&b.uri));
    let n = sorted.len();
    let keep = |a: &Record, b: &Record| match (filter.max_distance_km, a.location, b.location) {
        (Some(limit), Some(p), Some(q)) => haversine_km(p, q).map(|d| d <= limit).unwrap_or(true),
        _ => true,
    };
    // sorted uris make every (i, j > i) pair canonical and the output sorted
    Ok(exec.flat_map_range(n, |i| {
        let a = sorted[i];
        sorted[i + 1..].iter().filter(|b| keep(a, b)).map(|b| PairKey { uri_1: a.uri.clone(), uri_2: b.uri.clone() }).collect()
    }))
}

/// `n choose 2`.
pub fn pair_count(n: u64) -> u64 {
    n * n.saturating_sub(1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub fractions: [f64; 3],
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { fractions: [0.8, 0.1, 0.1], seed: 0 }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let sum: f64 = self.fractions.iter().sum();
        if self.fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Invalid(format!("split fractions {:?} must lie in [0,1] and sum to 1", self.fractions)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<LabeledPair>,
    pub val: Vec<LabeledPair>,
    pub test: Vec<LabeledPair>,
}

/// Largest-remainder allocation of `count` items over the given fractions.
/// Each share is the floor or ceiling of its exact quota.
pub fn allocate(count: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let total: f64 = fractions.iter().sum();
    let quotas = fractions.map(|f| count as f64 * f / total);
    let mut shares = quotas.map(|q| q.floor() as usize);
    let assigned: usize = shares.iter().sum();
    let mut order = [0usize, 1, 2];
    // ties go to the earlier split
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &s in order.iter().take(count.saturating_sub(assigned)) {
        shares[s] += 1;
    }
    shares
}

fn shuffled_class(pairs: &[LabeledPair], label: bool, rng: &mut ChaCha8Rng) -> Vec<LabeledPair> {
    let mut class: Vec<LabeledPair> = pairs.iter().filter(|p| p.label == label).cloned().collect();
    class.sort_by(|a, b| a.key.cmp(&b.key));
    class.shuffle(rng);
    class
}

/// Per-class stratified partition into train/validation/test.
pub fn stratified_split(pairs: &[LabeledPair], spec: &SplitSpec) -> Result<Split> {
    if pairs.is_empty() {
        return Err(Error::Invalid("cannot split an empty pair set".into()));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut split = Split::default();
    for label in [true, false] {
        let class = shuffled_class(pairs, label, &mut rng);
        let [tr, va, _] = allocate(class.len(), &spec.fractions);
        let mut it = class.into_iter();
        split.train.extend(it.by_ref().take(tr));
        split.val.extend(it.by_ref().take(va));
        split.test.extend(it);
    }
    for part in [&mut split.train, &mut split.val, &mut split.test] {
        part.sort_by(|a, b| a.key.cmp(&b.key));
    }
    Ok(split)
}

/// Uniform sample without replacement of exactly `match_count` matches and
/// `nonmatch_count` non-matches, returned in canonical key order.
pub fn subsample_sweep(pairs: &[LabeledPair], match_count: usize, nonmatch_count: usize, seed: u64) -> Result<Vec<LabeledPair>> {
    let available = |label: bool| pairs.iter().filter(|p| p.label == label).count();
    for (label, class, requested) in [(true, "match", match_count), (false, "non-match", nonmatch_count)] {
        let available = available(label);
        if requested > available {
            return Err(Error::InsufficientClass { class, requested, available });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = shuffled_class(pairs, true, &mut rng);
    out.truncate(match_count);
    let mut non = shuffled_class(pairs, false, &mut rng);
    non.truncate(nonmatch_count);
    out.extend(non);
    out.sort_by(|a, b| a.key.cmp(&b.key));
    Ok(out)
}
