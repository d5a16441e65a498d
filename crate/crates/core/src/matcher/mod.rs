//! Pairwise match decisions.
//!
//! Two deciders share the same record-pair interface: the distance plus
//! name-similarity rule baseline ([`rule_match`]) and a logistic classifier
//! over [`FeatureVector`]s trained on labeled pairs ([`classifier`]).

pub mod classifier;
mod geo;
mod text;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::pairing::PairKey;
use crate::records::{Record, RecordIndex};

pub use classifier::{predict, train_classifier, ClassifierModel, Hyper, TrainReport};
pub use geo::{haversine_km, EARTH_RADIUS_KM};
pub use text::{jaccard, levenshtein_sim, text_cosine, tokens};

/// Anything that can decide match/non-match for a record pair.
pub trait PairLinker: Sync {
    fn link(&self, a: &Record, b: &Record) -> Result<bool>;
}

/// Which columns carry site names and commodities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureSpec {
    pub name_fields: Vec<String>,
    /// Per-source overrides of `name_fields`, keyed by source id.
    pub source_name_fields: BTreeMap<String, Vec<String>>,
    /// Attributes whose lower-cased name starts with one of these prefixes
    /// are pooled into the commodity token set.
    pub commodity_prefixes: Vec<String>,
}

impl Default for FeatureSpec {
    fn default() -> Self {
        Self {
            name_fields: ["site_name", "Ftr_Name", "name", "other_names"].map(String::from).to_vec(),
            source_name_fields: BTreeMap::new(),
            commodity_prefixes: vec!["commod".into()],
        }
    }
}

impl FeatureSpec {
    pub fn names<'r>(&self, r: &'r Record) -> Vec<&'r str> {
        let fields = self.source_name_fields.get(&r.source_id).unwrap_or(&self.name_fields);
        fields.iter().filter_map(|f| r.get(f)).collect()
    }

    fn commodities(&self, r: &Record) -> std::collections::BTreeSet<String> {
        r.attributes
            .iter()
            .filter(|(n, _)| {
                let n = n.to_lowercase();
                self.commodity_prefixes.iter().any(|p| n.starts_with(&p.to_lowercase()))
            })
            .flat_map(|(_, v)| tokens(v))
            .collect()
    }
}

/// Best score over the cross product of both records' name values; 0 when
/// either side has no name.
fn best_name_score(spec: &FeatureSpec, a: &Record, b: &Record, score: impl Fn(&str, &str) -> f64) -> f64 {
    let (na, nb) = (spec.names(a), spec.names(b));
    let mut best = 0.0f64;
    for x in &na {
        for y in &nb {
            best = best.max(score(x, y));
        }
    }
    best
}

pub const FEATURE_NAMES: [&str; 7] = [
    "name_levenshtein_sim",
    "name_token_jaccard",
    "trigram_cosine",
    "log1p_haversine_km",
    "location_missing",
    "commodity_jaccard",
    "shared_attr_agreement",
];

pub const N_FEATURES: usize = FEATURE_NAMES.len();

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub name_levenshtein_sim: f64,
    pub name_token_jaccard: f64,
    pub trigram_cosine: f64,
    pub log1p_haversine_km: f64,
    pub location_missing: f64,
    pub commodity_jaccard: f64,
    pub shared_attr_agreement: f64,
}

impl FeatureVector {
    pub fn to_array(&self) -> [f64; N_FEATURES] {
        [
            self.name_levenshtein_sim,
            self.name_token_jaccard,
            self.trigram_cosine,
            self.log1p_haversine_km,
            self.location_missing,
            self.commodity_jaccard,
            self.shared_attr_agreement,
        ]
    }
}

pub fn extract_features(a: &Record, b: &Record, spec: &FeatureSpec) -> Result<FeatureVector> {
    let (log1p_haversine_km, location_missing) = match (a.location, b.location) {
        (Some(p), Some(q)) => (haversine_km(p, q)?.ln_1p(), 0.0),
        _ => (0.0, 1.0),
    };

    let mut shared = 0usize;
    let mut agree = 0usize;
    for (name, va) in &a.attributes {
        if let Some(vb) = b.get(name) {
            shared += 1;
            if va.trim().to_lowercase() == vb.trim().to_lowercase() {
                agree += 1;
            }
        }
    }

    Ok(FeatureVector {
        name_levenshtein_sim: best_name_score(spec, a, b, levenshtein_sim),
        name_token_jaccard: best_name_score(spec, a, b, |x, y| jaccard(&tokens(x), &tokens(y))),
        trigram_cosine: best_name_score(spec, a, b, text_cosine),
        log1p_haversine_km,
        location_missing,
        commodity_jaccard: jaccard(&spec.commodities(a), &spec.commodities(b)),
        shared_attr_agreement: if shared == 0 { 0.0 } else { agree as f64 / shared as f64 },
    })
}

/// Feature rows for a batch of pairs, in input order.
pub fn extract_batch(keys: &[&PairKey], records: &RecordIndex, spec: &FeatureSpec, exec: Exec) -> Result<Vec<[f64; N_FEATURES]>> {
    exec.try_map(keys, |k| {
        let a = records.get(k.uri_1())?;
        let b = records.get(k.uri_2())?;
        Ok(extract_features(a, b, spec)?.to_array())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingLocationPolicy {
    Reject,
    #[default]
    TextOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    pub max_distance_km: f64,
    pub min_cosine: f64,
    pub missing_location_policy: MissingLocationPolicy,
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self { max_distance_km: 5.0, min_cosine: 0.85, missing_location_policy: MissingLocationPolicy::TextOnly }
    }
}

impl RuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_distance_km > 0.0) || !(0.0..=1.0).contains(&self.min_cosine) {
            return Err(crate::Error::Invalid(format!(
                "rule thresholds out of range: max_distance_km {}, min_cosine {}",
                self.max_distance_km, self.min_cosine
            )));
        }
        Ok(())
    }
}

pub fn distance_clause(a: &Record, b: &Record, cfg: &RuleConfig) -> bool {
    match (a.location, b.location) {
        (Some(p), Some(q)) => haversine_km(p, q).is_ok_and(|d| d <= cfg.max_distance_km),
        _ => cfg.missing_location_policy == MissingLocationPolicy::TextOnly,
    }
}

pub fn text_clause(a: &Record, b: &Record, cfg: &RuleConfig, spec: &FeatureSpec) -> bool {
    best_name_score(spec, a, b, text_cosine) >= cfg.min_cosine
}

/// Baseline: within `max_distance_km` and best name cosine at least
/// `min_cosine`, both inclusive.
pub fn rule_match(a: &Record, b: &Record, cfg: &RuleConfig, spec: &FeatureSpec) -> bool {
    distance_clause(a, b, cfg) && text_clause(a, b, cfg, spec)
}

#[derive(Debug, Clone, Default)]
pub struct RuleMatcher {
    pub config: RuleConfig,
    pub spec: FeatureSpec,
}

impl PairLinker for RuleMatcher {
    fn link(&self, a: &Record, b: &Record) -> Result<bool> {
        Ok(rule_match(a, b, &self.config, &self.spec))
    }
}
