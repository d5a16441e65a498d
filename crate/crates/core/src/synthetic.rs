//! Seeded synthetic mineral-site corpora with known ground truth, for
//! benchmarks, tests and demos.
//!
//! Each generated site emits one to three records spread over two sources
//! with different schemas (`mrds`: `site_name`, `commod1..3`; `usmin`:
//! `Ftr_Name`, `commodity`). Duplicates get name variants, coordinate jitter
//! and sometimes a dropped location.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::matcher::EARTH_RADIUS_KM;
use crate::pairing::{LabeledPair, PairKey, Provenance};
use crate::records::{GeoPoint, Record};

const FIRST: &[&str] = &[
    "Yellow",
    "Eagle",
    "Silver",
    "Golden",
    "Iron",
    "Copper",
    "Crescent",
    "Bear",
    "Black",
    "Lost",
    "Red",
    "Blue",
    "Twin",
    "Hidden",
    "Lucky",
    "Big",
    "Little",
    "North",
    "South",
    "Granite",
    "Cedar",
    "Pine",
    "Elk",
    "Moose",
    "Tungsten",
    "Rainbow",
    "Sunset",
    "Thunder",
    "Copperhead",
    "Wolf",
    "Raven",
    "Buffalo",
    "Grizzly",
    "Shadow",
    "Summit",
    "Canyon",
];
const SECOND: &[&str] = &[
    "Pine", "Creek", "Ridge", "Gulch", "Butte", "Hill", "Peak", "King", "Queen", "Star", "Jack", "Jim", "Bell", "Lode", "Basin", "Valley",
    "Mountain", "Flat", "Spring", "Hollow", "Point", "Rock", "Bar", "Fork", "Lake", "Meadow", "Crown", "Dome",
];
const SUFFIX: &[&str] = &["Mine", "Deposit", "Prospect", "Placer", "Claims", "Project", "Pit"];
const COMMODITIES: &[&str] = &["Tungsten", "Gold", "Silver", "Copper", "Nickel", "Zinc", "Lead", "Molybdenum", "Antimony", "Iron"];
const STATES: &[&str] = &["ID", "MT", "MN", "WY", "NV"];

#[derive(Debug, Clone)]
pub struct Corpus {
    pub records: Vec<Record>,
    /// Site index of every record.
    pub site_of: Vec<usize>,
}

impl Corpus {
    /// Ground-truth label for every pair of records, in canonical order.
    pub fn truth_pairs(&self) -> Vec<LabeledPair> {
        let site: std::collections::HashMap<&str, usize> =
            self.records.iter().zip(&self.site_of).map(|(r, &s)| (r.uri.as_str(), s)).collect();
        let refs: Vec<&Record> = self.records.iter().collect();
        crate::pairing::enumerate_record_pairs(&refs, Default::default(), crate::exec::Exec::default())
            .expect("generated uris are unique")
            .into_iter()
            .map(|k| {
                let same = site[k.uri_1()] == site[k.uri_2()];
                LabeledPair::new(k, same, Provenance::GroundTruth)
            })
            .collect()
    }
}

fn offset(p: GeoPoint, rng: &mut ChaCha8Rng, max_km: f64) -> GeoPoint {
    let d = rng.gen_range(0.0..max_km) / EARTH_RADIUS_KM;
    let bearing = rng.gen_range(0.0..std::f64::consts::TAU);
    let lat = (p.lat + (d * bearing.cos()).to_degrees()).clamp(-90.0, 90.0);
    let lon = p.lon + (d * bearing.sin()).to_degrees() / p.lat.to_radians().cos().max(0.1);
    GeoPoint { lat, lon: lon.clamp(-180.0, 180.0) }
}

fn name_variant(base: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..5) {
        0 => base.to_owned(),
        1 => base.to_uppercase(),
        2 => format!("{base} {}", SUFFIX.choose(rng).unwrap()),
        3 => base.split_whitespace().take(2).collect::<Vec<_>>().join(" "),
        _ => {
            // single-character typo
            let mut chars: Vec<char> = base.chars().collect();
            let i = rng.gen_range(1..chars.len());
            chars[i] = (b'a' + rng.gen_range(0..26u8)) as char;
            chars.into_iter().collect()
        }
    }
}

/// `n_sites` sites; each has a second record with probability `dup_rate`
/// and a third with probability `dup_rate / 4`.
pub fn mineral_sites(n_sites: usize, dup_rate: f64, seed: u64) -> Corpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    let mut site_of = Vec::new();
    let mut counters = [0usize; 2];
    for site in 0..n_sites {
        let base = format!("{} {} {}", FIRST.choose(&mut rng).unwrap(), SECOND.choose(&mut rng).unwrap(), SUFFIX.choose(&mut rng).unwrap());
        let centre = GeoPoint { lat: rng.gen_range(42.0..49.0), lon: rng.gen_range(-117.0..-90.0) };
        let n_commods = rng.gen_range(1..=3);
        let mut commods: Vec<&str> = COMMODITIES.choose_multiple(&mut rng, n_commods).copied().collect();
        commods.sort_unstable();
        let state = *STATES.choose(&mut rng).unwrap();

        let copies = 1 + usize::from(rng.gen_bool(dup_rate)) + usize::from(rng.gen_bool(dup_rate / 4.0));
        for copy in 0..copies {
            let source = if copy == 0 { rng.gen_range(0..2) } else { rng.gen_range(0..2) ^ (copy & 1) };
            counters[source] += 1;
            let name = if copy == 0 { base.clone() } else { name_variant(&base, &mut rng) };
            let location = if copy > 0 && rng.gen_bool(0.1) {
                None
            } else if copy == 0 {
                Some(centre)
            } else {
                Some(offset(centre, &mut rng, 8.0))
            };
            let mut attributes = Vec::new();
            let uri = if source == 0 {
                attributes.push(("site_name".to_owned(), name));
                for (i, c) in commods.iter().enumerate() {
                    attributes.push((format!("commod{}", i + 1), (*c).to_owned()));
                }
                attributes.push(("state".to_owned(), state.to_owned()));
                format!("mrds:{:08}", 10_000_000 + counters[0])
            } else {
                attributes.push(("Ftr_Name".to_owned(), name));
                attributes.push(("commodity".to_owned(), commods.join(", ")));
                attributes.push(("state".to_owned(), state.to_lowercase()));
                format!("usmin:Site_{}", counters[1])
            };
            if let Some(p) = location {
                attributes.push(("latitude".to_owned(), format!("{:.5}", p.lat)));
                attributes.push(("longitude".to_owned(), format!("{:.5}", p.lon)));
            }
            records.push(Record { uri, source_id: if source == 0 { "mrds" } else { "usmin" }.to_owned(), attributes, location });
            site_of.push(site);
        }
    }
    Corpus { records, site_of }
}

/// Flip each label with probability `noise`, marking the result as
/// LLM-labeled.
pub fn noisy_labels(truth: &[LabeledPair], noise: f64, seed: u64) -> Vec<LabeledPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truth
        .iter()
        .map(|p| LabeledPair { key: p.key.clone(), label: p.label ^ rng.gen_bool(noise), provenance: Provenance::Llm, raw_response: None })
        .collect()
}

/// `n_pairs` record pairs split evenly into matches (same name, nearby)
/// and non-matches (unrelated names, hundreds of km apart). Name trigram
/// cosine above 0.5 separates the classes exactly.
pub fn separable_pairs(n_pairs: usize, seed: u64) -> (Vec<Record>, Vec<LabeledPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(2 * n_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    let site = |uri: String, name: String, p: GeoPoint| Record {
        uri,
        source_id: "syn".into(),
        attributes: vec![("site_name".into(), name)],
        location: Some(p),
    };
    for i in 0..n_pairs {
        let is_match = i % 2 == 0;
        let p = GeoPoint { lat: rng.gen_range(40.0..45.0), lon: rng.gen_range(-115.0..-100.0) };
        let name = format!("{} {} {i}", FIRST.choose(&mut rng).unwrap(), SECOND.choose(&mut rng).unwrap());
        let (other_name, q) = if is_match {
            (name.clone(), offset(p, &mut rng, 2.0))
        } else {
            (
                format!("{} {} {}", SUFFIX.choose(&mut rng).unwrap(), COMMODITIES.choose(&mut rng).unwrap(), 10_000 + i),
                GeoPoint { lat: p.lat + 4.0, lon: p.lon + rng.gen_range(-5.0..5.0) },
            )
        };
        let (a, b) = (format!("syn:a{i:05}"), format!("syn:b{i:05}"));
        records.push(site(a.clone(), name, p));
        records.push(site(b.clone(), other_name, q));
        pairs.push(LabeledPair::new(PairKey::new(a, b).expect("distinct uris"), is_match, Provenance::GroundTruth));
    }
    (records, pairs)
}
