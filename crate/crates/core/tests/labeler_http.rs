//! The labeler against a real loopback HTTP server.

use std::sync::Once;
use std::time::Duration;

use minerlink::llm_labeler::{LabelStatus, Labeler, LabelerConfig, API_KEY_ENV, MAX_TOKENS};
use minerlink::pairing::{enumerate_record_pairs, write_pairs_jsonl, PairFilter};
use minerlink::records::RecordIndex;
use minerlink::serialize::CONSTRAINT_LINE;
use minerlink::{PairKey, Provenance, Record};
use minerlink_mockllm::{unreachable_base_url, MockLlm};

fn set_key() {
    static ONCE: Once = Once::new();
    ONCE.call_once(|| std::env::set_var(API_KEY_ENV, "test-key"));
}

fn corpus(n: usize) -> (RecordIndex, Vec<PairKey>) {
    let records: Vec<Record> = minerlink::synthetic::mineral_sites(n, 0.4, 21).records.into_iter().take(n).collect();
    let refs: Vec<&Record> = records.iter().collect();
    let keys = enumerate_record_pairs(&refs, PairFilter::default(), Default::default()).unwrap();
    (RecordIndex::new(records).unwrap(), keys)
}

fn labeler(server: &MockLlm, f: impl FnOnce(&mut LabelerConfig)) -> Labeler {
    set_key();
    let mut cfg = LabelerConfig { base_url: server.base_url(), ..Default::default() };
    f(&mut cfg);
    Labeler::new(cfg).unwrap()
}

fn tungsten_script(prompt: &str) -> String {
    if prompt.matches("Tungsten").count() >= 2 { "Yes." } else { "No" }.to_owned()
}

#[test]
fn request_wire_format() {
    let server = MockLlm::start(tungsten_script, Duration::ZERO);
    let l = labeler(&server, |c| c.model = "llama3-8b".into());
    let (index, keys) = corpus(3);
    let out = l.label_pair(index.get(keys[0].uri_1()).unwrap(), index.get(keys[0].uri_2()).unwrap()).unwrap();
    assert_eq!(out.status, LabelStatus::Ok);

    let bodies = server.bodies();
    assert_eq!(bodies.len(), 1);
    let b = &bodies[0];
    assert_eq!(b["model"], "llama3-8b");
    assert_eq!(b["temperature"], 0.0);
    assert_eq!(b["max_tokens"], MAX_TOKENS);
    assert_eq!(b["messages"][0]["role"], "user");
    let content = b["messages"][0]["content"].as_str().unwrap();
    assert!(content.starts_with("Entity A is "));
    assert_eq!(content.lines().count(), 4);
    assert_eq!(server.authorization_headers(), vec![Some("Bearer test-key".to_owned())]);
}

#[test]
fn concurrency_is_bounded() {
    let server = MockLlm::start(tungsten_script, Duration::from_millis(15));
    let l = labeler(&server, |c| c.max_in_flight = 3);
    let (index, keys) = corpus(12);
    let (rows, summary) = l.label_dataset(&keys, &index).unwrap();
    assert_eq!(rows.len(), keys.len());
    assert_eq!(summary.requests, keys.len());
    assert_eq!(server.requests(), keys.len());
    assert!(server.peak_in_flight() <= 3, "peak {}", server.peak_in_flight());
    assert!(server.peak_in_flight() >= 2, "no overlap observed");
}

#[test]
fn warm_disk_cache_sends_nothing_and_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("responses.jsonl");
    let (index, keys) = corpus(15);
    let run = || {
        let server = MockLlm::start(tungsten_script, Duration::ZERO);
        let l = labeler(&server, |c| c.cache_path = Some(cache.clone()));
        let (rows, summary) = l.label_dataset(&keys, &index).unwrap();
        let mut bytes = Vec::new();
        write_pairs_jsonl(&rows, &mut bytes).unwrap();
        (bytes, summary, server.requests())
    };
    let (cold, cold_summary, cold_requests) = run();
    assert_eq!(cold_requests, keys.len());
    assert_eq!(cold_summary.cache_hits, 0);
    let (warm, warm_summary, warm_requests) = run();
    assert_eq!(warm_requests, 0);
    assert_eq!(warm_summary.cache_hits, keys.len());
    assert_eq!(cold, warm);
}

#[test]
fn rows_follow_input_order_with_labels_from_replies() {
    let server = MockLlm::start(tungsten_script, Duration::ZERO);
    let l = labeler(&server, |c| c.max_in_flight = 8);
    let (index, keys) = corpus(20);
    let (rows, summary) = l.label_dataset(&keys, &index).unwrap();
    for (row, key) in rows.iter().zip(&keys) {
        assert_eq!(&row.key, key);
        assert_eq!(row.provenance, Provenance::Llm);
        let mentions: usize = [key.uri_1(), key.uri_2()]
            .iter()
            .flat_map(|u| &index.get(u).unwrap().attributes)
            .map(|(a, v)| a.matches("Tungsten").count() + v.matches("Tungsten").count())
            .sum();
        assert_eq!(row.label, mentions >= 2, "{key}");
    }
    assert_eq!(summary.matches + summary.non_matches, keys.len());
    assert_eq!(summary.abstain_defaulted, 0);
}

#[test]
fn retry_appends_constraint_and_recovers() {
    let server = MockLlm::start(
        |p: &str| {
            if p.ends_with(&format!("{CONSTRAINT_LINE}\n{CONSTRAINT_LINE}")) { "yes" } else { "Both describe a mine in Idaho." }.to_owned()
        },
        Duration::ZERO,
    );
    let l = labeler(&server, |_| {});
    let (index, keys) = corpus(4);
    let (rows, summary) = l.label_dataset(&keys[..2], &index).unwrap();
    assert!(rows.iter().all(|r| r.label && r.provenance == Provenance::Llm));
    assert_eq!(summary.requests, 4);
}

#[test]
fn persistent_prose_abstains_to_non_match() {
    let server = MockLlm::start(|_: &str| "It is hard to say.".to_owned(), Duration::ZERO);
    let l = labeler(&server, |c| c.max_retries = 2);
    let (index, keys) = corpus(5);
    let (rows, summary) = l.label_dataset(&keys, &index).unwrap();
    assert!(rows.iter().all(|r| !r.label && r.provenance == Provenance::AbstainDefaulted));
    assert_eq!(rows[0].raw_response.as_deref(), Some("It is hard to say."));
    assert_eq!(summary.abstain_defaulted, keys.len());
    assert_eq!(server.requests(), 3 * keys.len());
}

#[test]
fn unreachable_endpoint_is_a_transport_error() {
    set_key();
    let l = Labeler::new(LabelerConfig { base_url: unreachable_base_url(), max_retries: 1, timeout_s: 2.0, ..Default::default() }).unwrap();
    let (index, keys) = corpus(4);
    let err = l.label_dataset(&keys, &index).unwrap_err();
    assert!(err.is_transport(), "{err}");
}
