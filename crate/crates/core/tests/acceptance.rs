//! Acceptance suite: eleven criteria, one PASS/FAIL line each, with the
//! wall-clock limit where one applies. Exits non-zero if any criterion
//! fails.
//!
//! Run with `cargo test -p minerlink-core --test acceptance`.

use std::collections::{BTreeSet, HashSet};
use std::time::{Duration, Instant};

use minerlink::cluster::cluster_matches;
use minerlink::evaluate::{
    evaluate, macro_f1, match_f1, nonmatch_f1, percent, run_sweep, write_sweep_csv, ConfusionCounts, EvalReport, SweepConfig, SweepMode,
    SWEEP_HEADER,
};
use minerlink::exec::Exec;
use minerlink::llm_labeler::{Labeler, LabelerConfig};
use minerlink::matcher::classifier::loss_and_gradient;
use minerlink::matcher::{haversine_km, train_classifier, FeatureSpec, Hyper, N_FEATURES};
use minerlink::pairing::{enumerate_record_pairs, stratified_split, write_pairs_jsonl, PairFilter, SplitSpec};
use minerlink::records::{GeoPoint, RecordIndex};
use minerlink::runtime_model::{fit, predict_days, Measurement, RuntimeModel};
use minerlink::serialize::{build_pair_prompt, serialize_ditto_pair, serialize_prompt_entity, CONSTRAINT_LINE};
use minerlink::{LabeledPair, PairKey, Provenance, Record};
use minerlink_mockllm::MockLlm;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn pct_close(got: f64, want: f64, tol: f64) -> bool {
    (percent(got) - want).abs() <= tol + 1e-9
}

fn c1_metrics() -> Outcome {
    // Tungsten: 18 of 23 matches and 74,617 of 74,668 non-matches labeled correctly
    let tungsten = ConfusionCounts::new(18, 74_668 - 74_617, 74_617, 23 - 18);
    let nickel = ConfusionCounts::new(11, 258 - 256, 256, 18 - 11);
    let t = EvalReport::from_counts(tungsten);
    let n = EvalReport::from_counts(nickel);
    check(pct_close(t.match_f1, 39.13, 0.02), || format!("tungsten match F1 {}", percent(t.match_f1)))?;
    check(pct_close(t.nonmatch_f1, 99.96, 0.02), || format!("tungsten non-match F1 {}", percent(t.nonmatch_f1)))?;
    let nm = percent(n.match_f1);
    check((70.96 - 0.02..=70.97 + 0.02).contains(&nm), || format!("nickel match F1 {nm}"))?;
    check(pct_close(n.nonmatch_f1, 98.27, 0.02), || format!("nickel non-match F1 {}", percent(n.nonmatch_f1)))?;
    Ok(format!("tungsten [{}], nickel [{}]", t.table_row(), n.table_row()))
}

fn c2_pair_counts() -> Outcome {
    let mut counts = Vec::new();
    for (n, want) in [(387usize, 74_691usize), (24, 276)] {
        let records: Vec<Record> = (0..n)
            .map(|i| Record {
                uri: format!("gt:{i:04}"),
                source_id: "gt".into(),
                attributes: vec![("name".into(), format!("site {i}"))],
                location: None,
            })
            .collect();
        let refs: Vec<&Record> = records.iter().collect();
        let pairs = enumerate_record_pairs(&refs, PairFilter::default(), Exec::default()).map_err(|e| e.to_string())?;
        check(pairs.len() == want, || format!("{n} records gave {} pairs", pairs.len()))?;
        let unique: HashSet<&PairKey> = pairs.iter().collect();
        check(unique.len() == want, || format!("{n} records: duplicate pairs"))?;
        counts.push(format!("{n} -> {}", pairs.len()));
    }
    Ok(counts.join(", "))
}

fn c3_runtime_law() -> Outcome {
    let ours = predict_days(&RuntimeModel::with_k(0.004), 300_000);
    let llm = predict_days(&RuntimeModel::with_k(0.073), 300_000);
    check((ours / 4_166.7 - 1.0).abs() < 0.01, || format!("k=0.004: {ours} days"))?;
    check((llm / 76_041.0 - 1.0).abs() < 0.01, || format!("k=0.073: {llm} days"))?;
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let k = rng.gen_range(1e-6..1.0);
        let ms: Vec<Measurement> =
            [10u64, 50, 100, 200, 300].iter().map(|&n| Measurement { record_count: n, elapsed_seconds: k * (n * n - n) as f64 }).collect();
        let fitted = fit(&ms).map_err(|e| e.to_string())?.k;
        worst = worst.max((fitted - k).abs() / k);
    }
    check(worst <= 1e-9, || format!("fit relative error {worst:e}"))?;
    Ok(format!("{ours:.2} and {llm:.1} days; worst fit error {worst:.1e}"))
}

fn c4_macro_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for i in 0..10_000 {
        let scale = 10u64.pow(rng.gen_range(0..8));
        let c =
            ConfusionCounts::new(rng.gen_range(0..=scale), rng.gen_range(0..=scale), rng.gen_range(0..=scale), rng.gen_range(0..=scale));
        let mean = (match_f1(&c) + nonmatch_f1(&c)) / 2.0;
        let m = macro_f1(&c);
        let ulp = f64::EPSILON * mean.abs().max(f64::MIN_POSITIVE);
        check((m - mean).abs() <= ulp, || format!("case {i} {c:?}: {m} vs {mean}"))?;
    }
    Ok("10000 random confusion tables".into())
}

fn c5_goldens() -> Outcome {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests");
    let schema = minerlink::records::SchemaConfig::from_json(&std::fs::read_to_string(root.join("fixtures/mrds_schema.json")).unwrap())
        .map_err(|e| e.to_string())?;
    let (d, _) = minerlink::records::ingest_csv(&root.join("fixtures/mrds_sample.csv"), "mrds", &schema).map_err(|e| e.to_string())?;
    let r = &d.records;
    let golden = |name: &str| std::fs::read_to_string(root.join("golden").join(name)).map_err(|e| e.to_string());
    let entities: String = r.iter().map(|x| serialize_prompt_entity(x).unwrap().text + "\n").collect();
    let ditto_entities: String = r.iter().map(|x| minerlink::serialize::serialize_ditto_entity(x).unwrap().text + "\n").collect();
    let prompt = build_pair_prompt(&r[0], &r[2]).map_err(|e| e.to_string())?;
    let ditto = serialize_ditto_pair(&r[0], &r[2]).map_err(|e| e.to_string())?;
    for (name, got) in [
        ("prompt_entities.txt", &entities),
        ("ditto_entities.txt", &ditto_entities),
        ("pair_prompt.txt", &prompt),
        ("ditto_pair.txt", &ditto),
    ] {
        check(got.as_bytes() == golden(name)?.as_bytes(), || format!("{name} differs"))?;
    }
    check(prompt.lines().count() == 4 && prompt.ends_with(CONSTRAINT_LINE), || "template shape".into())?;
    Ok("4 golden files byte-identical".into())
}

fn c6_mock_llm() -> Outcome {
    let records: Vec<Record> = minerlink::synthetic::mineral_sites(100, 0.3, 6).records.into_iter().take(100).collect();
    let refs: Vec<&Record> = records.iter().collect();
    let keys = enumerate_record_pairs(&refs, PairFilter::default(), Exec::default()).map_err(|e| e.to_string())?;
    check(keys.len() == 4_950, || format!("{} pairs", keys.len()))?;
    let index = RecordIndex::new(records).map_err(|e| e.to_string())?;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cache = dir.path().join("cache.jsonl");
    let max_in_flight = 4;

    let run = || -> Result<(Vec<u8>, usize, usize, Vec<LabeledPair>), String> {
        let server = MockLlm::start(
            |p: &str| if p.matches("Gold").count() >= 2 { "Yes".into() } else { "No.".into() },
            // long enough for requests to overlap
            Duration::from_millis(1),
        );
        let labeler = Labeler::new(LabelerConfig {
            base_url: server.base_url(),
            max_in_flight,
            cache_path: Some(cache.clone()),
            ..Default::default()
        })
        .map_err(|e| e.to_string())?;
        let (rows, _) = labeler.label_dataset(&keys, &index).map_err(|e| e.to_string())?;
        let mut bytes = Vec::new();
        write_pairs_jsonl(&rows, &mut bytes).map_err(|e| e.to_string())?;
        Ok((bytes, server.requests(), server.peak_in_flight(), rows))
    };
    let (cold, cold_requests, peak, rows) = run()?;
    check(rows.len() == keys.len() && rows.iter().zip(&keys).all(|(r, k)| &r.key == k), || "one row per pair, in order".into())?;
    check(rows.iter().all(|r| r.provenance == Provenance::Llm), || "unexpected provenance".into())?;
    let first: serde_json::Value = serde_json::from_slice(cold.split(|&b| b == b'\n').next().unwrap()).map_err(|e| e.to_string())?;
    for field in ["uri_1", "uri_2", "label"] {
        check(first.get(field).is_some(), || format!("row lacks {field}: {first}"))?;
    }
    check(first["label"] == 0 || first["label"] == 1, || format!("label not 0/1: {first}"))?;
    check(cold_requests == keys.len(), || format!("cold run sent {cold_requests} requests"))?;
    check(peak <= max_in_flight, || format!("peak in-flight {peak} > {max_in_flight}"))?;
    check(peak > 1, || "requests never overlapped".into())?;
    let (warm, warm_requests, _, _) = run()?;
    check(warm_requests == 0, || format!("warm run sent {warm_requests} requests"))?;
    check(cold == warm, || "warm output differs".into())?;
    let matches = rows.iter().filter(|r| r.label).count();
    Ok(format!("4950 rows ({matches} Yes), peak in-flight {peak}/{max_in_flight}, warm run 0 requests, identical bytes"))
}

fn c7_classifier() -> Outcome {
    // (a) gradients
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = rng.gen_range(1..30);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..N_FEATURES).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect();
        let y: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        let w: Vec<f64> = (0..N_FEATURES).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = rng.gen_range(-1.0..1.0);
        let wd = 0.01;
        let (_, gw, gb) = loss_and_gradient(&w, b, &rows, &y, None, wd);
        let h = 1e-6;
        let loss = |w: &[f64], b: f64| loss_and_gradient(w, b, &rows, &y, None, wd).0;
        for j in 0..=N_FEATURES {
            let (num, ana) = if j < N_FEATURES {
                let (mut up, mut dn) = (w.clone(), w.clone());
                up[j] += h;
                dn[j] -= h;
                ((loss(&up, b) - loss(&dn, b)) / (2.0 * h), gw[j])
            } else {
                ((loss(&w, b + h) - loss(&w, b - h)) / (2.0 * h), gb)
            };
            worst = worst.max((num - ana).abs() / num.abs().max(ana.abs()).max(1e-3));
        }
    }
    check(worst < 1e-5, || format!("gradient relative error {worst:e}"))?;

    // (b) separable corpus
    let (records, pairs) = minerlink::synthetic::separable_pairs(2_000, 70);
    let index = RecordIndex::new(records).map_err(|e| e.to_string())?;
    let split = stratified_split(&pairs, &SplitSpec::default()).map_err(|e| e.to_string())?;
    let spec = FeatureSpec::default();
    let hyper = Hyper { seed: 1, ..Default::default() };
    let (model, _) = train_classifier(&split.train, Some(&split.val), &index, &hyper, &spec, Exec::default()).map_err(|e| e.to_string())?;
    let test_keys: Vec<PairKey> = split.test.iter().map(|p| p.key.clone()).collect();
    let preds = model.predict_batch(&test_keys, &index, Exec::default()).map_err(|e| e.to_string())?;
    let sep = evaluate(&preds, &split.test).map_err(|e| e.to_string())?;
    check(sep.macro_f1 >= 0.95, || format!("separable macro F1 {}", sep.macro_f1))?;

    // (c) all-non-match training
    let negatives: Vec<LabeledPair> = split.train.iter().filter(|p| !p.label).cloned().collect();
    let (flat, report) = train_classifier(&negatives, None, &index, &hyper, &spec, Exec::default()).map_err(|e| e.to_string())?;
    let flat_preds = flat.predict_batch(&test_keys, &index, Exec::default()).map_err(|e| e.to_string())?;
    let flat_eval = evaluate(&flat_preds, &split.test).map_err(|e| e.to_string())?;
    check(report.degenerate, || "single-class training not flagged".into())?;
    check(flat_preds.iter().all(|p| !p.label), || "non-zero prediction from all-non-match model".into())?;
    check(flat_eval.match_f1 == 0.0, || format!("match F1 {}", flat_eval.match_f1))?;

    // (d) determinism
    let (again, _) =
        train_classifier(&split.train, Some(&split.val), &index, &hyper, &spec, Exec::Sequential).map_err(|e| e.to_string())?;
    let bits = |m: &minerlink::matcher::ClassifierModel| m.weights.iter().chain([&m.bias]).map(|v| v.to_bits()).collect::<Vec<_>>();
    check(bits(&model) == bits(&again) && model == again, || "same seed, different model".into())?;

    Ok(format!(
        "grad err {worst:.1e}; separable macro F1 {:.4}; all-non-match match F1 {}; bitwise-identical retrain",
        sep.macro_f1, flat_eval.match_f1
    ))
}

fn c8_split() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let spec_fractions = SplitSpec::default().fractions;
    for case in 0..1_000 {
        let total = rng.gen_range(1..3_000);
        let ratio: f64 = rng.gen_range(0.0..1.0);
        let matches = (total as f64 * ratio).round() as usize;
        let seed = rng.gen();
        let pairs: Vec<LabeledPair> = (0..total)
            .map(|i| LabeledPair::new(PairKey::new(format!("a{i:05}"), format!("b{i:05}")).unwrap(), i < matches, Provenance::Llm))
            .collect();
        let s = stratified_split(&pairs, &SplitSpec { fractions: spec_fractions, seed }).map_err(|e| e.to_string())?;
        for label in [true, false] {
            let n = pairs.iter().filter(|p| p.label == label).count() as f64;
            for (part, f) in [&s.train, &s.val, &s.test].into_iter().zip(spec_fractions) {
                let got = part.iter().filter(|p| p.label == label).count() as f64;
                check((got - f * n).abs() <= 1.0 + 1e-9, || format!("case {case}: class {label} got {got}, ideal {}", f * n))?;
            }
        }
        let keys: Vec<&PairKey> = s.train.iter().chain(&s.val).chain(&s.test).map(|p| &p.key).collect();
        let unique: HashSet<&PairKey> = keys.iter().copied().collect();
        check(keys.len() == total && unique.len() == total, || format!("case {case}: not a partition"))?;
    }
    Ok("1000 (ratio, seed) combinations within ±1, disjoint and exhaustive".into())
}

fn c9_clustering() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for g in 0..500 {
        let n = rng.gen_range(1..=200);
        let uris: Vec<String> = (0..n).map(|i| format!("r{i:03}")).collect();
        let p = rng.gen_range(0.0..2.5) / n as f64;
        let mut edges = Vec::new();
        let mut reach = vec![vec![false; n]; n];
        for (i, row) in reach.iter_mut().enumerate() {
            row[i] = true;
        }
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(p.min(1.0)) {
                    let label = rng.gen_bool(0.85);
                    edges.push(LabeledPair::new(PairKey::new(uris[i].clone(), uris[j].clone()).unwrap(), label, Provenance::Predicted));
                    if label {
                        reach[i][j] = true;
                        reach[j][i] = true;
                    }
                }
            }
        }
        // Warshall closure as the oracle
        for k in 0..n {
            let row_k = reach[k].clone();
            for row in reach.iter_mut().filter(|r| r[k]) {
                row.iter_mut().zip(&row_k).for_each(|(x, &y)| *x |= y);
            }
        }
        let want: BTreeSet<BTreeSet<&str>> = (0..n).map(|i| (0..n).filter(|&j| reach[i][j]).map(|j| uris[j].as_str()).collect()).collect();
        let got: BTreeSet<BTreeSet<&str>> = cluster_matches(&uris, &edges)
            .map_err(|e| e.to_string())?
            .iter()
            .map(|c| c.members.iter().map(|m| uris[uris.binary_search(m).unwrap()].as_str()).collect())
            .collect();
        check(got == want, || format!("graph {g} ({n} nodes) differs from closure"))?;
    }
    Ok("500 random graphs up to 200 nodes".into())
}

fn c10_sweeps() -> Outcome {
    let corpus = minerlink::synthetic::mineral_sites(340, 1.0, 10);
    let truth = corpus.truth_pairs();
    let index = RecordIndex::new(corpus.records).map_err(|e| e.to_string())?;
    let split = stratified_split(&truth, &SplitSpec { seed: 10, ..Default::default() }).map_err(|e| e.to_string())?;
    let pool = &split.train;
    let pool_matches = pool.iter().filter(|p| p.label).count();
    let spec = FeatureSpec::default();
    let hyper = Hyper { epochs: 3, ..Default::default() };
    let configs = [
        SweepConfig {
            mode: SweepMode::FixedMatchVaryNonmatch,
            grid: vec![1.0, 5.0, 20.0, 50.0, 100.0, 170.0],
            anchor: 349,
            seed: 10,
            hyper,
        },
        SweepConfig {
            mode: SweepMode::FixedNonmatchVaryMatch,
            grid: vec![10.0, 50.0, 100.0, 200.0, 349.0],
            anchor: 59_403,
            seed: 10,
            hyper,
        },
        SweepConfig {
            mode: SweepMode::BalancedGrowth,
            grid: vec![10.0, 50.0, 100.0, 150.0, 200.0, 250.0, 300.0],
            anchor: 0,
            seed: 10,
            hyper,
        },
    ];
    let mut summary = Vec::new();
    for cfg in &configs {
        let rows = run_sweep(cfg, pool, &split.test, &index, &spec, Exec::default()).map_err(|e| format!("{}: {e}", cfg.mode.name()))?;
        let mut csv_bytes = Vec::new();
        write_sweep_csv(&rows, &mut csv_bytes).map_err(|e| e.to_string())?;
        let mut rdr = csv::Reader::from_reader(csv_bytes.as_slice());
        let header: Vec<String> = rdr.headers().map_err(|e| e.to_string())?.iter().map(String::from).collect();
        check(header == SWEEP_HEADER, || format!("header {header:?}"))?;
        let table: Vec<csv::StringRecord> = rdr.records().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
        check(table.len() == cfg.grid.len(), || format!("{}: {} rows", cfg.mode.name(), table.len()))?;
        for rec in &table {
            check(rec.get(0) == Some(cfg.mode.name()), || format!("mode column {rec:?}"))?;
            for col in 4..7 {
                let v: f64 = rec[col].parse().map_err(|_| format!("bad metric {rec:?}"))?;
                check((0.0..=1.0).contains(&v), || format!("metric out of range {rec:?}"))?;
            }
        }
        let anchored = match cfg.mode {
            SweepMode::FixedMatchVaryNonmatch => rows.iter().all(|r| r.match_count == 349),
            SweepMode::FixedNonmatchVaryMatch => rows.iter().all(|r| r.nonmatch_count == 59_403),
            SweepMode::BalancedGrowth => rows.first().map(|r| r.match_count) == Some(10) && rows.last().map(|r| r.match_count) == Some(300),
        };
        check(anchored, || format!("{}: anchors not honored", cfg.mode.name()))?;
        summary.push(format!("{} {} rows", cfg.mode.name(), rows.len()));
    }
    Ok(format!("pool {} pairs ({pool_matches} matches); {}", pool.len(), summary.join(", ")))
}

fn c11_haversine() -> Outcome {
    let p = |lat, lon| GeoPoint { lat, lon };
    let one = haversine_km(p(0.0, 0.0), p(1.0, 0.0)).map_err(|e| e.to_string())?;
    let anti = haversine_km(p(0.0, 0.0), p(0.0, 180.0)).map_err(|e| e.to_string())?;
    check((one - 111.195).abs() <= 0.001, || format!("one degree {one}"))?;
    check((anti - 20_015.09).abs() <= 0.01, || format!("antipodal {anti}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let a = p(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0));
        let b = p(rng.gen_range(-90.0..=90.0), rng.gen_range(-180.0..=180.0));
        let (ab, ba) = (haversine_km(a, b).unwrap(), haversine_km(b, a).unwrap());
        check(ab == ba, || format!("asymmetric at {a:?} {b:?}"))?;
        check(haversine_km(a, a).unwrap() == 0.0, || format!("non-zero self distance at {a:?}"))?;
    }
    Ok(format!("{one:.4} km, {anti:.3} km; 10000 random pairs symmetric with zero identity"))
}

type Criterion = (u32, &'static str, Option<Duration>, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "metrics fixtures", Some(Duration::from_secs(1)), c1_metrics),
        (2, "pair-count fixtures", Some(Duration::from_secs(1)), c2_pair_counts),
        (3, "runtime extrapolation", None, c3_runtime_law),
        (4, "macro F1 identity", None, c4_macro_identity),
        (5, "serialization goldens", None, c5_goldens),
        (6, "mock LLM end to end", Some(Duration::from_secs(30)), c6_mock_llm),
        (7, "classifier sanity", Some(Duration::from_secs(60)), c7_classifier),
        (8, "stratified split", None, c8_split),
        (9, "clustering oracle", None, c9_clustering),
        (10, "sweep harness", None, c10_sweeps),
        (11, "haversine", None, c11_haversine),
    ];
    let mut failures = 0;
    for (id, name, limit, run) in criteria {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let result = match (result, limit) {
            (Ok(_), Some(l)) if elapsed > l => Err(format!("took {elapsed:.2?}, limit {l:?}")),
            (r, _) => r,
        };
        let limit = limit.map_or(String::new(), |l| format!(" / limit {l:?}"));
        match result {
            Ok(detail) => println!("PASS {id:>2} {name:<22} [{elapsed:.2?}{limit}] {detail}"),
            Err(why) => {
                failures += 1;
                println!("FAIL {id:>2} {name:<22} [{elapsed:.2?}{limit}] {why}");
            }
        }
    }
    println!("{} of 11 criteria passed", 11 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
