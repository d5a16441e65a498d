use std::io::Write;
use std::path::{Path, PathBuf};

use minerlink::cluster::{cluster_matches, cluster_report, write_clusters_jsonl};
use minerlink::evaluate::{self as eval, run_sweep, write_sweep_csv, SweepConfig};
use minerlink::exec::Exec;
use minerlink::llm_labeler::Labeler;
use minerlink::matcher::{rule_match, train_classifier, ClassifierModel, PairLinker, RuleMatcher};
use minerlink::pairing::{
    enumerate_record_pairs, read_keys_jsonl, read_pairs_jsonl, stratified_split, write_keys_jsonl, write_pairs_jsonl, PairFilter,
};
use minerlink::records::{ingest_csv, read_records_jsonl, validate_records, write_records_jsonl, RecordIndex};
use minerlink::runtime_model::{benchmark, fit, fit_with_intercept, predict_days, read_measurements_csv, write_measurements_csv};
use minerlink::{Error, LabeledPair, PairKey, Provenance, Record};

use crate::config::PipelineConfig;
use crate::outdir::{open_input, OutputDir};
use crate::{CliError, LinkerKind, RuntimeArgs, SweepArgs};

pub const RECORDS: &str = "records.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const LABELS: &str = "labels.jsonl";
pub const MODEL: &str = "model.json";
pub const PREDICTIONS: &str = "predictions.jsonl";
const DEFAULT_CACHE: &str = "llm_cache.jsonl";

fn records(out: &OutputDir) -> Result<Vec<Record>, CliError> {
    Ok(read_records_jsonl(open_input(&out.path(RECORDS), "ingest")?)?)
}

fn index(out: &OutputDir) -> Result<RecordIndex, CliError> {
    Ok(RecordIndex::new(records(out)?)?)
}

fn keys(path: &Path, produced_by: &str) -> Result<Vec<PairKey>, CliError> {
    Ok(read_keys_jsonl(open_input(path, produced_by)?)?)
}

fn labeled(path: &Path, produced_by: &str) -> Result<Vec<LabeledPair>, CliError> {
    Ok(read_pairs_jsonl(open_input(path, produced_by)?)?)
}

fn write_pairs(out: &OutputDir, name: &str, pairs: &[LabeledPair]) -> Result<PathBuf, CliError> {
    out.write(name, |w| Ok(write_pairs_jsonl(pairs, w)?))
}

pub fn ingest(cfg: &PipelineConfig, out: &OutputDir) -> Result<(), CliError> {
    if cfg.datasets.is_empty() {
        return Err(CliError::Config("no datasets configured; add a `datasets` list to the config".into()));
    }
    if let Some(d) = cfg.datasets.iter().find(|d| !d.path.is_file()) {
        return Err(CliError::Config(format!("dataset {} does not exist", d.path.display())));
    }
    let mut all = Vec::new();
    let mut warnings = 0;
    for d in &cfg.datasets {
        let (dataset, report) = ingest_csv(&d.path, &d.source_id, &d.schema)?;
        log::info!("{}: {} rows", d.path.display(), report.rows);
        warnings += report.coordinate_warnings;
        all.extend(dataset.records);
    }
    let v = validate_records(&all);
    if let Some(uri) = v.duplicate_uris.first() {
        return Err(Error::DuplicateUri(uri.clone()).into());
    }
    let path = out.write(RECORDS, |w| Ok(write_records_jsonl(&all, w)?))?;
    println!(
        "ingest: {} records from {} datasets ({} without location, {warnings} coordinate warnings) -> {}",
        v.records,
        cfg.datasets.len(),
        v.missing_location,
        path.display()
    );
    Ok(())
}

pub fn pairs(out: &OutputDir, max_distance_km: Option<f64>) -> Result<(), CliError> {
    if max_distance_km.is_some_and(|d| !(d > 0.0)) {
        return Err(CliError::Config("--max-distance-km must be positive".into()));
    }
    let records = records(out)?;
    let refs: Vec<&Record> = records.iter().collect();
    let keys = enumerate_record_pairs(&refs, PairFilter { max_distance_km }, Exec::default())?;
    let path = out.write(PAIRS, |w| Ok(write_keys_jsonl(&keys, w)?))?;
    println!("pairs: {} pairs from {} records -> {}", keys.len(), records.len(), path.display());
    Ok(())
}

pub fn label(cfg: &PipelineConfig, out: &OutputDir, pairs: Option<PathBuf>) -> Result<(), CliError> {
    let keys = keys(&pairs.unwrap_or_else(|| out.path(PAIRS)), "pairs")?;
    let index = index(out)?;
    let mut lcfg = cfg.labeler.clone();
    lcfg.cache_path.get_or_insert_with(|| out.path(DEFAULT_CACHE));
    let labeler = Labeler::new(lcfg)?;
    let (rows, s) = labeler.label_dataset(&keys, &index)?;
    let path = write_pairs(out, LABELS, &rows)?;
    out.write_json("label_summary.json", &s)?;
    println!(
        "label: {} pairs, {} matches, {} non-matches ({} abstentions defaulted), {} requests, {} cache hits -> {}",
        s.pairs,
        s.matches,
        s.non_matches,
        s.abstain_defaulted,
        s.requests,
        s.cache_hits,
        path.display()
    );
    Ok(())
}

pub fn train(cfg: &PipelineConfig, out: &OutputDir, labels: Option<PathBuf>) -> Result<(), CliError> {
    let pairs = labeled(&labels.unwrap_or_else(|| out.path(LABELS)), "label")?;
    let index = index(out)?;
    let split = stratified_split(&pairs, &cfg.split)?;
    let m = &cfg.matcher;
    let (model, report) = train_classifier(&split.train, Some(&split.val), &index, &m.hyper, &m.feature_spec, Exec::default())?;
    for (name, part) in [("split_train.jsonl", &split.train), ("split_val.jsonl", &split.val), ("split_test.jsonl", &split.test)] {
        write_pairs(out, name, part)?;
    }
    let json = model.to_json()?;
    let path = out.write(MODEL, |w| w.write_all(json.as_bytes()).map_err(|e| CliError::io(MODEL, e)))?;
    out.write_json("train_report.json", &report)?;
    let val = report.val_macro_f1.get(report.best_epoch.saturating_sub(1)).copied();
    println!(
        "train: {} / {} / {} pairs, best epoch {}{}{} -> {}",
        split.train.len(),
        split.val.len(),
        split.test.len(),
        report.best_epoch,
        val.map_or(String::new(), |v| format!(", validation macro F1 {:.2}", eval::percent(v))),
        if report.degenerate { " (single-class training set)" } else { "" },
        path.display()
    );
    Ok(())
}

pub fn predict(cfg: &PipelineConfig, out: &OutputDir, pairs: Option<PathBuf>, model: Option<PathBuf>, rule: bool) -> Result<(), CliError> {
    let keys = keys(&pairs.unwrap_or_else(|| out.path(PAIRS)), "pairs")?;
    let index = index(out)?;
    let preds: Vec<LabeledPair> = if rule {
        let m = &cfg.matcher;
        Exec::default().try_map(&keys, |k| -> Result<LabeledPair, Error> {
            let matched = rule_match(index.get(k.uri_1())?, index.get(k.uri_2())?, &m.rule, &m.feature_spec);
            Ok(LabeledPair::new(k.clone(), matched, Provenance::Predicted))
        })?
    } else {
        let model = load_model(out, model)?;
        model.predict_batch(&keys, &index, Exec::default())?
    };
    let path = write_pairs(out, PREDICTIONS, &preds)?;
    println!(
        "predict: {} of {} pairs predicted as matches ({}) -> {}",
        preds.iter().filter(|p| p.label).count(),
        preds.len(),
        if rule { "rule baseline" } else { "classifier" },
        path.display()
    );
    Ok(())
}

fn load_model(out: &OutputDir, path: Option<PathBuf>) -> Result<ClassifierModel, CliError> {
    let path = path.unwrap_or_else(|| out.path(MODEL));
    let mut text = String::new();
    std::io::Read::read_to_string(&mut open_input(&path, "train")?, &mut text).map_err(|e| CliError::io(&path, e))?;
    Ok(ClassifierModel::from_json(&text)?)
}

pub fn evaluate(out: &OutputDir, predictions: Option<PathBuf>, truth: &Path) -> Result<(), CliError> {
    let preds = labeled(&predictions.unwrap_or_else(|| out.path(PREDICTIONS)), "predict")?;
    let truth = labeled(truth, "label")?;
    let report = eval::evaluate(&preds, &truth)?;
    out.write_json("evaluation.json", &report)?;
    println!("{}", report.table_row());
    Ok(())
}

pub fn sweep(cfg: &PipelineConfig, out: &OutputDir, a: SweepArgs) -> Result<(), CliError> {
    let pool = labeled(&a.pool.unwrap_or_else(|| out.path("split_train.jsonl")), "train")?;
    let truth = labeled(&a.truth, "label")?;
    let index = index(out)?;
    let scfg = SweepConfig { mode: a.mode, grid: a.grid, anchor: a.anchor, seed: cfg.matcher.hyper.seed, hyper: cfg.matcher.hyper };
    scfg.plan().map_err(|e| CliError::Config(e.to_string()))?;
    let rows = run_sweep(&scfg, &pool, &truth, &index, &cfg.matcher.feature_spec, Exec::default())?;
    let name = format!("sweep_{}.csv", a.mode.name());
    let path = out.write(&name, |w| Ok(write_sweep_csv(&rows, w)?))?;
    let best = rows.iter().max_by(|x, y| x.report.macro_f1.total_cmp(&y.report.macro_f1));
    println!(
        "sweep: {} grid points ({}){} -> {}",
        rows.len(),
        a.mode.name(),
        best.map_or(String::new(), |b| format!(", best macro F1 {:.2} at {}", eval::percent(b.report.macro_f1), b.grid_value)),
        path.display()
    );
    Ok(())
}

pub fn cluster(out: &OutputDir, predictions: Option<PathBuf>, max_size: usize) -> Result<(), CliError> {
    let preds = labeled(&predictions.unwrap_or_else(|| out.path(PREDICTIONS)), "predict")?;
    let uris: Vec<String> = records(out)?.into_iter().map(|r| r.uri).collect();
    let clusters = cluster_matches(&uris, &preds)?;
    let report = cluster_report(&clusters, &preds, max_size);
    let path = out.write("clusters.jsonl", |w| Ok(write_clusters_jsonl(&clusters, w)?))?;
    out.write_json("cluster_report.json", &report)?;
    println!(
        "cluster: {} clusters ({} singletons, largest {}, {} oversized, {} contradictions) -> {}",
        report.clusters,
        report.singletons,
        report.largest,
        report.oversized.len(),
        report.contradictions.len(),
        path.display()
    );
    Ok(())
}

pub fn runtime(cfg: &PipelineConfig, out: &OutputDir, a: RuntimeArgs) -> Result<(), CliError> {
    let measurements = match &a.measurements {
        Some(path) => read_measurements_csv(open_input(path, "runtime")?)?,
        None => {
            if a.sizes.is_empty() {
                return Err(CliError::Config("give --sizes or --measurements".into()));
            }
            let records = records(out)?;
            let linker: Box<dyn PairLinker> = match a.linker {
                LinkerKind::Rule => Box::new(RuleMatcher { config: cfg.matcher.rule, spec: cfg.matcher.feature_spec.clone() }),
                LinkerKind::Classifier => Box::new(load_model(out, None)?),
                LinkerKind::Llm => {
                    let mut lcfg = cfg.labeler.clone();
                    lcfg.cache_path.get_or_insert_with(|| out.path(DEFAULT_CACHE));
                    Box::new(Labeler::new(lcfg)?)
                }
            };
            let ms = benchmark(linker.as_ref(), &a.sizes, &records)?;
            out.write("runtime_measurements.csv", |w| Ok(write_measurements_csv(&ms, w)?))?;
            ms
        }
    };
    let model = if a.intercept { fit_with_intercept(&measurements)? } else { fit(&measurements)? };
    let path = out.write_json("runtime_model.json", &model)?;
    println!(
        "runtime: k = {:.3e} s over {} sizes (rms residual {:.3e} s); {} records -> {:.1} days -> {}",
        model.k,
        model.n_points,
        model.fit_residual,
        a.extrapolate,
        predict_days(&model, a.extrapolate),
        path.display()
    );
    Ok(())
}
