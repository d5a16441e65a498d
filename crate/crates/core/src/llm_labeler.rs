//! Match labels from a chat-completion endpoint.
//!
//! Each pair is sent as the four-line prompt from
//! [`serialize::build_pair_prompt`](crate::serialize::build_pair_prompt).
//! The reply must open with Yes or No. Anything else is retried with the
//! constraint line repeated, and a pair that never yields Yes/No is an
//! abstention stored as a non-match. Replies are cached on disk, keyed by a
//! SHA-256 of model, temperature and prompt, so re-runs issue no requests.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, RwLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matcher::PairLinker;
use crate::pairing::{LabeledPair, PairKey, Provenance};
use crate::records::{Record, RecordIndex};
use crate::serialize::{build_pair_prompt, CONSTRAINT_LINE};

pub const API_KEY_ENV: &str = "MINERLINK_LLM_API_KEY";
pub const BASE_URL_ENV: &str = "MINERLINK_LLM_BASE_URL";
pub const MAX_TOKENS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelerConfig {
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub max_retries: usize,
    pub max_in_flight: usize,
    pub cache_path: Option<PathBuf>,
    pub timeout_s: f64,
}

impl Default for LabelerConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8000".into(),
            model: "llama3-8b".into(),
            temperature: 0.0,
            max_retries: 2,
            max_in_flight: 4,
            cache_path: None,
            timeout_s: 60.0,
        }
    }
}

impl LabelerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || self.max_in_flight == 0 || !(self.timeout_s > 0.0) {
            return Err(Error::Invalid(format!(
                "labeler config needs temperature >= 0, max_in_flight >= 1 and a positive timeout (got {}, {}, {})",
                self.temperature, self.max_in_flight, self.timeout_s
            )));
        }
        Ok(())
    }

    /// Apply the base-URL override from the environment, if set.
    pub fn with_env(mut self) -> Self {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url;
            }
        }
        self
    }
}

/// First token of the reply after trimming whitespace and punctuation and
/// case-folding: `yes` → match, `no` → non-match, anything else → `None`
/// (abstain).
pub fn parse_yes_no(text: &str) -> Option<bool> {
    let first = text
        .trim_matches(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .split(|c: char| c.is_whitespace() || c.is_ascii_punctuation())
        .next()?
        .to_lowercase();
    match first.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelStatus {
    Ok,
    Abstain,
    TransportError,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelOutcome {
    pub key: PairKey,
    pub label: Option<bool>,
    /// Last reply text, or the transport error message.
    pub raw_response: String,
    pub status: LabelStatus,
}

/// Something that answers a single-message chat prompt.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> std::result::Result<String, String>;
}

/// OpenAI-style `POST {base_url}/v1/chat/completions` over HTTP.
pub struct HttpChat {
    agent: ureq::Agent,
    url: String,
    model: String,
    temperature: f64,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(cfg: &LabelerConfig) -> Self {
        Self {
            agent: ureq::AgentBuilder::new().timeout(Duration::from_secs_f64(cfg.timeout_s)).build(),
            url: format!("{}/v1/chat/completions", cfg.base_url.trim_end_matches('/')),
            model: cfg.model.clone(),
            temperature: cfg.temperature,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

impl ChatBackend for HttpChat {
    fn complete(&self, prompt: &str) -> std::result::Result<String, String> {
        let body = serde_json::json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": MAX_TOKENS,
        });
        let mut req = self.agent.post(&self.url);
        if let Some(key) = &self.api_key {
            req = req.set("Authorization", &format!("Bearer {key}"));
        }
        let resp: serde_json::Value =
            req.send_json(body).map_err(|e| e.to_string())?.into_json().map_err(|e| format!("unreadable response body: {e}"))?;
        resp["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| format!("response has no choices[0].message.content: {resp}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub hash: String,
    pub response: String,
    pub status: LabelStatus,
}

/// Append-only reply cache. Entries become visible to readers only after
/// their line has been written.
#[derive(Default)]
pub struct ResponseCache {
    entries: RwLock<HashMap<String, CacheEntry>>,
    file: Option<Mutex<BufWriter<File>>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Load existing entries from `path` (creating it if absent) and append
    /// new ones to it. A torn final line from an interrupted run is ignored.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        let mut torn = false;
        if path.exists() {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            torn = bytes.last().is_some_and(|&b| b != b'\n');
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            for line in BufReader::new(f).lines() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<CacheEntry>(&line) {
                    Ok(e) => {
                        entries.insert(e.hash.clone(), e);
                    }
                    Err(e) if !line.trim().is_empty() => log::warn!("{}: skipping bad cache line: {e}", path.display()),
                    Err(_) => {}
                }
            }
        }
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
        if torn {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(Self { entries: RwLock::new(entries), file: Some(Mutex::new(BufWriter::new(file))) })
    }

    pub fn get(&self, hash: &str) -> Option<CacheEntry> {
        self.entries.read().unwrap().get(hash).cloned()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<()> {
        if let Some(file) = &self.file {
            let mut w = file.lock().unwrap();
            let mut line = serde_json::to_string(&entry)?;
            line.push('\n');
            w.write_all(line.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io("<cache>", e))?;
        }
        self.entries.write().unwrap().insert(entry.hash.clone(), entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelSummary {
    pub pairs: usize,
    pub matches: usize,
    pub non_matches: usize,
    /// Pairs that never got a Yes/No; included in `non_matches`.
    pub abstain_defaulted: usize,
    pub requests: usize,
    pub cache_hits: usize,
}

pub struct Labeler {
    cfg: LabelerConfig,
    backend: Box<dyn ChatBackend>,
    cache: ResponseCache,
    requests: AtomicUsize,
    cache_hits: AtomicUsize,
}

impl Labeler {
    /// HTTP backend and, when `cache_path` is set, a disk cache.
    pub fn new(cfg: LabelerConfig) -> Result<Self> {
        let backend = Box::new(HttpChat::new(&cfg));
        Self::with_backend(cfg, backend)
    }

    pub fn with_backend(cfg: LabelerConfig, backend: Box<dyn ChatBackend>) -> Result<Self> {
        cfg.validate()?;
        let cache = match &cfg.cache_path {
            Some(p) => ResponseCache::open(p)?,
            None => ResponseCache::in_memory(),
        };
        Ok(Self { cfg, backend, cache, requests: AtomicUsize::new(0), cache_hits: AtomicUsize::new(0) })
    }

    pub fn config(&self) -> &LabelerConfig {
        &self.cfg
    }

    /// Requests sent to the backend since construction.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn cache_key(&self, prompt: &str) -> String {
        let mut h = Sha256::new();
        h.update(self.cfg.model.as_bytes());
        h.update([0]);
        h.update(self.cfg.temperature.to_bits().to_le_bytes());
        h.update([0]);
        h.update(prompt.as_bytes());
        hex::encode(h.finalize())
    }

    /// Label one pair. Entity A is always the record with the smaller uri,
    /// so argument order does not change the prompt or the cache key.
    pub fn label_pair(&self, a: &Record, b: &Record) -> Result<LabelOutcome> {
        let key = PairKey::new(a.uri.clone(), b.uri.clone())?;
        let (a, b) = if a.uri <= b.uri { (a, b) } else { (b, a) };
        let prompt = build_pair_prompt(a, b)?;
        self.label_prompt(key, &prompt)
    }

    fn label_prompt(&self, key: PairKey, prompt: &str) -> Result<LabelOutcome> {
        let hash = self.cache_key(prompt);
        if let Some(hit) = self.cache.get(&hash) {
            self.cache_hits.fetch_add(1, Ordering::SeqCst);
            return Ok(LabelOutcome {
                key,
                label: parse_yes_no(&hit.response).filter(|_| hit.status == LabelStatus::Ok),
                raw_response: hit.response,
                status: hit.status,
            });
        }

        let retry_prompt = format!("{prompt}\n{CONSTRAINT_LINE}");
        let mut last_reply: Option<String> = None;
        let mut last_error = String::new();
        for attempt in 0..=self.cfg.max_retries {
            let text = if attempt == 0 { prompt } else { retry_prompt.as_str() };
            self.requests.fetch_add(1, Ordering::SeqCst);
            match self.backend.complete(text) {
                Ok(reply) => {
                    if let Some(label) = parse_yes_no(&reply) {
                        self.cache.insert(CacheEntry { hash, response: reply.clone(), status: LabelStatus::Ok })?;
                        return Ok(LabelOutcome { key, label: Some(label), raw_response: reply, status: LabelStatus::Ok });
                    }
                    last_reply = Some(reply);
                }
                Err(e) => {
                    log::debug!("{key}: attempt {} failed: {e}", attempt + 1);
                    last_error = e;
                }
            }
        }
        match last_reply {
            Some(reply) => {
                self.cache.insert(CacheEntry { hash, response: reply.clone(), status: LabelStatus::Abstain })?;
                Ok(LabelOutcome { key, label: None, raw_response: reply, status: LabelStatus::Abstain })
            }
            None => Ok(LabelOutcome { key, label: None, raw_response: last_error, status: LabelStatus::TransportError }),
        }
    }

    /// Label every pair, at most `max_in_flight` requests at a time, and
    /// return rows in input order. All uris are resolved and all prompts
    /// built before the first request. Any pair that ends in a transport
    /// failure fails the whole call.
    pub fn label_dataset(&self, pairs: &[PairKey], records: &RecordIndex) -> Result<(Vec<LabeledPair>, LabelSummary)> {
        let prompts: Vec<String> =
            pairs.iter().map(|k| build_pair_prompt(records.get(k.uri_1())?, records.get(k.uri_2())?)).collect::<Result<_>>()?;

        let requests_before = self.requests();
        let hits_before = self.cache_hits.load(Ordering::SeqCst);
        let next = AtomicUsize::new(0);
        let failed = AtomicBool::new(false);
        let slots: Vec<Mutex<Option<Result<LabelOutcome>>>> = pairs.iter().map(|_| Mutex::new(None)).collect();
        let workers = self.cfg.max_in_flight.min(pairs.len());
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    if failed.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= pairs.len() {
                        break;
                    }
                    let outcome = self.label_prompt(pairs[i].clone(), &prompts[i]);
                    if !matches!(&outcome, Ok(o) if o.status != LabelStatus::TransportError) {
                        failed.store(true, Ordering::SeqCst);
                    }
                    *slots[i].lock().unwrap() = Some(outcome);
                });
            }
        });

        let mut rows = Vec::with_capacity(pairs.len());
        let mut summary = LabelSummary { pairs: pairs.len(), ..Default::default() };
        for slot in slots {
            let outcome = match slot.into_inner().unwrap() {
                Some(o) => o?,
                None => continue,
            };
            let (label, provenance) = match outcome.status {
                LabelStatus::Ok => (outcome.label == Some(true), Provenance::Llm),
                LabelStatus::Abstain => {
                    summary.abstain_defaulted += 1;
                    (false, Provenance::AbstainDefaulted)
                }
                LabelStatus::TransportError => {
                    return Err(Error::Transport(format!("{}: {}", outcome.key, outcome.raw_response)));
                }
            };
            if label {
                summary.matches += 1;
            } else {
                summary.non_matches += 1;
            }
            rows.push(LabeledPair { key: outcome.key, label, provenance, raw_response: Some(outcome.raw_response) });
        }
        if rows.len() != pairs.len() {
            return Err(Error::Transport("labeling stopped early after a failure".into()));
        }
        summary.requests = self.requests() - requests_before;
        summary.cache_hits = self.cache_hits.load(Ordering::SeqCst) - hits_before;
        Ok((rows, summary))
    }
}

impl PairLinker for Labeler {
    fn link(&self, a: &Record, b: &Record) -> Result<bool> {
        let o = self.label_pair(a, b)?;
        match o.status {
            LabelStatus::TransportError => Err(Error::Transport(o.raw_response)),
            _ => Ok(o.label == Some(true)),
        }
    }
}
