use std::path::{Path, PathBuf};

use minerlink::llm_labeler::LabelerConfig;
use minerlink::matcher::{FeatureSpec, Hyper, RuleConfig};
use minerlink::pairing::SplitSpec;
use minerlink::SchemaConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub path: PathBuf,
    pub source_id: String,
    #[serde(default)]
    pub schema: SchemaConfig,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherSection {
    pub rule: RuleConfig,
    pub hyper: Hyper,
    pub feature_spec: FeatureSpec,
}

/// The whole pipeline in one JSON document. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub datasets: Vec<DatasetEntry>,
    pub labeler: LabelerConfig,
    pub matcher: MatcherSection,
    pub split: SplitSpec,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            labeler: LabelerConfig::default(),
            matcher: MatcherSection::default(),
            split: SplitSpec::default(),
            output_dir: PathBuf::from("minerlink-out"),
        }
    }
}

impl PipelineConfig {
    /// Read a config file; relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for d in &mut cfg.datasets {
            if d.path.is_relative() {
                d.path = base.join(&d.path);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        if let Some(p) = &mut cfg.labeler.cache_path {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// `--seed` replaces both the split seed and the training seed.
    pub fn apply_seed(&mut self, seed: u64) {
        self.split.seed = seed;
        self.matcher.hyper.seed = seed;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |e: minerlink::Error| CliError::Config(e.to_string());
        self.labeler.validate().map_err(invalid)?;
        self.matcher.rule.validate().map_err(invalid)?;
        self.split.validate().map_err(invalid)?;
        Ok(())
    }
}
