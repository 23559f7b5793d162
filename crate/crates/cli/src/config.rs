//! Run configuration, read from a TOML file.
//!
//! Relative paths resolve against the directory holding the config file.
//! Every default is materialized into the effective configuration that the
//! run manifest records and the config hash covers.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tdiff_core::ingest::{DurationMeasure, TableSchema, UnitLevel};
use tdiff_core::features::{SOURCE_ATTENTION_FEATURES, TARGET_ATTENTION_FEATURES};
use tdiff_stats::evaluation::{Sidedness, TestUnit};
use tdiff_stats::regression::{ModelKind, Predictive};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Directory with the sentence, word and segment tables.
    pub tables: PathBuf,
    /// Directory with dump files and their manifest.
    pub dumps: PathBuf,
    /// Two-column word frequency file.
    pub frequency: PathBuf,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoldConfig {
    pub k: usize,
    /// Spread every language pair evenly over the folds.
    pub stratify_by_language: bool,
}

impl Default for FoldConfig {
    fn default() -> Self {
        FoldConfig {
            k: 10,
            stratify_by_language: false,
        }
    }
}

/// Features compared against the control baseline, per measure. Names are
/// `s_lm`, `s_mt` or an attentional feature of the measure's side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    #[serde(rename = "TrtS")]
    pub trt_s: Vec<String>,
    #[serde(rename = "TrtT")]
    pub trt_t: Vec<String>,
    #[serde(rename = "Dur")]
    pub dur: Vec<String>,
    /// Also fit control + surprisal + attention models and compare them with
    /// both the control baseline and the control + surprisal model.
    pub supplementary: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        let src: Vec<String> = std::iter::once("s_lm")
            .chain(SOURCE_ATTENTION_FEATURES)
            .map(String::from)
            .collect();
        let tgt: Vec<String> = ["s_lm", "s_mt"]
            .into_iter()
            .chain(TARGET_ATTENTION_FEATURES)
            .map(String::from)
            .collect();
        FeatureConfig {
            trt_s: src,
            trt_t: tgt.clone(),
            dur: tgt,
            supplementary: true,
        }
    }
}

impl FeatureConfig {
    pub fn for_measure(&self, m: DurationMeasure) -> &[String] {
        match m {
            DurationMeasure::TrtS => &self.trt_s,
            DurationMeasure::TrtT => &self.trt_t,
            DurationMeasure::Dur => &self.dur,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScopeConfig {
    /// Fit one model on all language pairs together.
    pub pooled: bool,
    /// Language pairs that also get a model of their own.
    pub language_pairs: Vec<String>,
}

impl Default for ScopeConfig {
    fn default() -> Self {
        ScopeConfig {
            pooled: true,
            language_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub pooled: ModelKind,
    pub per_pair: ModelKind,
    pub predictive: Predictive,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            pooled: ModelKind::Mixed,
            per_pair: ModelKind::Ols,
            predictive: Predictive::Conditional,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    pub n_perm: usize,
    pub sidedness: Sidedness,
    pub unit: TestUnit,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            n_perm: 1000,
            sidedness: Sidedness::Greater,
            unit: TestUnit::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Feature-table columns correlated pairwise, e.g. `["tgt.s_lm", "tgt.s_mt"]`.
    pub correlations: Vec<[String; 2]>,
    /// Columns summarized per part-of-speech tag next to the average
    /// translation duration.
    pub pos_predictors: Vec<String>,
    /// Frequency assigned to unknown words; defaults to the table minimum.
    pub frequency_floor: Option<f64>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            correlations: vec![["tgt.s_lm".into(), "tgt.s_mt".into()]],
            pos_predictors: vec!["src.s_lm".into(), "tgt.s_mt".into()],
            frequency_floor: None,
        }
    }
}

fn default_levels() -> Vec<UnitLevel> {
    UnitLevel::ALL.to_vec()
}

fn default_measures() -> Vec<DurationMeasure> {
    DurationMeasure::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub paths: Paths,
    #[serde(default = "default_levels")]
    pub levels: Vec<UnitLevel>,
    #[serde(default = "default_measures")]
    pub measures: Vec<DurationMeasure>,
    #[serde(default)]
    pub folds: FoldConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub scopes: ScopeConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub test: TestConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub schema: TableSchema,
}

/// A validated configuration together with the directory its relative
/// paths are anchored to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub base: PathBuf,
}

pub const CONTROL_COLUMNS: [&str; 3] = ["length", "mean_log_freq", "mean_pos_quantile"];

/// Side prefix used in feature-table column names.
pub fn side_prefix(m: DurationMeasure) -> &'static str {
    match m {
        DurationMeasure::TrtS => "src",
        DurationMeasure::TrtT | DurationMeasure::Dur => "tgt",
    }
}

/// The surprisal that the supplementary models add for a measure.
pub fn surprisal_for(m: DurationMeasure) -> &'static str {
    match m {
        DurationMeasure::TrtS => "s_lm",
        DurationMeasure::TrtT | DurationMeasure::Dur => "s_mt",
    }
}

fn allowed_features(m: DurationMeasure) -> Vec<&'static str> {
    match m {
        DurationMeasure::TrtS => std::iter::once("s_lm").chain(SOURCE_ATTENTION_FEATURES).collect(),
        _ => ["s_lm", "s_mt"].into_iter().chain(TARGET_ATTENTION_FEATURES).collect(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("configuration always serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Checks that do not touch the file system.
    pub fn check(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Validation(m));
        if self.folds.k < 2 {
            return bad(format!("folds.k must be at least 2, got {}", self.folds.k));
        }
        if self.test.n_perm == 0 {
            return bad("test.n_perm must be positive".into());
        }
        if self.levels.is_empty() || self.measures.is_empty() {
            return bad("levels and measures must not be empty".into());
        }
        if !self.scopes.pooled && self.scopes.language_pairs.is_empty() {
            return bad("no scope selected: enable scopes.pooled or list language pairs".into());
        }
        for m in DurationMeasure::ALL {
            let allowed = allowed_features(m);
            let list = self.features.for_measure(m);
            for f in list {
                if f == "s_mt" && m == DurationMeasure::TrtS {
                    return bad("s_mt is a target-side feature and cannot predict TrtS".into());
                }
                if !allowed.contains(&f.as_str()) {
                    return bad(format!("unknown feature {f:?} for {}", m.as_str()));
                }
            }
            let mut sorted = list.to_vec();
            sorted.sort();
            sorted.dedup();
            if sorted.len() != list.len() {
                return bad(format!("duplicate feature for {}", m.as_str()));
            }
        }
        if let Some(f) = self.analysis.frequency_floor {
            if !(f > 0.0 && f.is_finite()) {
                return bad(format!("analysis.frequency_floor must be positive, got {f}"));
            }
        }
        let known = crate::features_table::feature_columns();
        for col in self.analysis.correlations.iter().flatten().chain(&self.analysis.pos_predictors) {
            if !known.iter().any(|k| k == col) {
                return bad(format!("unknown feature-table column {col:?}"));
            }
        }
        Ok(())
    }
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let config = RunConfig::from_toml(&text)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(LoadedConfig { config, base })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.tables)
    }

    pub fn dumps_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.dumps)
    }

    pub fn frequency_file(&self) -> PathBuf {
        self.resolve(&self.config.paths.frequency)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.paths.output)
    }

    /// Full validation, including that every input path exists.
    pub fn validate(&self) -> Result<()> {
        self.config.check()?;
        let need = |p: PathBuf, what: &str, dir: bool| {
            let ok = if dir { p.is_dir() } else { p.is_file() };
            if ok {
                Ok(())
            } else {
                Err(CliError::Validation(format!("{what} {} does not exist", p.display())))
            }
        };
        need(self.tables_dir(), "tables directory", true)?;
        need(self.dumps_dir(), "dumps directory", true)?;
        need(self.frequency_file(), "frequency file", false)?;
        Ok(())
    }
}
