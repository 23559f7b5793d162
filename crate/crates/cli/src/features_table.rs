//! The per-observation feature table written by `extract` and read by the
//! modelling stages.

use std::path::Path;

use tdiff_core::features::{SOURCE_ATTENTION_FEATURES, TARGET_ATTENTION_FEATURES};
use tdiff_core::ingest::{DurationMeasure, UnitLevel};

use crate::error::{CliError, Result};
use crate::tsv::{self, Table};

/// Identifying columns, in file order.
pub const ID_COLUMNS: [&str; 8] = [
    "obs_id",
    "participant",
    "language_pair",
    "level",
    "pair_id",
    "source_sentence_id",
    "fold",
    "pos_tag",
];

const CONTROLS: [&str; 3] = ["length", "mean_log_freq", "mean_pos_quantile"];

/// Numeric columns: log durations, log average translation duration, then
/// the controls and features of each side.
pub fn feature_columns() -> Vec<String> {
    let mut cols: Vec<String> = DurationMeasure::ALL.iter().map(|m| m.as_str().to_string()).collect();
    cols.push("avg_dur".into());
    for c in CONTROLS.iter().chain(&["s_lm"]).chain(SOURCE_ATTENTION_FEATURES.iter()) {
        cols.push(format!("src.{c}"));
    }
    for c in CONTROLS.iter().chain(&["s_lm", "s_mt"]).chain(TARGET_ATTENTION_FEATURES.iter()) {
        cols.push(format!("tgt.{c}"));
    }
    cols
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub obs_id: String,
    pub participant: String,
    pub language_pair: String,
    pub level: UnitLevel,
    pub pair_id: String,
    pub source_sentence_id: String,
    pub fold: usize,
    pub pos_tag: Option<String>,
    /// Aligned with [`feature_columns`].
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<FeatureRow>,
}

impl FeatureTable {
    pub fn new(rows: Vec<FeatureRow>) -> Self {
        FeatureTable {
            columns: feature_columns(),
            rows,
        }
    }

    pub fn index(&self, column: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == column)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut t = Table::new(ID_COLUMNS.iter().map(|s| s.to_string()).chain(self.columns.iter().cloned()));
        for r in &self.rows {
            let mut row = vec![
                r.obs_id.clone(),
                r.participant.clone(),
                r.language_pair.clone(),
                r.level.as_str().to_string(),
                r.pair_id.clone(),
                r.source_sentence_id.clone(),
                r.fold.to_string(),
                r.pos_tag.clone().unwrap_or_else(|| tsv::NA.to_string()),
            ];
            row.extend(r.values.iter().map(|&v| tsv::opt(v)));
            t.push(row);
        }
        t.write(path)
    }

    pub fn read(path: &Path) -> Result<FeatureTable> {
        let t = Table::read(path)?;
        let columns = feature_columns();
        let expected: Vec<String> = ID_COLUMNS.iter().map(|s| s.to_string()).chain(columns.iter().cloned()).collect();
        if t.header != expected {
            return Err(CliError::Stage {
                stage: "read".into(),
                detail: format!("{}: unexpected feature table header", path.display()),
            });
        }
        let bad = |row: usize, what: &str| CliError::Stage {
            stage: "read".into(),
            detail: format!("{} row {row}: bad {what}", path.display()),
        };
        let mut rows = Vec::with_capacity(t.rows.len());
        for (n, r) in t.rows.iter().enumerate() {
            let level = match r[3].as_str() {
                "word" => UnitLevel::Word,
                "segment" => UnitLevel::Segment,
                _ => return Err(bad(n + 1, "level")),
            };
            let fold = r[6].parse().map_err(|_| bad(n + 1, "fold"))?;
            let values = r[ID_COLUMNS.len()..].iter().map(|v| tsv::parse_opt(v)).collect();
            rows.push(FeatureRow {
                obs_id: r[0].clone(),
                participant: r[1].clone(),
                language_pair: r[2].clone(),
                level,
                pair_id: r[4].clone(),
                source_sentence_id: r[5].clone(),
                fold,
                pos_tag: (r[7] != tsv::NA).then(|| r[7].clone()),
                values,
            });
        }
        Ok(FeatureTable { columns, rows })
    }
}
