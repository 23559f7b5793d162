//! Translation-process study tables: parsing, filtering, fold assignment and
//! the canonical observation files the later stages read.

mod filter;
mod folds;
mod tables;

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::index::{SegmentRef, SentencePair, Side};

pub use filter::{drop_cross_sentence_alignments, filter_and_scale, CrossSentenceReport, FilterReport, MIN_DURATION_MS};
pub use folds::{assign_folds, assign_folds_stratified, FoldAssignment};
pub use tables::{parse_tables, ParsedTables, Reject, SentenceColumns, TableSchema, UnitColumns};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitLevel {
    Word,
    Segment,
}

impl UnitLevel {
    pub const ALL: [UnitLevel; 2] = [UnitLevel::Word, UnitLevel::Segment];

    pub fn as_str(self) -> &'static str {
        match self {
            UnitLevel::Word => "word",
            UnitLevel::Segment => "segment",
        }
    }
}

/// Behavioral measures of translation difficulty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DurationMeasure {
    TrtS,
    TrtT,
    Dur,
}

impl DurationMeasure {
    pub const ALL: [DurationMeasure; 3] = [DurationMeasure::TrtS, DurationMeasure::TrtT, DurationMeasure::Dur];

    pub fn as_str(self) -> &'static str {
        match self {
            DurationMeasure::TrtS => "TrtS",
            DurationMeasure::TrtT => "TrtT",
            DurationMeasure::Dur => "Dur",
        }
    }

    /// Side of the segment whose features predict this measure.
    pub fn side(self) -> Side {
        match self {
            DurationMeasure::TrtS => Side::Source,
            DurationMeasure::TrtT | DurationMeasure::Dur => Side::Target,
        }
    }
}

impl std::str::FromStr for DurationMeasure {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "TrtS" => Ok(DurationMeasure::TrtS),
            "TrtT" => Ok(DurationMeasure::TrtT),
            "Dur" => Ok(DurationMeasure::Dur),
            other => Err(CoreError::Config(format!("unknown measure {other:?}"))),
        }
    }
}

/// One table row: a unit read by one participant, with its durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehavioralObservation {
    /// `<table file>#<data row>`; stable across re-runs.
    pub obs_id: String,
    pub study_id: String,
    pub participant_id: String,
    pub language_pair: String,
    pub level: UnitLevel,
    pub pair_id: String,
    pub source_sentence_id: String,
    pub unit: SegmentRef,
    pub aligned_counterpart: Option<SegmentRef>,
    /// Sentence ids named by the unit's source-side and target-side words.
    pub source_sentence_ids: Vec<String>,
    pub target_sentence_ids: Vec<String>,
    pub trt_s: Option<f64>,
    pub trt_t: Option<f64>,
    pub dur: Option<f64>,
    /// Durations are natural logs of milliseconds once set.
    pub log_scaled: bool,
    pub pos_tag: Option<String>,
}

impl BehavioralObservation {
    pub fn duration(&self, m: DurationMeasure) -> Option<f64> {
        match m {
            DurationMeasure::TrtS => self.trt_s,
            DurationMeasure::TrtT => self.trt_t,
            DurationMeasure::Dur => self.dur,
        }
    }

    pub fn duration_mut(&mut self, m: DurationMeasure) -> &mut Option<f64> {
        match m {
            DurationMeasure::TrtS => &mut self.trt_s,
            DurationMeasure::TrtT => &mut self.trt_t,
            DurationMeasure::Dur => &mut self.dur,
        }
    }

    /// The unit or its aligned counterpart, whichever lies on `side`.
    pub fn segment_on(&self, side: Side) -> Option<&SegmentRef> {
        if self.unit.side == side {
            Some(&self.unit)
        } else {
            self.aligned_counterpart.as_ref().filter(|c| c.side == side)
        }
    }

    pub fn has_duration(&self) -> bool {
        DurationMeasure::ALL.iter().any(|&m| self.duration(m).is_some())
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| CoreError::json(path, e))?;
        w.write_all(b"\n").map_err(|e| CoreError::io(path, e))?;
    }
    w.flush().map_err(|e| CoreError::io(path, e))
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = fs::File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CoreError::json(path, e))?);
    }
    Ok(out)
}

/// Canonical observations file: one JSON record per line.
pub fn write_observations(path: &Path, obs: &[BehavioralObservation]) -> Result<()> {
    write_jsonl(path, obs)
}

pub fn read_observations(path: &Path) -> Result<Vec<BehavioralObservation>> {
    read_jsonl(path)
}

pub fn write_sentences(path: &Path, pairs: &BTreeMap<String, SentencePair>) -> Result<()> {
    let v: Vec<&SentencePair> = pairs.values().collect();
    write_jsonl(path, &v)
}

pub fn read_sentences(path: &Path) -> Result<BTreeMap<String, SentencePair>> {
    let v: Vec<SentencePair> = read_jsonl(path)?;
    Ok(v.into_iter().map(|p| (p.pair_id.clone(), p)).collect())
}

/// Observation counts per `(language pair, level, measure)`.
pub fn sample_counts(obs: &[BehavioralObservation]) -> BTreeMap<(String, UnitLevel, DurationMeasure), usize> {
    let mut counts = BTreeMap::new();
    for o in obs {
        for m in DurationMeasure::ALL {
            if o.duration(m).is_some() {
                *counts.entry((o.language_pair.clone(), o.level, m)).or_insert(0) += 1;
            }
        }
    }
    counts
}
