use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::index::{IndexSet, SegmentRef, SentencePair, Side};

use super::{BehavioralObservation, UnitLevel};

/// Column names of the sentence table. Optional columns are used when the
/// header has them and ignored otherwise.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SentenceColumns {
    pub study: String,
    pub participant: String,
    pub sentence: String,
    pub source_lang: String,
    pub target_lang: String,
    pub source: String,
    pub target: String,
    pub pos: Option<String>,
    /// Identifies the source text across studies; defaults to `study/sentence`.
    pub text_id: Option<String>,
}

impl Default for SentenceColumns {
    fn default() -> Self {
        SentenceColumns {
            study: "Study".into(),
            participant: "Part".into(),
            sentence: "SId".into(),
            source_lang: "SL".into(),
            target_lang: "TL".into(),
            source: "Source".into(),
            target: "Target".into(),
            pos: Some("PoS".into()),
            text_id: Some("TextId".into()),
        }
    }
}

/// Column names of word and segment tables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UnitColumns {
    pub study: String,
    pub participant: String,
    /// Sentence id per source word, `+`-joined (one id is broadcast).
    pub source_sentences: String,
    /// 1-based source word positions, `+`-joined.
    pub source_words: String,
    pub target_sentences: String,
    pub target_words: String,
    /// `source` or `target`; rows are source units when absent.
    pub side: Option<String>,
    pub trt_s: Option<String>,
    pub trt_t: Option<String>,
    pub dur: Option<String>,
    pub pos: Option<String>,
}

impl Default for UnitColumns {
    fn default() -> Self {
        UnitColumns {
            study: "Study".into(),
            participant: "Part".into(),
            source_sentences: "SSent".into(),
            source_words: "SIdx".into(),
            target_sentences: "TSent".into(),
            target_words: "TIdx".into(),
            side: Some("Side".into()),
            trt_s: Some("TrtS".into()),
            trt_t: Some("TrtT".into()),
            dur: Some("Dur".into()),
            pos: Some("PoS".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableSchema {
    pub sentences: String,
    pub word_tables: Vec<String>,
    pub segment_tables: Vec<String>,
    pub sentence_columns: SentenceColumns,
    pub unit_columns: UnitColumns,
}

impl Default for TableSchema {
    fn default() -> Self {
        TableSchema {
            sentences: "sentences.tsv".into(),
            word_tables: vec!["words.tsv".into()],
            segment_tables: vec!["segments.tsv".into()],
            sentence_columns: SentenceColumns::default(),
            unit_columns: UnitColumns::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    /// 1-based data row (header excluded).
    pub row: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedTables {
    pub sentences: BTreeMap<String, SentencePair>,
    pub observations: Vec<BehavioralObservation>,
    pub rejects: Vec<Reject>,
}

const MISSING: [&str; 5] = ["", "---", "NA", "na", "nan"];

struct Header {
    file: PathBuf,
    index: HashMap<String, usize>,
}

impl Header {
    fn read(rdr: &mut csv::Reader<std::fs::File>, file: &Path) -> Result<Self> {
        let index = rdr
            .headers()
            .map_err(|source| CoreError::Table {
                path: file.to_path_buf(),
                source,
            })?
            .iter()
            .enumerate()
            .map(|(i, h)| (h.trim().to_string(), i))
            .collect();
        Ok(Header {
            file: file.to_path_buf(),
            index,
        })
    }

    fn required(&self, name: &str) -> Result<usize> {
        self.index.get(name).copied().ok_or_else(|| {
            CoreError::Config(format!(
                "{}: missing mandatory column {name:?}",
                self.file.display()
            ))
        })
    }

    fn optional(&self, name: Option<&String>) -> Option<usize> {
        name.and_then(|n| self.index.get(n.as_str()).copied())
    }
}

fn open_tsv(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .from_path(path)
        .map_err(|source| CoreError::Table {
            path: path.to_path_buf(),
            source,
        })
}

fn cell(rec: &csv::StringRecord, idx: usize) -> &str {
    rec.get(idx).unwrap_or("").trim()
}

fn is_missing(v: &str) -> bool {
    MISSING.contains(&v)
}

fn split_list(v: &str) -> Vec<&str> {
    if is_missing(v) {
        return Vec::new();
    }
    v.split('+').map(str::trim).filter(|s| !s.is_empty()).collect()
}

fn parse_positions(v: &str) -> std::result::Result<Vec<usize>, String> {
    split_list(v)
        .into_iter()
        .map(|s| {
            s.parse::<usize>()
                .ok()
                .filter(|&i| i > 0)
                .ok_or_else(|| format!("bad word position {s:?}"))
        })
        .collect()
}

fn parse_duration(v: &str, name: &str) -> std::result::Result<Option<f64>, String> {
    if is_missing(v) {
        return Ok(None);
    }
    let x: f64 = v.parse().map_err(|_| format!("bad {name} value {v:?}"))?;
    if !x.is_finite() {
        return Err(format!("bad {name} value {v:?}"));
    }
    Ok((x > 0.0).then_some(x))
}

fn file_label(dir: &Path, path: &Path) -> String {
    path.strip_prefix(dir).unwrap_or(path).display().to_string()
}

type PairKey = (String, String, String);

fn parse_sentence_table(dir: &Path, schema: &TableSchema, out: &mut ParsedTables) -> Result<HashMap<PairKey, String>> {
    let path = dir.join(&schema.sentences);
    let label = file_label(dir, &path);
    let cols = &schema.sentence_columns;
    let mut rdr = open_tsv(&path)?;
    let header = Header::read(&mut rdr, &path)?;
    let study = header.required(&cols.study)?;
    let part = header.required(&cols.participant)?;
    let sid = header.required(&cols.sentence)?;
    let sl = header.required(&cols.source_lang)?;
    let tl = header.required(&cols.target_lang)?;
    let src = header.required(&cols.source)?;
    let tgt = header.required(&cols.target)?;
    let pos = header.optional(cols.pos.as_ref());
    let text_id = header.optional(cols.text_id.as_ref());

    let mut keys = HashMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|source| CoreError::Table {
            path: path.clone(),
            source,
        })?;
        let mut reject = |reason: String| {
            out.rejects.push(Reject {
                file: label.clone(),
                row,
                reason,
            })
        };
        let key = (
            cell(&rec, study).to_string(),
            cell(&rec, part).to_string(),
            cell(&rec, sid).to_string(),
        );
        if key.0.is_empty() || key.1.is_empty() || key.2.is_empty() {
            reject("missing study, participant or sentence id".into());
            continue;
        }
        let words = |i: usize| -> Vec<String> { cell(&rec, i).split_whitespace().map(String::from).collect() };
        let pair = SentencePair {
            pair_id: format!("{}/{}/{}", key.0, key.1, key.2),
            source_sentence_id: text_id
                .map(|i| cell(&rec, i))
                .filter(|v| !is_missing(v))
                .map(String::from)
                .unwrap_or_else(|| format!("{}/{}", key.0, key.2)),
            language_pair: format!(
                "{}-{}",
                cell(&rec, sl).to_lowercase(),
                cell(&rec, tl).to_lowercase()
            ),
            source_tokens: words(src),
            target_tokens: words(tgt),
            pos_tags: pos
                .map(|i| cell(&rec, i))
                .filter(|v| !is_missing(v))
                .map(|v| v.split_whitespace().map(String::from).collect()),
        };
        if let Err(e) = pair.validate() {
            reject(e.to_string());
            continue;
        }
        if keys.contains_key(&key) {
            reject(format!("duplicate sentence {}", pair.pair_id));
            continue;
        }
        keys.insert(key, pair.pair_id.clone());
        out.sentences.insert(pair.pair_id.clone(), pair);
    }
    Ok(keys)
}

struct UnitIdx {
    study: usize,
    part: usize,
    ssent: usize,
    sidx: usize,
    tsent: usize,
    tidx: usize,
    side: Option<usize>,
    trt_s: Option<usize>,
    trt_t: Option<usize>,
    dur: Option<usize>,
    pos: Option<usize>,
}

fn sentence_ids(ids: &str, n_words: usize) -> std::result::Result<Vec<String>, String> {
    let ids = split_list(ids);
    match (ids.len(), n_words) {
        (0, 0) => Ok(Vec::new()),
        (1, _) => Ok(vec![ids[0].to_string()]),
        (a, b) if a == b => {
            let mut distinct: Vec<String> = Vec::new();
            for s in ids {
                if !distinct.iter().any(|d| d == s) {
                    distinct.push(s.to_string());
                }
            }
            Ok(distinct)
        }
        (a, b) => Err(format!("{a} sentence ids for {b} word positions")),
    }
}

fn parse_unit_row(
    rec: &csv::StringRecord,
    idx: &UnitIdx,
    level: UnitLevel,
    obs_id: String,
    keys: &HashMap<PairKey, String>,
    sentences: &BTreeMap<String, SentencePair>,
) -> std::result::Result<BehavioralObservation, String> {
    let study = cell(rec, idx.study);
    let part = cell(rec, idx.part);
    if study.is_empty() || part.is_empty() {
        return Err("missing study or participant".into());
    }
    let side = match idx.side.map(|i| cell(rec, i)).filter(|v| !is_missing(v)) {
        Some(v) => v.parse::<Side>().map_err(|e| e.to_string())?,
        None => Side::Source,
    };
    let src_words = parse_positions(cell(rec, idx.sidx))?;
    let tgt_words = parse_positions(cell(rec, idx.tidx))?;
    let src_ids = sentence_ids(cell(rec, idx.ssent), src_words.len())?;
    let tgt_ids = sentence_ids(cell(rec, idx.tsent), tgt_words.len())?;
    if src_ids.is_empty() != src_words.is_empty() || tgt_ids.is_empty() != tgt_words.is_empty() {
        return Err("word positions without sentence ids".into());
    }
    let (unit_words, unit_ids, other_words) = match side {
        Side::Source => (&src_words, &src_ids, &tgt_words),
        Side::Target => (&tgt_words, &tgt_ids, &src_words),
    };
    if unit_words.is_empty() {
        return Err(format!("{} unit has no word positions", side.as_str()));
    }
    let key = (study.to_string(), part.to_string(), unit_ids[0].clone());
    let pair_id = keys
        .get(&key)
        .ok_or_else(|| format!("unresolvable sentence reference {}/{}/{}", key.0, key.1, key.2))?;
    let pair = &sentences[pair_id];

    let crossing = src_ids.len() > 1
        || tgt_ids.len() > 1
        || (!src_ids.is_empty() && !tgt_ids.is_empty() && src_ids[0] != tgt_ids[0]);
    let make = |s: Side, words: &Vec<usize>| -> std::result::Result<SegmentRef, String> {
        let indices = IndexSet::from(words.clone());
        if crossing {
            Ok(SegmentRef { side: s, indices })
        } else {
            SegmentRef::new(s, indices, pair.len(s)).map_err(|e| e.to_string())
        }
    };
    let unit = make(side, unit_words)?;
    let aligned_counterpart = if other_words.is_empty() {
        None
    } else {
        Some(make(side.opposite(), other_words)?)
    };

    let dur_at = |i: Option<usize>, name: &str| match i {
        Some(i) => parse_duration(cell(rec, i), name),
        None => Ok(None),
    };
    let trt_s = dur_at(idx.trt_s, "TrtS")?;
    let trt_t = dur_at(idx.trt_t, "TrtT")?;
    let dur = dur_at(idx.dur, "Dur")?;
    if trt_s.is_none() && trt_t.is_none() && dur.is_none() {
        return Err("no positive duration".into());
    }

    let pos_tag = idx
        .pos
        .map(|i| cell(rec, i))
        .filter(|v| !is_missing(v))
        .map(String::from)
        .or_else(|| {
            // single source word: fall back to the sentence table's tag
            let src = if side == Side::Source { &unit } else { aligned_counterpart.as_ref()? };
            if crossing || src.indices.len() != 1 {
                return None;
            }
            pair.pos_tags.as_ref()?.get(src.indices.min()? - 1).cloned()
        });

    Ok(BehavioralObservation {
        obs_id,
        study_id: study.to_string(),
        participant_id: part.to_string(),
        language_pair: pair.language_pair.clone(),
        level,
        pair_id: pair.pair_id.clone(),
        source_sentence_id: pair.source_sentence_id.clone(),
        unit,
        aligned_counterpart,
        source_sentence_ids: src_ids,
        target_sentence_ids: tgt_ids,
        trt_s,
        trt_t,
        dur,
        log_scaled: false,
        pos_tag,
    })
}

fn parse_unit_table(
    dir: &Path,
    file: &str,
    level: UnitLevel,
    schema: &TableSchema,
    keys: &HashMap<PairKey, String>,
    out: &mut ParsedTables,
) -> Result<()> {
    let path = dir.join(file);
    let label = file_label(dir, &path);
    let cols = &schema.unit_columns;
    let mut rdr = open_tsv(&path)?;
    let header = Header::read(&mut rdr, &path)?;
    let idx = UnitIdx {
        study: header.required(&cols.study)?,
        part: header.required(&cols.participant)?,
        ssent: header.required(&cols.source_sentences)?,
        sidx: header.required(&cols.source_words)?,
        tsent: header.required(&cols.target_sentences)?,
        tidx: header.required(&cols.target_words)?,
        side: header.optional(cols.side.as_ref()),
        trt_s: header.optional(cols.trt_s.as_ref()),
        trt_t: header.optional(cols.trt_t.as_ref()),
        dur: header.optional(cols.dur.as_ref()),
        pos: header.optional(cols.pos.as_ref()),
    };
    if idx.trt_s.is_none() && idx.trt_t.is_none() && idx.dur.is_none() {
        return Err(CoreError::Config(format!(
            "{}: no duration column among {:?}, {:?}, {:?}",
            path.display(),
            cols.trt_s,
            cols.trt_t,
            cols.dur
        )));
    }
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|source| CoreError::Table {
            path: path.clone(),
            source,
        })?;
        match parse_unit_row(&rec, &idx, level, format!("{label}#{row}"), keys, &out.sentences) {
            Ok(o) => out.observations.push(o),
            Err(reason) => out.rejects.push(Reject {
                file: label.clone(),
                row,
                reason,
            }),
        }
    }
    Ok(())
}

/// Reads the sentence table and every configured word and segment table
/// under `dir`. Malformed rows go to `rejects`; a missing mandatory column
/// aborts with a configuration error.
pub fn parse_tables(dir: &Path, schema: &TableSchema) -> Result<ParsedTables> {
    let mut out = ParsedTables::default();
    let keys = parse_sentence_table(dir, schema, &mut out)?;
    for file in &schema.word_tables {
        parse_unit_table(dir, file, UnitLevel::Word, schema, &keys, &mut out)?;
    }
    for file in &schema.segment_tables {
        parse_unit_table(dir, file, UnitLevel::Segment, schema, &keys, &mut out)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentence_id_broadcast_and_dedup() {
        assert_eq!(sentence_ids("3", 2).unwrap(), vec!["3"]);
        assert_eq!(sentence_ids("3+3", 2).unwrap(), vec!["3"]);
        assert_eq!(sentence_ids("3+4", 2).unwrap(), vec!["3", "4"]);
        assert_eq!(sentence_ids("---", 0).unwrap(), Vec::<String>::new());
        assert!(sentence_ids("3+4+5", 2).is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("---", "Dur").unwrap(), None);
        assert_eq!(parse_duration("0", "Dur").unwrap(), None);
        assert_eq!(parse_duration("250", "Dur").unwrap(), Some(250.0));
        assert!(parse_duration("x", "Dur").is_err());
        assert!(parse_duration("inf", "Dur").is_err());
    }

    #[test]
    fn positions() {
        assert_eq!(parse_positions("2+4").unwrap(), vec![2, 4]);
        assert!(parse_positions("0").is_err());
        assert!(parse_positions("a").is_err());
    }
}
