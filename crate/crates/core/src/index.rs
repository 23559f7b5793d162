//! Sentence, segment and index-set types.
//!
//! Word positions are 1-based. The same [`IndexSet`] type also carries
//! 0-based subword positions inside `model_io` and `features`; which base is
//! in use is fixed by the producing function, never mixed within one set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// A sorted set of unique positions.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "Vec<usize>", from = "Vec<usize>")]
pub struct IndexSet(Vec<usize>);

impl IndexSet {
    pub fn new() -> Self {
        IndexSet(Vec::new())
    }

    /// All positions in `lo..=hi`; empty when `hi < lo`.
    pub fn range(lo: usize, hi: usize) -> Self {
        if hi < lo {
            return IndexSet::new();
        }
        IndexSet((lo..=hi).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.0.binary_search(&idx).is_ok()
    }

    pub fn min(&self) -> Option<usize> {
        self.0.first().copied()
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn union(&self, other: &IndexSet) -> IndexSet {
        self.iter().chain(other.iter()).collect()
    }

    pub fn difference(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.iter().filter(|&i| !other.contains(i)).collect())
    }

    pub fn intersection(&self, other: &IndexSet) -> IndexSet {
        IndexSet(self.iter().filter(|&i| other.contains(i)).collect())
    }

    pub fn is_disjoint(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| !other.contains(i))
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.iter().all(|i| other.contains(i))
    }

    /// Members `<= bound`.
    pub fn through(&self, bound: usize) -> IndexSet {
        IndexSet(self.iter().take_while(|&i| i <= bound).collect())
    }

    /// Members `< bound`.
    pub fn before(&self, bound: usize) -> IndexSet {
        IndexSet(self.iter().take_while(|&i| i < bound).collect())
    }
}

impl FromIterator<usize> for IndexSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        let mut v: Vec<usize> = iter.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        IndexSet(v)
    }
}

impl From<Vec<usize>> for IndexSet {
    fn from(v: Vec<usize>) -> Self {
        v.into_iter().collect()
    }
}

impl From<IndexSet> for Vec<usize> {
    fn from(s: IndexSet) -> Self {
        s.0
    }
}

impl<const N: usize> From<[usize; N]> for IndexSet {
    fn from(v: [usize; N]) -> Self {
        v.into_iter().collect()
    }
}

impl fmt::Display for IndexSet {
    /// `+`-joined, the notation used in the study tables.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                f.write_str("+")?;
            }
            write!(f, "{i}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Source,
    Target,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Source => Side::Target,
            Side::Target => Side::Source,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Source => "source",
            Side::Target => "target",
        }
    }
}

impl std::str::FromStr for Side {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "source" | "src" | "st" | "s" => Ok(Side::Source),
            "target" | "tgt" | "tt" | "t" => Ok(Side::Target),
            other => Err(CoreError::Domain(format!("unknown side {other:?}"))),
        }
    }
}

/// A possibly non-contiguous set of word positions on one side of a pair.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SegmentRef {
    pub side: Side,
    pub indices: IndexSet,
}

impl SegmentRef {
    /// Checks non-emptiness and that every index lies in `1..=sentence_len`.
    pub fn new(side: Side, indices: IndexSet, sentence_len: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(CoreError::Domain("segment has no indices".into()));
        }
        if indices.min() == Some(0) || indices.max().unwrap_or(0) > sentence_len {
            return Err(CoreError::Domain(format!(
                "segment {indices} outside 1..={sentence_len}"
            )));
        }
        Ok(SegmentRef { side, indices })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentencePair {
    pub pair_id: String,
    pub source_sentence_id: String,
    pub language_pair: String,
    pub source_tokens: Vec<String>,
    pub target_tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pos_tags: Option<Vec<String>>,
}

impl SentencePair {
    pub fn tokens(&self, side: Side) -> &[String] {
        match side {
            Side::Source => &self.source_tokens,
            Side::Target => &self.target_tokens,
        }
    }

    pub fn len(&self, side: Side) -> usize {
        self.tokens(side).len()
    }

    /// `(source, target)` language codes from an `xx-yy` pair code.
    pub fn languages(&self) -> (&str, &str) {
        split_language_pair(&self.language_pair)
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_tokens.is_empty() || self.target_tokens.is_empty() {
            return Err(CoreError::Domain(format!(
                "pair {} has an empty side",
                self.pair_id
            )));
        }
        if let Some(tags) = &self.pos_tags {
            if tags.len() != self.source_tokens.len() {
                return Err(CoreError::Domain(format!(
                    "pair {}: {} POS tags for {} source words",
                    self.pair_id,
                    tags.len(),
                    self.source_tokens.len()
                )));
            }
        }
        Ok(())
    }
}

pub fn split_language_pair(code: &str) -> (&str, &str) {
    code.split_once(['-', '_', '>'])
        .map(|(a, b)| (a.trim(), b.trim_start_matches('>').trim()))
        .unwrap_or((code, ""))
}

/// `{1..m} \ i`: the source context of a segment.
pub fn complement_source(i: &IndexSet, m: usize) -> Result<IndexSet> {
    if i.min() == Some(0) || i.max().is_some_and(|x| x > m) {
        return Err(CoreError::Domain(format!("{i} not within 1..={m}")));
    }
    Ok(IndexSet::range(1, m).difference(i))
}

/// `{1..max(j)} \ j`: the target context preceding a segment.
pub fn preceding_context(j: &IndexSet) -> Result<IndexSet> {
    let hi = j
        .max()
        .ok_or_else(|| CoreError::Domain("preceding context of an empty segment".into()))?;
    Ok(IndexSet::range(1, hi).difference(j))
}

/// `{1..max(j)}`: every target position up to the rightmost one in `j`.
pub fn prefix_through(j: &IndexSet) -> Result<IndexSet> {
    let hi = j
        .max()
        .ok_or_else(|| CoreError::Domain("prefix of an empty segment".into()))?;
    Ok(IndexSet::range(1, hi))
}
