use std::collections::HashMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::index::{SegmentRef, SentencePair};

/// Unigram frequencies (per billion words), keyed by lowercased word.
#[derive(Debug, Clone)]
pub struct FrequencyTable {
    freqs: HashMap<String, f64>,
    floor: f64,
}

impl FrequencyTable {
    /// Floor defaults to the smallest nonzero frequency present.
    pub fn new(freqs: HashMap<String, f64>) -> Result<Self> {
        let floor = freqs
            .values()
            .copied()
            .filter(|&f| f > 0.0)
            .fold(f64::INFINITY, f64::min);
        if !floor.is_finite() {
            return Err(CoreError::Config("frequency table has no positive entries".into()));
        }
        // case variants collapse onto one key; keep the largest so the
        // result does not depend on map iteration order
        let mut folded: HashMap<String, f64> = HashMap::with_capacity(freqs.len());
        for (w, f) in freqs {
            let slot = folded.entry(w.to_lowercase()).or_insert(f);
            *slot = slot.max(f);
        }
        Ok(FrequencyTable { freqs: folded, floor })
    }

    /// Two whitespace-separated columns per line: word, frequency. Blank
    /// lines and `#` comments are skipped.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        let mut freqs = HashMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut cols = line.split_whitespace();
            let (Some(word), Some(freq), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(CoreError::Config(format!(
                    "{}:{}: expected `word frequency`",
                    path.display(),
                    n + 1
                )));
            };
            let freq: f64 = freq.parse().map_err(|_| {
                CoreError::Config(format!("{}:{}: bad frequency {freq:?}", path.display(), n + 1))
            })?;
            if !(freq >= 0.0 && freq.is_finite()) {
                return Err(CoreError::Config(format!(
                    "{}:{}: frequency must be finite and non-negative",
                    path.display(),
                    n + 1
                )));
            }
            freqs.insert(word.to_string(), freq);
        }
        Self::new(freqs)
    }

    pub fn with_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(CoreError::Config(format!("frequency floor must be positive, got {floor}")));
        }
        self.floor = floor;
        Ok(self)
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// `(frequency after flooring, was the word found with a positive value)`.
    pub fn lookup(&self, word: &str) -> (f64, bool) {
        match self.freqs.get(&word.to_lowercase()) {
            Some(&f) if f > 0.0 => (f.max(self.floor), true),
            _ => (self.floor, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    pub length_tokens: f64,
    pub mean_log_freq: f64,
    pub mean_pos_quantile: f64,
    /// Words that fell back to the floor frequency.
    pub oov: Vec<String>,
}

/// Length in subword tokens, mean floored log-frequency and mean relative
/// position of the segment's words.
pub fn control_features(
    seg: &SegmentRef,
    sentence: &SentencePair,
    subword_count: usize,
    freq: &FrequencyTable,
) -> Result<Controls> {
    let words = sentence.tokens(seg.side);
    let n = words.len();
    if seg.indices.is_empty() || seg.indices.max().unwrap_or(0) > n || seg.indices.min() == Some(0) {
        return Err(CoreError::Domain(format!(
            "segment {} outside sentence of {n} words",
            seg.indices
        )));
    }
    let mut log_freq = 0.0;
    let mut pos = 0.0;
    let mut oov = Vec::new();
    for i in seg.indices.iter() {
        let word = &words[i - 1];
        let (f, known) = freq.lookup(word);
        if !known {
            oov.push(word.clone());
        }
        log_freq += f.ln();
        pos += i as f64 / n as f64;
    }
    let k = seg.indices.len() as f64;
    Ok(Controls {
        length_tokens: subword_count as f64,
        mean_log_freq: log_freq / k,
        mean_pos_quantile: pos / k,
        oov,
    })
}

/// `ln(duration_ms / n_aligned_source_words)`.
pub fn avg_translation_duration(duration_ms: f64, n_aligned_source_words: usize) -> Result<f64> {
    if n_aligned_source_words == 0 {
        return Err(CoreError::Domain("no aligned source words".into()));
    }
    if !(duration_ms > 0.0) {
        return Err(CoreError::Domain(format!("duration must be positive, got {duration_ms}")));
    }
    Ok((duration_ms / n_aligned_source_words as f64).ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{IndexSet, Side};
    use approx::assert_abs_diff_eq;

    fn pair(words: &[&str]) -> SentencePair {
        SentencePair {
            pair_id: "p".into(),
            source_sentence_id: "s".into(),
            language_pair: "en-da".into(),
            source_tokens: words.iter().map(|w| w.to_string()).collect(),
            target_tokens: vec!["x".into()],
            pos_tags: None,
        }
    }

    fn table() -> FrequencyTable {
        let m: HashMap<String, f64> = [("the", 50000.0), ("cat", 20.0), ("sat", 5.0), ("zero", 0.0)]
            .into_iter()
            .map(|(w, f)| (w.to_string(), f))
            .collect();
        FrequencyTable::new(m).unwrap()
    }

    #[test]
    fn position_quantile() {
        let p = pair(&["a", "b", "c", "d", "e", "f", "g", "h", "i", "j"]);
        let seg = SegmentRef::new(Side::Source, IndexSet::from([3]), 10).unwrap();
        let c = control_features(&seg, &p, 1, &table()).unwrap();
        assert_abs_diff_eq!(c.mean_pos_quantile, 0.3, epsilon = 1e-15);
    }

    #[test]
    fn oov_uses_floor_and_is_flagged() {
        let t = table();
        assert_eq!(t.floor(), 5.0);
        let p = pair(&["The", "dog", "zero"]);
        let seg = SegmentRef::new(Side::Source, IndexSet::from([2, 3]), 3).unwrap();
        let c = control_features(&seg, &p, 2, &t).unwrap();
        assert_eq!(c.oov, vec!["dog".to_string(), "zero".to_string()]);
        assert_abs_diff_eq!(c.mean_log_freq, 5f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn hand_computed_triple() {
        // "the cat sat", segment {1,2} split into 3 subwords
        let p = pair(&["the", "cat", "sat"]);
        let seg = SegmentRef::new(Side::Source, IndexSet::from([1, 2]), 3).unwrap();
        let c = control_features(&seg, &p, 3, &table()).unwrap();
        assert_eq!(c.length_tokens, 3.0);
        assert_abs_diff_eq!(c.mean_log_freq, (50000f64.ln() + 20f64.ln()) / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.mean_pos_quantile, 0.5, epsilon = 1e-15);
        assert!(c.oov.is_empty());
    }

    #[test]
    fn avg_duration_examples() {
        assert_abs_diff_eq!(avg_translation_duration(400.0, 1).unwrap(), 400f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(avg_translation_duration(400.0, 2).unwrap(), 200f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(avg_translation_duration(900.0, 3).unwrap(), 300f64.ln(), epsilon = 1e-15);
        assert!(avg_translation_duration(400.0, 0).is_err());
    }

    #[test]
    fn parse_frequency_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("en.tsv");
        fs::write(&path, "# word\tfreq\nthe\t50000\nCat 20\n\n").unwrap();
        let t = FrequencyTable::load(&path).unwrap();
        assert_eq!(t.lookup("cat"), (20.0, true));
        assert_eq!(t.lookup("THE"), (50000.0, true));
        fs::write(&path, "the\n").unwrap();
        assert!(matches!(FrequencyTable::load(&path), Err(CoreError::Config(_))));
    }
}
