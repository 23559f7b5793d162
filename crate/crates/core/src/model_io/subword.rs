use crate::error::MappingError;
use crate::index::{IndexSet, SegmentRef};

use super::CharSpan;

/// Word (1-based) to subword (0-based position in the model sequence) map.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubwordMap {
    words: Vec<IndexSet>,
    orphans: IndexSet,
}

impl SubwordMap {
    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    /// Subwords of the 1-based `word`.
    pub fn subwords(&self, word: usize) -> Option<&IndexSet> {
        word.checked_sub(1).and_then(|w| self.words.get(w))
    }

    /// Non-special subwords that overlap no word (e.g. a bare whitespace piece).
    pub fn orphans(&self) -> &IndexSet {
        &self.orphans
    }
}

/// Locates each word in `text`, left to right, and returns its char span.
pub fn word_char_spans(text: &str, words: &[String]) -> Result<Vec<CharSpan>, MappingError> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0usize;
    let mut spans = Vec::with_capacity(words.len());
    for (w, word) in words.iter().enumerate() {
        let needle: Vec<char> = word.chars().collect();
        let found = if needle.is_empty() {
            None
        } else {
            (cursor..=chars.len().saturating_sub(needle.len()))
                .find(|&s| chars[s..s + needle.len()] == needle[..])
        };
        let start = found.ok_or_else(|| MappingError::WordNotInText {
            word: w + 1,
            token: word.clone(),
            from: cursor,
        })?;
        let end = start + needle.len();
        spans.push(CharSpan::new(start as u32, end as u32));
        cursor = end;
    }
    Ok(spans)
}

/// Assigns every non-special subword to all words whose span it overlaps.
pub fn map_subwords(
    word_spans: &[CharSpan],
    subword_spans: &[CharSpan],
    special: &[bool],
) -> Result<SubwordMap, MappingError> {
    debug_assert_eq!(subword_spans.len(), special.len());
    let is_special = |k: usize| special.get(k).copied().unwrap_or(false);
    let words: Vec<IndexSet> = word_spans
        .iter()
        .map(|w| {
            subword_spans
                .iter()
                .enumerate()
                .filter(|&(k, s)| !is_special(k) && s.overlaps(w))
                .map(|(k, _)| k)
                .collect()
        })
        .collect();
    let unmapped: Vec<usize> = words
        .iter()
        .enumerate()
        .filter(|(_, s)| s.is_empty())
        .map(|(w, _)| w + 1)
        .collect();
    if !unmapped.is_empty() {
        return Err(MappingError::UnmappedWords { words: unmapped });
    }
    let orphans = (0..subword_spans.len())
        .filter(|&k| !is_special(k) && !words.iter().any(|s| s.contains(k)))
        .collect();
    Ok(SubwordMap { words, orphans })
}

/// Union of the subword positions of the segment's words.
pub fn segment_subword_indices(seg: &SegmentRef, map: &SubwordMap) -> Result<IndexSet, MappingError> {
    let mut out = Vec::new();
    for w in seg.indices.iter() {
        let subs = map.subwords(w).ok_or(MappingError::WordOutOfRange {
            word: w,
            len: map.word_count(),
        })?;
        out.extend(subs.iter());
    }
    Ok(out.into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::Side;

    fn spans(v: &[(u32, u32)]) -> Vec<CharSpan> {
        v.iter().map(|&(a, b)| CharSpan::new(a, b)).collect()
    }

    #[test]
    fn identity_tokenization() {
        let map = map_subwords(&spans(&[(0, 3)]), &spans(&[(0, 3)]), &[false]).unwrap();
        assert_eq!(map.subwords(1).unwrap(), &IndexSet::from([0]));
    }

    #[test]
    fn word_split_into_two_subwords() {
        // "societies" = "soci" + "eties"
        let map = map_subwords(&spans(&[(0, 9)]), &spans(&[(0, 4), (4, 9)]), &[false, false]).unwrap();
        assert_eq!(map.subwords(1).unwrap(), &IndexSet::from([0, 1]));
    }

    #[test]
    fn boundary_spanning_subword_goes_to_both_words() {
        // "ab cd" tokenized as "ab", " c" merged into "b c", "d"
        let words = spans(&[(0, 2), (3, 5)]);
        let subs = spans(&[(0, 1), (1, 4), (4, 5)]);
        let map = map_subwords(&words, &subs, &[false; 3]).unwrap();
        assert_eq!(map.subwords(1).unwrap(), &IndexSet::from([0, 1]));
        assert_eq!(map.subwords(2).unwrap(), &IndexSet::from([1, 2]));
        assert!(map.orphans().is_empty());
    }

    #[test]
    fn specials_are_never_mapped() {
        // eos carries a zero-width span at the end; a lang tag one at 0
        let words = spans(&[(0, 3)]);
        let subs = spans(&[(0, 0), (0, 3), (3, 3)]);
        let map = map_subwords(&words, &subs, &[true, false, true]).unwrap();
        assert_eq!(map.subwords(1).unwrap(), &IndexSet::from([1]));
    }

    #[test]
    fn unmapped_words_are_reported_together() {
        let words = spans(&[(0, 2), (3, 5), (6, 8)]);
        let subs = spans(&[(3, 5)]);
        let err = map_subwords(&words, &subs, &[false]).unwrap_err();
        assert_eq!(err, MappingError::UnmappedWords { words: vec![1, 3] });
    }

    #[test]
    fn whitespace_piece_is_an_orphan() {
        let words = spans(&[(0, 2), (3, 5)]);
        let subs = spans(&[(0, 2), (2, 3), (3, 5)]);
        let map = map_subwords(&words, &subs, &[false; 3]).unwrap();
        assert_eq!(map.orphans(), &IndexSet::from([1]));
    }

    #[test]
    fn locates_words_in_text() {
        let words: Vec<String> = ["the", "cat", "the"].iter().map(|s| s.to_string()).collect();
        let got = word_char_spans("the  cat the", &words).unwrap();
        assert_eq!(got, spans(&[(0, 3), (5, 8), (9, 12)]));
        let missing = vec!["dog".to_string()];
        assert!(matches!(
            word_char_spans("the cat", &missing),
            Err(MappingError::WordNotInText { word: 1, .. })
        ));
    }

    #[test]
    fn char_offsets_not_bytes() {
        let words: Vec<String> = ["æble", "ø"].iter().map(|s| s.to_string()).collect();
        let got = word_char_spans("æble ø", &words).unwrap();
        assert_eq!(got, spans(&[(0, 4), (5, 6)]));
    }

    #[test]
    fn segment_union() {
        let words = spans(&[(0, 2), (3, 5), (6, 8)]);
        let subs = spans(&[(0, 1), (1, 2), (3, 5), (6, 8)]);
        let map = map_subwords(&words, &subs, &[false; 4]).unwrap();
        let seg = SegmentRef::new(Side::Source, IndexSet::from([1]), 3).unwrap();
        assert_eq!(segment_subword_indices(&seg, &map).unwrap(), IndexSet::from([0, 1]));
        let seg = SegmentRef::new(Side::Source, IndexSet::from([1, 3]), 3).unwrap();
        assert_eq!(segment_subword_indices(&seg, &map).unwrap(), IndexSet::from([0, 1, 3]));
        let bad = SegmentRef {
            side: Side::Source,
            indices: IndexSet::from([4]),
        };
        assert!(segment_subword_indices(&bad, &map).is_err());
    }
}
