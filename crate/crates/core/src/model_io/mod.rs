//! Model dump interchange format and subword-to-word mapping.
//!
//! A dump directory holds `manifest.json` plus one binary file per sentence
//! pair; the byte layout is documented in [`format`].

pub mod format;
mod manifest;
mod subword;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub use manifest::{DumpManifest, ExportFailure, PairEntry};
pub use subword::{map_subwords, segment_subword_indices, word_char_spans, SubwordMap};

/// Tolerance on attention row sums before a warning is raised.
pub const ROW_SUM_TOLERANCE: f64 = 1e-4;

/// Half-open character (Unicode scalar) interval into the text the model saw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharSpan {
    pub start: u32,
    pub end: u32,
}

impl CharSpan {
    pub fn new(start: u32, end: u32) -> Self {
        CharSpan { start, end }
    }

    pub fn overlaps(&self, other: &CharSpan) -> bool {
        self.start < other.end && other.start < self.end
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenKind {
    Content,
    Bos,
    Eos,
    /// Language tag; in the NMT target it doubles as the start token.
    LangTag,
    OtherSpecial,
}

impl TokenKind {
    pub fn code(self) -> u8 {
        match self {
            TokenKind::Content => 0,
            TokenKind::Bos => 1,
            TokenKind::Eos => 2,
            TokenKind::LangTag => 3,
            TokenKind::OtherSpecial => 4,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        Some(match c {
            0 => TokenKind::Content,
            1 => TokenKind::Bos,
            2 => TokenKind::Eos,
            3 => TokenKind::LangTag,
            4 => TokenKind::OtherSpecial,
            _ => return None,
        })
    }

    pub fn is_special(self) -> bool {
        self != TokenKind::Content
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenRecord {
    pub text: String,
    pub span: CharSpan,
    pub kind: TokenKind,
}

/// One tokenization of one sentence, specials included.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSeq(pub Vec<TokenRecord>);

impl TokenSeq {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TokenRecord> {
        self.0.iter()
    }

    pub fn spans(&self) -> Vec<CharSpan> {
        self.0.iter().map(|t| t.span).collect()
    }

    pub fn special_mask(&self) -> Vec<bool> {
        self.0.iter().map(|t| t.kind.is_special()).collect()
    }

    /// 0-based positions of non-special tokens.
    pub fn content_positions(&self) -> crate::IndexSet {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, t)| !t.kind.is_special())
            .map(|(i, _)| i)
            .collect()
    }

    pub fn positions_of(&self, kind: TokenKind) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, t)| t.kind == kind)
            .map(|(i, _)| i)
            .collect()
    }
}

/// `[layers, heads, rows, cols]` attention weights, row-major, stored as read.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor {
    layers: usize,
    heads: usize,
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl AttentionTensor {
    pub fn from_raw(layers: usize, heads: usize, rows: usize, cols: usize, data: Vec<f32>) -> Self {
        AttentionTensor {
            layers,
            heads,
            rows,
            cols,
            data,
        }
    }

    pub fn from_fn(
        layers: usize,
        heads: usize,
        rows: usize,
        cols: usize,
        mut f: impl FnMut(usize, usize, usize, usize) -> f32,
    ) -> Self {
        let mut data = Vec::with_capacity(layers * heads * rows * cols);
        for l in 0..layers {
            for h in 0..heads {
                for r in 0..rows {
                    for c in 0..cols {
                        data.push(f(l, h, r, c));
                    }
                }
            }
        }
        Self::from_raw(layers, heads, rows, cols, data)
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn raw(&self) -> &[f32] {
        &self.data
    }

    pub fn head(&self, layer: usize, head: usize) -> AttnView<'_> {
        assert!(layer < self.layers && head < self.heads);
        let size = self.rows * self.cols;
        let off = (layer * self.heads + head) * size;
        AttnView {
            rows: self.rows,
            cols: self.cols,
            data: &self.data[off..off + size],
        }
    }

    /// Every `(layer, head)` matrix, layer-major.
    pub fn heads_iter(&self) -> impl Iterator<Item = AttnView<'_>> + '_ {
        (0..self.layers).flat_map(move |l| (0..self.heads).map(move |h| self.head(l, h)))
    }

    fn shape_ok(&self) -> bool {
        self.data.len() == self.layers * self.heads * self.rows * self.cols
    }
}

/// A borrowed single-head attention matrix.
#[derive(Debug, Clone, Copy)]
pub struct AttnView<'a> {
    rows: usize,
    cols: usize,
    data: &'a [f32],
}

impl AttnView<'_> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        f64::from(self.data[r * self.cols + c])
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.data[r * self.cols..(r + 1) * self.cols]
            .iter()
            .map(|&v| f64::from(v))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogProbStream {
    LmSource,
    LmTarget,
    MtTarget,
}

impl LogProbStream {
    pub fn name(self) -> &'static str {
        match self {
            LogProbStream::LmSource => "lm_source",
            LogProbStream::LmTarget => "lm_target",
            LogProbStream::MtTarget => "mt_target",
        }
    }
}

/// Natural-log probabilities of tokens `1..len` of a token sequence; entry
/// `k` scores token `k + 1` given everything before it.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenLogProbs {
    pub stream: LogProbStream,
    pub values: Vec<f32>,
}

impl TokenLogProbs {
    /// Log-probability of the token at 0-based `position`; position 0 has
    /// no context and therefore no value.
    pub fn at_position(&self, position: usize) -> Option<f64> {
        position
            .checked_sub(1)
            .and_then(|k| self.values.get(k))
            .map(|&v| f64::from(v))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelDump {
    pub pair_id: String,
    pub layers: usize,
    pub heads: usize,
    pub source_text: String,
    pub target_text: String,
    pub nmt_source: TokenSeq,
    pub nmt_target: TokenSeq,
    pub lm_source_tokens: TokenSeq,
    pub lm_target_tokens: TokenSeq,
    pub enc_attn: AttentionTensor,
    pub cross_attn: AttentionTensor,
    pub dec_attn: AttentionTensor,
    pub lm_source: TokenLogProbs,
    pub lm_target: TokenLogProbs,
    pub mt_target: TokenLogProbs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DumpWarning {
    RowSum {
        tensor: String,
        layer: usize,
        head: usize,
        row: usize,
        sum: f64,
    },
    PositiveLogProb {
        stream: String,
        index: usize,
        value: f64,
    },
    SourceEosCount {
        count: usize,
    },
}

impl std::fmt::Display for DumpWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DumpWarning::RowSum {
                tensor,
                layer,
                head,
                row,
                sum,
            } => write!(
                f,
                "{tensor}[{layer},{head}] row {row} sums to {sum:.6} (tolerance {ROW_SUM_TOLERANCE})"
            ),
            DumpWarning::PositiveLogProb {
                stream,
                index,
                value,
            } => write!(f, "{stream}[{index}] = {value} > 0"),
            DumpWarning::SourceEosCount { count } => {
                write!(f, "source has {count} eos tokens, expected 1")
            }
        }
    }
}

impl ModelDump {
    /// Hard consistency: shapes, lengths and spans. Returns `(section, detail)`.
    pub(crate) fn check_structure(&self) -> std::result::Result<(), (String, String)> {
        let fail = |s: &str, d: String| Err((s.to_string(), d));
        let s = self.nmt_source.len();
        let t = self.nmt_target.len();
        for (name, tensor, rows, cols) in [
            ("enc_attn", &self.enc_attn, s, s),
            ("cross_attn", &self.cross_attn, t, s),
            ("dec_attn", &self.dec_attn, t, t),
        ] {
            if !tensor.shape_ok()
                || tensor.layers != self.layers
                || tensor.heads != self.heads
                || tensor.rows != rows
                || tensor.cols != cols
            {
                return fail(
                    name,
                    format!(
                        "shape [{}, {}, {}, {}] does not match [{}, {}, {rows}, {cols}]",
                        tensor.layers, tensor.heads, tensor.rows, tensor.cols, self.layers, self.heads
                    ),
                );
            }
            if let Some(v) = tensor.data.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return fail(name, format!("invalid attention weight {v}"));
            }
        }
        for (lp, tokens) in [
            (&self.lm_source, &self.lm_source_tokens),
            (&self.lm_target, &self.lm_target_tokens),
            (&self.mt_target, &self.nmt_target),
        ] {
            let expected = tokens.len().saturating_sub(1);
            if lp.values.len() != expected {
                return fail(
                    lp.stream.name(),
                    format!("{} values for {} tokens, expected {expected}", lp.values.len(), tokens.len()),
                );
            }
            if let Some(v) = lp.values.iter().find(|v| !v.is_finite()) {
                return fail(lp.stream.name(), format!("non-finite log-probability {v}"));
            }
        }
        let src_chars = self.source_text.chars().count() as u32;
        let tgt_chars = self.target_text.chars().count() as u32;
        for (name, seq, limit) in [
            ("nmt_source_tokens", &self.nmt_source, src_chars),
            ("nmt_target_tokens", &self.nmt_target, tgt_chars),
            ("lm_source_tokens", &self.lm_source_tokens, src_chars),
            ("lm_target_tokens", &self.lm_target_tokens, tgt_chars),
        ] {
            let mut last_start = 0;
            for (i, tok) in seq.iter().enumerate() {
                if tok.span.end < tok.span.start || tok.span.end > limit {
                    return fail(name, format!("token {i} span {:?} outside text of {limit} chars", tok.span));
                }
                if !tok.kind.is_special() {
                    if tok.span.start < last_start {
                        return fail(name, format!("token {i} starts before its predecessor"));
                    }
                    last_start = tok.span.start;
                }
            }
        }
        Ok(())
    }

    /// Soft checks that do not prevent feature extraction.
    pub fn validate(&self) -> Vec<DumpWarning> {
        let mut warnings = Vec::new();
        for (name, tensor) in [
            ("enc_attn", &self.enc_attn),
            ("cross_attn", &self.cross_attn),
            ("dec_attn", &self.dec_attn),
        ] {
            for l in 0..tensor.layers {
                for h in 0..tensor.heads {
                    let m = tensor.head(l, h);
                    for r in 0..m.rows() {
                        let sum = m.row_sum(r);
                        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                            warnings.push(DumpWarning::RowSum {
                                tensor: name.to_string(),
                                layer: l,
                                head: h,
                                row: r,
                                sum,
                            });
                        }
                    }
                }
            }
        }
        for lp in [&self.lm_source, &self.lm_target, &self.mt_target] {
            for (i, &v) in lp.values.iter().enumerate() {
                if v > 0.0 {
                    warnings.push(DumpWarning::PositiveLogProb {
                        stream: lp.stream.name().to_string(),
                        index: i,
                        value: f64::from(v),
                    });
                }
            }
        }
        let eos = self.nmt_source.positions_of(TokenKind::Eos).len();
        if eos != 1 {
            warnings.push(DumpWarning::SourceEosCount { count: eos });
        }
        warnings
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        format::encode(self)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        format::decode(bytes, origin)
    }
}

/// Reads and structurally validates one dump file.
pub fn read_dump(path: &Path) -> Result<ModelDump> {
    let bytes = fs::read(path).map_err(|e| CoreError::io(path, e))?;
    format::decode(&bytes, path)
}

/// [`read_dump`] plus the soft validation report.
pub fn read_dump_checked(path: &Path) -> Result<(ModelDump, Vec<DumpWarning>)> {
    let dump = read_dump(path)?;
    let warnings = dump.validate();
    Ok((dump, warnings))
}

pub fn write_dump(path: &Path, dump: &ModelDump) -> Result<()> {
    let bytes = format::encode(dump)?;
    format::write_atomic(path, &bytes)
}
