//! Surprisal, attentional and control features for one segment.
//!
//! Every attentional feature is computed per `(layer, head)`, divided by the
//! same quantity under uniform attention over the full row, and averaged
//! over all layer-head pairs. Supports exclude special tokens throughout;
//! the eos flows target the source eos position only.

mod attention;
mod controls;
mod surprisal;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::index::{IndexSet, SegmentRef, SentencePair, Side};
use crate::model_io::{
    map_subwords, segment_subword_indices, word_char_spans, AttentionTensor, ModelDump, SubwordMap, TokenKind,
    TokenSeq,
};

pub use attention::{attn_entropy, flow, normalize_feature, AttentionMatrix, DenseMatrix, UniformMatrix};
pub use controls::{avg_translation_duration, control_features, Controls, FrequencyTable};
pub use surprisal::{lm_surprisal, mt_surprisal, segment_surprisal_sum};

pub const SOURCE_ATTENTION_FEATURES: [&str; 6] = ["f_e_uu", "f_e_u_ctx", "f_e_u_eos", "f_e_ctx_u", "H_e_u_x", "f_c_y_u"];
pub const TARGET_ATTENTION_FEATURES: [&str; 5] = ["f_c_v_eos", "H_c_v_x", "f_d_vv", "f_d_v_ctx", "H_d_v_prefix"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Measure {
    Flow,
    Entropy,
}

impl Measure {
    fn eval<A: AttentionMatrix + ?Sized>(self, a: &A, from: &IndexSet, to: &IndexSet) -> Result<f64> {
        match self {
            Measure::Flow => flow(a, from, to),
            Measure::Entropy => attn_entropy(a, from, to),
        }
    }
}

/// Normalized feature averaged over every layer-head matrix of `tensor`.
pub fn head_averaged(tensor: &AttentionTensor, measure: Measure, from: &IndexSet, to: &IndexSet) -> Result<f64> {
    let dummy = measure.eval(&UniformMatrix::new(tensor.rows(), tensor.cols()), from, to)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for head in tensor.heads_iter() {
        total += normalize_feature(measure.eval(&head, from, to)?, dummy);
        count += 1;
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceAttention {
    pub f_e_uu: f64,
    pub f_e_u_ctx: f64,
    pub f_e_u_eos: f64,
    pub f_e_ctx_u: f64,
    #[serde(rename = "H_e_u_x")]
    pub h_e_u_x: f64,
    pub f_c_y_u: f64,
}

impl SourceAttention {
    pub fn named(&self) -> [(&'static str, f64); 6] {
        let v = [self.f_e_uu, self.f_e_u_ctx, self.f_e_u_eos, self.f_e_ctx_u, self.h_e_u_x, self.f_c_y_u];
        std::array::from_fn(|i| (SOURCE_ATTENTION_FEATURES[i], v[i]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetAttention {
    pub f_c_v_eos: f64,
    #[serde(rename = "H_c_v_x")]
    pub h_c_v_x: f64,
    pub f_d_vv: f64,
    pub f_d_v_ctx: f64,
    #[serde(rename = "H_d_v_prefix")]
    pub h_d_v_prefix: f64,
}

impl TargetAttention {
    pub fn named(&self) -> [(&'static str, f64); 5] {
        let v = [self.f_c_v_eos, self.h_c_v_x, self.f_d_vv, self.f_d_v_ctx, self.h_d_v_prefix];
        std::array::from_fn(|i| (TARGET_ATTENTION_FEATURES[i], v[i]))
    }
}

fn check_segment(seg: &IndexSet, content: &IndexSet, side: &str) -> Result<()> {
    if seg.is_empty() {
        return Err(CoreError::Domain(format!("empty {side} segment")));
    }
    if !seg.is_subset(content) {
        return Err(CoreError::Domain(format!(
            "{side} segment {seg} includes special or out-of-range positions"
        )));
    }
    Ok(())
}

fn source_eos(dump: &ModelDump) -> Result<IndexSet> {
    let eos: IndexSet = dump.nmt_source.positions_of(TokenKind::Eos).into();
    if eos.is_empty() {
        return Err(CoreError::Domain(format!("dump {} has no source eos", dump.pair_id)));
    }
    Ok(eos)
}

/// The six source-side features for NMT source subword positions `u`.
pub fn source_feature_set(dump: &ModelDump, u: &IndexSet) -> Result<SourceAttention> {
    let x = dump.nmt_source.content_positions();
    check_segment(u, &x, "source")?;
    let ctx = x.difference(u);
    let eos = source_eos(dump)?;
    let y = dump.nmt_target.content_positions();
    let enc = &dump.enc_attn;
    Ok(SourceAttention {
        f_e_uu: head_averaged(enc, Measure::Flow, u, u)?,
        f_e_u_ctx: head_averaged(enc, Measure::Flow, u, &ctx)?,
        f_e_u_eos: head_averaged(enc, Measure::Flow, u, &eos)?,
        f_e_ctx_u: head_averaged(enc, Measure::Flow, &ctx, u)?,
        h_e_u_x: head_averaged(enc, Measure::Entropy, u, &x)?,
        f_c_y_u: head_averaged(&dump.cross_attn, Measure::Flow, &y, u)?,
    })
}

/// The five target-side features for NMT target subword positions `v`.
pub fn target_feature_set(dump: &ModelDump, v: &IndexSet) -> Result<TargetAttention> {
    let y = dump.nmt_target.content_positions();
    check_segment(v, &y, "target")?;
    let last = v.max().expect("non-empty");
    let prefix = y.through(last);
    let ctx = prefix.difference(v);
    let x = dump.nmt_source.content_positions();
    let eos = source_eos(dump)?;
    Ok(TargetAttention {
        f_c_v_eos: head_averaged(&dump.cross_attn, Measure::Flow, v, &eos)?,
        h_c_v_x: head_averaged(&dump.cross_attn, Measure::Entropy, v, &x)?,
        f_d_vv: head_averaged(&dump.dec_attn, Measure::Flow, v, v)?,
        f_d_v_ctx: head_averaged(&dump.dec_attn, Measure::Flow, v, &ctx)?,
        h_d_v_prefix: head_averaged(&dump.dec_attn, Measure::Entropy, v, &prefix)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tokenization {
    Nmt,
    Lm,
}

/// A dump joined with the annotated sentence pair it was exported for.
#[derive(Debug)]
pub struct AlignedPair<'a> {
    pub dump: &'a ModelDump,
    pub pair: &'a SentencePair,
    nmt_source: SubwordMap,
    nmt_target: SubwordMap,
    lm_source: SubwordMap,
    lm_target: SubwordMap,
}

fn build_map(text: &str, words: &[String], seq: &TokenSeq) -> Result<SubwordMap> {
    let spans = word_char_spans(text, words)?;
    Ok(map_subwords(&spans, &seq.spans(), &seq.special_mask())?)
}

impl<'a> AlignedPair<'a> {
    pub fn new(dump: &'a ModelDump, pair: &'a SentencePair) -> Result<Self> {
        if dump.pair_id != pair.pair_id {
            return Err(CoreError::Domain(format!(
                "dump {} does not belong to pair {}",
                dump.pair_id, pair.pair_id
            )));
        }
        Ok(AlignedPair {
            dump,
            pair,
            nmt_source: build_map(&dump.source_text, &pair.source_tokens, &dump.nmt_source)?,
            nmt_target: build_map(&dump.target_text, &pair.target_tokens, &dump.nmt_target)?,
            lm_source: build_map(&dump.source_text, &pair.source_tokens, &dump.lm_source_tokens)?,
            lm_target: build_map(&dump.target_text, &pair.target_tokens, &dump.lm_target_tokens)?,
        })
    }

    pub fn map(&self, side: Side, tok: Tokenization) -> &SubwordMap {
        match (side, tok) {
            (Side::Source, Tokenization::Nmt) => &self.nmt_source,
            (Side::Target, Tokenization::Nmt) => &self.nmt_target,
            (Side::Source, Tokenization::Lm) => &self.lm_source,
            (Side::Target, Tokenization::Lm) => &self.lm_target,
        }
    }

    pub fn subwords(&self, seg: &SegmentRef, tok: Tokenization) -> Result<IndexSet> {
        Ok(segment_subword_indices(seg, self.map(seg.side, tok))?)
    }

    pub fn lm_surprisal(&self, seg: &SegmentRef) -> Result<f64> {
        let lp = match seg.side {
            Side::Source => &self.dump.lm_source,
            Side::Target => &self.dump.lm_target,
        };
        lm_surprisal(lp, &self.subwords(seg, Tokenization::Lm)?)
    }

    pub fn mt_surprisal(&self, seg: &SegmentRef) -> Result<f64> {
        if seg.side == Side::Source {
            return Err(CoreError::Unsupported(
                "translation surprisal is undefined for source segments".into(),
            ));
        }
        mt_surprisal(&self.dump.mt_target, &self.subwords(seg, Tokenization::Nmt)?)
    }

    pub fn source_features(&self, u: &SegmentRef) -> Result<SourceAttention> {
        if u.side != Side::Source {
            return Err(CoreError::Domain("source features need a source segment".into()));
        }
        source_feature_set(self.dump, &self.subwords(u, Tokenization::Nmt)?)
    }

    pub fn target_features(&self, v: &SegmentRef) -> Result<TargetAttention> {
        if v.side != Side::Target {
            return Err(CoreError::Domain("target features need a target segment".into()));
        }
        target_feature_set(self.dump, &self.subwords(v, Tokenization::Nmt)?)
    }

    pub fn controls(&self, seg: &SegmentRef, freq: &FrequencyTable) -> Result<Controls> {
        let n = self.subwords(seg, Tokenization::Nmt)?.len();
        control_features(seg, self.pair, n, freq)
    }
}
