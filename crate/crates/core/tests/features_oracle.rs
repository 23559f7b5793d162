//! Feature values against brute-force recomputation from the raw fixture
//! arrays. The oracle works on full masked matrices and uses the
//! `ln(mass) - sum(a ln a) / mass` form of the restricted entropy, so it
//! shares no code path with the library.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tdiff_core::features::{
    flow, segment_surprisal_sum, source_feature_set, target_feature_set, AlignedPair, SOURCE_ATTENTION_FEATURES,
    TARGET_ATTENTION_FEATURES,
};
use tdiff_core::model_io::{
    read_dump, AttentionTensor, CharSpan, LogProbStream, ModelDump, TokenKind, TokenLogProbs, TokenRecord, TokenSeq,
};
use tdiff_core::{IndexSet, SegmentRef, SentencePair, Side};

type Matrix = Vec<Vec<f64>>;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn expected() -> Value {
    serde_json::from_str(&fs::read_to_string(golden_dir().join("expected.json")).unwrap()).unwrap()
}

/// `[layer][head]` matrices from the fixture JSON.
fn heads(v: &Value) -> Vec<Matrix> {
    let mut out = Vec::new();
    for layer in v.as_array().unwrap() {
        for head in layer.as_array().unwrap() {
            out.push(
                head.as_array()
                    .unwrap()
                    .iter()
                    .map(|row| row.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect())
                    .collect(),
            );
        }
    }
    out
}

fn oracle_flow(a: &Matrix, from: &[usize], to: &[usize]) -> f64 {
    let mut total = 0.0;
    for (k, row) in a.iter().enumerate() {
        for (l, &w) in row.iter().enumerate() {
            if from.contains(&k) && to.contains(&l) {
                total += w;
            }
        }
    }
    total
}

fn oracle_entropy(a: &Matrix, from: &[usize], to: &[usize]) -> f64 {
    let mut total = 0.0;
    for &k in from {
        let mass: f64 = to.iter().map(|&l| a[k][l]).sum();
        if mass == 0.0 {
            continue;
        }
        let plogp: f64 = to.iter().map(|&l| a[k][l]).filter(|&w| w > 0.0).map(|w| w * w.ln()).sum();
        total += mass.ln() - plogp / mass;
    }
    total
}

fn uniform(rows: usize, cols: usize) -> Matrix {
    vec![vec![1.0 / cols as f64; cols]; rows]
}

fn ratio(raw: f64, dummy: f64) -> f64 {
    if dummy == 0.0 {
        0.0
    } else {
        raw / dummy
    }
}

enum Kind {
    Flow,
    Entropy,
}

fn oracle_feature(mats: &[Matrix], kind: Kind, from: &[usize], to: &[usize]) -> f64 {
    let (rows, cols) = (mats[0].len(), mats[0][0].len());
    let u = uniform(rows, cols);
    let f = |m: &Matrix| match kind {
        Kind::Flow => oracle_flow(m, from, to),
        Kind::Entropy => oracle_entropy(m, from, to),
    };
    let dummy = f(&u);
    mats.iter().map(|m| ratio(f(m), dummy)).sum::<f64>() / mats.len() as f64
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + b.abs())
}

#[test]
fn source_features_match_oracle_on_toy_fixture() {
    let exp = expected();
    let pair = &exp["pairs"][0];
    let dump = read_dump(&golden_dir().join(pair["file"].as_str().unwrap())).unwrap();
    let enc = heads(&pair["enc_attn"]);
    let cross = heads(&pair["cross_attn"]);
    // "the cat sat": positions 0 lang, 1..4 content, 5 eos; target content 2..4
    let x = [1, 2, 3, 4];
    let y = [2, 3, 4];
    let eos = [5];
    for (u, ctx) in [(vec![3, 4], vec![1, 2]), (vec![1], vec![2, 3, 4]), (vec![1, 3], vec![2, 4])] {
        let got = source_feature_set(&dump, &IndexSet::from(u.clone())).unwrap();
        let want = [
            oracle_feature(&enc, Kind::Flow, &u, &u),
            oracle_feature(&enc, Kind::Flow, &u, &ctx),
            oracle_feature(&enc, Kind::Flow, &u, &eos),
            oracle_feature(&enc, Kind::Flow, &ctx, &u),
            oracle_feature(&enc, Kind::Entropy, &u, &x),
            oracle_feature(&cross, Kind::Flow, &y, &u),
        ];
        for ((name, g), w) in got.named().iter().zip(want) {
            assert!(close(*g, w, 1e-10), "u={u:?} {name}: {g} vs {w}");
        }
    }
}

#[test]
fn target_features_match_oracle_on_toy_fixture() {
    let exp = expected();
    let pair = &exp["pairs"][1];
    let dump = read_dump(&golden_dir().join(pair["file"].as_str().unwrap())).unwrap();
    let cross = heads(&pair["cross_attn"]);
    let dec = heads(&pair["dec_attn"]);
    // "hunde gør højt": 0 bos, 1 lang, 2 hunde, 3 gør, 4-5 højt; source content 1..4, eos 5
    let x = [1, 2, 3, 4];
    let eos = [5];
    let cases: [(Vec<usize>, Vec<usize>, Vec<usize>); 3] = [
        (vec![2], vec![], vec![2]),
        (vec![4, 5], vec![2, 3], vec![2, 3, 4, 5]),
        (vec![3], vec![2], vec![2, 3]),
    ];
    for (v, ctx, prefix) in cases {
        let got = target_feature_set(&dump, &IndexSet::from(v.clone())).unwrap();
        let want = [
            oracle_feature(&cross, Kind::Flow, &v, &eos),
            oracle_feature(&cross, Kind::Entropy, &v, &x),
            oracle_feature(&dec, Kind::Flow, &v, &v),
            oracle_feature(&dec, Kind::Flow, &v, &ctx),
            oracle_feature(&dec, Kind::Entropy, &v, &prefix),
        ];
        for ((name, g), w) in got.named().iter().zip(want) {
            assert!(close(*g, w, 1e-10), "v={v:?} {name}: {g} vs {w}");
        }
    }
}

#[test]
fn first_target_word_has_no_preceding_flow() {
    let dump = read_dump(&golden_dir().join("T1_P1_1.tdwb")).unwrap();
    let t = target_feature_set(&dump, &IndexSet::from([2, 3])).unwrap();
    assert_eq!(t.f_d_v_ctx, 0.0);
}

#[test]
fn whole_sentence_has_no_context_flow() {
    let dump = read_dump(&golden_dir().join("T1_P1_1.tdwb")).unwrap();
    let s = source_feature_set(&dump, &IndexSet::from([1, 2, 3, 4])).unwrap();
    assert_eq!(s.f_e_u_ctx, 0.0);
    assert_eq!(s.f_e_ctx_u, 0.0);
}

#[test]
fn specials_cannot_be_segments() {
    let dump = read_dump(&golden_dir().join("T1_P1_1.tdwb")).unwrap();
    assert!(source_feature_set(&dump, &IndexSet::from([0])).is_err());
    assert!(source_feature_set(&dump, &IndexSet::from([5])).is_err());
    assert!(target_feature_set(&dump, &IndexSet::from([1])).is_err());
    assert!(source_feature_set(&dump, &IndexSet::new()).is_err());
}

fn words(v: &Value) -> Vec<String> {
    v.as_array().unwrap().iter().map(|w| w.as_str().unwrap().to_string()).collect()
}

fn sentence_pair(p: &Value) -> SentencePair {
    SentencePair {
        pair_id: p["pair_id"].as_str().unwrap().into(),
        source_sentence_id: "s".into(),
        language_pair: "en-da".into(),
        source_tokens: words(&p["source_words"]),
        target_tokens: words(&p["target_words"]),
        pos_tags: None,
    }
}

#[test]
fn flow_conservation_on_fixture_dumps() {
    let exp = expected();
    for p in exp["pairs"].as_array().unwrap() {
        let dump = read_dump(&golden_dir().join(p["file"].as_str().unwrap())).unwrap();
        let x = dump.nmt_source.content_positions();
        let specials = IndexSet::range(0, dump.nmt_source.len() - 1).difference(&x);
        let n_words = words(&p["source_words"]).len();
        let sp = sentence_pair(p);
        let aligned = AlignedPair::new(&dump, &sp).unwrap();
        for w in 1..=n_words {
            let seg = SegmentRef::new(Side::Source, IndexSet::from([w]), n_words).unwrap();
            let u = aligned.subwords(&seg, tdiff_core::features::Tokenization::Nmt).unwrap();
            let ctx = x.difference(&u);
            for head in dump.enc_attn.heads_iter() {
                let total = flow(&head, &u, &u).unwrap() + flow(&head, &u, &ctx).unwrap() + flow(&head, &u, &specials).unwrap();
                assert!((total - u.len() as f64).abs() <= 1e-6, "{total} vs {}", u.len());
            }
        }
    }
}

#[test]
fn surprisal_sums_over_subwords() {
    let exp = expected();
    for p in exp["pairs"].as_array().unwrap() {
        let dump = read_dump(&golden_dir().join(p["file"].as_str().unwrap())).unwrap();
        let sp = sentence_pair(p);
        let aligned = AlignedPair::new(&dump, &sp).unwrap();
        let lm_tgt: Vec<f64> = p["lm_target"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let mt: Vec<f64> = p["mt_target"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        let n = sp.target_tokens.len();
        for w in 1..=n {
            let seg = SegmentRef::new(Side::Target, IndexSet::from([w]), n).unwrap();
            let lm_subs: Vec<usize> = p["maps"]["lm_target"][w - 1]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect();
            let mt_subs: Vec<usize> = p["maps"]["nmt_target"][w - 1]
                .as_array()
                .unwrap()
                .iter()
                .map(|v| v.as_u64().unwrap() as usize)
                .collect();
            // independent re-summation straight from the fixture arrays
            let lm_sum: f64 = lm_subs.iter().map(|&k| -lm_tgt[k - 1]).sum();
            let mt_sum: f64 = mt_subs.iter().map(|&k| -mt[k - 1]).sum();
            let got_lm = segment_surprisal_sum(&dump.lm_target, &IndexSet::from(lm_subs.clone())).unwrap();
            let got_mt = segment_surprisal_sum(&dump.mt_target, &IndexSet::from(mt_subs.clone())).unwrap();
            assert!((got_lm - lm_sum).abs() < 1e-12);
            assert!((got_mt - mt_sum).abs() < 1e-12);
            assert!((aligned.lm_surprisal(&seg).unwrap() - lm_sum / lm_subs.len() as f64).abs() < 1e-12);
            assert!((aligned.mt_surprisal(&seg).unwrap() - mt_sum / mt_subs.len() as f64).abs() < 1e-12);
        }
        // first forced target token has p = 1 in pair 1 (position 1: language tag)
        let src_seg = SegmentRef::new(Side::Source, IndexSet::from([1]), sp.source_tokens.len()).unwrap();
        assert!(aligned.mt_surprisal(&src_seg).is_err());
    }
}

#[test]
fn certain_tokens_have_exactly_zero_surprisal() {
    // pair 1: lm_source probability of " sat" (position 3) is exactly 1
    let dump = read_dump(&golden_dir().join("T1_P1_1.tdwb")).unwrap();
    let s = segment_surprisal_sum(&dump.lm_source, &IndexSet::from([3])).unwrap();
    assert_eq!(s, 0.0);
    assert!(s.is_sign_positive());
}

fn tok(text: &str, start: u32, end: u32, kind: TokenKind) -> TokenRecord {
    TokenRecord {
        text: text.into(),
        span: CharSpan::new(start, end),
        kind,
    }
}

/// Source of 8 positions and target of 4, so `1/8` and `1/4` are exact in f32.
fn uniform_dump() -> (ModelDump, SentencePair) {
    let src_words = ["a", "b", "c", "d", "e", "f"];
    let source_text = src_words.join(" ");
    let mut nmt_source = vec![tok("<lang>", 0, 0, TokenKind::LangTag)];
    for (i, w) in src_words.iter().enumerate() {
        nmt_source.push(tok(w, 2 * i as u32, 2 * i as u32 + 1, TokenKind::Content));
    }
    nmt_source.push(tok("</s>", 11, 11, TokenKind::Eos));
    let nmt_target = vec![
        tok("</s>", 0, 0, TokenKind::Bos),
        tok("<lang>", 0, 0, TokenKind::LangTag),
        tok("x", 0, 1, TokenKind::Content),
        tok("y", 2, 3, TokenKind::Content),
    ];
    let lm = |n: usize| TokenLogProbs {
        stream: LogProbStream::LmSource,
        values: vec![-0.5; n],
    };
    let (l, h) = (3, 4);
    let dump = ModelDump {
        pair_id: "u".into(),
        layers: l,
        heads: h,
        source_text: source_text.clone(),
        target_text: "x y".into(),
        lm_source_tokens: TokenSeq(nmt_source.clone()),
        lm_target_tokens: TokenSeq(nmt_target.clone()),
        enc_attn: AttentionTensor::from_fn(l, h, 8, 8, |_, _, _, _| 0.125),
        cross_attn: AttentionTensor::from_fn(l, h, 4, 8, |_, _, _, _| 0.125),
        dec_attn: AttentionTensor::from_fn(l, h, 4, 4, |_, _, _, _| 0.25),
        lm_source: lm(7),
        lm_target: TokenLogProbs {
            stream: LogProbStream::LmTarget,
            values: vec![-0.5; 3],
        },
        mt_target: TokenLogProbs {
            stream: LogProbStream::MtTarget,
            values: vec![-0.5; 3],
        },
        nmt_source: TokenSeq(nmt_source),
        nmt_target: TokenSeq(nmt_target),
    };
    let pair = SentencePair {
        pair_id: "u".into(),
        source_sentence_id: "u".into(),
        language_pair: "en-da".into(),
        source_tokens: src_words.iter().map(|s| s.to_string()).collect(),
        target_tokens: vec!["x".into(), "y".into()],
        pos_tags: None,
    };
    (dump, pair)
}

#[test]
fn uniform_attention_normalizes_to_one() {
    let (dump, pair) = uniform_dump();
    assert!(dump.validate().is_empty());
    let aligned = AlignedPair::new(&dump, &pair).unwrap();
    for seg in [vec![1], vec![2, 3], vec![1, 4, 6]] {
        let u = SegmentRef::new(Side::Source, IndexSet::from(seg), 6).unwrap();
        let s = aligned.source_features(&u).unwrap();
        for (name, v) in s.named() {
            assert!((v - 1.0).abs() <= 1e-9, "{name} = {v}");
        }
    }
    // v = second target word: v̄ = {x}, prefix = {x, y}
    let v = SegmentRef::new(Side::Target, IndexSet::from([2]), 2).unwrap();
    for (name, val) in aligned.target_features(&v).unwrap().named() {
        assert!((val - 1.0).abs() <= 1e-9, "{name} = {val}");
    }
    // first target word: empty context flow and single-element prefix both have a zero dummy
    let v = SegmentRef::new(Side::Target, IndexSet::from([1]), 2).unwrap();
    let t = aligned.target_features(&v).unwrap();
    assert_eq!(t.f_d_v_ctx, 0.0);
    assert_eq!(t.h_d_v_prefix, 0.0);
    for (name, val) in [("f_c_v_eos", t.f_c_v_eos), ("H_c_v_x", t.h_c_v_x), ("f_d_vv", t.f_d_vv)] {
        assert!((val - 1.0).abs() <= 1e-9, "{name} = {val}");
    }
}

#[test]
fn feature_name_lists_are_stable() {
    assert_eq!(SOURCE_ATTENTION_FEATURES.len(), 6);
    assert_eq!(TARGET_ATTENTION_FEATURES.len(), 5);
}
