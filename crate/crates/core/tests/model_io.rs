//! Reader checks against dumps written by an independent (Python) writer.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tdiff_core::model_io::{
    map_subwords, read_dump, read_dump_checked, word_char_spans, write_dump, DumpManifest, DumpWarning, ModelDump,
    TokenKind,
};
use tdiff_core::CoreError;

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden")
}

fn expected() -> Value {
    let text = fs::read_to_string(golden_dir().join("expected.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

fn floats(v: &Value) -> Vec<f32> {
    fn walk(v: &Value, out: &mut Vec<f32>) {
        match v {
            Value::Array(a) => a.iter().for_each(|x| walk(x, out)),
            Value::Number(n) => out.push(n.as_f64().unwrap() as f32),
            _ => panic!("unexpected {v}"),
        }
    }
    let mut out = Vec::new();
    walk(v, &mut out);
    out
}

fn check_tokens(seq: &tdiff_core::model_io::TokenSeq, exp: &Value) {
    let exp = exp.as_array().unwrap();
    assert_eq!(seq.len(), exp.len());
    for (tok, e) in seq.iter().zip(exp) {
        assert_eq!(tok.text, e["text"].as_str().unwrap());
        assert_eq!(u64::from(tok.span.start), e["start"].as_u64().unwrap());
        assert_eq!(u64::from(tok.span.end), e["end"].as_u64().unwrap());
        assert_eq!(u64::from(tok.kind.code()), e["kind"].as_u64().unwrap());
    }
}

fn load(pair: &Value) -> ModelDump {
    read_dump(&golden_dir().join(pair["file"].as_str().unwrap())).unwrap()
}

#[test]
fn golden_dump_matches_fixture_field_by_field() {
    let exp = expected();
    for pair in exp["pairs"].as_array().unwrap() {
        let (dump, warnings) = read_dump_checked(&golden_dir().join(pair["file"].as_str().unwrap())).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(dump.pair_id, pair["pair_id"].as_str().unwrap());
        assert_eq!(dump.layers as u64, exp["layers"].as_u64().unwrap());
        assert_eq!(dump.heads as u64, exp["heads"].as_u64().unwrap());
        assert_eq!(dump.source_text, pair["source_text"].as_str().unwrap());
        assert_eq!(dump.target_text, pair["target_text"].as_str().unwrap());
        assert_eq!(dump.nmt_source.len() as u64, pair["s_full"].as_u64().unwrap());
        assert_eq!(dump.nmt_target.len() as u64, pair["t_full"].as_u64().unwrap());
        assert_eq!(dump.enc_attn.raw(), floats(&pair["enc_attn"]).as_slice());
        assert_eq!(dump.cross_attn.raw(), floats(&pair["cross_attn"]).as_slice());
        assert_eq!(dump.dec_attn.raw(), floats(&pair["dec_attn"]).as_slice());
        assert_eq!(dump.lm_source.values, floats(&pair["lm_source"]));
        assert_eq!(dump.lm_target.values, floats(&pair["lm_target"]));
        assert_eq!(dump.mt_target.values, floats(&pair["mt_target"]));
        check_tokens(&dump.nmt_source, &pair["nmt_source"]);
        check_tokens(&dump.nmt_target, &pair["nmt_target"]);
        check_tokens(&dump.lm_source_tokens, &pair["lm_source_tokens"]);
        check_tokens(&dump.lm_target_tokens, &pair["lm_target_tokens"]);
    }
}

#[test]
fn write_then_read_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for entry in DumpManifest::load(&golden_dir()).unwrap().pairs {
        let original = fs::read(golden_dir().join(&entry.file)).unwrap();
        let dump = read_dump(&golden_dir().join(&entry.file)).unwrap();
        let out = dir.path().join(&entry.file);
        write_dump(&out, &dump).unwrap();
        assert_eq!(fs::read(&out).unwrap(), original, "{}", entry.file);
        assert_eq!(read_dump(&out).unwrap(), dump);
    }
}

#[test]
fn manifest_inventory_matches_disk() {
    let m = DumpManifest::load(&golden_dir()).unwrap();
    assert_eq!(m.layers, 2);
    assert_eq!(m.heads, 2);
    assert!(m.missing_files(&golden_dir()).is_empty());
    assert_eq!(m.files_by_pair(&golden_dir()).len(), 2);
}

#[test]
fn subword_maps_match_hand_derivation() {
    let exp = expected();
    for pair in exp["pairs"].as_array().unwrap() {
        let dump = load(pair);
        let words = |k: &str| -> Vec<String> {
            pair[k].as_array().unwrap().iter().map(|w| w.as_str().unwrap().to_string()).collect()
        };
        let src_spans = word_char_spans(&dump.source_text, &words("source_words")).unwrap();
        let tgt_spans = word_char_spans(&dump.target_text, &words("target_words")).unwrap();
        for (name, seq, spans) in [
            ("nmt_source", &dump.nmt_source, &src_spans),
            ("nmt_target", &dump.nmt_target, &tgt_spans),
            ("lm_source", &dump.lm_source_tokens, &src_spans),
            ("lm_target", &dump.lm_target_tokens, &tgt_spans),
        ] {
            let map = map_subwords(spans, &seq.spans(), &seq.special_mask()).unwrap();
            assert!(map.orphans().is_empty(), "{name}");
            for (w, subs) in pair["maps"][name].as_array().unwrap().iter().enumerate() {
                let want: Vec<usize> = subs.as_array().unwrap().iter().map(|x| x.as_u64().unwrap() as usize).collect();
                assert_eq!(map.subwords(w + 1).unwrap().as_slice(), want.as_slice(), "{name} word {}", w + 1);
            }
        }
    }
}

fn golden_bytes() -> Vec<u8> {
    fs::read(golden_dir().join("T1_P1_1.tdwb")).unwrap()
}

#[test]
fn truncated_tensor_names_the_tensor() {
    let bytes = golden_bytes();
    // header + a few floats of enc_attn
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.tdwb");
    fs::write(&path, &bytes[..16 + 40]).unwrap();
    match read_dump(&path) {
        Err(CoreError::Corruption { section, .. }) => assert_eq!(section, "enc_attn"),
        other => panic!("expected corruption, got {other:?}"),
    }
    // cut inside cross_attn: 2*2*6*6 enc floats, then part of cross
    fs::write(&path, &bytes[..16 + 4 * 144 + 8]).unwrap();
    match read_dump(&path) {
        Err(CoreError::Corruption { section, .. }) => assert_eq!(section, "cross_attn"),
        other => panic!("expected corruption, got {other:?}"),
    }
}

#[test]
fn trailing_bytes_are_corruption() {
    let mut bytes = golden_bytes();
    bytes.push(0);
    let err = ModelDump::from_bytes(&bytes, Path::new("x")).unwrap_err();
    assert!(matches!(err, CoreError::Corruption { ref section, .. } if section == "trailer"));
}

#[test]
fn magic_and_version_mismatch_are_format_errors() {
    let mut bytes = golden_bytes();
    bytes[0] = b'X';
    assert!(matches!(ModelDump::from_bytes(&bytes, Path::new("x")), Err(CoreError::Format { .. })));
    let mut bytes = golden_bytes();
    bytes[4] = 9;
    assert!(matches!(ModelDump::from_bytes(&bytes, Path::new("x")), Err(CoreError::Format { .. })));
}

#[test]
fn shape_mismatch_is_corruption() {
    // claim one more source position than the token table provides
    let mut bytes = golden_bytes();
    bytes[10] += 1;
    assert!(matches!(ModelDump::from_bytes(&bytes, Path::new("x")), Err(CoreError::Corruption { .. })));
}

#[test]
fn row_sum_off_by_two_percent_warns() {
    let mut dump = read_dump(&golden_dir().join("T1_P1_1.tdwb")).unwrap();
    let (l, h, s) = (dump.layers, dump.heads, dump.nmt_source.len());
    let mut raw = dump.enc_attn.raw().to_vec();
    // scale row 2 of layer 1, head 0 to sum 0.98
    let off = (h * s + 2) * s;
    for v in &mut raw[off..off + s] {
        *v *= 0.98;
    }
    dump.enc_attn = tdiff_core::model_io::AttentionTensor::from_raw(l, h, s, s, raw);
    let warnings = dump.validate();
    assert_eq!(warnings.len(), 1, "{warnings:?}");
    match &warnings[0] {
        DumpWarning::RowSum { tensor, layer, head, row, sum } => {
            assert_eq!((tensor.as_str(), *layer, *head, *row), ("enc_attn", 1, 0, 2));
            assert!((sum - 0.98).abs() < 1e-5);
        }
        w => panic!("unexpected {w:?}"),
    }
}

#[test]
fn eos_is_flagged_in_source() {
    let dump = read_dump(&golden_dir().join("T1_P1_2.tdwb")).unwrap();
    assert_eq!(dump.nmt_source.positions_of(TokenKind::Eos), vec![5]);
    assert_eq!(dump.nmt_source.content_positions().as_slice(), &[1, 2, 3, 4]);
}
