//! Synthetic mini-corpus: study tables, model dumps, a frequency list and a
//! run configuration, all generated from one seed.
//!
//! Two language pairs (en-da, en-de) are each read by three participants;
//! sixteen source texts are shared between the pairs, for 48 sentence
//! pairs in total. Production duration depends on the translation
//! surprisal of the target words and source reading time on the
//! monolingual surprisal of the source words, so those two features carry
//! real signal and every other feature is noise.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use tdiff_core::model_io::format::FORMAT_VERSION;
use tdiff_core::model_io::{
    write_dump, AttentionTensor, CharSpan, DumpManifest, LogProbStream, ModelDump, PairEntry, TokenKind, TokenLogProbs,
    TokenRecord, TokenSeq,
};

use crate::error::{CliError, Result};

pub const DEFAULT_SEED: u64 = 20_241_018;
const LAYERS: usize = 2;
const HEADS: usize = 2;
const TEXTS: usize = 16;
const PARTICIPANTS: usize = 3;
/// Effect of one standard deviation of the planted surprisal on log duration.
pub const PLANTED_EFFECT: f64 = 0.6;

const STUDIES: [(&str, &str, &str); 2] = [("DA", "en", "da"), ("DE", "en", "de")];
const TAGS: [&str; 5] = ["NOUN", "VERB", "ADJ", "DET", "ADP"];

struct Vocab {
    words: Vec<String>,
    tags: Vec<&'static str>,
    freqs: Vec<f64>,
}

fn make_vocab(rng: &mut ChaCha8Rng, onsets: &[&str], n: usize) -> Vocab {
    const NUCLEI: [&str; 5] = ["a", "e", "i", "o", "u"];
    let mut words: Vec<String> = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.random_range(1..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(onsets[rng.random_range(0..onsets.len())]);
            w.push_str(NUCLEI[rng.random_range(0..NUCLEI.len())]);
        }
        if !words.contains(&w) {
            words.push(w);
        }
    }
    let tags = (0..n).map(|_| TAGS[rng.random_range(0..TAGS.len())]).collect();
    let freqs = (0..n).map(|_| (rng.random_range(0.0..12.0f64)).exp().round() + 1.0).collect();
    Vocab { words, tags, freqs }
}

/// One word of a sentence with its NMT pieces and per-piece log-probs.
struct Word {
    text: String,
    pieces: Vec<String>,
    lm_logprob: f32,
    mt_logprobs: Vec<f32>,
}

impl Word {
    fn mt_surprisal(&self) -> f64 {
        -self.mt_logprobs.iter().map(|&v| f64::from(v)).sum::<f64>()
    }
}

fn make_word(rng: &mut ChaCha8Rng, text: &str) -> Word {
    let pieces = if text.len() >= 6 {
        let cut = text.len() / 2;
        vec![text[..cut].to_string(), text[cut..].to_string()]
    } else {
        vec![text.to_string()]
    };
    let mt_logprobs = pieces.iter().map(|_| -(rng.random_range(0.1..3.0f64)) as f32).collect();
    Word {
        text: text.to_string(),
        pieces,
        lm_logprob: -(rng.random_range(0.3..6.0f64)) as f32,
        mt_logprobs,
    }
}

fn random_attention(rng: &mut ChaCha8Rng, rows: usize, cols: usize, causal: bool) -> AttentionTensor {
    let mut data = Vec::with_capacity(LAYERS * HEADS * rows * cols);
    for _ in 0..LAYERS * HEADS {
        for r in 0..rows {
            let limit = if causal { (r + 1).min(cols) } else { cols };
            let logits: Vec<f64> = (0..limit).map(|_| rng.random_range(-2.0..2.0)).collect();
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exp: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
            let total: f64 = exp.iter().sum();
            data.extend(exp.iter().map(|e| (e / total) as f32));
            data.extend(std::iter::repeat_n(0.0f32, cols - limit));
        }
    }
    AttentionTensor::from_raw(LAYERS, HEADS, rows, cols, data)
}

fn record(text: &str, start: usize, end: usize, kind: TokenKind) -> TokenRecord {
    TokenRecord {
        text: text.to_string(),
        span: CharSpan::new(start as u32, end as u32),
        kind,
    }
}

/// Word spans of space-joined words.
fn spans(words: &[Word]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(words.len());
    let mut at = 0;
    for w in words {
        let len = w.text.chars().count();
        out.push((at, at + len));
        at += len + 1;
    }
    out
}

fn nmt_tokens(words: &[Word]) -> Vec<TokenRecord> {
    let mut out = Vec::new();
    for (w, (start, _)) in words.iter().zip(spans(words)) {
        let mut at = start;
        for (k, p) in w.pieces.iter().enumerate() {
            let len = p.chars().count();
            let text = if k == 0 { format!("\u{2581}{p}") } else { p.clone() };
            out.push(record(&text, at, at + len, TokenKind::Content));
            at += len;
        }
    }
    out
}

fn lm_tokens(words: &[Word]) -> Vec<TokenRecord> {
    let mut out = vec![record("<s>", 0, 0, TokenKind::Bos)];
    for (n, (w, (start, end))) in words.iter().zip(spans(words)).enumerate() {
        let text = if n == 0 { w.text.clone() } else { format!(" {}", w.text) };
        out.push(record(&text, start, end, TokenKind::Content));
    }
    out
}

fn sentence_text(words: &[Word]) -> String {
    words.iter().map(|w| w.text.as_str()).collect::<Vec<_>>().join(" ")
}

fn build_dump(rng: &mut ChaCha8Rng, pair_id: &str, tl: &str, src: &[Word], tgt: &[Word]) -> ModelDump {
    let source_text = sentence_text(src);
    let target_text = sentence_text(tgt);
    let src_len = source_text.chars().count();

    let mut nmt_source = vec![record("eng_Latn", 0, 0, TokenKind::LangTag)];
    nmt_source.extend(nmt_tokens(src));
    nmt_source.push(record("</s>", src_len, src_len, TokenKind::Eos));
    let lang_tag = match tl {
        "da" => "dan_Latn",
        _ => "deu_Latn",
    };
    let mut nmt_target = vec![record("</s>", 0, 0, TokenKind::Bos), record(lang_tag, 0, 0, TokenKind::LangTag)];
    nmt_target.extend(nmt_tokens(tgt));

    // the language tag is forced, so it is nearly certain
    let mut mt = vec![-0.001f32];
    mt.extend(tgt.iter().flat_map(|w| w.mt_logprobs.iter().copied()));

    let (s, t) = (nmt_source.len(), nmt_target.len());
    ModelDump {
        pair_id: pair_id.to_string(),
        layers: LAYERS,
        heads: HEADS,
        source_text,
        target_text,
        enc_attn: random_attention(rng, s, s, false),
        cross_attn: random_attention(rng, t, s, false),
        dec_attn: random_attention(rng, t, t, true),
        nmt_source: TokenSeq(nmt_source),
        nmt_target: TokenSeq(nmt_target),
        lm_source_tokens: TokenSeq(lm_tokens(src)),
        lm_target_tokens: TokenSeq(lm_tokens(tgt)),
        lm_source: TokenLogProbs {
            stream: LogProbStream::LmSource,
            values: src.iter().map(|w| w.lm_logprob).collect(),
        },
        lm_target: TokenLogProbs {
            stream: LogProbStream::LmTarget,
            values: tgt.iter().map(|w| w.lm_logprob).collect(),
        },
        mt_target: TokenLogProbs {
            stream: LogProbStream::MtTarget,
            values: mt,
        },
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn join_positions(range: std::ops::RangeInclusive<usize>) -> String {
    range.map(|i| i.to_string()).collect::<Vec<_>>().join("+")
}

fn fmt_ms(x: f64) -> String {
    format!("{}", x.round())
}

pub const CONFIG: &str = r#"# Run configuration for the synthetic mini-corpus.
seed = 20241018

[paths]
tables = "tables"
dumps = "dumps"
frequency = "frequency.tsv"
output = "run"

[folds]
k = 4

[scopes]
pooled = true
language_pairs = ["en-da", "en-de"]

[test]
n_perm = 1000
"#;

/// Writes the corpus under `dir`.
pub fn generate(dir: &Path, seed: u64) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.35).expect("valid normal");
    let source_vocab = make_vocab(&mut rng, &["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t"], 60);
    let target_vocab = [
        make_vocab(&mut rng, &["b", "d", "f", "g", "h", "k", "l", "m", "n", "sk", "st", "v"], 60),
        make_vocab(&mut rng, &["b", "d", "f", "g", "h", "k", "l", "m", "n", "sch", "st", "w", "z"], 60),
    ];
    let texts: Vec<Vec<usize>> = (0..TEXTS)
        .map(|_| {
            let n = rng.random_range(6..=9);
            (0..n).map(|_| rng.random_range(0..source_vocab.words.len())).collect()
        })
        .collect();
    let participant_effect: Vec<Vec<f64>> = (0..STUDIES.len())
        .map(|_| (0..PARTICIPANTS).map(|_| rng.random_range(-0.25..0.25)).collect())
        .collect();
    let language_effect = [0.15, -0.15];

    let mut sentences = String::from("Study\tPart\tSId\tSL\tTL\tSource\tTarget\tTextId\n");
    let mut words_t = String::from("Study\tPart\tSSent\tSIdx\tTSent\tTIdx\tSide\tTrtS\tTrtT\tDur\tPoS\n");
    let mut segments_t = String::from("Study\tPart\tSSent\tSIdx\tTSent\tTIdx\tSide\tTrtS\tTrtT\tDur\n");
    let mut pairs = Vec::new();
    let dumps = dir.join("dumps");
    fs::create_dir_all(&dumps).map_err(|e| CliError::io(&dumps, e))?;

    // surprisal moments of the generator, used to standardize the planted effect
    let lm_z = |s: f64| (s - 3.15) / 1.65;
    let mt_z = |s: f64, pieces: usize| (s - 1.55 * pieces as f64) / (0.84 * (pieces as f64).sqrt());

    for (si, &(study, sl, tl)) in STUDIES.iter().enumerate() {
        let tv = &target_vocab[si];
        for p in 0..PARTICIPANTS {
            let part = format!("P{}", p + 1);
            let mine: Vec<usize> = (0..TEXTS).filter(|t| (t + p + si) % 2 == 0).collect();
            for (k, &t) in mine.iter().enumerate() {
                let sid = (k + 1).to_string();
                let pair_id = format!("{study}/{part}/{sid}");
                let src: Vec<Word> = texts[t].iter().map(|&w| make_word(&mut rng, &source_vocab.words[w])).collect();
                let tgt_ids: Vec<usize> = (0..src.len()).map(|_| rng.random_range(0..tv.words.len())).collect();
                let tgt: Vec<Word> = tgt_ids.iter().map(|&w| make_word(&mut rng, &tv.words[w])).collect();
                let _ = writeln!(
                    sentences,
                    "{study}\t{part}\t{sid}\t{sl}\t{tl}\t{}\t{}\tT{}",
                    sentence_text(&src),
                    sentence_text(&tgt),
                    t + 1
                );
                let shift = participant_effect[si][p] + language_effect[si];

                for (i, w) in src.iter().enumerate() {
                    let z_src = lm_z(-f64::from(w.lm_logprob));
                    let z_tgt = mt_z(tgt[i].mt_surprisal(), tgt[i].pieces.len());
                    let trt_s = (5.6 + PLANTED_EFFECT * z_src + shift + noise.sample(&mut rng)).exp();
                    let trt_t = (5.4 + shift + noise.sample(&mut rng)).exp();
                    let dur = (6.2 + PLANTED_EFFECT * z_tgt + shift + noise.sample(&mut rng)).exp();
                    let tag = source_vocab.tags[texts[t][i]];
                    let _ = writeln!(
                        words_t,
                        "{study}\t{part}\t{sid}\t{n}\t{sid}\t{n}\tsource\t{}\t{}\t{}\t{tag}",
                        fmt_ms(trt_s),
                        fmt_ms(trt_t),
                        fmt_ms(dur),
                        n = i + 1
                    );
                }

                let mut start = 0;
                while start < src.len() {
                    let len = (2 + (start + t) % 2).min(src.len() - start);
                    let span = start..start + len;
                    let z_src: f64 = span.clone().map(|i| lm_z(-f64::from(src[i].lm_logprob))).sum::<f64>() / (len as f64).sqrt();
                    let z_tgt: f64 = span
                        .clone()
                        .map(|i| mt_z(tgt[i].mt_surprisal(), tgt[i].pieces.len()))
                        .sum::<f64>()
                        / (len as f64).sqrt();
                    let base = (len as f64).ln();
                    let trt_s = (5.6 + base + PLANTED_EFFECT * z_src + shift + noise.sample(&mut rng)).exp();
                    let trt_t = (5.4 + base + shift + noise.sample(&mut rng)).exp();
                    let dur = (6.2 + base + PLANTED_EFFECT * z_tgt + shift + noise.sample(&mut rng)).exp();
                    let idx = join_positions(start + 1..=start + len);
                    let _ = writeln!(
                        segments_t,
                        "{study}\t{part}\t{sid}\t{idx}\t{sid}\t{idx}\tsource\t{}\t{}\t{}",
                        fmt_ms(trt_s),
                        fmt_ms(trt_t),
                        fmt_ms(dur)
                    );
                    start += len;
                }

                let dump = build_dump(&mut rng, &pair_id, tl, &src, &tgt);
                let file = DumpManifest::file_name_for(&pair_id);
                write_dump(&dumps.join(&file), &dump)?;
                pairs.push(PairEntry { pair_id, file });
            }
        }
    }
    // rows the ingest stage has to handle: a sub-threshold duration and a
    // reference to a sentence that does not exist
    words_t.push_str("DA\tP1\t1\t1\t1\t1\tsource\t250\t240\t12\tNOUN\n");
    words_t.push_str("DA\tP1\t99\t1\t99\t1\tsource\t250\t240\t800\tNOUN\n");

    let tables = dir.join("tables");
    write(&tables.join("sentences.tsv"), &sentences)?;
    write(&tables.join("words.tsv"), &words_t)?;
    write(&tables.join("segments.tsv"), &segments_t)?;

    DumpManifest {
        format_version: FORMAT_VERSION,
        lm_model: "synthetic-lm".into(),
        mt_model: "synthetic-nmt".into(),
        lm_tokenizer: "synthetic-words".into(),
        mt_tokenizer: "synthetic-pieces".into(),
        layers: LAYERS,
        heads: HEADS,
        pairs,
        failures: Vec::new(),
    }
    .save(&dumps)?;

    let mut freq = String::from("# word\tfrequency per billion\n");
    for v in std::iter::once(&source_vocab).chain(&target_vocab) {
        for (i, (w, f)) in v.words.iter().zip(&v.freqs).enumerate() {
            // every seventh word is left out and falls back to the floor
            if i % 7 != 3 {
                let _ = writeln!(freq, "{w}\t{f}");
            }
        }
    }
    write(&dir.join("frequency.tsv"), &freq)?;
    write(&dir.join("config.toml"), CONFIG)?;
    Ok(())
}
