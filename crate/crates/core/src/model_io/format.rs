//! Binary layout of one `.tdwb` dump file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TDWB"
//! 4       2     format version (u16 LE, currently 1)
//! 6       2     layers L
//! 8       2     heads H
//! 10      2     S_full  (NMT source positions, specials included)
//! 12      2     T_full  (NMT target positions, specials included)
//! 14      2     reserved, must be 0
//! 16      ...   enc_attn    L*H*S*S f32
//!               cross_attn  L*H*T*S f32
//!               dec_attn    L*H*T*T f32
//!               lm_source   u32 count, count f32
//!               lm_target   u32 count, count f32
//!               mt_target   u32 count (= T_full - 1), count f32
//!               pair_id, source_text, target_text   (u32 byte length + UTF-8)
//!               token tables: nmt_source (S_full rows), nmt_target (T_full rows),
//!                             lm_source (u32 count + rows), lm_target (u32 count + rows)
//!               token row: u32 char_start, u32 char_end, u8 kind, u32 byte length + UTF-8
//! ```
//!
//! All integers and floats are little-endian; tensors are row-major with the
//! layer index outermost. Nothing may follow the last token table.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{CoreError, Result};

use super::{AttentionTensor, CharSpan, LogProbStream, ModelDump, TokenKind, TokenLogProbs, TokenRecord, TokenSeq};

pub const MAGIC: [u8; 4] = *b"TDWB";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, section: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let out = &self.buf[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(CoreError::Corruption {
                path: self.path.to_path_buf(),
                section: section.to_string(),
                detail: format!(
                    "truncated: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.buf.len()
                ),
            }),
        }
    }

    fn u8(&mut self, section: &str) -> Result<u8> {
        Ok(self.take(1, section)?[0])
    }

    fn u16(&mut self, section: &str) -> Result<u16> {
        let b = self.take(2, section)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, section: &str) -> Result<u32> {
        let b = self.take(4, section)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32s(&mut self, n: usize, section: &str) -> Result<Vec<f32>> {
        let bytes = n
            .checked_mul(4)
            .ok_or_else(|| self.corrupt(section, "length overflow"))?;
        let b = self.take(bytes, section)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn string(&mut self, section: &str) -> Result<String> {
        let n = self.u32(section)? as usize;
        let b = self.take(n, section)?;
        String::from_utf8(b.to_vec()).map_err(|e| self.corrupt(section, &format!("invalid UTF-8: {e}")))
    }

    fn corrupt(&self, section: &str, detail: &str) -> CoreError {
        CoreError::Corruption {
            path: self.path.to_path_buf(),
            section: section.to_string(),
            detail: detail.to_string(),
        }
    }
}

pub(super) fn decode(buf: &[u8], path: &Path) -> Result<ModelDump> {
    if buf.len() < HEADER_LEN {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            detail: format!("file is {} bytes, shorter than the header", buf.len()),
        });
    }
    if buf[..4] != MAGIC {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            detail: format!("bad magic {:?}", &buf[..4]),
        });
    }
    let mut r = Reader { buf, pos: 4, path };
    let version = r.u16("header")?;
    if version != FORMAT_VERSION {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            detail: format!("unsupported format version {version}, expected {FORMAT_VERSION}"),
        });
    }
    let layers = r.u16("header")? as usize;
    let heads = r.u16("header")? as usize;
    let s_full = r.u16("header")? as usize;
    let t_full = r.u16("header")? as usize;
    let reserved = r.u16("header")?;
    if reserved != 0 {
        return Err(CoreError::Format {
            path: path.to_path_buf(),
            detail: format!("reserved header field is {reserved}"),
        });
    }
    if layers == 0 || heads == 0 || s_full == 0 || t_full == 0 {
        return Err(r.corrupt("header", "zero dimension"));
    }

    let mut tensor = |name: &str, rows: usize, cols: usize| -> Result<AttentionTensor> {
        let data = r.f32s(layers * heads * rows * cols, name)?;
        Ok(AttentionTensor::from_raw(layers, heads, rows, cols, data))
    };
    let enc_attn = tensor("enc_attn", s_full, s_full)?;
    let cross_attn = tensor("cross_attn", t_full, s_full)?;
    let dec_attn = tensor("dec_attn", t_full, t_full)?;

    let mut logprobs = |stream: LogProbStream| -> Result<TokenLogProbs> {
        let name = stream.name();
        let n = r.u32(name)? as usize;
        let values = r.f32s(n, name)?;
        Ok(TokenLogProbs { stream, values })
    };
    let lm_source = logprobs(LogProbStream::LmSource)?;
    let lm_target = logprobs(LogProbStream::LmTarget)?;
    let mt_target = logprobs(LogProbStream::MtTarget)?;

    let pair_id = r.string("pair_id")?;
    let source_text = r.string("source_text")?;
    let target_text = r.string("target_text")?;

    let mut tokens = |name: &str, count: Option<usize>| -> Result<TokenSeq> {
        let n = match count {
            Some(n) => n,
            None => r.u32(name)? as usize,
        };
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let start = r.u32(name)?;
            let end = r.u32(name)?;
            let kind_code = r.u8(name)?;
            let kind = TokenKind::from_code(kind_code)
                .ok_or_else(|| r.corrupt(name, &format!("unknown token kind {kind_code}")))?;
            let text = r.string(name)?;
            out.push(TokenRecord {
                text,
                span: CharSpan { start, end },
                kind,
            });
        }
        Ok(TokenSeq(out))
    };
    let nmt_source = tokens("nmt_source_tokens", Some(s_full))?;
    let nmt_target = tokens("nmt_target_tokens", Some(t_full))?;
    let lm_source_tokens = tokens("lm_source_tokens", None)?;
    let lm_target_tokens = tokens("lm_target_tokens", None)?;

    if r.pos != buf.len() {
        return Err(r.corrupt(
            "trailer",
            &format!("{} unexpected trailing bytes", buf.len() - r.pos),
        ));
    }

    let dump = ModelDump {
        pair_id,
        layers,
        heads,
        source_text,
        target_text,
        nmt_source,
        nmt_target,
        lm_source_tokens,
        lm_target_tokens,
        enc_attn,
        cross_attn,
        dec_attn,
        lm_source,
        lm_target,
        mt_target,
    };
    dump.check_structure().map_err(|(section, detail)| CoreError::Corruption {
        path: path.to_path_buf(),
        section,
        detail,
    })?;
    Ok(dump)
}

pub(super) fn encode(dump: &ModelDump) -> Result<Vec<u8>> {
    dump.check_structure()
        .map_err(|(section, detail)| CoreError::Domain(format!("cannot encode dump: {section}: {detail}")))?;
    let dim = |n: usize, what: &str| -> Result<u16> {
        u16::try_from(n).map_err(|_| CoreError::Domain(format!("{what} = {n} exceeds u16")))
    };
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim(dump.layers, "layers")?.to_le_bytes());
    out.extend_from_slice(&dim(dump.heads, "heads")?.to_le_bytes());
    out.extend_from_slice(&dim(dump.nmt_source.len(), "S_full")?.to_le_bytes());
    out.extend_from_slice(&dim(dump.nmt_target.len(), "T_full")?.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());

    for t in [&dump.enc_attn, &dump.cross_attn, &dump.dec_attn] {
        put_f32s(&mut out, t.raw());
    }
    for lp in [&dump.lm_source, &dump.lm_target, &dump.mt_target] {
        put_u32(&mut out, lp.values.len())?;
        put_f32s(&mut out, &lp.values);
    }
    for s in [&dump.pair_id, &dump.source_text, &dump.target_text] {
        put_str(&mut out, s)?;
    }
    put_tokens(&mut out, &dump.nmt_source)?;
    put_tokens(&mut out, &dump.nmt_target)?;
    put_u32(&mut out, dump.lm_source_tokens.len())?;
    put_tokens(&mut out, &dump.lm_source_tokens)?;
    put_u32(&mut out, dump.lm_target_tokens.len())?;
    put_tokens(&mut out, &dump.lm_target_tokens)?;
    Ok(out)
}

fn put_u32(out: &mut Vec<u8>, n: usize) -> Result<()> {
    let n = u32::try_from(n).map_err(|_| CoreError::Domain(format!("{n} exceeds u32")))?;
    out.extend_from_slice(&n.to_le_bytes());
    Ok(())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    out.reserve(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) -> Result<()> {
    put_u32(out, s.len())?;
    out.extend_from_slice(s.as_bytes());
    Ok(())
}

fn put_tokens(out: &mut Vec<u8>, seq: &TokenSeq) -> Result<()> {
    for t in seq.iter() {
        out.extend_from_slice(&t.span.start.to_le_bytes());
        out.extend_from_slice(&t.span.end.to_le_bytes());
        out.push(t.kind.code());
        put_str(out, &t.text)?;
    }
    Ok(())
}

/// Writes to a sibling temp file and renames it into place.
pub(super) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tdwb.tmp");
    {
        let mut f = fs::File::create(&tmp).map_err(|e| CoreError::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| CoreError::io(&tmp, e))?;
        f.sync_all().map_err(|e| CoreError::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| CoreError::io(path, e))
}
