//! Binary weight file.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! offset  size  field
//! 0       4     magic "ARTW"
//! 4       2     format version (u16) = 1
//! 6       28    n_layers, n_heads, d_model, d_head, d_ff, vocab_size,
//!               max_seq_len (7 × u32)
//! 34      ...   tensor blob, f64 row-major, in this order:
//!                 token_embedding      vocab × d
//!                 position_embedding   max_seq_len × d
//!                 for each layer:
//!                   attn_norm gain, attn_norm bias    d, d
//!                   for each head: w_q, w_k, w_v (d × d_h), w_o (d_h × d)
//!                   ffn_norm gain, ffn_norm bias      d, d
//!                   ffn_up (d × d_ff), ffn_down (d_ff × d)
//!                 final_norm gain, final_norm bias    d, d
//!                 unembedding          d × vocab
//! ```
//!
//! The file ends exactly where the blob ends; trailing bytes are rejected.

use std::path::Path;

use crate::error::{Error, Result, WeightFileError};
use crate::model::{HeadWeights, LayerWeights, ModelSpec, NormWeights, WeightStore};
use crate::numerics::Matrix;

pub const MAGIC: &[u8; 4] = b"ARTW";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 7 * 4;

/// Number of `f64` values in the tensor blob for `spec`.
pub fn blob_len(spec: &ModelSpec) -> usize {
    checked_blob_len(spec).expect("blob size overflows usize")
}

fn checked_blob_len(spec: &ModelSpec) -> Option<usize> {
    let d = spec.d_model;
    let per_head = d.checked_mul(spec.d_head)?.checked_mul(4)?;
    let per_layer = spec
        .n_heads
        .checked_mul(per_head)?
        .checked_add(d.checked_mul(spec.d_ff)?.checked_mul(2)?)?
        .checked_add(4 * d)?;
    spec.vocab_size
        .checked_mul(d)?
        .checked_mul(2)?
        .checked_add(spec.max_seq_len.checked_mul(d)?)?
        .checked_add(spec.n_layers.checked_mul(per_layer)?)?
        .checked_add(2 * d)
}

pub fn encode(store: &WeightStore) -> Result<Vec<u8>> {
    store.validate()?;
    let s = &store.spec;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * blob_len(s));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    for v in [
        s.n_layers,
        s.n_heads,
        s.d_model,
        s.d_head,
        s.d_ff,
        s.vocab_size,
        s.max_seq_len,
    ] {
        let v = u32::try_from(v)
            .map_err(|_| Error::InvalidSpec(format!("dimension {v} does not fit in u32")))?;
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |xs: &[f64]| {
        for x in xs {
            out.extend_from_slice(&x.to_le_bytes());
        }
    };
    put(store.token_embedding.data());
    put(store.position_embedding.data());
    for layer in &store.layers {
        put(&layer.attn_norm.gain);
        put(&layer.attn_norm.bias);
        for h in &layer.heads {
            put(h.w_q.data());
            put(h.w_k.data());
            put(h.w_v.data());
            put(h.w_o.data());
        }
        put(&layer.ffn_norm.gain);
        put(&layer.ffn_norm.bias);
        put(layer.ffn_up.data());
        put(layer.ffn_down.data());
    }
    put(&store.final_norm.gain);
    put(&store.final_norm.bias);
    put(store.unembedding.data());
    Ok(out)
}

struct BlobReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl BlobReader<'_> {
    fn take(&mut self, n: usize) -> std::result::Result<Vec<f64>, WeightFileError> {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let offset = self.pos;
            let raw: [u8; 8] = self.bytes[offset..offset + 8].try_into().expect("8 bytes");
            let v = f64::from_le_bytes(raw);
            if !v.is_finite() {
                return Err(WeightFileError::NonFinite { offset });
            }
            out.push(v);
            self.pos += 8;
        }
        Ok(out)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> std::result::Result<Matrix, WeightFileError> {
        let data = self.take(rows * cols)?;
        Ok(Matrix::from_vec(rows, cols, data).expect("length and finiteness checked"))
    }

    fn norm(&mut self, d: usize) -> std::result::Result<NormWeights, WeightFileError> {
        Ok(NormWeights {
            gain: self.take(d)?,
            bias: self.take(d)?,
        })
    }
}

pub fn decode(bytes: &[u8]) -> std::result::Result<WeightStore, WeightFileError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(WeightFileError::BadMagic {
            found: bytes[..bytes.len().min(4)].to_vec(),
        });
    }
    if bytes.len() < HEADER_LEN {
        return Err(WeightFileError::TruncatedHeader {
            expected: HEADER_LEN,
            actual: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FORMAT_VERSION {
        return Err(WeightFileError::UnsupportedVersion {
            found: version,
            expected: FORMAT_VERSION,
        });
    }
    let field = |i: usize| {
        let o = 6 + 4 * i;
        u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize
    };
    let spec = ModelSpec {
        n_layers: field(0),
        n_heads: field(1),
        d_model: field(2),
        d_head: field(3),
        d_ff: field(4),
        vocab_size: field(5),
        max_seq_len: field(6),
    };
    spec.validate()
        .map_err(|e| WeightFileError::InvalidHeaderSpec(e.to_string()))?;

    let expected = checked_blob_len(&spec)
        .and_then(|n| n.checked_mul(8))
        .ok_or_else(|| WeightFileError::InvalidHeaderSpec("tensor blob size overflows".into()))?;
    let actual = bytes.len() - HEADER_LEN;
    if actual < expected {
        return Err(WeightFileError::TruncatedBlob {
            offset: HEADER_LEN,
            expected,
            actual,
        });
    }
    if actual > expected {
        return Err(WeightFileError::TrailingBytes {
            offset: HEADER_LEN + expected,
            extra: actual - expected,
        });
    }

    let d = spec.d_model;
    let mut r = BlobReader {
        bytes,
        pos: HEADER_LEN,
    };
    let token_embedding = r.matrix(spec.vocab_size, d)?;
    let position_embedding = r.matrix(spec.max_seq_len, d)?;
    let mut layers = Vec::with_capacity(spec.n_layers);
    for _ in 0..spec.n_layers {
        let attn_norm = r.norm(d)?;
        let mut heads = Vec::with_capacity(spec.n_heads);
        for _ in 0..spec.n_heads {
            heads.push(HeadWeights {
                w_q: r.matrix(d, spec.d_head)?,
                w_k: r.matrix(d, spec.d_head)?,
                w_v: r.matrix(d, spec.d_head)?,
                w_o: r.matrix(spec.d_head, d)?,
            });
        }
        let ffn_norm = r.norm(d)?;
        let ffn_up = r.matrix(d, spec.d_ff)?;
        let ffn_down = r.matrix(spec.d_ff, d)?;
        layers.push(LayerWeights {
            attn_norm,
            heads,
            ffn_norm,
            ffn_up,
            ffn_down,
        });
    }
    let final_norm = r.norm(d)?;
    let unembedding = r.matrix(d, spec.vocab_size)?;
    Ok(WeightStore {
        spec,
        token_embedding,
        position_embedding,
        layers,
        final_norm,
        unembedding,
    })
}

pub fn save_weights(store: &WeightStore, path: &Path) -> Result<()> {
    super::write_atomic(path, &encode(store)?)
}

pub fn load_weights(path: &Path) -> Result<(ModelSpec, WeightStore)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let store = decode(&bytes)?;
    Ok((store.spec, store))
}
