//! Byte-level tokenizer: ids 0..=255 are raw bytes, 256 is BOS, 257 is EOS.

use crate::error::{Error, Result};
use crate::model::TokenId;

pub const BOS: TokenId = 256;
pub const EOS: TokenId = 257;
pub const VOCAB_SIZE: usize = 258;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ByteTokenizer;

impl ByteTokenizer {
    pub fn encode(&self, bytes: &[u8]) -> Vec<TokenId> {
        bytes.iter().map(|&b| TokenId::from(b)).collect()
    }

    /// `BOS` followed by the bytes of `text`.
    pub fn encode_prompt(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::with_capacity(text.len() + 1);
        out.push(BOS);
        out.extend(self.encode(text.as_bytes()));
        out
    }

    /// Inverse of [`encode`](Self::encode). Special or out-of-range ids are errors.
    pub fn decode(&self, tokens: &[TokenId]) -> Result<Vec<u8>> {
        tokens
            .iter()
            .map(|&t| {
                u8::try_from(t)
                    .map_err(|_| Error::Tokenizer(format!("token {t} is not a byte token")))
            })
            .collect()
    }

    /// Decodes byte tokens, drops specials, and replaces invalid UTF-8.
    pub fn decode_lossy(&self, tokens: &[TokenId]) -> String {
        let bytes: Vec<u8> = tokens
            .iter()
            .filter_map(|&t| u8::try_from(t).ok())
            .collect();
        String::from_utf8_lossy(&bytes).into_owned()
    }
}
