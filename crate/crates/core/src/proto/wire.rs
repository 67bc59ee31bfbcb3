//! Byte formats of protocol messages. Every size in the ledger is the
//! length of one of these buffers.

use crate::error::{Error, Result};
use crate::lhe::{Ciphertext, LheContext};
use crate::stream::{SymCiphertext, LANES, SYM_HEADER_BYTES};
use crate::transcipher::{EncSymKey, LaneSet};

pub const PLAIN_MAGIC: [u8; 4] = *b"FLPM";
pub const PLAIN_HEADER_BYTES: usize = 16;
const PLAIN_VERSION: u16 = 1;

pub fn plain_model_len(count: usize) -> usize {
    PLAIN_HEADER_BYTES + 4 * count
}

/// Flat weights as f32: header (magic, version u16, reserved u16, count u32,
/// reserved u32) then LE floats. Values must already be f32-representable.
pub fn plain_model_to_bytes(w: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(plain_model_len(w.len()));
    out.extend_from_slice(&PLAIN_MAGIC);
    out.extend_from_slice(&PLAIN_VERSION.to_le_bytes());
    out.extend_from_slice(&[0; 2]);
    out.extend_from_slice(&(w.len() as u32).to_le_bytes());
    out.extend_from_slice(&[0; 4]);
    for &x in w {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn plain_model_from_bytes(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() < PLAIN_HEADER_BYTES || bytes[..4] != PLAIN_MAGIC {
        return Err(Error::Format("not a plain model".into()));
    }
    if u16::from_le_bytes([bytes[4], bytes[5]]) != PLAIN_VERSION {
        return Err(Error::Format("unsupported plain model version".into()));
    }
    let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() != plain_model_len(count) {
        return Err(Error::Length { expected: plain_model_len(count), actual: bytes.len() });
    }
    let w: Vec<f64> = bytes[PLAIN_HEADER_BYTES..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if w.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("non-finite weight".into()));
    }
    Ok(w)
}

/// Concatenated ciphertext objects.
pub fn ciphertexts_to_bytes(ctx: &LheContext, cts: &[Ciphertext]) -> Vec<u8> {
    let mut out = Vec::with_capacity(cts.len() * ctx.ciphertext_len());
    for ct in cts {
        out.extend_from_slice(&ctx.ciphertext_to_bytes(ct));
    }
    out
}

pub fn ciphertexts_from_bytes(ctx: &LheContext, bytes: &[u8], expected: usize) -> Result<Vec<Ciphertext>> {
    let len = ctx.ciphertext_len();
    if bytes.len() != expected * len {
        return Err(Error::Length { expected: expected * len, actual: bytes.len() });
    }
    bytes.chunks_exact(len).map(|c| ctx.ciphertext_from_bytes(c)).collect()
}

/// Batches of a message of `count` elements, each at most `capacity` long.
pub fn batch_ranges(count: usize, capacity: usize) -> Vec<std::ops::Range<usize>> {
    (0..count.div_ceil(capacity)).map(|b| b * capacity..((b + 1) * capacity).min(count)).collect()
}

pub fn lane_sets_to_bytes(ctx: &LheContext, sets: &[LaneSet]) -> Vec<u8> {
    let cts: Vec<Ciphertext> = sets.iter().flat_map(|s| s.lanes().iter().cloned()).collect();
    ciphertexts_to_bytes(ctx, &cts)
}

/// Inverse of [`lane_sets_to_bytes`] for a message of `count` elements.
pub fn lane_sets_from_bytes(ctx: &LheContext, bytes: &[u8], count: usize) -> Result<Vec<LaneSet>> {
    let ranges = batch_ranges(count, ctx.params().batch_capacity(LANES));
    let mut cts = ciphertexts_from_bytes(ctx, bytes, ranges.len() * LANES)?.into_iter();
    ranges.iter().map(|r| LaneSet::new(cts.by_ref().take(LANES).collect(), r.len())).collect()
}

pub fn enc_sym_key_to_bytes(ctx: &LheContext, key: &EncSymKey) -> Vec<u8> {
    ciphertexts_to_bytes(ctx, key.lanes())
}

pub fn enc_sym_key_from_bytes(ctx: &LheContext, bytes: &[u8]) -> Result<EncSymKey> {
    EncSymKey::from_lanes(ciphertexts_from_bytes(ctx, bytes, LANES)?)
}

pub fn sym_uploads_to_bytes(parts: &[SymCiphertext], t: u64) -> Vec<u8> {
    parts.iter().flat_map(|p| p.to_bytes(t)).collect()
}

/// Splits concatenated symmetric ciphertexts using each header's count.
pub fn sym_uploads_from_bytes(mut bytes: &[u8], t: u64) -> Result<Vec<SymCiphertext>> {
    let mut out = Vec::new();
    while !bytes.is_empty() {
        if bytes.len() < SYM_HEADER_BYTES {
            return Err(Error::Format("truncated symmetric upload".into()));
        }
        let count = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let len = SymCiphertext::serialized_len(count);
        if bytes.len() < len {
            return Err(Error::Format("truncated symmetric upload".into()));
        }
        out.push(SymCiphertext::from_bytes(&bytes[..len], t)?);
        bytes = &bytes[len..];
    }
    Ok(out)
}
