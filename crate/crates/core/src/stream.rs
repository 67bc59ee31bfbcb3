//! Depth-3 stream cipher over `Z_t` ("shallowstream").
//!
//! Each 16-element keystream block is
//! `A_4 ∘ (σ ∘ A_3) ∘ (σ ∘ A_2) ∘ (σ ∘ A_1) (k)` with `A_r(x) = M_{r,b} x + c_{r,b}`
//! and the elementwise map `σ(x) = x + x^2`. The affine layers are public and
//! derived from `(nonce, block, round)` by SHAKE128, so the only secret is `k`.
//!
//! No security claim is made for this construction. It exists to give the
//! transciphering pipeline a real multiplicative-depth-3 workload; anything
//! implementing [`ScheduleSource`] can replace the round constants.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use sha3::digest::{ExtendableOutput, Update, XofReader};
use sha3::Shake128;

use crate::error::{Error, Result};

/// Elements per keystream block (the state width).
pub const LANES: usize = 16;
/// Affine layers per block; squarings sit between consecutive ones.
pub const AFFINE_LAYERS: usize = 4;
/// Domain-separation prefix of the schedule XOF.
pub const SCHEDULE_DOMAIN: &[u8] = b"flhhe/schedule/v1";

/// Lane index in `[0, LANES)`. Only constructible in range.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lane(u8);

impl Lane {
    pub fn new(i: usize) -> Result<Self> {
        if i < LANES {
            Ok(Lane(i as u8))
        } else {
            Err(Error::Length { expected: LANES, actual: i })
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = Lane> {
        (0..LANES as u8).map(Lane)
    }
}

impl fmt::Display for Lane {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "lane {}", self.0)
    }
}

/// Block index of element `j` in the block-major layout.
pub fn block_of(j: usize) -> usize {
    j / LANES
}

pub fn lane_of(j: usize) -> Lane {
    Lane((j % LANES) as u8)
}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct SymKey {
    k: [u64; LANES],
}

impl SymKey {
    pub fn new(k: [u64; LANES], t: u64) -> Result<Self> {
        if let Some(x) = k.iter().find(|&&x| x >= t) {
            return Err(Error::Format(format!("key element {x} not below t = {t}")));
        }
        Ok(SymKey { k })
    }

    pub fn from_slice(k: &[u64], t: u64) -> Result<Self> {
        let arr: [u64; LANES] =
            k.try_into().map_err(|_| Error::Length { expected: LANES, actual: k.len() })?;
        SymKey::new(arr, t)
    }

    pub fn generate<R: RngCore>(t: u64, rng: &mut R) -> Self {
        let mut k = [0u64; LANES];
        for x in k.iter_mut() {
            *x = rng.gen_range(0..t);
        }
        SymKey { k }
    }

    pub fn elements(&self) -> &[u64; LANES] {
        &self.k
    }

    pub fn get(&self, lane: Lane) -> u64 {
        self.k[lane.index()]
    }

    pub const SERIALIZED_LEN: usize = SYM_HEADER_BYTES + 4 * LANES;

    /// Header (magic, version u16, lanes u8, reserved u8, t u32, reserved u32)
    /// then one LE u32 per key element.
    pub fn to_bytes(&self, t: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::SERIALIZED_LEN);
        out.extend_from_slice(&SYMKEY_MAGIC);
        out.extend_from_slice(&SYM_VERSION.to_le_bytes());
        out.push(LANES as u8);
        out.push(0);
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&[0; 4]);
        for &k in &self.k {
            out.extend_from_slice(&(k as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], t: u64) -> Result<Self> {
        if bytes.len() != Self::SERIALIZED_LEN || bytes[..4] != SYMKEY_MAGIC {
            return Err(Error::Format("not a symmetric key".into()));
        }
        if u16::from_le_bytes([bytes[4], bytes[5]]) != SYM_VERSION || bytes[6] as usize != LANES {
            return Err(Error::Format("unsupported symmetric key header".into()));
        }
        if u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as u64 != t {
            return Err(Error::ParamsMismatch);
        }
        let k: Vec<u64> = bytes[SYM_HEADER_BYTES..]
            .chunks_exact(4)
            .map(|w| u32::from_le_bytes(w.try_into().expect("4 bytes")) as u64)
            .collect();
        SymKey::from_slice(&k, t)
    }
}

impl fmt::Debug for SymKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymKey(..)")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Nonce(pub [u8; 16]);

impl Nonce {
    pub fn generate<R: RngCore>(rng: &mut R) -> Self {
        let mut b = [0u8; 16];
        rng.fill_bytes(&mut b);
        Nonce(b)
    }
}

/// Public affine layer `x -> M x + c` for one `(block, round)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineLayer {
    /// Row-major `M[i][j]`.
    pub matrix: [[u64; LANES]; LANES],
    pub constants: [u64; LANES],
}

impl AffineLayer {
    pub fn apply(&self, x: &[u64; LANES], t: u64) -> [u64; LANES] {
        let mut out = [0u64; LANES];
        for (i, o) in out.iter_mut().enumerate() {
            // 16 products below t^2 < 2^34 each fit easily in u64.
            let acc: u64 = self.matrix[i].iter().zip(x).map(|(m, v)| m * v).sum();
            *o = (acc + self.constants[i]) % t;
        }
        out
    }
}

/// Source of the public round constants. `round` runs over `1..=AFFINE_LAYERS`.
pub trait ScheduleSource: Send + Sync + fmt::Debug {
    fn layer(&self, nonce: &Nonce, block: usize, round: usize) -> AffineLayer;
}

/// SHAKE128 over `SCHEDULE_DOMAIN ‖ nonce ‖ block (u32 LE) ‖ round (u32 LE)`,
/// read as 4-byte LE words with rejection above `floor(2^32/t) t`.
#[derive(Clone, Debug)]
pub struct XofSchedule {
    t: u64,
}

impl XofSchedule {
    pub fn new(t: u64) -> Self {
        assert!(t > 1 && t < 1 << 32, "plaintext modulus must fit in 32 bits");
        XofSchedule { t }
    }

    /// The first `count` uniform elements of the stream for `(nonce, block, round)`.
    pub fn derive(&self, nonce: &Nonce, block: usize, round: usize, count: usize) -> Vec<u64> {
        let mut h = Shake128::default();
        h.update(SCHEDULE_DOMAIN);
        h.update(&nonce.0);
        h.update(&(block as u32).to_le_bytes());
        h.update(&(round as u32).to_le_bytes());
        let mut reader = h.finalize_xof();
        let bound = (1u64 << 32) / self.t * self.t;
        let mut out = Vec::with_capacity(count);
        let mut buf = [0u8; 4 * 64];
        'outer: loop {
            reader.read(&mut buf);
            for w in buf.chunks_exact(4) {
                let v = u32::from_le_bytes(w.try_into().expect("4 bytes")) as u64;
                if v < bound {
                    out.push(v % self.t);
                    if out.len() == count {
                        break 'outer;
                    }
                }
            }
        }
        out
    }
}

impl ScheduleSource for XofSchedule {
    fn layer(&self, nonce: &Nonce, block: usize, round: usize) -> AffineLayer {
        let vals = self.derive(nonce, block, round, LANES * LANES + LANES);
        let mut matrix = [[0u64; LANES]; LANES];
        for (i, row) in matrix.iter_mut().enumerate() {
            row.copy_from_slice(&vals[i * LANES..(i + 1) * LANES]);
        }
        let mut constants = [0u64; LANES];
        constants.copy_from_slice(&vals[LANES * LANES..]);
        AffineLayer { matrix, constants }
    }
}

/// Test hook: identity matrices and zero constants, reducing the cipher to
/// three rounds of `x -> x + x^2` per lane.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentitySchedule;

impl ScheduleSource for IdentitySchedule {
    fn layer(&self, _: &Nonce, _: usize, _: usize) -> AffineLayer {
        let mut matrix = [[0u64; LANES]; LANES];
        for (i, row) in matrix.iter_mut().enumerate() {
            row[i] = 1;
        }
        AffineLayer { matrix, constants: [0; LANES] }
    }
}

/// Keystream over `blocks` blocks, indexed `(block, lane)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Keystream {
    blocks: Vec<[u64; LANES]>,
}

impl Keystream {
    pub fn get(&self, block: usize, lane: Lane) -> u64 {
        self.blocks[block][lane.index()]
    }

    pub fn block(&self, block: usize) -> &[u64; LANES] {
        &self.blocks[block]
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Element `j` of the block-major flattening.
    pub fn element(&self, j: usize) -> u64 {
        self.get(block_of(j), lane_of(j))
    }
}

/// Masked message plus the nonce it was masked under.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SymCiphertext {
    pub nonce: Nonce,
    pub words: Vec<u32>,
}

pub const SYM_MAGIC: [u8; 4] = *b"FLSC";
pub const SYMKEY_MAGIC: [u8; 4] = *b"FLSK";
pub const SYM_HEADER_BYTES: usize = 16;
const SYM_VERSION: u16 = 1;

impl SymCiphertext {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn serialized_len(count: usize) -> usize {
        SYM_HEADER_BYTES + 16 + 4 * count
    }

    /// Header (magic, version u16, lanes u8, reserved u8, count u32, t u32),
    /// the nonce, then one LE u32 per element.
    pub fn to_bytes(&self, t: u64) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::serialized_len(self.words.len()));
        out.extend_from_slice(&SYM_MAGIC);
        out.extend_from_slice(&SYM_VERSION.to_le_bytes());
        out.push(LANES as u8);
        out.push(0);
        out.extend_from_slice(&(self.words.len() as u32).to_le_bytes());
        out.extend_from_slice(&(t as u32).to_le_bytes());
        out.extend_from_slice(&self.nonce.0);
        for w in &self.words {
            out.extend_from_slice(&w.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], t: u64) -> Result<Self> {
        if bytes.len() < SYM_HEADER_BYTES + 16 || bytes[..4] != SYM_MAGIC {
            return Err(Error::Format("not a symmetric ciphertext".into()));
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        if u16::from_le_bytes([bytes[4], bytes[5]]) != SYM_VERSION || bytes[6] as usize != LANES || bytes[7] != 0 {
            return Err(Error::Format("unsupported symmetric ciphertext header".into()));
        }
        let count = u32_at(8) as usize;
        if u32_at(12) as u64 != t {
            return Err(Error::ParamsMismatch);
        }
        if bytes.len() != Self::serialized_len(count) {
            return Err(Error::Length { expected: Self::serialized_len(count), actual: bytes.len() });
        }
        let nonce = Nonce(bytes[16..32].try_into().expect("16 bytes"));
        let words: Vec<u32> = bytes[32..].chunks_exact(4).map(|w| u32::from_le_bytes(w.try_into().expect("4 bytes"))).collect();
        if words.iter().any(|&w| w as u64 >= t) {
            return Err(Error::Format("symmetric ciphertext word out of range".into()));
        }
        Ok(SymCiphertext { nonce, words })
    }
}

/// The cipher instance: modulus, batch size and schedule source.
#[derive(Clone, Debug)]
pub struct ShallowStream {
    t: u64,
    max_blocks: usize,
    schedule: Arc<dyn ScheduleSource>,
}

impl ShallowStream {
    /// `max_blocks` is the slot count N of the HE scheme the stream pairs with.
    pub fn new(t: u64, max_blocks: usize) -> Self {
        Self::with_schedule(t, max_blocks, Arc::new(XofSchedule::new(t)))
    }

    pub fn with_schedule(t: u64, max_blocks: usize, schedule: Arc<dyn ScheduleSource>) -> Self {
        ShallowStream { t, max_blocks, schedule }
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn max_blocks(&self) -> usize {
        self.max_blocks
    }

    /// Largest message one nonce can mask.
    pub fn capacity(&self) -> usize {
        LANES * self.max_blocks
    }

    pub fn schedule(&self) -> &dyn ScheduleSource {
        self.schedule.as_ref()
    }

    pub fn layer(&self, nonce: &Nonce, block: usize, round: usize) -> AffineLayer {
        self.schedule.layer(nonce, block, round)
    }

    pub fn keystream_block(&self, key: &SymKey, nonce: &Nonce, block: usize) -> [u64; LANES] {
        let t = self.t;
        let mut state = key.k;
        for round in 1..AFFINE_LAYERS {
            state = self.layer(nonce, block, round).apply(&state, t);
            for x in state.iter_mut() {
                *x = (*x + *x * *x) % t;
            }
        }
        self.layer(nonce, block, AFFINE_LAYERS).apply(&state, t)
    }

    pub fn keystream(&self, key: &SymKey, nonce: &Nonce, blocks: usize) -> Keystream {
        Keystream { blocks: (0..blocks).map(|b| self.keystream_block(key, nonce, b)).collect() }
    }

    fn check_len(&self, len: usize) -> Result<usize> {
        if len > self.capacity() {
            return Err(Error::BatchOverflow { len, capacity: self.capacity() });
        }
        Ok(len.div_ceil(LANES))
    }

    /// `c[j] = msg[j] + z[block(j), lane(j)] mod t`.
    pub fn encrypt(&self, key: &SymKey, nonce: Nonce, msg: &[u64]) -> Result<SymCiphertext> {
        let blocks = self.check_len(msg.len())?;
        if let Some(x) = msg.iter().find(|&&x| x >= self.t) {
            return Err(Error::Format(format!("message element {x} not below t")));
        }
        let z = self.keystream(key, &nonce, blocks);
        let words = msg.iter().enumerate().map(|(j, &m)| ((m + z.element(j)) % self.t) as u32).collect();
        Ok(SymCiphertext { nonce, words })
    }

    pub fn decrypt(&self, key: &SymKey, ct: &SymCiphertext) -> Result<Vec<u64>> {
        let blocks = self.check_len(ct.len())?;
        let z = self.keystream(key, &ct.nonce, blocks);
        Ok(ct.words.iter().enumerate().map(|(j, &c)| (c as u64 + self.t - z.element(j)) % self.t).collect())
    }
}
