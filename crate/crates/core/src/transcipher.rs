//! Server-side transciphering: symmetric uploads become HE ciphertexts.
//!
//! Layout: lane `i` of every message, keystream and key lives in its own
//! ciphertext, and slot `s` of that ciphertext holds block `s`. Element `j`
//! of a flat message is therefore slot `j / 16` of lane `j % 16`, and no
//! slot rotation is ever needed.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::lhe::{Ciphertext, LheContext, PreparedPlain, PublicKey, RelinKey, SecretKey, SlotVector};
use crate::stream::{block_of, lane_of, Lane, Nonce, ShallowStream, SymCiphertext, SymKey, AFFINE_LAYERS, LANES};

/// One ciphertext per lane, indexed by [`Lane`], covering `count` flat elements.
#[derive(Clone, Debug, PartialEq)]
pub struct LaneSet {
    lanes: Vec<Ciphertext>,
    count: usize,
}

impl LaneSet {
    pub fn new(lanes: Vec<Ciphertext>, count: usize) -> Result<Self> {
        if lanes.len() != LANES {
            return Err(Error::Length { expected: LANES, actual: lanes.len() });
        }
        Ok(LaneSet { lanes, count })
    }

    pub fn lane(&self, l: Lane) -> &Ciphertext {
        &self.lanes[l.index()]
    }

    pub fn lanes(&self) -> &[Ciphertext] {
        &self.lanes
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn into_lanes(self) -> Vec<Ciphertext> {
        self.lanes
    }
}

/// HE encryption of a symmetric key: lane `i` holds `k_i` in every slot.
#[derive(Clone, Debug, PartialEq)]
pub struct EncSymKey {
    lanes: Vec<Ciphertext>,
}

impl EncSymKey {
    pub fn from_lanes(lanes: Vec<Ciphertext>) -> Result<Self> {
        if lanes.len() != LANES {
            return Err(Error::Length { expected: LANES, actual: lanes.len() });
        }
        Ok(EncSymKey { lanes })
    }

    pub fn lane(&self, l: Lane) -> &Ciphertext {
        &self.lanes[l.index()]
    }

    pub fn lanes(&self) -> &[Ciphertext] {
        &self.lanes
    }
}

/// Homomorphically evaluated keystream for one nonce: lane `i`, slot `s`
/// holds `keystream_block(key, nonce, s)[i]`.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalKeystream {
    nonce: Nonce,
    lanes: Vec<Ciphertext>,
}

impl EvalKeystream {
    pub fn nonce(&self) -> Nonce {
        self.nonce
    }

    pub fn lane(&self, l: Lane) -> &Ciphertext {
        &self.lanes[l.index()]
    }

    pub fn lanes(&self) -> &[Ciphertext] {
        &self.lanes
    }
}

/// A symmetric ciphertext lane scaled into the HE space: `(Δ_q c_i, 0)`.
#[derive(Clone, Debug)]
pub struct LiftedLane {
    lane: Lane,
    nonce: Nonce,
    ct: Ciphertext,
}

impl LiftedLane {
    pub fn lane(&self) -> Lane {
        self.lane
    }
}

fn check_stream(ctx: &LheContext, stream: &ShallowStream) -> Result<()> {
    if stream.t() != ctx.t() || stream.max_blocks() != ctx.degree() {
        return Err(Error::ParamsMismatch);
    }
    Ok(())
}

/// Slot vector of lane `l`: slot `s` holds `msg[s * LANES + l]`, zero past the end.
pub fn lane_view(ctx: &LheContext, msg: &[u64], l: Lane) -> Result<SlotVector> {
    let n = ctx.degree();
    if msg.len() > n * LANES {
        return Err(Error::BatchOverflow { len: msg.len(), capacity: n * LANES });
    }
    let vals = (0..n).map(|s| msg.get(s * LANES + l.index()).copied().unwrap_or(0)).collect();
    SlotVector::new(vals, ctx.t())
}

pub fn encrypt_sym_key<R: RngCore>(ctx: &LheContext, pk: &PublicKey, key: &SymKey, rng: &mut R) -> Result<EncSymKey> {
    let n = ctx.degree();
    let lanes = Lane::all()
        .map(|l| ctx.encrypt(pk, &SlotVector::constant(n, key.get(l)), rng))
        .collect::<Result<Vec<_>>>()?;
    EncSymKey::from_lanes(lanes)
}

/// Server offline phase: runs the cipher on the encrypted key for all N
/// blocks of `nonce` at once. Four plaintext-matrix layers with three
/// `x + x^2` layers between them, so depth 3.
pub fn eval_keystream(
    ctx: &LheContext,
    rlk: &RelinKey,
    stream: &ShallowStream,
    enc_key: &EncSymKey,
    nonce: &Nonce,
) -> Result<EvalKeystream> {
    check_stream(ctx, stream)?;
    let n = ctx.degree();
    let t = ctx.t();
    let mut state: Vec<Ciphertext> = enc_key.lanes.clone();
    for round in 1..=AFFINE_LAYERS {
        let layers: Vec<_> = (0..n).map(|s| stream.layer(nonce, s, round)).collect();
        let mut next = Vec::with_capacity(LANES);
        for i in 0..LANES {
            let mut acc = ctx.zero_ct();
            for (j, x) in state.iter().enumerate() {
                let p: Vec<u64> = layers.iter().map(|l| l.matrix[i][j]).collect();
                let p: PreparedPlain = ctx.prepare_plain(&SlotVector::new(p, t)?)?;
                ctx.fma_plain_prepared(&mut acc, x, &p)?;
            }
            let c: Vec<u64> = layers.iter().map(|l| l.constants[i]).collect();
            next.push(ctx.add_plain(&acc, &SlotVector::new(c, t)?)?);
        }
        state = next;
        if round < AFFINE_LAYERS {
            for x in state.iter_mut() {
                let sq = ctx.square(x, rlk)?;
                *x = ctx.add_ct(x, &sq)?;
            }
        }
    }
    Ok(EvalKeystream { nonce: *nonce, lanes: state })
}

/// Scales lane `l` of a symmetric ciphertext into a noiseless HE ciphertext.
pub fn lift_lane(ctx: &LheContext, sym: &SymCiphertext, l: Lane) -> Result<LiftedLane> {
    let words: Vec<u64> = sym.words.iter().map(|&w| w as u64).collect();
    let view = lane_view(ctx, &words, l)?;
    let ct = ctx.lift_trivial(&ctx.encode_slots(&view)?)?;
    Ok(LiftedLane { lane: l, nonce: sym.nonce, ct })
}

/// Server online phase for one lane: `lift(c_i) - z_i` encrypts the message
/// lane. The keystream lane is selected from the lifted lane's own index,
/// and the nonces must agree.
pub fn decomp(ctx: &LheContext, lifted: &LiftedLane, z: &EvalKeystream) -> Result<Ciphertext> {
    if lifted.nonce != z.nonce {
        return Err(Error::Format("symmetric ciphertext and keystream use different nonces".into()));
    }
    ctx.sub_ct(&lifted.ct, z.lane(lifted.lane))
}

/// `decomp` over every lane of an upload.
pub fn decomp_all(ctx: &LheContext, sym: &SymCiphertext, z: &EvalKeystream) -> Result<LaneSet> {
    let lanes = Lane::all().map(|l| decomp(ctx, &lift_lane(ctx, sym, l)?, z)).collect::<Result<Vec<_>>>()?;
    LaneSet::new(lanes, sym.len())
}

/// HE-mode upload: encrypts the message directly into the same lane layout.
pub fn encrypt_lanes<R: RngCore>(ctx: &LheContext, pk: &PublicKey, msg: &[u64], rng: &mut R) -> Result<LaneSet> {
    let lanes = Lane::all().map(|l| ctx.encrypt(pk, &lane_view(ctx, msg, l)?, rng)).collect::<Result<Vec<_>>>()?;
    LaneSet::new(lanes, msg.len())
}

/// Homomorphic sum of per-client lane sets, refused above `k_max` clients
/// (beyond it the true sum could wrap mod t).
pub fn hhe_eval_sum(ctx: &LheContext, sets: &[LaneSet], k_max: usize) -> Result<LaneSet> {
    let k = sets.len();
    if k == 0 || k > k_max {
        return Err(Error::OverflowBudget { clients: k, max: k_max });
    }
    let count = sets[0].count;
    if let Some(bad) = sets.iter().find(|s| s.count != count) {
        return Err(Error::Length { expected: count, actual: bad.count });
    }
    let mut lanes = sets[0].lanes.clone();
    for set in &sets[1..] {
        for (acc, ct) in lanes.iter_mut().zip(&set.lanes) {
            ctx.add_assign_ct(acc, ct)?;
        }
    }
    LaneSet::new(lanes, count)
}

/// Decrypts a lane set back to the flat block-major vector of `count` elements.
pub fn decrypt_lanes(ctx: &LheContext, sk: &SecretKey, set: &LaneSet) -> Vec<u64> {
    let lanes: Vec<SlotVector> = set.lanes.iter().map(|ct| ctx.decrypt(sk, ct)).collect();
    (0..set.count).map(|j| lanes[lane_of(j).index()].as_slice()[block_of(j)]).collect()
}

/// Plaintext view of an evaluated keystream, for checking against the cipher.
pub fn decrypt_keystream(ctx: &LheContext, sk: &SecretKey, z: &EvalKeystream) -> Vec<SlotVector> {
    z.lanes.iter().map(|ct| ctx.decrypt(sk, ct)).collect()
}
