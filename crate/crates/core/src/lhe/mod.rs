//! Leveled BFV-style encryption over `R_q` with plaintexts batched into the
//! N slots of `Z_t[X]/(X^N+1)`.
//!
//! Plaintexts are embedded at scale `Δ_q = floor(q/t)`; `q = 1 mod t`, so
//! `Δ_q` is also `round(q/t)`. Ciphertexts may sit in either NTT or
//! coefficient form; every operation aligns the representation it needs.

mod serial;
mod tensor;

use std::sync::Arc;

use rand::RngCore;

use crate::error::{Error, Result};
use crate::ring::{
    bit_reverse, CipherPoly, CipherRing, Domain, Modulus, ModulusId, PlainPoly, PlainRing, RingContext, RingParams,
    RnsElem, RnsModulus, SmallModulus, U256,
};

pub use serial::{ObjectKind, OBJECT_HEADER_BYTES, OBJECT_MAGIC};

use tensor::Tensorer;

/// Digit width of the relinearization gadget.
pub const RELIN_BASE_BITS: u32 = 20;

/// Length-N vector over `Z_t`, one value per plaintext slot.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SlotVector(Vec<u64>);

impl SlotVector {
    /// Fails if any value is not in `[0, t)`.
    pub fn new(values: Vec<u64>, t: u64) -> Result<Self> {
        if let Some(v) = values.iter().find(|&&v| v >= t) {
            return Err(Error::Format(format!("slot value {v} not below t = {t}")));
        }
        Ok(SlotVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        SlotVector(vec![0; n])
    }

    pub fn constant(n: usize, c: u64) -> Self {
        SlotVector(vec![c; n])
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<u64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SecretKey {
    /// Ternary secret, NTT domain.
    pub(crate) s: CipherPoly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    /// `b = -(a s) + e`, NTT domain.
    pub(crate) b: CipherPoly,
    pub(crate) a: CipherPoly,
}

/// Key-switching key for `s^2 -> s` with base `2^RELIN_BASE_BITS` digits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelinKey {
    /// `(b_i, a_i)` with `b_i = -(a_i s) + e_i + 2^(20 i) s^2`, NTT domain.
    pub(crate) parts: Vec<(CipherPoly, CipherPoly)>,
    /// Montgomery-form copies of `parts` for the inner products.
    mont: Vec<(Vec<RnsElem>, Vec<RnsElem>)>,
}

/// Pair `(c0, c1)` with `c0 + c1 s = Δ_q m + v (mod q)`.
#[derive(Clone, Debug)]
pub struct Ciphertext {
    pub(crate) c0: CipherPoly,
    pub(crate) c1: CipherPoly,
    /// Ciphertext-ciphertext multiplications consumed so far (informational).
    pub depth: u32,
    /// Heuristic log2 of the noise magnitude (informational only).
    pub noise_estimate_bits: f64,
}

impl PartialEq for Ciphertext {
    /// Representation-independent equality of the two components.
    fn eq(&self, other: &Self) -> bool {
        self.c0.domain() == other.c0.domain() && self.c0 == other.c0 && self.c1 == other.c1
    }
}

/// Plaintext multiplier prepared for repeated `mul_plain` (NTT, Montgomery form).
#[derive(Clone, Debug)]
pub struct PreparedPlain {
    ntt_mont: Vec<RnsElem>,
}

struct Inner {
    params: RingParams,
    rq: CipherRing,
    rt: PlainRing,
    /// `floor(q / t)`
    delta_q: U256,
    delta_q_mont: RnsElem,
    tensor: Tensorer,
    relin_digits: usize,
    fingerprint: u64,
}

/// Shared parameters, rings and precomputation. Cheap to clone.
#[derive(Clone)]
pub struct LheContext {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for LheContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LheContext").field("params", &self.inner.params).finish()
    }
}

impl LheContext {
    pub fn new(params: RingParams) -> Result<Self> {
        params.validate()?;
        let q = RnsModulus::new(params.q_primes);
        let n = params.degree;
        let rq = RingContext::new(q.clone(), n, ModulusId::CIPHER)?;
        let rt = RingContext::new(SmallModulus::new(params.t), n, ModulusId::PLAIN)?;
        let (delta_q, _) = q.value().div_rem_u64(params.t);
        let tensor = Tensorer::new(&q, params.t, n)?;
        let relin_digits = q.bits().div_ceil(RELIN_BASE_BITS) as usize;
        let fingerprint = params.fingerprint();
        let delta_q_mont = q.to_mont(q.decompose(&delta_q));
        Ok(LheContext {
            inner: Arc::new(Inner { params, rq, rt, delta_q, delta_q_mont, tensor, relin_digits, fingerprint }),
        })
    }

    pub fn params(&self) -> &RingParams {
        &self.inner.params
    }

    pub fn degree(&self) -> usize {
        self.inner.params.degree
    }

    pub fn t(&self) -> u64 {
        self.inner.params.t
    }

    pub fn cipher_ring(&self) -> &CipherRing {
        &self.inner.rq
    }

    pub fn plain_ring(&self) -> &PlainRing {
        &self.inner.rt
    }

    pub fn fingerprint(&self) -> u64 {
        self.inner.fingerprint
    }

    pub fn relin_digits(&self) -> usize {
        self.inner.relin_digits
    }

    pub fn aux_prime_count(&self) -> usize {
        self.inner.tensor.prime_count()
    }

    fn q(&self) -> &RnsModulus {
        self.inner.rq.modulus()
    }

    // ---- keys -------------------------------------------------------------

    pub fn keygen<R: RngCore>(&self, rng: &mut R) -> (SecretKey, PublicKey, RelinKey) {
        let rq = &self.inner.rq;
        let s = rq.to_domain(rq.sample_ternary(rng), Domain::Ntt);
        let sk = SecretKey { s };

        let (b, a) = self.rlwe_sample(&sk, rng);
        let pk = PublicKey { b, a };

        let mut s2 = sk.s.clone();
        rq.mul_assign_pointwise(&mut s2, &sk.s);
        let mut parts = Vec::with_capacity(self.inner.relin_digits);
        let mut w = rq.modulus().one();
        let base = rq.modulus().from_u64(1 << RELIN_BASE_BITS);
        for _ in 0..self.inner.relin_digits {
            let (mut b, a) = self.rlwe_sample(&sk, rng);
            let ws2 = rq.scalar_mul(&s2, w);
            rq.add_assign(&mut b, &ws2);
            parts.push((b, a));
            w = rq.modulus().mul(w, base);
        }
        let rlk = self.relin_key_from_parts(parts);
        (sk, pk, rlk)
    }

    /// `(-(a s) + e, a)` in NTT domain.
    fn rlwe_sample<R: RngCore>(&self, sk: &SecretKey, rng: &mut R) -> (CipherPoly, CipherPoly) {
        let rq = &self.inner.rq;
        let a = rq.to_domain(rq.sample_uniform(rng), Domain::Ntt);
        let e = rq.to_domain(rq.sample_gaussian(self.inner.params.sigma, rng), Domain::Ntt);
        let mut b = a.clone();
        rq.mul_assign_pointwise(&mut b, &sk.s);
        let mut b = rq.neg(&b).expect("same ring");
        rq.add_assign(&mut b, &e);
        (b, a)
    }

    pub(crate) fn relin_key_from_parts(&self, parts: Vec<(CipherPoly, CipherPoly)>) -> RelinKey {
        let rq = &self.inner.rq;
        let mont = parts.iter().map(|(b, a)| (rq.mont_form(b), rq.mont_form(a))).collect();
        RelinKey { parts, mont }
    }

    // ---- encoding ---------------------------------------------------------

    /// Slot `s` is the evaluation at the s-th odd power `psi^(2s+1)`.
    pub fn encode_slots(&self, v: &SlotVector) -> Result<PlainPoly> {
        let n = self.degree();
        if v.len() != n {
            return Err(Error::Length { expected: n, actual: v.len() });
        }
        let log_n = n.trailing_zeros();
        let mut coeffs = vec![0u64; n];
        for (s, &x) in v.0.iter().enumerate() {
            coeffs[bit_reverse(s, log_n)] = x;
        }
        let p = self.inner.rt.from_coeffs(coeffs, Domain::Ntt)?;
        self.inner.rt.ntt_inverse(p)
    }

    pub fn decode_slots(&self, p: &PlainPoly) -> Result<SlotVector> {
        let rt = &self.inner.rt;
        rt.check(p)?;
        let f = rt.to_domain(p.clone(), Domain::Ntt);
        let log_n = self.degree().trailing_zeros();
        let vals = (0..self.degree()).map(|s| f.coeffs()[bit_reverse(s, log_n)]).collect();
        Ok(SlotVector(vals))
    }

    /// Centered lift of a plaintext polynomial into `R_q` (coefficient domain).
    fn lift_plain(&self, p: &PlainPoly) -> CipherPoly {
        let rt = &self.inner.rt;
        let rq = &self.inner.rq;
        let p = rt.to_domain(p.clone(), Domain::Coeff);
        let vals: Vec<RnsElem> = p.coeffs().iter().map(|&c| rq.modulus().from_i64(rt.modulus().centered(c))).collect();
        rq.from_coeffs(vals, Domain::Coeff).expect("degree matches")
    }

    /// `Δ_q * lift(p)` in coefficient domain.
    fn scaled_plain(&self, p: &PlainPoly) -> CipherPoly {
        let mut m = self.lift_plain(p);
        let q = self.q();
        for c in m.coeffs_mut() {
            *c = q.mul_mont(*c, self.inner.delta_q_mont);
        }
        m
    }

    pub fn prepare_plain(&self, v: &SlotVector) -> Result<PreparedPlain> {
        let p = self.encode_slots(v)?;
        Ok(self.prepare_plain_poly(&p))
    }

    pub fn prepare_plain_poly(&self, p: &PlainPoly) -> PreparedPlain {
        let rq = &self.inner.rq;
        let lifted = rq.to_domain(self.lift_plain(p), Domain::Ntt);
        PreparedPlain { ntt_mont: rq.mont_form(&lifted) }
    }

    // ---- encryption -------------------------------------------------------

    pub fn encrypt<R: RngCore>(&self, pk: &PublicKey, v: &SlotVector, rng: &mut R) -> Result<Ciphertext> {
        let m = self.encode_slots(v)?;
        Ok(self.encrypt_poly(pk, &m, rng))
    }

    pub fn encrypt_poly<R: RngCore>(&self, pk: &PublicKey, m: &PlainPoly, rng: &mut R) -> Ciphertext {
        let rq = &self.inner.rq;
        let sigma = self.inner.params.sigma;
        let u = rq.to_domain(rq.sample_ternary(rng), Domain::Ntt);
        let e1 = rq.sample_gaussian(sigma, rng);
        let e2 = rq.sample_gaussian(sigma, rng);
        let mut c0 = pk.b.clone();
        rq.mul_assign_pointwise(&mut c0, &u);
        let mut body = self.scaled_plain(m);
        rq.add_assign(&mut body, &e1);
        rq.add_assign(&mut c0, &rq.to_domain(body, Domain::Ntt));
        let mut c1 = pk.a.clone();
        rq.mul_assign_pointwise(&mut c1, &u);
        rq.add_assign(&mut c1, &rq.to_domain(e2, Domain::Ntt));
        Ciphertext { c0, c1, depth: 0, noise_estimate_bits: self.fresh_noise_bits() }
    }

    fn fresh_noise_bits(&self) -> f64 {
        let n = self.degree() as f64;
        let sigma = self.inner.params.sigma;
        // e*u + e1 + e2*s: about sqrt(4N/3) sigma per coefficient, 6 std devs.
        (6.0 * sigma * (4.0 * n / 3.0).sqrt()).log2()
    }

    /// `c0 + c1 s` in coefficient domain.
    fn phase(&self, sk: &SecretKey, ct: &Ciphertext) -> CipherPoly {
        let rq = &self.inner.rq;
        let mut c1 = rq.to_domain(ct.c1.clone(), Domain::Ntt);
        rq.mul_assign_pointwise(&mut c1, &sk.s);
        let c0 = rq.to_domain(ct.c0.clone(), Domain::Ntt);
        rq.add_assign(&mut c1, &c0);
        rq.to_domain(c1, Domain::Coeff)
    }

    pub fn decrypt_poly(&self, sk: &SecretKey, ct: &Ciphertext) -> PlainPoly {
        let x = self.phase(sk, ct);
        let t = self.t();
        let q = self.q();
        let vals = x.coeffs().iter().map(|c| q.wide().div_round_small(&q.compose(c).mul_u64(t)) % t).collect();
        self.inner.rt.from_coeffs(vals, Domain::Coeff).expect("degree matches")
    }

    pub fn decrypt(&self, sk: &SecretKey, ct: &Ciphertext) -> SlotVector {
        self.decode_slots(&self.decrypt_poly(sk, ct)).expect("decrypt yields a plaintext-ring poly")
    }

    /// log2 of the largest residual `|c0 + c1 s - Δ_q m|` after rounding.
    /// Meaningful only while below [`Self::noise_ceiling_bits`]; beyond it the
    /// plaintext is already lost and the residual looks small again.
    pub fn noise_bits(&self, sk: &SecretKey, ct: &Ciphertext) -> f64 {
        let x = self.phase(sk, ct);
        let m = self.decrypt_poly(sk, ct);
        let q = self.q();
        let dm = self.scaled_plain(&m);
        let mut worst = 0.0f64;
        for (a, b) in x.coeffs().iter().zip(dm.coeffs()) {
            let (mag, _) = q.wide().centered_abs(&q.compose(&q.sub(*a, *b)));
            worst = worst.max(mag.to_f64());
        }
        worst.max(1.0).log2()
    }

    /// log2(Δ_q / 2): decryption is correct while the noise stays below it.
    pub fn noise_ceiling_bits(&self) -> f64 {
        self.inner.delta_q.to_f64().log2() - 1.0
    }

    // ---- evaluation -------------------------------------------------------

    fn align(&self, p: &CipherPoly, domain: Domain) -> CipherPoly {
        self.inner.rq.to_domain(p.clone(), domain)
    }

    fn check_ct(&self, ct: &Ciphertext) -> Result<()> {
        let rq = &self.inner.rq;
        rq.check(&ct.c0).and_then(|_| rq.check(&ct.c1)).map_err(|_| Error::ParamsMismatch)
    }

    pub fn add_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.combine(a, b, false)
    }

    pub fn sub_ct(&self, a: &Ciphertext, b: &Ciphertext) -> Result<Ciphertext> {
        self.combine(a, b, true)
    }

    fn combine(&self, a: &Ciphertext, b: &Ciphertext, subtract: bool) -> Result<Ciphertext> {
        self.check_ct(a)?;
        self.check_ct(b)?;
        let rq = &self.inner.rq;
        let d = a.c0.domain();
        let (b0, b1) = (self.align(&b.c0, d), self.align(&b.c1, d));
        let mut out = a.clone();
        if subtract {
            rq.sub_assign(&mut out.c0, &b0);
            rq.sub_assign(&mut out.c1, &b1);
        } else {
            rq.add_assign(&mut out.c0, &b0);
            rq.add_assign(&mut out.c1, &b1);
        }
        out.depth = a.depth.max(b.depth);
        out.noise_estimate_bits = a.noise_estimate_bits.max(b.noise_estimate_bits) + 1.0;
        Ok(out)
    }

    /// In-place `acc += b`; both must share parameters.
    pub fn add_assign_ct(&self, acc: &mut Ciphertext, b: &Ciphertext) -> Result<()> {
        *acc = self.add_ct(acc, b)?;
        Ok(())
    }

    pub fn add_plain(&self, a: &Ciphertext, v: &SlotVector) -> Result<Ciphertext> {
        let p = self.encode_slots(v)?;
        self.add_plain_poly(a, &p)
    }

    pub fn add_plain_poly(&self, a: &Ciphertext, p: &PlainPoly) -> Result<Ciphertext> {
        self.check_ct(a)?;
        let rq = &self.inner.rq;
        let body = rq.to_domain(self.scaled_plain(p), a.c0.domain());
        let mut out = a.clone();
        rq.add_assign(&mut out.c0, &body);
        Ok(out)
    }

    pub fn mul_plain(&self, a: &Ciphertext, v: &SlotVector) -> Result<Ciphertext> {
        let p = self.prepare_plain(v)?;
        self.mul_plain_prepared(a, &p)
    }

    pub fn mul_plain_prepared(&self, a: &Ciphertext, p: &PreparedPlain) -> Result<Ciphertext> {
        self.check_ct(a)?;
        let rq = &self.inner.rq;
        let mut c0 = self.align(&a.c0, Domain::Ntt);
        let mut c1 = self.align(&a.c1, Domain::Ntt);
        rq.mul_assign_pointwise_mont(&mut c0, &p.ntt_mont);
        rq.mul_assign_pointwise_mont(&mut c1, &p.ntt_mont);
        Ok(Ciphertext {
            c0,
            c1,
            depth: a.depth,
            noise_estimate_bits: a.noise_estimate_bits + self.plain_growth_bits(),
        })
    }

    /// `acc += a * p` without materializing the product (NTT domain `acc`).
    pub fn fma_plain_prepared(&self, acc: &mut Ciphertext, a: &Ciphertext, p: &PreparedPlain) -> Result<()> {
        self.check_ct(acc)?;
        self.check_ct(a)?;
        let rq = &self.inner.rq;
        if acc.c0.domain() != Domain::Ntt {
            acc.c0 = self.align(&acc.c0, Domain::Ntt);
            acc.c1 = self.align(&acc.c1, Domain::Ntt);
        }
        let a0 = self.align(&a.c0, Domain::Ntt);
        let a1 = self.align(&a.c1, Domain::Ntt);
        rq.fma_pointwise_mont(&mut acc.c0, &a0, &p.ntt_mont);
        rq.fma_pointwise_mont(&mut acc.c1, &a1, &p.ntt_mont);
        acc.depth = acc.depth.max(a.depth);
        acc.noise_estimate_bits =
            acc.noise_estimate_bits.max(a.noise_estimate_bits + self.plain_growth_bits()) + 0.5;
        Ok(())
    }

    /// An encryption of zero with zero noise, in NTT domain.
    pub fn zero_ct(&self) -> Ciphertext {
        let rq = &self.inner.rq;
        Ciphertext { c0: rq.zero(Domain::Ntt), c1: rq.zero(Domain::Ntt), depth: 0, noise_estimate_bits: 0.0 }
    }

    fn plain_growth_bits(&self) -> f64 {
        let n = self.degree() as f64;
        (self.t() as f64 * n.sqrt() / 12f64.sqrt()).log2() + 2.0
    }

    /// Slot-wise product, relinearized back to two components.
    pub fn mul_ct(&self, a: &Ciphertext, b: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        self.check_ct(a)?;
        self.check_ct(b)?;
        let a0 = self.align(&a.c0, Domain::Coeff);
        let a1 = self.align(&a.c1, Domain::Coeff);
        let b0 = self.align(&b.c0, Domain::Coeff);
        let b1 = self.align(&b.c1, Domain::Coeff);
        let d = self.inner.tensor.tensor([&a0, &a1], Some([&b0, &b1]));
        let noise = a.noise_estimate_bits.max(b.noise_estimate_bits) + self.mult_growth_bits();
        self.relinearize(d, rlk, a.depth.max(b.depth) + 1, noise)
    }

    /// `a * a`, cheaper than [`Self::mul_ct`].
    pub fn square(&self, a: &Ciphertext, rlk: &RelinKey) -> Result<Ciphertext> {
        self.check_ct(a)?;
        let a0 = self.align(&a.c0, Domain::Coeff);
        let a1 = self.align(&a.c1, Domain::Coeff);
        let d = self.inner.tensor.tensor([&a0, &a1], None);
        self.relinearize(d, rlk, a.depth + 1, a.noise_estimate_bits + self.mult_growth_bits())
    }

    fn mult_growth_bits(&self) -> f64 {
        let n = self.degree() as f64;
        (self.t() as f64 * n).log2()
    }

    fn relinearize(&self, d: [Vec<RnsElem>; 3], rlk: &RelinKey, depth: u32, noise: f64) -> Result<Ciphertext> {
        let rq = &self.inner.rq;
        if rlk.parts.len() != self.inner.relin_digits {
            return Err(Error::ParamsMismatch);
        }
        let [d0, d1, d2] = d;
        let mut c0 = rq.to_domain(rq.from_coeffs(d0, Domain::Coeff)?, Domain::Ntt);
        let mut c1 = rq.to_domain(rq.from_coeffs(d1, Domain::Coeff)?, Domain::Ntt);
        let mask = (1u64 << RELIN_BASE_BITS) - 1;
        let q = self.q();
        let d2: Vec<U256> = d2.iter().map(|c| q.compose(c)).collect();
        for (i, (kb, ka)) in rlk.mont.iter().enumerate() {
            let shift = RELIN_BASE_BITS * i as u32;
            let digits: Vec<RnsElem> = d2.iter().map(|c| [extract_bits(c, shift) & mask; 4]).collect();
            let digit = rq.to_domain(rq.from_coeffs(digits, Domain::Coeff)?, Domain::Ntt);
            rq.fma_pointwise_mont(&mut c0, &digit, kb);
            rq.fma_pointwise_mont(&mut c1, &digit, ka);
        }
        let relin_noise = (RELIN_BASE_BITS as f64) + (self.degree() as f64).log2() / 2.0 + 4.0;
        Ok(Ciphertext { c0, c1, depth, noise_estimate_bits: noise.max(relin_noise) + 0.5 })
    }

    /// Noiseless ciphertext `(Δ_q p, 0)`; decrypts to `decode(p)` under any key.
    pub fn lift_trivial(&self, p: &PlainPoly) -> Result<Ciphertext> {
        self.inner.rt.check(p)?;
        let rq = &self.inner.rq;
        Ok(Ciphertext { c0: self.scaled_plain(p), c1: rq.zero(Domain::Coeff), depth: 0, noise_estimate_bits: 0.0 })
    }

    /// Converts both components to coefficient form (as serialized).
    pub fn to_coeff_form(&self, ct: &Ciphertext) -> Ciphertext {
        Ciphertext {
            c0: self.align(&ct.c0, Domain::Coeff),
            c1: self.align(&ct.c1, Domain::Coeff),
            ..ct.clone()
        }
    }
}

#[inline]
fn extract_bits(x: &U256, shift: u32) -> u64 {
    let limb = (shift / 64) as usize;
    let off = shift % 64;
    if limb >= 4 {
        return 0;
    }
    let lo = x.0[limb] >> off;
    if off == 0 || limb + 1 >= 4 {
        lo
    } else {
        lo | (x.0[limb + 1] << (64 - off))
    }
}

#[cfg(test)]
mod tests;
