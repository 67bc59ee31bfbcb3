//! Ciphertext modulus `q = p_0 p_1 p_2 p_3` in residue-number-system form.
//!
//! Elements are held as their four residues, so ring arithmetic and the NTT
//! run on 64-bit words. The composed integer in `[0, q)` is only needed for
//! rounding, noise measurement, gadget digits and the wire format; it is
//! rebuilt through Garner's mixed-radix digits.

use std::fmt;

use rand::RngCore;

use super::modulus::{Modulus, SmallModulus, WideModulus, U256};

pub const RNS_PRIMES: usize = 4;

pub type RnsElem = [u64; RNS_PRIMES];

#[derive(Clone)]
pub struct RnsModulus {
    primes: [SmallModulus; RNS_PRIMES],
    q: WideModulus,
    /// `radix_mod[i][k] = (p_0 ... p_{k-1}) mod p_i` in Montgomery form, `k < i`.
    radix_mod: [[u64; RNS_PRIMES]; RNS_PRIMES],
    /// `(p_0 ... p_{i-1})^{-1} mod p_i` in Montgomery form.
    radix_inv: [u64; RNS_PRIMES],
    /// `p_0 ... p_{k-1}` as integers.
    radix: [U256; RNS_PRIMES],
    /// Mixed-radix digits of `floor(q/2)`.
    half_digits: RnsElem,
    /// `2^(64(k+1)) mod p_i`, one REDC per input limb.
    limb_weights: [[u64; 4]; RNS_PRIMES],
}

impl fmt::Debug for RnsModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ps: Vec<u64> = self.primes.iter().map(|p| p.value()).collect();
        write!(f, "RnsModulus({ps:#x?})")
    }
}

impl PartialEq for RnsModulus {
    fn eq(&self, other: &Self) -> bool {
        self.primes == other.primes
    }
}

impl Eq for RnsModulus {}

impl RnsModulus {
    /// Panics unless the primes are distinct, odd and below 2^62 with a
    /// product below 2^255; callers validate through `RingParams` first.
    pub fn new(primes: [u64; RNS_PRIMES]) -> Self {
        let mut q = U256::ONE;
        let mut radix = [U256::ZERO; RNS_PRIMES];
        for (i, &p) in primes.iter().enumerate() {
            radix[i] = q;
            let wide = q.mul_u64(p);
            assert!(wide[4] == 0, "RNS modulus overflows 256 bits");
            q = U256([wide[0], wide[1], wide[2], wide[3]]);
        }
        let small = primes.map(SmallModulus::new);
        let mut radix_mod = [[0u64; RNS_PRIMES]; RNS_PRIMES];
        let mut radix_inv = [0u64; RNS_PRIMES];
        for i in 0..RNS_PRIMES {
            let m = &small[i];
            let mut acc = 1u64;
            for k in 0..i {
                radix_mod[i][k] = m.to_mont(acc);
                acc = m.mul(acc, primes[k] % primes[i]);
            }
            assert!(acc != 0, "RNS primes must be distinct");
            radix_inv[i] = m.to_mont(m.inv(acc));
        }
        let limb_weights = primes.map(|p| {
            let mut w = [0u64; 4];
            let mut acc = ((1u128 << 64) % p as u128) as u64;
            for wi in w.iter_mut() {
                *wi = acc;
                acc = ((acc as u128 * ((1u128 << 64) % p as u128)) % p as u128) as u64;
            }
            w
        });
        let mut m = RnsModulus {
            primes: small,
            q: WideModulus::new(q),
            radix_mod,
            radix_inv,
            radix,
            half_digits: [0; RNS_PRIMES],
            limb_weights,
        };
        m.half_digits = m.digits(&m.decompose(&q.shr1()));
        m
    }

    pub fn primes(&self) -> &[SmallModulus; RNS_PRIMES] {
        &self.primes
    }

    /// The composed modulus, for operations on integer representatives.
    pub fn wide(&self) -> &WideModulus {
        &self.q
    }

    pub fn value(&self) -> &U256 {
        self.q.value()
    }

    /// Garner digits `v` with `x = sum v_k p_0 ... p_{k-1}`, `v_k < p_k`.
    #[inline]
    pub fn digits(&self, r: &RnsElem) -> RnsElem {
        let mut v = [0u64; RNS_PRIMES];
        v[0] = r[0];
        for i in 1..RNS_PRIMES {
            let m = &self.primes[i];
            let mut acc = 0u64;
            for k in 0..i {
                acc = m.add(acc, m.mul_mont(v[k], self.radix_mod[i][k]));
            }
            v[i] = m.mul_mont(m.sub(r[i], acc), self.radix_inv[i]);
        }
        v
    }

    /// Integer in `[0, q)` from mixed-radix digits.
    pub fn from_digits(&self, v: &RnsElem) -> U256 {
        let mut x = U256::from_u64(v[0]);
        for k in 1..RNS_PRIMES {
            let p = self.radix[k].mul_u64(v[k]);
            x = x.overflowing_add(&U256([p[0], p[1], p[2], p[3]])).0;
        }
        x
    }

    #[inline]
    pub fn compose(&self, r: &RnsElem) -> U256 {
        self.from_digits(&self.digits(r))
    }

    /// Residues of an integer `x < 2^256`.
    #[inline]
    pub fn decompose(&self, x: &U256) -> RnsElem {
        let mut out = [0u64; RNS_PRIMES];
        for (i, o) in out.iter_mut().enumerate() {
            let m = &self.primes[i];
            let w = &self.limb_weights[i];
            let mut r = 0u64;
            for k in 0..4 {
                r = m.add(r, m.redc(x.0[k] as u128 * w[k] as u128));
            }
            *o = r;
        }
        out
    }

    /// Compares mixed-radix digits against those of `floor(q/2)`.
    #[inline]
    pub fn digits_upper_half(&self, v: &RnsElem) -> bool {
        for k in (0..RNS_PRIMES).rev() {
            if v[k] != self.half_digits[k] {
                return v[k] > self.half_digits[k];
            }
        }
        false
    }
}

impl Modulus for RnsModulus {
    type Elem = RnsElem;

    fn bits(&self) -> u32 {
        self.q.value().bits()
    }

    fn residue_primes(&self) -> Vec<u64> {
        self.primes.iter().map(|p| p.value()).collect()
    }

    fn one(&self) -> RnsElem {
        [1; RNS_PRIMES]
    }

    #[inline]
    fn add(&self, a: RnsElem, b: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].add(a[i], b[i]))
    }

    #[inline]
    fn sub(&self, a: RnsElem, b: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].sub(a[i], b[i]))
    }

    #[inline]
    fn neg(&self, a: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].neg(a[i]))
    }

    #[inline]
    fn mul(&self, a: RnsElem, b: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].mul(a[i], b[i]))
    }

    #[inline]
    fn to_mont(&self, a: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].to_mont(a[i]))
    }

    #[inline]
    fn mul_mont(&self, a: RnsElem, b_mont: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].mul_mont(a[i], b_mont[i]))
    }

    fn from_u64(&self, x: u64) -> RnsElem {
        std::array::from_fn(|i| x % self.primes[i].value())
    }

    /// Per-prime roots glued by CRT: the residue vector itself.
    fn root_of_unity(&self, n: usize) -> Option<RnsElem> {
        let mut out = [0u64; RNS_PRIMES];
        for (o, p) in out.iter_mut().zip(&self.primes) {
            *o = p.root_of_unity(n)?;
        }
        Some(out)
    }

    fn inv(&self, a: RnsElem) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].inv(a[i]))
    }

    fn is_upper_half(&self, a: RnsElem) -> bool {
        self.digits_upper_half(&self.digits(&a))
    }

    fn write_le(&self, a: RnsElem, out: &mut Vec<u8>) {
        let w = self.word_bytes();
        out.extend_from_slice(&self.compose(&a).to_le_bytes()[..w]);
    }

    fn read_le(&self, bytes: &[u8]) -> Option<RnsElem> {
        let mut buf = [0u8; 32];
        buf[..bytes.len()].copy_from_slice(bytes);
        let v = U256::from_le_bytes(&buf);
        (v < *self.value()).then(|| self.decompose(&v))
    }

    fn sample_uniform(&self, rng: &mut dyn RngCore) -> RnsElem {
        std::array::from_fn(|i| self.primes[i].sample_uniform(rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ring::DEFAULT_Q_PRIMES;
    use num_bigint::BigUint;
    use rand::SeedableRng;

    fn big(x: &U256) -> BigUint {
        BigUint::from_bytes_le(&x.to_le_bytes())
    }

    #[test]
    fn compose_decompose_roundtrip() {
        let m = RnsModulus::new(DEFAULT_Q_PRIMES);
        let qb = big(m.value());
        assert_eq!(qb, DEFAULT_Q_PRIMES.iter().map(|&p| BigUint::from(p)).product::<BigUint>());
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = m.sample_uniform(&mut rng);
            let x = m.compose(&a);
            assert!(x < *m.value());
            for (i, p) in DEFAULT_Q_PRIMES.iter().enumerate() {
                assert_eq!(&big(&x) % p, BigUint::from(a[i]));
            }
            assert_eq!(m.decompose(&x), a);
            assert_eq!(m.is_upper_half(a), big(&x) > &qb >> 1usize);
            let b = m.sample_uniform(&mut rng);
            assert_eq!(big(&m.compose(&m.mul(a, b))), (big(&x) * big(&m.compose(&b))) % &qb);
        }
        let half = m.value().shr1();
        assert!(!m.is_upper_half(m.decompose(&half)));
        assert!(m.is_upper_half(m.decompose(&half.overflowing_add(&U256::ONE).0)));
        assert_eq!(m.word_bytes(), 32);
    }

    #[test]
    fn wire_words_are_canonical() {
        let m = RnsModulus::new(DEFAULT_Q_PRIMES);
        let mut out = Vec::new();
        m.write_le(m.minus_one(), &mut out);
        assert_eq!(U256::from_le_bytes(&out[..].try_into().unwrap()), m.value().overflowing_sub(&U256::ONE).0);
        assert_eq!(m.read_le(&out), Some(m.minus_one()));
        assert_eq!(m.read_le(&m.value().to_le_bytes()), None);
    }
}
