//! Prime moduli with Montgomery multiplication.
//!
//! [`SmallModulus`] covers primes below 2^62 (the plaintext modulus `t`, the
//! auxiliary tensoring primes and the factors of `q`). [`WideModulus`] works
//! on odd moduli below 2^255 held in four 64-bit limbs and is used for the
//! composed value of `q`. Elements are always stored as canonical residues
//! in `[0, m)`; the Montgomery form only appears in precomputed constants
//! consumed by [`Modulus::mul_mont`].

use std::fmt;

use rand::RngCore;

/// 256-bit unsigned integer, little-endian 64-bit limbs.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct U256(pub [u64; 4]);

impl Ord for U256 {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        for i in (0..4).rev() {
            if self.0[i] != other.0[i] {
                return self.0[i].cmp(&other.0[i]);
            }
        }
        std::cmp::Ordering::Equal
    }
}

impl PartialOrd for U256 {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl U256 {
    pub const ZERO: U256 = U256([0; 4]);
    pub const ONE: U256 = U256([1, 0, 0, 0]);

    pub const fn from_u64(x: u64) -> Self {
        U256([x, 0, 0, 0])
    }

    pub fn from_u128(x: u128) -> Self {
        U256([x as u64, (x >> 64) as u64, 0, 0])
    }

    /// Parses a big-endian hexadecimal string (no `0x` prefix required).
    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.trim_start_matches("0x");
        if s.is_empty() || s.len() > 64 {
            return None;
        }
        let mut limbs = [0u64; 4];
        for (i, c) in s.bytes().rev().enumerate() {
            let d = (c as char).to_digit(16)? as u64;
            limbs[i / 16] |= d << (4 * (i % 16));
        }
        Some(U256(limbs))
    }

    pub fn bits(&self) -> u32 {
        for i in (0..4).rev() {
            if self.0[i] != 0 {
                return 64 * i as u32 + (64 - self.0[i].leading_zeros());
            }
        }
        0
    }

    pub fn bit(&self, i: u32) -> bool {
        (self.0[(i / 64) as usize] >> (i % 64)) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    /// Little-endian bytes.
    pub fn to_le_bytes(&self) -> [u8; 32] {
        let mut out = [0u8; 32];
        for (i, l) in self.0.iter().enumerate() {
            out[8 * i..8 * i + 8].copy_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn from_le_bytes(bytes: &[u8; 32]) -> Self {
        let mut limbs = [0u64; 4];
        for (i, l) in limbs.iter_mut().enumerate() {
            *l = u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap());
        }
        U256(limbs)
    }

    /// `self + other`, returning the carry.
    #[inline]
    pub fn overflowing_add(&self, other: &U256) -> (U256, bool) {
        let mut out = [0u64; 4];
        let mut carry = false;
        for i in 0..4 {
            let (s1, c1) = self.0[i].overflowing_add(other.0[i]);
            let (s2, c2) = s1.overflowing_add(carry as u64);
            out[i] = s2;
            carry = c1 | c2;
        }
        (U256(out), carry)
    }

    /// `self - other`, returning the borrow.
    #[inline]
    pub fn overflowing_sub(&self, other: &U256) -> (U256, bool) {
        let mut out = [0u64; 4];
        let mut borrow = false;
        for i in 0..4 {
            let (s1, b1) = self.0[i].overflowing_sub(other.0[i]);
            let (s2, b2) = s1.overflowing_sub(borrow as u64);
            out[i] = s2;
            borrow = b1 | b2;
        }
        (U256(out), borrow)
    }

    pub fn shr1(&self) -> U256 {
        let mut out = [0u64; 4];
        for i in 0..4 {
            out[i] = self.0[i] >> 1;
            if i < 3 {
                out[i] |= self.0[i + 1] << 63;
            }
        }
        U256(out)
    }

    /// Divides by a small divisor, returning `(quotient, remainder)`.
    pub fn div_rem_u64(&self, d: u64) -> (U256, u64) {
        let mut out = [0u64; 4];
        let mut rem: u128 = 0;
        for i in (0..4).rev() {
            let cur = (rem << 64) | self.0[i] as u128;
            out[i] = (cur / d as u128) as u64;
            rem = cur % d as u128;
        }
        (U256(out), rem as u64)
    }

    /// `self * m` as a five-limb product.
    pub fn mul_u64(&self, m: u64) -> [u64; 5] {
        let mut out = [0u64; 5];
        let mut carry: u128 = 0;
        for i in 0..4 {
            let p = self.0[i] as u128 * m as u128 + carry;
            out[i] = p as u64;
            carry = p >> 64;
        }
        out[4] = carry as u64;
        out
    }

    /// Approximate value as a float (used only for quotient estimates).
    pub fn to_f64(&self) -> f64 {
        let mut acc = 0.0f64;
        for i in (0..4).rev() {
            acc = acc * 18446744073709551616.0 + self.0[i] as f64;
        }
        acc
    }
}

impl fmt::Debug for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:016x}{:016x}{:016x}{:016x}", self.0[3], self.0[2], self.0[1], self.0[0])
    }
}

impl fmt::Display for U256 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Word-sized residues making up one ring element.
pub trait Residues: Copy {
    fn residue(&self, i: usize) -> u64;
    fn residue_mut(&mut self, i: usize) -> &mut u64;
}

impl Residues for u64 {
    #[inline(always)]
    fn residue(&self, _: usize) -> u64 {
        *self
    }

    #[inline(always)]
    fn residue_mut(&mut self, _: usize) -> &mut u64 {
        self
    }
}

impl<const K: usize> Residues for [u64; K] {
    #[inline(always)]
    fn residue(&self, i: usize) -> u64 {
        self[i]
    }

    #[inline(always)]
    fn residue_mut(&mut self, i: usize) -> &mut u64 {
        &mut self[i]
    }
}

/// Arithmetic modulo a product of word-sized primes (usually just one).
pub trait Modulus: Clone + Send + Sync + fmt::Debug + 'static {
    type Elem: Copy + Default + PartialEq + Eq + fmt::Debug + Send + Sync + Residues + 'static;

    /// The prime behind each residue of an element.
    fn residue_primes(&self) -> Vec<u64>;

    /// Bit length of the modulus.
    fn bits(&self) -> u32;
    /// Serialized word width in bytes: `ceil(bits/8)` rounded up to a power of two.
    fn word_bytes(&self) -> usize {
        (self.bits() as usize).div_ceil(8).next_power_of_two()
    }

    fn one(&self) -> Self::Elem;
    fn add(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn sub(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    fn neg(&self, a: Self::Elem) -> Self::Elem;
    fn mul(&self, a: Self::Elem, b: Self::Elem) -> Self::Elem;
    /// Converts a canonical residue to Montgomery form (`a * R mod m`).
    fn to_mont(&self, a: Self::Elem) -> Self::Elem;
    /// `a * b` where `b_mont` is in Montgomery form; result is canonical.
    fn mul_mont(&self, a: Self::Elem, b_mont: Self::Elem) -> Self::Elem;

    fn from_u64(&self, x: u64) -> Self::Elem;
    fn from_i64(&self, x: i64) -> Self::Elem {
        if x >= 0 {
            self.from_u64(x as u64)
        } else {
            self.neg(self.from_u64(x.unsigned_abs()))
        }
    }
    /// A primitive 2N-th root of unity, if one exists.
    fn root_of_unity(&self, n: usize) -> Option<Self::Elem>;
    /// `a^e` for a little-endian limb exponent.
    fn pow(&self, a: Self::Elem, e: &U256) -> Self::Elem {
        let mut acc = self.one();
        let base = self.to_mont(a);
        for i in (0..e.bits()).rev() {
            acc = self.mul(acc, acc);
            if e.bit(i) {
                acc = self.mul_mont(acc, base);
            }
        }
        acc
    }
    fn minus_one(&self) -> Self::Elem {
        self.neg(self.one())
    }
    fn inv(&self, a: Self::Elem) -> Self::Elem;
    /// `floor(m / 2)` comparison: true when `a` represents a negative centered value.
    fn is_upper_half(&self, a: Self::Elem) -> bool;

    fn write_le(&self, a: Self::Elem, out: &mut Vec<u8>);
    /// Reads one word; `None` if the value is not a canonical residue.
    fn read_le(&self, bytes: &[u8]) -> Option<Self::Elem>;
    fn sample_uniform(&self, rng: &mut dyn RngCore) -> Self::Elem;
}

/// First `g^cofactor` (g = 2, 3, ...) of order exactly 2N.
fn search_root<M: Modulus>(m: &M, cofactor: &U256, n: usize) -> Option<M::Elem> {
    let minus_one = m.minus_one();
    (2..1000u64)
        .map(|g| m.pow(m.from_u64(g), cofactor))
        .find(|&psi| m.pow(psi, &U256::from_u64(n as u64)) == minus_one)
}

/// Prime modulus below 2^62.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SmallModulus {
    p: u64,
    /// `-p^{-1} mod 2^64`
    pinv_neg: u64,
    /// `2^128 mod p`
    r2: u64,
}

impl SmallModulus {
    pub fn new(p: u64) -> Self {
        assert!(p % 2 == 1 && p < (1 << 62) && p > 2, "unsupported small modulus {p}");
        // Newton iteration for the inverse of p modulo 2^64.
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(p.wrapping_mul(inv)));
        }
        let r = ((1u128 << 64) % p as u128) as u64;
        let r2 = ((r as u128 * r as u128) % p as u128) as u64;
        SmallModulus { p, pinv_neg: inv.wrapping_neg(), r2 }
    }

    #[inline]
    pub fn value(&self) -> u64 {
        self.p
    }

    /// Montgomery reduction of `x < p * 2^64`.
    #[inline]
    pub fn redc(&self, x: u128) -> u64 {
        let m = (x as u64).wrapping_mul(self.pinv_neg);
        let t = ((x + m as u128 * self.p as u128) >> 64) as u64;
        if t >= self.p {
            t - self.p
        } else {
            t
        }
    }

    /// Signed centered representative in `(-p/2, p/2]`.
    #[inline]
    pub fn centered(&self, a: u64) -> i64 {
        if a > self.p / 2 {
            a as i64 - self.p as i64
        } else {
            a as i64
        }
    }
}

impl Modulus for SmallModulus {
    type Elem = u64;

    fn residue_primes(&self) -> Vec<u64> {
        vec![self.p]
    }

    fn bits(&self) -> u32 {
        64 - self.p.leading_zeros()
    }

    #[inline]
    fn one(&self) -> u64 {
        1
    }

    #[inline]
    fn add(&self, a: u64, b: u64) -> u64 {
        let s = a + b;
        if s >= self.p {
            s - self.p
        } else {
            s
        }
    }

    #[inline]
    fn sub(&self, a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + self.p - b
        }
    }

    #[inline]
    fn neg(&self, a: u64) -> u64 {
        if a == 0 {
            0
        } else {
            self.p - a
        }
    }

    #[inline]
    fn mul(&self, a: u64, b: u64) -> u64 {
        self.redc(self.redc(a as u128 * b as u128) as u128 * self.r2 as u128)
    }

    #[inline]
    fn to_mont(&self, a: u64) -> u64 {
        self.redc(a as u128 * self.r2 as u128)
    }

    #[inline]
    fn mul_mont(&self, a: u64, b_mont: u64) -> u64 {
        self.redc(a as u128 * b_mont as u128)
    }

    fn from_u64(&self, x: u64) -> u64 {
        x % self.p
    }

    fn root_of_unity(&self, n: usize) -> Option<u64> {
        let d = 2 * n as u64;
        ((self.p - 1) % d == 0).then(|| search_root(self, &U256::from_u64((self.p - 1) / d), n)).flatten()
    }

    fn inv(&self, a: u64) -> u64 {
        self.pow(a, &U256::from_u64(self.p - 2))
    }

    fn is_upper_half(&self, a: u64) -> bool {
        a > self.p / 2
    }

    fn write_le(&self, a: u64, out: &mut Vec<u8>) {
        let w = self.word_bytes();
        out.extend_from_slice(&a.to_le_bytes()[..w]);
    }

    fn read_le(&self, bytes: &[u8]) -> Option<u64> {
        let mut buf = [0u8; 8];
        buf[..bytes.len()].copy_from_slice(bytes);
        let v = u64::from_le_bytes(buf);
        (v < self.p).then_some(v)
    }

    fn sample_uniform(&self, rng: &mut dyn RngCore) -> u64 {
        let mask = u64::MAX >> self.p.leading_zeros();
        loop {
            let v = rng.next_u64() & mask;
            if v < self.p {
                return v;
            }
        }
    }
}

/// Odd modulus below 2^255 in four limbs (inversion and roots need a prime).
#[derive(Clone, PartialEq, Eq)]
pub struct WideModulus {
    q: U256,
    /// `-q^{-1} mod 2^64`
    qinv_neg: u64,
    /// `2^512 mod q`
    r2: U256,
    half: U256,
}

impl fmt::Debug for WideModulus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "WideModulus({:?})", self.q)
    }
}

impl WideModulus {
    pub fn new(q: U256) -> Self {
        assert!(q.0[0] & 1 == 1 && q.bits() <= 255 && q.bits() > 64, "unsupported wide modulus");
        let mut inv: u64 = 1;
        for _ in 0..6 {
            inv = inv.wrapping_mul(2u64.wrapping_sub(q.0[0].wrapping_mul(inv)));
        }
        let mut m = WideModulus { q, qinv_neg: inv.wrapping_neg(), r2: U256::ZERO, half: q.shr1() };
        // 2^512 mod q by repeated doubling of 1.
        let mut acc = U256::ONE;
        for _ in 0..512 {
            acc = m.add(acc, acc);
        }
        m.r2 = acc;
        m
    }

    #[inline]
    pub fn value(&self) -> &U256 {
        &self.q
    }

    /// CIOS Montgomery product `a * b * 2^-256 mod q`.
    #[inline]
    pub fn mont_mul(&self, a: &U256, b: &U256) -> U256 {
        let q = &self.q.0;
        let mut t = [0u64; 6];
        for i in 0..4 {
            let bi = b.0[i] as u128;
            let mut c: u128 = 0;
            for j in 0..4 {
                let uv = t[j] as u128 + a.0[j] as u128 * bi + c;
                t[j] = uv as u64;
                c = uv >> 64;
            }
            let uv = t[4] as u128 + c;
            t[4] = uv as u64;
            t[5] = (uv >> 64) as u64;

            let m = t[0].wrapping_mul(self.qinv_neg) as u128;
            let uv = t[0] as u128 + m * q[0] as u128;
            let mut c = uv >> 64;
            for j in 1..4 {
                let uv = t[j] as u128 + m * q[j] as u128 + c;
                t[j - 1] = uv as u64;
                c = uv >> 64;
            }
            let uv = t[4] as u128 + c;
            t[3] = uv as u64;
            t[4] = t[5] + (uv >> 64) as u64;
        }
        let r = U256([t[0], t[1], t[2], t[3]]);
        let (d, borrow) = r.overflowing_sub(&self.q);
        if borrow && t[4] == 0 {
            r
        } else {
            d
        }
    }

    /// Signed centered representative, as magnitude and sign.
    pub fn centered_abs(&self, a: &U256) -> (U256, bool) {
        if *a > self.half {
            (self.q.overflowing_sub(a).0, true)
        } else {
            (*a, false)
        }
    }

    /// `round(num / q)` for a five-limb numerator whose quotient fits in 64 bits.
    pub fn div_round_small(&self, num: &[u64; 5]) -> u64 {
        // num + floor(q/2), then floor division.
        let mut n = *num;
        let mut carry = 0u128;
        for i in 0..5 {
            let add = if i < 4 { self.half.0[i] } else { 0 };
            let s = n[i] as u128 + add as u128 + carry;
            n[i] = s as u64;
            carry = s >> 64;
        }
        let approx = {
            let mut acc = 0.0f64;
            for i in (0..5).rev() {
                acc = acc * 18446744073709551616.0 + n[i] as f64;
            }
            acc / self.q.to_f64()
        };
        let mut est = approx.floor().max(0.0) as u64;
        let cmp = |e: u64| -> std::cmp::Ordering {
            let p = self.q.mul_u64(e);
            for i in (0..5).rev() {
                match p[i].cmp(&n[i]) {
                    std::cmp::Ordering::Equal => continue,
                    o => return o,
                }
            }
            std::cmp::Ordering::Equal
        };
        while est > 0 && cmp(est) == std::cmp::Ordering::Greater {
            est -= 1;
        }
        while cmp(est + 1) != std::cmp::Ordering::Greater {
            est += 1;
        }
        est
    }

    #[inline]
    pub fn add(&self, a: U256, b: U256) -> U256 {
        // q < 2^255, so the sum never carries out.
        let (s, _) = a.overflowing_add(&b);
        let (d, borrow) = s.overflowing_sub(&self.q);
        if borrow {
            s
        } else {
            d
        }
    }

    #[inline]
    pub fn sub(&self, a: U256, b: U256) -> U256 {
        let (d, borrow) = a.overflowing_sub(&b);
        if borrow {
            d.overflowing_add(&self.q).0
        } else {
            d
        }
    }

    #[inline]
    pub fn mul(&self, a: U256, b: U256) -> U256 {
        self.mont_mul(&self.mont_mul(&a, &b), &self.r2)
    }
}
