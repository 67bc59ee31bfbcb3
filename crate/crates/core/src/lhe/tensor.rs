//! Exact ciphertext tensoring for BFV multiplication.
//!
//! The products `c_i * c'_j` of centered mod-q polynomials are computed exactly
//! over the integers by working modulo an auxiliary set of NTT primes whose
//! product `P` exceeds `N q^2`. Each coefficient is then reconstructed in
//! mixed radix (Garner), scaled by `t/q` and rounded, all with fixed-width
//! arithmetic: for digits `v_j` and radices `M_j = p_0 ... p_{j-1}` we
//! precompute `t M_j = A_j q + B_j` so that
//! `round(t x / q) = sum v_j A_j + round(sum v_j B_j / q)`, with `B_j / q`
//! kept as a 128-bit binary fraction. Inputs and outputs stay in the RNS
//! form of `q`: the lift goes through the Garner digits of each coefficient,
//! and the sum `sum v_j A_j` is accumulated directly modulo each factor.

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::ring::{CipherPoly, Modulus, ModulusId, RingContext, RnsElem, RnsModulus, SmallModulus, U256, RNS_PRIMES};

/// 62-bit primes `p = 1 mod 4096` (NTT-friendly up to N = 2048).
const AUX_PRIMES: [u64; 12] = [
    0x3fffffffffff0001,
    0x3ffffffffffe8001,
    0x3ffffffffffe5001,
    0x3ffffffffffd9001,
    0x3ffffffffffd6001,
    0x3ffffffffffd2001,
    0x3ffffffffff96001,
    0x3ffffffffff91001,
    0x3ffffffffff85001,
    0x3ffffffffff55001,
    0x3ffffffffff4e001,
    0x3ffffffffff1c001,
];

#[derive(Clone, Debug)]
pub(crate) struct Tensorer {
    rings: Vec<RingContext<SmallModulus>>,
    q: RnsModulus,
    /// `q mod p_j`
    q_mod_p: Vec<u64>,
    /// `radix_mont[j][k]`: the k-th Garner radix of q, mod `p_j`, Montgomery form.
    radix_mont: Vec<RnsElem>,
    /// `garner_inv[j][i] = p_i^{-1} mod p_j` in Montgomery form, `i < j`.
    garner_inv: Vec<Vec<u64>>,
    /// Mixed-radix digits of `floor(P/2)`.
    half_digits: Vec<u64>,
    /// `floor(t M_j / q) mod q_i` in Montgomery form, per factor `q_i` of q.
    a_mont: Vec<RnsElem>,
    /// `floor(2^128 (t M_j mod q) / q)`.
    frac: Vec<u128>,
    /// `floor(t P / q) mod q`.
    ap: RnsElem,
    /// `2^64 mod q_i` in Montgomery form.
    two64_mont: RnsElem,
    /// `floor(2^128 (t P mod q) / q)`.
    frac_p: u128,
}

fn to_big(x: &U256) -> BigUint {
    BigUint::from_bytes_le(&x.to_le_bytes())
}

fn from_big(x: &BigUint) -> U256 {
    let bytes = x.to_bytes_le();
    let mut buf = [0u8; 32];
    buf[..bytes.len()].copy_from_slice(&bytes);
    U256::from_le_bytes(&buf)
}

impl Tensorer {
    pub fn new(q: &RnsModulus, t: u64, degree: usize) -> Result<Self> {
        let needed_bits = 2 * q.bits() as u64 + degree.trailing_zeros() as u64 + 3;
        let qb = to_big(q.value());
        let mut primes = Vec::new();
        let mut p_big = BigUint::one();
        for &p in AUX_PRIMES.iter() {
            if p_big.bits() >= needed_bits {
                break;
            }
            primes.push(p);
            p_big *= p;
        }
        if p_big.bits() < needed_bits {
            return Err(Error::Params(format!("q too large for exact tensoring ({needed_bits} bits needed)")));
        }
        let rings = primes
            .iter()
            .enumerate()
            .map(|(j, &p)| RingContext::new(SmallModulus::new(p), degree, ModulusId(ModulusId::AUX_BASE + j as u8)))
            .collect::<Result<Vec<_>>>()?;

        let q_mod_p = primes.iter().map(|&p| (&qb % p).to_u64().unwrap()).collect();
        let mut q_radix = Vec::with_capacity(RNS_PRIMES);
        let mut acc = BigUint::one();
        for f in q.primes() {
            q_radix.push(acc.clone());
            acc *= f.value();
        }
        let radix_mont = rings
            .iter()
            .zip(&primes)
            .map(|(r, &p)| std::array::from_fn(|k| r.modulus().to_mont((&q_radix[k] % p).to_u64().unwrap())))
            .collect();
        let rns_mont = |x: &BigUint| -> RnsElem {
            std::array::from_fn(|i| {
                let f = &q.primes()[i];
                f.to_mont((x % f.value()).to_u64().unwrap())
            })
        };
        let garner_inv = rings
            .iter()
            .enumerate()
            .map(|(j, r)| {
                let m = r.modulus();
                (0..j).map(|i| m.to_mont(m.inv(primes[i] % primes[j]))).collect()
            })
            .collect();

        let half: BigUint = &p_big >> 1usize;
        let mut half_digits = Vec::with_capacity(primes.len());
        let mut rest = half;
        for &p in &primes {
            half_digits.push((&rest % BigUint::from(p)).to_u64().unwrap());
            rest /= p;
        }

        let two128: BigUint = BigUint::one() << 128usize;
        let split = |x: &BigUint| -> (U256, u128) {
            let tx = x * t;
            let a = (&tx / &qb) % &qb;
            let b = &tx % &qb;
            let f: BigUint = (b * &two128) / &qb;
            (from_big(&a), f.to_u128().unwrap())
        };
        let mut a_mont = Vec::new();
        let mut frac = Vec::new();
        let mut radix = BigUint::one();
        for &p in &primes {
            let (a, f) = split(&radix);
            a_mont.push(rns_mont(&to_big(&a)));
            frac.push(f);
            radix *= p;
        }
        let (ap, frac_p) = split(&p_big);
        let ap = q.decompose(&ap);
        let two64_mont = rns_mont(&(BigUint::one() << 64usize));
        debug_assert!(!radix.is_zero());

        Ok(Tensorer {
            rings,
            q: q.clone(),
            q_mod_p,
            radix_mont,
            garner_inv,
            half_digits,
            a_mont,
            frac,
            ap,
            two64_mont,
            frac_p,
        })
    }

    pub fn prime_count(&self) -> usize {
        self.rings.len()
    }

    /// Garner digits of every coefficient, and whether it is negative.
    fn digits(&self, a: &CipherPoly) -> Vec<(RnsElem, bool)> {
        a.coeffs()
            .iter()
            .map(|c| {
                let v = self.q.digits(c);
                (v, self.q.digits_upper_half(&v))
            })
            .collect()
    }

    /// Residues of the centered lift modulo aux prime `j`.
    fn lift(&self, digits: &[(RnsElem, bool)], j: usize) -> Vec<u64> {
        let m = self.rings[j].modulus();
        let w = &self.radix_mont[j];
        let qp = self.q_mod_p[j];
        digits
            .iter()
            .map(|(v, neg)| {
                let mut r = 0u64;
                for k in 0..RNS_PRIMES {
                    r = m.add(r, m.mul_mont(v[k], w[k]));
                }
                if *neg {
                    m.sub(r, qp)
                } else {
                    r
                }
            })
            .collect()
    }

    /// `round(t/q * (a ⊗ b))` as coefficient vectors `(d0, d1, d2)`.
    /// `b = None` squares `a`. Inputs must be in the coefficient domain.
    pub fn tensor(&self, a: [&CipherPoly; 2], b: Option<[&CipherPoly; 2]>) -> [Vec<RnsElem>; 3] {
        let n = a[0].degree();
        let k = self.rings.len();
        let da = [self.digits(a[0]), self.digits(a[1])];
        let db = b.map(|b| [self.digits(b[0]), self.digits(b[1])]);
        let mut res: Vec<[Vec<u64>; 3]> = Vec::with_capacity(k);
        for j in 0..k {
            let ring = &self.rings[j];
            let m = ring.modulus();
            let ntt = ring.ntt_tables();
            let mut a0 = self.lift(&da[0], j);
            let mut a1 = self.lift(&da[1], j);
            ntt.forward(&mut a0);
            ntt.forward(&mut a1);
            let (mut d0, mut d1, mut d2) = (vec![0u64; n], vec![0u64; n], vec![0u64; n]);
            match &db {
                None => {
                    for i in 0..n {
                        d0[i] = m.mul(a0[i], a0[i]);
                        let x = m.mul(a0[i], a1[i]);
                        d1[i] = m.add(x, x);
                        d2[i] = m.mul(a1[i], a1[i]);
                    }
                }
                Some(b) => {
                    let mut b0 = self.lift(&b[0], j);
                    let mut b1 = self.lift(&b[1], j);
                    ntt.forward(&mut b0);
                    ntt.forward(&mut b1);
                    for i in 0..n {
                        d0[i] = m.mul(a0[i], b0[i]);
                        d1[i] = m.add(m.mul(a0[i], b1[i]), m.mul(a1[i], b0[i]));
                        d2[i] = m.mul(a1[i], b1[i]);
                    }
                }
            }
            ntt.inverse(&mut d0);
            ntt.inverse(&mut d1);
            ntt.inverse(&mut d2);
            res.push([d0, d1, d2]);
        }
        let mut out = [vec![[0u64; RNS_PRIMES]; n], vec![[0u64; RNS_PRIMES]; n], vec![[0u64; RNS_PRIMES]; n]];
        let mut residues = vec![0u64; k];
        for (c, out_c) in out.iter_mut().enumerate() {
            for (i, o) in out_c.iter_mut().enumerate() {
                for j in 0..k {
                    residues[j] = res[j][c][i];
                }
                *o = self.scale_round(&mut residues);
            }
        }
        out
    }

    /// Reconstructs the centered integer from its residues (overwritten with
    /// mixed-radix digits) and returns `round(t x / q) mod q`.
    fn scale_round(&self, r: &mut [u64]) -> RnsElem {
        let k = r.len();
        for j in 1..k {
            let m = self.rings[j].modulus();
            let p = m.value();
            let mut acc = r[j];
            for i in 0..j {
                let v = if r[i] >= p { r[i] - p } else { r[i] };
                acc = m.mul_mont(m.sub(acc, v), self.garner_inv[j][i]);
            }
            r[j] = acc;
        }
        let mut negative = false;
        for j in (0..k).rev() {
            if r[j] != self.half_digits[j] {
                negative = r[j] > self.half_digits[j];
                break;
            }
        }

        let q = &self.q;
        let mut y = [0u64; RNS_PRIMES];
        // 256-bit fixed-point accumulator with 128 fractional bits.
        let mut s = [0u64; 4];
        for j in 0..k {
            for (i, f) in q.primes().iter().enumerate() {
                y[i] = f.add(y[i], f.mul_mont(r[j], self.a_mont[j][i]));
            }
            let f = self.frac[j];
            let lo = (f as u64) as u128 * r[j] as u128;
            let hi = (f >> 64) * r[j] as u128;
            add_shifted(&mut s, lo, 0);
            add_shifted(&mut s, hi, 1);
        }
        add_shifted(&mut s, 1u128 << 127, 0);
        if negative {
            y = q.sub(y, self.ap);
            add_shifted(&mut s, 1u128, 2);
            sub_u128(&mut s, self.frac_p);
        }
        // The integer part is below 2^128: s[2] + s[3] 2^64.
        for (i, f) in q.primes().iter().enumerate() {
            let lo = f.from_u64(s[2]);
            let hi = f.mul_mont(s[3], self.two64_mont[i]);
            y[i] = f.add(y[i], f.add(lo, hi));
            if negative {
                y[i] = f.sub(y[i], 1);
            }
        }
        y
    }
}

#[inline]
fn add_shifted(s: &mut [u64; 4], v: u128, limb: usize) {
    let mut carry = v;
    let mut i = limb;
    while carry != 0 && i < 4 {
        let sum = s[i] as u128 + (carry as u64) as u128;
        s[i] = sum as u64;
        carry = (carry >> 64) + (sum >> 64);
        i += 1;
    }
}

#[inline]
fn sub_u128(s: &mut [u64; 4], v: u128) {
    let (d0, b0) = s[0].overflowing_sub(v as u64);
    s[0] = d0;
    let (d1, b1a) = s[1].overflowing_sub((v >> 64) as u64);
    let (d1, b1b) = d1.overflowing_sub(b0 as u64);
    s[1] = d1;
    let mut borrow = b1a | b1b;
    for x in s.iter_mut().skip(2) {
        let (d, b) = x.overflowing_sub(borrow as u64);
        *x = d;
        borrow = b;
    }
}
