//! Negacyclic number-theoretic transform over `Z_m[X]/(X^N + 1)`.
//!
//! Forward is Cooley-Tukey with the 2N-th root folded into the twiddles, so
//! no separate pre-twist is needed; the output is in bit-reversed order:
//! index `k` holds the evaluation at `psi^(2*brv(k)+1)`. Inverse is
//! Gentleman-Sande and consumes that order.
//!
//! Each word prime of the modulus is transformed on its own with Harvey's
//! lazy butterflies: twiddles carry a Shoup quotient `floor(w 2^64 / p)` and
//! intermediate values live in `[0, 4p)` until a final correction. This
//! needs `p < 2^62`.

use super::modulus::{Modulus, Residues};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct NttTables<M: Modulus> {
    n: usize,
    /// Primitive 2N-th root of unity (canonical).
    psi: M::Elem,
    primes: Vec<PrimeTables>,
}

#[derive(Clone, Debug)]
struct PrimeTables {
    p: u64,
    /// `psi^brv(k)` and its Shoup quotient.
    psi_rev: Vec<(u64, u64)>,
    /// `psi^-brv(k)` and its Shoup quotient.
    psi_inv_rev: Vec<(u64, u64)>,
    n_inv: (u64, u64),
}

pub(crate) fn bit_reverse(x: usize, log_n: u32) -> usize {
    if log_n == 0 {
        0
    } else {
        x.reverse_bits() >> (usize::BITS - log_n)
    }
}

pub fn find_primitive_root<M: Modulus>(m: &M, n: usize) -> Result<M::Elem> {
    m.root_of_unity(n).ok_or_else(|| Error::Params(format!("modulus has no primitive {}-th root of unity", 2 * n)))
}

fn mulmod(a: u64, b: u64, p: u64) -> u64 {
    ((a as u128 * b as u128) % p as u128) as u64
}

fn powmod(mut a: u64, mut e: u64, p: u64) -> u64 {
    let mut acc = 1;
    while e > 0 {
        if e & 1 == 1 {
            acc = mulmod(acc, a, p);
        }
        a = mulmod(a, a, p);
        e >>= 1;
    }
    acc
}

fn shoup(w: u64, p: u64) -> (u64, u64) {
    (w, (((w as u128) << 64) / p as u128) as u64)
}

/// `x w mod p` in `[0, 2p)` for any 64-bit `x`.
#[inline(always)]
fn shoup_mul(x: u64, (w, w_shoup): (u64, u64), p: u64) -> u64 {
    let q = ((x as u128 * w_shoup as u128) >> 64) as u64;
    x.wrapping_mul(w).wrapping_sub(q.wrapping_mul(p))
}

impl PrimeTables {
    fn new(p: u64, psi: u64, n: usize) -> Self {
        let log_n = n.trailing_zeros();
        let psi_inv = powmod(psi, p - 2, p);
        let (mut pows, mut inv_pows) = (Vec::with_capacity(n), Vec::with_capacity(n));
        let (mut a, mut b) = (1u64, 1u64);
        for _ in 0..n {
            pows.push(a);
            inv_pows.push(b);
            a = mulmod(a, psi, p);
            b = mulmod(b, psi_inv, p);
        }
        PrimeTables {
            p,
            psi_rev: (0..n).map(|k| shoup(pows[bit_reverse(k, log_n)], p)).collect(),
            psi_inv_rev: (0..n).map(|k| shoup(inv_pows[bit_reverse(k, log_n)], p)).collect(),
            n_inv: shoup(powmod(n as u64 % p, p - 2, p), p),
        }
    }

    fn forward<E: Residues>(&self, a: &mut [E], lane: usize) {
        let n = a.len();
        let p = self.p;
        let two_p = 2 * p;
        let mut t = n;
        let mut groups = 1;
        while groups < n {
            t >>= 1;
            for i in 0..groups {
                let w = self.psi_rev[groups + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let mut u = x.residue(lane);
                    if u >= two_p {
                        u -= two_p;
                    }
                    let v = shoup_mul(y.residue(lane), w, p);
                    *x.residue_mut(lane) = u + v;
                    *y.residue_mut(lane) = u + two_p - v;
                }
            }
            groups <<= 1;
        }
        for x in a.iter_mut() {
            let r = x.residue_mut(lane);
            if *r >= two_p {
                *r -= two_p;
            }
            if *r >= p {
                *r -= p;
            }
        }
    }

    fn inverse<E: Residues>(&self, a: &mut [E], lane: usize) {
        let n = a.len();
        let p = self.p;
        let two_p = 2 * p;
        let mut t = 1;
        let mut groups = n;
        while groups > 1 {
            let h = groups >> 1;
            for i in 0..h {
                let w = self.psi_inv_rev[h + i];
                let j1 = 2 * i * t;
                let (lo, hi) = a[j1..j1 + 2 * t].split_at_mut(t);
                for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                    let u = x.residue(lane);
                    let v = y.residue(lane);
                    let mut s = u + v;
                    if s >= two_p {
                        s -= two_p;
                    }
                    *x.residue_mut(lane) = s;
                    *y.residue_mut(lane) = shoup_mul(u + two_p - v, w, p);
                }
            }
            t <<= 1;
            groups = h;
        }
        for x in a.iter_mut() {
            let r = x.residue_mut(lane);
            let mut v = shoup_mul(*r, self.n_inv, p);
            if v >= p {
                v -= p;
            }
            *r = v;
        }
    }
}

impl<M: Modulus> NttTables<M> {
    pub fn new(m: &M, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 2 {
            return Err(Error::Params(format!("ring degree {n} is not a power of two >= 2")));
        }
        let psi = find_primitive_root(m, n)?;
        let primes = m
            .residue_primes()
            .iter()
            .enumerate()
            .map(|(i, &p)| {
                assert!(p < 1 << 62, "NTT prime {p:#x} too large for lazy butterflies");
                PrimeTables::new(p, psi.residue(i), n)
            })
            .collect();
        Ok(NttTables { n, psi, primes })
    }

    pub fn degree(&self) -> usize {
        self.n
    }

    pub fn psi(&self) -> M::Elem {
        self.psi
    }

    /// Canonical input, canonical output.
    pub fn forward(&self, a: &mut [M::Elem]) {
        debug_assert_eq!(a.len(), self.n);
        for (lane, t) in self.primes.iter().enumerate() {
            t.forward(a, lane);
        }
    }

    pub fn inverse(&self, a: &mut [M::Elem]) {
        debug_assert_eq!(a.len(), self.n);
        for (lane, t) in self.primes.iter().enumerate() {
            t.inverse(a, lane);
        }
    }
}
