//! Reference implementations the fast code is checked against. Everything
//! here is deliberately naive: big integers, O(N^2) loops, no NTT.

use num_bigint::{BigInt, BigUint};

use flhhe_core::ring::U256;
use flhhe_core::stream::{Nonce, ShallowStream, SymKey, AFFINE_LAYERS, LANES};

pub fn big(x: &U256) -> BigInt {
    BigInt::from(BigUint::from_bytes_le(&x.to_le_bytes()))
}

/// Negacyclic product in `Z_m[X]/(X^N + 1)` by the textbook double loop.
pub fn negacyclic_mul(a: &[BigInt], b: &[BigInt], m: &BigInt) -> Vec<BigInt> {
    let n = a.len();
    let mut out = vec![BigInt::from(0); n];
    for i in 0..n {
        for j in 0..n {
            let prod = &a[i] * &b[j];
            if i + j < n {
                out[i + j] += prod;
            } else {
                out[i + j - n] -= prod;
            }
        }
    }
    out.into_iter().map(|x| ((x % m) + m) % m).collect()
}

pub fn add_mod(a: &[u64], b: &[u64], t: u64) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| (x + y) % t).collect()
}

pub fn sub_mod(a: &[u64], b: &[u64], t: u64) -> Vec<u64> {
    a.iter().zip(b).map(|(x, y)| (x + t - y) % t).collect()
}

pub fn mul_mod(a: &[u64], b: &[u64], t: u64) -> Vec<u64> {
    a.iter().zip(b).map(|(&x, &y)| ((x as u128 * y as u128) % t as u128) as u64).collect()
}

/// Slot-wise sum over arbitrary-precision integers, reduced once at the end.
pub fn big_sum_mod(parts: &[Vec<u64>], t: u64) -> Vec<u64> {
    let n = parts[0].len();
    (0..n)
        .map(|i| {
            let s: BigUint = parts.iter().map(|p| BigUint::from(p[i])).sum();
            let r = s % BigUint::from(t);
            r.to_u64_digits().first().copied().unwrap_or(0)
        })
        .collect()
}

/// One keystream block from the public round constants, with the affine
/// layers and the `x + x^2` map written out in u128.
pub fn keystream_block(stream: &ShallowStream, key: &SymKey, nonce: &Nonce, block: usize) -> [u64; LANES] {
    let t = stream.t() as u128;
    let affine = |x: &[u64; LANES], round: usize| {
        let layer = stream.layer(nonce, block, round);
        let mut out = [0u64; LANES];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = layer.constants[i] as u128;
            for j in 0..LANES {
                acc += layer.matrix[i][j] as u128 * x[j] as u128;
            }
            *o = (acc % t) as u64;
        }
        out
    };
    let mut x = *key.elements();
    for round in 1..AFFINE_LAYERS {
        x = affine(&x, round);
        for v in x.iter_mut() {
            let w = *v as u128;
            *v = ((w + w * w) % t) as u64;
        }
    }
    affine(&x, AFFINE_LAYERS)
}
