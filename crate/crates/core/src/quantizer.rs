//! Fixed-point encoding of real weights into `Z_t` and back.
//!
//! Weights in `[-1, 1]` become `round_half_even(Δ w) mod t`. A slot-wise sum
//! of `K` such vectors decodes as `centered(s) / (K Δ)`, which is where the
//! `1/K` of federated averaging is applied.

use crate::error::{Error, Result};

/// Δ used when nothing else is configured.
pub const DEFAULT_DELTA: u64 = 1 << 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedWeights {
    pub values: Vec<u64>,
    pub delta: u64,
    pub t: u64,
    /// Inputs that were outside `[-1, 1]` and got clamped.
    pub clamped: usize,
}

impl QuantizedWeights {
    pub fn count(&self) -> usize {
        self.values.len()
    }

    /// Wraps an aggregated vector (e.g. a decrypted sum) for dequantization.
    pub fn from_sum(values: Vec<u64>, delta: u64, t: u64) -> Self {
        QuantizedWeights { values, delta, t, clamped: 0 }
    }

    pub fn centered(&self) -> Vec<i64> {
        self.values.iter().map(|&v| centered(v, self.t)).collect()
    }
}

/// Representative of `v mod t` in `(-t/2, t/2]`.
pub fn centered(v: u64, t: u64) -> i64 {
    if v > t / 2 {
        v as i64 - t as i64
    } else {
        v as i64
    }
}

pub fn quantize(w: &[f64], delta: u64, t: u64) -> QuantizedWeights {
    let d = delta as f64;
    let mut clamped = 0;
    let values = w
        .iter()
        .map(|&x| {
            let x = if (-1.0..=1.0).contains(&x) {
                x
            } else {
                clamped += 1;
                if x.is_nan() { 0.0 } else { x.clamp(-1.0, 1.0) }
            };
            let r = (d * x).round_ties_even() as i64;
            r.rem_euclid(t as i64) as u64
        })
        .collect();
    if clamped > 0 {
        log::warn!("quantize: clamped {clamped} weights into [-1, 1]");
    }
    QuantizedWeights { values, delta, t, clamped }
}

pub fn dequantize_sum(s: &QuantizedWeights, clients: usize) -> Result<Vec<f64>> {
    if clients == 0 {
        return Err(Error::Config("dequantize_sum needs at least one client".into()));
    }
    let scale = (clients as u64 * s.delta) as f64;
    Ok(s.values.iter().map(|&v| centered(v, s.t) as f64 / scale).collect())
}

/// Slot-wise sum of quantized vectors mod t (the plaintext oracle for aggregation).
pub fn sum_mod(parts: &[&QuantizedWeights]) -> Result<QuantizedWeights> {
    let first = parts.first().ok_or_else(|| Error::Config("empty sum".into()))?;
    let t = first.t;
    let mut values = vec![0u64; first.count()];
    for p in parts {
        if p.count() != values.len() {
            return Err(Error::Length { expected: values.len(), actual: p.count() });
        }
        if p.t != t || p.delta != first.delta {
            return Err(Error::ParamsMismatch);
        }
        for (acc, &v) in values.iter_mut().zip(&p.values) {
            *acc = (*acc + v) % t;
        }
    }
    Ok(QuantizedWeights::from_sum(values, first.delta, t))
}

/// True if every centered entry of a K-client sum lies in `[-K Δ, K Δ]`.
/// A sum outside that window can only come from a decryption failure.
pub fn sum_in_range(s: &QuantizedWeights, clients: usize) -> bool {
    let bound = (clients as u64 * s.delta) as i64;
    s.values.iter().all(|&v| centered(v, s.t).abs() <= bound)
}

#[cfg(test)]
mod tests {
    use super::*;

    const T: u64 = 65537;

    #[test]
    fn examples() {
        assert_eq!(quantize(&[0.0], 1024, T).values, vec![0]);
        assert_eq!(quantize(&[0.5], 1024, T).values, vec![512]);
        assert_eq!(quantize(&[-0.3337], 1024, T).values, vec![T - 342]);
        assert_eq!(quantize(&[1.0, -1.0], 1024, T).values, vec![1024, T - 1024]);
    }

    #[test]
    fn ties_round_to_even() {
        // 1024 * x lands exactly on .5
        let q = quantize(&[0.5 / 1024.0, 1.5 / 1024.0, -0.5 / 1024.0, -2.5 / 1024.0], 1024, T);
        assert_eq!(q.centered(), vec![0, 2, 0, -2]);
    }

    #[test]
    fn out_of_range_inputs_are_clamped_and_counted() {
        let q = quantize(&[1.5, -7.0, 0.25, f64::NAN], 1024, T);
        assert_eq!(q.clamped, 3);
        assert_eq!(q.centered(), vec![1024, -1024, 256, 0]);
    }

    #[test]
    fn dequantize_examples() {
        let z = QuantizedWeights::from_sum(vec![0; 4], 1024, T);
        assert_eq!(dequantize_sum(&z, 3).unwrap(), vec![0.0; 4]);
        assert!(dequantize_sum(&z, 0).is_err());
        let v = [0.1, -0.77, 0.999, -1.0];
        let q = quantize(&v, 1024, T);
        let three = sum_mod(&[&q, &q, &q]).unwrap();
        for (a, b) in dequantize_sum(&three, 3).unwrap().iter().zip(v) {
            assert!((a - b).abs() <= 1.0 / 2048.0);
        }
        assert!(sum_in_range(&three, 3));
        assert!(!sum_in_range(&QuantizedWeights::from_sum(vec![T / 2], 1024, T), 3));
    }
}
