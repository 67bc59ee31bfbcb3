//! Key and error distributions. All samplers draw from a caller-owned RNG so
//! a fixed seed reproduces the polynomial exactly.

use rand::RngCore;

use super::{Domain, Modulus, Poly, RingContext};

/// Centered-binomial parameter with variance closest to `sigma^2`.
pub fn binomial_eta(sigma: f64) -> u32 {
    ((2.0 * sigma * sigma).round() as u32).clamp(1, 64)
}

/// One centered-binomial draw: difference of two `eta`-bit popcounts.
pub fn sample_cbd(rng: &mut dyn RngCore, eta: u32) -> i64 {
    let mask = if eta == 64 { u64::MAX } else { (1u64 << eta) - 1 };
    let a = (rng.next_u64() & mask).count_ones() as i64;
    let b = (rng.next_u64() & mask).count_ones() as i64;
    a - b
}

impl<M: Modulus> RingContext<M> {
    pub fn sample_uniform<R: RngCore>(&self, rng: &mut R) -> Poly<M> {
        let coeffs = (0..self.degree()).map(|_| self.modulus().sample_uniform(rng)).collect();
        self.from_coeffs(coeffs, Domain::Coeff).expect("degree matches")
    }

    /// Coefficients uniform over `{-1, 0, 1}`.
    pub fn sample_ternary<R: RngCore>(&self, rng: &mut R) -> Poly<M> {
        let vals: Vec<i64> = (0..self.degree())
            .map(|_| loop {
                // rejection on 2 bits keeps the three outcomes equiprobable
                let b = rng.next_u32() & 3;
                if b < 3 {
                    break b as i64 - 1;
                }
            })
            .collect();
        self.from_signed(&vals).expect("degree matches")
    }

    /// Centered binomial with variance `round(2 sigma^2) / 2`.
    pub fn sample_gaussian<R: RngCore>(&self, sigma: f64, rng: &mut R) -> Poly<M> {
        let eta = binomial_eta(sigma);
        let vals: Vec<i64> = (0..self.degree()).map(|_| sample_cbd(rng, eta)).collect();
        self.from_signed(&vals).expect("degree matches")
    }
}
