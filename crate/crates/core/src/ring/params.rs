use serde::{Deserialize, Serialize};
use sha3::{Digest, Sha3_256};

use super::modulus::{Modulus, U256};
use super::rns::RNS_PRIMES;
use crate::error::{Error, Result};

/// Factors of the default 240-bit ciphertext modulus. Each is `1 mod 4096`
/// (NTT-friendly up to N = 2048) and the product is `1 mod 65537`.
pub const DEFAULT_Q_PRIMES: [u64; RNS_PRIMES] =
    [0x0fff_ffff_ffff_c001, 0x0fff_ffff_fffe_8001, 0x0fff_ffff_fffd_8001, 0x0fff_fffc_7e31_f001];

/// Global arithmetic parameters shared by every cryptographic object.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    /// Ring degree N (power of two); also the number of plaintext slots.
    pub degree: usize,
    /// Ciphertext modulus as a product of distinct primes.
    pub q_primes: [u64; RNS_PRIMES],
    /// Plaintext modulus.
    pub t: u64,
    /// Quantization scale.
    pub delta: u64,
    /// Error standard deviation.
    pub sigma: f64,
    /// Largest client count the aggregation overflow budget admits.
    pub max_clients: usize,
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams::with_degree(2048)
    }
}

impl RingParams {
    /// Default moduli at a given degree (16..=2048 share the same q and t).
    pub fn with_degree(degree: usize) -> Self {
        let t = 65537;
        let delta = 1024;
        RingParams {
            degree,
            q_primes: DEFAULT_Q_PRIMES,
            t,
            delta,
            sigma: 3.2,
            max_clients: Self::k_max(t, delta),
        }
    }

    /// Small-degree preset for quick crypto checks.
    pub fn toy() -> Self {
        RingParams::with_degree(256)
    }

    /// Largest K with `K * delta < floor(t/2)`.
    pub fn k_max(t: u64, delta: u64) -> usize {
        ((t / 2 - 1) / delta) as usize
    }

    /// The composed ciphertext modulus.
    pub fn q(&self) -> Result<U256> {
        let mut q = U256::ONE;
        for &p in &self.q_primes {
            let w = q.mul_u64(p);
            if w[4] != 0 || p < 2 {
                return Err(Error::Params("q does not fit in 255 bits".into()));
            }
            q = U256([w[0], w[1], w[2], w[3]]);
        }
        Ok(q)
    }

    /// Checks every structural invariant; primality of t and of the factors
    /// of q is tested with Miller-Rabin.
    pub fn validate(&self) -> Result<()> {
        let n = self.degree as u64;
        if !self.degree.is_power_of_two() || self.degree < 2 {
            return Err(Error::Params(format!("degree {} is not a power of two", self.degree)));
        }
        let q = self.q()?;
        if q.bits() > 255 || q.bits() <= 64 {
            return Err(Error::Params("q must be between 65 and 255 bits".into()));
        }
        for (i, &p) in self.q_primes.iter().enumerate() {
            if p >= 1 << 62 || p % (2 * n) != 1 {
                return Err(Error::Params(format!("q factor {p:#x} is not 1 mod 2N or exceeds 62 bits")));
            }
            if !is_probable_prime_small(p) {
                return Err(Error::Params(format!("q factor {p:#x} is not prime")));
            }
            if self.q_primes[..i].contains(&p) || p == self.t {
                return Err(Error::Params(format!("q factor {p:#x} is repeated")));
            }
        }
        if q.div_rem_u64(self.t).1 != 1 {
            return Err(Error::Params("q is not 1 mod t".into()));
        }
        if self.t < 3 || self.t >= 1 << 62 || (self.t - 1) % (2 * n) != 0 {
            return Err(Error::Params("2N does not divide t-1".into()));
        }
        if !is_probable_prime_small(self.t) {
            return Err(Error::Params(format!("t = {} is not prime", self.t)));
        }
        if self.delta == 0 {
            return Err(Error::Params("delta must be positive".into()));
        }
        if self.max_clients == 0 || (self.max_clients as u64) * self.delta >= self.t / 2 {
            return Err(Error::Params(format!(
                "overflow budget violated: K_max={} * delta={} >= t/2",
                self.max_clients, self.delta
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Params("sigma must be positive".into()));
        }
        Ok(())
    }

    /// Number of symmetric-cipher elements one batch can carry.
    pub fn batch_capacity(&self, lanes: usize) -> usize {
        lanes * self.degree
    }

    /// 64-bit fingerprint of (N, q, t, delta, sigma), embedded in file headers.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha3_256::new();
        h.update(b"flhhe/params/v1");
        h.update((self.degree as u64).to_le_bytes());
        h.update(self.q().map(|q| q.to_le_bytes()).unwrap_or([0; 32]));
        h.update(self.t.to_le_bytes());
        h.update(self.delta.to_le_bytes());
        h.update(self.sigma.to_le_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().unwrap())
    }
}

const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn is_probable_prime_small(p: u64) -> bool {
    if p < 2 || p % 2 == 0 {
        return p == 2;
    }
    let m = super::SmallModulus::new(p);
    let d0 = p - 1;
    let s = d0.trailing_zeros();
    let d = U256::from_u64(d0 >> s);
    MR_BASES.iter().filter(|&&a| a % p != 0).all(|&a| {
        let mut x = m.pow(a % p, &d);
        if x == 1 || x == p - 1 {
            return true;
        }
        for _ in 1..s {
            x = m.mul(x, x);
            if x == p - 1 {
                return true;
            }
        }
        false
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_params_are_valid() {
        let p = RingParams::default();
        p.validate().unwrap();
        assert_eq!(p.q().unwrap().bits(), 240);
        assert_eq!(p.t, 65537);
        assert_eq!(p.max_clients, 31);
        for n in [16, 32, 64, 256, 1024] {
            RingParams::with_degree(n).validate().unwrap();
        }
    }

    #[test]
    fn invalid_params_are_rejected() {
        let mut p = RingParams::default();
        p.max_clients = 32;
        assert!(p.validate().is_err());
        let mut p = RingParams::default();
        p.degree = 1000;
        assert!(p.validate().is_err());
        let mut p = RingParams::default();
        p.degree = 1 << 16;
        assert!(p.validate().is_err());
        let mut p = RingParams::default();
        p.q_primes[3] += 2;
        assert!(p.validate().is_err());
        let mut p = RingParams::default();
        p.q_primes[1] = p.q_primes[0];
        assert!(p.validate().is_err());
    }

    #[test]
    fn primality_checks() {
        assert!(is_probable_prime_small(65537));
        assert!(!is_probable_prime_small(65535));
        assert!(is_probable_prime_small(0x3fffffffffff0001));
    }

    #[test]
    fn fingerprint_tracks_every_field() {
        let a = RingParams::default();
        let mut b = a.clone();
        b.delta = 512;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint(), RingParams::default().fingerprint());
    }
}
