//! Exact arithmetic in `R_m = Z_m[X]/(X^N + 1)` for the ciphertext modulus `q`
//! and the plaintext modulus `t`.

mod modulus;
mod ntt;
mod params;
mod rns;
mod sample;
mod serial;

pub use modulus::{Modulus, SmallModulus, U256, WideModulus};
pub use ntt::{find_primitive_root, NttTables};
pub(crate) use ntt::bit_reverse;
pub use params::{RingParams, DEFAULT_Q_PRIMES};
pub use rns::{RnsElem, RnsModulus, RNS_PRIMES};
pub use serial::POLY_MAGIC;

use crate::error::{Error, Result};

/// Identifies which modulus a polynomial lives under; also the serialized modulus id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ModulusId(pub u8);

impl ModulusId {
    pub const CIPHER: ModulusId = ModulusId(0);
    pub const PLAIN: ModulusId = ModulusId(1);
    /// Auxiliary primes used for exact tensoring start here.
    pub const AUX_BASE: u8 = 16;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Domain {
    Coeff,
    Ntt,
}

/// Length-N residue vector tagged with its modulus and representation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Poly<M: Modulus> {
    coeffs: Vec<M::Elem>,
    domain: Domain,
    modulus: ModulusId,
}

impl<M: Modulus> Poly<M> {
    pub fn coeffs(&self) -> &[M::Elem] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [M::Elem] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<M::Elem> {
        self.coeffs
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn modulus_id(&self) -> ModulusId {
        self.modulus
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len()
    }
}

/// Modulus plus NTT tables for one ring `Z_m[X]/(X^N+1)`.
#[derive(Clone, Debug)]
pub struct RingContext<M: Modulus> {
    modulus: M,
    id: ModulusId,
    ntt: NttTables<M>,
}

pub type CipherRing = RingContext<RnsModulus>;
pub type PlainRing = RingContext<SmallModulus>;
pub type CipherPoly = Poly<RnsModulus>;
pub type PlainPoly = Poly<SmallModulus>;

impl<M: Modulus> RingContext<M> {
    /// Fails when `m - 1` is not divisible by `2N`.
    pub fn new(modulus: M, degree: usize, id: ModulusId) -> Result<Self> {
        let ntt = NttTables::new(&modulus, degree)?;
        Ok(RingContext { modulus, id, ntt })
    }

    pub fn modulus(&self) -> &M {
        &self.modulus
    }

    pub fn id(&self) -> ModulusId {
        self.id
    }

    pub fn degree(&self) -> usize {
        self.ntt.degree()
    }

    pub fn ntt_tables(&self) -> &NttTables<M> {
        &self.ntt
    }

    pub fn zero(&self, domain: Domain) -> Poly<M> {
        Poly { coeffs: vec![M::Elem::default(); self.degree()], domain, modulus: self.id }
    }

    /// Wraps already-reduced coefficients.
    pub fn from_coeffs(&self, coeffs: Vec<M::Elem>, domain: Domain) -> Result<Poly<M>> {
        if coeffs.len() != self.degree() {
            return Err(Error::Length { expected: self.degree(), actual: coeffs.len() });
        }
        Ok(Poly { coeffs, domain, modulus: self.id })
    }

    /// Reduces signed integers into the ring (coefficient domain).
    pub fn from_signed(&self, values: &[i64]) -> Result<Poly<M>> {
        let coeffs = values.iter().map(|&v| self.modulus.from_i64(v)).collect();
        self.from_coeffs(coeffs, Domain::Coeff)
    }

    /// The monomial `c * X^k` (coefficient domain), `k < N`.
    pub fn monomial(&self, k: usize, c: M::Elem) -> Poly<M> {
        let mut p = self.zero(Domain::Coeff);
        p.coeffs[k] = c;
        p
    }

    pub fn check(&self, p: &Poly<M>) -> Result<()> {
        if p.modulus != self.id {
            return Err(Error::ModulusMismatch { expected: self.id.0, actual: p.modulus.0 });
        }
        if p.coeffs.len() != self.degree() {
            return Err(Error::Length { expected: self.degree(), actual: p.coeffs.len() });
        }
        Ok(())
    }

    fn check_pair(&self, a: &Poly<M>, b: &Poly<M>) -> Result<()> {
        self.check(a)?;
        self.check(b)?;
        if a.domain != b.domain {
            return Err(Error::DomainMismatch);
        }
        Ok(())
    }

    pub fn ntt_forward(&self, mut p: Poly<M>) -> Result<Poly<M>> {
        self.check(&p)?;
        if p.domain != Domain::Coeff {
            return Err(Error::DomainMismatch);
        }
        self.ntt.forward(&mut p.coeffs);
        p.domain = Domain::Ntt;
        Ok(p)
    }

    pub fn ntt_inverse(&self, mut p: Poly<M>) -> Result<Poly<M>> {
        self.check(&p)?;
        if p.domain != Domain::Ntt {
            return Err(Error::DomainMismatch);
        }
        self.ntt.inverse(&mut p.coeffs);
        p.domain = Domain::Coeff;
        Ok(p)
    }

    /// Moves `p` into `domain`, transforming only if needed.
    pub fn to_domain(&self, mut p: Poly<M>, domain: Domain) -> Poly<M> {
        debug_assert_eq!(p.modulus, self.id);
        match (p.domain, domain) {
            (Domain::Coeff, Domain::Ntt) => self.ntt.forward(&mut p.coeffs),
            (Domain::Ntt, Domain::Coeff) => self.ntt.inverse(&mut p.coeffs),
            _ => {}
        }
        p.domain = domain;
        p
    }

    pub fn add(&self, a: &Poly<M>, b: &Poly<M>) -> Result<Poly<M>> {
        self.check_pair(a, b)?;
        let mut out = a.clone();
        self.add_assign(&mut out, b);
        Ok(out)
    }

    pub fn sub(&self, a: &Poly<M>, b: &Poly<M>) -> Result<Poly<M>> {
        self.check_pair(a, b)?;
        let mut out = a.clone();
        self.sub_assign(&mut out, b);
        Ok(out)
    }

    pub fn neg(&self, a: &Poly<M>) -> Result<Poly<M>> {
        self.check(a)?;
        let mut out = a.clone();
        for c in out.coeffs.iter_mut() {
            *c = self.modulus.neg(*c);
        }
        Ok(out)
    }

    /// Ring product. Coefficient-domain inputs give a coefficient-domain
    /// result; NTT-domain inputs are multiplied pointwise.
    pub fn mul(&self, a: &Poly<M>, b: &Poly<M>) -> Result<Poly<M>> {
        self.check_pair(a, b)?;
        match a.domain {
            Domain::Ntt => {
                let mut out = a.clone();
                self.mul_assign_pointwise(&mut out, b);
                Ok(out)
            }
            Domain::Coeff => {
                let mut fa = self.to_domain(a.clone(), Domain::Ntt);
                let fb = self.to_domain(b.clone(), Domain::Ntt);
                self.mul_assign_pointwise(&mut fa, &fb);
                Ok(self.to_domain(fa, Domain::Coeff))
            }
        }
    }

    /// Multiplies every coefficient by a scalar.
    pub fn scalar_mul(&self, a: &Poly<M>, c: M::Elem) -> Poly<M> {
        let cm = self.modulus.to_mont(c);
        let mut out = a.clone();
        for x in out.coeffs.iter_mut() {
            *x = self.modulus.mul_mont(*x, cm);
        }
        out
    }

    pub(crate) fn add_assign(&self, a: &mut Poly<M>, b: &Poly<M>) {
        debug_assert_eq!(a.domain, b.domain);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = self.modulus.add(*x, *y);
        }
    }

    pub(crate) fn sub_assign(&self, a: &mut Poly<M>, b: &Poly<M>) {
        debug_assert_eq!(a.domain, b.domain);
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = self.modulus.sub(*x, *y);
        }
    }

    pub(crate) fn mul_assign_pointwise(&self, a: &mut Poly<M>, b: &Poly<M>) {
        for (x, y) in a.coeffs.iter_mut().zip(&b.coeffs) {
            *x = self.modulus.mul(*x, *y);
        }
    }

    /// `a ⊙ b` where `b_mont` holds Montgomery-form values.
    pub(crate) fn mul_assign_pointwise_mont(&self, a: &mut Poly<M>, b_mont: &[M::Elem]) {
        for (x, y) in a.coeffs.iter_mut().zip(b_mont) {
            *x = self.modulus.mul_mont(*x, *y);
        }
    }

    /// `acc += a ⊙ b` with `b_mont` in Montgomery form.
    pub(crate) fn fma_pointwise_mont(&self, acc: &mut Poly<M>, a: &Poly<M>, b_mont: &[M::Elem]) {
        for ((x, y), z) in acc.coeffs.iter_mut().zip(&a.coeffs).zip(b_mont) {
            *x = self.modulus.add(*x, self.modulus.mul_mont(*y, *z));
        }
    }

    /// Montgomery-form copy of the coefficients, for repeated multiplication.
    pub(crate) fn mont_form(&self, p: &Poly<M>) -> Vec<M::Elem> {
        p.coeffs.iter().map(|&c| self.modulus.to_mont(c)).collect()
    }
}

impl RingContext<SmallModulus> {
    /// Centered representatives in `(-m/2, m/2]`.
    pub fn centered(&self, p: &Poly<SmallModulus>) -> Vec<i64> {
        p.coeffs.iter().map(|&c| self.modulus.centered(c)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    pub(crate) fn small_ring(n: usize) -> PlainRing {
        RingContext::new(SmallModulus::new(65537), n, ModulusId::PLAIN).unwrap()
    }

    pub(crate) fn wide_ring(n: usize) -> CipherRing {
        RingContext::new(RnsModulus::new(DEFAULT_Q_PRIMES), n, ModulusId::CIPHER).unwrap()
    }

    fn to_big(x: &U256) -> BigInt {
        BigInt::from(num_bigint::BigUint::from_bytes_le(&x.to_le_bytes()))
    }

    /// Comparisons start at the most significant limb.
    #[test]
    fn u256_orders_by_top_limb() {
        assert!(U256([0, 0, 0, 1]) > U256([u64::MAX, u64::MAX, u64::MAX, 0]));
        assert!(U256([2, 5, 0, 0]) < U256([1, 6, 0, 0]));
        assert_eq!(U256([3, 0, 0, 9]).cmp(&U256([3, 0, 0, 9])), std::cmp::Ordering::Equal);
    }

    /// O(N^2) negacyclic product over the integers, reduced at the end.
    fn schoolbook(a: &[BigInt], b: &[BigInt], m: &BigInt) -> Vec<BigInt> {
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

    fn check_small_product(n: usize, seed: u64) {
        let r = small_ring(n);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = r.sample_uniform(&mut rng);
        let b = r.sample_uniform(&mut rng);
        let got = r.mul(&a, &b).unwrap();
        let big = |p: &PlainPoly| p.coeffs().iter().map(|&c| BigInt::from(c)).collect::<Vec<_>>();
        let want = schoolbook(&big(&a), &big(&b), &BigInt::from(65537));
        let got: Vec<BigInt> = got.coeffs().iter().map(|&c| BigInt::from(c)).collect();
        assert_eq!(got, want);
    }

    fn check_wide_product(n: usize, seed: u64) {
        let r = wide_ring(n);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let a = r.sample_uniform(&mut rng);
        let b = r.sample_uniform(&mut rng);
        let got = r.mul(&a, &b).unwrap();
        let big = |p: &CipherPoly| p.coeffs().iter().map(|c| to_big(&r.modulus().compose(c))).collect::<Vec<_>>();
        let want = schoolbook(&big(&a), &big(&b), &to_big(r.modulus().value()));
        assert_eq!(big(&got), want);
    }

    #[test]
    fn ntt_product_matches_schoolbook_n16_50_pairs() {
        for seed in 0..50 {
            check_small_product(16, seed);
            check_wide_product(16, 1000 + seed);
        }
    }

    #[test]
    fn ntt_product_matches_schoolbook_n32_n64() {
        for seed in 0..10 {
            check_small_product(32, seed);
            check_wide_product(32, seed);
            check_small_product(64, seed);
            check_wide_product(64, seed);
        }
    }

    #[test]
    fn ntt_output_index_is_evaluation_at_odd_root_power() {
        let n = 16;
        let r = small_ring(n);
        let m = r.modulus();
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let p = r.sample_uniform(&mut rng);
        let f = r.ntt_forward(p.clone()).unwrap();
        let psi = r.ntt_tables().psi();
        for k in 0..n {
            let x = m.pow(psi, &U256::from_u64((2 * bit_reverse(k, 4) + 1) as u64));
            let mut acc = 0u64;
            for &c in p.coeffs().iter().rev() {
                acc = m.add(m.mul(acc, x), c);
            }
            assert_eq!(f.coeffs()[k], acc);
        }
    }

    #[test]
    fn zero_transforms_to_zero() {
        let r = wide_ring(64);
        let z = r.zero(Domain::Coeff);
        assert_eq!(r.ntt_forward(z.clone()).unwrap().coeffs(), z.coeffs());
    }

    #[test]
    fn negacyclic_identities() {
        for n in [16usize, 32, 256] {
            let r = wide_ring(n);
            let mut rng = ChaCha20Rng::seed_from_u64(n as u64);
            let a = r.sample_uniform(&mut rng);
            let one = r.monomial(0, r.modulus().one());
            assert_eq!(r.mul(&a, &one).unwrap(), a);
            let x = r.monomial(1, r.modulus().one());
            let xn1 = r.monomial(n - 1, r.modulus().one());
            let prod = r.mul(&x, &xn1).unwrap();
            assert_eq!(prod, r.monomial(0, r.modulus().minus_one()));
        }
    }

    #[test]
    fn modulus_without_root_is_rejected() {
        // 65537 - 1 = 2^16, so N = 2^16 needs a 2^17-th root.
        let err = RingContext::new(SmallModulus::new(65537), 1 << 16, ModulusId::PLAIN).unwrap_err();
        assert!(matches!(err, Error::Params(_)));
        // 97 - 1 = 96 = 32 * 3: no 64th root.
        assert!(RingContext::new(SmallModulus::new(97), 32, ModulusId::PLAIN).is_err());
    }

    #[test]
    fn mismatched_operands_are_errors() {
        let a = small_ring(16).zero(Domain::Coeff);
        let b = small_ring(32).zero(Domain::Coeff);
        assert!(matches!(small_ring(16).add(&a, &b), Err(Error::Length { .. })));
        let mut c = small_ring(16).zero(Domain::Coeff);
        c.modulus = ModulusId::CIPHER;
        assert!(matches!(small_ring(16).mul(&a, &c), Err(Error::ModulusMismatch { .. })));
        let d = small_ring(16).zero(Domain::Ntt);
        assert!(matches!(small_ring(16).sub(&a, &d), Err(Error::DomainMismatch)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn ntt_roundtrip_is_identity(seed in any::<u64>(), log_n in 4u32..=7) {
            let n = 1usize << log_n;
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let r = wide_ring(n);
            let p = r.sample_uniform(&mut rng);
            prop_assert_eq!(r.ntt_inverse(r.ntt_forward(p.clone()).unwrap()).unwrap(), p);
            let s = small_ring(n);
            let p = s.sample_uniform(&mut rng);
            prop_assert_eq!(s.ntt_inverse(s.ntt_forward(p.clone()).unwrap()).unwrap(), p);
        }

        #[test]
        fn ring_axioms_hold(seed in any::<u64>()) {
            let r = wide_ring(32);
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let a = r.sample_uniform(&mut rng);
            let b = r.sample_uniform(&mut rng);
            let c = r.sample_uniform(&mut rng);
            let ab_c = r.mul(&r.mul(&a, &b).unwrap(), &c).unwrap();
            let a_bc = r.mul(&a, &r.mul(&b, &c).unwrap()).unwrap();
            prop_assert_eq!(ab_c, a_bc);
            let lhs = r.mul(&a, &r.add(&b, &c).unwrap()).unwrap();
            let rhs = r.add(&r.mul(&a, &b).unwrap(), &r.mul(&a, &c).unwrap()).unwrap();
            prop_assert_eq!(lhs, rhs);
            let z = r.add(&a, &r.neg(&a).unwrap()).unwrap();
            prop_assert_eq!(z, r.zero(Domain::Coeff));
        }
    }
}
