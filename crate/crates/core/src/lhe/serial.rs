//! Ciphertext and key files: a 16-byte object header followed by
//! coefficient-domain polynomials.
//!
//! Header: magic `FLHE`, version (u16 LE), kind (u8), aux (u8), parameter
//! fingerprint (u64 LE). `aux` carries the depth for ciphertexts and the
//! digit count for relinearization keys.

use super::{Ciphertext, LheContext, PublicKey, RelinKey, SecretKey};
use crate::error::{Error, Result};
use crate::ring::CipherPoly;

pub const OBJECT_MAGIC: [u8; 4] = *b"FLHE";
pub const OBJECT_HEADER_BYTES: usize = 16;
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum ObjectKind {
    Ciphertext = 0,
    PublicKey = 1,
    RelinKey = 2,
    SecretKey = 3,
}

impl ObjectKind {
    fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(ObjectKind::Ciphertext),
            1 => Some(ObjectKind::PublicKey),
            2 => Some(ObjectKind::RelinKey),
            3 => Some(ObjectKind::SecretKey),
            _ => None,
        }
    }
}

impl LheContext {
    fn write_header(&self, kind: ObjectKind, aux: u8, out: &mut Vec<u8>) {
        out.extend_from_slice(&OBJECT_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(kind as u8);
        out.push(aux);
        out.extend_from_slice(&self.fingerprint().to_le_bytes());
    }

    /// Returns the `aux` byte.
    fn read_header(&self, bytes: &[u8], kind: ObjectKind) -> Result<u8> {
        if bytes.len() < OBJECT_HEADER_BYTES {
            return Err(Error::Format("truncated object header".into()));
        }
        if bytes[..4] != OBJECT_MAGIC {
            return Err(Error::Format("bad object magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported object version {version}")));
        }
        match ObjectKind::from_u8(bytes[6]) {
            Some(k) if k == kind => {}
            other => return Err(Error::Format(format!("expected {kind:?}, found {other:?}"))),
        }
        let fp = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
        if fp != self.fingerprint() {
            return Err(Error::ParamsMismatch);
        }
        Ok(bytes[7])
    }

    fn read_polys(&self, bytes: &[u8], count: usize) -> Result<Vec<CipherPoly>> {
        let rq = self.cipher_ring();
        let mut pos = OBJECT_HEADER_BYTES;
        let mut polys = Vec::with_capacity(count);
        for _ in 0..count {
            let (p, used) = rq.read_poly(&bytes[pos..])?;
            polys.push(p);
            pos += used;
        }
        if pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - pos)));
        }
        Ok(polys)
    }

    fn object_len(&self, polys: usize) -> usize {
        OBJECT_HEADER_BYTES + polys * self.cipher_ring().serialized_len()
    }

    pub fn ciphertext_len(&self) -> usize {
        self.object_len(2)
    }

    pub fn ciphertext_to_bytes(&self, ct: &Ciphertext) -> Vec<u8> {
        let rq = self.cipher_ring();
        let mut out = Vec::with_capacity(self.ciphertext_len());
        self.write_header(ObjectKind::Ciphertext, ct.depth.min(255) as u8, &mut out);
        rq.write_poly(&ct.c0, &mut out);
        rq.write_poly(&ct.c1, &mut out);
        out
    }

    /// The noise estimate is not carried on the wire; it restarts from the
    /// depth recorded in the header.
    pub fn ciphertext_from_bytes(&self, bytes: &[u8]) -> Result<Ciphertext> {
        let depth = self.read_header(bytes, ObjectKind::Ciphertext)?;
        let mut polys = self.read_polys(bytes, 2)?;
        let c1 = polys.pop().expect("two polys");
        let c0 = polys.pop().expect("two polys");
        Ok(Ciphertext { c0, c1, depth: depth as u32, noise_estimate_bits: f64::NAN })
    }

    pub fn public_key_to_bytes(&self, pk: &PublicKey) -> Vec<u8> {
        let rq = self.cipher_ring();
        let mut out = Vec::with_capacity(self.object_len(2));
        self.write_header(ObjectKind::PublicKey, 0, &mut out);
        rq.write_poly(&pk.b, &mut out);
        rq.write_poly(&pk.a, &mut out);
        out
    }

    pub fn public_key_from_bytes(&self, bytes: &[u8]) -> Result<PublicKey> {
        self.read_header(bytes, ObjectKind::PublicKey)?;
        let rq = self.cipher_ring();
        let mut polys = self.read_polys(bytes, 2)?.into_iter().map(|p| rq.to_domain(p, crate::ring::Domain::Ntt));
        let b = polys.next().expect("two polys");
        let a = polys.next().expect("two polys");
        Ok(PublicKey { b, a })
    }

    pub fn relin_key_to_bytes(&self, rlk: &RelinKey) -> Vec<u8> {
        let rq = self.cipher_ring();
        let mut out = Vec::with_capacity(self.object_len(2 * rlk.parts.len()));
        self.write_header(ObjectKind::RelinKey, rlk.parts.len() as u8, &mut out);
        for (b, a) in &rlk.parts {
            rq.write_poly(b, &mut out);
            rq.write_poly(a, &mut out);
        }
        out
    }

    pub fn relin_key_from_bytes(&self, bytes: &[u8]) -> Result<RelinKey> {
        let digits = self.read_header(bytes, ObjectKind::RelinKey)? as usize;
        if digits != self.relin_digits() {
            return Err(Error::ParamsMismatch);
        }
        let rq = self.cipher_ring();
        let polys: Vec<_> =
            self.read_polys(bytes, 2 * digits)?.into_iter().map(|p| rq.to_domain(p, crate::ring::Domain::Ntt)).collect();
        let parts = polys.chunks_exact(2).map(|c| (c[0].clone(), c[1].clone())).collect();
        Ok(self.relin_key_from_parts(parts))
    }

    pub fn secret_key_to_bytes(&self, sk: &SecretKey) -> Vec<u8> {
        let rq = self.cipher_ring();
        let mut out = Vec::with_capacity(self.object_len(1));
        self.write_header(ObjectKind::SecretKey, 0, &mut out);
        rq.write_poly(&sk.s, &mut out);
        out
    }

    pub fn secret_key_from_bytes(&self, bytes: &[u8]) -> Result<SecretKey> {
        self.read_header(bytes, ObjectKind::SecretKey)?;
        let rq = self.cipher_ring();
        let s = self.read_polys(bytes, 1)?.pop().expect("one poly");
        Ok(SecretKey { s: rq.to_domain(s, crate::ring::Domain::Ntt) })
    }
}
