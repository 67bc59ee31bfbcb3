//! Bit-exact polynomial encoding.
//!
//! Layout (8-byte header, then N little-endian words, coefficient domain):
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 0..2  | magic `b"PY"`                           |
//! | 2     | log2 N                                  |
//! | 3     | modulus id                              |
//! | 4     | word width in bytes                     |
//! | 5..8  | zero                                    |

use super::{Domain, Modulus, Poly, RingContext};
use crate::error::{Error, Result};

pub const POLY_MAGIC: [u8; 2] = *b"PY";
pub const POLY_HEADER_BYTES: usize = 8;

impl<M: Modulus> RingContext<M> {
    /// Exact encoded size of one polynomial.
    pub fn serialized_len(&self) -> usize {
        POLY_HEADER_BYTES + self.degree() * self.modulus().word_bytes()
    }

    /// Appends the encoding of `p`; NTT-domain input is converted first.
    pub fn write_poly(&self, p: &Poly<M>, out: &mut Vec<u8>) {
        let p = match p.domain() {
            Domain::Coeff => std::borrow::Cow::Borrowed(p),
            Domain::Ntt => std::borrow::Cow::Owned(self.to_domain(p.clone(), Domain::Coeff)),
        };
        out.reserve(self.serialized_len());
        out.extend_from_slice(&POLY_MAGIC);
        out.push(self.degree().trailing_zeros() as u8);
        out.push(self.id().0);
        out.push(self.modulus().word_bytes() as u8);
        out.extend_from_slice(&[0, 0, 0]);
        for &c in p.coeffs() {
            self.modulus().write_le(c, out);
        }
    }

    pub fn poly_to_bytes(&self, p: &Poly<M>) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_poly(p, &mut out);
        out
    }

    /// Decodes one polynomial from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn read_poly(&self, bytes: &[u8]) -> Result<(Poly<M>, usize)> {
        let len = self.serialized_len();
        if bytes.len() < len {
            return Err(Error::Format(format!("polynomial truncated: {} < {len} bytes", bytes.len())));
        }
        if bytes[..2] != POLY_MAGIC {
            return Err(Error::Format("bad polynomial magic".into()));
        }
        if bytes[2] as u32 != self.degree().trailing_zeros() {
            return Err(Error::Format(format!("degree 2^{} does not match ring", bytes[2])));
        }
        if bytes[3] != self.id().0 {
            return Err(Error::ModulusMismatch { expected: self.id().0, actual: bytes[3] });
        }
        let w = self.modulus().word_bytes();
        if bytes[4] as usize != w || bytes[5..8] != [0, 0, 0] {
            return Err(Error::Format("bad polynomial header".into()));
        }
        let coeffs = bytes[POLY_HEADER_BYTES..len]
            .chunks_exact(w)
            .map(|c| self.modulus().read_le(c).ok_or_else(|| Error::Format("non-canonical coefficient".into())))
            .collect::<Result<Vec<_>>>()?;
        Ok((self.from_coeffs(coeffs, Domain::Coeff)?, len))
    }
}
