//! Federated averaging with hybrid homomorphic encryption.
//!
//! Clients quantize their model weights, mask them with a keystream from a
//! low-depth stream cipher over `Z_t` and upload the short symmetric
//! ciphertexts. The server, holding only the HE-encrypted cipher keys,
//! regenerates the keystream homomorphically, unmasks the uploads into HE
//! ciphertexts and sums them blind. Clients decrypt the sum and divide.
//!
//! Modules, bottom-up:
//! - [`ring`]: `Z_m[X]/(X^N+1)` arithmetic and the negacyclic NTT.
//! - [`lhe`]: leveled BFV-style scheme with slot batching.
//! - [`stream`]: the depth-3 stream cipher over `Z_t`.
//! - [`transcipher`]: homomorphic keystream evaluation and unmasking.
//! - [`quantizer`]: fixed-point bridge between reals and `Z_t`.
//! - [`mlp`]: the 784-32-10 bias-free network and MNIST ingestion.
//! - [`proto`]: key dealer, clients and server over a byte-counting transport.

pub mod error;
pub mod lhe;
pub mod mlp;
pub mod proto;
pub mod quantizer;
pub mod ring;
pub mod stream;
pub mod transcipher;

pub use error::{Error, Result};
pub use lhe::{Ciphertext, LheContext, PublicKey, RelinKey, SecretKey, SlotVector};
pub use mlp::ModelWeights;
pub use proto::{CommLedger, ExperimentConfig, Mode, Report};
pub use quantizer::QuantizedWeights;
pub use ring::RingParams;
pub use stream::{Nonce, SymCiphertext, SymKey};
