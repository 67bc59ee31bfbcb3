use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("modulus mismatch: expected id {expected}, got {actual}")]
    ModulusMismatch { expected: u8, actual: u8 },
    #[error("length mismatch: expected {expected}, got {actual}")]
    Length { expected: usize, actual: usize },
    #[error("polynomial domain mismatch")]
    DomainMismatch,
    #[error("ciphertexts were produced under different parameters")]
    ParamsMismatch,
    #[error("decryption failure: {0}")]
    DecryptionFailure(String),
    #[error("message of {len} elements exceeds one batch of {capacity}")]
    BatchOverflow { len: usize, capacity: usize },
    #[error("client count {clients} outside overflow budget 1..={max}")]
    OverflowBudget { clients: usize, max: usize },
    #[error("nonce reused for client {client}")]
    NonceReuse { client: usize },
    #[error("lane mismatch: {left} vs {right}")]
    LaneMismatch { left: usize, right: usize },
    #[error("malformed data: {0}")]
    Format(String),
    #[error("empty training partition")]
    EmptyPartition,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the cryptographic layer (noise overflow and the like).
    pub fn is_crypto(&self) -> bool {
        matches!(self, Error::DecryptionFailure(_) | Error::ParamsMismatch | Error::LaneMismatch { .. })
    }
}
