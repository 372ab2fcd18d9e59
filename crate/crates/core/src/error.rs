use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in `{field}`: expected {expected}, found {found}")]
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("non-finite value in `{field}` at index {index}")]
    NonFinite { field: &'static str, index: usize },

    #[error("non-finite hidden state at step {step}")]
    NonFiniteState { step: usize },

    #[error("sequence length {len} exceeds the materialization cap of {cap}")]
    SizeLimit { len: usize, cap: usize },

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("chunk schedule mismatch: {0}")]
    Schedule(String),

    #[error("malformed cache file: {0}")]
    CacheFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn check_len(field: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            field,
            expected,
            found,
        })
    }
}
