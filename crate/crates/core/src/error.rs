use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("network generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },

    #[error("brute-force MWIS refused: {links} links exceeds the enumeration bound of {bound}")]
    OracleBound { links: usize, bound: usize },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SimError>;
