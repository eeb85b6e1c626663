use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("SMILES parse error at {pos}: {msg}")]
    Parse { pos: usize, msg: String },
    #[error("template error: {0}")]
    Template(String),
    #[error("pattern error: {0}")]
    Pattern(String),
    #[error("stock line {line}: {msg}")]
    Stock { line: usize, msg: String },
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T, E = ChemError> = std::result::Result<T, E>;
