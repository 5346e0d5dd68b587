use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] localscore_core::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("no usable observations: {0}")]
    Empty(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("under-identified: {instruments} instruments for {treatments} treatments after dropping collinear columns")]
    Underidentified { instruments: usize, treatments: usize },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
}

pub type Result<T> = std::result::Result<T, Error>;
