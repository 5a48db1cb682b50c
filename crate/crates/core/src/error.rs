use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failures raised by the numerical pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("delay {delay:.6e} s lies outside the unambiguous window [0, {window:.6e}] s")]
    AmbiguousDelay { delay: f64, window: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parameters not identifiable: {0}")]
    Unidentifiable(String),

    #[error("{stage}: found {found} spectral peaks, expected {expected}")]
    PeakDeficit {
        stage: &'static str,
        found: usize,
        expected: usize,
    },

    #[error("{stage}: path energies within 1% of each other, labels are ambiguous")]
    MatchingAmbiguous { stage: &'static str },

    #[error("gain regression ill-conditioned (condition number {0:.3e})")]
    GainIllConditioned(f64),

    #[error("direction cosines leave 1 - g^2 - s^2 = {0:.3e}")]
    InvalidCosines(f64),

    #[error("fusion impossible: {0}")]
    FusionImpossible(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}
