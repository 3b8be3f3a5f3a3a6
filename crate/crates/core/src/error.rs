use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Positions are not strictly increasing at `index`.
    #[error("positions not strictly increasing at index {index}")]
    Ordering { index: usize },

    #[error("shape mismatch: {what} (expected {expected}, found {found})")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    Parameter {
        name: &'static str,
        reason: &'static str,
    },

    /// `y^2 |phi0(y)|` keeps growing towards the edge of the domain.
    #[error("decay condition violated: y^2|phi0| = {edge:e} at the domain edge vs {interior:e} at half width")]
    Decay { edge: f64, interior: f64 },

    /// A particle with nonzero label reached the origin.
    #[error("flow map degenerate at particle {index}")]
    Degenerate { index: usize },

    /// Flow derivative lost positivity or a value became non-finite.
    #[error("flow invariant violated at particle {index}: {reason}")]
    Invariant { index: usize, reason: &'static str },

    #[error("usage error: {0}")]
    Usage(&'static str),
}
