use thiserror::Error;

/// Errors produced by the valuation engines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    /// The rate search interval does not bracket a solution.
    #[error("IRR not bracketed: present value minus market value keeps one sign over [{lo}, {hi}]")]
    IrrNotBracketed { lo: f64, hi: f64 },

    /// Present value is not monotone in the rate (mixed-sign expected cash
    /// flows), so the IRR is unidentified. The first root found is attached.
    #[error("IRR ambiguous: present value is not monotone in the rate; first root found at {first_root}")]
    IrrAmbiguous { first_root: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// Violation of a relation the algorithms are supposed to guarantee.
    #[error("internal consistency: {0}")]
    Inconsistent(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }
}
