use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid {name} = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// The covariance matrix does not describe a physical Gaussian state.
    #[error("unphysical symplectic spectrum: {detail}")]
    Unphysical { detail: String },

    #[error("root not bracketed: f({lo}) = {f_lo}, f({hi}) = {f_hi}")]
    NotBracketed {
        lo: f64,
        hi: f64,
        f_lo: f64,
        f_hi: f64,
    },

    /// Target electronic noise cannot be reached by LO gain alone at this efficiency.
    #[error("target electronic noise {n_el_target} is not positive at eta = {eta}; the efficiency must also be tuned")]
    InfeasibleAtFixedEfficiency { n_el_target: f64, eta: f64 },

    #[error("estimation degenerate: {0}")]
    Degenerate(String),

    #[error("length mismatch: {what} has {got} entries, expected {expected}")]
    LengthMismatch {
        what: &'static str,
        got: usize,
        expected: usize,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, value: f64, reason: &'static str) -> Error {
    Error::InvalidParameter { name, value, reason }
}
