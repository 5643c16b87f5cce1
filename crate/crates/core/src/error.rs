use thiserror::Error;

pub type Result<T, E = EpmError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EpmError {
    #[error("invalid coil: {0}")]
    InvalidCoil(String),

    #[error("air gap is zero with nonzero net MMF ({net_mmf} A-turns); use the contact force path")]
    SingularGap { net_mmf: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("underdetermined fit: {points} data points for {params} parameters")]
    UnderdeterminedFit { points: usize, params: usize },

    #[error("fit did not converge after {iterations} iterations (best rmse {rmse:.6e})")]
    NonConvergence {
        iterations: usize,
        best: Vec<f64>,
        rmse: f64,
    },

    #[error("coincident dipoles at separation {0:.3e} m")]
    SingularSeparation(f64),

    #[error("invalid transfer mode: {0}")]
    InvalidMode(String),

    #[error("no flow path: {0}")]
    NoPath(String),

    #[error("{quantity} = {value} exceeds spring travel {limit}")]
    OutOfTravel {
        quantity: &'static str,
        value: f64,
        limit: f64,
    },
}

pub(crate) fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(EpmError::InvalidInput(msg()))
    }
}
