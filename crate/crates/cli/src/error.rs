use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error(transparent)]
    Core(#[from] sslab::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status: 2 for anything wrong with the request, 3 when
    /// training diverged, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Spec(_) => 2,
            Error::Core(sslab::Error::Divergence { .. }) => 3,
            Error::Core(sslab::Error::Config(_)) => 2,
            _ => 1,
        }
    }
}
