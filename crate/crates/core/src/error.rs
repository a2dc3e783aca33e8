use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("gram matrix not positive definite after jitter {jitter:e}")]
    NotPositiveDefinite { jitter: f64 },
    #[error("negative posterior variance {0:e}")]
    NegativeVariance(f64),
    #[error("input matrix is rank deficient at {0}")]
    RankDeficient(String),
    #[error("tube exits the constraint box at knot {knot} (state {coord})")]
    TubeExitsBox { knot: usize, coord: usize },
    #[error("plan leaves the workspace: {0}")]
    Workspace(String),
    #[error("certificate infeasible: {0}")]
    Infeasible(String),
    #[error("planner: {0}")]
    Planner(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit status for the command-line tool: 2 for an infeasible
    /// certificate, 3 when a plan or tube leaves the workspace, 4 for bad
    /// configuration or input files, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Infeasible(_) => 2,
            Error::TubeExitsBox { .. } | Error::Workspace(_) => 3,
            Error::Config(_) | Error::Json(_) | Error::Csv(_) => 4,
            _ => 1,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { what, expected, got })
    }
}

pub(crate) fn check_finite(what: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
