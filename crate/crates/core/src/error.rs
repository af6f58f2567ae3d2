use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("linear solve did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    Solver { residual: f64, iterations: usize },

    #[error("infeasible conditioning: {accepted} of {attempts} prior draws fell inside the ball")]
    InfeasibleConditioning { accepted: usize, attempts: usize },

    #[error("pCN acceptance rate {rate:.4} below floor (final step {step:.3e}, {accepted}/{proposals} accepted)")]
    Tuning {
        rate: f64,
        step: f64,
        accepted: usize,
        proposals: usize,
    },

    #[error("variational optimisation diverged at step {step} (last ELBO {last:?})")]
    Optimization {
        step: usize,
        last: Option<f64>,
        trace: Vec<f64>,
    },

    #[error("degenerate stability fit: {0}")]
    DegenerateFit(String),

    #[error("ill-posed rate constants: 2*alpha + 2*kappa - d = {0} <= 0")]
    IllPosedConstants(f64),

    #[error("no feasible rate on the search box; binding constraints: {binding:?}")]
    Infeasible { binding: Vec<String> },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
