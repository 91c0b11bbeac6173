use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("vertex id {id} out of range for graph with {n} vertices (edge ({u}, {v}))")]
    VertexOutOfRange { u: usize, v: usize, id: usize, n: usize },

    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),

    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(usize, usize),

    #[error("invalid bipartite expander: {0}")]
    InvalidExpander(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("graph is not regular")]
    NotRegular,

    #[error("graph has degree 0; spectral bounds need k >= 1")]
    ZeroDegree,

    #[error("eigensolver did not converge after {sweeps} sweeps (off-diagonal norm {residual:e})")]
    NoConvergence { sweeps: usize, residual: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("brute-force oracle limited to 1..={max} vertices, got {n}")]
    OracleSize { n: usize, max: usize },

    #[error("no nonempty subset with |A| <= n/2 exists for n = {0}")]
    NoAdmissibleSubset(usize),

    #[error("graph is disconnected")]
    Disconnected,

    #[error("invalid generator config: {0}")]
    InvalidConfig(String),

    #[error("matching budget exhausted: {attempts} attempts for matching {matching} (connectivity resamples {resamples})")]
    MatchingBudget { matching: usize, attempts: usize, resamples: usize },

    #[error("connectivity budget exhausted after {resamples} whole-graph resamples")]
    ConnectivityBudget { resamples: usize },

    #[error("no Ramanujan graph in {attempts} attempts (best lambda {best_lambda:?})")]
    RamanujanBudget { attempts: usize, best_lambda: Option<f64> },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("all nodes are masked")]
    AllMasked,

    #[error("non-finite activations after layer {layer}")]
    NonFinite { layer: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
}

impl Error {
    /// Retry or attempt budget exhausted during randomized construction.
    pub fn is_budget(&self) -> bool {
        matches!(
            self,
            Error::MatchingBudget { .. } | Error::ConnectivityBudget { .. } | Error::RamanujanBudget { .. }
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. } | Error::NonFinite { .. } | Error::Diverged { .. }
        )
    }
}
