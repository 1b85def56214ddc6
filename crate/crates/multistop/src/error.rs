use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("tree has {nodes} nodes, exceeding the cap of {cap}")]
    TreeTooLarge { nodes: usize, cap: usize },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("node {leaf} is not a descendant of node {start}")]
    NotUnderStart { start: usize, leaf: usize },

    #[error("invalid reward: {0}")]
    InvalidReward(String),

    #[error("invalid stopping rule: {0}")]
    InvalidRule(String),

    #[error("stopping rules start at different nodes: {0} vs {1}")]
    MismatchedStart(usize, usize),

    #[error("lambda must lie strictly inside (0,1), got {0}")]
    InvalidLambda(f64),

    #[error("nodes {0} and {1} do not lie on a common root path")]
    IncomparablePair(usize, usize),

    #[error("psi is undefined for the comparable pair ({0}, {1})")]
    MissingPsi(usize, usize),

    #[error("psi({0}, {1}) = {2} violates nonnegativity")]
    NegativePsi(usize, usize, f64),

    #[error("enumeration budget exceeded: {required} {unit} required, budget is {budget}")]
    BudgetExceeded {
        required: u128,
        budget: u128,
        unit: &'static str,
    },

    #[error("invalid market parameters: {0}")]
    InvalidParams(String),
}
