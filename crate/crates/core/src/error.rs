use crate::netgraph::NodeId;

/// Errors surfaced by the role-assignment toolkit.
#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum Error {
    #[error("no connected instance found after {attempts} attempts (density too low?)")]
    FailsConnectivity { attempts: usize },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("role assignment covers {got} nodes, graph has {expected}")]
    PartialAssignment { expected: usize, got: usize },
    #[error("role assignment is not a valid r-WCDS")]
    InvalidAssignment,
    #[error("malformed spanning tree: {0}")]
    MalformedTree(String),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("LP solver failure: {0}")]
    NumericalFailure(String),
    #[error("fixed roles admit no valid extension")]
    InfeasibleFixed,
    #[error("enumeration limited to {limit} nodes, graph has {n}")]
    TooLarge { n: usize, limit: usize },
    #[error("at least one channel is required")]
    NoChannels,
    #[error("simulation reached {time} without converging")]
    SimBudgetExceeded { time: f64 },
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
