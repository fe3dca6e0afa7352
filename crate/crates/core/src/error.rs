use thiserror::Error;

use crate::engine::ArbitrageReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A market failed structural validation. Each entry is `(path, message)`
    /// where `path` is a JSON-pointer-like location such as `/assets/0/price`.
    #[error("invalid market: {}", format_violations(.0))]
    InvalidMarket(Vec<(String, String)>),

    #[error("arithmetic overflow while computing {0}")]
    Overflow(&'static str),

    #[error("basis of {size} elements exceeds the limit of {limit}")]
    BasisTooLarge { size: usize, limit: usize },

    #[error("grid with {points} points exceeds the cap of {cap}")]
    GridTooLarge { points: u128, cap: u128 },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("base market is not consistent at degree {}: {:?}", .0.degree, .0.verdict)]
    InfeasibleMarket(Box<ArbitrageReport>),

    #[error("oracle linear program is infeasible at grid resolution {0}")]
    OracleInfeasible(usize),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("degree {degree}: {source}")]
    AtDegree {
        degree: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("hierarchy not monotone between degree {from} and {to}: {before} -> {after}")]
    HierarchyViolation {
        from: usize,
        to: usize,
        before: f64,
        after: f64,
    },
}

fn format_violations(v: &[(String, String)]) -> String {
    v.iter()
        .map(|(p, m)| format!("{p}: {m}"))
        .collect::<Vec<_>>()
        .join("; ")
}
