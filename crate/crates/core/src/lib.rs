//! Static arbitrage detection and price bounds for one-period markets.
//!
//! Quoted prices are consistent with a state-price measure on the support
//! box iff a positive-semidefinite moment function exists on the semigroup
//! generated by the quoted payoffs. Truncating to elements of degree `≤ 2d`
//! gives a semidefinite feasibility problem: infeasibility certifies an
//! arbitrage, feasibility means no arbitrage is detected at degree `d`.
//!
//! ```
//! use momentarb::{check_no_arbitrage, MarketInstance, PayoffGenerator, Verdict};
//!
//! let mut market = MarketInstance::single_asset(0.5, 1.0).unwrap();
//! market
//!     .push_derivative(PayoffGenerator::straddle(0, 1, 0.5).unwrap(), 0.6)
//!     .unwrap();
//! let report = check_no_arbitrage(&market).unwrap();
//! assert_eq!(report.verdict, Verdict::RelaxationInfeasible);
//! ```

pub mod conic;
pub mod engine;
pub mod error;
pub mod market;
pub mod martingale;
pub mod moments;
pub mod oracle;
pub mod payoff;
pub mod semigroup;

pub use conic::{
    min_eigenvalue, solve_feasibility, solve_lp, solve_optimize, ConeBlock, ConicProblem, ConicSolution,
    LpMethod, LpSense, SolveStatus, SolverSettings,
};
pub use engine::{
    assemble, bound_vs_degree, check_no_arbitrage, check_no_arbitrage_with, price_bounds, price_bounds_with,
    ArbitrageReport, BoundResult, Direction, TargetPayoff, Verdict,
};
pub use error::{Error, Result};
pub use market::{Asset, Derivative, MarketInstance, DEFAULT_DEGREE};
pub use martingale::{convex_order_check, find_transition, ConvexOrderReport, TransitionMatrix, TransitionResult};
pub use moments::{
    build_beta_matrix, build_localizing_matrix, build_moment_matrix, AffineExpr, BetaBound, LmiBlock,
    MomentIndex, MomentProblem,
};
pub use oracle::{
    moments_from_measure, oracle_bound, oracle_feasible, DiscreteMeasure, Grid, OracleBound, OracleFeasibility,
};
pub use payoff::{call_price_from_straddle, straddle_price_from_call, GeneratorKind, PayoffGenerator};
pub use semigroup::{canonicalize, enumerate_semigroup, GeneratorSet, PolynomialExpansion, SemigroupElement};
