//! Arbitrage verdicts and no-arbitrage price bounds.

use serde::{Deserialize, Serialize};

use crate::conic::{solve_feasibility, solve_optimize, ConicSolution, SolveStatus, SolverSettings};
use crate::error::{Error, Result};
use crate::market::MarketInstance;
use crate::moments::{assemble_generators, MomentProblem};
use crate::payoff::{call_price_from_straddle, dot, GeneratorKind, PayoffGenerator};
use crate::semigroup::GeneratorSet;

/// Slack allowed when checking that bounds move monotonically with the degree.
pub const HIERARCHY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// No price assignment passes the degree-`d` conditions: static arbitrage.
    #[serde(rename = "arbitrage_detected")]
    RelaxationInfeasible,
    /// The prices pass every degree-`d` condition. Finite-degree conditions
    /// are necessary only, so this is not a proof of absence of arbitrage.
    #[serde(rename = "no_arbitrage_detected_at_degree")]
    RelaxationFeasible,
    /// The phase-I margin is within tolerance of zero or the solver stalled.
    #[serde(rename = "marginal")]
    Marginal,
}

impl Verdict {
    pub fn from_status(status: SolveStatus) -> Self {
        match status {
            SolveStatus::Feasible | SolveStatus::Optimal | SolveStatus::NearOptimal => {
                Verdict::RelaxationFeasible
            }
            SolveStatus::Infeasible => Verdict::RelaxationInfeasible,
            SolveStatus::Unbounded | SolveStatus::NumericalTrouble => Verdict::Marginal,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockDiagnostic {
    pub label: String,
    pub dim: usize,
    /// Smallest eigenvalue of the block at the returned point.
    pub min_eigenvalue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub status: SolveStatus,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub min_block_eigenvalue: f64,
}

impl From<&ConicSolution> for SolverDiagnostics {
    fn from(s: &ConicSolution) -> Self {
        Self {
            status: s.status,
            iterations: s.iterations,
            primal_residual: s.primal_residual,
            dual_residual: s.dual_residual,
            duality_gap: s.duality_gap,
            min_block_eigenvalue: s.min_block_eigenvalue,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMoment {
    pub element: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub verdict: Verdict,
    pub degree: usize,
    pub beta: f64,
    /// Phase-I margin in units where the largest support bound is 1.
    pub phase1_margin: f64,
    /// Block eigenvalues at the phase-I point, in the same units.
    pub blocks: Vec<BlockDiagnostic>,
    pub solver: SolverDiagnostics,
    /// Moment values at the phase-I point, only when the relaxation is feasible.
    pub candidate_moments: Vec<CandidateMoment>,
    /// Prices outside their payoff's range on the support. Each one is a
    /// static arbitrage regardless of the relaxation verdict.
    pub static_violations: Vec<String>,
    pub note: String,
}

impl ArbitrageReport {
    /// True when either the relaxation or a static range check rejects the prices.
    pub fn arbitrage_detected(&self) -> bool {
        self.verdict == Verdict::RelaxationInfeasible || !self.static_violations.is_empty()
    }
}

fn verdict_note(verdict: Verdict, degree: usize, static_violations: usize) -> String {
    let base = match verdict {
        Verdict::RelaxationInfeasible => format!(
            "no measure on the support reproduces the quoted prices: the degree-{degree} conditions are violated"
        ),
        Verdict::RelaxationFeasible => format!(
            "no arbitrage detected at degree {degree}; finite-degree conditions are necessary only"
        ),
        Verdict::Marginal => format!(
            "phase-I margin at degree {degree} is within tolerance of zero; no verdict"
        ),
    };
    if static_violations > 0 {
        format!("{base}; {static_violations} quoted price(s) lie outside their static range")
    } else {
        base
    }
}

fn block_diagnostics(problem: &MomentProblem, y: &[f64]) -> Result<Vec<BlockDiagnostic>> {
    problem
        .blocks
        .iter()
        .map(|b| {
            Ok(BlockDiagnostic {
                label: b.label.clone(),
                dim: b.dim(),
                min_eigenvalue: crate::conic::min_eigenvalue(&b.evaluate(y))?,
            })
        })
        .collect()
}

/// Assemble the degree-`d` relaxation of a market with every price pinned.
pub fn assemble(market: &MarketInstance, d: usize) -> Result<MomentProblem> {
    let prices: Vec<Option<f64>> = market.prices().into_iter().map(Some).collect();
    assemble_generators(market.generators()?, &prices, &market.support(), d)
}

pub fn check_no_arbitrage(market: &MarketInstance) -> Result<ArbitrageReport> {
    check_no_arbitrage_with(market, &SolverSettings::default())
}

/// Largest support bound. The relaxations are solved on the market divided
/// by this factor and results are mapped back.
fn unit_scale(market: &MarketInstance) -> f64 {
    market.support().into_iter().fold(0.0, f64::max)
}

/// Run the phase-I test on the degree-`market.degree` relaxation.
///
/// The relaxation is solved in units where the largest support bound is 1,
/// so `phase1_margin` and the block eigenvalues are reported in those units.
/// Candidate moments and `beta` are in the units of the input.
pub fn check_no_arbitrage_with(market: &MarketInstance, settings: &SolverSettings) -> Result<ArbitrageReport> {
    let d = market.degree;
    let scale = unit_scale(market);
    let problem = assemble(&market.scaled(1.0 / scale)?, d)?;
    let conic = problem.to_conic()?;
    let sol = solve_feasibility(&conic, settings)?;
    let verdict = Verdict::from_status(sol.status);
    let candidate_moments = if verdict == Verdict::RelaxationFeasible {
        let gens = market.generators()?;
        (0..problem.index.slot_count())
            .map(|k| {
                let e = problem.index.slot_element(k);
                CandidateMoment {
                    element: gens.describe(e),
                    value: sol.y[k] * scale.powi(e.degree() as i32),
                }
            })
            .collect()
    } else {
        Vec::new()
    };
    let static_violations = market.static_violations();
    Ok(ArbitrageReport {
        verdict,
        degree: d,
        beta: problem.beta.value() * scale,
        phase1_margin: sol.phase1_margin.unwrap_or(f64::NAN),
        blocks: block_diagnostics(&problem, &sol.y)?,
        solver: SolverDiagnostics::from(&sol),
        candidate_moments,
        note: verdict_note(verdict, d, static_violations.len()),
        static_violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

/// Payoff whose price range is sought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum TargetPayoff {
    /// An asset or abs-linear payoff, bounded directly.
    Payoff { payoff: PayoffGenerator },
    /// The call `(a·x - K)^+`, bounded through the straddle `|a·x - K|`.
    Call {
        coefficients: Vec<f64>,
        strike: f64,
        name: String,
    },
}

impl TargetPayoff {
    pub fn payoff(payoff: PayoffGenerator) -> Self {
        TargetPayoff::Payoff { payoff }
    }

    pub fn call(coefficients: Vec<f64>, strike: f64) -> Self {
        let name = format!("call({coefficients:?}, {strike})");
        TargetPayoff::Call {
            coefficients,
            strike,
            name,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            TargetPayoff::Payoff { payoff } => &payoff.name,
            TargetPayoff::Call { name, .. } => name,
        }
    }

    /// The generator whose price is optimized.
    pub fn generator(&self) -> Result<PayoffGenerator> {
        match self {
            TargetPayoff::Payoff { payoff } => Ok(payoff.clone()),
            TargetPayoff::Call {
                coefficients,
                strike,
                name,
            } => PayoffGenerator::abs_linear(coefficients.clone(), *strike, format!("straddle of {name}")),
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            TargetPayoff::Payoff { payoff } => payoff.value(x),
            TargetPayoff::Call {
                coefficients,
                strike,
                ..
            } => (dot(coefficients, x) - strike).max(0.0),
        }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        match self {
            TargetPayoff::Payoff { payoff } => TargetPayoff::Payoff {
                payoff: payoff.scaled(lambda),
            },
            TargetPayoff::Call {
                coefficients,
                strike,
                name,
            } => TargetPayoff::Call {
                coefficients: coefficients.clone(),
                strike: strike * lambda,
                name: name.clone(),
            },
        }
    }

    /// Check the payoff against an `n`-asset market.
    pub fn check(&self, n: usize) -> Result<()> {
        let ok = match self {
            TargetPayoff::Payoff { payoff } => match &payoff.kind {
                GeneratorKind::Asset { index } => *index < n,
                GeneratorKind::AbsLinear { coefficients, .. } => coefficients.len() == n,
            },
            TargetPayoff::Call { coefficients, .. } => coefficients.len() == n,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "target {} does not fit a {n}-asset market",
                self.name()
            )))
        }
    }
}

/// Call-space view of a straddle-space bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallSpaceBound {
    /// Forward price of `a·x`.
    pub forward: f64,
    pub strike: f64,
    pub straddle_bound: f64,
    /// `(straddle - K + forward) / 2`
    pub call_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub target: String,
    pub direction: Direction,
    /// Bound on the price of the target payoff (call space for call targets).
    pub value: f64,
    pub degree: usize,
    /// True when the target price is fixed by a quote.
    pub pinned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub call_space: Option<CallSpaceBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub block_dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverDiagnostics>,
}

pub fn price_bounds(market: &MarketInstance, target: &TargetPayoff, direction: Direction) -> Result<BoundResult> {
    price_bounds_with(market, target, direction, &SolverSettings::default())
}

/// Optimize `±f(target)` over the degree-`market.degree` relaxation, with
/// the target added as an unpriced generator.
pub fn price_bounds_with(
    market: &MarketInstance,
    target: &TargetPayoff,
    direction: Direction,
    settings: &SolverSettings,
) -> Result<BoundResult> {
    target.check(market.n_assets())?;
    let report = check_no_arbitrage_with(market, settings)?;
    if report.verdict != Verdict::RelaxationFeasible {
        return Err(Error::InfeasibleMarket(Box::new(report)));
    }
    let d = market.degree;
    let scale = unit_scale(market);
    let unit = market.scaled(1.0 / scale)?;
    let gen = target.scaled(1.0 / scale).generator()?;
    let base = unit.generators()?;
    let prices = unit.prices();

    let (straddle_value, pinned, beta, block_dims, solver) =
        match base.generators().iter().position(|g| g.same_payoff(&gen)) {
            Some(i) => (market.prices()[i], true, None, Vec::new(), None),
            None => {
                let mut gens = base.generators().to_vec();
                gens.push(gen);
                let gens = GeneratorSet::new(gens)?;
                let target_pos = gens.len() - 1;
                let mut p: Vec<Option<f64>> = prices.iter().copied().map(Some).collect();
                p.push(None);
                let problem = assemble_generators(gens, &p, &unit.support(), d)?;
                let slot = match problem.index.slot_of(&problem.index.generators().unit(target_pos)) {
                    Some(crate::moments::SlotRef::Free(k)) => k,
                    _ => return Err(Error::Internal("target price is not a free moment".into())),
                };
                let sign = match direction {
                    Direction::Upper => 1.0,
                    Direction::Lower => -1.0,
                };
                let mut conic = problem.to_conic()?;
                let mut c = vec![0.0; conic.num_vars()];
                c[slot] = sign;
                conic.set_objective(c)?;
                let sol = solve_optimize(&conic, settings)?;
                // a stalled solve reports the primal side, which stays valid
                let objective = match sol.status {
                    SolveStatus::Optimal => sol.objective,
                    SolveStatus::NearOptimal => sol.primal_objective,
                    status => {
                        return Err(Error::Solver(format!(
                            "bound optimization for {} ended with status {:?}",
                            target.name(),
                            status
                        )))
                    }
                };
                (
                    sign * objective * scale,
                    false,
                    Some(problem.beta.value() * scale),
                    problem.block_dims(),
                    Some(SolverDiagnostics::from(&sol)),
                )
            }
        };

    let (value, call_space) = match target {
        TargetPayoff::Call {
            coefficients,
            strike,
            ..
        } => {
            let forward = dot(coefficients, &market.forwards());
            let call = call_price_from_straddle(forward, *strike, straddle_value);
            (
                call,
                Some(CallSpaceBound {
                    forward,
                    strike: *strike,
                    straddle_bound: straddle_value,
                    call_bound: call,
                }),
            )
        }
        TargetPayoff::Payoff { .. } => (straddle_value, None),
    };
    Ok(BoundResult {
        target: target.name().to_string(),
        direction,
        value,
        degree: d,
        pinned,
        call_space,
        beta,
        block_dims,
        solver,
    })
}

/// Bounds at each degree in `degrees` (strictly increasing). Fails if an
/// upper bound grows or a lower bound shrinks by more than [`HIERARCHY_TOL`].
pub fn bound_vs_degree(
    market: &MarketInstance,
    target: &TargetPayoff,
    direction: Direction,
    degrees: &[usize],
    settings: &SolverSettings,
) -> Result<Vec<BoundResult>> {
    if degrees.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("degrees must be strictly increasing".into()));
    }
    let mut out: Vec<BoundResult> = Vec::with_capacity(degrees.len());
    for &d in degrees {
        let at = |e: Error| Error::AtDegree {
            degree: d,
            source: Box::new(e),
        };
        let m = market.with_degree(d).map_err(at)?;
        let r = price_bounds_with(&m, target, direction, settings).map_err(at)?;
        if let Some(prev) = out.last() {
            let worse = match direction {
                Direction::Upper => r.value > prev.value + HIERARCHY_TOL,
                Direction::Lower => r.value < prev.value - HIERARCHY_TOL,
            };
            if worse {
                return Err(Error::HierarchyViolation {
                    from: prev.degree,
                    to: d,
                    before: prev.value,
                    after: r.value,
                });
            }
        }
        out.push(r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Asset;

    fn single(p: f64) -> MarketInstance {
        MarketInstance::single_asset(p, 1.0).unwrap()
    }

    fn spread_market(d: usize) -> MarketInstance {
        let asset = |name: &str| Asset {
            name: name.into(),
            price: 0.5,
            support_max: 1.0,
        };
        let mut m = MarketInstance::new(vec![asset("x1"), asset("x2")], Vec::new(), d).unwrap();
        m.push_derivative(PayoffGenerator::straddle(0, 2, 0.5).unwrap(), 0.25).unwrap();
        m.push_derivative(PayoffGenerator::straddle(1, 2, 0.5).unwrap(), 0.25).unwrap();
        m
    }

    #[test]
    fn price_above_support_is_arbitrage() {
        for d in [1, 2] {
            let r = check_no_arbitrage(&single(1.2).with_degree(d).unwrap()).unwrap();
            assert_eq!(r.verdict, Verdict::RelaxationInfeasible, "d = {d}");
            assert!(r.arbitrage_detected());
            assert_eq!(r.static_violations.len(), 1);
        }
    }

    #[test]
    fn plain_forward_is_feasible() {
        let r = check_no_arbitrage(&single(0.5)).unwrap();
        assert_eq!(r.verdict, Verdict::RelaxationFeasible);
        assert!(r.phase1_margin < 0.0);
        assert!(!r.candidate_moments.is_empty());
        assert!(r.note.contains("necessary only"));
    }

    #[test]
    fn expensive_straddle_is_arbitrage() {
        let mut m = single(0.5);
        m.push_derivative(PayoffGenerator::straddle(0, 1, 0.5).unwrap(), 0.6).unwrap();
        // the degree-1 blocks cannot see this; the static range check does
        let r = check_no_arbitrage(&m.with_degree(1).unwrap()).unwrap();
        assert!(r.arbitrage_detected());
        let r = check_no_arbitrage(&m.with_degree(2).unwrap()).unwrap();
        assert_eq!(r.verdict, Verdict::RelaxationInfeasible);
    }

    #[test]
    fn pinned_target() {
        let t = TargetPayoff::payoff(PayoffGenerator::asset(0, "x1"));
        let r = price_bounds(&single(0.5), &t, Direction::Upper).unwrap();
        assert!(r.pinned);
        assert_eq!(r.value, 0.5);
    }

    #[test]
    fn straddle_upper_bound() {
        let t = TargetPayoff::payoff(PayoffGenerator::straddle(0, 1, 0.5).unwrap());
        let r = price_bounds(&single(0.5), &t, Direction::Upper).unwrap();
        assert!(r.value >= 0.5 - 1e-6, "{}", r.value);
        assert!(r.value <= 0.5 + 1e-4, "{}", r.value);
        let lo = price_bounds(&single(0.5), &t, Direction::Lower).unwrap();
        assert!(lo.value <= 1e-6 && lo.value <= r.value);
    }

    #[test]
    fn call_bounds_single_asset() {
        let t = TargetPayoff::call(vec![1.0], 0.4);
        let up = price_bounds(&single(0.5), &t, Direction::Upper).unwrap();
        let lo = price_bounds(&single(0.5), &t, Direction::Lower).unwrap();
        assert!(up.value + 1e-6 >= 0.3, "{}", up.value);
        assert!(lo.value - 1e-6 <= 0.1, "{}", lo.value);
        let cs = up.call_space.unwrap();
        assert!((call_price_from_straddle(cs.forward, cs.strike, cs.straddle_bound) - up.value).abs() < 1e-15);
    }

    #[test]
    fn infeasible_base_market_is_an_error() {
        let t = TargetPayoff::call(vec![1.0], 0.4);
        match price_bounds(&single(1.2), &t, Direction::Upper) {
            Err(Error::InfeasibleMarket(r)) => assert_eq!(r.verdict, Verdict::RelaxationInfeasible),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spread_hierarchy() {
        let m = spread_market(1);
        let t = TargetPayoff::payoff(PayoffGenerator::spread_straddle(0, 1, 2, 0.0).unwrap());
        let s = SolverSettings::default();
        let up = bound_vs_degree(&m, &t, Direction::Upper, &[1, 2], &s).unwrap();
        let lo = bound_vs_degree(&m, &t, Direction::Lower, &[1, 2], &s).unwrap();
        assert!(lo[1].value <= up[1].value);
        assert_eq!(up[1].block_dims.len(), 1 + 5 + 1);
    }

    #[test]
    fn degrees_must_increase() {
        let t = TargetPayoff::call(vec![1.0], 0.4);
        assert!(bound_vs_degree(&single(0.5), &t, Direction::Upper, &[2, 1], &SolverSettings::default()).is_err());
    }
}
