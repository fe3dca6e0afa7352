//! Discretized moment-matching linear programs.
//!
//! The support box is replaced by a finite grid and the state-price measure
//! by nonnegative weights on it. Price equalities are relaxed to a minimized
//! `ℓ∞` slack, so off-grid strikes give a small positive slack instead of a
//! hard infeasibility.

use serde::{Deserialize, Serialize};

use crate::conic::{LinearProgram, LpSense, Relation, SolveStatus};
use crate::engine::{Direction, TargetPayoff};
use crate::error::{Error, Result};
use crate::market::MarketInstance;
use crate::moments::MomentIndex;
use crate::payoff::{GeneratorKind, PayoffGenerator};
use crate::semigroup::{evaluate, GeneratorSet, SemigroupElement};

/// Largest grid the oracle will build.
pub const GRID_CAP: u128 = 1_000_000;
/// A market matches on the grid when the optimal price slack is at most this.
pub const ORACLE_FEAS_TOL: f64 = 1e-8;
/// Weights below this are dropped from witness measures.
const WITNESS_CUTOFF: f64 = 1e-12;

/// Tensor grid over `[0, B_1] × … × [0, B_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Vec<Vec<f64>>,
}

impl Grid {
    /// `l` equally spaced points per axis, endpoints included.
    pub fn uniform(upper: &[f64], l: usize) -> Result<Self> {
        if l < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 points per axis, got {l}"
            )));
        }
        if upper.is_empty() || upper.iter().any(|b| !(b.is_finite() && *b > 0.0)) {
            return Err(Error::InvalidArgument("grid bounds must be finite and positive".into()));
        }
        let axes = upper
            .iter()
            .map(|&b| {
                (0..l)
                    .map(|k| if k == l - 1 { b } else { b * k as f64 / (l - 1) as f64 })
                    .collect()
            })
            .collect();
        let g = Self { axes };
        g.check_cap()?;
        Ok(g)
    }

    /// Uniform grid plus the kink of every single-asset payoff (`|a x_i - K|`
    /// has its kink at `x_i = K / a`).
    pub fn for_payoffs<'a>(
        upper: &[f64],
        l: usize,
        payoffs: impl IntoIterator<Item = &'a PayoffGenerator>,
    ) -> Result<Self> {
        let mut g = Self::uniform(upper, l)?;
        for p in payoffs {
            if let GeneratorKind::AbsLinear {
                coefficients,
                strike,
            } = &p.kind
            {
                let nonzero: Vec<usize> = (0..coefficients.len()).filter(|i| coefficients[*i] != 0.0).collect();
                if let [i] = nonzero[..] {
                    g.insert(i, strike / coefficients[i]);
                }
            }
        }
        g.check_cap()?;
        Ok(g)
    }

    /// Grid for `market` with kinks of its derivatives and of `target`.
    pub fn for_market(market: &MarketInstance, l: usize, target: Option<&TargetPayoff>) -> Result<Self> {
        let tgen = target.map(|t| t.generator()).transpose()?;
        Self::for_payoffs(
            &market.support(),
            l,
            market.derivatives.iter().map(|d| &d.payoff).chain(tgen.as_ref()),
        )
    }

    /// Add `v` to axis `i` if it lies inside the axis range.
    pub fn insert(&mut self, i: usize, v: f64) {
        let axis = &mut self.axes[i];
        let hi = *axis.last().unwrap();
        if !(v.is_finite() && (0.0..=hi).contains(&v)) {
            return;
        }
        if let Err(pos) = axis.binary_search_by(|x| x.total_cmp(&v)) {
            axis.insert(pos, v);
        }
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    pub fn len(&self) -> u128 {
        self.axes.iter().map(|a| a.len() as u128).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn check_cap(&self) -> Result<()> {
        let points = self
            .axes
            .iter()
            .try_fold(1u128, |acc, a| acc.checked_mul(a.len() as u128))
            .unwrap_or(u128::MAX);
        if points > GRID_CAP {
            return Err(Error::GridTooLarge {
                points,
                cap: GRID_CAP,
            });
        }
        Ok(())
    }

    /// All grid points, last axis varying fastest.
    pub fn points(&self) -> Vec<Vec<f64>> {
        let mut out = vec![Vec::with_capacity(self.axes.len())];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        out
    }
}

/// Finitely supported probability measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Weights must be nonnegative and sum to 1 within `1e-9`; all points
    /// share one dimension.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() || points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} points and {} weights",
                points.len(),
                weights.len()
            )));
        }
        let dim = points[0].len();
        if points.iter().any(|p| p.len() != dim || p.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidArgument(
                "support points must be finite and share one dimension".into(),
            ));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn dirac(point: Vec<f64>) -> Self {
        Self {
            points: vec![point],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn expectation(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(p, w)| w * f(p)).sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.expectation(|x| x[i])).collect()
    }
}

/// `f(s) = E_μ[s(x)]` for each element of `basis`.
pub fn moments_from_measure(measure: &DiscreteMeasure, gens: &GeneratorSet, basis: &[SemigroupElement]) -> Vec<f64> {
    basis
        .iter()
        .map(|e| measure.expectation(|x| evaluate(e, gens, x)))
        .collect()
}

/// Moment slot values induced by a measure, in slot order.
pub fn slot_values_from_measure(measure: &DiscreteMeasure, index: &MomentIndex) -> Vec<f64> {
    let gens = index.generators();
    index.slot_values(|e| measure.expectation(|x| evaluate(e, gens, x)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFeasibility {
    pub feasible: bool,
    /// Optimal `ℓ∞` price mismatch over the grid.
    pub slack: f64,
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<DiscreteMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleBound {
    pub target: String,
    pub direction: Direction,
    pub value: f64,
    pub grid_points: usize,
    pub slack: f64,
    pub witness: DiscreteMeasure,
}

struct GridLp {
    lp: LinearProgram,
    weights: Vec<usize>,
    points: Vec<Vec<f64>>,
}

/// `w ≥ 0`, `Σ w = 1`, `|Σ w g(x) - p| ≤ band` (or `≤ s` when `band` is
/// `None`, with `s` an extra variable).
fn grid_lp(
    market: &MarketInstance,
    grid: &Grid,
    sense: LpSense,
    objective: impl Fn(&[f64]) -> f64,
    band: Option<f64>,
) -> Result<GridLp> {
    let gens = market.generators()?;
    let prices = market.prices();
    let points = grid.points();
    let mut lp = LinearProgram::new(sense);
    let weights: Vec<usize> = points.iter().map(|x| lp.add_var(objective(x), 0.0, f64::INFINITY)).collect();
    lp.add_constraint(weights.iter().map(|w| (*w, 1.0)).collect(), Relation::Eq, 1.0);
    let slack = match band {
        None => Some(lp.add_var(1.0, 0.0, f64::INFINITY)),
        Some(_) => None,
    };
    for (g, p) in gens.generators().iter().zip(&prices) {
        let terms: Vec<(usize, f64)> = weights
            .iter()
            .zip(&points)
            .map(|(w, x)| (*w, g.value(x)))
            .filter(|(_, v)| *v != 0.0)
            .collect();
        match (slack, band) {
            (Some(s), _) => {
                let mut lo = terms.clone();
                lo.push((s, 1.0));
                lp.add_constraint(lo, Relation::Ge, *p);
                let mut hi = terms;
                hi.push((s, -1.0));
                lp.add_constraint(hi, Relation::Le, *p);
            }
            (None, Some(b)) => {
                lp.add_constraint(terms.clone(), Relation::Ge, p - b);
                lp.add_constraint(terms, Relation::Le, p + b);
            }
            (None, None) => unreachable!(),
        }
    }
    Ok(GridLp { lp, weights, points })
}

fn witness(points: &[Vec<f64>], values: &[f64], weights: &[usize]) -> Result<DiscreteMeasure> {
    let mut pts = Vec::new();
    let mut ws = Vec::new();
    for (x, w) in points.iter().zip(weights) {
        let v = values[*w];
        if v > WITNESS_CUTOFF {
            pts.push(x.clone());
            ws.push(v);
        }
    }
    let total: f64 = ws.iter().sum();
    if pts.is_empty() || total <= 0.0 {
        return Err(Error::Internal("grid LP returned no positive weights".into()));
    }
    ws.iter_mut().for_each(|w| *w /= total);
    DiscreteMeasure::new(pts, ws)
}

pub fn oracle_feasible(market: &MarketInstance, l: usize) -> Result<OracleFeasibility> {
    oracle_feasible_on(market, &Grid::for_market(market, l, None)?)
}

/// Minimize the `ℓ∞` price mismatch over measures on `grid`.
pub fn oracle_feasible_on(market: &MarketInstance, grid: &Grid) -> Result<OracleFeasibility> {
    grid.check_cap()?;
    let g = grid_lp(market, grid, LpSense::Minimize, |_| 0.0, None)?;
    let sol = g.lp.solve()?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("grid LP ended with status {:?}", sol.status)));
    }
    let slack = sol.objective.max(0.0);
    let feasible = slack <= ORACLE_FEAS_TOL;
    Ok(OracleFeasibility {
        feasible,
        slack,
        grid_points: g.points.len(),
        witness: if feasible {
            Some(witness(&g.points, &sol.values, &g.weights)?)
        } else {
            None
        },
    })
}

pub fn oracle_bound(market: &MarketInstance, target: &TargetPayoff, direction: Direction, l: usize) -> Result<OracleBound> {
    oracle_bound_on(market, target, direction, &Grid::for_market(market, l, Some(target))?, l)
}

/// Optimize `E_w[target]` over grid measures matching the prices within
/// [`ORACLE_FEAS_TOL`]. `l` only labels the error when the grid is infeasible.
pub fn oracle_bound_on(
    market: &MarketInstance,
    target: &TargetPayoff,
    direction: Direction,
    grid: &Grid,
    l: usize,
) -> Result<OracleBound> {
    target.check(market.n_assets())?;
    let feas = oracle_feasible_on(market, grid)?;
    if !feas.feasible {
        return Err(Error::OracleInfeasible(l));
    }
    let sense = match direction {
        Direction::Upper => LpSense::Maximize,
        Direction::Lower => LpSense::Minimize,
    };
    let g = grid_lp(market, grid, sense, |x| target.value(x), Some(ORACLE_FEAS_TOL))?;
    let sol = g.lp.solve()?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("grid bound LP ended with status {:?}", sol.status)));
    }
    Ok(OracleBound {
        target: target.name().to_string(),
        direction,
        value: sol.objective,
        grid_points: g.points.len(),
        slack: feas.slack,
        witness: witness(&g.points, &sol.values, &g.weights)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(p: f64) -> MarketInstance {
        MarketInstance::single_asset(p, 1.0).unwrap()
    }

    #[test]
    fn grid_shape() {
        let g = Grid::uniform(&[1.0, 2.0], 3).unwrap();
        assert_eq!(g.axes()[1], vec![0.0, 1.0, 2.0]);
        assert_eq!(g.len(), 9);
        assert_eq!(g.points()[1], vec![0.0, 1.0]);
        assert!(Grid::uniform(&[1.0], 1).is_err());
        assert!(matches!(
            Grid::uniform(&[1.0; 3], 101),
            Err(Error::GridTooLarge { points: 1_030_301, .. })
        ));
    }

    #[test]
    fn strike_augmentation() {
        let s = PayoffGenerator::straddle(0, 1, 0.4).unwrap();
        let g = Grid::for_payoffs(&[1.0], 3, [&s]).unwrap();
        assert_eq!(g.axes()[0], vec![0.0, 0.4, 0.5, 1.0]);
        let spread = PayoffGenerator::spread_straddle(0, 1, 2, 0.3).unwrap();
        assert_eq!(Grid::for_payoffs(&[1.0, 1.0], 3, [&spread]).unwrap().len(), 9);
    }

    #[test]
    fn measure_validation() {
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.6]).is_err());
        assert!(DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![-0.1, 1.1]).is_err());
        let m = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(m.mean(), vec![0.5]);
    }

    #[test]
    fn feasible_forward() {
        let r = oracle_feasible(&single(0.5), 3).unwrap();
        assert!(r.feasible);
        let w = r.witness.unwrap();
        assert!((w.mean()[0] - 0.5).abs() < 1e-7);
        assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_forward() {
        for l in [2, 3, 11, 101] {
            let r = oracle_feasible(&single(1.2), l).unwrap();
            assert!(!r.feasible);
            assert!((r.slack - 0.2).abs() < 1e-9);
        }
    }

    #[test]
    fn straddle_market() {
        let mut m = single(0.5);
        m.push_derivative(PayoffGenerator::straddle(0, 1, 0.5).unwrap(), 0.25).unwrap();
        let r = oracle_feasible(&m, 101).unwrap();
        assert!(r.feasible);
        let w = r.witness.unwrap();
        assert!((w.expectation(|x| (x[0] - 0.5).abs()) - 0.25).abs() < 1e-7);
    }

    #[test]
    fn call_bounds() {
        let t = TargetPayoff::call(vec![1.0], 0.4);
        let up = oracle_bound(&single(0.5), &t, Direction::Upper, 3).unwrap();
        let lo = oracle_bound(&single(0.5), &t, Direction::Lower, 3).unwrap();
        assert!((up.value - 0.3).abs() < 1e-6, "{}", up.value);
        assert!((lo.value - 0.1).abs() < 1e-6, "{}", lo.value);
        let x = TargetPayoff::payoff(PayoffGenerator::asset(0, "x1"));
        for d in [Direction::Upper, Direction::Lower] {
            assert!((oracle_bound(&single(0.5), &x, d, 5).unwrap().value - 0.5).abs() <= 2.0 * ORACLE_FEAS_TOL);
        }
    }

    #[test]
    fn bound_on_infeasible_market() {
        let t = TargetPayoff::call(vec![1.0], 0.4);
        assert!(matches!(
            oracle_bound(&single(1.2), &t, Direction::Upper, 5),
            Err(Error::OracleInfeasible(5))
        ));
    }

    #[test]
    fn moments_examples() {
        let gens = GeneratorSet::assets(1);
        let basis: Vec<SemigroupElement> = (0..3).map(|k| SemigroupElement::from_exponents(vec![k])).collect();
        let d = DiscreteMeasure::dirac(vec![0.5]);
        assert_eq!(moments_from_measure(&d, &gens, &basis), vec![1.0, 0.5, 0.25]);
        let two = DiscreteMeasure::new(vec![vec![0.0], vec![1.0]], vec![0.5, 0.5]).unwrap();
        assert_eq!(moments_from_measure(&two, &gens, &basis), vec![1.0, 0.5, 0.5]);
    }
}
