//! Martingale transitions between two marginals on a common finite support.

use serde::{Deserialize, Serialize};

use crate::conic::{LinearProgram, LpSense, Relation, SolveStatus};
use crate::error::{Error, Result};
use crate::oracle::DiscreteMeasure;

/// Constraint tolerance for returned transitions.
pub const MARTINGALE_TOL: f64 = 1e-8;
/// Tolerance for the mean and concave-kink comparisons.
pub const CONVEX_ORDER_TOL: f64 = 1e-9;

/// Row-stochastic `N × N` matrix over the support points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub rows: Vec<Vec<f64>>,
}

impl TransitionMatrix {
    /// Largest violation of `Q ≥ 0`, unit row sums, the martingale rows
    /// (for `μ_i > 0`) and `μ Q = ν`.
    pub fn max_violation(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
        let n = self.rows.len();
        let mut worst: f64 = 0.0;
        for (i, row) in self.rows.iter().enumerate() {
            worst = worst.max(row.iter().map(|q| (-q).max(0.0)).fold(0.0, f64::max));
            worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
            if mu.weights[i] > 0.0 {
                for c in 0..mu.dim() {
                    let m: f64 = row.iter().zip(&mu.points).map(|(q, a)| q * a[c]).sum();
                    worst = worst.max((m - mu.points[i][c]).abs());
                }
            }
        }
        for j in 0..n {
            let v: f64 = (0..n).map(|i| mu.weights[i] * self.rows[i][j]).sum();
            worst = worst.max((v - nu.weights[j]).abs());
        }
        worst
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionResult {
    pub feasible: bool,
    /// Optimal `ℓ∞` violation of the martingale and marginal constraints.
    pub slack: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<TransitionMatrix>,
}

fn check_common_support(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.points != nu.points {
        return Err(Error::InvalidArgument(
            "the two measures must list the same support points in the same order".into(),
        ));
    }
    Ok(())
}

/// Look for `Q` with `Q ≥ 0`, unit row sums, `Σ_j Q_ij a_j = a_i` for rows
/// with `μ_i > 0`, and `μ Q = ν`. Rows with `μ_i = 0` are point masses at
/// `a_i`.
pub fn find_transition(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<TransitionResult> {
    check_common_support(mu, nu)?;
    let n = mu.len();
    let dim = mu.dim();
    let mut lp = LinearProgram::new(LpSense::Minimize);
    let s = lp.add_var(1.0, 0.0, f64::INFINITY);
    let vars: Vec<Option<Vec<usize>>> = (0..n)
        .map(|i| (mu.weights[i] > 0.0).then(|| (0..n).map(|_| lp.add_var(0.0, 0.0, f64::INFINITY)).collect()))
        .collect();
    for (i, row) in vars.iter().enumerate() {
        let Some(row) = row else { continue };
        lp.add_constraint(row.iter().map(|q| (*q, 1.0)).collect(), Relation::Eq, 1.0);
        for c in 0..dim {
            let terms: Vec<(usize, f64)> = row.iter().zip(&mu.points).map(|(q, a)| (*q, a[c])).collect();
            band(&mut lp, terms, s, mu.points[i][c]);
        }
    }
    for j in 0..n {
        let terms: Vec<(usize, f64)> = vars
            .iter()
            .enumerate()
            .filter_map(|(i, row)| row.as_ref().map(|r| (r[j], mu.weights[i])))
            .collect();
        band(&mut lp, terms, s, nu.weights[j]);
    }
    let sol = lp.solve()?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::Solver(format!("transition LP ended with status {:?}", sol.status)));
    }
    let slack = sol.objective.max(0.0);
    let feasible = slack <= MARTINGALE_TOL;
    let transition = feasible.then(|| TransitionMatrix {
        rows: vars
            .iter()
            .enumerate()
            .map(|(i, row)| match row {
                Some(r) => r.iter().map(|q| sol.values[*q].max(0.0)).collect(),
                None => (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect(),
            })
            .collect(),
    });
    Ok(TransitionResult {
        feasible,
        slack,
        transition,
    })
}

/// `|Σ terms - rhs| ≤ s`
fn band(lp: &mut LinearProgram, terms: Vec<(usize, f64)>, s: usize, rhs: f64) {
    let mut lo = terms.clone();
    lo.push((s, 1.0));
    lp.add_constraint(lo, Relation::Ge, rhs);
    let mut hi = terms;
    hi.push((s, -1.0));
    lp.add_constraint(hi, Relation::Le, rhs);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinkCheck {
    pub strike: f64,
    /// `E_μ[min(x, K)]`
    pub first: f64,
    /// `E_ν[min(x, K)]`
    pub second: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexOrderReport {
    pub mean_first: f64,
    pub mean_second: f64,
    pub kinks: Vec<KinkCheck>,
    pub means_agree: bool,
    pub kinks_pass: bool,
    /// `ν` dominates `μ` in convex order.
    pub holds: bool,
}

/// Compare `E_μ[φ] ≥ E_ν[φ]` over the concave kinks `φ_K = min(x, K)` for
/// `K` in the support, plus equality of means. Scalar supports only.
pub fn convex_order_check(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<ConvexOrderReport> {
    check_common_support(mu, nu)?;
    if mu.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "convex order check needs scalar support points, got dimension {}",
            mu.dim()
        )));
    }
    let mean_first = mu.mean()[0];
    let mean_second = nu.mean()[0];
    let kinks: Vec<KinkCheck> = mu
        .points
        .iter()
        .map(|p| {
            let k = p[0];
            KinkCheck {
                strike: k,
                first: mu.expectation(|x| x[0].min(k)),
                second: nu.expectation(|x| x[0].min(k)),
            }
        })
        .collect();
    let means_agree = (mean_first - mean_second).abs() <= CONVEX_ORDER_TOL;
    let kinks_pass = kinks.iter().all(|c| c.first >= c.second - CONVEX_ORDER_TOL);
    Ok(ConvexOrderReport {
        mean_first,
        mean_second,
        kinks,
        means_agree,
        kinks_pass,
        holds: means_agree && kinks_pass,
    })
}
