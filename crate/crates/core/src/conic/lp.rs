//! Linear programs.
//!
//! Two routes: a revised simplex (backed by `minilp`) for the general
//! builder, and the conic interior-point path for standard-form problems,
//! where the nonnegative variables become one diagonal block.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{ipm, BlockValue, ConicProblem, SolveStatus, SolverSettings};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LpSense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Eq,
    Le,
    Ge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LpMethod {
    #[default]
    Simplex,
    InteriorPoint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    /// `Optimal`, `Infeasible`, `Unbounded` or `NumericalTrouble`.
    pub status: SolveStatus,
    pub values: Vec<f64>,
    pub objective: f64,
}

/// General LP: bounded variables, `≤ / = / ≥` rows.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    sense: LpSense,
    objective: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    rows: Vec<(Vec<(usize, f64)>, Relation, f64)>,
}

impl LinearProgram {
    pub fn new(sense: LpSense) -> Self {
        Self {
            sense,
            objective: Vec::new(),
            bounds: Vec::new(),
            rows: Vec::new(),
        }
    }

    pub fn add_var(&mut self, objective: f64, lower: f64, upper: f64) -> usize {
        self.objective.push(objective);
        self.bounds.push((lower, upper));
        self.objective.len() - 1
    }

    pub fn add_constraint(&mut self, terms: Vec<(usize, f64)>, relation: Relation, rhs: f64) {
        self.rows.push((terms, relation, rhs));
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    fn check(&self) -> Result<()> {
        let finite = self.objective.iter().all(|c| c.is_finite())
            && self
                .rows
                .iter()
                .all(|(t, _, r)| r.is_finite() && t.iter().all(|(_, c)| c.is_finite()))
            && self.bounds.iter().all(|(l, u)| !l.is_nan() && !u.is_nan() && l <= u);
        if !finite {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        if let Some((t, _, _)) = self
            .rows
            .iter()
            .find(|(t, _, _)| t.iter().any(|(v, _)| *v >= self.num_vars()))
        {
            return Err(Error::InvalidArgument(format!(
                "LP row references a missing variable: {t:?}"
            )));
        }
        Ok(())
    }

    pub fn solve(&self) -> Result<LpSolution> {
        use minilp::{ComparisonOp, OptimizationDirection, Problem};
        self.check()?;
        let dir = match self.sense {
            LpSense::Minimize => OptimizationDirection::Minimize,
            LpSense::Maximize => OptimizationDirection::Maximize,
        };
        let mut p = Problem::new(dir);
        let vars: Vec<_> = self
            .objective
            .iter()
            .zip(&self.bounds)
            .map(|(c, b)| p.add_var(*c, *b))
            .collect();
        for (terms, rel, rhs) in &self.rows {
            let op = match rel {
                Relation::Eq => ComparisonOp::Eq,
                Relation::Le => ComparisonOp::Le,
                Relation::Ge => ComparisonOp::Ge,
            };
            let expr: Vec<(minilp::Variable, f64)> =
                terms.iter().map(|(v, c)| (vars[*v], *c)).collect();
            p.add_constraint(expr.as_slice(), op, *rhs);
        }
        Ok(match p.solve() {
            // minilp can report a non-finite optimum instead of Unbounded
            Ok(sol) if !sol.objective().is_finite() => LpSolution {
                status: SolveStatus::Unbounded,
                values: Vec::new(),
                objective: f64::NAN,
            },
            Ok(sol) => LpSolution {
                status: SolveStatus::Optimal,
                values: vars.iter().map(|v| *sol.var_value(*v)).collect(),
                objective: sol.objective(),
            },
            Err(minilp::Error::Infeasible) => LpSolution {
                status: SolveStatus::Infeasible,
                values: Vec::new(),
                objective: f64::NAN,
            },
            Err(minilp::Error::Unbounded) => LpSolution {
                status: SolveStatus::Unbounded,
                values: Vec::new(),
                objective: f64::NAN,
            },
        })
    }
}

/// Standard form: optimize `c·w` subject to `A w = b`, `w ≥ 0`. `a` holds the
/// rows of `A`.
pub fn solve_lp(
    a: &[Vec<f64>],
    b: &[f64],
    c: &[f64],
    sense: LpSense,
    method: LpMethod,
    settings: &SolverSettings,
) -> Result<LpSolution> {
    let n = c.len();
    if a.len() != b.len() || a.iter().any(|row| row.len() != n) {
        return Err(Error::InvalidArgument(format!(
            "LP shape mismatch: {} rows, {} right-hand sides, {n} columns",
            a.len(),
            b.len()
        )));
    }
    match method {
        LpMethod::Simplex => {
            let mut lp = LinearProgram::new(sense);
            for cj in c {
                lp.add_var(*cj, 0.0, f64::INFINITY);
            }
            for (row, rhs) in a.iter().zip(b) {
                let terms = row
                    .iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(|(j, v)| (j, *v))
                    .collect();
                lp.add_constraint(terms, Relation::Eq, *rhs);
            }
            lp.solve()
        }
        LpMethod::InteriorPoint => solve_lp_ipm(a, b, c, sense, settings),
    }
}

/// The LP dual `max -b·y` s.t. `c + Aᵀ y ≥ 0` is a conic problem with one
/// diagonal block; its primal variable is `w`.
fn solve_lp_ipm(
    a: &[Vec<f64>],
    b: &[f64],
    c: &[f64],
    sense: LpSense,
    settings: &SolverSettings,
) -> Result<LpSolution> {
    settings.check()?;
    if c.is_empty() {
        return Err(Error::InvalidArgument("LP has no variables".into()));
    }
    let sign = match sense {
        LpSense::Minimize => 1.0,
        LpSense::Maximize => -1.0,
    };
    let m = a.len();
    let mut p = ConicProblem::new(m);
    p.set_objective(b.iter().map(|v| -v).collect())?;
    p.add_nonneg_block(
        DVector::from_iterator(c.len(), c.iter().map(|v| sign * v)),
        a.iter()
            .enumerate()
            .map(|(k, row)| (k, DVector::from_column_slice(row)))
            .collect(),
    )?;
    let out = ipm::solve(&p, settings);
    let values: Vec<f64> = match out.x.first() {
        Some(BlockValue::Diag(w)) => w.iter().copied().collect(),
        _ => Vec::new(),
    };
    let status = match out.status {
        ipm::Status::Converged => SolveStatus::Optimal,
        ipm::Status::DualUnbounded => SolveStatus::Infeasible,
        ipm::Status::DualInfeasible => SolveStatus::Unbounded,
        _ => SolveStatus::NumericalTrouble,
    };
    let objective = c.iter().zip(&values).map(|(c, w)| c * w).sum();
    Ok(LpSolution {
        status,
        values,
        objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn both(a: &[Vec<f64>], b: &[f64], c: &[f64], sense: LpSense) -> [LpSolution; 2] {
        let s = SolverSettings::with_tol(1e-9);
        [
            solve_lp(a, b, c, sense, LpMethod::Simplex, &s).unwrap(),
            solve_lp(a, b, c, sense, LpMethod::InteriorPoint, &s).unwrap(),
        ]
    }

    #[test]
    fn min_and_max_on_simplex() {
        let a = vec![vec![1.0, 1.0]];
        for sol in both(&a, &[1.0], &[1.0, 0.0], LpSense::Minimize) {
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!(sol.objective.abs() < 1e-7);
        }
        for sol in both(&a, &[1.0], &[1.0, 0.0], LpSense::Maximize) {
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.objective - 1.0).abs() < 1e-7);
        }
    }

    #[test]
    fn moment_matching_lp() {
        // weights on {0, 0.5, 1}, mean 0.5, maximize weight at 0.5
        let a = vec![vec![1.0, 1.0, 1.0], vec![0.0, 0.5, 1.0]];
        for sol in both(&a, &[1.0, 0.5], &[0.0, 1.0, 0.0], LpSense::Maximize) {
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.objective - 1.0).abs() < 1e-7);
            assert!((sol.values[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_lp() {
        // w1 + w2 = -1 with w ≥ 0
        let a = vec![vec![1.0, 1.0]];
        for sol in both(&a, &[-1.0], &[1.0, 1.0], LpSense::Minimize) {
            assert_eq!(sol.status, SolveStatus::Infeasible);
        }
    }

    #[test]
    fn unbounded_lp() {
        // min -w1 s.t. w1 - w2 = 0
        let a = vec![vec![1.0, -1.0]];
        for sol in both(&a, &[0.0], &[-1.0, 0.0], LpSense::Minimize) {
            assert_eq!(sol.status, SolveStatus::Unbounded);
        }
    }

    #[test]
    fn shape_mismatch() {
        let s = SolverSettings::default();
        assert!(solve_lp(&[vec![1.0]], &[1.0, 2.0], &[1.0], LpSense::Minimize, LpMethod::Simplex, &s).is_err());
    }
}
