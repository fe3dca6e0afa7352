//! Small dense conic programs.
//!
//! A [`ConicProblem`] is a linear matrix inequality in `y ∈ R^m`:
//!
//! ```text
//! maximize   c·y
//! subject to F0_j + Σ_k y_k F_kj ⪰ 0      for every block j
//! ```
//!
//! Blocks are either dense symmetric (PSD cone) or diagonal (nonnegative
//! orthant, i.e. linear inequalities). The associated primal is
//! `min Σ_j <F0_j, X_j>` subject to `Σ_j <F_kj, X_j> = -c_k`, `X_j ⪰ 0`,
//! and both are solved together by a primal-dual path-following method with
//! Nesterov-Todd scaling (see [`ipm`]).

mod dump;
mod ipm;
pub mod lp;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dump::parse_dump;
pub use lp::{solve_lp, LinearProgram, LpMethod, LpSense, LpSolution, Relation};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub enum ConeBlock {
    /// `constant + Σ y_k coefficient_k ⪰ 0` for symmetric matrices.
    Psd {
        constant: DMatrix<f64>,
        coefficients: Vec<(usize, DMatrix<f64>)>,
    },
    /// `constant + Σ y_k coefficient_k ≥ 0` entrywise.
    NonNeg {
        constant: DVector<f64>,
        coefficients: Vec<(usize, DVector<f64>)>,
    },
}

impl ConeBlock {
    pub fn dim(&self) -> usize {
        match self {
            ConeBlock::Psd { constant, .. } => constant.nrows(),
            ConeBlock::NonNeg { constant, .. } => constant.len(),
        }
    }

    /// The block evaluated at `y`.
    pub fn value(&self, y: &[f64]) -> BlockValue {
        match self {
            ConeBlock::Psd {
                constant,
                coefficients,
            } => {
                let mut m = constant.clone();
                for (k, f) in coefficients {
                    mat_axpy(&mut m, y[*k], f);
                }
                BlockValue::Dense(m)
            }
            ConeBlock::NonNeg {
                constant,
                coefficients,
            } => {
                let mut v = constant.clone();
                for (k, f) in coefficients {
                    v.axpy(y[*k], f, 1.0);
                }
                BlockValue::Diag(v)
            }
        }
    }
}

/// A block-diagonal matrix value: dense symmetric, or a diagonal stored as a
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockValue {
    Dense(DMatrix<f64>),
    Diag(DVector<f64>),
}

impl BlockValue {
    pub fn min_eigenvalue(&self) -> Result<f64> {
        match self {
            BlockValue::Dense(m) => min_eigenvalue(m),
            BlockValue::Diag(v) => {
                if !v.iter().all(|x| x.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite entry".into()));
                }
                Ok(v.iter().copied().fold(f64::INFINITY, f64::min))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProblem {
    num_vars: usize,
    objective: Vec<f64>,
    blocks: Vec<ConeBlock>,
}

impl ConicProblem {
    pub fn new(num_vars: usize) -> Self {
        Self {
            num_vars,
            objective: vec![0.0; num_vars],
            blocks: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn blocks(&self) -> &[ConeBlock] {
        &self.blocks
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<()> {
        if c.len() != self.num_vars {
            return Err(Error::InvalidArgument(format!(
                "objective has length {}, expected {}",
                c.len(),
                self.num_vars
            )));
        }
        self.objective = c;
        Ok(())
    }

    /// Add `constant + Σ y_k F_k ⪰ 0`. Coefficients for the same variable are
    /// summed; all matrices must be square of the same size and symmetric.
    pub fn add_psd_block(
        &mut self,
        constant: DMatrix<f64>,
        coefficients: Vec<(usize, DMatrix<f64>)>,
    ) -> Result<()> {
        let n = constant.nrows();
        if n == 0 || constant.ncols() != n {
            return Err(Error::InvalidArgument(format!(
                "block constant is {}x{}, expected a nonempty square matrix",
                constant.nrows(),
                constant.ncols()
            )));
        }
        check_symmetric(&constant)?;
        let mut merged: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for (k, f) in coefficients {
            if k >= self.num_vars {
                return Err(Error::InvalidArgument(format!(
                    "coefficient for variable {k} but problem has {}",
                    self.num_vars
                )));
            }
            if f.shape() != (n, n) {
                return Err(Error::InvalidArgument(format!(
                    "coefficient for variable {k} is {:?}, block is {n}x{n}",
                    f.shape()
                )));
            }
            check_symmetric(&f)?;
            match merged.iter_mut().find(|(j, _)| *j == k) {
                Some((_, g)) => *g += f,
                None => merged.push((k, f)),
            }
        }
        merged.sort_by_key(|(k, _)| *k);
        self.blocks.push(ConeBlock::Psd {
            constant,
            coefficients: merged,
        });
        Ok(())
    }

    /// Add `constant + Σ y_k f_k ≥ 0` (entrywise).
    pub fn add_nonneg_block(
        &mut self,
        constant: DVector<f64>,
        coefficients: Vec<(usize, DVector<f64>)>,
    ) -> Result<()> {
        let n = constant.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty linear block".into()));
        }
        if !constant.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("non-finite block constant".into()));
        }
        let mut merged: Vec<(usize, DVector<f64>)> = Vec::new();
        for (k, f) in coefficients {
            if k >= self.num_vars {
                return Err(Error::InvalidArgument(format!(
                    "coefficient for variable {k} but problem has {}",
                    self.num_vars
                )));
            }
            if f.len() != n {
                return Err(Error::InvalidArgument(format!(
                    "coefficient for variable {k} has length {}, block has {n}",
                    f.len()
                )));
            }
            if !f.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            match merged.iter_mut().find(|(j, _)| *j == k) {
                Some((_, g)) => *g += f,
                None => merged.push((k, f)),
            }
        }
        merged.sort_by_key(|(k, _)| *k);
        self.blocks.push(ConeBlock::NonNeg {
            constant,
            coefficients: merged,
        });
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::InvalidArgument("problem has no blocks".into()));
        }
        if self.objective.len() != self.num_vars || !self.objective.iter().all(|c| c.is_finite())
        {
            return Err(Error::InvalidArgument("malformed objective".into()));
        }
        Ok(())
    }

    /// Minimum eigenvalue of every block at `y`.
    pub fn block_min_eigenvalues(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.blocks
            .iter()
            .map(|b| b.value(y).min_eigenvalue())
            .collect()
    }

    /// `min t` s.t. every block `+ t I ⪰ 0`, with `t ≥ -1` so the margin stays
    /// bounded when the blocks can be made arbitrarily positive.
    fn phase_one(&self) -> ConicProblem {
        let m = self.num_vars;
        let mut blocks: Vec<ConeBlock> = self
            .blocks
            .iter()
            .map(|b| match b {
                ConeBlock::Psd {
                    constant,
                    coefficients,
                } => {
                    let n = constant.nrows();
                    let mut coefficients = coefficients.clone();
                    coefficients.push((m, DMatrix::identity(n, n)));
                    ConeBlock::Psd {
                        constant: constant.clone(),
                        coefficients,
                    }
                }
                ConeBlock::NonNeg {
                    constant,
                    coefficients,
                } => {
                    let mut coefficients = coefficients.clone();
                    coefficients.push((m, DVector::from_element(constant.len(), 1.0)));
                    ConeBlock::NonNeg {
                        constant: constant.clone(),
                        coefficients,
                    }
                }
            })
            .collect();
        blocks.push(ConeBlock::NonNeg {
            constant: DVector::from_element(1, 1.0),
            coefficients: vec![(m, DVector::from_element(1, 1.0))],
        });
        let mut objective = vec![0.0; m + 1];
        objective[m] = -1.0;
        ConicProblem {
            num_vars: m + 1,
            objective,
            blocks,
        }
    }
}

/// `target += alpha * x`
pub(crate) fn mat_axpy(target: &mut DMatrix<f64>, alpha: f64, x: &DMatrix<f64>) {
    target.zip_apply(x, |t, v| *t += alpha * v);
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::InvalidArgument("non-finite matrix entry".into()));
            }
            if j < i && (v - m[(j, i)]).abs() > 1e-12 * (1.0 + v.abs()) {
                return Err(Error::InvalidArgument(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    /// Phase-I margin `t* ≤ -tol`: a strictly feasible point was found.
    Feasible,
    /// Phase-I margin `t* ≥ tol`, or the LMI was found infeasible.
    Infeasible,
    Optimal,
    /// Progress stalled with primal and dual residuals below `tol` and a
    /// relative gap below `√tol`.
    NearOptimal,
    /// The objective diverged.
    Unbounded,
    /// Marginal phase-I margin, iteration cap, or a failed certificate check.
    NumericalTrouble,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

impl SolverSettings {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "tolerance must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidArgument("iteration cap must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub y: Vec<f64>,
    /// `c·y` at the returned point (zero for pure feasibility).
    pub objective: f64,
    /// Primal objective at the returned primal point. When the primal point
    /// is feasible this bounds the optimum of `c·y` from above.
    pub primal_objective: f64,
    /// Phase-I margin `t*`: the smallest uniform shift making every block PSD.
    pub phase1_margin: Option<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub duality_gap: f64,
    pub iterations: usize,
    /// Smallest eigenvalue over all blocks at `y`.
    pub min_block_eigenvalue: f64,
    #[serde(skip)]
    pub primal: Vec<BlockValue>,
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> Result<f64> {
    if !m.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    if m.nrows() != m.ncols() {
        return Err(Error::InvalidArgument("matrix is not square".into()));
    }
    if m.nrows() == 0 {
        return Ok(f64::INFINITY);
    }
    let sym = (m + m.transpose()) * 0.5;
    Ok(SymmetricEigen::new(sym)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Decide whether `F0 + Σ y_k F_k ⪰ 0` has a strictly feasible point by
/// minimizing the uniform slack `t` with `F(y) + t I ⪰ 0`.
pub fn solve_feasibility(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    settings.check()?;
    problem.validate()?;
    let phase1 = problem.phase_one();
    let out = ipm::solve(&phase1, settings);
    let m = problem.num_vars;
    let t = out.y[m];
    let y = out.y[..m].to_vec();
    let eigs = problem.block_min_eigenvalues(&y)?;
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let status = match out.status {
        ipm::Status::Converged if t <= -settings.tol => {
            if min_eig >= -10.0 * settings.tol {
                SolveStatus::Feasible
            } else {
                SolveStatus::NumericalTrouble
            }
        }
        ipm::Status::Converged if t >= settings.tol => SolveStatus::Infeasible,
        _ => SolveStatus::NumericalTrouble,
    };
    Ok(ConicSolution {
        status,
        objective: problem.objective.iter().zip(&y).map(|(c, y)| c * y).sum(),
        primal_objective: out.primal_objective,
        y,
        phase1_margin: Some(t),
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
        duality_gap: out.gap,
        iterations: out.iterations,
        min_block_eigenvalue: min_eig,
        primal: out.x,
    })
}

/// Maximize `c·y` over the LMI. Runs the phase-I test first, so an
/// infeasible problem comes back as [`SolveStatus::Infeasible`].
pub fn solve_optimize(problem: &ConicProblem, settings: &SolverSettings) -> Result<ConicSolution> {
    let feas = solve_feasibility(problem, settings)?;
    if feas.status != SolveStatus::Feasible {
        return Ok(feas);
    }
    let out = ipm::solve(problem, settings);
    let eigs = problem.block_min_eigenvalues(&out.y)?;
    let min_eig = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    let status = match out.status {
        ipm::Status::Converged if min_eig >= -10.0 * settings.tol => SolveStatus::Optimal,
        ipm::Status::Breakdown | ipm::Status::MaxIter
            if out.primal_residual <= settings.tol
                && out.dual_residual <= settings.tol
                && out.gap <= settings.tol.sqrt()
                && min_eig >= -10.0 * settings.tol =>
        {
            SolveStatus::NearOptimal
        }
        ipm::Status::DualUnbounded => SolveStatus::Unbounded,
        ipm::Status::DualInfeasible => SolveStatus::Infeasible,
        _ => SolveStatus::NumericalTrouble,
    };
    Ok(ConicSolution {
        status,
        objective: out.dual_objective,
        primal_objective: out.primal_objective,
        y: out.y,
        phase1_margin: feas.phase1_margin,
        primal_residual: out.primal_residual,
        dual_residual: out.dual_residual,
        duality_gap: out.gap,
        iterations: out.iterations,
        min_block_eigenvalue: min_eig,
        primal: out.x,
    })
}
