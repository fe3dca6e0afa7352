//! Infeasible-start primal-dual path following with Nesterov-Todd scaling
//! and a Mehrotra-type predictor-corrector.
//!
//! Primal: `min Σ <F0_j, X_j>` s.t. `Σ_j <F_kj, X_j> = -c_k`, `X ⪰ 0`.
//! Dual:   `max c·y` s.t. `S_j = F0_j + Σ_k y_k F_kj ⪰ 0`.
//!
//! Each iteration solves the Schur complement system
//! `M dy = r` with `M_kl = Σ_j <F_kj, W_j F_lj W_j>`, where `W_j` is the NT
//! scaling point (`W S W = X`). The search direction then follows from
//! `dS = R_d + Σ dy_k F_k` and `dX = R_c - W dS W`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};

use super::{mat_axpy, BlockValue, ConeBlock, ConicProblem, SolverSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Status {
    Converged,
    /// `c·y` grows without bound.
    DualUnbounded,
    /// No `y` makes the blocks PSD (primal objective diverges to -inf).
    DualInfeasible,
    MaxIter,
    /// Lost positive definiteness or the Schur system became singular.
    Breakdown,
}

#[derive(Debug, Clone)]
pub(crate) struct Output {
    pub status: Status,
    pub y: Vec<f64>,
    pub x: Vec<BlockValue>,
    pub dual_objective: f64,
    pub primal_objective: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    pub iterations: usize,
}

const DIVERGENCE: f64 = 1e10;

/// Per-block scaling data for one iteration.
enum Scaling {
    Dense {
        w: DMatrix<f64>,
        /// `W = G Gᵀ` with `G⁻¹ X G⁻ᵀ = Gᵀ S G = diag(v)`
        g: DMatrix<f64>,
        g_inv: DMatrix<f64>,
        v: DVector<f64>,
        s_inv: DMatrix<f64>,
    },
    Diag {
        /// `x / s`
        d: DVector<f64>,
        s_inv: DVector<f64>,
    },
}

fn inner(a: &BlockValue, b: &BlockValue) -> f64 {
    match (a, b) {
        (BlockValue::Dense(a), BlockValue::Dense(b)) => a.dot(b),
        (BlockValue::Diag(a), BlockValue::Diag(b)) => a.dot(b),
        _ => unreachable!("block kinds always match"),
    }
}

fn norm_sq(a: &BlockValue) -> f64 {
    inner(a, a)
}

fn sub(a: &BlockValue, b: &BlockValue) -> BlockValue {
    match (a, b) {
        (BlockValue::Dense(a), BlockValue::Dense(b)) => BlockValue::Dense(a - b),
        (BlockValue::Diag(a), BlockValue::Diag(b)) => BlockValue::Diag(a - b),
        _ => unreachable!("block kinds always match"),
    }
}

fn axpy(alpha: f64, x: &BlockValue, target: &mut BlockValue) {
    match (x, target) {
        (BlockValue::Dense(x), BlockValue::Dense(t)) => mat_axpy(t, alpha, x),
        (BlockValue::Diag(x), BlockValue::Diag(t)) => t.axpy(alpha, x, 1.0),
        _ => unreachable!("block kinds always match"),
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `<F_k, V>` accumulated into `out[k]` for each coefficient of the block.
fn apply_adjoint(block: &ConeBlock, v: &BlockValue, out: &mut DVector<f64>) {
    match (block, v) {
        (ConeBlock::Psd { coefficients, .. }, BlockValue::Dense(v)) => {
            for (k, f) in coefficients {
                out[*k] += f.dot(v);
            }
        }
        (ConeBlock::NonNeg { coefficients, .. }, BlockValue::Diag(v)) => {
            for (k, f) in coefficients {
                out[*k] += f.dot(v);
            }
        }
        _ => unreachable!("block kinds always match"),
    }
}

/// `Σ_k dy_k F_k` for one block.
fn combine(block: &ConeBlock, dy: &DVector<f64>) -> BlockValue {
    match block {
        ConeBlock::Psd {
            constant,
            coefficients,
        } => {
            let n = constant.nrows();
            let mut m = DMatrix::zeros(n, n);
            for (k, f) in coefficients {
                mat_axpy(&mut m, dy[*k], f);
            }
            BlockValue::Dense(m)
        }
        ConeBlock::NonNeg {
            constant,
            coefficients,
        } => {
            let mut v = DVector::zeros(constant.len());
            for (k, f) in coefficients {
                v.axpy(dy[*k], f, 1.0);
            }
            BlockValue::Diag(v)
        }
    }
}

fn constant_of(block: &ConeBlock) -> BlockValue {
    match block {
        ConeBlock::Psd { constant, .. } => BlockValue::Dense(constant.clone()),
        ConeBlock::NonNeg { constant, .. } => BlockValue::Diag(constant.clone()),
    }
}

/// `W V W` (dense) or `d ∘ V` (diagonal).
fn scale(sc: &Scaling, v: &BlockValue) -> BlockValue {
    match (sc, v) {
        (Scaling::Dense { w, .. }, BlockValue::Dense(v)) => {
            let mut r = w * v * w;
            symmetrize(&mut r);
            BlockValue::Dense(r)
        }
        (Scaling::Diag { d, .. }, BlockValue::Diag(v)) => BlockValue::Diag(d.component_mul(v)),
        _ => unreachable!("block kinds always match"),
    }
}

fn nt_scaling(x: &BlockValue, s: &BlockValue) -> Option<Scaling> {
    match (x, s) {
        (BlockValue::Dense(x), BlockValue::Dense(s)) => {
            let l = Cholesky::new(x.clone())?.l();
            let t = l.transpose() * s * &l;
            let eig = SymmetricEigen::new((&t + t.transpose()) * 0.5);
            if eig.eigenvalues.iter().any(|v| !(*v > 0.0)) {
                return None;
            }
            let lam = &eig.eigenvalues;
            let lq = &l * &eig.eigenvectors;
            let g = &lq * DMatrix::from_diagonal(&lam.map(|v| v.powf(-0.25)));
            let mut w = &g * g.transpose();
            symmetrize(&mut w);
            let l_inv = l.solve_lower_triangular(&DMatrix::identity(l.nrows(), l.nrows()))?;
            let g_inv = DMatrix::from_diagonal(&lam.map(|v| v.powf(0.25))) * eig.eigenvectors.transpose() * l_inv;
            let v = lam.map(f64::sqrt);
            let mut s_inv = &lq * DMatrix::from_diagonal(&lam.map(|v| 1.0 / v)) * lq.transpose();
            symmetrize(&mut s_inv);
            Some(Scaling::Dense { w, g, g_inv, v, s_inv })
        }
        (BlockValue::Diag(x), BlockValue::Diag(s)) => {
            if x.iter().chain(s.iter()).any(|v| !(*v > 0.0)) {
                return None;
            }
            Some(Scaling::Diag {
                d: x.component_div(s),
                s_inv: s.map(|v| 1.0 / v),
            })
        }
        _ => unreachable!("block kinds always match"),
    }
}

/// Largest `α` with `x + α dx` in the cone (may be infinite).
fn max_step(x: &BlockValue, dx: &BlockValue) -> Option<f64> {
    match (x, dx) {
        (BlockValue::Dense(x), BlockValue::Dense(dx)) => {
            let l = Cholesky::new(x.clone())?.l();
            let a = l.solve_lower_triangular(dx)?;
            let z = l.solve_lower_triangular(&a.transpose())?;
            let lmin = SymmetricEigen::new((&z + z.transpose()) * 0.5)
                .eigenvalues
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
            Some(if lmin >= 0.0 { f64::INFINITY } else { -1.0 / lmin })
        }
        (BlockValue::Diag(x), BlockValue::Diag(dx)) => Some(
            x.iter()
                .zip(dx.iter())
                .filter(|(_, d)| **d < 0.0)
                .map(|(x, d)| -x / d)
                .fold(f64::INFINITY, f64::min),
        ),
        _ => unreachable!("block kinds always match"),
    }
}

fn schur_matrix(p: &ConicProblem, scalings: &[Scaling]) -> DMatrix<f64> {
    let m = p.num_vars;
    let mut schur = DMatrix::zeros(m, m);
    for (block, sc) in p.blocks.iter().zip(scalings) {
        match (block, sc) {
            (ConeBlock::Psd { coefficients, .. }, Scaling::Dense { w, .. }) => {
                for (k, fk) in coefficients {
                    let g = w * fk * w;
                    for (l, fl) in coefficients {
                        if l >= k {
                            let v = g.dot(fl);
                            schur[(*k, *l)] += v;
                            if l != k {
                                schur[(*l, *k)] += v;
                            }
                        }
                    }
                }
            }
            (ConeBlock::NonNeg { coefficients, .. }, Scaling::Diag { d, .. }) => {
                for (k, fk) in coefficients {
                    let g = fk.component_mul(d);
                    for (l, fl) in coefficients {
                        if l >= k {
                            let v = g.dot(fl);
                            schur[(*k, *l)] += v;
                            if l != k {
                                schur[(*l, *k)] += v;
                            }
                        }
                    }
                }
            }
            _ => unreachable!("block kinds always match"),
        }
    }
    schur
}

/// `G_kl = Σ_j <F_kj, F_lj>`
fn gram_matrix(p: &ConicProblem) -> DMatrix<f64> {
    let m = p.num_vars;
    let mut g = DMatrix::zeros(m, m);
    for block in &p.blocks {
        match block {
            ConeBlock::Psd { coefficients, .. } => {
                for (k, fk) in coefficients {
                    for (l, fl) in coefficients {
                        g[(*k, *l)] += fk.dot(fl);
                    }
                }
            }
            ConeBlock::NonNeg { coefficients, .. } => {
                for (k, fk) in coefficients {
                    for (l, fl) in coefficients {
                        g[(*k, *l)] += fk.dot(fl);
                    }
                }
            }
        }
    }
    g
}

/// Factor the Schur complement, regularizing lightly if it is singular.
fn factor(schur: DMatrix<f64>) -> Option<Cholesky<f64, nalgebra::Dyn>> {
    let m = schur.nrows();
    let scale = (0..m).map(|i| schur[(i, i)].abs()).fold(1e-300, f64::max);
    if let Some(c) = Cholesky::new(schur.clone()) {
        return Some(c);
    }
    let mut delta = 1e-14 * scale;
    for _ in 0..6 {
        let reg = &schur + DMatrix::identity(m, m) * delta;
        if let Some(c) = Cholesky::new(reg) {
            return Some(c);
        }
        delta *= 100.0;
    }
    None
}

struct Direction {
    dy: DVector<f64>,
    dx: Vec<BlockValue>,
    ds: Vec<BlockValue>,
}

fn direction(
    p: &ConicProblem,
    scalings: &[Scaling],
    chol: &Cholesky<f64, nalgebra::Dyn>,
    gram: Option<&Cholesky<f64, nalgebra::Dyn>>,
    rp: &DVector<f64>,
    rd: &[BlockValue],
    rc: &[BlockValue],
) -> Direction {
    let m = p.num_vars;
    let mut rhs = -rp.clone();
    for (j, block) in p.blocks.iter().enumerate() {
        let v = sub(&rc[j], &scale(&scalings[j], &rd[j]));
        apply_adjoint(block, &v, &mut rhs);
    }
    let dy = if m > 0 {
        chol.solve(&rhs)
    } else {
        DVector::zeros(0)
    };
    let mut dx = Vec::with_capacity(p.blocks.len());
    let mut ds = Vec::with_capacity(p.blocks.len());
    for (j, block) in p.blocks.iter().enumerate() {
        let mut dsj = combine(block, &dy);
        axpy(1.0, &rd[j], &mut dsj);
        let dxj = sub(&rc[j], &scale(&scalings[j], &dsj));
        dx.push(dxj);
        ds.push(dsj);
    }
    // W dS W loses accuracy when W is large; restore A(dX) = rp by a
    // least-norm correction in span{F_k}
    if let Some(gram) = gram {
        let mut r = rp.clone();
        for (block, dxj) in p.blocks.iter().zip(&dx) {
            let mut a = DVector::zeros(m);
            apply_adjoint(block, dxj, &mut a);
            r -= a;
        }
        let z = gram.solve(&r);
        for (block, dxj) in p.blocks.iter().zip(dx.iter_mut()) {
            axpy(1.0, &combine(block, &z), dxj);
        }
    }
    Direction { dy, dx, ds }
}

fn initial_scale(block: &ConeBlock, c: &[f64]) -> (f64, f64) {
    let n = block.dim() as f64;
    let (f0_norm, coeffs): (f64, Vec<(usize, f64)>) = match block {
        ConeBlock::Psd {
            constant,
            coefficients,
        } => (
            constant.norm(),
            coefficients.iter().map(|(k, f)| (*k, f.norm())).collect(),
        ),
        ConeBlock::NonNeg {
            constant,
            coefficients,
        } => (
            constant.norm(),
            coefficients.iter().map(|(k, f)| (*k, f.norm())).collect(),
        ),
    };
    let mut xi = 10f64.max(n.sqrt());
    let mut eta = 10f64.max(n.sqrt()).max(f0_norm);
    for (k, fnorm) in coeffs {
        xi = xi.max(n.sqrt() * (1.0 + c[k].abs()) / (1.0 + fnorm));
        eta = eta.max(fnorm);
    }
    (xi, eta)
}

pub(crate) fn solve(p: &ConicProblem, settings: &SolverSettings) -> Output {
    let m = p.num_vars;
    let tol = settings.tol;
    let c = DVector::from_column_slice(&p.objective);
    let total_dim: usize = p.blocks.iter().map(|b| b.dim()).sum();

    let mut x: Vec<BlockValue> = Vec::new();
    let mut s: Vec<BlockValue> = Vec::new();
    for b in &p.blocks {
        let (xi, eta) = initial_scale(b, &p.objective);
        match b {
            ConeBlock::Psd { constant, .. } => {
                let n = constant.nrows();
                x.push(BlockValue::Dense(DMatrix::identity(n, n) * xi));
                s.push(BlockValue::Dense(DMatrix::identity(n, n) * eta));
            }
            ConeBlock::NonNeg { constant, .. } => {
                let n = constant.len();
                x.push(BlockValue::Diag(DVector::from_element(n, xi)));
                s.push(BlockValue::Diag(DVector::from_element(n, eta)));
            }
        }
    }
    let mut y = DVector::<f64>::zeros(m);
    let gram = if m > 0 { Cholesky::new(gram_matrix(p)) } else { None };

    let c_norm = c.norm();
    let f0_norm = p
        .blocks
        .iter()
        .map(|b| norm_sq(&constant_of(b)))
        .sum::<f64>()
        .sqrt();

    let mut out = Output {
        status: Status::MaxIter,
        y: y.iter().copied().collect(),
        x: x.clone(),
        dual_objective: 0.0,
        primal_objective: f64::INFINITY,
        primal_residual: f64::INFINITY,
        dual_residual: f64::INFINITY,
        gap: f64::INFINITY,
        iterations: 0,
    };

    for iter in 0..=settings.max_iter {
        // residuals
        let mut ax = DVector::zeros(m);
        for (b, xb) in p.blocks.iter().zip(&x) {
            apply_adjoint(b, xb, &mut ax);
        }
        let rp = -&c - &ax;
        let ys: Vec<f64> = y.iter().copied().collect();
        let rd: Vec<BlockValue> = p
            .blocks
            .iter()
            .zip(&s)
            .map(|(b, sb)| sub(&b.value(&ys), sb))
            .collect();
        let pobj: f64 = p
            .blocks
            .iter()
            .zip(&x)
            .map(|(b, xb)| inner(&constant_of(b), xb))
            .sum();
        let dobj = c.dot(&y);
        let xs: f64 = x.iter().zip(&s).map(|(a, b)| inner(a, b)).sum();
        let mu = xs / total_dim as f64;

        let pres = rp.norm() / (1.0 + c_norm);
        let dres = rd.iter().map(norm_sq).sum::<f64>().sqrt() / (1.0 + f0_norm);
        let denom = 1.0 + pobj.abs() + dobj.abs();
        let gap = (pobj - dobj).abs() / denom;
        let compl = xs.abs() / denom;

        out.y = ys;
        out.x = x.clone();
        out.dual_objective = dobj;
        out.primal_objective = pobj;
        out.primal_residual = pres;
        out.dual_residual = dres;
        out.gap = gap.max(compl);
        out.iterations = iter;

        if !(pobj.is_finite() && dobj.is_finite() && mu.is_finite()) {
            out.status = Status::Breakdown;
            return out;
        }
        if pres <= tol && dres <= tol && gap <= tol && compl <= tol {
            out.status = Status::Converged;
            return out;
        }
        let y_norm = y.norm();
        let x_norm = x.iter().map(norm_sq).sum::<f64>().sqrt();
        if dres <= tol.sqrt() && dobj > DIVERGENCE * (1.0 + f0_norm) && y_norm > DIVERGENCE {
            out.status = Status::DualUnbounded;
            return out;
        }
        if pres <= tol.sqrt() && pobj < -DIVERGENCE * (1.0 + c_norm) && x_norm > DIVERGENCE {
            out.status = Status::DualInfeasible;
            return out;
        }
        if iter == settings.max_iter {
            break;
        }

        let Some(scalings) = x
            .iter()
            .zip(&s)
            .map(|(xb, sb)| nt_scaling(xb, sb))
            .collect::<Option<Vec<_>>>()
        else {
            out.status = Status::Breakdown;
            return out;
        };
        let Some(chol) = factor(schur_matrix(p, &scalings)) else {
            out.status = Status::Breakdown;
            return out;
        };

        // predictor: aim at mu = 0
        let rc_aff: Vec<BlockValue> = x
            .iter()
            .map(|xb| match xb {
                BlockValue::Dense(m) => BlockValue::Dense(-m),
                BlockValue::Diag(v) => BlockValue::Diag(-v),
            })
            .collect();
        let aff = direction(p, &scalings, &chol, gram.as_ref(), &rp, &rd, &rc_aff);
        let Some((ap, ad)) = step_lengths(&x, &s, &aff) else {
            out.status = Status::Breakdown;
            return out;
        };
        let (ap, ad) = (ap.min(1.0), ad.min(1.0));
        let mut mu_aff = 0.0;
        for j in 0..x.len() {
            let mut xa = x[j].clone();
            axpy(ap, &aff.dx[j], &mut xa);
            let mut sa = s[j].clone();
            axpy(ad, &aff.ds[j], &mut sa);
            mu_aff += inner(&xa, &sa);
        }
        mu_aff /= total_dim as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // corrector with the second-order term
        let rc: Vec<BlockValue> = (0..x.len())
            .map(|j| match (&scalings[j], &x[j], &aff.dx[j], &aff.ds[j]) {
                (
                    Scaling::Dense { g, g_inv, v, s_inv, .. },
                    BlockValue::Dense(xb),
                    BlockValue::Dense(dxa),
                    BlockValue::Dense(dsa),
                ) => {
                    // second-order term in the scaled space, mapped back by G
                    let dxt = g_inv * dxa * g_inv.transpose();
                    let dst = g.transpose() * dsa * g;
                    let prod = &dxt * &dst;
                    let n = v.len();
                    let h = DMatrix::from_fn(n, n, |i, j| {
                        (prod[(i, j)] + prod[(j, i)]) / (v[i] + v[j])
                    });
                    let mut cross = g * h * g.transpose();
                    symmetrize(&mut cross);
                    BlockValue::Dense(s_inv * (sigma * mu) - xb - cross)
                }
                (
                    Scaling::Diag { s_inv, .. },
                    BlockValue::Diag(xb),
                    BlockValue::Diag(dxa),
                    BlockValue::Diag(dsa),
                ) => BlockValue::Diag(
                    s_inv * (sigma * mu) - xb - dxa.component_mul(dsa).component_mul(s_inv),
                ),
                _ => unreachable!("block kinds always match"),
            })
            .collect();
        let dir = direction(p, &scalings, &chol, gram.as_ref(), &rp, &rd, &rc);
        let Some((ap_max, ad_max)) = step_lengths(&x, &s, &dir) else {
            out.status = Status::Breakdown;
            return out;
        };
        let gamma = 0.9 + 0.09 * ap.min(ad);
        let ap = (gamma * ap_max).min(1.0);
        let ad = (gamma * ad_max).min(1.0);

        for j in 0..x.len() {
            axpy(ap, &dir.dx[j], &mut x[j]);
            axpy(ad, &dir.ds[j], &mut s[j]);
            if let BlockValue::Dense(m) = &mut x[j] {
                symmetrize(m);
            }
            if let BlockValue::Dense(m) = &mut s[j] {
                symmetrize(m);
            }
        }
        y.axpy(ad, &dir.dy, 1.0);
    }
    out.status = Status::MaxIter;
    out
}

fn step_lengths(x: &[BlockValue], s: &[BlockValue], dir: &Direction) -> Option<(f64, f64)> {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for j in 0..x.len() {
        ap = ap.min(max_step(&x[j], &dir.dx[j])?);
        ad = ad.min(max_step(&s[j], &dir.ds[j])?);
    }
    Some((ap, ad))
}
