//! Truncated moment and localizing matrices.
//!
//! Unknowns are the prices `f(s)` of canonical semigroup elements of degree
//! at most `2d`. `f(1) = 1` and the quoted generator prices are pinned; every
//! other element gets a free slot. A matrix cell `f(s·t)` is canonicalized
//! first, so it becomes an affine expression in the slots.
//!
//! For a relaxation degree `d`, the assembled blocks are
//! - the moment matrix `[f(s t)]` over the basis of degree `≤ d`,
//! - one localizing matrix `[f(e_i s t)]` per generator, basis of degree `≤ d - 1`,
//! - the support matrix `[β f(s t) - Σ_i f(e_i s t)]`, basis of degree `≤ d - 1`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conic::ConicProblem;
use crate::error::{Error, Result};
use crate::semigroup::{canonicalize, elements_up_to, GeneratorSet, SemigroupElement};

/// Refuse to assemble relaxations with more canonical elements than this.
pub const MAX_ELEMENTS: usize = 5000;

/// `constant + Σ coefficient · slot`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineExpr {
    pub constant: f64,
    /// `(slot, coefficient)`, sorted by slot, no duplicates.
    pub terms: Vec<(usize, f64)>,
}

impl AffineExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            terms: Vec::new(),
        }
    }

    pub fn evaluate(&self, slots: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|(k, c)| c * slots[*k]).sum::<f64>()
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, other: &AffineExpr, alpha: f64) {
        self.constant += alpha * other.constant;
        for (k, c) in &other.terms {
            match self.terms.binary_search_by_key(k, |(j, _)| *j) {
                Ok(pos) => self.terms[pos].1 += alpha * c,
                Err(pos) => self.terms.insert(pos, (*k, alpha * c)),
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        self.terms.iter().all(|(_, c)| *c == 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlotRef {
    Pinned(f64),
    Free(usize),
}

/// Bijection between canonical elements of degree `≤ 2d` and moment slots,
/// with `f(1)` and the quoted generator prices pinned.
#[derive(Debug, Clone)]
pub struct MomentIndex {
    gens: GeneratorSet,
    degree: usize,
    elements: Vec<SemigroupElement>,
    lookup: HashMap<SemigroupElement, SlotRef>,
    slots: Vec<SemigroupElement>,
}

impl MomentIndex {
    /// `prices[i]` is the quoted price of generator `i`, or `None` for an
    /// unpriced generator (e.g. a bound target).
    pub fn new(gens: GeneratorSet, prices: &[Option<f64>], degree: usize) -> Result<Self> {
        if prices.len() != gens.len() {
            return Err(Error::InvalidArgument(format!(
                "{} prices for {} generators",
                prices.len(),
                gens.len()
            )));
        }
        let size = canonical_count(&gens, 2 * degree)?;
        if size > MAX_ELEMENTS as u128 {
            return Err(Error::BasisTooLarge {
                size: usize::try_from(size).unwrap_or(usize::MAX),
                limit: MAX_ELEMENTS,
            });
        }
        let elements = elements_up_to(&gens, 2 * degree);
        let mut lookup = HashMap::with_capacity(elements.len() + gens.len());
        lookup.insert(gens.identity(), SlotRef::Pinned(1.0));
        for (i, p) in prices.iter().enumerate() {
            if let Some(p) = p {
                lookup.insert(gens.unit(i), SlotRef::Pinned(*p));
            }
        }
        let mut slots = Vec::new();
        for e in &elements {
            if !lookup.contains_key(e) {
                lookup.insert(e.clone(), SlotRef::Free(slots.len()));
                slots.push(e.clone());
            }
        }
        Ok(Self {
            gens,
            degree,
            elements,
            lookup,
            slots,
        })
    }

    pub fn generators(&self) -> &GeneratorSet {
        &self.gens
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Canonical elements of degree `≤ 2d`, graded lexicographic.
    pub fn elements(&self) -> &[SemigroupElement] {
        &self.elements
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    pub fn slot_element(&self, k: usize) -> &SemigroupElement {
        &self.slots[k]
    }

    pub fn slot_of(&self, e: &SemigroupElement) -> Option<SlotRef> {
        self.lookup.get(e).copied()
    }

    /// `f(raw)` as an affine expression in the slots.
    pub fn affine(&self, raw: &SemigroupElement) -> Result<AffineExpr> {
        // pinned generators may sit above the enumerated range when d = 0
        if let Some(SlotRef::Pinned(v)) = self.lookup.get(raw) {
            return Ok(AffineExpr::constant(*v));
        }
        let expansion = canonicalize(raw, &self.gens)?;
        let mut out = AffineExpr::default();
        for (e, c) in expansion.elements(&self.gens) {
            match self.lookup.get(&e) {
                Some(SlotRef::Pinned(v)) => out.constant += c * v,
                Some(SlotRef::Free(k)) => out.add_scaled(
                    &AffineExpr {
                        constant: 0.0,
                        terms: vec![(*k, 1.0)],
                    },
                    c,
                ),
                None => {
                    return Err(Error::Internal(format!(
                        "element {} of degree {} is outside the degree-{} index",
                        self.gens.describe(&e),
                        e.degree(),
                        2 * self.degree
                    )))
                }
            }
        }
        out.terms.retain(|(_, c)| *c != 0.0);
        Ok(out)
    }

    /// Slot values obtained by evaluating `moment(element)` on every free slot.
    pub fn slot_values(&self, moment: impl Fn(&SemigroupElement) -> f64) -> Vec<f64> {
        self.slots.iter().map(moment).collect()
    }
}

/// Number of canonical elements of degree `≤ max_degree` without enumerating
/// them.
fn canonical_count(gens: &GeneratorSet, max_degree: usize) -> Result<u128> {
    let n = gens.n_assets();
    let k = gens.len() - n;
    let mut total: u128 = 0;
    for j in 0..=k.min(max_degree) {
        let subsets = crate::semigroup::count_basis(j, k - j)?;
        let monomials = crate::semigroup::count_basis(n, max_degree - j)?;
        total = subsets
            .checked_mul(monomials)
            .and_then(|v| total.checked_add(v))
            .ok_or(Error::Overflow("canonical element count"))?;
    }
    Ok(total)
}

/// A symmetric matrix of affine expressions in the moment slots.
#[derive(Debug, Clone)]
pub struct LmiBlock {
    pub label: String,
    pub basis: Vec<SemigroupElement>,
    cells: Vec<AffineExpr>,
}

impl LmiBlock {
    fn build(
        label: String,
        basis: Vec<SemigroupElement>,
        mut cell: impl FnMut(&SemigroupElement, &SemigroupElement) -> Result<AffineExpr>,
    ) -> Result<Self> {
        let n = basis.len();
        let mut cells = vec![AffineExpr::default(); n * n];
        for i in 0..n {
            for j in i..n {
                let c = cell(&basis[i], &basis[j])?;
                cells[j * n + i] = c.clone();
                cells[i * n + j] = c;
            }
        }
        Ok(Self {
            label,
            basis,
            cells,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn cell(&self, i: usize, j: usize) -> &AffineExpr {
        &self.cells[i * self.dim() + j]
    }

    pub fn evaluate(&self, slots: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.cell(i, j).evaluate(slots))
    }

    /// Constant matrix and per-slot coefficient matrices.
    pub fn coefficient_matrices(&self) -> (DMatrix<f64>, Vec<(usize, DMatrix<f64>)>) {
        let n = self.dim();
        let constant = DMatrix::from_fn(n, n, |i, j| self.cell(i, j).constant);
        let mut by_slot: Vec<(usize, DMatrix<f64>)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for (k, c) in &self.cell(i, j).terms {
                    let pos = match by_slot.binary_search_by_key(k, |(s, _)| *s) {
                        Ok(p) => p,
                        Err(p) => {
                            by_slot.insert(p, (*k, DMatrix::zeros(n, n)));
                            p
                        }
                    };
                    by_slot[pos].1[(i, j)] += c;
                }
            }
        }
        (constant, by_slot)
    }
}

/// Support bound `β ≥ sup Σ_i e_i(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaBound(f64);

impl BetaBound {
    pub fn new(beta: f64) -> Result<Self> {
        if beta > 0.0 && beta.is_finite() {
            Ok(Self(beta))
        } else {
            Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")))
        }
    }

    /// `β = Σ_i sup_{[0,B]} e_i(x)`, using box corners for abs-linear payoffs.
    pub fn from_support(gens: &GeneratorSet, upper: &[f64]) -> Result<Self> {
        Self::new(gens.generators().iter().map(|g| g.sup_on_box(upper)).sum())
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

/// Condition (i): `[f(s t)]` for `s, t` of degree `≤ d`.
pub fn build_moment_matrix(index: &MomentIndex, d: usize) -> Result<LmiBlock> {
    check_degree(index, d)?;
    let basis = elements_up_to(&index.gens, d);
    LmiBlock::build("moment".into(), basis, |s, t| index.affine(&s.mul(t)))
}

/// Condition (ii) for generator `i`: `[f(e_i s t)]` for `s, t` of degree `≤ d - 1`.
pub fn build_localizing_matrix(index: &MomentIndex, generator: usize, d: usize) -> Result<LmiBlock> {
    check_degree(index, d)?;
    if generator >= index.gens.len() {
        return Err(Error::InvalidArgument(format!(
            "generator {generator} out of range"
        )));
    }
    let unit = index.gens.unit(generator);
    let basis = elements_up_to(&index.gens, d.saturating_sub(1));
    let label = format!("localizing {}", index.gens.generators()[generator].name);
    LmiBlock::build(label, basis, |s, t| index.affine(&unit.mul(&s.mul(t))))
}

/// Condition (iii): `[β f(s t) - Σ_i f(e_i s t)]` for `s, t` of degree `≤ d - 1`.
pub fn build_beta_matrix(index: &MomentIndex, beta: BetaBound, d: usize) -> Result<LmiBlock> {
    check_degree(index, d)?;
    let units: Vec<SemigroupElement> = (0..index.gens.len()).map(|i| index.gens.unit(i)).collect();
    let basis = elements_up_to(&index.gens, d.saturating_sub(1));
    LmiBlock::build("support".into(), basis, |s, t| {
        let st = s.mul(t);
        let mut cell = AffineExpr::default();
        cell.add_scaled(&index.affine(&st)?, beta.value());
        for u in &units {
            cell.add_scaled(&index.affine(&u.mul(&st))?, -1.0);
        }
        cell.terms.retain(|(_, c)| *c != 0.0);
        Ok(cell)
    })
}

fn check_degree(index: &MomentIndex, d: usize) -> Result<()> {
    if d > index.degree {
        return Err(Error::Internal(format!(
            "block degree {d} exceeds the index degree {}",
            index.degree
        )));
    }
    Ok(())
}

/// All blocks of a degree-`d` relaxation plus the support box on the slots.
#[derive(Debug, Clone)]
pub struct MomentProblem {
    pub index: MomentIndex,
    pub blocks: Vec<LmiBlock>,
    pub beta: BetaBound,
    pub degree: usize,
    /// Per-slot `[0, sup_box s]` bounds. Every payoff is nonnegative on the
    /// support box, so these hold for any measure supported there.
    pub slot_bounds: Vec<(f64, f64)>,
}

impl MomentProblem {
    pub fn block_dims(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.dim()).collect()
    }

    /// Conic form: one PSD block per LMI block, then one linear block for the
    /// slot bounds.
    pub fn to_conic(&self) -> Result<ConicProblem> {
        let m = self.index.slot_count();
        let mut p = ConicProblem::new(m);
        for b in &self.blocks {
            let (constant, coeffs) = b.coefficient_matrices();
            p.add_psd_block(constant, coeffs)?;
        }
        if m > 0 {
            let mut constant = DVector::zeros(2 * m);
            let mut coeffs = Vec::with_capacity(m);
            for (k, (lo, hi)) in self.slot_bounds.iter().enumerate() {
                constant[2 * k] = -lo;
                constant[2 * k + 1] = *hi;
                let mut f = DVector::zeros(2 * m);
                f[2 * k] = 1.0;
                f[2 * k + 1] = -1.0;
                coeffs.push((k, f));
            }
            p.add_nonneg_block(constant, coeffs)?;
        }
        Ok(p)
    }
}

/// Assemble the degree-`d` relaxation for the given generators, prices
/// (`None` = unpriced) and per-asset support upper bounds.
pub fn assemble_generators(
    gens: GeneratorSet,
    prices: &[Option<f64>],
    support: &[f64],
    d: usize,
) -> Result<MomentProblem> {
    if d == 0 {
        return Err(Error::InvalidArgument("relaxation degree must be at least 1".into()));
    }
    if support.len() != gens.n_assets() {
        return Err(Error::InvalidArgument(format!(
            "{} support bounds for {} assets",
            support.len(),
            gens.n_assets()
        )));
    }
    let beta = BetaBound::from_support(&gens, support)?;
    let sups: Vec<f64> = gens.generators().iter().map(|g| g.sup_on_box(support)).collect();
    let index = MomentIndex::new(gens, prices, d)?;
    let mut blocks = vec![build_moment_matrix(&index, d)?];
    for i in 0..index.gens.len() {
        blocks.push(build_localizing_matrix(&index, i, d)?);
    }
    blocks.push(build_beta_matrix(&index, beta, d)?);
    let slot_bounds = index
        .slots
        .iter()
        .map(|e| {
            let hi: f64 = e
                .exponents()
                .iter()
                .zip(&sups)
                .map(|(k, s)| s.powi(*k as i32))
                .product();
            (0.0, hi)
        })
        .collect();
    Ok(MomentProblem {
        index,
        blocks,
        beta,
        degree: d,
        slot_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::payoff::PayoffGenerator;

    fn single_asset(p: f64, d: usize) -> MomentIndex {
        MomentIndex::new(GeneratorSet::assets(1), &[Some(p)], d).unwrap()
    }

    fn slot(index: &MomentIndex, exps: &[u32]) -> usize {
        match index.slot_of(&SemigroupElement::from_exponents(exps.to_vec())) {
            Some(SlotRef::Free(k)) => k,
            other => panic!("expected a free slot, got {other:?}"),
        }
    }

    #[test]
    fn moment_matrix_single_asset() {
        let idx = single_asset(0.5, 1);
        let m = build_moment_matrix(&idx, 1).unwrap();
        assert_eq!(m.dim(), 2);
        assert_eq!(m.cell(0, 0), &AffineExpr::constant(1.0));
        assert_eq!(m.cell(0, 1), &AffineExpr::constant(0.5));
        let k = slot(&idx, &[2]);
        assert_eq!(m.cell(1, 1).terms, vec![(k, 1.0)]);
        assert_eq!(m.cell(1, 1).constant, 0.0);

        let m0 = build_moment_matrix(&idx, 0).unwrap();
        assert_eq!(m0.dim(), 1);
        assert_eq!(m0.cell(0, 0), &AffineExpr::constant(1.0));
    }

    #[test]
    fn moment_matrix_with_straddle_square() {
        let gens = GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::straddle(0, 1, 1.0).unwrap(),
        ])
        .unwrap();
        let idx = MomentIndex::new(gens, &[Some(0.5), Some(0.6)], 1).unwrap();
        let m = build_moment_matrix(&idx, 1).unwrap();
        assert_eq!(m.dim(), 3);
        // f(st^2) = f(x1^2) - 2 f(x1) + 1 = f(x1^2) + 0
        let cell = m.cell(2, 2);
        assert!(cell.constant.abs() < 1e-15);
        assert_eq!(cell.terms, vec![(slot(&idx, &[2, 0]), 1.0)]);
        assert_eq!(m.cell(0, 2), &AffineExpr::constant(0.6));
    }

    #[test]
    fn localizing_single_asset() {
        let idx = single_asset(0.5, 1);
        let l = build_localizing_matrix(&idx, 0, 1).unwrap();
        assert_eq!(l.dim(), 1);
        assert_eq!(l.cell(0, 0), &AffineExpr::constant(0.5));

        let idx = single_asset(0.5, 2);
        let l = build_localizing_matrix(&idx, 0, 2).unwrap();
        assert_eq!(l.dim(), 2);
        assert_eq!(l.cell(0, 0), &AffineExpr::constant(0.5));
        assert_eq!(l.cell(0, 1).terms, vec![(slot(&idx, &[2]), 1.0)]);
        assert_eq!(l.cell(1, 1).terms, vec![(slot(&idx, &[3]), 1.0)]);

        // degree 0: the 1x1 block [[p_i]]
        let idx = single_asset(0.5, 0);
        let l = build_localizing_matrix(&idx, 0, 0).unwrap();
        assert_eq!(l.cell(0, 0), &AffineExpr::constant(0.5));
    }

    #[test]
    fn localizing_at_straddle_keeps_abs_factor() {
        let gens = GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::straddle(0, 1, 1.0).unwrap(),
        ])
        .unwrap();
        let idx = MomentIndex::new(gens, &[Some(0.5), Some(0.6)], 2).unwrap();
        let l = build_localizing_matrix(&idx, 1, 2).unwrap();
        // basis {1, x1, st}; cell (x1, x1) = f(st x1^2)
        assert_eq!(l.cell(1, 1).terms, vec![(slot(&idx, &[2, 1]), 1.0)]);
    }

    #[test]
    fn beta_matrix_examples() {
        let idx = single_asset(0.5, 1);
        let b = build_beta_matrix(&idx, BetaBound::new(1.0).unwrap(), 1).unwrap();
        assert_eq!(b.dim(), 1);
        assert!((b.cell(0, 0).constant - 0.5).abs() < 1e-15);

        let idx = single_asset(0.5, 2);
        let b = build_beta_matrix(&idx, BetaBound::new(1.0).unwrap(), 2).unwrap();
        let c = b.cell(0, 1);
        assert!((c.constant - 0.5).abs() < 1e-15);
        assert_eq!(c.terms, vec![(slot(&idx, &[2]), -1.0)]);

        assert!(BetaBound::new(0.0).is_err());
        assert!(BetaBound::new(-1.0).is_err());
    }

    #[test]
    fn beta_matrix_spread_market() {
        let gens = GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::asset(1, "x2"),
            PayoffGenerator::straddle(0, 2, 0.5).unwrap(),
            PayoffGenerator::straddle(1, 2, 0.5).unwrap(),
            PayoffGenerator::spread_straddle(0, 1, 2, 0.0).unwrap(),
        ])
        .unwrap();
        let prices = [Some(0.5), Some(0.5), Some(0.25), Some(0.25), Some(0.3)];
        let p = assemble_generators(gens, &prices, &[1.0, 1.0], 1).unwrap();
        assert_eq!(p.blocks.len(), 7);
        let beta = p.beta.value();
        let b = p.blocks.last().unwrap();
        assert_eq!(b.dim(), 1);
        let want = beta - 0.5 - 0.5 - 0.25 - 0.25 - 0.3;
        assert!((b.cell(0, 0).constant - want).abs() < 1e-14);
    }

    #[test]
    fn assemble_counts_and_beta() {
        let p = assemble_generators(GeneratorSet::assets(1), &[Some(0.5)], &[1.0], 1).unwrap();
        assert_eq!(p.block_dims(), vec![2, 1, 1]);

        let gens = GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::straddle(0, 1, 0.4).unwrap(),
        ])
        .unwrap();
        let p = assemble_generators(gens, &[Some(0.5), Some(0.2)], &[1.0], 1).unwrap();
        assert!((p.beta.value() - 1.6).abs() < 1e-15);
        assert!(assemble_generators(GeneratorSet::assets(1), &[Some(0.5)], &[1.0], 0).is_err());
    }

    #[test]
    fn basis_guard() {
        let gens = GeneratorSet::assets(6);
        let prices = vec![Some(0.5); 6];
        assert!(matches!(
            MomentIndex::new(gens, &prices, 5),
            Err(Error::BasisTooLarge { .. })
        ));
    }

    #[test]
    fn canonical_count_matches_enumeration() {
        let gens = GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::asset(1, "x2"),
            PayoffGenerator::straddle(0, 2, 0.5).unwrap(),
            PayoffGenerator::straddle(1, 2, 0.5).unwrap(),
            PayoffGenerator::spread_straddle(0, 1, 2, 0.0).unwrap(),
        ])
        .unwrap();
        for deg in 0..6 {
            assert_eq!(
                canonical_count(&gens, deg).unwrap(),
                elements_up_to(&gens, deg).len() as u128
            );
        }
    }
}
