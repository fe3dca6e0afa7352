//! The truncated payoff semigroup.
//!
//! Elements are products of generators, stored as exponent vectors over the
//! generator list (assets first, then abs-linear derivatives). An element is
//! canonical when every abs-linear exponent is 0 or 1: since
//! `|a·x - K|^2 = (a·x - K)^2`, even powers of a straddle fold into the
//! polynomial part, and a raw product reduces to a linear combination of
//! canonical elements.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::payoff::{GeneratorKind, PayoffGenerator};

/// Validated generator list: assets `x_1..x_n` in index order, followed by
/// abs-linear payoffs over the same `n` assets.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSet {
    generators: Vec<PayoffGenerator>,
    n_assets: usize,
}

impl GeneratorSet {
    pub fn new(generators: Vec<PayoffGenerator>) -> Result<Self> {
        if generators.is_empty() {
            return Err(Error::InvalidArgument("generator list is empty".into()));
        }
        let n_assets = generators.iter().take_while(|g| g.is_asset()).count();
        if n_assets == 0 {
            return Err(Error::InvalidArgument(
                "generator list must start with the asset payoffs".into(),
            ));
        }
        for (pos, g) in generators.iter().enumerate() {
            match &g.kind {
                GeneratorKind::Asset { index } if pos < n_assets => {
                    if *index != pos {
                        return Err(Error::InvalidArgument(format!(
                            "asset generator at position {pos} has index {index}"
                        )));
                    }
                }
                GeneratorKind::Asset { index } => {
                    return Err(Error::InvalidArgument(format!(
                        "asset generator x{} listed after derivatives",
                        index + 1
                    )));
                }
                GeneratorKind::AbsLinear { coefficients, .. } => {
                    if coefficients.len() != n_assets {
                        return Err(Error::InvalidArgument(format!(
                            "generator {} has {} coefficients for {n_assets} assets",
                            g.name,
                            coefficients.len()
                        )));
                    }
                }
            }
        }
        for i in 0..generators.len() {
            for j in 0..i {
                if generators[i].same_payoff(&generators[j]) {
                    return Err(Error::InvalidArgument(format!(
                        "generators {} and {} are the same payoff",
                        generators[j].name, generators[i].name
                    )));
                }
            }
        }
        Ok(Self {
            generators,
            n_assets,
        })
    }

    /// Assets only: `x_1..x_n`.
    pub fn assets(n: usize) -> Self {
        let generators = (0..n)
            .map(|i| PayoffGenerator::asset(i, format!("x{}", i + 1)))
            .collect();
        Self {
            generators,
            n_assets: n,
        }
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[PayoffGenerator] {
        &self.generators
    }

    /// The element consisting of generator `i` alone.
    pub fn unit(&self, i: usize) -> SemigroupElement {
        let mut e = vec![0; self.len()];
        e[i] = 1;
        SemigroupElement { exponents: e }
    }

    pub fn identity(&self) -> SemigroupElement {
        SemigroupElement {
            exponents: vec![0; self.len()],
        }
    }

    fn is_abs(&self, i: usize) -> bool {
        i >= self.n_assets
    }

    /// Human-readable product, e.g. `x1^2*|x1 - 0.5|`.
    pub fn describe(&self, e: &SemigroupElement) -> String {
        let parts: Vec<String> = e
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, k)| **k > 0)
            .map(|(i, k)| {
                let name = &self.generators[i].name;
                if *k == 1 {
                    name.clone()
                } else {
                    format!("{name}^{k}")
                }
            })
            .collect();
        if parts.is_empty() {
            "1".into()
        } else {
            parts.join("*")
        }
    }
}

/// A product of generators, `prod_i e_i^{k_i}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SemigroupElement {
    exponents: Vec<u32>,
}

impl SemigroupElement {
    pub fn from_exponents(exponents: Vec<u32>) -> Self {
        Self { exponents }
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }

    /// Raw product (exponents add; no reduction).
    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.exponents.len(), other.exponents.len());
        Self {
            exponents: self
                .exponents
                .iter()
                .zip(&other.exponents)
                .map(|(a, b)| a + b)
                .collect(),
        }
    }

    pub fn divides(&self, other: &Self) -> bool {
        self.exponents
            .iter()
            .zip(&other.exponents)
            .all(|(a, b)| a <= b)
    }

    pub fn is_canonical(&self, gens: &GeneratorSet) -> bool {
        self.exponents
            .iter()
            .enumerate()
            .all(|(i, k)| !gens.is_abs(i) || *k <= 1)
    }
}

/// Graded lexicographic: lower degree first, then the exponent vector that is
/// larger lexicographically (so `x1` precedes `x2`, `x1^2` precedes `x1*x2`).
impl Ord for SemigroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.degree()
            .cmp(&other.degree())
            .then_with(|| other.exponents.cmp(&self.exponents))
    }
}

impl PartialOrd for SemigroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

type Monomial = Vec<u32>;
type Polynomial = BTreeMap<Monomial, f64>;

/// A raw product rewritten as `prod_{j in residual} |a_j·x - K_j|` times a
/// polynomial in the asset payoffs.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialExpansion {
    /// Generator positions of the abs-linear factors left with exponent one,
    /// ascending.
    pub residual: Vec<usize>,
    /// Monomials over `x_1..x_n` with their coefficients, in ascending
    /// monomial order; zero coefficients are dropped.
    pub terms: Vec<(Vec<u32>, f64)>,
}

impl PolynomialExpansion {
    pub fn evaluate(&self, gens: &GeneratorSet, x: &[f64]) -> f64 {
        let abs: f64 = self
            .residual
            .iter()
            .map(|&j| gens.generators[j].value(x))
            .product();
        let poly: f64 = self
            .terms
            .iter()
            .map(|(m, c)| c * monomial_value(m, x))
            .sum();
        abs * poly
    }

    /// Each term as a canonical semigroup element with its coefficient.
    pub fn elements(&self, gens: &GeneratorSet) -> Vec<(SemigroupElement, f64)> {
        self.terms
            .iter()
            .map(|(m, c)| {
                let mut e = vec![0; gens.len()];
                e[..gens.n_assets].copy_from_slice(m);
                for &j in &self.residual {
                    e[j] = 1;
                }
                (SemigroupElement { exponents: e }, *c)
            })
            .collect()
    }

    /// Coefficient-wise equality within `tol`.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.residual != other.residual {
            return false;
        }
        let a: HashMap<&Vec<u32>, f64> = self.terms.iter().map(|(m, c)| (m, *c)).collect();
        let b: HashMap<&Vec<u32>, f64> = other.terms.iter().map(|(m, c)| (m, *c)).collect();
        a.keys()
            .chain(b.keys())
            .all(|m| (a.get(m).unwrap_or(&0.0) - b.get(m).unwrap_or(&0.0)).abs() <= tol)
    }
}

fn monomial_value(m: &[u32], x: &[f64]) -> f64 {
    m.iter()
        .zip(x)
        .map(|(k, xi)| xi.powi(*k as i32))
        .product()
}

fn poly_mul(a: &Polynomial, b: &Polynomial) -> Polynomial {
    let mut out = Polynomial::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let m: Monomial = ma.iter().zip(mb).map(|(x, y)| x + y).collect();
            *out.entry(m).or_insert(0.0) += ca * cb;
        }
    }
    out
}

/// `(a·x - K)^2` as a polynomial.
fn squared_affine(a: &[f64], strike: f64) -> Polynomial {
    let n = a.len();
    let mut lin = Polynomial::new();
    for (i, c) in a.iter().enumerate() {
        if *c != 0.0 {
            let mut m = vec![0; n];
            m[i] = 1;
            lin.insert(m, *c);
        }
    }
    if strike != 0.0 {
        lin.insert(vec![0; n], -strike);
    }
    poly_mul(&lin, &lin)
}

/// Rewrite a raw product so every abs-linear exponent is reduced mod 2, with
/// the even part expanded into asset monomials.
pub fn canonicalize(raw: &SemigroupElement, gens: &GeneratorSet) -> Result<PolynomialExpansion> {
    if raw.exponents.len() != gens.len() {
        return Err(Error::InvalidArgument(format!(
            "exponent vector has length {}, expected {}",
            raw.exponents.len(),
            gens.len()
        )));
    }
    let n = gens.n_assets;
    let mut poly = Polynomial::new();
    poly.insert(raw.exponents[..n].to_vec(), 1.0);
    let mut residual = Vec::new();
    for j in n..gens.len() {
        let k = raw.exponents[j];
        if k % 2 == 1 {
            residual.push(j);
        }
        if k >= 2 {
            let GeneratorKind::AbsLinear {
                coefficients,
                strike,
            } = &gens.generators[j].kind
            else {
                unreachable!("generators past the assets are abs-linear");
            };
            let sq = squared_affine(coefficients, *strike);
            for _ in 0..k / 2 {
                poly = poly_mul(&poly, &sq);
            }
        }
    }
    Ok(PolynomialExpansion {
        residual,
        terms: poly.into_iter().filter(|(_, c)| *c != 0.0).collect(),
    })
}

/// `s(x)`: the product of generator payoffs raised to their exponents.
pub fn evaluate(element: &SemigroupElement, gens: &GeneratorSet, x: &[f64]) -> f64 {
    element
        .exponents
        .iter()
        .zip(&gens.generators)
        .filter(|(k, _)| **k > 0)
        .map(|(k, g)| g.value(x).powi(*k as i32))
        .product()
}

/// All canonical elements of degree at most `max_degree`, in graded
/// lexicographic order. `max_degree` must be even (it is `2d`).
pub fn enumerate_semigroup(gens: &GeneratorSet, max_degree: usize) -> Result<Vec<SemigroupElement>> {
    if max_degree % 2 != 0 {
        return Err(Error::InvalidArgument(format!(
            "semigroup truncation degree must be even, got {max_degree}"
        )));
    }
    Ok(elements_up_to(gens, max_degree))
}

/// Canonical elements of degree at most `degree` (any parity), sorted.
pub fn elements_up_to(gens: &GeneratorSet, degree: usize) -> Vec<SemigroupElement> {
    fn rec(
        gens: &GeneratorSet,
        pos: usize,
        left: u32,
        cur: &mut Vec<u32>,
        out: &mut Vec<SemigroupElement>,
    ) {
        if pos == gens.len() {
            out.push(SemigroupElement {
                exponents: cur.clone(),
            });
            return;
        }
        let cap = if gens.is_abs(pos) { left.min(1) } else { left };
        for k in 0..=cap {
            cur.push(k);
            rec(gens, pos + 1, left - k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(gens, 0, degree as u32, &mut Vec::new(), &mut out);
    out.sort();
    out
}

fn binomial(n: u128, k: u128) -> Result<u128> {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = acc
            .checked_mul(n - i)
            .ok_or(Error::Overflow("binomial coefficient"))?
            / (i + 1);
    }
    Ok(acc)
}

/// Size of a degree-`d` monomial basis in `n_generators` variables,
/// `C(n_generators + d, n_generators)`.
pub fn count_basis(n_generators: usize, d: usize) -> Result<u128> {
    let n = n_generators as u128;
    let total = n.checked_add(d as u128).ok_or(Error::Overflow("basis count"))?;
    binomial(total, n)
}

/// Element count with `k` straddles over `n_assets` assets after the
/// squared-straddle reduction, `(k + 1) C(n + 2d, n)`.
pub fn count_straddle_reduced(n_assets: usize, k: usize, d: usize) -> Result<u128> {
    let two_d = (d as u128).checked_mul(2).ok_or(Error::Overflow("basis count"))?;
    let n = n_assets as u128;
    let base = binomial(n.checked_add(two_d).ok_or(Error::Overflow("basis count"))?, n)?;
    base.checked_mul(k as u128 + 1)
        .ok_or(Error::Overflow("straddle-reduced basis count"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn asset_and_straddle(k: f64) -> GeneratorSet {
        GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            PayoffGenerator::straddle(0, 1, k).unwrap(),
        ])
        .unwrap()
    }

    fn e(v: &[u32]) -> SemigroupElement {
        SemigroupElement::from_exponents(v.to_vec())
    }

    #[test]
    fn enumerate_single_asset() {
        let g = GeneratorSet::assets(1);
        let els = enumerate_semigroup(&g, 2).unwrap();
        assert_eq!(els, vec![e(&[0]), e(&[1]), e(&[2])]);
    }

    #[test]
    fn enumerate_two_assets_graded_lex() {
        let g = GeneratorSet::assets(2);
        let els = enumerate_semigroup(&g, 2).unwrap();
        let want = [[0, 0], [1, 0], [0, 1], [2, 0], [1, 1], [0, 2]];
        assert_eq!(els, want.iter().map(|v| e(v)).collect::<Vec<_>>());
        assert_eq!(els.len() as u128, count_basis(2, 2).unwrap());
    }

    #[test]
    fn enumerate_with_straddle_drops_square() {
        let g = asset_and_straddle(1.0);
        let els = enumerate_semigroup(&g, 2).unwrap();
        // 1, x1, st, x1^2, x1*st ; st^2 is (x1 - 1)^2
        assert_eq!(
            els,
            vec![e(&[0, 0]), e(&[1, 0]), e(&[0, 1]), e(&[2, 0]), e(&[1, 1])]
        );
        let sq = canonicalize(&e(&[0, 2]), &g).unwrap();
        assert!(sq.residual.is_empty());
        assert_eq!(
            sq.terms,
            vec![(vec![0], 1.0), (vec![1], -2.0), (vec![2], 1.0)]
        );
    }

    #[test]
    fn odd_degree_rejected() {
        let g = GeneratorSet::assets(1);
        assert!(matches!(
            enumerate_semigroup(&g, 3),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn canonicalize_pure_monomial_unchanged() {
        let g = asset_and_straddle(1.0);
        let c = canonicalize(&e(&[2, 0]), &g).unwrap();
        assert!(c.residual.is_empty());
        assert_eq!(c.terms, vec![(vec![2], 1.0)]);
    }

    #[test]
    fn canonicalize_x_times_straddle_cubed() {
        let g = asset_and_straddle(1.0);
        let c = canonicalize(&e(&[1, 3]), &g).unwrap();
        assert_eq!(c.residual, vec![1]);
        assert_eq!(
            c.terms,
            vec![(vec![1], 1.0), (vec![2], -2.0), (vec![3], 1.0)]
        );
        assert_eq!(c.evaluate(&g, &[3.0]), 24.0);
        assert_eq!(evaluate(&e(&[1, 3]), &g, &[3.0]), 24.0);
    }

    #[test]
    fn canonicalize_is_idempotent() {
        let g = asset_and_straddle(0.3);
        let c = canonicalize(&e(&[2, 5]), &g).unwrap();
        for (el, _) in c.elements(&g) {
            let again = canonicalize(&el, &g).unwrap();
            assert_eq!(again.elements(&g), vec![(el.clone(), 1.0)]);
        }
    }

    #[test]
    fn canonicalize_length_mismatch() {
        let g = asset_and_straddle(1.0);
        assert!(canonicalize(&e(&[1]), &g).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let g = asset_and_straddle(1.0);
        assert_eq!(evaluate(&g.identity(), &g, &[0.7]), 1.0);
        assert_eq!(evaluate(&e(&[1, 1]), &g, &[3.0]), 6.0);
    }

    #[test]
    fn basis_counts() {
        assert_eq!(count_basis(2, 2).unwrap(), 6);
        assert_eq!(count_basis(5, 0).unwrap(), 1);
        assert_eq!(count_straddle_reduced(2, 3, 1).unwrap(), 24);
        assert!(matches!(
            count_basis(usize::MAX, 3),
            Err(Error::Overflow(_))
        ));
        assert!(matches!(count_basis(200, 200), Err(Error::Overflow(_))));
    }

    #[test]
    fn generator_order_enforced() {
        let st = PayoffGenerator::straddle(0, 1, 1.0).unwrap();
        assert!(GeneratorSet::new(vec![st.clone(), PayoffGenerator::asset(0, "x1")]).is_err());
        assert!(GeneratorSet::new(vec![
            PayoffGenerator::asset(0, "x1"),
            st.clone(),
            st
        ])
        .is_err());
        assert!(GeneratorSet::new(vec![]).is_err());
    }
}
