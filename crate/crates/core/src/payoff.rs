//! Market payoffs as evaluable objects.
//!
//! Every tradeable claim is either a forward on one asset (`x_i`) or an
//! absolute value of an affine form, `|a·x - K|`. Calls are not a generator
//! kind: a call quote is converted to a straddle quote at ingestion using
//! `|y - K| = (K - y) + 2 (y - K)^+`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Two affine payoffs closer than this (coefficient-wise) are the same payoff.
pub const PAYOFF_EQ_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum GeneratorKind {
    /// The asset payoff `x_i` (zero-based index).
    Asset { index: usize },
    /// The payoff `|a·x - K|`.
    AbsLinear { coefficients: Vec<f64>, strike: f64 },
}

/// One generator of the payoff semigroup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayoffGenerator {
    pub name: String,
    pub kind: GeneratorKind,
}

impl PayoffGenerator {
    pub fn asset(index: usize, name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: GeneratorKind::Asset { index },
        }
    }

    /// `|a·x - K|`. The coefficient vector must be finite and nonzero.
    pub fn abs_linear(coefficients: Vec<f64>, strike: f64, name: impl Into<String>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().all(|c| *c == 0.0) {
            return Err(Error::InvalidArgument(
                "abs-linear payoff needs a nonzero coefficient vector".into(),
            ));
        }
        if !coefficients.iter().all(|c| c.is_finite()) || !strike.is_finite() {
            return Err(Error::InvalidArgument(
                "abs-linear payoff has non-finite coefficients or strike".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            kind: GeneratorKind::AbsLinear {
                coefficients,
                strike,
            },
        })
    }

    /// Plain straddle `|x_i - K|` in an `n`-asset market.
    pub fn straddle(index: usize, n: usize, strike: f64) -> Result<Self> {
        let mut a = vec![0.0; n];
        *a.get_mut(index)
            .ok_or_else(|| Error::InvalidArgument(format!("asset index {index} out of range")))? = 1.0;
        Self::abs_linear(a, strike, format!("|x{} - {}|", index + 1, strike))
    }

    /// Spread straddle `|x_i - x_j - K|`.
    pub fn spread_straddle(i: usize, j: usize, n: usize, strike: f64) -> Result<Self> {
        if i >= n || j >= n || i == j {
            return Err(Error::InvalidArgument(format!(
                "spread straddle needs two distinct assets below {n}, got {i} and {j}"
            )));
        }
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        a[j] = -1.0;
        Self::abs_linear(a, strike, format!("|x{} - x{} - {}|", i + 1, j + 1, strike))
    }

    pub fn is_asset(&self) -> bool {
        matches!(self.kind, GeneratorKind::Asset { .. })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match &self.kind {
            GeneratorKind::Asset { index } => x[*index],
            GeneratorKind::AbsLinear {
                coefficients,
                strike,
            } => (dot(coefficients, x) - strike).abs(),
        }
    }

    /// Supremum of the payoff over the box `[0, upper_i]`.
    pub fn sup_on_box(&self, upper: &[f64]) -> f64 {
        match &self.kind {
            GeneratorKind::Asset { index } => upper[*index],
            GeneratorKind::AbsLinear {
                coefficients,
                strike,
            } => {
                let (lo, hi) = affine_range(coefficients, upper);
                (hi - strike).abs().max((lo - strike).abs())
            }
        }
    }

    /// Infimum of the payoff over the box `[0, upper_i]`.
    pub fn inf_on_box(&self, upper: &[f64]) -> f64 {
        match &self.kind {
            GeneratorKind::Asset { .. } => 0.0,
            GeneratorKind::AbsLinear {
                coefficients,
                strike,
            } => {
                let (lo, hi) = affine_range(coefficients, upper);
                if *strike < lo {
                    lo - strike
                } else if *strike > hi {
                    strike - hi
                } else {
                    0.0
                }
            }
        }
    }

    /// True when both generators are the same function of `x`. `|a·x - K|`
    /// and `|-a·x + K|` coincide.
    pub fn same_payoff(&self, other: &Self) -> bool {
        match (&self.kind, &other.kind) {
            (GeneratorKind::Asset { index: i }, GeneratorKind::Asset { index: j }) => i == j,
            (
                GeneratorKind::AbsLinear {
                    coefficients: a,
                    strike: k,
                },
                GeneratorKind::AbsLinear {
                    coefficients: b,
                    strike: l,
                },
            ) => {
                if a.len() != b.len() {
                    return false;
                }
                let close = |sign: f64| {
                    a.iter().zip(b).all(|(x, y)| (x - sign * y).abs() <= PAYOFF_EQ_TOL)
                        && (k - sign * l).abs() <= PAYOFF_EQ_TOL
                };
                close(1.0) || close(-1.0)
            }
            _ => false,
        }
    }

    /// Multiply strikes by `lambda` (asset payoffs are unchanged).
    pub fn scaled(&self, lambda: f64) -> Self {
        let mut out = self.clone();
        if let GeneratorKind::AbsLinear { strike, .. } = &mut out.kind {
            *strike *= lambda;
        }
        out
    }
}

/// Range of `a·x` over the box `[0, upper_i]`.
pub(crate) fn affine_range(a: &[f64], upper: &[f64]) -> (f64, f64) {
    a.iter().zip(upper).fold((0.0, 0.0), |(lo, hi), (c, b)| {
        if *c >= 0.0 {
            (lo, hi + c * b)
        } else {
            (lo + c * b, hi)
        }
    })
}

pub(crate) fn dot(a: &[f64], x: &[f64]) -> f64 {
    a.iter().zip(x).map(|(a, x)| a * x).sum()
}

/// Price of the straddle `|y - K|` from the forward price `p` of `y` and the
/// call price `c` on `(y - K)^+`.
pub fn straddle_price_from_call(forward: f64, strike: f64, call: f64) -> f64 {
    (strike - forward) + 2.0 * call
}

/// Inverse of [`straddle_price_from_call`].
pub fn call_price_from_straddle(forward: f64, strike: f64, straddle: f64) -> f64 {
    (straddle - strike + forward) / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn straddle_from_call_examples() {
        assert!((straddle_price_from_call(1.0, 1.0, 0.1) - 0.2).abs() < 1e-15);
        assert!((straddle_price_from_call(0.5, 0.4, 0.15) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn straddle_call_roundtrip() {
        for &(p, k, q) in &[(0.5, 0.4, 0.2), (3.0, 1.0, 2.5), (0.01, 7.0, 6.99)] {
            let c = call_price_from_straddle(p, k, q);
            let back = straddle_price_from_call(p, k, c);
            assert!((back - q).abs() <= 1e-15 * q.abs().max(1.0));
        }
    }

    #[test]
    fn spread_straddle_value() {
        let g = PayoffGenerator::spread_straddle(0, 1, 2, 0.1).unwrap();
        assert!((g.value(&[0.5, 0.2]) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn box_extrema() {
        let st = PayoffGenerator::straddle(0, 1, 0.4).unwrap();
        assert_eq!(st.sup_on_box(&[1.0]), 0.6);
        assert_eq!(st.inf_on_box(&[1.0]), 0.0);
        let spread = PayoffGenerator::spread_straddle(0, 1, 2, -2.0).unwrap();
        // x1 - x2 ranges over [-1, 1], so x1 - x2 + 2 over [1, 3]
        assert_eq!(spread.inf_on_box(&[1.0, 1.0]), 1.0);
        assert_eq!(spread.sup_on_box(&[1.0, 1.0]), 3.0);
    }

    #[test]
    fn sign_flipped_abs_is_same_payoff() {
        let a = PayoffGenerator::abs_linear(vec![1.0, -1.0], 0.2, "a").unwrap();
        let b = PayoffGenerator::abs_linear(vec![-1.0, 1.0], -0.2, "b").unwrap();
        let c = PayoffGenerator::abs_linear(vec![-1.0, 1.0], 0.2, "c").unwrap();
        assert!(a.same_payoff(&b));
        assert!(!a.same_payoff(&c));
    }

    #[test]
    fn zero_coefficients_rejected() {
        assert!(PayoffGenerator::abs_linear(vec![0.0, 0.0], 1.0, "z").is_err());
        assert!(PayoffGenerator::spread_straddle(1, 1, 2, 0.0).is_err());
    }
}
