//! One-period market instances.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::payoff::{dot, straddle_price_from_call, GeneratorKind, PayoffGenerator};
use crate::semigroup::GeneratorSet;

/// Default relaxation degree.
pub const DEFAULT_DEGREE: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Asset {
    pub name: String,
    /// Forward price `p_i`.
    pub price: f64,
    /// Support upper bound `B_i`; the support is `[0, B_i]`.
    pub support_max: f64,
}

/// A call quote that was converted to a straddle quote at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallConversion {
    pub call_price: f64,
    /// Forward price of `a·x`.
    pub forward: f64,
    pub strike: f64,
    pub straddle_price: f64,
}

/// An abs-linear derivative with its quoted price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Derivative {
    pub payoff: PayoffGenerator,
    pub price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converted_from_call: Option<CallConversion>,
}

impl Derivative {
    pub fn new(payoff: PayoffGenerator, price: f64) -> Self {
        Self {
            payoff,
            price,
            converted_from_call: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketInstance {
    pub assets: Vec<Asset>,
    pub derivatives: Vec<Derivative>,
    pub degree: usize,
}

impl MarketInstance {
    /// Builds and validates a market. Structural problems (non-finite data,
    /// nonpositive support, malformed payoffs, `d = 0`) are errors; prices
    /// outside their static range are not, see [`MarketInstance::static_violations`].
    pub fn new(assets: Vec<Asset>, derivatives: Vec<Derivative>, degree: usize) -> Result<Self> {
        let m = Self {
            assets,
            derivatives,
            degree,
        };
        m.validate()?;
        Ok(m)
    }

    /// Single-asset market on `[0, support_max]` with no derivatives.
    pub fn single_asset(price: f64, support_max: f64) -> Result<Self> {
        Self::new(
            vec![Asset {
                name: "x1".into(),
                price,
                support_max,
            }],
            Vec::new(),
            DEFAULT_DEGREE,
        )
    }

    /// Adds a derivative quoted as a call on `(a·x - K)^+`, stored as the
    /// straddle `|a·x - K|` with price `(K - a·p) + 2 c`.
    pub fn push_call(&mut self, coefficients: Vec<f64>, strike: f64, call_price: f64, name: impl Into<String>) -> Result<()> {
        let forward = dot(&coefficients, &self.forwards());
        let straddle_price = straddle_price_from_call(forward, strike, call_price);
        let payoff = PayoffGenerator::abs_linear(coefficients, strike, name)?;
        self.derivatives.push(Derivative {
            payoff,
            price: straddle_price,
            converted_from_call: Some(CallConversion {
                call_price,
                forward,
                strike,
                straddle_price,
            }),
        });
        self.validate()
    }

    pub fn push_derivative(&mut self, payoff: PayoffGenerator, price: f64) -> Result<()> {
        self.derivatives.push(Derivative::new(payoff, price));
        self.validate()
    }

    pub fn with_degree(&self, degree: usize) -> Result<Self> {
        Self::new(self.assets.clone(), self.derivatives.clone(), degree)
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn forwards(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.price).collect()
    }

    pub fn support(&self) -> Vec<f64> {
        self.assets.iter().map(|a| a.support_max).collect()
    }

    /// Assets, then derivatives.
    pub fn generators(&self) -> Result<GeneratorSet> {
        let mut g: Vec<PayoffGenerator> = self
            .assets
            .iter()
            .enumerate()
            .map(|(i, a)| PayoffGenerator::asset(i, a.name.clone()))
            .collect();
        g.extend(self.derivatives.iter().map(|d| d.payoff.clone()));
        GeneratorSet::new(g)
    }

    /// Quoted prices in generator order.
    pub fn prices(&self) -> Vec<f64> {
        self.assets
            .iter()
            .map(|a| a.price)
            .chain(self.derivatives.iter().map(|d| d.price))
            .collect()
    }

    /// Multiply every price, strike and support bound by `lambda > 0`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "scale factor must be positive, got {lambda}"
            )));
        }
        let assets = self
            .assets
            .iter()
            .map(|a| Asset {
                name: a.name.clone(),
                price: a.price * lambda,
                support_max: a.support_max * lambda,
            })
            .collect();
        let derivatives = self
            .derivatives
            .iter()
            .map(|d| Derivative {
                payoff: d.payoff.scaled(lambda),
                price: d.price * lambda,
                converted_from_call: d.converted_from_call.as_ref().map(|c| CallConversion {
                    call_price: c.call_price * lambda,
                    forward: c.forward * lambda,
                    strike: c.strike * lambda,
                    straddle_price: c.straddle_price * lambda,
                }),
            })
            .collect();
        Self::new(assets, derivatives, self.degree)
    }

    fn validate(&self) -> Result<()> {
        let mut errs: Vec<(String, String)> = Vec::new();
        if self.assets.is_empty() {
            errs.push(("/assets".into(), "at least one asset is required".into()));
        }
        if self.degree == 0 {
            errs.push(("/degree".into(), "relaxation degree must be at least 1".into()));
        }
        for (i, a) in self.assets.iter().enumerate() {
            if !a.price.is_finite() {
                errs.push((format!("/assets/{i}/price"), "price must be finite".into()));
            }
            if !(a.support_max.is_finite() && a.support_max > 0.0) {
                errs.push((
                    format!("/assets/{i}/support_max"),
                    "support bound must be finite and positive".into(),
                ));
            }
        }
        let n = self.assets.len();
        for (j, d) in self.derivatives.iter().enumerate() {
            if !d.price.is_finite() {
                errs.push((format!("/derivatives/{j}/price"), "price must be finite".into()));
            }
            match &d.payoff.kind {
                GeneratorKind::Asset { .. } => errs.push((
                    format!("/derivatives/{j}"),
                    "a derivative cannot be a plain asset payoff".into(),
                )),
                GeneratorKind::AbsLinear {
                    coefficients,
                    strike,
                } => {
                    if coefficients.len() != n {
                        errs.push((
                            format!("/derivatives/{j}/coefficients"),
                            format!("expected {n} coefficients, got {}", coefficients.len()),
                        ));
                    } else if coefficients.iter().all(|c| *c == 0.0) {
                        errs.push((
                            format!("/derivatives/{j}/coefficients"),
                            "coefficient vector is zero".into(),
                        ));
                    }
                    if !strike.is_finite() || !coefficients.iter().all(|c| c.is_finite()) {
                        errs.push((format!("/derivatives/{j}"), "payoff data must be finite".into()));
                    }
                }
            }
            for (k, e) in self.derivatives[..j].iter().enumerate() {
                if d.payoff.same_payoff(&e.payoff) {
                    errs.push((
                        format!("/derivatives/{j}"),
                        format!("same payoff as /derivatives/{k}"),
                    ));
                }
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMarket(errs))
        }
    }

    /// Prices outside the range their payoff takes on the support box. Each
    /// one is by itself a static arbitrage.
    pub fn static_violations(&self) -> Vec<String> {
        let b = self.support();
        let mut out = Vec::new();
        for a in &self.assets {
            if a.price < 0.0 {
                out.push(format!("{}: price {} is negative", a.name, a.price));
            } else if a.price > a.support_max {
                out.push(format!(
                    "{}: price {} exceeds the support bound {}",
                    a.name, a.price, a.support_max
                ));
            }
        }
        for d in &self.derivatives {
            let lo = d.payoff.inf_on_box(&b);
            let hi = d.payoff.sup_on_box(&b);
            if d.price < lo {
                out.push(format!(
                    "{}: price {} is below the payoff minimum {lo} on the support",
                    d.payoff.name, d.price
                ));
            } else if d.price > hi {
                out.push(format!(
                    "{}: price {} exceeds the payoff maximum {hi} on the support",
                    d.payoff.name, d.price
                ));
            }
            if let Some(c) = &d.converted_from_call {
                let intrinsic = (c.forward - c.strike).max(0.0);
                if c.call_price < intrinsic {
                    out.push(format!(
                        "{}: call price {} is below the intrinsic value {intrinsic}",
                        d.payoff.name, c.call_price
                    ));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spread_market() -> MarketInstance {
        let mut m = MarketInstance::new(
            vec![
                Asset {
                    name: "x1".into(),
                    price: 0.5,
                    support_max: 1.0,
                },
                Asset {
                    name: "x2".into(),
                    price: 0.5,
                    support_max: 1.0,
                },
            ],
            Vec::new(),
            2,
        )
        .unwrap();
        m.push_derivative(PayoffGenerator::straddle(0, 2, 0.5).unwrap(), 0.25).unwrap();
        m.push_derivative(PayoffGenerator::straddle(1, 2, 0.5).unwrap(), 0.25).unwrap();
        m
    }

    #[test]
    fn structural_errors_carry_paths() {
        let err = MarketInstance::new(
            vec![Asset {
                name: "x1".into(),
                price: f64::NAN,
                support_max: 0.0,
            }],
            Vec::new(),
            0,
        )
        .unwrap_err();
        match err {
            Error::InvalidMarket(v) => {
                let paths: Vec<&str> = v.iter().map(|(p, _)| p.as_str()).collect();
                assert!(paths.contains(&"/degree"));
                assert!(paths.contains(&"/assets/0/price"));
                assert!(paths.contains(&"/assets/0/support_max"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn duplicate_payoffs_rejected() {
        let mut m = spread_market();
        let dup = PayoffGenerator::abs_linear(vec![-1.0, 0.0], -0.5, "dup").unwrap();
        assert!(m.push_derivative(dup, 0.25).is_err());
    }

    #[test]
    fn static_ranges() {
        assert!(MarketInstance::single_asset(0.5, 1.0).unwrap().static_violations().is_empty());
        assert_eq!(MarketInstance::single_asset(1.2, 1.0).unwrap().static_violations().len(), 1);

        let mut m = MarketInstance::single_asset(0.5, 1.0).unwrap();
        m.push_derivative(PayoffGenerator::straddle(0, 1, 0.5).unwrap(), 0.6).unwrap();
        assert_eq!(m.static_violations().len(), 1);

        let mut m = MarketInstance::single_asset(0.5, 1.0).unwrap();
        m.push_call(vec![1.0], 0.4, 0.05, "c").unwrap();
        let v = m.static_violations();
        assert!(v.iter().any(|s| s.contains("intrinsic")), "{v:?}");
    }

    #[test]
    fn call_conversion() {
        let mut m = MarketInstance::single_asset(0.5, 1.0).unwrap();
        m.push_call(vec![1.0], 0.4, 0.15, "c").unwrap();
        let d = &m.derivatives[0];
        assert!((d.price - 0.2).abs() < 1e-15);
        assert_eq!(d.converted_from_call.as_ref().unwrap().forward, 0.5);
    }

    #[test]
    fn scaling() {
        let m = spread_market().scaled(3.0).unwrap();
        assert_eq!(m.support(), vec![3.0, 3.0]);
        assert_eq!(m.prices(), vec![1.5, 1.5, 0.75, 0.75]);
        match &m.derivatives[0].payoff.kind {
            GeneratorKind::AbsLinear { strike, .. } => assert_eq!(*strike, 1.5),
            _ => unreachable!(),
        }
        assert!(spread_market().scaled(0.0).is_err());
    }
}
