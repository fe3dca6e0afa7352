//! `--target` grammar.
//!
//! ```text
//! <asset>                      the asset itself
//! straddle:<asset>:<K>         |x - K|
//! call:<asset>:<K>             (x - K)^+
//! spread_straddle:<a>:<b>:<K>  |x_a - x_b - K|
//! spread_call:<a>:<b>:<K>      (x_a - x_b - K)^+
//! abs:<c1,c2,...>:<K>          |c·x - K|
//! basket_call:<c1,c2,...>:<K>  (c·x - K)^+
//! ```
//!
//! Assets are referred to by their names in the market file.

use momentarb::{MarketInstance, PayoffGenerator, TargetPayoff};

use crate::input::{linear_form, InputError};

fn err(spec: &str, msg: impl std::fmt::Display) -> InputError {
    InputError::new("invalid_target", format!("target {spec:?}: {msg}"))
}

fn number(spec: &str, s: &str) -> Result<f64, InputError> {
    match s.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(err(spec, format!("{s:?} is not a finite number"))),
    }
}

fn asset(spec: &str, market: &MarketInstance, name: &str) -> Result<usize, InputError> {
    market
        .assets
        .iter()
        .position(|a| a.name == name)
        .ok_or_else(|| err(spec, format!("unknown asset {name:?}")))
}

fn coefficient_list(spec: &str, market: &MarketInstance, s: &str) -> Result<Vec<f64>, InputError> {
    let c = s
        .split(',')
        .map(|v| number(spec, v))
        .collect::<Result<Vec<_>, _>>()?;
    if c.len() != market.n_assets() {
        return Err(err(
            spec,
            format!(
                "expected {} coefficients, got {}",
                market.n_assets(),
                c.len()
            ),
        ));
    }
    Ok(c)
}

fn build(
    spec: &str,
    market: &MarketInstance,
    a: Vec<f64>,
    strike: f64,
    call: bool,
) -> Result<TargetPayoff, InputError> {
    let names: Vec<&str> = market.assets.iter().map(|a| a.name.as_str()).collect();
    let inner = linear_form(&a, &names, strike);
    if call {
        if a.iter().all(|c| *c == 0.0) {
            return Err(err(spec, "coefficient vector is zero"));
        }
        Ok(TargetPayoff::Call {
            coefficients: a,
            strike,
            name: format!("({inner})^+"),
        })
    } else {
        PayoffGenerator::abs_linear(a, strike, format!("|{inner}|"))
            .map(TargetPayoff::payoff)
            .map_err(|e| err(spec, e))
    }
}

pub fn parse_target(spec: &str, market: &MarketInstance) -> Result<TargetPayoff, InputError> {
    let parts: Vec<&str> = spec.split(':').collect();
    let n = market.n_assets();
    let unit = |i: usize| {
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        a
    };
    let spread = |i: usize, j: usize| -> Result<Vec<f64>, InputError> {
        if i == j {
            return Err(err(spec, "spread needs two different assets"));
        }
        let mut a = vec![0.0; n];
        a[i] = 1.0;
        a[j] = -1.0;
        Ok(a)
    };
    match parts.as_slice() {
        [name] => {
            let i = asset(spec, market, name)?;
            Ok(TargetPayoff::payoff(PayoffGenerator::asset(i, *name)))
        }
        ["straddle", a, k] | ["call", a, k] => {
            let i = asset(spec, market, a)?;
            build(spec, market, unit(i), number(spec, k)?, parts[0] == "call")
        }
        ["spread_straddle", a, b, k] | ["spread_call", a, b, k] => {
            let (i, j) = (asset(spec, market, a)?, asset(spec, market, b)?);
            build(spec, market, spread(i, j)?, number(spec, k)?, parts[0] == "spread_call")
        }
        ["abs", c, k] | ["basket_call", c, k] => {
            let a = coefficient_list(spec, market, c)?;
            build(spec, market, a, number(spec, k)?, parts[0] == "basket_call")
        }
        _ => Err(err(
            spec,
            "expected <asset>, straddle:<asset>:<K>, call:<asset>:<K>, spread_straddle:<a>:<b>:<K>, \
             spread_call:<a>:<b>:<K>, abs:<c1,...>:<K> or basket_call:<c1,...>:<K>",
        )),
    }
}

#[cfg(test)]
mod tests {
    use momentarb::{Asset, GeneratorKind};

    use super::*;

    fn market() -> MarketInstance {
        let a = |name: &str| Asset {
            name: name.into(),
            price: 0.5,
            support_max: 1.0,
        };
        MarketInstance::new(vec![a("x1"), a("x2")], Vec::new(), 2).unwrap()
    }

    #[test]
    fn grammar() {
        let m = market();
        match parse_target("x2", &m).unwrap() {
            TargetPayoff::Payoff { payoff } => {
                assert_eq!(payoff.kind, GeneratorKind::Asset { index: 1 })
            }
            t => panic!("{t:?}"),
        }
        match parse_target("spread_call:x1:x2:0.1", &m).unwrap() {
            TargetPayoff::Call {
                coefficients,
                strike,
                name,
            } => {
                assert_eq!(coefficients, vec![1.0, -1.0]);
                assert_eq!(strike, 0.1);
                assert_eq!(name, "(x1 - x2 - 0.1)^+");
            }
            t => panic!("{t:?}"),
        }
        match parse_target("abs:1,1:1", &m).unwrap() {
            TargetPayoff::Payoff { payoff } => assert_eq!(payoff.name, "|x1 + x2 - 1|"),
            t => panic!("{t:?}"),
        }
        assert!(parse_target("straddle:x1:0.5", &m).is_ok());
        assert!(parse_target("basket_call:0.5,0.5:0.4", &m).is_ok());
    }

    #[test]
    fn rejects_bad_targets() {
        let m = market();
        for bad in [
            "x3",
            "call:x1",
            "call:x1:abc",
            "spread_call:x1:x1:0",
            "abs:1:0.5",
            "abs:0,0:1",
            "put:x1:0.5",
            "call:x1:inf",
        ] {
            assert!(parse_target(bad, &m).is_err(), "{bad}");
        }
    }
}
