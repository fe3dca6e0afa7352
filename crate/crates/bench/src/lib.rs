//! Fixture markets shared by the benchmarks.

use momentarb::{Asset, MarketInstance, PayoffGenerator, TargetPayoff};

/// Two assets on `[0, 1]` with forwards 0.5 and an at-the-money straddle on each.
pub fn spread_market(degree: usize) -> MarketInstance {
    let asset = |name: &str| Asset {
        name: name.into(),
        price: 0.5,
        support_max: 1.0,
    };
    let mut m = MarketInstance::new(vec![asset("x1"), asset("x2")], Vec::new(), degree).unwrap();
    m.push_derivative(PayoffGenerator::straddle(0, 2, 0.5).unwrap(), 0.25)
        .unwrap();
    m.push_derivative(PayoffGenerator::straddle(1, 2, 0.5).unwrap(), 0.25)
        .unwrap();
    m
}

/// `|x1 - x2|`
pub fn spread_target() -> TargetPayoff {
    TargetPayoff::payoff(PayoffGenerator::spread_straddle(0, 1, 2, 0.0).unwrap())
}

pub fn single_call_market() -> MarketInstance {
    let mut m = MarketInstance::single_asset(0.5, 1.0).unwrap();
    m.push_call(vec![1.0], 0.4, 0.15, "(x1 - 0.4)^+").unwrap();
    m
}
