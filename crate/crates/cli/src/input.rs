//! Market and measure files.

use std::fmt;

use momentarb::{
    Asset, DiscreteMeasure, Error as CoreError, MarketInstance, PayoffGenerator, DEFAULT_DEGREE,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Top-level keys that would imply discounting. Prices are forward prices.
const DISCOUNT_KEYS: [&str; 5] = [
    "discount",
    "discount_factor",
    "interest_rate",
    "rate",
    "risk_free_rate",
];

/// One schema or validation problem, located by a JSON pointer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Anything wrong with the command line or the input files. Always exit 64.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputError {
    pub kind: &'static str,
    pub message: String,
    pub violations: Vec<Violation>,
}

impl InputError {
    pub fn new(kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    pub fn at(kind: &'static str, path: impl Into<String>, message: impl Into<String>) -> Self {
        let message = message.into();
        Self {
            kind,
            violations: vec![Violation {
                path: path.into(),
                message: message.clone(),
            }],
            message,
        }
    }

    /// Map a core error raised while building a market or measure.
    pub fn from_core(e: CoreError) -> Self {
        match e {
            CoreError::InvalidMarket(v) => Self {
                kind: "invalid_market",
                message: "market failed validation".into(),
                violations: v
                    .into_iter()
                    .map(|(path, message)| Violation { path, message })
                    .collect(),
            },
            other => Self::new("invalid_input", other.to_string()),
        }
    }
}

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.message)?;
        for v in &self.violations {
            if v.message != self.message {
                write!(
                    f,
                    "\n  {}: {}",
                    if v.path.is_empty() { "/" } else { &v.path },
                    v.message
                )?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeKind {
    Call,
    Straddle,
    AbsLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetEntry {
    pub name: String,
    pub price: f64,
    pub support_max: f64,
}

/// A quoted derivative on `a·x` for a coefficient vector `a`, given either as
/// `asset` (a single asset by name) or as `coefficients`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeEntry {
    #[serde(rename = "type")]
    pub kind: DerivativeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coefficients: Option<Vec<f64>>,
    pub strike: f64,
    pub price: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketFile {
    pub assets: Vec<AssetEntry>,
    #[serde(default)]
    pub derivatives: Vec<DerivativeEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
}

fn pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => {
                out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1")))
            }
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

/// Strip the `at line L column C` suffix that serde adds to value errors.
fn serde_message(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}

fn parse_json(bytes: &[u8]) -> Result<Value, InputError> {
    serde_json::from_slice(bytes).map_err(|e| {
        InputError::at(
            "malformed_json",
            "",
            format!(
                "not valid JSON: {} (line {}, column {})",
                serde_message(&e),
                e.line(),
                e.column()
            ),
        )
    })
}

fn typed<T: for<'de> Deserialize<'de>>(value: Value) -> Result<T, InputError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = pointer(e.path());
        InputError::at("schema", path, serde_message(e.inner()))
    })
}

impl MarketFile {
    pub fn parse(bytes: &[u8]) -> Result<Self, InputError> {
        let value = parse_json(bytes)?;
        if let Some(obj) = value.as_object() {
            if let Some(key) = DISCOUNT_KEYS.iter().find(|k| obj.contains_key(**k)) {
                return Err(InputError::at(
                    "schema",
                    format!("/{key}"),
                    "discounting is not supported: quoted prices are forward prices at zero interest rate",
                ));
            }
        }
        typed(value)
    }

    fn asset_index(&self, name: &str) -> Option<usize> {
        self.assets.iter().position(|a| a.name == name)
    }

    fn coefficients(&self, j: usize, d: &DerivativeEntry) -> Result<Vec<f64>, InputError> {
        let n = self.assets.len();
        match (&d.asset, &d.coefficients) {
            (Some(name), None) => {
                let i = self.asset_index(name).ok_or_else(|| {
                    InputError::at(
                        "invalid_market",
                        format!("/derivatives/{j}/asset"),
                        format!("unknown asset {name:?}"),
                    )
                })?;
                let mut a = vec![0.0; n];
                a[i] = 1.0;
                Ok(a)
            }
            (None, Some(c)) if c.len() == n => Ok(c.clone()),
            (None, Some(c)) => Err(InputError::at(
                "invalid_market",
                format!("/derivatives/{j}/coefficients"),
                format!("expected {n} coefficients, got {}", c.len()),
            )),
            (Some(_), Some(_)) => Err(InputError::at(
                "invalid_market",
                format!("/derivatives/{j}"),
                "give either asset or coefficients, not both",
            )),
            (None, None) => Err(InputError::at(
                "invalid_market",
                format!("/derivatives/{j}"),
                "missing asset or coefficients",
            )),
        }
    }

    /// Build the market, calls converted to straddles. `degree` overrides the
    /// file's degree.
    pub fn to_market(&self, degree: Option<usize>) -> Result<MarketInstance, InputError> {
        let mut violations = Vec::new();
        for (i, a) in self.assets.iter().enumerate() {
            if a.name.trim().is_empty() {
                violations.push(Violation {
                    path: format!("/assets/{i}/name"),
                    message: "asset name is empty".into(),
                });
            } else if self.assets[..i].iter().any(|b| b.name == a.name) {
                violations.push(Violation {
                    path: format!("/assets/{i}/name"),
                    message: format!("duplicate asset name {:?}", a.name),
                });
            }
        }
        if !violations.is_empty() {
            return Err(InputError {
                kind: "invalid_market",
                message: "market failed validation".into(),
                violations,
            });
        }
        let degree = degree.or(self.degree).unwrap_or(DEFAULT_DEGREE);
        let assets = self
            .assets
            .iter()
            .map(|a| Asset {
                name: a.name.clone(),
                price: a.price,
                support_max: a.support_max,
            })
            .collect();
        let mut market =
            MarketInstance::new(assets, Vec::new(), degree).map_err(InputError::from_core)?;
        for (j, d) in self.derivatives.iter().enumerate() {
            let a = self.coefficients(j, d)?;
            let name = d
                .name
                .clone()
                .unwrap_or_else(|| self.describe(&a, d.strike, d.kind));
            let pushed = match d.kind {
                DerivativeKind::Call => market.push_call(a, d.strike, d.price, name),
                DerivativeKind::Straddle | DerivativeKind::AbsLinear => {
                    let g = PayoffGenerator::abs_linear(a, d.strike, name).map_err(|e| {
                        InputError::at("invalid_market", format!("/derivatives/{j}"), e.to_string())
                    })?;
                    market.push_derivative(g, d.price)
                }
            };
            pushed.map_err(InputError::from_core)?;
        }
        Ok(market)
    }

    fn describe(&self, a: &[f64], strike: f64, kind: DerivativeKind) -> String {
        let names: Vec<&str> = self.assets.iter().map(|a| a.name.as_str()).collect();
        let inner = linear_form(a, &names, strike);
        match kind {
            DerivativeKind::Call => format!("({inner})^+"),
            _ => format!("|{inner}|"),
        }
    }
}

/// `a·x - K` written with asset names, e.g. `x1 - x2 - 0.5`.
pub fn linear_form(a: &[f64], names: &[&str], strike: f64) -> String {
    let mut s = String::new();
    for (c, name) in a.iter().zip(names) {
        if *c == 0.0 {
            continue;
        }
        let mag = c.abs();
        let term = if mag == 1.0 {
            name.to_string()
        } else {
            format!("{mag}*{name}")
        };
        if s.is_empty() {
            s = if *c < 0.0 { format!("-{term}") } else { term };
        } else {
            s.push_str(if *c < 0.0 { " - " } else { " + " });
            s.push_str(&term);
        }
    }
    if strike > 0.0 {
        s.push_str(&format!(" - {strike}"));
    } else if strike < 0.0 {
        s.push_str(&format!(" + {}", -strike));
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointEntry {
    Scalar(f64),
    Vector(Vec<f64>),
}

/// A discrete measure: support points (numbers or coordinate lists) and
/// weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureFile {
    pub points: Vec<PointEntry>,
    pub weights: Vec<f64>,
}

impl MeasureFile {
    pub fn parse(bytes: &[u8]) -> Result<Self, InputError> {
        typed(parse_json(bytes)?)
    }

    pub fn to_measure(&self) -> Result<DiscreteMeasure, InputError> {
        let points = self
            .points
            .iter()
            .map(|p| match p {
                PointEntry::Scalar(x) => vec![*x],
                PointEntry::Vector(v) => v.clone(),
            })
            .collect();
        DiscreteMeasure::new(points, self.weights.clone())
            .map_err(|e| InputError::at("invalid_measure", "", e.to_string()))
    }
}
