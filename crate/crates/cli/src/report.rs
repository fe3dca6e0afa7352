//! Machine-readable report written by every subcommand.

use momentarb::market::CallConversion;
use momentarb::{
    ArbitrageReport, BoundResult, ConvexOrderReport, OracleBound, OracleFeasibility,
    TransitionResult,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::input::Violation;

/// Significant digits kept for every number in the JSON output.
pub const SIGNIFICANT_DIGITS: usize = 12;

pub const TOOL_NAME: &str = "momentarb";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

impl Default for ToolInfo {
    fn default() -> Self {
        Self {
            name: TOOL_NAME.into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    /// Hex SHA-256 of the raw file bytes.
    pub sha256: String,
}

impl InputDigest {
    pub fn of(path: &str, bytes: &[u8]) -> Self {
        let hash = Sha256::digest(bytes);
        Self {
            path: path.into(),
            sha256: hash.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
}

/// A quoted call and the straddle it was converted to at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionRecord {
    pub derivative: String,
    #[serde(flatten)]
    pub conversion: CallConversion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommandResult {
    Check(ArbitrageReport),
    Bound {
        bounds: Vec<BoundResult>,
    },
    OracleFeasibility(OracleFeasibility),
    OracleBound {
        bounds: Vec<OracleBound>,
    },
    Martingale {
        transition: TransitionResult,
        /// Only for scalar supports.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        convex_order: Option<ConvexOrderReport>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub kind: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<Violation>,
    /// Present when a bound was refused because the base market was rejected.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arbitrage_report: Option<Box<ArbitrageReport>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: ToolInfo,
    pub command: String,
    pub exit_code: i32,
    #[serde(default)]
    pub inputs: Vec<InputDigest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub settings: Option<RunSettings>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conversions: Vec<ConversionRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CommandResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorReport>,
}

impl ReportFile {
    pub fn new(command: &str) -> Self {
        Self {
            tool: ToolInfo::default(),
            command: command.into(),
            exit_code: 0,
            inputs: Vec::new(),
            settings: None,
            conversions: Vec::new(),
            result: None,
            error: None,
        }
    }

    /// Pretty JSON with every number rounded to [`SIGNIFICANT_DIGITS`].
    pub fn to_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report types serialize");
        round_numbers(&mut v);
        let mut s = serde_json::to_string_pretty(&v).expect("values serialize");
        s.push('\n');
        s
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }
}

/// `x` rounded to `SIGNIFICANT_DIGITS` significant digits.
pub fn round_significant(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{:.*e}", SIGNIFICANT_DIGITS - 1, x)
        .parse()
        .unwrap_or(x)
}

fn round_numbers(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(r) = n
                .as_f64()
                .map(round_significant)
                .and_then(serde_json::Number::from_f64)
            {
                *n = r;
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_numbers),
        Value::Object(o) => o.values_mut().for_each(round_numbers),
        _ => {}
    }
}
