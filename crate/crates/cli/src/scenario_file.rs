//! Reading scenario files with file and line context in every error.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use drmech_core::{validate_scenario, Error, RawScenario, Scenario};

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).with_context(|| format!("cannot read scenario file {}", path.display()))?;
    parse_scenario(&text, &path.display().to_string())
}

/// Parses and validates scenario JSON; `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario> {
    let raw: RawScenario =
        serde_json::from_str(text).map_err(|e| anyhow!("{origin}:{}:{}: {e}", e.line(), e.column()))?;
    validate_scenario(&raw).map_err(|e| match line_of(text, field_of(&e)) {
        Some(line) => anyhow!("{origin}:{line}: {e}"),
        None => anyhow!("{origin}: {e}"),
    })
}

/// The scenario key a validation error is about.
fn field_of(error: &Error) -> &'static str {
    match error {
        Error::TooFewSlots(_) => "n_slots",
        Error::BaselineLength { .. } | Error::NegativeBaseline { .. } => "baseline_mwh",
        Error::FlatRate(_) => "flat_rate",
        Error::RatesNotIncreasing { .. } | Error::NonPositiveRate(_) | Error::RateCount { .. } => "marginal_rates",
        Error::BreakpointsNotAscending { .. } => "breakpoints_mwh",
        Error::CostCurveCount { .. } => "cost",
        Error::Mu(_) | Error::MissingMu => "mu",
        Error::Scale(_) => "scale",
        Error::Exponent(_) => "exponent",
        Error::Knots(_) => "knots",
        Error::BaseFractions { .. } => "base_fractions",
        _ => "discomfort",
    }
}

/// 1-based line of the first occurrence of `"key"`.
fn line_of(text: &str, key: &str) -> Option<usize> {
    let quoted = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&quoted)).map(|k| k + 1)
}
