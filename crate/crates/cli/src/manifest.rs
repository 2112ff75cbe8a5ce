//! What to run: scenario, mechanisms, optimizer settings and the sweep.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{bail, Result};
use drmech_core::{Mechanism, OptimizerOptions};

/// A mechanism to report, or the dictatorial bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Entry {
    Mechanism(Mechanism),
    Dictatorial,
}

impl Entry {
    pub fn name(self) -> &'static str {
        match self {
            Entry::Mechanism(m) => m.name(),
            Entry::Dictatorial => "dictatorial",
        }
    }
}

impl fmt::Display for Entry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Entry {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "dictatorial" {
            return Ok(Entry::Dictatorial);
        }
        s.parse::<Mechanism>().map(Entry::Mechanism).map_err(|_| {
            anyhow::anyhow!("unknown mechanism '{s}' (expected base, optimized, robust, broadcast or dictatorial)")
        })
    }
}

/// Parses a comma-separated mechanism list; `all` expands to every entry.
pub fn parse_entries(list: &str) -> Result<Vec<Entry>> {
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if name == "all" {
            out.extend(Mechanism::ALL.map(Entry::Mechanism));
            out.push(Entry::Dictatorial);
        } else {
            out.push(name.parse()?);
        }
    }
    out.dedup();
    Ok(out)
}

/// Parses comma-separated numbers, accepting fractions such as `1/3`.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|v| {
            let parsed = match v.split_once('/') {
                Some((a, b)) => a
                    .trim()
                    .parse::<f64>()
                    .ok()
                    .zip(b.trim().parse::<f64>().ok())
                    .map(|(a, b)| a / b),
                None => v.parse::<f64>().ok(),
            };
            parsed.ok_or_else(|| anyhow::anyhow!("malformed number '{v}'"))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub scenario: PathBuf,
    pub entries: Vec<Entry>,
    pub options: OptimizerOptions,
    /// Flexibility values; `None` keeps the scenario's own discomfort model.
    pub mu: Option<Vec<f64>>,
    /// Users per Monte Carlo check at each optimum; `None` skips simulation.
    pub users: Option<usize>,
    /// Final broadcast tie-smoothing width in $/MWh, overriding the schedule end.
    pub final_smoothing: Option<f64>,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn seed(&self) -> u64 {
        self.options.seed
    }

    pub fn mechanisms(&self) -> Vec<Mechanism> {
        self.entries
            .iter()
            .filter_map(|e| match e {
                Entry::Mechanism(m) => Some(*m),
                Entry::Dictatorial => None,
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            bail!("no mechanisms selected");
        }
        if let Some(mu) = &self.mu {
            if mu.is_empty() {
                bail!("no sweep values given");
            }
            if let Some(v) = mu.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                bail!("sweep values must be finite and positive (got {v})");
            }
        }
        if self.users == Some(0) {
            bail!("simulation needs at least one user");
        }
        if let Some(eps) = self.final_smoothing {
            if !(eps.is_finite() && eps > 0.0) {
                bail!("smoothing width must be finite and positive (got {eps})");
            }
        }
        if self.options.starts == 0 {
            bail!("at least one random start is needed");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(entries: Vec<Entry>, mu: Option<Vec<f64>>) -> RunManifest {
        RunManifest {
            scenario: "s.scenario".into(),
            entries,
            options: OptimizerOptions::default(),
            mu,
            users: None,
            final_smoothing: None,
            out: "out".into(),
        }
    }

    #[test]
    fn entries_parse() {
        assert_eq!(
            parse_entries("base, dictatorial").unwrap(),
            vec![Entry::Mechanism(Mechanism::Base), Entry::Dictatorial]
        );
        assert_eq!(parse_entries("all").unwrap().len(), 5);
        assert!(parse_entries("bogus").is_err());
        assert!(parse_entries("").unwrap().is_empty());
    }

    #[test]
    fn values_parse() {
        let v = parse_values("1/10, 1/6,0.5,1").unwrap();
        assert_eq!(v, vec![0.1, 1.0 / 6.0, 0.5, 1.0]);
        assert!(parse_values("1/x").is_err());
    }

    #[test]
    fn validation() {
        let err = manifest(vec![], None).validate().unwrap_err();
        assert_eq!(err.to_string(), "no mechanisms selected");
        assert!(manifest(vec![Entry::Dictatorial], Some(vec![1.0, -2.0]))
            .validate()
            .is_err());
        assert!(manifest(vec![Entry::Dictatorial], Some(vec![f64::NAN]))
            .validate()
            .is_err());
        manifest(vec![Entry::Dictatorial], Some(vec![0.1, 1.0]))
            .validate()
            .unwrap();
    }
}
