use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::experiment::{run_convergence_experiment, Experiment, ExperimentReport};
use crate::error::{Error, Result};

/// Where a verification run writes its report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub json: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
}

/// A threshold on one metric of the report.
///
/// Without `m` the bound applies at every `m`; without `t` at every
/// checkpoint. `decreasing` asks for the value at the largest `m` to be
/// strictly below the value at the smallest, separately for each `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub id: String,
    pub metric: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default)]
    pub decreasing: bool,
}

/// A verification config file: the experiment, its thresholds and outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub checks: Vec<Check>,
    #[serde(default)]
    pub output: OutputPaths,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        let known = self.experiment.theorem.metrics();
        for check in &self.checks {
            if !known.contains(&check.metric.as_str()) {
                return Err(Error::param(
                    "checks.metric",
                    format!("{:?} is not reported for theorem {} (known: {})", check.metric, self.experiment.theorem, known.join(", ")),
                ));
            }
            if check.max.is_none() && check.min.is_none() && !check.decreasing {
                return Err(Error::param("checks", format!("check {:?} sets none of max, min, decreasing", check.id)));
            }
            if let Some(m) = check.m {
                if !self.experiment.m_grid.contains(&m) {
                    return Err(Error::param("checks.m", format!("{m} is not in m_grid")));
                }
            }
            if check.decreasing && self.experiment.m_grid.len() < 2 {
                return Err(Error::param("checks.decreasing", "needs at least two values in m_grid"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub id: String,
    pub metric: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOutcome {
    pub report: Option<ExperimentReport>,
    pub checks: Vec<CheckOutcome>,
}

impl VerifyOutcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

fn matches_t(check: Option<f64>, row: Option<f64>) -> bool {
    match (check, row) {
        (None, _) => true,
        (Some(x), Some(y)) => (x - y).abs() <= 1e-9 * x.abs().max(1.0),
        (Some(_), None) => false,
    }
}

fn fmt_t(t: Option<f64>) -> String {
    t.map_or_else(|| "path".to_string(), |t| format!("t={t}"))
}

fn evaluate(check: &Check, report: &ExperimentReport) -> CheckOutcome {
    let rows: Vec<_> = report
        .rows
        .iter()
        .filter(|r| r.metric == check.metric && check.m.is_none_or(|m| m == r.m) && matches_t(check.t, r.t))
        .collect();
    let mut failures = Vec::new();
    let mut seen = Vec::new();
    if rows.is_empty() {
        failures.push("no matching values".to_string());
    }
    for r in &rows {
        seen.push(format!("m={} {}: {:.6}", r.m, fmt_t(r.t), r.value));
        if check.max.is_some_and(|max| !(r.value <= max)) {
            failures.push(format!("m={} {}: {} > {}", r.m, fmt_t(r.t), r.value, check.max.unwrap_or_default()));
        }
        if check.min.is_some_and(|min| !(r.value >= min)) {
            failures.push(format!("m={} {}: {} < {}", r.m, fmt_t(r.t), r.value, check.min.unwrap_or_default()));
        }
    }
    if check.decreasing {
        let grid = &report.experiment.m_grid;
        let (first, last) = (grid[0], grid[grid.len() - 1]);
        let mut compared = 0;
        for r in rows.iter().filter(|r| r.m == first) {
            if let Some(l) = rows.iter().find(|l| l.m == last && matches_t(r.t, l.t) && matches_t(l.t, r.t)) {
                compared += 1;
                if !(l.value < r.value) {
                    failures.push(format!("{}: not decreasing ({} at m={first}, {} at m={last})", fmt_t(r.t), r.value, l.value));
                }
            }
        }
        if compared == 0 {
            failures.push("no values to compare across m".to_string());
        }
    }
    let passed = failures.is_empty();
    CheckOutcome {
        id: check.id.clone(),
        metric: check.metric.clone(),
        passed,
        detail: if passed { seen.join("; ") } else { failures.join("; ") },
    }
}

/// Validates `config`, runs its experiment (unless `dry_run`) and evaluates
/// every check. Output files are left to the caller.
pub fn run_verify(config: &ExperimentConfig, threads: usize, dry_run: bool) -> Result<VerifyOutcome> {
    config.validate()?;
    if dry_run {
        return Ok(VerifyOutcome {
            report: None,
            checks: Vec::new(),
        });
    }
    let report = run_convergence_experiment(&config.experiment, threads)?;
    let checks = config.checks.iter().map(|c| evaluate(c, &report)).collect();
    Ok(VerifyOutcome {
        report: Some(report),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const CONFIG: &str = r#"{
        "experiment": {
            "theorem": "1.3",
            "params": {"a": 1, "b": 1, "k": 1},
            "m_grid": [100, 1000],
            "replicates": 200,
            "checkpoints": [0.25, 0.5, 1.0],
            "seed": 5
        },
        "checks": [
            {"id": "8", "metric": "frac_within", "min": 0.95},
            {"id": "8", "metric": "sup_gap_mean", "decreasing": true},
            {"id": "x", "metric": "mean_abs_gap", "t": 0.5, "max": 1e-9}
        ]
    }"#;

    #[test]
    fn checks_pass_and_fail_as_expected() {
        let config = ExperimentConfig::from_json(CONFIG).unwrap();
        let outcome = run_verify(&config, 1, false).unwrap();
        let passed: Vec<bool> = outcome.checks.iter().map(|c| c.passed).collect();
        assert_eq!(passed, vec![true, true, false], "{:?}", outcome.checks);
        assert!(!outcome.passed());
    }

    #[test]
    fn dry_run_and_schema_errors() {
        let config = ExperimentConfig::from_json(CONFIG).unwrap();
        let outcome = run_verify(&config, 1, true).unwrap();
        assert!(outcome.report.is_none());
        assert!(ExperimentConfig::from_json(&CONFIG.replace("\"checks\"", "\"chex\"")).is_err());
        assert!(ExperimentConfig::from_json(&CONFIG.replace("frac_within", "tv")).is_err());
        assert!(ExperimentConfig::from_json(&CONFIG.replace("[100, 1000]", "[]")).is_err());
    }
}
