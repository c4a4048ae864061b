//! Scenario runners and the report they produce.

mod ladder;
mod radial;
mod stein;
mod sweep;

use std::collections::BTreeMap;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use singlab::fractal::DimensionEstimate;

use crate::config::{ScenarioConfig, ScenarioName};

pub use ladder::{ball_base_at_points, ball_base_levels, ladder_set, BaseBall};

/// Note attached to every report.
pub const PROXY_NOTE: &str = "Hausdorff dimensions are not computable; box-counting slopes on the constructed \
sets and on lattice samples stand in for them.";

/// One verification verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criteria this check contributes to.
    pub criteria: Vec<u32>,
    pub passed: bool,
    pub detail: String,
}

/// A failed step; independent steps keep running.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepError {
    pub step: String,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// Columns `log scale, log count, fitted line`.
    LogLog,
    Profile,
    Heat,
}

/// Tabular plot data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub name: String,
    pub kind: SeriesKind,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Series {
    /// Log-log points of a box-counting fit with the fitted line.
    pub fn from_fit(name: impl Into<String>, est: &DimensionEstimate) -> Self {
        let rows = est
            .log_points()
            .into_iter()
            .map(|(x, y)| vec![x, y, est.intercept + est.slope * x])
            .collect();
        Series {
            name: name.into(),
            kind: SeriesKind::LogLog,
            columns: vec!["log_scale".into(), "log_count".into(), "fitted".into()],
            rows,
        }
    }

    /// Log-log points `(log x, log y)` with a fitted line `a + b log x`.
    pub fn log_log(name: impl Into<String>, points: &[(f64, f64)], slope: f64, intercept: f64) -> Self {
        Series {
            name: name.into(),
            kind: SeriesKind::LogLog,
            columns: vec!["log_scale".into(), "log_value".into(), "fitted".into()],
            rows: points.iter().map(|&(x, y)| vec![x, y, intercept + slope * x]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub checks: usize,
    pub passed: usize,
    pub failed: Vec<String>,
    pub errors: usize,
    /// Acceptance criteria exercised, each with its verdict.
    pub criteria: BTreeMap<u32, bool>,
    pub all_passed: bool,
}

/// Deterministic for a fixed config; wall times are kept apart.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: ScenarioName,
    pub config: ScenarioConfig,
    pub proxy_note: String,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<Check>,
    pub errors: Vec<StepError>,
    /// Per-step numeric results.
    pub results: BTreeMap<String, serde_json::Value>,
    pub series: Vec<Series>,
    pub summary: Summary,
    #[serde(skip)]
    pub timing: Timing,
    #[serde(skip)]
    pub payload: Payload,
}

/// Bulky outputs written as separate files rather than into the report.
#[derive(Debug, Clone, Default)]
pub struct Payload {
    pub rhs: Option<singlab::rhs::SingularRhs>,
    pub sd_map: Option<singlab::singdim::SdMap>,
    pub violations: Vec<singlab::singdim::UscViolation>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub steps: Vec<(String, f64)>,
    pub total_seconds: f64,
}

/// Collects checks, results and step timings while a scenario runs.
pub(crate) struct Recorder {
    checks: Vec<Check>,
    errors: Vec<StepError>,
    results: BTreeMap<String, serde_json::Value>,
    series: Vec<Series>,
    artifacts: Vec<Artifact>,
    timing: Vec<(String, f64)>,
    start: Instant,
    pub payload: Payload,
}

impl Recorder {
    fn new() -> Self {
        Recorder {
            checks: Vec::new(),
            errors: Vec::new(),
            results: BTreeMap::new(),
            series: Vec::new(),
            artifacts: Vec::new(),
            timing: Vec::new(),
            start: Instant::now(),
            payload: Payload::default(),
        }
    }

    pub fn check(&mut self, name: &str, criteria: &[u32], passed: bool, detail: impl Into<String>) {
        let detail = detail.into();
        log::info!("[{}] {name}: {detail}", if passed { "pass" } else { "FAIL" });
        self.checks.push(Check {
            name: name.into(),
            criteria: criteria.to_vec(),
            passed,
            detail,
        });
    }

    pub fn result<T: Serialize>(&mut self, key: &str, value: &T) {
        let v = serde_json::to_value(value).unwrap_or_else(|e| serde_json::Value::String(format!("unserializable: {e}")));
        self.results.insert(key.into(), v);
    }

    pub fn series(&mut self, s: Series) {
        self.series.push(s);
    }

    pub fn artifact(&mut self, name: &str, description: &str) {
        self.artifacts.push(Artifact {
            name: name.into(),
            description: description.into(),
        });
    }

    /// Runs a step, timing it; a failure is recorded, marks `criteria` as
    /// failed and yields `None`.
    pub fn step<T>(&mut self, name: &str, criteria: &[u32], f: impl FnOnce(&mut Self) -> anyhow::Result<T>) -> Option<T> {
        let t = Instant::now();
        let out = f(self);
        self.timing.push((name.into(), t.elapsed().as_secs_f64()));
        match out {
            Ok(v) => Some(v),
            Err(e) => {
                let message = format!("{e:#}");
                log::error!("step {name} failed: {message}");
                self.errors.push(StepError {
                    step: name.into(),
                    message: message.clone(),
                });
                if !criteria.is_empty() {
                    self.check(&format!("{name} completed"), criteria, false, message);
                }
                None
            }
        }
    }

    fn finish(self, config: &ScenarioConfig) -> ScenarioReport {
        let mut criteria: BTreeMap<u32, bool> = BTreeMap::new();
        for c in &self.checks {
            for &k in &c.criteria {
                let e = criteria.entry(k).or_insert(true);
                *e &= c.passed;
            }
        }
        let failed: Vec<String> = self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect();
        let summary = Summary {
            checks: self.checks.len(),
            passed: self.checks.len() - failed.len(),
            all_passed: failed.is_empty() && self.errors.is_empty(),
            failed,
            errors: self.errors.len(),
            criteria,
        };
        ScenarioReport {
            scenario: config.scenario,
            config: config.clone(),
            proxy_note: PROXY_NOTE.into(),
            artifacts: self.artifacts,
            checks: self.checks,
            errors: self.errors,
            results: self.results,
            series: self.series,
            summary,
            timing: Timing {
                total_seconds: self.start.elapsed().as_secs_f64(),
                steps: self.timing,
            },
            payload: self.payload,
        }
    }
}

/// Validates `config` and runs the named scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport, crate::config::ConfigError> {
    config.validate()?;
    let mut rec = Recorder::new();
    match config.scenario {
        ScenarioName::Stein => stein::run(config, &mut rec),
        ScenarioName::Radial => radial::run(config, &mut rec),
        ScenarioName::HpSweep => sweep::run(config, &mut rec),
        ScenarioName::Dense => ladder::run_dense(config, &mut rec),
        ScenarioName::Contrast | ScenarioName::Pointwise => ladder::run_contrast(config, &mut rec),
    }
    Ok(rec.finish(config))
}

impl ScenarioReport {
    /// Pretty JSON; identical for identical configs.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }
}
