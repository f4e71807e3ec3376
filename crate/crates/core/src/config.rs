//! Experiment configuration.
//!
//! A config file holds `key = value` lines (blank lines and `#` comments are
//! ignored). Keys are the long command-line flag names without dashes, so any
//! key can be overridden by the flag of the same name.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use thiserror::Error;

use crate::events::DEFAULT_GAP_TIMEOUT;
use crate::metrics::Accounting;
use crate::selection::PERCENTILES;
use crate::synthetic::SyntheticTraceSpec;

/// Boundary interval used throughout the original experiments: six hours.
pub const DEFAULT_INTERVAL_D: i64 = 6 * 3600;

/// Mean vehicles per zone that budget fractions refer to by default.
pub const DEFAULT_BUDGET_REFERENCE: f64 = 35.0;

/// Every key a config file or the command line may set.
pub const KEYS: &[&str] = &[
    "trace",
    "synthetic",
    "days",
    "interval-d",
    "budget-fraction",
    "budget",
    "budget-reference",
    "seed",
    "accounting",
    "gap-timeout",
    "noise",
    "baseline",
    "out",
    "dump-arrivals",
    "decision-log",
];

#[derive(Debug, Error, PartialEq)]
#[error("{0}")]
pub struct ConfigError(pub String);

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

/// Parses `key = value` lines. Later duplicates override earlier ones.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, String> {
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("line {}: expected key = value", n + 1))?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    /// `label` is the preset name or spec path the user gave.
    Synthetic {
        label: String,
        spec: SyntheticTraceSpec,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BudgetSetting {
    /// Fractions of the budget reference, floored.
    Fractions(Vec<f64>),
    Absolute(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub source: TraceSource,
    /// Replication factor applied to a one-day trace.
    pub days: u32,
    pub interval_d: i64,
    pub budget: BudgetSetting,
    pub budget_reference: f64,
    pub seed: u64,
    pub accounting: Accounting,
    pub gap_timeout: i64,
    /// Multiplicative noise of the service-time estimator; zero is clairvoyant.
    pub noise: f64,
    /// Ensemble member the comparison rows are taken against.
    pub baseline: usize,
    pub output_dir: PathBuf,
    pub dump_arrivals: bool,
    pub decision_log: bool,
}

impl ExperimentConfig {
    pub fn new(source: TraceSource, output_dir: impl Into<PathBuf>) -> Self {
        ExperimentConfig {
            source,
            days: 1,
            interval_d: DEFAULT_INTERVAL_D,
            budget: BudgetSetting::Fractions(vec![1.0]),
            budget_reference: DEFAULT_BUDGET_REFERENCE,
            seed: 0,
            accounting: Accounting::Credited,
            gap_timeout: DEFAULT_GAP_TIMEOUT,
            noise: 0.0,
            baseline: 0,
            output_dir: output_dir.into(),
            dump_arrivals: false,
            decision_log: false,
        }
    }

    /// Builds a config from resolved key/value pairs (see [`KEYS`]).
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(unknown) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return err(format!("unknown config key {unknown:?}"));
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
            value
                .trim()
                .parse()
                .map_err(|_| ConfigError(format!("invalid value {value:?} for {key}")))
        }
        fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
            value.split(',').map(|v| num(key, v)).collect()
        }
        fn flag(key: &str, value: &str) -> Result<bool, ConfigError> {
            match value {
                "true" | "1" | "yes" => Ok(true),
                "false" | "0" | "no" => Ok(false),
                _ => err(format!("invalid value {value:?} for {key} (expected true or false)")),
            }
        }

        let source = match (get("trace"), get("synthetic")) {
            (Some(_), Some(_)) => return err("give either trace or synthetic, not both"),
            (None, None) => return err("no input: give trace PATH or synthetic SPEC"),
            (Some(path), None) => TraceSource::File(PathBuf::from(path)),
            (None, Some(label)) => TraceSource::Synthetic {
                label: label.to_string(),
                spec: resolve_synthetic(label)?,
            },
        };
        let out = get("out").ok_or_else(|| ConfigError("no output directory: give out DIR".into()))?;
        let mut config = ExperimentConfig::new(source, out);
        if let Some(v) = get("days") {
            config.days = num("days", v)?;
        }
        if let Some(v) = get("interval-d") {
            config.interval_d = num("interval-d", v)?;
        }
        config.budget = match (get("budget-fraction"), get("budget")) {
            (Some(_), Some(_)) => return err("give either budget-fraction or budget, not both"),
            (Some(v), None) => BudgetSetting::Fractions(list("budget-fraction", v)?),
            (None, Some(v)) => BudgetSetting::Absolute(list("budget", v)?),
            (None, None) => config.budget,
        };
        if let Some(v) = get("budget-reference") {
            config.budget_reference = num("budget-reference", v)?;
        }
        if let Some(v) = get("seed") {
            config.seed = num("seed", v)?;
        }
        if let Some(v) = get("accounting") {
            config.accounting = v.parse().map_err(ConfigError)?;
        }
        if let Some(v) = get("gap-timeout") {
            config.gap_timeout = num("gap-timeout", v)?;
        }
        if let Some(v) = get("noise") {
            config.noise = num("noise", v)?;
        }
        if let Some(v) = get("baseline") {
            let x: u8 = num("baseline", v.trim_start_matches("TBO-").trim_start_matches("tbo"))?;
            config.baseline = PERCENTILES
                .iter()
                .position(|&p| p == x)
                .ok_or_else(|| ConfigError(format!("baseline must be one of {PERCENTILES:?}")))?;
        }
        if let Some(v) = get("dump-arrivals") {
            config.dump_arrivals = flag("dump-arrivals", v)?;
        }
        if let Some(v) = get("decision-log") {
            config.decision_log = flag("decision-log", v)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.interval_d <= 0 {
            return err(format!("interval-d must be positive, got {}", self.interval_d));
        }
        if self.days == 0 {
            return err("days must be at least 1");
        }
        if self.gap_timeout <= 0 {
            return err(format!("gap-timeout must be positive, got {}", self.gap_timeout));
        }
        if !(self.noise.is_finite() && (0.0..=1.0).contains(&self.noise)) {
            return err(format!("noise must be within [0, 1], got {}", self.noise));
        }
        if !(self.budget_reference.is_finite() && self.budget_reference > 0.0) {
            return err("budget-reference must be positive");
        }
        match &self.budget {
            BudgetSetting::Fractions(f) if f.is_empty() || f.iter().any(|x| !x.is_finite() || *x < 0.0) => {
                return err("budget fractions must be non-negative numbers");
            }
            BudgetSetting::Absolute(b) if b.is_empty() => return err("budget list is empty"),
            _ => {}
        }
        if self.baseline >= PERCENTILES.len() {
            return err("baseline index out of range");
        }
        if let TraceSource::Synthetic { spec, .. } = &self.source {
            spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(())
    }

    /// Per-zone budgets, one simulation per entry, in the order given.
    pub fn budgets(&self) -> Vec<u32> {
        match &self.budget {
            BudgetSetting::Fractions(f) => f
                .iter()
                .map(|x| (x * self.budget_reference + 1e-9).floor() as u32)
                .collect(),
            BudgetSetting::Absolute(b) => b.clone(),
        }
    }

    /// Resolved configuration as `key = value` lines.
    pub fn manifest(&self) -> String {
        let mut s = String::new();
        match &self.source {
            TraceSource::File(p) => writeln!(s, "trace = {}", p.display()).unwrap(),
            TraceSource::Synthetic { label, .. } => writeln!(s, "synthetic = {label}").unwrap(),
        }
        writeln!(s, "days = {}", self.days).unwrap();
        writeln!(s, "interval-d = {}", self.interval_d).unwrap();
        let join = |v: Vec<String>| v.join(",");
        match &self.budget {
            BudgetSetting::Fractions(f) => writeln!(
                s,
                "budget-fraction = {}",
                join(f.iter().map(|x| x.to_string()).collect())
            )
            .unwrap(),
            BudgetSetting::Absolute(b) => {
                writeln!(s, "budget = {}", join(b.iter().map(|x| x.to_string()).collect())).unwrap()
            }
        }
        writeln!(s, "budget-reference = {}", self.budget_reference).unwrap();
        writeln!(s, "seed = {}", self.seed).unwrap();
        writeln!(s, "accounting = {}", self.accounting.label()).unwrap();
        writeln!(s, "gap-timeout = {}", self.gap_timeout).unwrap();
        writeln!(s, "noise = {}", self.noise).unwrap();
        writeln!(s, "baseline = {}", PERCENTILES[self.baseline]).unwrap();
        writeln!(s, "out = {}", self.output_dir.display()).unwrap();
        writeln!(s, "dump-arrivals = {}", self.dump_arrivals).unwrap();
        writeln!(s, "decision-log = {}", self.decision_log).unwrap();
        s
    }
}

/// A preset name, or a path to a synthetic spec file.
fn resolve_synthetic(label: &str) -> Result<SyntheticTraceSpec, ConfigError> {
    if let Some(spec) = SyntheticTraceSpec::preset(label) {
        return Ok(spec);
    }
    let text = std::fs::read_to_string(label).map_err(|e| {
        ConfigError(format!(
            "synthetic spec {label:?} is neither a preset nor a readable file: {e}"
        ))
    })?;
    SyntheticTraceSpec::from_kv(&text).map_err(|e| ConfigError(format!("{label}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(text: &str) -> BTreeMap<String, String> {
        parse_kv(text).unwrap()
    }

    #[test]
    fn defaults_and_overrides() {
        let c = ExperimentConfig::from_pairs(&pairs("synthetic = small\nout = /tmp/x")).unwrap();
        assert_eq!(c.interval_d, 21_600);
        assert_eq!(c.gap_timeout, 1800);
        assert_eq!(c.budgets(), vec![35]);
        let c = ExperimentConfig::from_pairs(&pairs(
            "synthetic = small\nout = o\nbudget-fraction = 0.25,0.5,1,2\naccounting = truncated\nbaseline = 30",
        ))
        .unwrap();
        assert_eq!(c.budgets(), vec![8, 17, 35, 70]);
        assert_eq!(c.accounting, Accounting::Truncated);
        assert_eq!(c.baseline, 2);
    }

    #[test]
    fn validation_errors() {
        let bad = |t: &str| ExperimentConfig::from_pairs(&pairs(t)).unwrap_err();
        bad("synthetic = small\nout = o\ninterval-d = 0");
        bad("synthetic = small\nout = o\nbudget = 3\nbudget-fraction = 1");
        bad("trace = a\nsynthetic = small\nout = o");
        bad("out = o");
        bad("synthetic = small");
        bad("synthetic = small\nout = o\ncolour = red");
        bad("synthetic = nope-not-a-file\nout = o");
        bad("synthetic = small\nout = o\nbaseline = 15");
        bad("synthetic = small\nout = o\naccounting = fuzzy");
    }

    #[test]
    fn manifest_round_trips() {
        let c = ExperimentConfig::from_pairs(&pairs("synthetic = small\nout = o\nbudget = 3,4\nseed = 9")).unwrap();
        let again = ExperimentConfig::from_pairs(&parse_kv(&c.manifest()).unwrap()).unwrap();
        assert_eq!(c, again);
    }
}
