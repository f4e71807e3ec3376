use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use lcbsim::config::{parse_kv, ExperimentConfig};
use lcbsim::run_experiment;

/// Replays vehicle traces and compares fixed-threshold broker selection with
/// the switching ensemble. Every option may also be set in the config file
/// under its long name (`interval-d = 21600`); flags win over the file.
#[derive(Debug, Parser)]
#[command(name = "lcbsim", version)]
struct Cli {
    /// Flat `key = value` config file.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// CSV trace: id,timestamp,lat,lon[,speed[,heading]] (`.gz` accepted).
    #[arg(long, value_name = "PATH")]
    trace: Option<String>,
    /// Synthetic trace: preset (small, two-regime, city) or spec file.
    #[arg(long, value_name = "SPEC")]
    synthetic: Option<String>,
    /// Replicate a one-day trace this many days.
    #[arg(long, value_name = "K")]
    days: Option<String>,
    /// Seconds between ensemble switching boundaries.
    #[arg(long = "interval-d", value_name = "SECONDS")]
    interval_d: Option<String>,
    /// Budget as fraction(s) of the budget reference, comma separated.
    #[arg(long = "budget-fraction", value_name = "F")]
    budget_fraction: Option<String>,
    /// Absolute per-zone budget(s), comma separated.
    #[arg(long, value_name = "N")]
    budget: Option<String>,
    /// Mean vehicles per zone that fractions refer to (default 35).
    #[arg(long = "budget-reference", value_name = "N")]
    budget_reference: Option<String>,
    #[arg(long, value_name = "S")]
    seed: Option<String>,
    /// credited or truncated.
    #[arg(long, value_name = "MODE")]
    accounting: Option<String>,
    #[arg(long = "gap-timeout", value_name = "SECONDS")]
    gap_timeout: Option<String>,
    /// Multiplicative noise of service-time estimates (0 = exact).
    #[arg(long, value_name = "FRACTION")]
    noise: Option<String>,
    /// Member the comparison rows use as baseline, by percentile (default 10).
    #[arg(long, value_name = "X")]
    baseline: Option<String>,
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Also write arrivals.csv.
    #[arg(long = "dump-arrivals")]
    dump_arrivals: bool,
    /// Also write the ensemble decision log per budget.
    #[arg(long = "decision-log")]
    decision_log: bool,
}

impl Cli {
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        let flag = |set: bool| set.then(|| "true".to_string());
        vec![
            ("trace", self.trace.clone()),
            ("synthetic", self.synthetic.clone()),
            ("days", self.days.clone()),
            ("interval-d", self.interval_d.clone()),
            ("budget-fraction", self.budget_fraction.clone()),
            ("budget", self.budget.clone()),
            ("budget-reference", self.budget_reference.clone()),
            ("seed", self.seed.clone()),
            ("accounting", self.accounting.clone()),
            ("gap-timeout", self.gap_timeout.clone()),
            ("noise", self.noise.clone()),
            ("baseline", self.baseline.clone()),
            ("out", self.out.clone()),
            ("dump-arrivals", flag(self.dump_arrivals)),
            ("decision-log", flag(self.decision_log)),
        ]
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig, String> {
    let mut pairs = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            parse_kv(&text).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None => BTreeMap::new(),
    };
    for (key, value) in cli.overrides() {
        if let Some(v) = value {
            // a flag replaces whichever of a mutually exclusive pair the file set
            match key {
                "trace" => pairs.remove("synthetic"),
                "synthetic" => pairs.remove("trace"),
                "budget" => pairs.remove("budget-fraction"),
                "budget-fraction" => pairs.remove("budget"),
                _ => None,
            };
            pairs.insert(key.to_string(), v);
        }
    }
    ExperimentConfig::from_pairs(&pairs).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let config = match resolve(&cli) {
        Ok(c) => c,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    match run_experiment(&config) {
        Ok(report) => {
            for f in &report.files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
