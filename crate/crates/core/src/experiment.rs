//! End-to-end experiment: trace → zones → arrivals → thresholds → simulations → reports.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{ConfigError, ExperimentConfig, TraceSource};
use crate::events::{arrivals_from_dwells, extract_dwells, zone_activity, ArrivalStreams, ServiceEstimator};
use crate::geozone::{classify_zones, filter_inactive_zones, Classification, TrafficClass, ZoneKey};
use crate::metrics::{
    interval_winner_series, intervals_csv_header, write_interval_rows, write_summary_rows, write_zone_rows,
    zones_csv_header, IntervalRecord, Policy, ZoneOutcome, SUMMARY_HEADER,
};
use crate::seed::substream_seed;
use crate::selection::{build_threshold_table, ThresholdTable};
use crate::simulate::{simulate_zone, write_decision_log, DecisionLogEntry, SimulationParams, ZoneRun};
use crate::synthetic::{generate_synthetic, SyntheticError};
use crate::trace::{load_trace, replicate_trace, TraceError, TraceSet};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Synthetic(#[from] SyntheticError),
    #[error("no zone has any traffic")]
    NoActiveZones,
    #[error("cannot write {path}: {source}")]
    Output { path: PathBuf, source: io::Error },
}

impl ExperimentError {
    /// 2 for configuration problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            _ => 1,
        }
    }
}

/// Everything shared by the simulations of one run.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub records: usize,
    pub skipped_rows: usize,
    pub vehicles: usize,
    pub run_start: i64,
    /// Exclusive.
    pub run_end: i64,
    pub classification: Classification,
    pub streams: ArrivalStreams,
    pub thresholds: ThresholdTable,
}

/// Loads or generates the base trace (before replication).
pub fn load_source(config: &ExperimentConfig) -> Result<(TraceSet, usize), ExperimentError> {
    match &config.source {
        TraceSource::File(path) => {
            let loaded = load_trace(path)?;
            Ok((loaded.trace, loaded.skipped))
        }
        TraceSource::Synthetic { spec, .. } => {
            let mut spec = spec.clone();
            spec.seed = substream_seed(config.seed, "synthetic", 0);
            Ok((generate_synthetic(&spec)?, 0))
        }
    }
}

/// Replicates, zones, filters and classifies the trace, then builds arrival
/// streams and thresholds.
pub fn prepare_trace(
    config: &ExperimentConfig,
    base: TraceSet,
    skipped_rows: usize,
) -> Result<PreparedRun, ExperimentError> {
    let trace = if config.days > 1 {
        replicate_trace(&base, config.days)?
    } else {
        base
    };
    let dwells = extract_dwells(&trace, config.gap_timeout);
    let active = filter_inactive_zones(zone_activity(&dwells));
    if active.is_empty() {
        return Err(ExperimentError::NoActiveZones);
    }
    let classification = classify_zones(&active);
    let zones: Vec<ZoneKey> = active.iter().map(|a| a.zone).collect();
    let estimator = if config.noise > 0.0 {
        ServiceEstimator::Noisy {
            noise: config.noise,
            seed: substream_seed(config.seed, "estimator", 0),
        }
    } else {
        ServiceEstimator::Clairvoyant
    };
    let streams = arrivals_from_dwells(&trace, &dwells, &zones, estimator);
    let thresholds = build_threshold_table(&streams);
    Ok(PreparedRun {
        records: trace.record_count(),
        skipped_rows,
        vehicles: trace.vehicle_count(),
        run_start: trace.origin(),
        run_end: trace.window_end(),
        classification,
        streams,
        thresholds,
    })
}

pub fn prepare(config: &ExperimentConfig) -> Result<PreparedRun, ExperimentError> {
    config.validate()?;
    let (base, skipped) = load_source(config)?;
    prepare_trace(config, base, skipped)
}

/// Results of one budget setting.
#[derive(Debug, Clone)]
pub struct BudgetRun {
    pub budget: u32,
    pub outcomes: Vec<ZoneOutcome>,
    /// Per-interval records with the member active during each interval.
    pub intervals: Vec<(IntervalRecord, usize)>,
    pub decision_log: Vec<DecisionLogEntry>,
    pub runs: Vec<ZoneRun>,
}

/// Runs the ensemble and all baselines in every zone at one budget.
pub fn simulate_budget(prepared: &PreparedRun, config: &ExperimentConfig, budget: u32, keep_runs: bool) -> BudgetRun {
    let params = SimulationParams {
        seed: substream_seed(config.seed, "ensemble", 0),
        budget,
        interval: config.interval_d,
        run_start: prepared.run_start,
        run_end: prepared.run_end,
        keep_log: true,
        keep_assignments: keep_runs,
    };
    let per_zone: Vec<_> = prepared
        .streams
        .zones()
        .par_iter()
        .filter_map(|(zone, events)| {
            let thresholds = prepared.thresholds.get(zone)?;
            let stats = prepared
                .classification
                .zones
                .binary_search_by(|s| s.zone.cmp(zone))
                .ok()?;
            let stats = prepared.classification.zones[stats];
            let mut run = simulate_zone(*zone, events, thresholds, &params);
            let series = interval_winner_series(&run.log, params.run_start, params.run_end, params.interval);
            let intervals: Vec<(IntervalRecord, usize)> =
                series.into_iter().zip(run.history.iter().map(|h| h.active)).collect();
            let outcome = ZoneOutcome::from_run(&run, stats.vehicle_count, stats.traffic_class, budget);
            let log = if config.decision_log {
                std::mem::take(&mut run.log)
            } else {
                Vec::new()
            };
            run.log = Vec::new();
            Some((outcome, intervals, log, keep_runs.then_some(run)))
        })
        .collect();
    let mut out = BudgetRun {
        budget,
        outcomes: Vec::with_capacity(per_zone.len()),
        intervals: Vec::new(),
        decision_log: Vec::new(),
        runs: Vec::new(),
    };
    for (outcome, intervals, log, run) in per_zone {
        out.outcomes.push(outcome);
        out.intervals.extend(intervals);
        out.decision_log.extend(log);
        out.runs.extend(run);
    }
    out
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub prepared: PreparedRun,
    pub budgets: Vec<BudgetRun>,
    pub files: Vec<PathBuf>,
}

fn create(dir: &Path, name: &str) -> Result<(PathBuf, BufWriter<File>), ExperimentError> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|source| ExperimentError::Output {
        path: path.clone(),
        source,
    })?;
    Ok((path, BufWriter::new(file)))
}

fn write_file(
    dir: &Path,
    name: &str,
    files: &mut Vec<PathBuf>,
    body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
) -> Result<(), ExperimentError> {
    let (path, mut w) = create(dir, name)?;
    body(&mut w)
        .and_then(|_| w.flush())
        .map_err(|source| ExperimentError::Output {
            path: path.clone(),
            source,
        })?;
    files.push(path);
    Ok(())
}

fn manifest(config: &ExperimentConfig, prepared: &PreparedRun, budgets: &[u32]) -> String {
    let c = &prepared.classification;
    let mut s = config.manifest();
    s.push_str("# derived\n");
    let budgets: Vec<String> = budgets.iter().map(u32::to_string).collect();
    let lines = [
        format!("resolved-budgets = {}", budgets.join(",")),
        format!("records = {}", prepared.records),
        format!("skipped-rows = {}", prepared.skipped_rows),
        format!("vehicles = {}", prepared.vehicles),
        format!("run-start = {}", prepared.run_start),
        format!("run-end = {}", prepared.run_end),
        format!("arrivals = {}", prepared.streams.event_count()),
        format!("active-zones = {}", c.zones.len()),
        format!("zone-vehicles-mean = {:.4}", c.mean),
        format!("zone-vehicles-std = {:.4}", c.std),
        format!("zones-light = {}", c.count(TrafficClass::Light)),
        format!("zones-medium = {}", c.count(TrafficClass::Medium)),
        format!("zones-high = {}", c.count(TrafficClass::High)),
    ];
    for line in lines {
        s.push_str(&line);
        s.push('\n');
    }
    s
}

/// Runs the full pipeline and writes `zones.csv`, `intervals.csv`,
/// `summary.csv` and `run_manifest.txt` (plus optional `arrivals.csv` and
/// `decisions_<budget>.csv`) into the output directory.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, ExperimentError> {
    let prepared = prepare(config)?;
    let budgets = config.budgets();
    log::info!(
        "{} records, {} active zones, {} arrivals; budgets {:?}",
        prepared.records,
        prepared.classification.zones.len(),
        prepared.streams.event_count(),
        budgets
    );
    let runs: Vec<BudgetRun> = budgets
        .iter()
        .map(|&b| simulate_budget(&prepared, config, b, false))
        .collect();

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(|source| ExperimentError::Output {
        path: dir.clone(),
        source,
    })?;
    let mut files = Vec::new();
    write_file(dir, "zones.csv", &mut files, |w| {
        writeln!(w, "{}", zones_csv_header())?;
        runs.iter().try_for_each(|r| write_zone_rows(&r.outcomes, w))
    })?;
    write_file(dir, "intervals.csv", &mut files, |w| {
        writeln!(w, "{}", intervals_csv_header())?;
        for r in &runs {
            let (records, active): (Vec<IntervalRecord>, Vec<usize>) = r.intervals.iter().copied().unzip();
            write_interval_rows(r.budget, &records, &active, w)?;
        }
        Ok(())
    })?;
    let baseline = Policy::Fixed(config.baseline);
    write_file(dir, "summary.csv", &mut files, |w| {
        writeln!(w, "{SUMMARY_HEADER}")?;
        runs.iter()
            .try_for_each(|r| write_summary_rows(r.budget, &r.outcomes, baseline, config.accounting, w))
    })?;
    write_file(dir, "run_manifest.txt", &mut files, |w| {
        w.write_all(manifest(config, &prepared, &budgets).as_bytes())
    })?;
    if config.dump_arrivals {
        write_file(dir, "arrivals.csv", &mut files, |w| prepared.streams.write_csv(w))?;
    }
    if config.decision_log {
        for r in &runs {
            let name = format!("decisions_{}.csv", r.budget);
            write_file(dir, &name, &mut files, |w| {
                write_decision_log(&r.decision_log, prepared.streams.vehicle_ids(), w, true)
            })?;
        }
    }
    Ok(RunReport {
        prepared,
        budgets: runs,
        files,
    })
}
