//! Aggregation of per-zone outcomes: class averages, best-algorithm counts,
//! interval winner series and ensemble-versus-baseline comparisons.
//!
//! Times stay in whole seconds; percentages are printed with one decimal.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use crate::geozone::{TrafficClass, ZoneKey};
use crate::selection::{argmax_lowest, AlgorithmSpec, PolicyOutcome, ALGORITHM_COUNT, PERCENTILES};
use crate::simulate::{DecisionLogEntry, ZoneRun};

/// Which service figure is reported for a committed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Accounting {
    /// Full estimated service time of every accepted vehicle.
    #[default]
    Credited,
    /// Service cut short when the broker is replaced.
    Truncated,
}

impl Accounting {
    pub fn label(self) -> &'static str {
        match self {
            Accounting::Credited => "credited",
            Accounting::Truncated => "truncated",
        }
    }

    pub fn service(self, outcome: &PolicyOutcome) -> i64 {
        match self {
            Accounting::Credited => outcome.credited,
            Accounting::Truncated => outcome.truncated,
        }
    }
}

impl FromStr for Accounting {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "credited" => Ok(Accounting::Credited),
            "truncated" => Ok(Accounting::Truncated),
            other => Err(format!(
                "unknown accounting mode {other:?} (expected credited or truncated)"
            )),
        }
    }
}

/// A committed path whose outcome is tracked per zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Policy {
    Ensemble,
    /// Standalone ensemble member by index.
    Fixed(usize),
    Tbo0,
}

impl Policy {
    /// Ensemble, TBO-0, then TBO-10 through TBO-90.
    pub fn all() -> Vec<Policy> {
        let mut v = vec![Policy::Ensemble, Policy::Tbo0];
        v.extend((0..ALGORITHM_COUNT).map(Policy::Fixed));
        v
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::Ensemble => f.write_str("ensemble"),
            Policy::Fixed(i) => write!(f, "TBO-{}", PERCENTILES[*i]),
            Policy::Tbo0 => f.write_str("TBO-0"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneOutcome {
    pub zone: ZoneKey,
    pub vehicle_count: u64,
    pub traffic_class: TrafficClass,
    pub budget: u32,
    pub ensemble: PolicyOutcome,
    /// Boundaries at which the ensemble changed its active member.
    pub active_switches: u32,
    pub baselines: [PolicyOutcome; ALGORITHM_COUNT],
    pub tbo0: PolicyOutcome,
}

impl ZoneOutcome {
    pub fn from_run(run: &ZoneRun, vehicle_count: u64, traffic_class: TrafficClass, budget: u32) -> Self {
        ZoneOutcome {
            zone: run.zone,
            vehicle_count,
            traffic_class,
            budget,
            ensemble: run.ensemble,
            active_switches: run.active_switches,
            baselines: run.baselines,
            tbo0: run.tbo0,
        }
    }

    pub fn policy(&self, policy: Policy) -> &PolicyOutcome {
        match policy {
            Policy::Ensemble => &self.ensemble,
            Policy::Fixed(i) => &self.baselines[i],
            Policy::Tbo0 => &self.tbo0,
        }
    }
}

/// Mean service and mean selections per zone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassAverages {
    pub zones: usize,
    pub service: f64,
    pub selections: f64,
}

/// Averages over the zones of `class` (all zones when `class` is `None`).
/// Returns `None` when no zone qualifies.
pub fn averages_by_class(
    outcomes: &[ZoneOutcome],
    class: Option<TrafficClass>,
    policy: Policy,
    accounting: Accounting,
) -> Option<ClassAverages> {
    let (zones, service, selections) = outcomes
        .iter()
        .filter(|o| class.is_none_or(|c| o.traffic_class == c))
        .map(|o| o.policy(policy))
        .fold((0usize, 0i64, 0u64), |(n, s, k), p| {
            (n + 1, s + accounting.service(p), k + p.selections as u64)
        });
    (zones > 0).then(|| ClassAverages {
        zones,
        service: service as f64 / zones as f64,
        selections: selections as f64 / zones as f64,
    })
}

/// For each member, the number of zones where its standalone service is maximal.
/// Tied members all count.
pub fn best_algorithm_zone_counts(outcomes: &[ZoneOutcome], accounting: Accounting) -> [usize; ALGORITHM_COUNT] {
    let mut counts = [0; ALGORITHM_COUNT];
    for o in outcomes {
        let totals: [i64; ALGORITHM_COUNT] = std::array::from_fn(|i| accounting.service(&o.baselines[i]));
        let max = totals.iter().copied().max().unwrap_or(0);
        for (count, total) in counts.iter_mut().zip(totals) {
            if total == max {
                *count += 1;
            }
        }
    }
    counts
}

/// Cumulative passive service of every member within one interval of one zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalRecord {
    pub zone: ZoneKey,
    pub index: u32,
    pub start: i64,
    pub cumulative: [i64; ALGORITHM_COUNT],
    /// Argmax of `cumulative`, lowest index on ties.
    pub winner: usize,
}

/// Number of intervals of length `interval` needed to cover `[run_start, run_end)`.
pub fn interval_count(run_start: i64, run_end: i64, interval: i64) -> u32 {
    ((run_end - run_start).max(0) as u64).div_ceil(interval as u64) as u32
}

/// Rebuilds per-interval cumulatives from a decision log. Every zone present in
/// the log gets a full series, including intervals without arrivals.
/// Output is ordered by zone, then interval.
pub fn interval_winner_series(
    log: &[DecisionLogEntry],
    run_start: i64,
    run_end: i64,
    interval: i64,
) -> Vec<IntervalRecord> {
    assert!(interval > 0);
    let n = interval_count(run_start, run_end, interval);
    let mut zones: Vec<ZoneKey> = log.iter().map(|e| e.zone).collect();
    zones.sort_unstable();
    zones.dedup();
    let mut sums = vec![[0i64; ALGORITHM_COUNT]; zones.len() * n as usize];
    for e in log {
        let z = zones.binary_search(&e.zone).expect("zone collected above");
        let k = ((e.time - run_start) / interval).clamp(0, n as i64 - 1) as usize;
        let slot = &mut sums[z * n as usize + k];
        for (i, total) in slot.iter_mut().enumerate() {
            if e.verdicts & (1 << i) != 0 {
                *total += e.service_time;
            }
        }
    }
    zones
        .iter()
        .enumerate()
        .flat_map(|(z, zone)| {
            let sums = &sums;
            (0..n).map(move |k| {
                let cumulative = sums[z * n as usize + k as usize];
                IntervalRecord {
                    zone: *zone,
                    index: k,
                    start: run_start + k as i64 * interval,
                    cumulative,
                    winner: argmax_lowest(&cumulative),
                }
            })
        })
        .collect()
}

/// Signed relative change of the ensemble against a baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Delta {
    Percent(f64),
    /// Baseline zero, ensemble positive.
    Infinite,
}

impl fmt::Display for Delta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Delta::Percent(p) => write!(f, "{p:.1}"),
            Delta::Infinite => f.write_str("inf"),
        }
    }
}

/// `(ensemble - baseline) / baseline * 100`; equal values give zero.
pub fn percent_change(ensemble: f64, baseline: f64) -> Delta {
    if ensemble == baseline {
        Delta::Percent(0.0)
    } else if baseline == 0.0 {
        Delta::Infinite
    } else {
        Delta::Percent((ensemble - baseline) / baseline * 100.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComparisonRow {
    pub budget: u32,
    pub zones: usize,
    pub ensemble: ClassAverages,
    pub baseline: ClassAverages,
    pub service_delta: Delta,
    pub selections_delta: Delta,
}

/// One row per budget setting: ensemble against `baseline` over the zones of `class`.
/// Settings without zones in the class are skipped.
pub fn comparison_table(
    runs: &[(u32, &[ZoneOutcome])],
    baseline: Policy,
    class: Option<TrafficClass>,
    accounting: Accounting,
) -> Vec<ComparisonRow> {
    runs.iter()
        .filter_map(|&(budget, outcomes)| {
            let ens = averages_by_class(outcomes, class, Policy::Ensemble, accounting)?;
            let base = averages_by_class(outcomes, class, baseline, accounting)?;
            Some(ComparisonRow {
                budget,
                zones: ens.zones,
                ensemble: ens,
                baseline: base,
                service_delta: percent_change(ens.service, base.service),
                selections_delta: percent_change(ens.selections, base.selections),
            })
        })
        .collect()
}

fn policy_columns(prefix: &str) -> String {
    format!("{prefix}_credited,{prefix}_truncated,{prefix}_selections,{prefix}_broker_switches")
}

fn policy_values(p: &PolicyOutcome) -> String {
    format!("{},{},{},{}", p.credited, p.truncated, p.selections, p.broker_switches)
}

/// Header of `zones.csv`.
pub fn zones_csv_header() -> String {
    let mut cols = vec![
        "budget".to_string(),
        "geohash".into(),
        "numeric_id".into(),
        "n_z".into(),
        "class".into(),
        policy_columns("ensemble"),
        "ensemble_active_switches".into(),
        policy_columns("tbo0"),
    ];
    cols.extend(
        AlgorithmSpec::all()
            .iter()
            .map(|a| policy_columns(&format!("tbo{}", a.percentile))),
    );
    cols.join(",")
}

pub fn write_zone_rows<W: Write>(outcomes: &[ZoneOutcome], out: &mut W) -> io::Result<()> {
    for o in outcomes {
        write!(
            out,
            "{},{},{},{},{},{},{},{}",
            o.budget,
            o.zone,
            o.zone.numeric_id(),
            o.vehicle_count,
            o.traffic_class,
            policy_values(&o.ensemble),
            o.active_switches,
            policy_values(&o.tbo0)
        )?;
        for b in &o.baselines {
            write!(out, ",{}", policy_values(b))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Header of `intervals.csv`.
pub fn intervals_csv_header() -> String {
    let mut cols: Vec<String> = ["budget", "geohash", "interval", "start"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(AlgorithmSpec::all().iter().map(|a| format!("tbo{}", a.percentile)));
    cols.extend(["winner".to_string(), "active".to_string()]);
    cols.join(",")
}

/// `active` is the ensemble member that was active during each interval.
pub fn write_interval_rows<W: Write>(
    budget: u32,
    records: &[IntervalRecord],
    active: &[usize],
    out: &mut W,
) -> io::Result<()> {
    for (r, a) in records.iter().zip(active) {
        write!(out, "{},{},{},{}", budget, r.zone, r.index, r.start)?;
        for c in &r.cumulative {
            write!(out, ",{c}")?;
        }
        writeln!(out, ",TBO-{},TBO-{}", PERCENTILES[r.winner], PERCENTILES[*a])?;
    }
    Ok(())
}

pub const SUMMARY_HEADER: &str =
    "kind,budget,class,policy,zones,avg_service_s,avg_service_h,avg_selections,best_zones,service_delta_pct,selections_delta_pct";

fn class_label(class: Option<TrafficClass>) -> &'static str {
    class.map_or("all", TrafficClass::label)
}

/// Writes the summary rows of one budget setting: class averages for every
/// policy, best-member zone counts, and the comparison against `baseline`.
pub fn write_summary_rows<W: Write>(
    budget: u32,
    outcomes: &[ZoneOutcome],
    baseline: Policy,
    accounting: Accounting,
    out: &mut W,
) -> io::Result<()> {
    let classes = [
        Some(TrafficClass::Light),
        Some(TrafficClass::Medium),
        Some(TrafficClass::High),
        None,
    ];
    for class in classes {
        let label = class_label(class);
        for policy in Policy::all() {
            match averages_by_class(outcomes, class, policy, accounting) {
                Some(a) => writeln!(
                    out,
                    "average,{budget},{label},{policy},{},{:.3},{:.4},{:.3},,,",
                    a.zones,
                    a.service,
                    a.service / 3600.0,
                    a.selections
                )?,
                None => writeln!(out, "average,{budget},{label},{policy},0,NA,NA,NA,,,")?,
            }
        }
        let in_class: Vec<ZoneOutcome> = outcomes
            .iter()
            .filter(|o| class.is_none_or(|c| o.traffic_class == c))
            .cloned()
            .collect();
        let counts = best_algorithm_zone_counts(&in_class, accounting);
        for (i, count) in counts.iter().enumerate() {
            writeln!(
                out,
                "best_count,{budget},{label},{},{},,,,{count},,",
                Policy::Fixed(i),
                in_class.len()
            )?;
        }
        for row in comparison_table(&[(budget, outcomes)], baseline, class, accounting) {
            writeln!(
                out,
                "comparison,{budget},{label},{baseline},{},,,,,{},{}",
                row.zones, row.service_delta, row.selections_delta
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::Decision;

    fn zone(i: usize) -> ZoneKey {
        ZoneKey::parse(&format!("s00000{i}")).unwrap()
    }

    fn outcome(i: usize, class: TrafficClass, service: i64, selections: u32) -> ZoneOutcome {
        let p = PolicyOutcome {
            credited: service,
            truncated: service / 2,
            selections,
            broker_switches: 0,
        };
        ZoneOutcome {
            zone: zone(i),
            vehicle_count: 10,
            traffic_class: class,
            budget: 5,
            ensemble: p,
            active_switches: 0,
            baselines: [p; ALGORITHM_COUNT],
            tbo0: p,
        }
    }

    #[test]
    fn class_means() {
        let o = vec![
            outcome(0, TrafficClass::High, 300, 2),
            outcome(1, TrafficClass::High, 500, 3),
            outcome(2, TrafficClass::Light, 50, 1),
        ];
        let a = averages_by_class(&o, Some(TrafficClass::High), Policy::Ensemble, Accounting::Credited).unwrap();
        assert_eq!((a.zones, a.service, a.selections), (2, 400.0, 2.5));
        let l = averages_by_class(&o, Some(TrafficClass::Light), Policy::Fixed(3), Accounting::Truncated).unwrap();
        assert_eq!((l.zones, l.service, l.selections), (1, 25.0, 1.0));
        assert!(averages_by_class(&o, Some(TrafficClass::Medium), Policy::Ensemble, Accounting::Credited).is_none());
    }

    #[test]
    fn best_counts_include_ties() {
        let mut o = outcome(0, TrafficClass::High, 0, 0);
        for (i, b) in o.baselines.iter_mut().enumerate() {
            b.credited = match i {
                0 | 1 => 10,
                2 => 5,
                _ => 0,
            };
        }
        let counts = best_algorithm_zone_counts(&[o.clone()], Accounting::Credited);
        assert_eq!(counts, [1, 1, 0, 0, 0, 0, 0, 0, 0]);
        o.baselines[1].credited = 9;
        let counts = best_algorithm_zone_counts(&[o], Accounting::Credited);
        assert_eq!(counts.iter().sum::<usize>(), 1);
    }

    #[test]
    fn deltas() {
        assert_eq!(percent_change(187.0, 100.0), Delta::Percent(87.0));
        assert_eq!(percent_change(90.0, 100.0), Delta::Percent(-10.0));
        assert_eq!(percent_change(5.0, 5.0), Delta::Percent(0.0));
        assert_eq!(percent_change(0.0, 0.0), Delta::Percent(0.0));
        assert_eq!(percent_change(3.0, 0.0), Delta::Infinite);
        assert_eq!(Delta::Percent(87.04).to_string(), "87.0");
    }

    fn entry(z: usize, time: i64, s: i64, verdicts: u16) -> DecisionLogEntry {
        DecisionLogEntry {
            zone: zone(z),
            time,
            vehicle: 0,
            service_time: s,
            verdicts,
            active: 0,
            decision: Decision::Accept,
            budget_remaining: 0,
        }
    }

    #[test]
    fn winner_series_keeps_empty_intervals() {
        let log = vec![entry(0, 10, 40, 0b1), entry(0, 250, 30, 0b11), entry(0, 260, 50, 0b10)];
        let series = interval_winner_series(&log, 0, 301, 100);
        assert_eq!(series.len(), 4);
        assert_eq!(series[0].winner, 0);
        assert_eq!(series[0].cumulative[0], 40);
        assert_eq!(series[1].cumulative, [0; 9]);
        assert_eq!(series[1].winner, 0);
        assert_eq!(series[2].cumulative[..2], [30, 80]);
        assert_eq!(series[2].winner, 1);
        assert_eq!(series[3].start, 300);
    }

    #[test]
    fn comparison_rows() {
        let mut o = outcome(0, TrafficClass::High, 100, 10);
        o.ensemble.credited = 187;
        o.ensemble.selections = 9;
        let rows = comparison_table(
            &[(17, &[o][..])],
            Policy::Fixed(0),
            Some(TrafficClass::High),
            Accounting::Credited,
        );
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].service_delta, Delta::Percent(87.0));
        assert_eq!(rows[0].selections_delta, Delta::Percent(-10.0));
    }

    #[test]
    fn headers_match_row_widths() {
        let o = outcome(0, TrafficClass::High, 1, 1);
        let mut buf = Vec::new();
        write_zone_rows(&[o], &mut buf).unwrap();
        let row = String::from_utf8(buf).unwrap();
        assert_eq!(row.trim().split(',').count(), zones_csv_header().split(',').count());
        let mut buf = Vec::new();
        write_summary_rows(
            5,
            &[outcome(0, TrafficClass::High, 1, 1)],
            Policy::Fixed(0),
            Accounting::Credited,
            &mut buf,
        )
        .unwrap();
        let cols = SUMMARY_HEADER.split(',').count();
        for line in String::from_utf8(buf).unwrap().lines() {
            assert_eq!(line.split(',').count(), cols, "{line}");
        }
    }
}
