//! Zone arrivals: dwell extraction from vehicle tracks and per-zone arrival streams.

use std::collections::HashMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::geozone::{ZoneActivity, ZoneKey};
use crate::seed::substream_seed;
use crate::trace::{TracePoint, TraceSet};

/// Default silence after which a vehicle counts as departed, seconds.
pub const DEFAULT_GAP_TIMEOUT: i64 = 1_800;

/// Index of a vehicle in its [`TraceSet`]. Index order is vehicle-id order.
pub type VehicleIndex = u32;

/// Continuous stay of one vehicle in one zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dwell {
    pub zone: ZoneKey,
    pub entry: i64,
    /// Timestamp of the last record observed in the zone.
    pub exit: i64,
}

/// Splits one vehicle's time-sorted points into dwells. A dwell ends when the
/// next point falls in another zone, when the gap to it exceeds `gap_timeout`,
/// or at the end of the track.
pub fn detect_zone_changes(points: &[TracePoint], gap_timeout: i64) -> Vec<Dwell> {
    let mut dwells = Vec::new();
    let mut current: Option<Dwell> = None;
    for p in points {
        let zone = ZoneKey::containing(p.latitude, p.longitude).expect("trace points are range-checked");
        current = match current {
            Some(mut d) if d.zone == zone && p.timestamp - d.exit <= gap_timeout => {
                d.exit = p.timestamp;
                Some(d)
            }
            previous => {
                dwells.extend(previous);
                Some(Dwell {
                    zone,
                    entry: p.timestamp,
                    exit: p.timestamp,
                })
            }
        };
    }
    dwells.extend(current);
    dwells
}

/// Dwells of every vehicle, indexed like `trace.tracks()`.
pub fn extract_dwells(trace: &TraceSet, gap_timeout: i64) -> Vec<Vec<Dwell>> {
    trace
        .tracks()
        .par_iter()
        .map(|t| detect_zone_changes(&t.points, gap_timeout))
        .collect()
}

/// Number of distinct vehicles with at least one dwell in each zone, ordered by zone.
pub fn zone_activity(dwells: &[Vec<Dwell>]) -> Vec<ZoneActivity> {
    let mut counts: HashMap<ZoneKey, u64> = HashMap::new();
    let mut seen: Vec<ZoneKey> = Vec::new();
    for vehicle in dwells {
        seen.clear();
        seen.extend(vehicle.iter().map(|d| d.zone));
        seen.sort_unstable();
        seen.dedup();
        for zone in &seen {
            *counts.entry(*zone).or_default() += 1;
        }
    }
    let mut out: Vec<ZoneActivity> = counts
        .into_iter()
        .map(|(zone, vehicle_count)| ZoneActivity { zone, vehicle_count })
        .collect();
    out.sort_by_key(|z| z.zone);
    out
}

/// How the estimated service time of an arrival is derived from its dwell.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ServiceEstimator {
    /// The actual dwell, read ahead from the trace.
    #[default]
    Clairvoyant,
    /// Actual dwell times a factor drawn uniformly from `[1 - noise, 1 + noise]`.
    Noisy { noise: f64, seed: u64 },
}

/// A vehicle entering a zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalEvent {
    pub vehicle: VehicleIndex,
    pub zone: ZoneKey,
    pub entry_time: i64,
    /// Observed departure.
    pub exit_time: i64,
    /// Estimated service time; equals `exit_time - entry_time` under the clairvoyant estimator.
    pub service_time: i64,
}

impl ArrivalEvent {
    pub fn dwell(&self) -> i64 {
        self.exit_time - self.entry_time
    }
}

/// Per-zone, time-ordered arrivals. Ties on entry time are ordered by vehicle id.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrivalStreams {
    vehicle_ids: Vec<String>,
    zones: Vec<(ZoneKey, Vec<ArrivalEvent>)>,
}

impl ArrivalStreams {
    pub fn zones(&self) -> &[(ZoneKey, Vec<ArrivalEvent>)] {
        &self.zones
    }

    pub fn get(&self, zone: &ZoneKey) -> Option<&[ArrivalEvent]> {
        self.zones
            .binary_search_by(|(z, _)| z.cmp(zone))
            .ok()
            .map(|i| self.zones[i].1.as_slice())
    }

    pub fn vehicle_id(&self, vehicle: VehicleIndex) -> &str {
        &self.vehicle_ids[vehicle as usize]
    }

    pub fn vehicle_ids(&self) -> &[String] {
        &self.vehicle_ids
    }

    pub fn event_count(&self) -> usize {
        self.zones.iter().map(|(_, e)| e.len()).sum()
    }

    /// `zone,vehicle_id,entry,exit,s` rows, zones in geohash order.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = io::BufWriter::new(out);
        writeln!(out, "zone,vehicle_id,entry,exit,s")?;
        for (zone, events) in &self.zones {
            for e in events {
                writeln!(
                    out,
                    "{zone},{},{},{},{}",
                    self.vehicle_id(e.vehicle),
                    e.entry_time,
                    e.exit_time,
                    e.service_time
                )?;
            }
        }
        out.flush()
    }
}

fn estimate(estimator: ServiceEstimator, rng: &mut Option<ChaCha8Rng>, dwell: i64) -> i64 {
    match (estimator, rng) {
        (ServiceEstimator::Noisy { noise, .. }, Some(rng)) if noise > 0.0 => {
            let factor = rng.random_range((1.0 - noise).max(0.0)..=1.0 + noise);
            (dwell as f64 * factor).round().max(0.0) as i64
        }
        _ => dwell,
    }
}

/// Turns dwells into arrival streams for the given zones (sorted or not).
/// Dwells in zones outside `zones` are dropped.
pub fn arrivals_from_dwells(
    trace: &TraceSet,
    dwells: &[Vec<Dwell>],
    zones: &[ZoneKey],
    estimator: ServiceEstimator,
) -> ArrivalStreams {
    let mut keep: Vec<ZoneKey> = zones.to_vec();
    keep.sort_unstable();
    keep.dedup();
    let slot = |z: &ZoneKey| keep.binary_search(z).ok();

    let mut buckets: Vec<Vec<ArrivalEvent>> = vec![Vec::new(); keep.len()];
    for (vehicle, vehicle_dwells) in dwells.iter().enumerate() {
        let mut rng = match estimator {
            ServiceEstimator::Noisy { seed, .. } => Some(ChaCha8Rng::seed_from_u64(substream_seed(
                seed,
                "estimator",
                vehicle as u64,
            ))),
            ServiceEstimator::Clairvoyant => None,
        };
        for d in vehicle_dwells {
            let service_time = estimate(estimator, &mut rng, d.exit - d.entry);
            if let Some(i) = slot(&d.zone) {
                buckets[i].push(ArrivalEvent {
                    vehicle: vehicle as VehicleIndex,
                    zone: d.zone,
                    entry_time: d.entry,
                    exit_time: d.exit,
                    service_time,
                });
            }
        }
    }
    buckets
        .par_iter_mut()
        .for_each(|events| events.sort_by_key(|e| (e.entry_time, e.vehicle)));
    ArrivalStreams {
        vehicle_ids: trace.tracks().iter().map(|t| t.vehicle_id.clone()).collect(),
        zones: keep.into_iter().zip(buckets).collect(),
    }
}

/// Extracts dwells from `trace` and builds arrival streams for `zones`.
pub fn build_arrival_streams(
    trace: &TraceSet,
    zones: &[ZoneKey],
    gap_timeout: i64,
    estimator: ServiceEstimator,
) -> ArrivalStreams {
    let dwells = extract_dwells(trace, gap_timeout);
    arrivals_from_dwells(trace, &dwells, zones, estimator)
}
