use std::collections::HashSet;

use lcbsim::events::{build_arrival_streams, extract_dwells, ArrivalEvent, ServiceEstimator, DEFAULT_GAP_TIMEOUT};
use lcbsim::geozone::{
    classify_traffic, classify_zones, geohash_cell_bounds, geohash_encode, TrafficClass, ZoneActivity, ZoneKey,
};
use lcbsim::metrics::{averages_by_class, interval_winner_series, Accounting, Policy, ZoneOutcome};
use lcbsim::selection::{
    nearest_rank_percentile, verdict_mask, Decision, EnsembleState, FixedSelector, PolicyOutcome, ZoneThresholds,
    ALGORITHM_COUNT, PERCENTILES,
};
use lcbsim::simulate::{simulate_zone, SimulationParams};
use lcbsim::synthetic::{generate_synthetic, SyntheticTraceSpec};
use lcbsim::trace::{parse_trace_text, replicate_trace, TraceRecord, TraceSet, SECONDS_PER_DAY};
use proptest::prelude::*;

const ORIGIN: i64 = 1_171_929_600;

fn zone() -> ZoneKey {
    ZoneKey::parse("wtw3sjq").unwrap()
}

fn point() -> impl Strategy<Value = (f64, f64)> {
    (-90.0f64..=90.0, -180.0f64..=180.0)
}

/// Time-ordered arrivals in one zone: (vehicle, gap to previous entry, s).
fn arrivals(max_vehicles: u32, len: usize) -> impl Strategy<Value = Vec<ArrivalEvent>> {
    prop::collection::vec((0..max_vehicles, 0i64..4_000, 0i64..6_000), 1..len).prop_map(|raw| {
        let mut t = 0;
        raw.into_iter()
            .map(|(vehicle, gap, s)| {
                t += gap;
                ArrivalEvent {
                    vehicle,
                    zone: zone(),
                    entry_time: t,
                    exit_time: t + s,
                    service_time: s,
                }
            })
            .collect()
    })
}

fn thresholds_of(events: &[ArrivalEvent]) -> ZoneThresholds {
    ZoneThresholds::from_service_times(events.iter().map(|e| e.service_time).collect()).unwrap()
}

fn records_strategy() -> impl Strategy<Value = Vec<TraceRecord>> {
    prop::collection::vec(
        (
            0u8..6,
            0i64..SECONDS_PER_DAY,
            31.0f64..31.5,
            121.0f64..121.5,
            prop::option::of(0.0f32..40.0),
            prop::option::of(0.0f32..359.0),
        ),
        1..80,
    )
    .prop_map(|raw| {
        raw.into_iter()
            .map(|(v, t, lat, lon, speed, heading)| TraceRecord {
                vehicle_id: format!("taxi{v}"),
                timestamp: ORIGIN + t,
                latitude: lat,
                longitude: lon,
                speed,
                heading,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn geohash_round_trip_contains_point((lat, lon) in point()) {
        let hash = geohash_encode(lat, lon, 7).unwrap();
        let bounds = geohash_cell_bounds(&hash).unwrap();
        prop_assert!(bounds.contains(lat, lon), "{hash} {bounds:?} misses ({lat}, {lon})");
    }

    #[test]
    fn geohash_is_idempotent_on_cells((lat, lon) in point(), u in 0.0f64..1.0, v in 0.0f64..1.0) {
        let hash = geohash_encode(lat, lon, 7).unwrap();
        let b = geohash_cell_bounds(&hash).unwrap();
        let inner_lat = b.latitude.start + u * b.height_deg();
        let inner_lon = b.longitude.start + v * b.width_deg();
        prop_assume!(inner_lat < b.latitude.end && inner_lon < b.longitude.end);
        prop_assert_eq!(geohash_encode(inner_lat, inner_lon, 7).unwrap(), hash);
    }

    #[test]
    fn geohash_prefix_property((lat, lon) in point()) {
        let long = geohash_encode(lat, lon, 7).unwrap();
        let short = geohash_encode(lat, lon, 6).unwrap();
        prop_assert!(long.starts_with(&short));
    }

    #[test]
    fn classification_partitions_active_zones(counts in prop::collection::vec(0u64..400, 1..120)) {
        let activity: Vec<ZoneActivity> = counts
            .iter()
            .enumerate()
            .map(|(i, &n)| ZoneActivity {
                zone: ZoneKey::containing(10.0 + i as f64 * 0.01, 20.0).unwrap(),
                vehicle_count: n,
            })
            .collect();
        let c = classify_zones(&activity);
        let active = counts.iter().filter(|&&n| n > 0).count();
        prop_assert_eq!(c.zones.len(), active);
        let total: usize = TrafficClass::ALL.iter().map(|&k| c.count(k)).sum();
        prop_assert_eq!(total, active);
        for z in &c.zones {
            prop_assert_eq!(z.traffic_class, classify_traffic(z.vehicle_count, c.mean, c.std));
        }
    }

    #[test]
    fn classification_is_monotone(a in 0u64..1_000, b in 0u64..1_000, mean in 0.0f64..500.0, std in 0.0f64..500.0) {
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(classify_traffic(lo, mean, std) <= classify_traffic(hi, mean, std));
    }

    #[test]
    fn replication_multiplies_and_preserves_order(records in records_strategy(), k in 1u32..6) {
        let base = TraceSet::with_window(records, ORIGIN, 1).unwrap();
        let rep = replicate_trace(&base, k).unwrap();
        prop_assert_eq!(rep.record_count(), k as usize * base.record_count());
        prop_assert_eq!(rep.vehicle_count(), base.vehicle_count());
        let day0: Vec<TraceRecord> = base.records().collect();
        for (track, rep_track) in base.tracks().iter().zip(rep.tracks()) {
            let n = track.points.len();
            for day in 0..k as usize {
                let copy = &rep_track.points[day * n..(day + 1) * n];
                for (p, q) in track.points.iter().zip(copy) {
                    prop_assert_eq!(q.timestamp, p.timestamp + day as i64 * SECONDS_PER_DAY);
                }
            }
        }
        prop_assert_eq!(day0.len(), base.record_count());
    }

    #[test]
    fn load_of_dump_reproduces_trace(records in records_strategy()) {
        let trace = TraceSet::from_records(records).unwrap();
        let mut dump = Vec::new();
        trace.dump_csv(&mut dump).unwrap();
        let loaded = parse_trace_text(std::str::from_utf8(&dump).unwrap()).unwrap();
        prop_assert_eq!(loaded.skipped, 0);
        prop_assert_eq!(&loaded.trace, &trace);
    }

    #[test]
    fn nearest_rank_is_monotone_and_a_member(mut values in prop::collection::vec(0i64..10_000, 1..150)) {
        values.sort_unstable();
        let mut previous = i64::MIN;
        for x in 1..=100 {
            let tau = nearest_rank_percentile(&values, x).unwrap();
            prop_assert!(tau >= previous);
            prop_assert!(values.binary_search(&tau).is_ok());
            previous = tau;
        }
        let t = ZoneThresholds::from_service_times(values.clone()).unwrap();
        prop_assert!(t.by_percentile.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(t.minimum, values[0]);
    }

    #[test]
    fn accepting_members_form_a_prefix(s in 0i64..10_000, mut taus in prop::array::uniform9(0i64..10_000)) {
        taus.sort_unstable();
        let mask = verdict_mask(s, &taus);
        let k = mask.count_ones();
        prop_assert_eq!(mask, ((1u32 << k) - 1) as u16);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    /// Budget safety, permanence, credited conservation, the reset law and
    /// broker-switch counting, checked step by step.
    #[test]
    fn ensemble_committed_path_invariants(
        events in arrivals(12, 120),
        budget in 0u32..20,
        interval in 1i64..20_000,
        start in 0usize..ALGORITHM_COUNT,
    ) {
        let t = thresholds_of(&events);
        let mut state = EnsembleState::with_active(zone(), start, budget, interval, 0);
        let mut rejected = HashSet::new();
        let mut credited = 0;
        let mut accepts = 0;
        let mut replacements = 0;
        for e in &events {
            let closed_before = state.history().len();
            state.on_boundary(e.entry_time);
            if state.history().len() > closed_before {
                prop_assert_eq!(*state.cumulative(), [0; ALGORITHM_COUNT]);
            }
            let live = state.committed().broker().is_some_and(|b| b.exit_time >= e.entry_time);
            let before = state.budget_remaining();
            let out = state.on_arrival(e, &t.by_percentile);
            match out.decision {
                Decision::Accept => {
                    prop_assert!(!rejected.contains(&e.vehicle));
                    prop_assert_eq!(out.budget_remaining + 1, before);
                    credited += e.service_time;
                    accepts += 1;
                    replacements += live as u32;
                }
                Decision::Reject(_) => {
                    prop_assert_eq!(out.budget_remaining, before);
                    rejected.insert(e.vehicle);
                }
            }
        }
        let outcome = state.outcome();
        prop_assert!(outcome.selections <= budget);
        prop_assert_eq!(outcome.selections, accepts);
        prop_assert_eq!(outcome.credited, credited);
        prop_assert_eq!(outcome.broker_switches, replacements);
    }

    /// Passive cumulatives summed over intervals equal each member's standalone
    /// credited total when budget and permanence never bind.
    #[test]
    fn interval_cumulatives_decompose_standalone_totals(
        raw in arrivals(1, 150),
        interval in 500i64..30_000,
        start in 0usize..ALGORITHM_COUNT,
    ) {
        // every arrival gets its own vehicle so the rejected set never binds
        let events: Vec<ArrivalEvent> = raw
            .into_iter()
            .enumerate()
            .map(|(i, e)| ArrivalEvent { vehicle: i as u32, ..e })
            .collect();
        let t = thresholds_of(&events);
        let budget = events.len() as u32;
        let mut state = EnsembleState::with_active(zone(), start, budget, interval, 0);
        let mut fixed: Vec<FixedSelector> =
            t.by_percentile.iter().map(|&tau| FixedSelector::new(zone(), tau, budget)).collect();
        for e in &events {
            state.on_arrival(e, &t.by_percentile);
            for f in fixed.iter_mut() {
                f.on_arrival(e);
            }
        }
        let run_end = events.last().unwrap().entry_time + 1;
        state.finish(run_end);
        for (i, f) in fixed.iter().enumerate() {
            let total: i64 = state.history().iter().map(|h| h.cumulative[i]).sum();
            prop_assert_eq!(total, f.outcome().credited, "member TBO-{}", PERCENTILES[i]);
        }
    }

    /// The series rebuilt from the decision log matches the ensemble's own
    /// interval history and boundary choices.
    #[test]
    fn interval_winners_match_boundary_choices(
        events in arrivals(30, 150),
        budget in 0u32..40,
        interval in 500i64..30_000,
        seed in any::<u64>(),
    ) {
        let t = thresholds_of(&events);
        let run_end = events.last().unwrap().entry_time + 1 + interval / 3;
        let params = SimulationParams {
            seed,
            budget,
            interval,
            run_start: 0,
            run_end,
            keep_log: true,
            keep_assignments: true,
        };
        let run = simulate_zone(zone(), &events, &t, &params);
        let series = interval_winner_series(&run.log, 0, run_end, interval);
        prop_assert_eq!(series.len(), run.history.len());
        for (rec, snap) in series.iter().zip(&run.history) {
            prop_assert_eq!(rec.cumulative, snap.cumulative);
            prop_assert_eq!(rec.start, snap.start);
            if let Some(next) = snap.next_active {
                let max = *rec.cumulative.iter().max().unwrap();
                let expected = if rec.cumulative[snap.active] == max { snap.active } else { rec.winner };
                prop_assert_eq!(next, expected);
            }
        }
        let switches = run.history.iter().filter(|h| h.next_active.is_some_and(|n| n != h.active)).count();
        prop_assert_eq!(switches as u32, run.active_switches);
        let credited: i64 = run.assignments.iter().map(|a| a.credited_service).sum();
        prop_assert_eq!(credited, run.ensemble.credited);
    }

    #[test]
    fn class_averages_conserve_totals(
        rows in prop::collection::vec((0u8..3, 0i64..100_000, 0u32..50), 1..60),
    ) {
        let outcomes: Vec<ZoneOutcome> = rows
            .iter()
            .enumerate()
            .map(|(i, &(class, credited, selections))| {
                let p = PolicyOutcome { credited, truncated: credited / 2, selections, broker_switches: 0 };
                ZoneOutcome {
                    zone: ZoneKey::containing(10.0 + i as f64 * 0.01, 20.0).unwrap(),
                    vehicle_count: 1,
                    traffic_class: TrafficClass::ALL[class as usize],
                    budget: 10,
                    ensemble: p,
                    active_switches: 0,
                    baselines: [p; ALGORITHM_COUNT],
                    tbo0: p,
                }
            })
            .collect();
        for accounting in [Accounting::Credited, Accounting::Truncated] {
            let by_class: f64 = TrafficClass::ALL
                .iter()
                .filter_map(|&c| averages_by_class(&outcomes, Some(c), Policy::Ensemble, accounting))
                .map(|a| a.zones as f64 * a.service)
                .sum();
            let all: i64 = outcomes.iter().map(|o| accounting.service(&o.ensemble)).sum();
            prop_assert!((by_class - all as f64).abs() <= 1e-6 * (all as f64).max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn dwells_are_conserved_and_ordered(seed in any::<u64>()) {
        let spec = SyntheticTraceSpec { vehicles: 15, seed, ..SyntheticTraceSpec::preset("small").unwrap() };
        let trace = generate_synthetic(&spec).unwrap();
        let dwells = extract_dwells(&trace, DEFAULT_GAP_TIMEOUT);
        for vehicle in &dwells {
            for pair in vehicle.windows(2) {
                prop_assert!(pair[0].entry <= pair[0].exit);
                prop_assert!(pair[0].exit < pair[1].entry);
            }
        }
        let mut zones: Vec<ZoneKey> = dwells.iter().flatten().map(|d| d.zone).collect();
        zones.sort_unstable();
        zones.dedup();
        let streams = build_arrival_streams(&trace, &zones, DEFAULT_GAP_TIMEOUT, ServiceEstimator::Clairvoyant);
        let total: usize = dwells.iter().map(Vec::len).sum();
        prop_assert_eq!(streams.event_count(), total);
        for (_, events) in streams.zones() {
            prop_assert!(events.iter().all(|e| e.service_time >= 0 && e.service_time == e.dwell()));
            prop_assert!(events.windows(2).all(|w| (w[0].entry_time, w[0].vehicle) <= (w[1].entry_time, w[1].vehicle)));
        }
    }
}
