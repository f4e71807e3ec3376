use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::commit::{BrokerAssignment, CommitPath, Decision, PolicyOutcome};
use super::{argmax_lowest, verdict_mask, ALGORITHM_COUNT};
use crate::events::ArrivalEvent;
use crate::geozone::ZoneKey;
use crate::seed::substream_seed;

/// Cumulative service of every member over one interval, as seen at the
/// boundary that closed it (or at the end of the run for the last interval).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IntervalSnapshot {
    pub index: u32,
    pub start: i64,
    pub cumulative: [i64; ALGORITHM_COUNT],
    /// Member that was active during the interval.
    pub active: usize,
    /// Member selected at the closing boundary; `None` for the final, unclosed interval.
    pub next_active: Option<usize>,
}

/// Result of feeding one arrival to the ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrivalOutcome {
    /// Bit `i` set when member `i` accepted the service time.
    pub verdicts: u16,
    pub active: usize,
    pub decision: Decision,
    pub closed: Option<BrokerAssignment>,
    pub budget_remaining: u32,
}

/// Per-zone ensemble state: nine TBO members in passive bookkeeping, one of
/// them active and committing decisions.
#[derive(Debug, Clone)]
pub struct EnsembleState {
    zone: ZoneKey,
    active: usize,
    cumulative: [i64; ALGORITHM_COUNT],
    interval: i64,
    interval_start: i64,
    next_boundary: i64,
    interval_index: u32,
    active_switches: u32,
    commit: CommitPath,
    history: Vec<IntervalSnapshot>,
}

/// Initial active member drawn uniformly from a stream keyed by `(seed, zone)`.
pub fn initial_active(seed: u64, zone: &ZoneKey) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(seed, "ensemble-init", zone.numeric_id()));
    rng.random_range(0..ALGORITHM_COUNT)
}

/// Starts a zone's ensemble at `start_time` with boundaries every `interval` seconds.
pub fn ensemble_init(seed: u64, zone: ZoneKey, budget: u32, interval: i64, start_time: i64) -> EnsembleState {
    EnsembleState::with_active(zone, initial_active(seed, &zone), budget, interval, start_time)
}

impl EnsembleState {
    /// Starts with a chosen active member instead of a random draw.
    pub fn with_active(zone: ZoneKey, active: usize, budget: u32, interval: i64, start_time: i64) -> Self {
        assert!(interval > 0, "boundary interval must be positive");
        assert!(active < ALGORITHM_COUNT);
        EnsembleState {
            zone,
            active,
            cumulative: [0; ALGORITHM_COUNT],
            interval,
            interval_start: start_time,
            next_boundary: start_time + interval,
            interval_index: 0,
            active_switches: 0,
            commit: CommitPath::new(zone, budget),
            history: Vec::new(),
        }
    }

    pub fn zone(&self) -> ZoneKey {
        self.zone
    }

    pub fn active(&self) -> usize {
        self.active
    }

    pub fn cumulative(&self) -> &[i64; ALGORITHM_COUNT] {
        &self.cumulative
    }

    pub fn next_boundary(&self) -> i64 {
        self.next_boundary
    }

    pub fn budget_remaining(&self) -> u32 {
        self.commit.budget_remaining()
    }

    /// Number of boundaries at which the active member changed.
    pub fn active_switches(&self) -> u32 {
        self.active_switches
    }

    pub fn committed(&self) -> &CommitPath {
        &self.commit
    }

    pub fn outcome(&self) -> PolicyOutcome {
        self.commit.outcome()
    }

    /// Closed intervals so far, plus the final one after [`EnsembleState::finish`].
    pub fn history(&self) -> &[IntervalSnapshot] {
        &self.history
    }

    /// Processes every boundary at or before `now`. At each one the member with
    /// the largest cumulative becomes active (the current one stays on ties,
    /// otherwise the lowest index wins) and all cumulatives reset to zero.
    pub fn on_boundary(&mut self, now: i64) {
        while now >= self.next_boundary {
            let max = *self.cumulative.iter().max().expect("nine members");
            let best = if self.cumulative[self.active] == max {
                self.active
            } else {
                argmax_lowest(&self.cumulative)
            };
            self.history.push(IntervalSnapshot {
                index: self.interval_index,
                start: self.interval_start,
                cumulative: self.cumulative,
                active: self.active,
                next_active: Some(best),
            });
            if best != self.active {
                self.active = best;
                self.active_switches += 1;
            }
            self.cumulative = [0; ALGORITHM_COUNT];
            self.interval_index += 1;
            self.interval_start = self.next_boundary;
            self.next_boundary += self.interval;
        }
    }

    /// Handles a vehicle entering the zone. Pending boundaries are processed first.
    ///
    /// Every member that accepts the service time adds it to its cumulative,
    /// regardless of budget or earlier rejections. Only the active member's
    /// verdict is committed, and only if the vehicle was never rejected here
    /// and budget remains.
    pub fn on_arrival(&mut self, event: &ArrivalEvent, thresholds: &[i64; ALGORITHM_COUNT]) -> ArrivalOutcome {
        debug_assert_eq!(event.zone, self.zone);
        self.on_boundary(event.entry_time);
        let verdicts = verdict_mask(event.service_time, thresholds);
        for (i, total) in self.cumulative.iter_mut().enumerate() {
            if verdicts & (1 << i) != 0 {
                *total += event.service_time;
            }
        }
        let active = self.active;
        let (decision, closed) = self.commit.commit(event, verdicts & (1 << active) != 0);
        ArrivalOutcome {
            verdicts,
            active,
            decision,
            closed,
            budget_remaining: self.commit.budget_remaining(),
        }
    }

    /// Processes boundaries strictly before `run_end`, records the last interval
    /// and closes the sitting broker.
    pub fn finish(&mut self, run_end: i64) -> Option<BrokerAssignment> {
        if run_end > self.next_boundary {
            self.on_boundary(run_end - 1);
        }
        self.history.push(IntervalSnapshot {
            index: self.interval_index,
            start: self.interval_start,
            cumulative: self.cumulative,
            active: self.active,
            next_active: None,
        });
        self.commit.finish(run_end)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::selection::{Decision, RejectReason};

    fn zone() -> ZoneKey {
        ZoneKey::parse("wtw3sjq").unwrap()
    }

    fn ev(vehicle: u32, entry: i64, s: i64) -> ArrivalEvent {
        ArrivalEvent {
            vehicle,
            zone: zone(),
            entry_time: entry,
            exit_time: entry + s,
            service_time: s,
        }
    }

    const TAU: [i64; 9] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

    #[test]
    fn init_is_deterministic_per_zone() {
        let a = ensemble_init(42, zone(), 5, 100, 0);
        let b = ensemble_init(42, zone(), 5, 100, 0);
        assert_eq!(a.active(), b.active());
        assert!(a.active() < 9);
        assert_eq!(a.cumulative(), &[0; 9]);
        assert_eq!(a.next_boundary(), 100);
        assert!(a.committed().broker().is_none());
    }

    #[test]
    fn init_draws_cover_all_members() {
        let mut seen = [false; 9];
        for seed in 0..200 {
            seen[ensemble_init(seed, zone(), 1, 10, 0).active()] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn above_all_thresholds() {
        let mut st = EnsembleState::with_active(zone(), 4, 3, 1000, 0);
        let out = st.on_arrival(&ev(0, 1, 100), &TAU);
        assert_eq!(out.verdicts, 0x1ff);
        assert_eq!(st.cumulative(), &[100; 9]);
        assert_eq!(out.decision, Decision::Accept);
        assert_eq!(st.budget_remaining(), 2);
    }

    #[test]
    fn below_all_thresholds() {
        let mut st = EnsembleState::with_active(zone(), 0, 3, 1000, 0);
        let out = st.on_arrival(&ev(7, 1, 5), &TAU);
        assert_eq!(out.verdicts, 0);
        assert_eq!(st.cumulative(), &[0; 9]);
        assert_eq!(out.decision, Decision::Reject(RejectReason::Threshold));
        assert!(st.committed().is_rejected(7));
    }

    #[test]
    fn passive_accepts_but_active_rejects() {
        let mut st = EnsembleState::with_active(zone(), 5, 3, 1000, 0);
        let out = st.on_arrival(&ev(1, 1, 35), &TAU);
        assert_eq!(st.cumulative(), &[35, 35, 35, 0, 0, 0, 0, 0, 0]);
        assert_eq!(out.decision, Decision::Reject(RejectReason::Threshold));
    }

    #[test]
    fn boundary_switches_to_argmax_and_resets() {
        let mut st = EnsembleState::with_active(zone(), 0, 3, 1000, 0);
        st.cumulative = [300, 450, 0, 0, 0, 0, 0, 0, 0];
        st.on_boundary(1000);
        assert_eq!(st.active(), 1);
        assert_eq!(st.cumulative(), &[0; 9]);
        assert_eq!(st.next_boundary(), 2000);
        assert_eq!(st.active_switches(), 1);
    }

    #[test]
    fn boundary_keeps_unique_or_tied_active() {
        let mut st = EnsembleState::with_active(zone(), 2, 3, 1000, 0);
        st.cumulative = [0, 0, 9, 0, 0, 0, 0, 0, 0];
        st.on_boundary(1000);
        assert_eq!(st.active(), 2);
        st.cumulative = [5, 0, 5, 0, 0, 0, 0, 0, 0];
        st.on_boundary(2000);
        assert_eq!(st.active(), 2);
        st.cumulative = [0, 5, 0, 5, 0, 0, 0, 0, 0];
        st.on_boundary(3000);
        assert_eq!(st.active(), 1, "lowest tied index when active is not tied");
        assert_eq!(st.active_switches(), 1);
    }

    #[test]
    fn several_elapsed_boundaries_are_processed() {
        let mut st = EnsembleState::with_active(zone(), 3, 3, 100, 0);
        st.on_arrival(&ev(0, 10, 15), &TAU);
        st.on_boundary(350);
        assert_eq!(st.next_boundary(), 400);
        assert_eq!(st.history().len(), 3);
        assert_eq!(st.active(), 0);
        assert_eq!(st.active_switches(), 1);
    }

    #[test]
    fn finish_records_trailing_interval() {
        let mut st = EnsembleState::with_active(zone(), 0, 3, 100, 0);
        st.on_arrival(&ev(0, 250, 15), &TAU);
        st.finish(300);
        let h = st.history();
        assert_eq!(h.len(), 3);
        assert_eq!(h[2].cumulative[0], 15);
        assert_eq!(h[2].next_active, None);
        // a boundary exactly at the run end opens no new interval
        let mut st = EnsembleState::with_active(zone(), 0, 3, 100, 0);
        st.finish(300);
        assert_eq!(st.history().len(), 3);
    }
}
