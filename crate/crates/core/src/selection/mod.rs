//! Broker selection: threshold-based online (TBO) rules, percentile thresholds,
//! and the ensemble that switches between nine TBO rules by recent service time.

mod commit;
mod ensemble;
mod threshold;

pub use commit::{Broker, BrokerAssignment, CommitPath, Decision, EndReason, PolicyOutcome, RejectReason};
pub use ensemble::{ensemble_init, ArrivalOutcome, EnsembleState, IntervalSnapshot};
pub use threshold::{build_threshold_table, nearest_rank_percentile, PercentileError, ThresholdTable, ZoneThresholds};

use std::fmt;

use crate::events::ArrivalEvent;
use crate::geozone::ZoneKey;

/// Number of TBO rules in the ensemble.
pub const ALGORITHM_COUNT: usize = 9;

/// Threshold percentiles of the ensemble members, by index.
pub const PERCENTILES: [u8; ALGORITHM_COUNT] = [10, 20, 30, 40, 50, 60, 70, 80, 90];

/// One ensemble member: TBO with its threshold at the given percentile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AlgorithmSpec {
    pub index: usize,
    pub percentile: u8,
}

impl AlgorithmSpec {
    pub fn all() -> [AlgorithmSpec; ALGORITHM_COUNT] {
        std::array::from_fn(|index| AlgorithmSpec {
            index,
            percentile: PERCENTILES[index],
        })
    }

    pub fn label(&self) -> String {
        format!("TBO-{}", self.percentile)
    }
}

impl fmt::Display for AlgorithmSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TBO-{}", self.percentile)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    Reject,
}

/// Accept iff the estimated service time strictly exceeds the threshold.
pub fn tbo_decide(service_time: i64, threshold: i64) -> Verdict {
    if service_time > threshold {
        Verdict::Accept
    } else {
        Verdict::Reject
    }
}

/// Bit `i` set when ensemble member `i` accepts `service_time`.
pub fn verdict_mask(service_time: i64, thresholds: &[i64; ALGORITHM_COUNT]) -> u16 {
    thresholds
        .iter()
        .enumerate()
        .filter(|(_, &tau)| tbo_decide(service_time, tau) == Verdict::Accept)
        .fold(0u16, |mask, (i, _)| mask | (1 << i))
}

/// Index of the maximum; ties go to the lowest index.
pub fn argmax_lowest(values: &[i64; ALGORITHM_COUNT]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// A single TBO rule with a fixed threshold running on its own committed path.
#[derive(Debug, Clone)]
pub struct FixedSelector {
    threshold: i64,
    commit: CommitPath,
}

impl FixedSelector {
    pub fn new(zone: ZoneKey, threshold: i64, budget: u32) -> Self {
        FixedSelector {
            threshold,
            commit: CommitPath::new(zone, budget),
        }
    }

    pub fn threshold(&self) -> i64 {
        self.threshold
    }

    pub fn on_arrival(&mut self, event: &ArrivalEvent) -> (Decision, Option<BrokerAssignment>) {
        let wants = tbo_decide(event.service_time, self.threshold) == Verdict::Accept;
        self.commit.commit(event, wants)
    }

    pub fn finish(&mut self, run_end: i64) -> Option<BrokerAssignment> {
        self.commit.finish(run_end)
    }

    pub fn committed(&self) -> &CommitPath {
        &self.commit
    }

    pub fn outcome(&self) -> PolicyOutcome {
        self.commit.outcome()
    }
}
