use std::collections::HashSet;

use crate::events::{ArrivalEvent, VehicleIndex};
use crate::geozone::ZoneKey;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RejectReason {
    /// The deciding rule rejected the service time.
    Threshold,
    /// The vehicle was rejected earlier in this zone.
    PreviouslyRejected,
    BudgetExhausted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Accept,
    Reject(RejectReason),
}

impl Decision {
    pub fn is_accept(self) -> bool {
        self == Decision::Accept
    }

    pub fn label(self) -> &'static str {
        match self {
            Decision::Accept => "accept",
            Decision::Reject(RejectReason::Threshold) => "reject",
            Decision::Reject(RejectReason::PreviouslyRejected) => "reject_previously_rejected",
            Decision::Reject(RejectReason::BudgetExhausted) => "reject_budget",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EndReason {
    Replacement,
    Departure,
    RunEnd,
}

/// The vehicle currently serving as broker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Broker {
    pub vehicle: VehicleIndex,
    pub accept_time: i64,
    pub service_time: i64,
    pub exit_time: i64,
}

/// A finished broker tenure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BrokerAssignment {
    pub zone: ZoneKey,
    pub vehicle: VehicleIndex,
    pub accept_time: i64,
    pub ended_at: i64,
    pub ended_by: EndReason,
    /// Full estimated service time, credited at acceptance.
    pub credited_service: i64,
    /// Time actually served before replacement or departure.
    pub truncated_service: i64,
}

/// Totals of one committed path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct PolicyOutcome {
    pub credited: i64,
    pub truncated: i64,
    pub selections: u32,
    /// Acceptances that replaced a live broker (subscriber switches).
    pub broker_switches: u32,
}

/// Committed decisions of one zone: budget, permanent rejections and the sitting broker.
#[derive(Debug, Clone)]
pub struct CommitPath {
    zone: ZoneKey,
    budget_remaining: u32,
    rejected: HashSet<VehicleIndex>,
    broker: Option<Broker>,
    outcome: PolicyOutcome,
}

impl CommitPath {
    pub fn new(zone: ZoneKey, budget: u32) -> Self {
        CommitPath {
            zone,
            budget_remaining: budget,
            rejected: HashSet::new(),
            broker: None,
            outcome: PolicyOutcome::default(),
        }
    }

    pub fn budget_remaining(&self) -> u32 {
        self.budget_remaining
    }

    pub fn broker(&self) -> Option<&Broker> {
        self.broker.as_ref()
    }

    pub fn is_rejected(&self, vehicle: VehicleIndex) -> bool {
        self.rejected.contains(&vehicle)
    }

    pub fn outcome(&self) -> PolicyOutcome {
        self.outcome
    }

    fn close(&mut self, ended_at: i64, ended_by: EndReason) -> Option<BrokerAssignment> {
        let b = self.broker.take()?;
        let truncated = (b.exit_time.min(ended_at) - b.accept_time).max(0);
        self.outcome.truncated += truncated;
        Some(BrokerAssignment {
            zone: self.zone,
            vehicle: b.vehicle,
            accept_time: b.accept_time,
            ended_at,
            ended_by,
            credited_service: b.service_time,
            truncated_service: truncated,
        })
    }

    /// Clears a broker that left the zone before `now`.
    pub fn settle(&mut self, now: i64) -> Option<BrokerAssignment> {
        match self.broker {
            Some(b) if b.exit_time < now => self.close(b.exit_time, EndReason::Departure),
            _ => None,
        }
    }

    /// Applies the deciding rule's verdict `wants_accept` to an arrival.
    pub fn commit(&mut self, event: &ArrivalEvent, wants_accept: bool) -> (Decision, Option<BrokerAssignment>) {
        let departed = self.settle(event.entry_time);
        let decision = if !wants_accept {
            Decision::Reject(RejectReason::Threshold)
        } else if self.rejected.contains(&event.vehicle) {
            Decision::Reject(RejectReason::PreviouslyRejected)
        } else if self.budget_remaining == 0 {
            Decision::Reject(RejectReason::BudgetExhausted)
        } else {
            Decision::Accept
        };
        match decision {
            Decision::Accept => {
                self.budget_remaining -= 1;
                let replaced = self.close(event.entry_time, EndReason::Replacement);
                if replaced.is_some() {
                    self.outcome.broker_switches += 1;
                }
                self.outcome.selections += 1;
                self.outcome.credited += event.service_time;
                self.broker = Some(Broker {
                    vehicle: event.vehicle,
                    accept_time: event.entry_time,
                    service_time: event.service_time,
                    exit_time: event.exit_time,
                });
                (decision, replaced.or(departed))
            }
            Decision::Reject(_) => {
                self.rejected.insert(event.vehicle);
                (decision, departed)
            }
        }
    }

    /// Closes the sitting broker at the end of the run.
    pub fn finish(&mut self, run_end: i64) -> Option<BrokerAssignment> {
        self.settle(run_end).or_else(|| self.close(run_end, EndReason::RunEnd))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(vehicle: VehicleIndex, entry: i64, s: i64) -> ArrivalEvent {
        ArrivalEvent {
            vehicle,
            zone: zone(),
            entry_time: entry,
            exit_time: entry + s,
            service_time: s,
        }
    }

    fn zone() -> ZoneKey {
        ZoneKey::parse("wtw3sjq").unwrap()
    }

    #[test]
    fn budget_caps_acceptances() {
        let mut c = CommitPath::new(zone(), 1);
        assert_eq!(c.commit(&ev(0, 0, 10), true).0, Decision::Accept);
        assert_eq!(
            c.commit(&ev(1, 5, 10), true).0,
            Decision::Reject(RejectReason::BudgetExhausted)
        );
        assert_eq!(c.outcome().selections, 1);
        assert_eq!(c.budget_remaining(), 0);
    }

    #[test]
    fn rejection_is_permanent() {
        let mut c = CommitPath::new(zone(), 5);
        c.commit(&ev(3, 0, 10), false);
        assert!(c.is_rejected(3));
        assert_eq!(
            c.commit(&ev(3, 100, 50), true).0,
            Decision::Reject(RejectReason::PreviouslyRejected)
        );
        assert_eq!(c.outcome().selections, 0);
    }

    #[test]
    fn replacement_truncates_previous_broker() {
        let mut c = CommitPath::new(zone(), 5);
        c.commit(&ev(0, 0, 100), true);
        let (d, closed) = c.commit(&ev(1, 30, 100), true);
        assert_eq!(d, Decision::Accept);
        let closed = closed.unwrap();
        assert_eq!(closed.ended_by, EndReason::Replacement);
        assert_eq!(closed.credited_service, 100);
        assert_eq!(closed.truncated_service, 30);
        let last = c.finish(1_000).unwrap();
        assert_eq!(last.ended_by, EndReason::Departure);
        let o = c.outcome();
        assert_eq!((o.credited, o.truncated, o.broker_switches), (200, 130, 1));
    }

    #[test]
    fn departed_broker_is_not_replaced() {
        let mut c = CommitPath::new(zone(), 5);
        c.commit(&ev(0, 0, 10), true);
        let (_, closed) = c.commit(&ev(1, 50, 10), true);
        assert_eq!(closed.unwrap().ended_by, EndReason::Departure);
        assert_eq!(c.outcome().broker_switches, 0);
        assert_eq!(c.finish(60).unwrap().ended_by, EndReason::RunEnd);
    }
}
