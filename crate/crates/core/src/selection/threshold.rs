use rayon::prelude::*;
use thiserror::Error;

use super::{ALGORITHM_COUNT, PERCENTILES};
use crate::events::ArrivalStreams;
use crate::geozone::ZoneKey;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PercentileError {
    #[error("percentile of an empty list")]
    Empty,
    #[error("percentile {0} outside 1..=100")]
    OutOfRange(u32),
}

/// Nearest-rank percentile of an ascending list: the element at 1-based rank
/// `ceil(x / 100 * n)`. The result is always an element of the list.
pub fn nearest_rank_percentile(sorted: &[i64], x: u32) -> Result<i64, PercentileError> {
    if sorted.is_empty() {
        return Err(PercentileError::Empty);
    }
    if !(1..=100).contains(&x) {
        return Err(PercentileError::OutOfRange(x));
    }
    debug_assert!(sorted.windows(2).all(|w| w[0] <= w[1]), "input must be sorted");
    let n = sorted.len() as u64;
    let rank = (x as u64 * n).div_ceil(100);
    Ok(sorted[rank as usize - 1])
}

/// Thresholds of one zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneThresholds {
    /// Threshold of ensemble member `i`, at percentile `PERCENTILES[i]`.
    pub by_percentile: [i64; ALGORITHM_COUNT],
    /// Smallest service time in the zone; the threshold of TBO-0.
    pub minimum: i64,
    /// Number of service times the thresholds were computed from.
    pub samples: usize,
}

impl ZoneThresholds {
    /// Computes thresholds from a zone's service times (any order).
    pub fn from_service_times(mut times: Vec<i64>) -> Result<Self, PercentileError> {
        times.sort_unstable();
        let minimum = *times.first().ok_or(PercentileError::Empty)?;
        let mut by_percentile = [0; ALGORITHM_COUNT];
        for (slot, &x) in by_percentile.iter_mut().zip(PERCENTILES.iter()) {
            *slot = nearest_rank_percentile(&times, x as u32)?;
        }
        Ok(ZoneThresholds {
            by_percentile,
            minimum,
            samples: times.len(),
        })
    }
}

/// Per-zone thresholds, ordered by zone.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ThresholdTable {
    zones: Vec<(ZoneKey, ZoneThresholds)>,
}

impl ThresholdTable {
    pub fn get(&self, zone: &ZoneKey) -> Option<&ZoneThresholds> {
        self.zones
            .binary_search_by(|(z, _)| z.cmp(zone))
            .ok()
            .map(|i| &self.zones[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = &(ZoneKey, ZoneThresholds)> {
        self.zones.iter()
    }

    pub fn len(&self) -> usize {
        self.zones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zones.is_empty()
    }
}

/// Builds each zone's list of service times over the whole run and takes the
/// nine nearest-rank percentiles. Zones without arrivals get no entry.
pub fn build_threshold_table(arrivals: &ArrivalStreams) -> ThresholdTable {
    let zones = arrivals
        .zones()
        .par_iter()
        .filter_map(|(zone, events)| {
            let times = events.iter().map(|e| e.service_time).collect();
            ZoneThresholds::from_service_times(times).ok().map(|t| (*zone, t))
        })
        .collect();
    ThresholdTable { zones }
}
