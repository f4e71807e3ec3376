//! Seeded synthetic taxi traces in the loader's format.
//!
//! Vehicles hop between cells of a square grid of zones around a center point.
//! Each stay lasts a dwell time drawn from the regime active at entry; regimes
//! follow each other in a cycle over the run. Popular cells are visited more
//! often (Zipf-like weights), which spreads per-zone traffic the way city
//! centers do.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use thiserror::Error;

use crate::geozone::{cell_extent_deg, geohash_cell_bounds, geohash_encode, ZoneKey, ZONE_PRECISION};
use crate::seed::substream_seed;
use crate::trace::{TracePoint, TraceSet, VehicleTrack, SECONDS_PER_DAY};

#[derive(Debug, Error, PartialEq)]
pub enum SyntheticError {
    #[error("synthetic trace needs at least one vehicle")]
    NoVehicles,
    #[error("synthetic trace needs at least one day")]
    NoDays,
    #[error("zone grid must be at least 1x1 with at least two cells")]
    Grid,
    #[error("regime schedule is empty or has a non-positive duration")]
    Regimes,
    #[error("invalid dwell distribution: {0}")]
    Dwell(String),
    #[error("{0}")]
    Parameter(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DwellDistribution {
    Constant(i64),
    Uniform {
        min: i64,
        max: i64,
    },
    /// `min` plus an exponential with the given mean.
    Exponential {
        min: i64,
        mean: f64,
    },
}

impl DwellDistribution {
    fn validate(&self) -> Result<(), SyntheticError> {
        let ok = match *self {
            DwellDistribution::Constant(v) => v >= 0,
            DwellDistribution::Uniform { min, max } => 0 <= min && min <= max,
            DwellDistribution::Exponential { min, mean } => min >= 0 && mean.is_finite() && mean > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SyntheticError::Dwell(format!("{self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> i64 {
        match *self {
            DwellDistribution::Constant(v) => v,
            DwellDistribution::Uniform { min, max } => rng.random_range(min..=max),
            DwellDistribution::Exponential { min, mean } => {
                let exp = Exp::new(1.0 / mean).expect("positive mean");
                min + exp.sample(rng).round() as i64
            }
        }
    }

    fn parse(kind: &str, args: &[&str]) -> Result<Self, SyntheticError> {
        let num = |i: usize| -> Result<f64, SyntheticError> {
            args.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| SyntheticError::Dwell(format!("{kind} needs numeric argument {}", i + 1)))
        };
        let d = match kind.trim() {
            "constant" => DwellDistribution::Constant(num(0)? as i64),
            "uniform" => DwellDistribution::Uniform {
                min: num(0)? as i64,
                max: num(1)? as i64,
            },
            "exponential" => DwellDistribution::Exponential {
                mean: num(0)?,
                min: if args.len() > 1 { num(1)? as i64 } else { 0 },
            },
            other => return Err(SyntheticError::Dwell(format!("unknown kind {other:?}"))),
        };
        d.validate()?;
        Ok(d)
    }

    fn describe(&self) -> String {
        match *self {
            DwellDistribution::Constant(v) => format!("constant:{v}"),
            DwellDistribution::Uniform { min, max } => format!("uniform:{min}:{max}"),
            DwellDistribution::Exponential { min, mean } => format!("exponential:{mean}:{min}"),
        }
    }
}

/// A window of the schedule with its dwell-time distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Regime {
    pub duration: i64,
    pub dwell: DwellDistribution,
}

/// Parameters of a generated trace. The seed is normally derived from the experiment seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticTraceSpec {
    pub vehicles: u32,
    /// Days generated directly (each day drawn independently).
    pub days: u32,
    /// Start of the observation window, seconds since the epoch.
    pub origin: i64,
    pub center_lat: f64,
    pub center_lon: f64,
    pub grid_rows: u32,
    pub grid_cols: u32,
    /// Zipf exponent of cell popularity; 0 makes all cells equally likely.
    pub skew: f64,
    /// Schedule cycled from the origin.
    pub regimes: Vec<Regime>,
    /// Longest spacing between records within one stay.
    pub report_interval: i64,
    pub transit_min: i64,
    pub transit_max: i64,
    /// Vehicles start their day uniformly within this many seconds after midnight.
    pub start_spread: i64,
    /// No stay extends past this offset within a day.
    pub day_end: i64,
    pub seed: u64,
}

impl Default for SyntheticTraceSpec {
    fn default() -> Self {
        SyntheticTraceSpec {
            vehicles: 200,
            days: 1,
            // 2007-02-20 00:00:00 UTC
            origin: 1_171_929_600,
            center_lat: 31.2304,
            center_lon: 121.4737,
            grid_rows: 12,
            grid_cols: 12,
            skew: 1.0,
            regimes: vec![Regime {
                duration: SECONDS_PER_DAY,
                dwell: DwellDistribution::Exponential { min: 10, mean: 300.0 },
            }],
            report_interval: 600,
            transit_min: 10,
            transit_max: 90,
            start_spread: 4 * 3600,
            day_end: 84_000,
            seed: 0,
        }
    }
}

impl SyntheticTraceSpec {
    /// Named presets: `small`, `two-regime`, `city`.
    pub fn preset(name: &str) -> Option<Self> {
        let base = SyntheticTraceSpec::default();
        Some(match name {
            "small" => SyntheticTraceSpec {
                vehicles: 60,
                grid_rows: 6,
                grid_cols: 6,
                ..base
            },
            "two-regime" => SyntheticTraceSpec {
                vehicles: 120,
                days: 2,
                grid_rows: 5,
                grid_cols: 5,
                start_spread: 600,
                day_end: SECONDS_PER_DAY - 1,
                regimes: vec![
                    Regime {
                        duration: SECONDS_PER_DAY,
                        dwell: DwellDistribution::Uniform { min: 600, max: 3600 },
                    },
                    Regime {
                        duration: SECONDS_PER_DAY,
                        dwell: DwellDistribution::Uniform { min: 10, max: 300 },
                    },
                ],
                ..base
            },
            "city" => SyntheticTraceSpec {
                vehicles: 2000,
                grid_rows: 40,
                grid_cols: 40,
                skew: 1.1,
                ..base
            },
            _ => return None,
        })
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        if self.vehicles == 0 {
            return Err(SyntheticError::NoVehicles);
        }
        if self.days == 0 {
            return Err(SyntheticError::NoDays);
        }
        if self.grid_rows == 0 || self.grid_cols == 0 || self.grid_rows * self.grid_cols < 2 {
            return Err(SyntheticError::Grid);
        }
        if self.regimes.is_empty() || self.regimes.iter().any(|r| r.duration <= 0) {
            return Err(SyntheticError::Regimes);
        }
        for r in &self.regimes {
            r.dwell.validate()?;
        }
        let param = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(SyntheticError::Parameter(msg.into()))
            }
        };
        param(self.report_interval > 0, "report_interval must be positive")?;
        param(
            0 <= self.transit_min && self.transit_min <= self.transit_max,
            "transit_min must be within 0..=transit_max",
        )?;
        param(self.start_spread >= 0, "start_spread must be non-negative")?;
        param(
            self.start_spread < self.day_end && self.day_end < SECONDS_PER_DAY,
            "need start_spread < day_end < 86400",
        )?;
        param(self.skew.is_finite() && self.skew >= 0.0, "skew must be non-negative")?;
        geohash_encode(self.center_lat, self.center_lon, ZONE_PRECISION)
            .map_err(|e| SyntheticError::Parameter(e.to_string()))?;
        Ok(())
    }

    /// Dwell distribution in force at `offset` seconds after the origin.
    pub fn regime_at(&self, offset: i64) -> &Regime {
        let period: i64 = self.regimes.iter().map(|r| r.duration).sum();
        let mut t = offset.rem_euclid(period);
        for r in &self.regimes {
            if t < r.duration {
                return r;
            }
            t -= r.duration;
        }
        self.regimes.last().expect("validated non-empty")
    }

    /// Centers of the grid cells, row-major.
    pub fn cell_centers(&self) -> Vec<(f64, f64)> {
        let center = geohash_encode(self.center_lat, self.center_lon, ZONE_PRECISION).expect("validated");
        let (lat0, lon0) = geohash_cell_bounds(&center).expect("valid hash").center();
        let (dlat, dlon) = cell_extent_deg(ZONE_PRECISION);
        let mut cells = Vec::with_capacity((self.grid_rows * self.grid_cols) as usize);
        for r in 0..self.grid_rows as i64 {
            for c in 0..self.grid_cols as i64 {
                let lat = lat0 + (r - self.grid_rows as i64 / 2) as f64 * dlat;
                let lon = lon0 + (c - self.grid_cols as i64 / 2) as f64 * dlon;
                cells.push((lat.clamp(-89.999, 89.999), lon.clamp(-179.999, 179.999)));
            }
        }
        cells
    }

    /// Flat `key = value` form, accepted back by [`SyntheticTraceSpec::from_kv`].
    pub fn to_kv(&self) -> String {
        let regimes: Vec<String> = self
            .regimes
            .iter()
            .map(|r| format!("{}:{}", r.duration, r.dwell.describe()))
            .collect();
        format!(
            "vehicles = {}\ndays = {}\norigin = {}\ncenter_lat = {}\ncenter_lon = {}\ngrid_rows = {}\ngrid_cols = {}\nskew = {}\nregimes = {}\nreport_interval = {}\ntransit_min = {}\ntransit_max = {}\nstart_spread = {}\nday_end = {}\n",
            self.vehicles,
            self.days,
            self.origin,
            self.center_lat,
            self.center_lon,
            self.grid_rows,
            self.grid_cols,
            self.skew,
            regimes.join("; "),
            self.report_interval,
            self.transit_min,
            self.transit_max,
            self.start_spread,
            self.day_end
        )
    }

    /// Parses `key = value` lines (`#` comments allowed), starting from the
    /// preset named by an optional `preset` key, else from the defaults.
    ///
    /// `regimes` is a `;`-separated list of `duration:kind:args`, with kinds
    /// `constant:V`, `uniform:MIN:MAX` and `exponential:MEAN[:MIN]`.
    pub fn from_kv(text: &str) -> Result<Self, SyntheticError> {
        let pairs = crate::config::parse_kv(text).map_err(SyntheticError::Parameter)?;
        let mut spec = match pairs.get("preset") {
            Some(name) => {
                Self::preset(name).ok_or_else(|| SyntheticError::Parameter(format!("unknown preset {name:?}")))?
            }
            None => SyntheticTraceSpec::default(),
        };
        for (key, value) in &pairs {
            let bad = || SyntheticError::Parameter(format!("invalid value {value:?} for {key}"));
            macro_rules! num {
                () => {
                    value.parse().map_err(|_| bad())?
                };
            }
            match key.as_str() {
                "preset" => {}
                "vehicles" => spec.vehicles = num!(),
                "days" => spec.days = num!(),
                "origin" => spec.origin = num!(),
                "center_lat" => spec.center_lat = num!(),
                "center_lon" => spec.center_lon = num!(),
                "grid_rows" => spec.grid_rows = num!(),
                "grid_cols" => spec.grid_cols = num!(),
                "skew" => spec.skew = num!(),
                "report_interval" => spec.report_interval = num!(),
                "transit_min" => spec.transit_min = num!(),
                "transit_max" => spec.transit_max = num!(),
                "start_spread" => spec.start_spread = num!(),
                "day_end" => spec.day_end = num!(),
                "regimes" => spec.regimes = parse_regimes(value)?,
                other => return Err(SyntheticError::Parameter(format!("unknown key {other:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }
}

fn parse_regimes(text: &str) -> Result<Vec<Regime>, SyntheticError> {
    text.split(';')
        .filter(|s| !s.trim().is_empty())
        .map(|item| {
            let parts: Vec<&str> = item.trim().split(':').collect();
            if parts.len() < 3 {
                return Err(SyntheticError::Dwell(format!(
                    "expected duration:kind:args, got {item:?}"
                )));
            }
            let duration = parts[0]
                .trim()
                .parse()
                .map_err(|_| SyntheticError::Dwell(format!("bad duration in {item:?}")))?;
            Ok(Regime {
                duration,
                dwell: DwellDistribution::parse(parts[1], &parts[2..])?,
            })
        })
        .collect()
}

fn point_in_cell<R: Rng>(rng: &mut R, center: (f64, f64), extent: (f64, f64)) -> (f64, f64) {
    // stay clear of cell edges so points never leak into a neighbor
    let lat = center.0 + rng.random_range(-0.4..0.4) * extent.0;
    let lon = center.1 + rng.random_range(-0.4..0.4) * extent.1;
    (lat, lon)
}

fn generate_vehicle(
    spec: &SyntheticTraceSpec,
    vehicle: u32,
    cells: &[(f64, f64)],
    weights: &WeightedIndex<f64>,
) -> Vec<TracePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, "synthetic-vehicle", vehicle as u64));
    let extent = cell_extent_deg(ZONE_PRECISION);
    let mut points = Vec::new();
    for day in 0..spec.days as i64 {
        let day_start = day * SECONDS_PER_DAY;
        let shift_end = day_start + spec.day_end;
        let mut t = day_start + rng.random_range(0..=spec.start_spread);
        let mut cell = weights.sample(&mut rng);
        loop {
            let dwell = spec.regime_at(t).dwell.sample(&mut rng);
            if t + dwell > shift_end {
                break;
            }
            let speed = rng.random_range(0.0f32..3.0);
            let mut stamp = t;
            loop {
                let (lat, lon) = point_in_cell(&mut rng, cells[cell], extent);
                let heading = rng.random_range(0.0f32..360.0);
                points.push(TracePoint::new(
                    spec.origin + stamp,
                    lat,
                    lon,
                    Some(speed),
                    Some(heading),
                ));
                if stamp == t + dwell {
                    break;
                }
                stamp = (stamp + spec.report_interval).min(t + dwell);
            }
            t += dwell + rng.random_range(spec.transit_min..=spec.transit_max).max(1);
            let mut next = weights.sample(&mut rng);
            while next == cell {
                next = weights.sample(&mut rng);
            }
            cell = next;
        }
    }
    points
}

/// Generates the trace described by `spec`.
pub fn generate_synthetic(spec: &SyntheticTraceSpec) -> Result<TraceSet, SyntheticError> {
    spec.validate()?;
    let cells = spec.cell_centers();
    let mut order: Vec<usize> = (0..cells.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed(spec.seed, "synthetic-popularity", 0));
    // random popularity rank per cell
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut weights = vec![0.0; cells.len()];
    for (rank, &cell) in order.iter().enumerate() {
        weights[cell] = 1.0 / ((rank + 1) as f64).powf(spec.skew);
    }
    let weights = WeightedIndex::new(&weights).map_err(|e| SyntheticError::Parameter(e.to_string()))?;
    let width = spec.vehicles.to_string().len().max(4);
    let tracks: Vec<VehicleTrack> = (0..spec.vehicles)
        .into_par_iter()
        .map(|v| VehicleTrack {
            vehicle_id: format!("V{v:0width$}"),
            points: generate_vehicle(spec, v, &cells, &weights),
        })
        .collect();
    Ok(TraceSet::from_canonical_tracks(tracks, spec.origin, spec.days))
}

/// Zones of the generated grid, for tests and diagnostics.
pub fn grid_zones(spec: &SyntheticTraceSpec) -> BTreeMap<ZoneKey, usize> {
    spec.cell_centers()
        .into_iter()
        .enumerate()
        .map(|(i, (lat, lon))| (ZoneKey::containing(lat, lon).expect("cell centers are valid"), i))
        .collect()
}
