//! Vehicle GPS traces: row parsing, canonical grouping, replication and CSV dumps.
//!
//! Rows are comma separated: `id,timestamp,latitude,longitude[,speed[,heading]]`.
//! Speed and heading may be left empty. A [`TraceSet`] keeps one track per
//! vehicle, ordered by vehicle id, with strictly increasing timestamps.

use std::fs::File;
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use rayon::prelude::*;
use thiserror::Error;

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("expected 4 to 6 fields, found {0}")]
    FieldCount(usize),
    #[error("column {column} ({name}): cannot parse {value:?}")]
    Parse {
        column: usize,
        name: &'static str,
        value: String,
    },
    #[error("column {column} ({name}): value {value} out of range")]
    OutOfRange {
        column: usize,
        name: &'static str,
        value: f64,
    },
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("trace contains no valid records")]
    Empty,
    #[error("replication factor must be at least 1, got {0}")]
    InvalidReplication(u32),
    #[error("replication needs a trace spanning at most one day, this one covers {days} days ({span} s)")]
    MultiDay { days: u32, span: i64 },
    #[error("timestamp {timestamp} of vehicle {vehicle} lies outside the window [{start}, {end})")]
    OutsideWindow {
        vehicle: String,
        timestamp: i64,
        start: i64,
        end: i64,
    },
}

impl TraceError {
    /// True for errors that describe a single bad row rather than the input as a whole.
    pub fn is_row_error(&self) -> bool {
        matches!(
            self,
            TraceError::FieldCount(_) | TraceError::Parse { .. } | TraceError::OutOfRange { .. }
        )
    }
}

/// One timestamped GPS observation of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub vehicle_id: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    /// Meters per second.
    pub speed: Option<f32>,
    /// Degrees in `[0, 360)`.
    pub heading: Option<f32>,
}

impl TraceRecord {
    pub fn new(
        vehicle_id: impl Into<String>,
        timestamp: i64,
        latitude: f64,
        longitude: f64,
    ) -> Result<Self, TraceError> {
        let record = TraceRecord {
            vehicle_id: vehicle_id.into(),
            timestamp,
            latitude,
            longitude,
            speed: None,
            heading: None,
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), TraceError> {
        if self.vehicle_id.is_empty() || self.vehicle_id.contains(',') {
            return Err(TraceError::Parse {
                column: 1,
                name: "vehicle_id",
                value: self.vehicle_id.clone(),
            });
        }
        check_range(3, "latitude", self.latitude, -90.0, 90.0)?;
        check_range(4, "longitude", self.longitude, -180.0, 180.0)?;
        if let Some(speed) = self.speed {
            if !speed.is_finite() || speed < 0.0 {
                return Err(TraceError::OutOfRange {
                    column: 5,
                    name: "speed",
                    value: speed as f64,
                });
            }
        }
        if let Some(heading) = self.heading {
            if !(0.0..360.0).contains(&heading) {
                return Err(TraceError::OutOfRange {
                    column: 6,
                    name: "heading",
                    value: heading as f64,
                });
            }
        }
        Ok(())
    }
}

fn check_range(column: usize, name: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), TraceError> {
    if value.is_finite() && (lo..=hi).contains(&value) {
        Ok(())
    } else {
        Err(TraceError::OutOfRange { column, name, value })
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, column: usize, name: &'static str) -> Result<T, TraceError> {
    raw.trim().parse().map_err(|_| TraceError::Parse {
        column,
        name,
        value: raw.to_string(),
    })
}

fn parse_optional(raw: Option<&str>, column: usize, name: &'static str) -> Result<Option<f32>, TraceError> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(text) => parse_field(text, column, name).map(Some),
    }
}

/// Parses and validates one CSV row.
pub fn parse_record(line: &str) -> Result<TraceRecord, TraceError> {
    let fields: Vec<&str> = line.trim_end_matches(['\r', '\n']).split(',').collect();
    if !(4..=6).contains(&fields.len()) {
        return Err(TraceError::FieldCount(fields.len()));
    }
    let record = TraceRecord {
        vehicle_id: fields[0].trim().to_string(),
        timestamp: parse_field(fields[1], 2, "timestamp")?,
        latitude: parse_field(fields[2], 3, "latitude")?,
        longitude: parse_field(fields[3], 4, "longitude")?,
        speed: parse_optional(fields.get(4).copied(), 5, "speed")?,
        heading: parse_optional(fields.get(5).copied(), 6, "heading")?,
    };
    record.validate()?;
    Ok(record)
}

/// Compact per-vehicle observation. Missing speed or heading is stored as NaN.
#[derive(Debug, Clone, Copy)]
pub struct TracePoint {
    pub timestamp: i64,
    pub latitude: f64,
    pub longitude: f64,
    speed: f32,
    heading: f32,
}

impl PartialEq for TracePoint {
    fn eq(&self, other: &Self) -> bool {
        self.timestamp == other.timestamp
            && self.latitude == other.latitude
            && self.longitude == other.longitude
            && self.speed() == other.speed()
            && self.heading() == other.heading()
    }
}

impl TracePoint {
    pub fn new(timestamp: i64, latitude: f64, longitude: f64, speed: Option<f32>, heading: Option<f32>) -> Self {
        TracePoint {
            timestamp,
            latitude,
            longitude,
            speed: speed.unwrap_or(f32::NAN),
            heading: heading.unwrap_or(f32::NAN),
        }
    }

    pub fn speed(&self) -> Option<f32> {
        (!self.speed.is_nan()).then_some(self.speed)
    }

    pub fn heading(&self) -> Option<f32> {
        (!self.heading.is_nan()).then_some(self.heading)
    }

    fn shifted(mut self, offset: i64) -> Self {
        self.timestamp += offset;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VehicleTrack {
    pub vehicle_id: String,
    /// Strictly increasing timestamps.
    pub points: Vec<TracePoint>,
}

impl VehicleTrack {
    fn record(&self, point: &TracePoint) -> TraceRecord {
        TraceRecord {
            vehicle_id: self.vehicle_id.clone(),
            timestamp: point.timestamp,
            latitude: point.latitude,
            longitude: point.longitude,
            speed: point.speed(),
            heading: point.heading(),
        }
    }
}

/// Canonical, immutable collection of traces.
///
/// Tracks are sorted by vehicle id. Every timestamp lies in
/// `[origin, origin + day_count * 86_400)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSet {
    tracks: Vec<VehicleTrack>,
    origin: i64,
    day_count: u32,
}

impl TraceSet {
    /// Groups, sorts and deduplicates records. The window starts at the earliest
    /// timestamp and covers as many whole days as needed.
    pub fn from_records(records: Vec<TraceRecord>) -> Result<Self, TraceError> {
        let origin = records.iter().map(|r| r.timestamp).min().ok_or(TraceError::Empty)?;
        let last = records.iter().map(|r| r.timestamp).max().unwrap_or(origin);
        let days = ((last - origin) / SECONDS_PER_DAY + 1) as u32;
        Self::with_window(records, origin, days)
    }

    /// Like [`TraceSet::from_records`] but with an explicit observation window.
    pub fn with_window(records: Vec<TraceRecord>, origin: i64, day_count: u32) -> Result<Self, TraceError> {
        if records.is_empty() {
            return Err(TraceError::Empty);
        }
        if day_count == 0 {
            return Err(TraceError::InvalidReplication(0));
        }
        let end = origin + day_count as i64 * SECONDS_PER_DAY;
        let mut by_vehicle: std::collections::BTreeMap<String, Vec<TracePoint>> = Default::default();
        for record in records {
            record.validate()?;
            if record.timestamp < origin || record.timestamp >= end {
                return Err(TraceError::OutsideWindow {
                    vehicle: record.vehicle_id,
                    timestamp: record.timestamp,
                    start: origin,
                    end,
                });
            }
            let point = TracePoint::new(
                record.timestamp,
                record.latitude,
                record.longitude,
                record.speed,
                record.heading,
            );
            by_vehicle.entry(record.vehicle_id).or_default().push(point);
        }
        let tracks = by_vehicle
            .into_iter()
            .map(|(vehicle_id, mut points)| {
                // stable: the first of several equal timestamps survives dedup
                points.sort_by_key(|p| p.timestamp);
                points.dedup_by_key(|p| p.timestamp);
                VehicleTrack { vehicle_id, points }
            })
            .collect();
        Ok(TraceSet {
            tracks,
            origin,
            day_count,
        })
    }

    /// Builds a set from tracks that are already canonical (sorted ids, strictly
    /// increasing timestamps inside the window). Used by generators.
    pub(crate) fn from_canonical_tracks(tracks: Vec<VehicleTrack>, origin: i64, day_count: u32) -> Self {
        debug_assert!(tracks.windows(2).all(|w| w[0].vehicle_id < w[1].vehicle_id));
        debug_assert!(tracks
            .iter()
            .all(|t| t.points.windows(2).all(|w| w[0].timestamp < w[1].timestamp)));
        TraceSet {
            tracks: tracks.into_iter().filter(|t| !t.points.is_empty()).collect(),
            origin,
            day_count,
        }
    }

    pub fn tracks(&self) -> &[VehicleTrack] {
        &self.tracks
    }

    pub fn origin(&self) -> i64 {
        self.origin
    }

    pub fn day_count(&self) -> u32 {
        self.day_count
    }

    /// Exclusive end of the observation window.
    pub fn window_end(&self) -> i64 {
        self.origin + self.day_count as i64 * SECONDS_PER_DAY
    }

    pub fn vehicle_count(&self) -> usize {
        self.tracks.len()
    }

    pub fn record_count(&self) -> usize {
        self.tracks.iter().map(|t| t.points.len()).sum()
    }

    /// Seconds between the first and last observation.
    pub fn span(&self) -> i64 {
        let first = self
            .tracks
            .iter()
            .filter_map(|t| t.points.first())
            .map(|p| p.timestamp)
            .min();
        let last = self
            .tracks
            .iter()
            .filter_map(|t| t.points.last())
            .map(|p| p.timestamp)
            .max();
        match (first, last) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// Records in canonical order: by vehicle id, then by timestamp.
    pub fn records(&self) -> impl Iterator<Item = TraceRecord> + '_ {
        self.tracks
            .iter()
            .flat_map(|track| track.points.iter().map(move |p| track.record(p)))
    }

    /// Writes the canonical CSV form, one record per row.
    pub fn dump_csv<W: Write>(&self, writer: W) -> io::Result<()> {
        let mut out = BufWriter::new(writer);
        for track in &self.tracks {
            for p in &track.points {
                write!(
                    out,
                    "{},{},{},{}",
                    track.vehicle_id, p.timestamp, p.latitude, p.longitude
                )?;
                match (p.speed(), p.heading()) {
                    (None, None) => writeln!(out)?,
                    (Some(s), None) => writeln!(out, ",{s}")?,
                    (s, Some(h)) => {
                        let s = s.map(|v| v.to_string()).unwrap_or_default();
                        writeln!(out, ",{s},{h}")?
                    }
                }
            }
        }
        out.flush()
    }
}

/// Result of [`load_trace`].
#[derive(Debug, Clone)]
pub struct LoadedTrace {
    pub trace: TraceSet,
    /// Rows rejected by parsing or validation.
    pub skipped: usize,
}

/// Loads a CSV trace (optionally gzip compressed when the name ends in `.gz`).
///
/// Malformed rows are skipped and counted; blank lines and lines starting
/// with `#` are ignored.
pub fn load_trace(path: &Path) -> Result<LoadedTrace, TraceError> {
    let io_err = |source| TraceError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    let mut text = String::new();
    if path.extension().is_some_and(|ext| ext == "gz") {
        GzDecoder::new(file).read_to_string(&mut text).map_err(io_err)?;
    } else {
        let mut file = file;
        file.read_to_string(&mut text).map_err(io_err)?;
    }
    parse_trace_text(&text)
}

/// Parses a whole CSV document. Row order in the result does not depend on
/// how parsing is scheduled across threads.
pub fn parse_trace_text(text: &str) -> Result<LoadedTrace, TraceError> {
    let lines: Vec<&str> = text
        .lines()
        .filter(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .collect();
    let parsed: Vec<Result<TraceRecord, TraceError>> = lines.par_iter().map(|l| parse_record(l)).collect();
    let mut records = Vec::with_capacity(parsed.len());
    let mut skipped = 0;
    for (line_no, result) in parsed.into_iter().enumerate() {
        match result {
            Ok(record) => records.push(record),
            Err(err) => {
                log::debug!("skipping row {}: {err}", line_no + 1);
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} malformed trace rows");
    }
    let trace = TraceSet::from_records(records)?;
    Ok(LoadedTrace { trace, skipped })
}

/// Repeats a one-day trace `k` times, shifting copy `i` by `i` days.
pub fn replicate_trace(trace: &TraceSet, k: u32) -> Result<TraceSet, TraceError> {
    if k < 1 {
        return Err(TraceError::InvalidReplication(k));
    }
    if trace.day_count != 1 {
        return Err(TraceError::MultiDay {
            days: trace.day_count,
            span: trace.span(),
        });
    }
    if k == 1 {
        return Ok(trace.clone());
    }
    let tracks = trace
        .tracks
        .iter()
        .map(|track| {
            let mut points = Vec::with_capacity(track.points.len() * k as usize);
            for day in 0..k as i64 {
                let offset = day * SECONDS_PER_DAY;
                points.extend(track.points.iter().map(|p| p.shifted(offset)));
            }
            VehicleTrack {
                vehicle_id: track.vehicle_id.clone(),
                points,
            }
        })
        .collect();
    Ok(TraceSet {
        tracks,
        origin: trace.origin,
        day_count: k,
    })
}
