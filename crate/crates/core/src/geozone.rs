//! Geohash zoning and traffic classification of zones.

use std::fmt;
use std::io::{self, Write};
use std::ops::Range;

use thiserror::Error;

/// Characters per zone geohash.
pub const ZONE_PRECISION: usize = 7;

pub const GEOHASH_ALPHABET: &[u8; 32] = b"0123456789bcdefghjkmnpqrstuvwxyz";

/// Longest precision whose bits fit in a `u64`.
pub const MAX_PRECISION: usize = 12;

/// Mean Earth radius (IUGG), meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

const FNV_OFFSET_BASIS: u64 = 14_695_981_039_346_656_037;
const FNV_PRIME: u64 = 1_099_511_628_211;

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("latitude {0} outside [-90, 90]")]
    Latitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    Longitude(f64),
    #[error("precision {0} outside 1..={MAX_PRECISION}")]
    Precision(usize),
    #[error("invalid geohash character {0:?}")]
    Character(char),
    #[error("zone geohash must have {ZONE_PRECISION} characters, got {0}")]
    Length(usize),
}

fn char_value(c: u8) -> Option<u64> {
    GEOHASH_ALPHABET.iter().position(|&a| a == c).map(|i| i as u64)
}

fn check_point(latitude: f64, longitude: f64) -> Result<(), GeoError> {
    if !(latitude.is_finite() && (-90.0..=90.0).contains(&latitude)) {
        return Err(GeoError::Latitude(latitude));
    }
    if !(longitude.is_finite() && (-180.0..=180.0).contains(&longitude)) {
        return Err(GeoError::Longitude(longitude));
    }
    Ok(())
}

/// Interleaved geohash bits, longitude first. A point on a midpoint goes to the upper half.
fn interleave(latitude: f64, longitude: f64, bits: usize) -> u64 {
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let mut out = 0u64;
    for i in 0..bits {
        out <<= 1;
        if i % 2 == 0 {
            let mid = (lon_lo + lon_hi) / 2.0;
            if longitude >= mid {
                out |= 1;
                lon_lo = mid;
            } else {
                lon_hi = mid;
            }
        } else {
            let mid = (lat_lo + lat_hi) / 2.0;
            if latitude >= mid {
                out |= 1;
                lat_lo = mid;
            } else {
                lat_hi = mid;
            }
        }
    }
    out
}

fn encode_into(latitude: f64, longitude: f64, out: &mut [u8]) {
    let bits = interleave(latitude, longitude, out.len() * 5);
    let n = out.len();
    for (i, slot) in out.iter_mut().enumerate() {
        let shift = 5 * (n - 1 - i);
        *slot = GEOHASH_ALPHABET[((bits >> shift) & 0x1f) as usize];
    }
}

/// Encodes a coordinate as a geohash of `precision` characters.
pub fn geohash_encode(latitude: f64, longitude: f64, precision: usize) -> Result<String, GeoError> {
    if !(1..=MAX_PRECISION).contains(&precision) {
        return Err(GeoError::Precision(precision));
    }
    check_point(latitude, longitude)?;
    let mut buf = vec![0u8; precision];
    encode_into(latitude, longitude, &mut buf);
    Ok(String::from_utf8(buf).expect("alphabet is ASCII"))
}

/// Rectangle covered by a geohash cell: `lat.start <= lat < lat.end`, same for longitude.
/// Cells touching the north pole or the antimeridian at +180 also include that edge.
#[derive(Debug, Clone, PartialEq)]
pub struct CellBounds {
    pub latitude: Range<f64>,
    pub longitude: Range<f64>,
}

impl CellBounds {
    pub fn contains(&self, latitude: f64, longitude: f64) -> bool {
        let in_half_open = |r: &Range<f64>, v: f64, top: f64| r.start <= v && (v < r.end || (r.end == top && v == top));
        in_half_open(&self.latitude, latitude, 90.0) && in_half_open(&self.longitude, longitude, 180.0)
    }

    pub fn center(&self) -> (f64, f64) {
        (
            (self.latitude.start + self.latitude.end) / 2.0,
            (self.longitude.start + self.longitude.end) / 2.0,
        )
    }

    pub fn height_deg(&self) -> f64 {
        self.latitude.end - self.latitude.start
    }

    pub fn width_deg(&self) -> f64 {
        self.longitude.end - self.longitude.start
    }
}

pub fn geohash_cell_bounds(geohash: &str) -> Result<CellBounds, GeoError> {
    if !(1..=MAX_PRECISION).contains(&geohash.len()) {
        return Err(GeoError::Precision(geohash.len()));
    }
    let (mut lat_lo, mut lat_hi) = (-90.0_f64, 90.0_f64);
    let (mut lon_lo, mut lon_hi) = (-180.0_f64, 180.0_f64);
    let mut even = true;
    for c in geohash.chars() {
        let value = u8::try_from(c)
            .ok()
            .and_then(char_value)
            .ok_or(GeoError::Character(c))?;
        for bit in (0..5).rev() {
            let set = (value >> bit) & 1 == 1;
            if even {
                let mid = (lon_lo + lon_hi) / 2.0;
                if set {
                    lon_lo = mid
                } else {
                    lon_hi = mid
                }
            } else {
                let mid = (lat_lo + lat_hi) / 2.0;
                if set {
                    lat_lo = mid
                } else {
                    lat_hi = mid
                }
            }
            even = !even;
        }
    }
    Ok(CellBounds {
        latitude: lat_lo..lat_hi,
        longitude: lon_lo..lon_hi,
    })
}

/// Angular size `(latitude degrees, longitude degrees)` of a cell at `precision`.
pub fn cell_extent_deg(precision: usize) -> (f64, f64) {
    let bits = 5 * precision;
    let lon_bits = bits.div_ceil(2);
    let lat_bits = bits / 2;
    (180.0 / (1u64 << lat_bits) as f64, 360.0 / (1u64 << lon_bits) as f64)
}

/// Cell size in meters `(north-south, east-west)` at the given latitude, on a spherical Earth.
pub fn cell_size_m(precision: usize, latitude: f64) -> (f64, f64) {
    let (dlat, dlon) = cell_extent_deg(precision);
    let meters_per_deg = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
    (
        dlat * meters_per_deg,
        dlon * meters_per_deg * latitude.to_radians().cos(),
    )
}

/// FNV-1a 64-bit hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET_BASIS, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

/// Numeric zone id: FNV-1a of the geohash's ASCII bytes.
pub fn zone_numeric_id(geohash: &str) -> Result<u64, GeoError> {
    ZoneKey::parse(geohash).map(|z| z.numeric_id())
}

/// A zone: one 7-character geohash cell. Orders by geohash.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ZoneKey {
    hash: [u8; ZONE_PRECISION],
    id: u64,
}

impl ZoneKey {
    pub fn parse(geohash: &str) -> Result<Self, GeoError> {
        let bytes = geohash.as_bytes();
        if geohash.chars().count() != ZONE_PRECISION {
            return Err(GeoError::Length(geohash.chars().count()));
        }
        if let Some(bad) = geohash
            .chars()
            .find(|&c| !c.is_ascii() || char_value(c as u8).is_none())
        {
            return Err(GeoError::Character(bad));
        }
        let mut hash = [0u8; ZONE_PRECISION];
        hash.copy_from_slice(bytes);
        Ok(Self::from_bytes(hash))
    }

    pub fn containing(latitude: f64, longitude: f64) -> Result<Self, GeoError> {
        check_point(latitude, longitude)?;
        let mut hash = [0u8; ZONE_PRECISION];
        encode_into(latitude, longitude, &mut hash);
        Ok(Self::from_bytes(hash))
    }

    fn from_bytes(hash: [u8; ZONE_PRECISION]) -> Self {
        ZoneKey {
            hash,
            id: fnv1a64(&hash),
        }
    }

    pub fn as_str(&self) -> &str {
        std::str::from_utf8(&self.hash).expect("alphabet is ASCII")
    }

    pub fn numeric_id(&self) -> u64 {
        self.id
    }

    pub fn bounds(&self) -> CellBounds {
        geohash_cell_bounds(self.as_str()).expect("zone keys are valid geohashes")
    }
}

impl fmt::Debug for ZoneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ZoneKey({})", self.as_str())
    }
}

impl fmt::Display for ZoneKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficClass {
    Light,
    Medium,
    High,
}

impl TrafficClass {
    pub const ALL: [TrafficClass; 3] = [TrafficClass::Light, TrafficClass::Medium, TrafficClass::High];

    pub fn label(self) -> &'static str {
        match self {
            TrafficClass::Light => "light",
            TrafficClass::Medium => "medium",
            TrafficClass::High => "high",
        }
    }
}

impl fmt::Display for TrafficClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Light below the mean, High above the standard deviation, Medium in between.
///
/// When `std < mean` the Medium band is empty and the same ordered rule still applies.
pub fn classify_traffic(n_z: u64, mean: f64, std: f64) -> TrafficClass {
    let n = n_z as f64;
    if n < mean {
        TrafficClass::Light
    } else if n <= std {
        TrafficClass::Medium
    } else {
        TrafficClass::High
    }
}

/// Distinct-vehicle count of one zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneActivity {
    pub zone: ZoneKey,
    pub vehicle_count: u64,
}

pub fn filter_inactive_zones(zones: Vec<ZoneActivity>) -> Vec<ZoneActivity> {
    zones.into_iter().filter(|z| z.vehicle_count > 0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ZoneStats {
    pub zone: ZoneKey,
    pub vehicle_count: u64,
    pub traffic_class: TrafficClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub zones: Vec<ZoneStats>,
    pub mean: f64,
    /// Population standard deviation of the per-zone vehicle counts.
    pub std: f64,
}

impl Classification {
    pub fn medium_band_empty(&self) -> bool {
        self.std < self.mean
    }

    pub fn count(&self, class: TrafficClass) -> usize {
        self.zones.iter().filter(|z| z.traffic_class == class).count()
    }

    pub fn class_of(&self, zone: &ZoneKey) -> Option<TrafficClass> {
        self.zones
            .binary_search_by(|s| s.zone.cmp(zone))
            .ok()
            .map(|i| self.zones[i].traffic_class)
    }

    /// `geohash,numeric_id,n_z,class` rows, ordered by geohash.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "geohash,numeric_id,n_z,class")?;
        for z in &self.zones {
            writeln!(
                out,
                "{},{},{},{}",
                z.zone,
                z.zone.numeric_id(),
                z.vehicle_count,
                z.traffic_class
            )?;
        }
        Ok(())
    }
}

/// Classifies active zones by their vehicle counts; mean and standard deviation
/// are taken over the active zones only.
pub fn classify_zones(active: &[ZoneActivity]) -> Classification {
    let mut active: Vec<ZoneActivity> = active.iter().copied().filter(|z| z.vehicle_count > 0).collect();
    active.sort_by_key(|z| z.zone);
    let n = active.len() as f64;
    let (mean, std) = if active.is_empty() {
        (0.0, 0.0)
    } else {
        let mean = active.iter().map(|z| z.vehicle_count as f64).sum::<f64>() / n;
        let var = active
            .iter()
            .map(|z| (z.vehicle_count as f64 - mean).powi(2))
            .sum::<f64>()
            / n;
        (mean, var.sqrt())
    };
    if std < mean {
        log::warn!("standard deviation {std:.2} below mean {mean:.2}: medium traffic band is empty");
    }
    let zones = active
        .iter()
        .map(|z| ZoneStats {
            zone: z.zone,
            vehicle_count: z.vehicle_count,
            traffic_class: classify_traffic(z.vehicle_count, mean, std),
        })
        .collect();
    Classification { zones, mean, std }
}
