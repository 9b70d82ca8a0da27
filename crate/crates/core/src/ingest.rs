//! Sensor CSV ingestion: parsing, validation, coordinate rounding and
//! per-location aggregation of RCM411-style road observations.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRICTION_MIN: f64 = 0.1;
pub const FRICTION_MAX: f64 = 0.81;
pub const WATER_MIN_MM: f64 = 0.0;
pub const WATER_MAX_MM: f64 = 3.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("mapped column `{column}` (field `{field}`) not found in header")]
    MissingColumn { field: String, column: String },
    #[error("unknown canonical field `{0}` in column mapping")]
    UnknownField(String),
    #[error("cannot round non-finite coordinate {0}")]
    NonFinite(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("column mapping: {0}")]
    Mapping(#[from] serde_json::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Surface class reported by the sensor, codes 1..=6.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RoadState {
    Dry,
    Moist,
    Wet,
    Icy,
    Snowy,
    Slushy,
}

impl RoadState {
    pub const ALL: [RoadState; 6] = [
        RoadState::Dry,
        RoadState::Moist,
        RoadState::Wet,
        RoadState::Icy,
        RoadState::Snowy,
        RoadState::Slushy,
    ];

    pub fn code(self) -> u8 {
        self as u8 + 1
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1..=6 => Some(Self::ALL[code as usize - 1]),
            _ => None,
        }
    }

    /// Zero-based position, `code() - 1`.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RoadState::Dry => "Dry",
            RoadState::Moist => "Moist",
            RoadState::Wet => "Wet",
            RoadState::Icy => "Icy",
            RoadState::Snowy => "Snowy",
            RoadState::Slushy => "Slushy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name().eq_ignore_ascii_case(name))
    }
}

impl fmt::Display for RoadState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Rounded coordinate cell, stored as integer ten-thousandths of a degree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub lat_e4: i32,
    pub lon_e4: i32,
}

impl Cell {
    /// Cell of an already rounded coordinate pair.
    pub fn of(lat: f64, lon: f64) -> Self {
        Self {
            lat_e4: (lat * 1e4).round() as i32,
            lon_e4: (lon * 1e4).round() as i32,
        }
    }

    pub fn lat(self) -> f64 {
        self.lat_e4 as f64 / 1e4
    }

    pub fn lon(self) -> f64 {
        self.lon_e4 as f64 / 1e4
    }

    pub fn latlon(self) -> (f64, f64) {
        (self.lat(), self.lon())
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}_{}", self.lat(), self.lon())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorRecord {
    pub timestamp: DateTime<Utc>,
    pub lat: f64,
    pub lon: f64,
    pub friction: f64,
    pub state: RoadState,
    pub ta_c: f64,
    pub tsurf_c: f64,
    pub water_mm: f64,
    pub speed: f64,
    pub height_m: f64,
    /// Raw accuracy cell, passed through verbatim.
    pub accuracy: Option<String>,
}

impl SensorRecord {
    pub fn cell(&self) -> Cell {
        Cell::of(self.lat, self.lon)
    }
}

/// One violated [`SensorRecord`] invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    FrictionOutOfRange,
    WaterOutOfRange,
    LatOutOfRange,
    LonOutOfRange,
    LatNotRounded,
    LonNotRounded,
    NonFinite(&'static str),
}

impl Violation {
    pub fn field(&self) -> &'static str {
        match self {
            Violation::FrictionOutOfRange => "friction",
            Violation::WaterOutOfRange => "water_mm",
            Violation::LatOutOfRange | Violation::LatNotRounded => "lat",
            Violation::LonOutOfRange | Violation::LonNotRounded => "lon",
            Violation::NonFinite(f) => f,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::FrictionOutOfRange => write!(f, "friction out of range [0.1,0.81]"),
            Violation::WaterOutOfRange => write!(f, "water_mm out of range [0,3]"),
            Violation::LatOutOfRange => write!(f, "lat out of range [-90,90]"),
            Violation::LonOutOfRange => write!(f, "lon out of range [-180,180]"),
            Violation::LatNotRounded => write!(f, "lat has more than 4 decimal digits"),
            Violation::LonNotRounded => write!(f, "lon has more than 4 decimal digits"),
            Violation::NonFinite(field) => write!(f, "{field} is not finite"),
        }
    }
}

/// Every invariant `r` violates; empty means valid.
pub fn validate_record(r: &SensorRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    for (name, v) in [
        ("lat", r.lat),
        ("lon", r.lon),
        ("friction", r.friction),
        ("ta_c", r.ta_c),
        ("tsurf_c", r.tsurf_c),
        ("water_mm", r.water_mm),
        ("speed", r.speed),
        ("height_m", r.height_m),
    ] {
        if !v.is_finite() {
            out.push(Violation::NonFinite(name));
        }
    }
    if !(FRICTION_MIN..=FRICTION_MAX).contains(&r.friction) {
        out.push(Violation::FrictionOutOfRange);
    }
    if !(WATER_MIN_MM..=WATER_MAX_MM).contains(&r.water_mm) {
        out.push(Violation::WaterOutOfRange);
    }
    if !(-90.0..=90.0).contains(&r.lat) {
        out.push(Violation::LatOutOfRange);
    } else if round_coordinate(r.lat).ok() != Some(r.lat) {
        out.push(Violation::LatNotRounded);
    }
    if !(-180.0..=180.0).contains(&r.lon) {
        out.push(Violation::LonOutOfRange);
    } else if round_coordinate(r.lon).ok() != Some(r.lon) {
        out.push(Violation::LonNotRounded);
    }
    out
}

/// Rounds to 4 decimal digits, half away from zero.
///
/// Rounding operates on the shortest decimal representation of `x`, so
/// `-17.42345` rounds as the decimal it was written as rather than as its
/// binary neighbour.
pub fn round_coordinate(x: f64) -> Result<f64, IngestError> {
    if !x.is_finite() {
        return Err(IngestError::NonFinite(x));
    }
    let text = format!("{}", x.abs());
    let Some((int_part, frac)) = text.split_once('.') else {
        return Ok(x);
    };
    if frac.len() <= 4 {
        return Ok(x);
    }
    let kept: u128 = format!("{int_part}{}", &frac[..4])
        .parse()
        .expect("digits only");
    let round_up = frac.as_bytes()[4] >= b'5';
    let scaled = kept + round_up as u128;
    let magnitude: f64 = format!("{}.{:04}", scaled / 10_000, scaled % 10_000)
        .parse()
        .expect("well-formed decimal");
    Ok(if x.is_sign_negative() { -magnitude } else { magnitude })
}

/// Canonical sensor fields, in canonical CSV column order.
pub const SENSOR_FIELDS: [&str; 11] = [
    "timestamp", "lat", "lon", "friction", "state", "ta_c", "tsurf_c", "water_mm", "speed",
    "height_m", "accuracy",
];

/// Maps canonical field names to source column names.
///
/// Fields absent from the map are looked up under their canonical name.
/// `accuracy` is optional: when neither a mapping nor a canonical column
/// exists it is left empty.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ColumnMapping(pub BTreeMap<String, String>);

impl ColumnMapping {
    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        let m: Self = serde_json::from_str(text)?;
        if let Some(bad) = m.0.keys().find(|k| !SENSOR_FIELDS.contains(&k.as_str())) {
            return Err(IngestError::UnknownField(bad.clone()));
        }
        Ok(m)
    }

    pub fn column_for<'a>(&'a self, field: &'a str) -> &'a str {
        self.0.get(field).map(String::as_str).unwrap_or(field)
    }
}

/// A rejected data row. `row` counts data rows from 1 (the header is row 0).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub row: usize,
    pub field: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParseOutcome {
    pub records: Vec<SensorRecord>,
    pub row_errors: Vec<RowError>,
}

impl ParseOutcome {
    pub fn data_rows(&self) -> usize {
        self.records.len() + self.row_errors.len()
    }
}

/// Accepts RFC 3339 with any fixed offset, or a naive timestamp taken as UTC.
pub fn parse_timestamp(s: &str) -> Option<DateTime<Utc>> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t.and_utc());
        }
    }
    None
}

struct Columns {
    idx: [Option<usize>; SENSOR_FIELDS.len()],
}

fn resolve_columns(headers: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Columns, IngestError> {
    let mut idx = [None; SENSOR_FIELDS.len()];
    for (slot, field) in idx.iter_mut().zip(SENSOR_FIELDS) {
        let column = mapping.column_for(field);
        *slot = headers.iter().position(|h| h.trim() == column);
        let optional = field == "accuracy" && !mapping.0.contains_key(field);
        if slot.is_none() && !optional {
            return Err(IngestError::MissingColumn {
                field: field.to_string(),
                column: column.to_string(),
            });
        }
    }
    Ok(Columns { idx })
}

fn row_err(row: usize, field: &str, reason: impl Into<String>) -> RowError {
    RowError {
        row,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn parse_row(row: usize, rec: &csv::StringRecord, cols: &Columns) -> Result<SensorRecord, RowError> {
    let cell = |i: usize| -> Result<&str, RowError> {
        let field = SENSOR_FIELDS[i];
        let col = cols.idx[i].expect("required column resolved");
        rec.get(col)
            .map(str::trim)
            .ok_or_else(|| row_err(row, field, "missing cell"))
    };
    let num = |i: usize| -> Result<f64, RowError> {
        let raw = cell(i)?;
        raw.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| row_err(row, SENSOR_FIELDS[i], format!("not a finite number: `{raw}`")))
    };

    let raw_ts = cell(0)?;
    let timestamp =
        parse_timestamp(raw_ts).ok_or_else(|| row_err(row, "timestamp", format!("bad timestamp `{raw_ts}`")))?;
    let lat = round_coordinate(num(1)?).expect("finite");
    let lon = round_coordinate(num(2)?).expect("finite");
    let friction = num(3)?;
    let raw_state = cell(4)?;
    let state = raw_state
        .parse::<u8>()
        .ok()
        .and_then(RoadState::from_code)
        .ok_or_else(|| row_err(row, "state", "state must be 1-6"))?;
    let accuracy = cols.idx[10].map(|col| rec.get(col).unwrap_or("").trim().to_string());
    let r = SensorRecord {
        timestamp,
        lat,
        lon,
        friction,
        state,
        ta_c: num(5)?,
        tsurf_c: num(6)?,
        water_mm: num(7)?,
        speed: num(8)?,
        height_m: num(9)?,
        accuracy,
    };
    let violations = validate_record(&r);
    if let Some(first) = violations.first() {
        let reason = violations
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join("; ");
        return Err(row_err(row, first.field(), reason));
    }
    Ok(r)
}

/// Parses sensor CSV. Each data row yields either one record or one row
/// error; only header problems are fatal.
pub fn parse_sensor_csv<R: Read>(source: R, mapping: &ColumnMapping) -> Result<ParseOutcome, IngestError> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let cols = resolve_columns(&headers, mapping)?;
    let mut out = ParseOutcome::default();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        match rec {
            Ok(rec) => match parse_row(row, &rec, &cols) {
                Ok(r) => out.records.push(r),
                Err(e) => out.row_errors.push(e),
            },
            Err(e) => out.row_errors.push(row_err(row, "", e.to_string())),
        }
    }
    Ok(out)
}

/// Writes records in canonical column order; the output parses back with
/// [`ColumnMapping::identity`].
pub fn write_sensor_csv<W: Write>(sink: W, records: &[SensorRecord]) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(SENSOR_FIELDS)?;
    for r in records {
        w.write_record([
            r.timestamp.to_rfc3339_opts(SecondsFormat::AutoSi, true),
            r.lat.to_string(),
            r.lon.to_string(),
            r.friction.to_string(),
            r.state.code().to_string(),
            r.ta_c.to_string(),
            r.tsurf_c.to_string(),
            r.water_mm.to_string(),
            r.speed.to_string(),
            r.height_m.to_string(),
            r.accuracy.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationAggregate {
    pub cell: Cell,
    pub n_obs: usize,
    pub mean_friction: f64,
    pub modal_state: RoadState,
    /// Observation count per state, indexed by `RoadState::index`.
    pub state_counts: [usize; 6],
    pub mean_ta_c: f64,
    pub mean_tsurf_c: f64,
    pub mean_water_mm: f64,
    pub mean_speed: f64,
    pub mean_height_m: f64,
    pub first_seen: DateTime<Utc>,
    pub last_seen: DateTime<Utc>,
}

/// Observations-per-cell statistics over an aggregation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageStats {
    pub cells: usize,
    pub min_obs: usize,
    pub max_obs: usize,
    pub mean_obs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregation {
    /// Sorted by cell.
    pub aggregates: Vec<LocationAggregate>,
    pub stats: Option<CoverageStats>,
}

/// Most frequent state; ties go to the lower state code.
pub fn modal_state(counts: &[usize; 6]) -> RoadState {
    let mut best = 0;
    for i in 1..6 {
        if counts[i] > counts[best] {
            best = i;
        }
    }
    RoadState::ALL[best]
}

/// Groups rounded records by cell.
pub fn aggregate_by_location(records: &[SensorRecord]) -> Aggregation {
    let mut groups: BTreeMap<Cell, Vec<&SensorRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.cell()).or_default().push(r);
    }
    let aggregates: Vec<LocationAggregate> = groups
        .into_iter()
        .map(|(cell, rs)| {
            let n = rs.len() as f64;
            let mean = |f: fn(&SensorRecord) -> f64| rs.iter().map(|r| f(r)).sum::<f64>() / n;
            let mut state_counts = [0usize; 6];
            for r in &rs {
                state_counts[r.state.index()] += 1;
            }
            LocationAggregate {
                cell,
                n_obs: rs.len(),
                mean_friction: mean(|r| r.friction),
                modal_state: modal_state(&state_counts),
                state_counts,
                mean_ta_c: mean(|r| r.ta_c),
                mean_tsurf_c: mean(|r| r.tsurf_c),
                mean_water_mm: mean(|r| r.water_mm),
                mean_speed: mean(|r| r.speed),
                mean_height_m: mean(|r| r.height_m),
                first_seen: rs.iter().map(|r| r.timestamp).min().expect("non-empty group"),
                last_seen: rs.iter().map(|r| r.timestamp).max().expect("non-empty group"),
            }
        })
        .collect();
    let stats = (!aggregates.is_empty()).then(|| CoverageStats {
        cells: aggregates.len(),
        min_obs: aggregates.iter().map(|a| a.n_obs).min().unwrap_or(0),
        max_obs: aggregates.iter().map(|a| a.n_obs).max().unwrap_or(0),
        mean_obs: records.len() as f64 / aggregates.len() as f64,
    });
    Aggregation { aggregates, stats }
}

/// Cell lookup over aggregates.
pub fn index_by_cell(aggregates: &[LocationAggregate]) -> HashMap<Cell, &LocationAggregate> {
    aggregates.iter().map(|a| (a.cell, a)).collect()
}
