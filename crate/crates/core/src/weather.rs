//! Daily weather per rounded cell: CSV loading, a cached HTTP provider,
//! and the join that turns sensor records into model feature rows.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_m;
use crate::ingest::{round_coordinate, Cell, RoadState, RowError, SensorRecord};

/// Default join radius between a record and a weather cell.
pub const DEFAULT_JOIN_RADIUS_M: f64 = 5_000.0;

#[derive(Debug, Error)]
pub enum WeatherError {
    #[error("weather csv is missing column `{0}`")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("http request failed (status {status:?}): {message}")]
    Http { status: Option<u16>, message: String },
    #[error("provider response does not match field map: {0}")]
    Schema(String),
    #[error("no cached weather for {cell} on {date}")]
    NotFound { cell: Cell, date: NaiveDate },
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("duplicate feature `{0}`")]
    DuplicateFeature(String),
    #[error("feature list is empty")]
    EmptyFeatureList,
    #[error("cache io: {0}")]
    Io(#[from] std::io::Error),
    #[error("cache document: {0}")]
    Json(#[from] serde_json::Error),
}

impl WeatherError {
    /// Transient failures worth retrying.
    pub fn is_retryable(&self) -> bool {
        match self {
            WeatherError::Http { status, .. } => status.is_none_or(|s| s == 429 || s >= 500),
            _ => false,
        }
    }
}

/// Numeric weather fields, in canonical CSV column order (after `lat,lon,date`).
pub const WEATHER_FIELDS: [&str; 17] = [
    "maxtemp_c",
    "mintemp_c",
    "temp_c",
    "dewpoint_c",
    "heatindex_c",
    "total_snow_cm",
    "sun_hour",
    "uv_index",
    "uv",
    "wind_gust_kmph",
    "windspeed_kmph",
    "winddir_degree",
    "cloudcover",
    "humidity",
    "precip_mm",
    "pressure",
    "visibility",
];

/// Sensor-side feature names available to the join.
pub const SENSOR_FEATURES: [&str; 5] = ["ta_c", "tsurf_c", "water_mm", "speed", "height_m"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeatherDaily {
    pub cell: Cell,
    pub date: NaiveDate,
    pub maxtemp_c: f64,
    pub mintemp_c: f64,
    pub temp_c: f64,
    pub dewpoint_c: f64,
    pub heatindex_c: f64,
    pub total_snow_cm: f64,
    pub sun_hour: f64,
    pub uv_index: f64,
    pub uv: f64,
    pub wind_gust_kmph: f64,
    pub windspeed_kmph: f64,
    pub winddir_degree: f64,
    pub cloudcover: f64,
    pub humidity: f64,
    pub precip_mm: f64,
    pub pressure: f64,
    pub visibility: f64,
}

impl WeatherDaily {
    pub fn field(&self, name: &str) -> Option<f64> {
        Some(match name {
            "maxtemp_c" => self.maxtemp_c,
            "mintemp_c" => self.mintemp_c,
            "temp_c" => self.temp_c,
            "dewpoint_c" => self.dewpoint_c,
            "heatindex_c" => self.heatindex_c,
            "total_snow_cm" => self.total_snow_cm,
            "sun_hour" => self.sun_hour,
            "uv_index" => self.uv_index,
            "uv" => self.uv,
            "wind_gust_kmph" => self.wind_gust_kmph,
            "windspeed_kmph" => self.windspeed_kmph,
            "winddir_degree" => self.winddir_degree,
            "cloudcover" => self.cloudcover,
            "humidity" => self.humidity,
            "precip_mm" => self.precip_mm,
            "pressure" => self.pressure,
            "visibility" => self.visibility,
            _ => return None,
        })
    }

    fn from_values(cell: Cell, date: NaiveDate, v: &[f64; 17]) -> Self {
        Self {
            cell,
            date,
            maxtemp_c: v[0],
            mintemp_c: v[1],
            temp_c: v[2],
            dewpoint_c: v[3],
            heatindex_c: v[4],
            total_snow_cm: v[5],
            sun_hour: v[6],
            uv_index: v[7],
            uv: v[8],
            wind_gust_kmph: v[9],
            windspeed_kmph: v[10],
            winddir_degree: v[11],
            cloudcover: v[12],
            humidity: v[13],
            precip_mm: v[14],
            pressure: v[15],
            visibility: v[16],
        }
    }

    /// Violated invariants as human-readable reasons.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for name in WEATHER_FIELDS {
            if !self.field(name).is_some_and(f64::is_finite) {
                out.push(format!("{name} is not finite"));
            }
        }
        if self.mintemp_c > self.maxtemp_c {
            out.push("mintemp_c exceeds maxtemp_c".into());
        }
        for (name, v) in [("cloudcover", self.cloudcover), ("humidity", self.humidity)] {
            if !(0.0..=100.0).contains(&v) {
                out.push(format!("{name} out of range [0,100]"));
            }
        }
        if self.total_snow_cm < 0.0 {
            out.push("total_snow_cm is negative".into());
        }
        if self.precip_mm < 0.0 {
            out.push("precip_mm is negative".into());
        }
        if !(0.0..360.0).contains(&self.winddir_degree) {
            out.push("winddir_degree out of range [0,360)".into());
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeatherLoad {
    pub entries: Vec<WeatherDaily>,
    pub row_errors: Vec<RowError>,
}

/// Loads canonical weather CSV (`lat,lon,date,` then [`WEATHER_FIELDS`]).
pub fn load_weather_csv<R: Read>(source: R) -> Result<WeatherLoad, WeatherError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| WeatherError::MissingColumn(name.to_string()))
    };
    let lat_col = col("lat")?;
    let lon_col = col("lon")?;
    let date_col = col("date")?;
    let field_cols = WEATHER_FIELDS.map(col);
    let mut field_idx = [0usize; 17];
    for (slot, c) in field_idx.iter_mut().zip(field_cols) {
        *slot = c?;
    }

    let mut out = WeatherLoad::default();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let err = |field: &str, reason: String| RowError {
            row,
            field: field.to_string(),
            reason,
        };
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.row_errors.push(err("", e.to_string()));
                continue;
            }
        };
        let num = |c: usize, name: &str| -> Result<f64, RowError> {
            let raw = rec.get(c).map(str::trim).unwrap_or("");
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(name, format!("not a finite number: `{raw}`")))
        };
        let parsed = (|| {
            let lat = num(lat_col, "lat")?;
            let lon = num(lon_col, "lon")?;
            if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
                return Err(err("lat", "coordinate out of range".into()));
            }
            let raw_date = rec.get(date_col).map(str::trim).unwrap_or("");
            let date = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
                .map_err(|_| err("date", format!("bad date `{raw_date}`")))?;
            let mut values = [0.0; 17];
            for (k, (&c, name)) in field_idx.iter().zip(WEATHER_FIELDS).enumerate() {
                values[k] = num(c, name)?;
            }
            let cell = Cell::of(
                round_coordinate(lat).expect("finite"),
                round_coordinate(lon).expect("finite"),
            );
            let w = WeatherDaily::from_values(cell, date, &values);
            let v = w.violations();
            if !v.is_empty() {
                let field = v[0].split_whitespace().next().unwrap_or("").to_string();
                return Err(err(&field, v.join("; ")));
            }
            Ok(w)
        })();
        match parsed {
            Ok(w) => out.entries.push(w),
            Err(e) => out.row_errors.push(e),
        }
    }
    Ok(out)
}

pub fn write_weather_csv<W: Write>(sink: W, entries: &[WeatherDaily]) -> Result<(), WeatherError> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["lat", "lon", "date"];
    header.extend(WEATHER_FIELDS);
    w.write_record(&header)?;
    for e in entries {
        let mut row = vec![e.cell.lat().to_string(), e.cell.lon().to_string(), e.date.to_string()];
        row.extend(WEATHER_FIELDS.iter().map(|f| e.field(f).expect("known field").to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(WeatherError::Io)
}

/// Remote weather provider.
///
/// `base_url` may contain `{lat}`, `{lon}`, `{date}` and `{key}`
/// placeholders. `field_map` maps every name in [`WEATHER_FIELDS`] to a
/// JSON pointer (RFC 6901) into the response document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    #[serde(default = "default_provider_id")]
    pub id: String,
    pub base_url: String,
    #[serde(default)]
    pub api_key_env_var: Option<String>,
    pub field_map: BTreeMap<String, String>,
}

fn default_provider_id() -> String {
    "default".to_string()
}

impl ProviderConfig {
    pub fn request_url(&self, cell: Cell, date: NaiveDate) -> String {
        let key = self
            .api_key_env_var
            .as_deref()
            .and_then(|v| std::env::var(v).ok())
            .unwrap_or_default();
        self.base_url
            .replace("{lat}", &cell.lat().to_string())
            .replace("{lon}", &cell.lon().to_string())
            .replace("{date}", &date.to_string())
            .replace("{key}", &key)
    }

    /// Extracts a [`WeatherDaily`] from a provider response body.
    pub fn map_response(&self, body: &str, cell: Cell, date: NaiveDate) -> Result<WeatherDaily, WeatherError> {
        let doc: serde_json::Value =
            serde_json::from_str(body).map_err(|e| WeatherError::Schema(format!("response is not JSON: {e}")))?;
        let mut values = [0.0; 17];
        for (slot, name) in values.iter_mut().zip(WEATHER_FIELDS) {
            let pointer = self
                .field_map
                .get(name)
                .ok_or_else(|| WeatherError::Schema(format!("field map has no entry for `{name}`")))?;
            let v = doc
                .pointer(pointer)
                .ok_or_else(|| WeatherError::Schema(format!("`{name}`: nothing at `{pointer}`")))?;
            *slot = match v {
                serde_json::Value::Number(n) => n.as_f64(),
                serde_json::Value::String(s) => s.trim().parse().ok(),
                _ => None,
            }
            .filter(|x: &f64| x.is_finite())
            .ok_or_else(|| WeatherError::Schema(format!("`{name}`: `{v}` is not numeric")))?;
        }
        let w = WeatherDaily::from_values(cell, date, &values);
        let v = w.violations();
        if !v.is_empty() {
            return Err(WeatherError::Schema(v.join("; ")));
        }
        Ok(w)
    }
}

#[derive(Debug, Clone)]
pub struct TransportError {
    pub status: Option<u16>,
    pub message: String,
}

/// Minimal blocking GET used by [`WeatherSource`].
pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<String, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Self {
        Self {
            client: reqwest::blocking::Client::new(),
        }
    }
}

impl Default for ReqwestTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for ReqwestTransport {
    fn get(&self, url: &str) -> Result<String, TransportError> {
        let resp = self.client.get(url).send().map_err(|e| TransportError {
            status: e.status().map(|s| s.as_u16()),
            message: e.to_string(),
        })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(TransportError {
                status: Some(status.as_u16()),
                message: format!("HTTP {status}"),
            });
        }
        resp.text().map_err(|e| TransportError {
            status: Some(status.as_u16()),
            message: e.to_string(),
        })
    }
}

/// File cache: `<root>/<provider>/<lat>_<lon>/<date>.json`.
#[derive(Debug, Clone)]
pub struct WeatherCache {
    root: PathBuf,
}

impl WeatherCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn path_for(&self, provider: &str, cell: Cell, date: NaiveDate) -> PathBuf {
        self.root
            .join(provider)
            .join(cell.to_string())
            .join(format!("{date}.json"))
    }

    pub fn get(&self, provider: &str, cell: Cell, date: NaiveDate) -> Result<Option<WeatherDaily>, WeatherError> {
        let path = self.path_for(provider, cell, date);
        match fs::read_to_string(&path) {
            Ok(text) => Ok(Some(serde_json::from_str(&text)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }

    /// Writes via a temporary file and an atomic rename.
    pub fn put(&self, provider: &str, w: &WeatherDaily) -> Result<(), WeatherError> {
        let path = self.path_for(provider, w.cell, w.date);
        let dir = path.parent().expect("cache path has a parent");
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        serde_json::to_writer_pretty(&mut tmp, w)?;
        tmp.flush()?;
        tmp.persist(&path).map_err(|e| WeatherError::Io(e.error))?;
        Ok(())
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

/// Cache-first access to daily weather. Without a provider only the
/// cache is consulted.
pub struct WeatherSource {
    provider_id: String,
    provider: Option<ProviderConfig>,
    cache: WeatherCache,
    transport: Box<dyn HttpTransport>,
}

impl WeatherSource {
    pub fn online(provider: ProviderConfig, cache: WeatherCache, transport: Box<dyn HttpTransport>) -> Self {
        Self {
            provider_id: provider.id.clone(),
            provider: Some(provider),
            cache,
            transport,
        }
    }

    pub fn offline(provider_id: impl Into<String>, cache: WeatherCache) -> Self {
        Self {
            provider_id: provider_id.into(),
            provider: None,
            cache,
            transport: Box::new(ReqwestTransport::new()),
        }
    }

    pub fn fetch_daily_weather(&self, cell: Cell, date: NaiveDate) -> Result<WeatherDaily, WeatherError> {
        if let Some(hit) = self.cache.get(&self.provider_id, cell, date)? {
            return Ok(hit);
        }
        let Some(provider) = &self.provider else {
            return Err(WeatherError::NotFound { cell, date });
        };
        let body = self
            .transport
            .get(&provider.request_url(cell, date))
            .map_err(|e| WeatherError::Http {
                status: e.status,
                message: e.message,
            })?;
        let w = provider.map_response(&body, cell, date)?;
        self.cache.put(&self.provider_id, &w)?;
        Ok(w)
    }
}

/// Ordered, validated list of model feature names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct FeatureList(Vec<String>);

impl FeatureList {
    pub fn new<I, S>(names: I) -> Result<Self, WeatherError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.is_empty() {
            return Err(WeatherError::EmptyFeatureList);
        }
        for (i, n) in names.iter().enumerate() {
            if !SENSOR_FEATURES.contains(&n.as_str()) && !WEATHER_FIELDS.contains(&n.as_str()) {
                return Err(WeatherError::UnknownFeature(n.clone()));
            }
            if names[..i].contains(n) {
                return Err(WeatherError::DuplicateFeature(n.clone()));
            }
        }
        Ok(Self(names))
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn needs_weather(&self) -> bool {
        self.0.iter().any(|n| WEATHER_FIELDS.contains(&n.as_str()))
    }

    /// Assembles a feature vector from sensor-side values and optional
    /// weather. Returns `None` when a weather feature is needed but absent.
    pub fn assemble(&self, sensor: &SensorFeatures, weather: Option<&WeatherDaily>) -> Option<Vec<f64>> {
        self.0
            .iter()
            .map(|n| sensor.get(n).or_else(|| weather.and_then(|w| w.field(n))))
            .collect()
    }
}

impl Default for FeatureList {
    fn default() -> Self {
        Self(SENSOR_FEATURES.iter().map(|s| s.to_string()).collect())
    }
}

impl TryFrom<Vec<String>> for FeatureList {
    type Error = WeatherError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<FeatureList> for Vec<String> {
    fn from(f: FeatureList) -> Self {
        f.0
    }
}

/// Sensor-side inputs of a feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorFeatures {
    pub ta_c: f64,
    pub tsurf_c: f64,
    pub water_mm: f64,
    pub speed: f64,
    pub height_m: f64,
}

impl SensorFeatures {
    pub fn get(&self, name: &str) -> Option<f64> {
        Some(match name {
            "ta_c" => self.ta_c,
            "tsurf_c" => self.tsurf_c,
            "water_mm" => self.water_mm,
            "speed" => self.speed,
            "height_m" => self.height_m,
            _ => return None,
        })
    }
}

impl From<&SensorRecord> for SensorFeatures {
    fn from(r: &SensorRecord) -> Self {
        Self {
            ta_c: r.ta_c,
            tsurf_c: r.tsurf_c,
            water_mm: r.water_mm,
            speed: r.speed,
            height_m: r.height_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    /// Index of the source record.
    pub record: usize,
    pub features: Vec<f64>,
    pub label_state: Option<RoadState>,
    pub label_friction: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct JoinOutcome {
    pub rows: Vec<FeatureRow>,
    /// Indices of records without usable weather.
    pub unmatched: Vec<usize>,
}

/// Nearest same-date weather entry within `radius_m`; equidistant cells
/// resolve to the lexicographically lower `(lat, lon)`.
pub fn nearest_weather<'a>(
    candidates: &[&'a WeatherDaily],
    at: (f64, f64),
    radius_m: f64,
) -> Option<&'a WeatherDaily> {
    candidates
        .iter()
        .map(|w| (haversine_m(at, w.cell.latlon()), *w))
        .filter(|(d, _)| *d <= radius_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cell.cmp(&b.1.cell)))
        .map(|(_, w)| w)
}

/// Joins records onto same-date weather and assembles feature rows.
///
/// When `features` uses only sensor fields no weather is required and
/// every record yields a row.
pub fn join_features(
    records: &[SensorRecord],
    weather: &[WeatherDaily],
    features: &FeatureList,
    radius_m: f64,
) -> JoinOutcome {
    let mut by_date: HashMap<NaiveDate, Vec<&WeatherDaily>> = HashMap::new();
    for w in weather {
        by_date.entry(w.date).or_default().push(w);
    }
    let needs_weather = features.needs_weather();
    let mut out = JoinOutcome::default();
    for (i, r) in records.iter().enumerate() {
        let w = if needs_weather {
            by_date
                .get(&r.timestamp.date_naive())
                .and_then(|c| nearest_weather(c, (r.lat, r.lon), radius_m))
        } else {
            None
        };
        match features.assemble(&SensorFeatures::from(r), w) {
            Some(fv) if fv.iter().all(|x| x.is_finite()) => out.rows.push(FeatureRow {
                record: i,
                features: fv,
                label_state: Some(r.state),
                label_friction: Some(r.friction),
            }),
            _ => out.unmatched.push(i),
        }
    }
    out
}
