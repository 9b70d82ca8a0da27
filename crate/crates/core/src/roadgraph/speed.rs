use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::GraphError;

/// Default speeds per highway class, km/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedTable {
    pub defaults: BTreeMap<String, f64>,
    /// Used for classes missing from `defaults`.
    pub fallback_kph: f64,
}

impl Default for SpeedTable {
    fn default() -> Self {
        let defaults = [
            ("motorway", 90.0),
            ("trunk", 80.0),
            ("primary", 60.0),
            ("secondary", 50.0),
            ("tertiary", 50.0),
            ("unclassified", 40.0),
            ("residential", 30.0),
            ("service", 20.0),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        Self {
            defaults,
            fallback_kph: 30.0,
        }
    }
}

impl SpeedTable {
    pub fn with_override(mut self, highway: &str, kph: f64) -> Self {
        self.defaults.insert(highway.to_string(), kph);
        self
    }

    /// Table speed for a class; `_link` classes inherit their parent's
    /// value unless overridden themselves.
    pub fn lookup(&self, highway: &str) -> Option<f64> {
        self.defaults.get(highway).copied().or_else(|| {
            highway
                .strip_suffix("_link")
                .and_then(|parent| self.defaults.get(parent).copied())
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedTime {
    pub speed_kph: f64,
    pub travel_time_s: f64,
    pub warning: Option<String>,
}

/// Numeric km/h value of an OSM `maxspeed` tag (`"50"`, `"50 km/h"`,
/// `"30 mph"`); symbolic values such as `"NO:urban"` yield `None`.
pub fn parse_maxspeed(tag: &str) -> Option<f64> {
    let tag = tag.trim();
    let end = tag
        .find(|c: char| !(c.is_ascii_digit() || c == '.'))
        .unwrap_or(tag.len());
    let value: f64 = tag[..end].parse().ok()?;
    let unit = tag[end..].trim();
    let kph = match unit {
        "" | "km/h" | "kmh" | "kph" => value,
        "mph" => value * 1.609344,
        _ => return None,
    };
    (kph > 0.0 && kph.is_finite()).then_some(kph)
}

#[inline]
pub fn travel_time_s(length_m: f64, speed_kph: f64) -> f64 {
    length_m / (speed_kph / 3.6)
}

pub fn derive_speed_and_time(
    highway: &str,
    maxspeed: Option<&str>,
    length_m: f64,
    table: &SpeedTable,
) -> Result<SpeedTime, GraphError> {
    if !(length_m > 0.0 && length_m.is_finite()) {
        return Err(GraphError::Invariant(format!("length_m must be positive, got {length_m}")));
    }
    let mut warning = None;
    let speed_kph = match maxspeed.and_then(parse_maxspeed) {
        Some(v) => v,
        None => table.lookup(highway).unwrap_or_else(|| {
            warning = Some(format!(
                "unknown highway class `{highway}`, using fallback {} km/h",
                table.fallback_kph
            ));
            table.fallback_kph
        }),
    };
    Ok(SpeedTime {
        speed_kph,
        travel_time_s: travel_time_s(length_m, speed_kph),
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_examples() {
        let t = SpeedTable::default();
        let r = derive_speed_and_time("residential", None, 100.0, &t).unwrap();
        assert_eq!(r.speed_kph, 30.0);
        assert!((r.travel_time_s - 12.0).abs() < 1e-12);

        let r = derive_speed_and_time("primary", Some("70"), 1000.0, &t).unwrap();
        assert_eq!(r.speed_kph, 70.0);
        // 1000 / (70 / 3.6) = 360 / 7
        assert!((r.travel_time_s - 360.0 / 7.0).abs() < 1e-9);
        assert!((r.travel_time_s - 51.43).abs() < 5e-3);

        let over = SpeedTable::default().with_override("residential", 36.0);
        let r = derive_speed_and_time("residential", None, 36.0, &over).unwrap();
        assert!((r.travel_time_s - 3.6).abs() < 1e-12);
    }

    #[test]
    fn links_and_fallback() {
        let t = SpeedTable::default();
        assert_eq!(t.lookup("motorway_link"), Some(90.0));
        assert_eq!(t.lookup("primary_link"), Some(60.0));
        let r = derive_speed_and_time("track", None, 30.0, &t).unwrap();
        assert_eq!(r.speed_kph, 30.0);
        assert!(r.warning.is_some());
        assert!(derive_speed_and_time("residential", None, 0.0, &t).is_err());
    }

    #[test]
    fn maxspeed_forms() {
        assert_eq!(parse_maxspeed("50"), Some(50.0));
        assert_eq!(parse_maxspeed("50 km/h"), Some(50.0));
        assert!((parse_maxspeed("30 mph").unwrap() - 48.28032).abs() < 1e-9);
        assert_eq!(parse_maxspeed("NO:urban"), None);
        assert_eq!(parse_maxspeed("none"), None);
        assert_eq!(parse_maxspeed("0"), None);
    }
}
