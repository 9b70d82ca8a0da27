//! Application configuration file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use frostroute::roadgraph::{BBox, DEFAULT_SNAP_RADIUS_M};
use frostroute::safety::{ConditionConfig, RateTablesConfig};
use frostroute::weather::DEFAULT_JOIN_RADIUS_M;
use frostroute::{FeatureList, RateTables};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub sensor_csv: Option<PathBuf>,
    /// JSON object mapping canonical sensor field names to CSV headers.
    pub column_mapping: Option<PathBuf>,
    pub weather_csv: Option<PathBuf>,
    /// Weather provider definition (JSON).
    pub weather_provider: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub osm: Option<PathBuf>,
    /// Edge CSV export; preferred over `osm` when both are set.
    pub edges_csv: Option<PathBuf>,
    pub classifier_model: Option<PathBuf>,
    pub regressor_model: Option<PathBuf>,
    /// Edge conditions written by `assign`.
    pub conditions: Option<PathBuf>,
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub bind: String,
    pub port: u16,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1".into(),
            port: 8080,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub paths: Paths,
    /// Inline tables; the shipped sample tables when absent.
    pub rate_tables: Option<RateTablesConfig>,
    pub feature_list: FeatureList,
    pub k: usize,
    pub default_alpha: f64,
    pub snap_radius_m: f64,
    pub join_radius_m: f64,
    pub test_fraction: f64,
    pub seed: u64,
    pub bbox: Option<BBox>,
    pub conditions: ConditionConfig,
    pub server: ServerConfig,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            paths: Paths::default(),
            rate_tables: None,
            feature_list: FeatureList::default(),
            k: frostroute::model::DEFAULT_K,
            default_alpha: 0.0,
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
            join_radius_m: DEFAULT_JOIN_RADIUS_M,
            test_fraction: 0.2,
            seed: 42,
            bbox: None,
            conditions: ConditionConfig::default(),
            server: ServerConfig::default(),
        }
    }
}

impl AppConfig {
    /// Reads a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self =
            serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        if let Some(dir) = path.parent() {
            cfg.resolve_relative(dir);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let p = &mut self.paths;
        for slot in [
            &mut p.sensor_csv,
            &mut p.column_mapping,
            &mut p.weather_csv,
            &mut p.weather_provider,
            &mut p.cache_dir,
            &mut p.osm,
            &mut p.edges_csv,
            &mut p.classifier_model,
            &mut p.regressor_model,
            &mut p.conditions,
            &mut p.static_dir,
        ] {
            if let Some(v) = slot.as_mut() {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.tables()?;
        if self.k == 0 {
            bail!("k must satisfy k ≥ 1");
        }
        for (name, v) in [("snap_radius_m", self.snap_radius_m), ("join_radius_m", self.join_radius_m)] {
            if !(v.is_finite() && v > 0.0) {
                bail!("{name} must be positive");
            }
        }
        if !(self.default_alpha.is_finite() && self.default_alpha >= 0.0) {
            bail!("default_alpha must be finite and non-negative");
        }
        Ok(())
    }

    pub fn tables(&self) -> Result<RateTables> {
        match &self.rate_tables {
            Some(t) => RateTables::from_config(t).context("rate tables"),
            None => Ok(RateTables::sample()),
        }
    }
}

/// Existing file behind an optional path, or an error naming the key.
pub fn require<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    let Some(p) = path else {
        bail!("config key paths.{key} is not set");
    };
    if !p.exists() {
        bail!("paths.{key}: {} does not exist", p.display());
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = AppConfig::default();
        c.validate().unwrap();
        assert_eq!(c.tables().unwrap(), RateTables::sample());
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        let bad: AppConfig = serde_json::from_str(r#"{"k": 0}"#).unwrap();
        assert!(bad.validate().is_err());
        let bad: AppConfig = serde_json::from_str(r#"{"snap_radius_m": -1}"#).unwrap();
        assert!(bad.validate().is_err());
        assert!(serde_json::from_str::<AppConfig>(r#"{"alhpa": 1}"#).is_err());
        let mut tables = RateTables::sample().to_config();
        tables.friction_rates[0] = 0.0;
        let bad = AppConfig {
            rate_tables: Some(tables),
            ..AppConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut c: AppConfig = serde_json::from_str(r#"{"paths": {"osm": "a.osm", "edges_csv": "/abs/e.csv"}}"#).unwrap();
        c.resolve_relative(Path::new("/data/cfg"));
        assert_eq!(c.paths.osm, Some(PathBuf::from("/data/cfg/a.osm")));
        assert_eq!(c.paths.edges_csv, Some(PathBuf::from("/abs/e.csv")));
    }

    #[test]
    fn require_reports_the_key() {
        let err = require(&None, "osm").unwrap_err().to_string();
        assert!(err.contains("paths.osm"));
        let err = require(&Some(PathBuf::from("/no/such/file")), "osm").unwrap_err().to_string();
        assert!(err.contains("does not exist"));
    }
}
