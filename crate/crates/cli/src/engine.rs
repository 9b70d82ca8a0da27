//! Immutable query snapshot shared by the CLI and the HTTP service.

use std::collections::BTreeMap;

use frostroute::model::{StatePrediction, Task};
use frostroute::route::{shortest_path, CostParams, RouteError};
use frostroute::safety::{ConditionSource, EdgeConditions};
use frostroute::{RateTables, RoadGraph, RoadState, TrainedModel};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum QueryError {
    /// Malformed or out-of-domain request.
    BadRequest(String),
    NoPath,
    /// A required component is not loaded.
    Unavailable(String),
}

impl std::fmt::Display for QueryError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::BadRequest(m) | Self::Unavailable(m) => f.write_str(m),
            Self::NoPath => f.write_str("no_path"),
        }
    }
}

impl std::error::Error for QueryError {}

impl QueryError {
    pub fn body(&self) -> Value {
        json!({ "error": self.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEdgeOut {
    pub edge_id: usize,
    pub state: RoadState,
    pub risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteResponse {
    /// `[lat, lon]` pairs.
    pub geometry: Vec<[f64; 2]>,
    pub total_time_s: f64,
    pub total_distance_m: f64,
    pub risk_sum: f64,
    pub alpha: f64,
    pub edges: Vec<RouteEdgeOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<RoadState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub votes: Option<BTreeMap<RoadState, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub safety_metric: Option<f64>,
}

/// Everything a query needs. Never mutated after construction.
pub struct Snapshot {
    pub graph: RoadGraph,
    pub conditions: EdgeConditions<f64>,
    pub tables: RateTables,
    pub classifier: Option<TrainedModel>,
    pub regressor: Option<TrainedModel>,
    pub default_alpha: f64,
    pub snap_radius_m: f64,
    risk: Vec<f64>,
}

impl Snapshot {
    pub fn new(
        graph: RoadGraph,
        conditions: EdgeConditions<f64>,
        tables: RateTables,
        classifier: Option<TrainedModel>,
        regressor: Option<TrainedModel>,
        default_alpha: f64,
        snap_radius_m: f64,
    ) -> anyhow::Result<Self> {
        conditions.validate(&graph).map_err(anyhow::Error::msg)?;
        for (m, task) in [(&classifier, Task::Classify), (&regressor, Task::Regress)] {
            if let Some(m) = m {
                anyhow::ensure!(m.task == task, "model loaded as {task:?} has task {:?}", m.task);
            }
        }
        let risk = conditions
            .0
            .iter()
            .map(|c| tables.safety_metric(c.friction_est, c.state_est))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            graph,
            conditions,
            tables,
            classifier,
            regressor,
            default_alpha,
            snap_radius_m,
            risk,
        })
    }

    fn snap(&self, p: (f64, f64), which: &str) -> Result<frostroute::NodeId, QueryError> {
        check_coord(p, which)?;
        self.graph
            .nearest_node(p, self.snap_radius_m)
            .map_err(|e| QueryError::BadRequest(e.to_string()))?
            .ok_or_else(|| {
                QueryError::BadRequest(format!("{which} is not within {} m of the road network", self.snap_radius_m))
            })
    }

    pub fn route(&self, from: (f64, f64), to: (f64, f64), alpha: Option<f64>) -> Result<RouteResponse, QueryError> {
        let alpha = alpha.unwrap_or(self.default_alpha);
        let params = CostParams::new(alpha, &self.tables).map_err(|e| QueryError::BadRequest(e.to_string()))?;
        let src = self.snap(from, "origin")?;
        let dst = self.snap(to, "destination")?;
        let route = shortest_path(&self.graph, &self.conditions, &self.tables, src, dst, &params)
            .map_err(|e| match e {
                RouteError::BadAlpha(_) | RouteError::UnknownNode(_) => QueryError::BadRequest(e.to_string()),
                other => QueryError::Unavailable(other.to_string()),
            })?
            .ok_or(QueryError::NoPath)?;
        Ok(RouteResponse {
            geometry: route.geometry(&self.graph).into_iter().map(|(a, b)| [a, b]).collect(),
            total_time_s: route.total_time_s,
            total_distance_m: route.total_distance_m,
            risk_sum: route.risk_sum,
            alpha,
            edges: route
                .per_edge
                .iter()
                .map(|e| RouteEdgeOut {
                    edge_id: e.edge_id,
                    state: e.state,
                    risk: e.risk,
                })
                .collect(),
        })
    }

    /// GeoJSON FeatureCollection of every directed edge.
    pub fn network(&self) -> Value {
        let features: Vec<Value> = self
            .graph
            .edges()
            .iter()
            .zip(&self.conditions.0)
            .zip(&self.risk)
            .map(|((e, c), risk)| {
                json!({
                    "type": "Feature",
                    "geometry": {
                        "type": "LineString",
                        "coordinates": e.geometry.iter().map(|&(lat, lon)| [lon, lat]).collect::<Vec<_>>(),
                    },
                    "properties": {
                        "edge_id": e.edge_id,
                        "highway": e.highway,
                        "state_est": c.state_est,
                        "risk": risk,
                        "source": source_name(c.source),
                    },
                })
            })
            .collect();
        json!({ "type": "FeatureCollection", "features": features })
    }

    /// Classifier state and regressor safety metric for named features.
    pub fn predict(&self, features: &BTreeMap<String, f64>) -> Result<PredictResponse, QueryError> {
        if self.classifier.is_none() && self.regressor.is_none() {
            return Err(QueryError::Unavailable("no model loaded".into()));
        }
        let mut out = PredictResponse {
            state: None,
            votes: None,
            safety_metric: None,
        };
        if let Some(m) = &self.classifier {
            let StatePrediction { state, votes } = m
                .predict_state(&feature_vector(m, features)?)
                .map_err(|e| QueryError::BadRequest(e.to_string()))?;
            out.state = Some(state);
            out.votes = Some(votes);
        }
        if let Some(m) = &self.regressor {
            let v = m
                .predict_value(&feature_vector(m, features)?)
                .map_err(|e| QueryError::BadRequest(e.to_string()))?;
            out.safety_metric = Some(v);
        }
        Ok(out)
    }
}

fn source_name(s: ConditionSource) -> &'static str {
    match s {
        ConditionSource::Measured => "measured",
        ConditionSource::Predicted => "predicted",
        ConditionSource::Default => "default",
    }
}

fn check_coord((lat, lon): (f64, f64), which: &str) -> Result<(), QueryError> {
    if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
        return Err(QueryError::BadRequest(format!("{which} latitude {lat} outside [-90, 90]")));
    }
    if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
        return Err(QueryError::BadRequest(format!("{which} longitude {lon} outside [-180, 180]")));
    }
    Ok(())
}

fn feature_vector(m: &TrainedModel, features: &BTreeMap<String, f64>) -> Result<Vec<f64>, QueryError> {
    if let Some(extra) = features.keys().find(|k| !m.feature_list.names().contains(k)) {
        return Err(QueryError::BadRequest(format!("unknown feature `{extra}`")));
    }
    m.feature_list
        .names()
        .iter()
        .map(|n| match features.get(n) {
            Some(v) if v.is_finite() => Ok(*v),
            Some(_) => Err(QueryError::BadRequest(format!("feature `{n}` is not finite"))),
            None => Err(QueryError::BadRequest(format!("missing feature `{n}`"))),
        })
        .collect()
}

/// Parses `lat,lon`.
pub fn parse_latlon(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected lat,lon, got `{s}`"))?;
    let lat = a.trim().parse::<f64>().map_err(|e| format!("latitude `{a}`: {e}"))?;
    let lon = b.trim().parse::<f64>().map_err(|e| format!("longitude `{b}`: {e}"))?;
    Ok((lat, lon))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latlon_parsing() {
        assert_eq!(parse_latlon("68.43,17.42"), Ok((68.43, 17.42)));
        assert_eq!(parse_latlon(" -17.5 , 3 "), Ok((-17.5, 3.0)));
        assert!(parse_latlon("68.43").is_err());
        assert!(parse_latlon("a,b").is_err());
    }

    #[test]
    fn coordinate_bounds() {
        assert!(check_coord((90.0, -180.0), "origin").is_ok());
        assert!(check_coord((90.5, 0.0), "origin").is_err());
        assert!(check_coord((0.0, f64::NAN), "origin").is_err());
    }

    #[test]
    fn error_bodies() {
        assert_eq!(QueryError::NoPath.body(), json!({"error": "no_path"}));
        assert_eq!(QueryError::BadRequest("x".into()).body(), json!({"error": "x"}));
    }
}
