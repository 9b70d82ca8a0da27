//! Safety metric: accident rate by friction bucket times accident rate by
//! road state (larger is more dangerous), and per-edge condition estimates.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_m;
use crate::ingest::{modal_state, LocationAggregate, RoadState, FRICTION_MAX, FRICTION_MIN};
use crate::model::{ModelError, TrainedModel};
use crate::roadgraph::{EdgeId, GraphError, RoadEdge, RoadGraph};
use crate::scalar::Scalar;
use crate::weather::{nearest_weather, FeatureList, SensorFeatures, WeatherDaily};

/// Shipped sample tables (friction intervals after the VTI friction/accident
/// pattern, state multipliers relative to Dry).
pub const SAMPLE_RATES_JSON: &str = include_str!("../../../config/rates.sample.json");

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("friction table must span [0.1, 0.81], got [{first}, {last}]")]
    Gap { first: f64, last: f64 },
    #[error("friction breakpoints overlap at position {0}")]
    Overlap(usize),
    #[error("friction breakpoints are reversed")]
    Reversed,
    #[error("friction breakpoint repeated at position {0}")]
    Repeated(usize),
    #[error("{breakpoints} breakpoints need {} rates, got {rates}", breakpoints - 1)]
    LengthMismatch { breakpoints: usize, rates: usize },
    #[error("friction rates must not increase with friction (bucket {0})")]
    NonMonotone(usize),
    #[error("rate must be strictly positive: {0}")]
    NonPositive(String),
    #[error("state table is missing {0}")]
    MissingState(&'static str),
    #[error("unknown state `{0}` in state table")]
    UnknownState(String),
    #[error("Dry must have the lowest state rate, {0} is lower")]
    DryNotLowest(&'static str),
    #[error("rate table json: {0}")]
    Json(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum SafetyError {
    #[error("friction {0} outside [0.1, 0.81]")]
    FrictionOutOfRange(f64),
}

/// Piecewise-constant accident rate over half-open friction buckets
/// `[b_i, b_{i+1})`; the top bucket is closed at 0.81.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionRateTable<T> {
    breakpoints: Vec<T>,
    rates: Vec<T>,
}

impl<T: Scalar> FrictionRateTable<T> {
    pub fn new(breakpoints: Vec<T>, rates: Vec<T>) -> Result<Self, TableError> {
        let n = breakpoints.len();
        if n < 2 || rates.len() != n - 1 {
            return Err(TableError::LengthMismatch {
                breakpoints: n,
                rates: rates.len(),
            });
        }
        if breakpoints[0] > breakpoints[n - 1] {
            return Err(TableError::Reversed);
        }
        for i in 1..n {
            if breakpoints[i] == breakpoints[i - 1] {
                return Err(TableError::Repeated(i));
            }
            if breakpoints[i] < breakpoints[i - 1] {
                return Err(TableError::Overlap(i));
            }
        }
        if breakpoints[0] != T::lit(FRICTION_MIN) || breakpoints[n - 1] != T::lit(FRICTION_MAX) {
            return Err(TableError::Gap {
                first: breakpoints[0].as_f64(),
                last: breakpoints[n - 1].as_f64(),
            });
        }
        for (i, r) in rates.iter().enumerate() {
            if *r <= T::zero() || !r.is_finite() {
                return Err(TableError::NonPositive(format!("friction bucket {i}")));
            }
            if i > 0 && *r > rates[i - 1] {
                return Err(TableError::NonMonotone(i));
            }
        }
        Ok(Self { breakpoints, rates })
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn rates(&self) -> &[T] {
        &self.rates
    }

    pub fn rate_for_friction(&self, f: T) -> Result<T, SafetyError> {
        let n = self.breakpoints.len();
        if !(f >= self.breakpoints[0] && f <= self.breakpoints[n - 1]) {
            return Err(SafetyError::FrictionOutOfRange(f.as_f64()));
        }
        // number of breakpoints <= f, at least 1
        let above = self.breakpoints.partition_point(|b| *b <= f);
        Ok(self.rates[(above - 1).min(self.rates.len() - 1)])
    }
}

/// Accident rate per road state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateRateTable<T> {
    rates: [T; 6],
}

impl<T: Scalar> StateRateTable<T> {
    pub fn new(rates: [T; 6]) -> Result<Self, TableError> {
        for s in RoadState::ALL {
            let r = rates[s.index()];
            if r <= T::zero() || !r.is_finite() {
                return Err(TableError::NonPositive(s.name().to_string()));
            }
            if r < rates[RoadState::Dry.index()] {
                return Err(TableError::DryNotLowest(s.name()));
            }
        }
        Ok(Self { rates })
    }

    pub fn from_map(map: &BTreeMap<String, f64>) -> Result<Self, TableError> {
        if let Some(bad) = map.keys().find(|k| RoadState::from_name(k).is_none()) {
            return Err(TableError::UnknownState(bad.clone()));
        }
        let mut rates = [T::zero(); 6];
        for s in RoadState::ALL {
            let v = map
                .iter()
                .find(|(k, _)| RoadState::from_name(k) == Some(s))
                .map(|(_, v)| *v)
                .ok_or(TableError::MissingState(s.name()))?;
            rates[s.index()] = T::lit(v);
        }
        Self::new(rates)
    }

    #[inline]
    pub fn rate_for_state(&self, s: RoadState) -> T {
        self.rates[s.index()]
    }

    /// State with the highest rate, lowest code on ties.
    pub fn riskiest_state(&self) -> RoadState {
        let mut best = RoadState::Dry;
        for s in RoadState::ALL {
            if self.rate_for_state(s) > self.rate_for_state(best) {
                best = s;
            }
        }
        best
    }
}

/// On-disk rate-table configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTablesConfig {
    pub friction_breakpoints: Vec<f64>,
    pub friction_rates: Vec<f64>,
    pub state_rates: BTreeMap<String, f64>,
    #[serde(default)]
    pub exposure_unit: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateTables<T> {
    pub friction: FrictionRateTable<T>,
    pub states: StateRateTable<T>,
    pub exposure_unit: String,
}

impl<T: Scalar> RateTables<T> {
    pub fn from_config(cfg: &RateTablesConfig) -> Result<Self, TableError> {
        Ok(Self {
            friction: FrictionRateTable::new(
                cfg.friction_breakpoints.iter().map(|&b| T::lit(b)).collect(),
                cfg.friction_rates.iter().map(|&r| T::lit(r)).collect(),
            )?,
            states: StateRateTable::from_map(&cfg.state_rates)?,
            exposure_unit: cfg.exposure_unit.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TableError> {
        let cfg: RateTablesConfig = serde_json::from_str(text).map_err(|e| TableError::Json(e.to_string()))?;
        Self::from_config(&cfg)
    }

    pub fn sample() -> Self {
        Self::from_json(SAMPLE_RATES_JSON).expect("shipped sample tables are valid")
    }

    pub fn to_config(&self) -> RateTablesConfig {
        RateTablesConfig {
            friction_breakpoints: self.friction.breakpoints.iter().map(|b| b.as_f64()).collect(),
            friction_rates: self.friction.rates.iter().map(|r| r.as_f64()).collect(),
            state_rates: RoadState::ALL
                .iter()
                .map(|s| (s.name().to_string(), self.states.rate_for_state(*s).as_f64()))
                .collect(),
            exposure_unit: self.exposure_unit.clone(),
        }
    }

    /// `rate_for_friction(f) × rate_for_state(s)`.
    pub fn safety_metric(&self, f: T, s: RoadState) -> Result<T, SafetyError> {
        Ok(self.friction.rate_for_friction(f)? * self.states.rate_for_state(s))
    }

    /// Risk of the best possible surface, `safety_metric(0.81, Dry)`.
    pub fn reference_risk(&self) -> T {
        self.safety_metric(T::lit(FRICTION_MAX), RoadState::Dry)
            .expect("0.81 is inside every valid table")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConditionSource {
    Measured,
    Predicted,
    Default,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeCondition<T> {
    pub edge_id: EdgeId,
    pub friction_est: T,
    pub state_est: RoadState,
    pub source: ConditionSource,
}

/// How unmeasured edges without a prediction are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Fallback {
    /// `default_friction` and `default_state`.
    #[default]
    Optimistic,
    /// Lowest friction and the state with the highest rate.
    Pessimistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditionConfig {
    pub default_friction: f64,
    pub default_state: RoadState,
    /// Friction assumed for a predicted state, by state name.
    pub friction_by_state: BTreeMap<RoadState, f64>,
    pub fallback: Fallback,
}

impl Default for ConditionConfig {
    fn default() -> Self {
        use RoadState::*;
        Self {
            default_friction: 0.8,
            default_state: Dry,
            friction_by_state: [(Dry, 0.8), (Moist, 0.7), (Wet, 0.6), (Icy, 0.15), (Snowy, 0.3), (Slushy, 0.4)]
                .into_iter()
                .collect(),
            fallback: Fallback::Optimistic,
        }
    }
}

/// Supplies a model feature vector for an edge that has no measurement.
pub trait EdgeFeatureSource {
    fn features(&self, edge: &RoadEdge, features: &FeatureList) -> Option<Vec<f64>>;
}

/// No features anywhere; unmeasured edges fall back to defaults.
pub struct NoFeatures;

impl EdgeFeatureSource for NoFeatures {
    fn features(&self, _edge: &RoadEdge, _features: &FeatureList) -> Option<Vec<f64>> {
        None
    }
}

/// Features taken from the nearest location aggregate to the edge's middle
/// vertex, plus the latest weather within the join radius of that cell.
pub struct NearestAggregateFeatures<'a> {
    pub aggregates: &'a [LocationAggregate],
    pub weather: &'a [WeatherDaily],
    pub radius_m: f64,
    pub weather_radius_m: f64,
}

impl EdgeFeatureSource for NearestAggregateFeatures<'_> {
    fn features(&self, edge: &RoadEdge, features: &FeatureList) -> Option<Vec<f64>> {
        let mid = edge.geometry[edge.geometry.len() / 2];
        let agg = self
            .aggregates
            .iter()
            .map(|a| (haversine_m(mid, a.cell.latlon()), a))
            .filter(|(d, _)| *d <= self.radius_m)
            .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cell.cmp(&b.1.cell)))?
            .1;
        let sensor = SensorFeatures {
            ta_c: agg.mean_ta_c,
            tsurf_c: agg.mean_tsurf_c,
            water_mm: agg.mean_water_mm,
            speed: agg.mean_speed,
            height_m: agg.mean_height_m,
        };
        let weather = if features.needs_weather() {
            let latest = self.weather.iter().map(|w| w.date).max()?;
            let same_day: Vec<&WeatherDaily> = self.weather.iter().filter(|w| w.date == latest).collect();
            Some(nearest_weather(&same_day, agg.cell.latlon(), self.weather_radius_m)?)
        } else {
            None
        };
        features.assemble(&sensor, weather)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeConditions<T>(pub Vec<EdgeCondition<T>>);

impl<T: Scalar> EdgeConditions<T> {
    /// Every edge at the optimistic default.
    pub fn uniform_default(graph: &RoadGraph, cfg: &ConditionConfig) -> Self {
        Self(
            (0..graph.edge_count())
                .map(|edge_id| EdgeCondition {
                    edge_id,
                    friction_est: T::lit(cfg.default_friction),
                    state_est: cfg.default_state,
                    source: ConditionSource::Default,
                })
                .collect(),
        )
    }

    pub fn get(&self, edge: EdgeId) -> Option<&EdgeCondition<T>> {
        self.0.get(edge)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn count_by_source(&self, source: ConditionSource) -> usize {
        self.0.iter().filter(|c| c.source == source).count()
    }

    /// Checks totality over `graph` and friction bounds.
    pub fn validate(&self, graph: &RoadGraph) -> Result<(), String> {
        if self.0.len() != graph.edge_count() {
            return Err(format!("{} conditions for {} edges", self.0.len(), graph.edge_count()));
        }
        for (i, c) in self.0.iter().enumerate() {
            if c.edge_id != i {
                return Err(format!("condition {i} is for edge {}", c.edge_id));
            }
            if !(c.friction_est >= T::lit(FRICTION_MIN) && c.friction_est <= T::lit(FRICTION_MAX)) {
                return Err(format!("edge {i}: friction {} out of range", c.friction_est));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum AssignError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Estimates a condition for every edge.
///
/// Aggregates are matched onto edges by [`RoadGraph::snap_point`]; a match
/// on a two-way segment counts for both directions. Measured edges take
/// the observation-weighted mean friction and the modal state over all
/// contributing records. Other edges are predicted with `classifier` when
/// `features` can supply inputs, and fall back to `cfg` otherwise.
pub fn assign_edge_conditions<T: Scalar>(
    graph: &RoadGraph,
    aggregates: &[LocationAggregate],
    classifier: Option<&TrainedModel<T>>,
    features: &dyn EdgeFeatureSource,
    tables: &RateTables<T>,
    cfg: &ConditionConfig,
    snap_radius_m: f64,
) -> Result<EdgeConditions<T>, AssignError> {
    let mut hits: HashMap<EdgeId, Vec<&LocationAggregate>> = HashMap::new();
    if graph.edge_count() > 0 {
        for a in aggregates {
            if let Some(s) = graph.snap_point(a.cell.latlon(), snap_radius_m)? {
                hits.entry(s.edge_id).or_default().push(a);
                if let Some(tw) = graph.twin(s.edge_id) {
                    hits.entry(tw).or_default().push(a);
                }
            }
        }
    }

    let (fb_friction, fb_state) = match cfg.fallback {
        Fallback::Optimistic => (cfg.default_friction, cfg.default_state),
        Fallback::Pessimistic => (FRICTION_MIN, tables.states.riskiest_state()),
    };
    let clamp = |f: f64| T::lit(f.clamp(FRICTION_MIN, FRICTION_MAX));

    let mut out = Vec::with_capacity(graph.edge_count());
    for edge in graph.edges() {
        let id = edge.edge_id;
        let cond = if let Some(contrib) = hits.get(&id) {
            let n: usize = contrib.iter().map(|a| a.n_obs).sum();
            let weighted: f64 = contrib.iter().map(|a| a.n_obs as f64 * a.mean_friction).sum();
            let mut counts = [0usize; 6];
            for a in contrib {
                for (c, k) in counts.iter_mut().zip(a.state_counts) {
                    *c += k;
                }
            }
            EdgeCondition {
                edge_id: id,
                friction_est: clamp(weighted / n as f64),
                state_est: modal_state(&counts),
                source: ConditionSource::Measured,
            }
        } else {
            let predicted = match classifier {
                Some(model) => match features.features(edge, &model.feature_list) {
                    Some(x) => {
                        let x: Vec<T> = x.into_iter().map(T::lit).collect();
                        Some(model.predict_state(&x)?.state)
                    }
                    None => None,
                },
                None => None,
            };
            match predicted {
                Some(state) => EdgeCondition {
                    edge_id: id,
                    friction_est: clamp(cfg.friction_by_state.get(&state).copied().unwrap_or(cfg.default_friction)),
                    state_est: state,
                    source: ConditionSource::Predicted,
                },
                None => EdgeCondition {
                    edge_id: id,
                    friction_est: clamp(fb_friction),
                    state_est: fb_state,
                    source: ConditionSource::Default,
                },
            }
        };
        out.push(cond);
    }
    Ok(EdgeConditions(out))
}
