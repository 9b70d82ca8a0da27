//! Road-condition-aware routing.
//!
//! The pipeline ingests road-sensor observations ([`ingest`]), joins daily
//! weather ([`weather`]), builds a routable network from OpenStreetMap
//! ([`roadgraph`]), predicts road state and risk with k-nearest neighbours
//! ([`model`]), scores edges with the friction-by-state accident-rate
//! product ([`safety`]) and plans routes that trade travel time against
//! that risk ([`route`]).
//!
//! Numeric kernels are generic over [`Scalar`]; the aliases below fix them
//! to `f64`, which is what the loaders and the CLI use.

pub mod geo;
pub mod ingest;
pub mod model;
pub mod roadgraph;
pub mod route;
pub mod safety;
pub mod scalar;
pub mod weather;

pub use scalar::Scalar;

pub use ingest::{Cell, LocationAggregate, RoadState, SensorRecord};
pub use roadgraph::{EdgeId, GraphNode, NodeId, RoadEdge, RoadGraph};
pub use weather::{FeatureList, FeatureRow, WeatherDaily};

pub type TrainedModel = model::TrainedModel<f64>;
pub type Standardizer = model::Standardizer<f64>;
pub type Sample = model::Sample<f64>;
pub type RateTables = safety::RateTables<f64>;
pub type FrictionRateTable = safety::FrictionRateTable<f64>;
pub type StateRateTable = safety::StateRateTable<f64>;
pub type EdgeCondition = safety::EdgeCondition<f64>;
pub type CostParams = route::CostParams<f64>;
pub type Route = route::Route<f64>;
