//! Safest-path planning.
//!
//! Edge cost is `travel_time_s × (1 + alpha × risk / r_ref)` where `risk`
//! is the safety metric of the edge's estimated condition and `r_ref` the
//! risk of a dry, full-grip surface. `alpha = 0` is the fastest route.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_m;
use crate::ingest::RoadState;
use crate::roadgraph::{EdgeId, NodeId, RoadEdge, RoadGraph};
use crate::safety::{EdgeCondition, EdgeConditions, RateTables, SafetyError};
use crate::scalar::{cmp, Scalar};

#[derive(Debug, Error, PartialEq)]
pub enum RouteError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("alpha must be finite and non-negative, got {0}")]
    BadAlpha(f64),
    #[error("no alphas given")]
    NoAlphas,
    #[error("{conditions} edge conditions for {edges} edges")]
    ConditionsMismatch { conditions: usize, edges: usize },
    #[error(transparent)]
    Safety(#[from] SafetyError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostParams<T> {
    pub alpha: T,
    pub r_ref: T,
}

impl<T: Scalar> CostParams<T> {
    /// `r_ref` is taken from the active tables.
    pub fn new(alpha: T, tables: &RateTables<T>) -> Result<Self, RouteError> {
        if alpha < T::zero() || !alpha.is_finite() {
            return Err(RouteError::BadAlpha(alpha.as_f64()));
        }
        Ok(Self {
            alpha,
            r_ref: tables.reference_risk(),
        })
    }
}

/// Safety metric of an edge condition.
pub fn edge_risk<T: Scalar>(cond: &EdgeCondition<T>, tables: &RateTables<T>) -> Result<T, SafetyError> {
    tables.safety_metric(cond.friction_est, cond.state_est)
}

pub fn edge_cost<T: Scalar>(
    edge: &RoadEdge,
    cond: &EdgeCondition<T>,
    params: &CostParams<T>,
    tables: &RateTables<T>,
) -> Result<T, SafetyError> {
    let risk = edge_risk(cond, tables)?;
    Ok(cost_from_risk(T::lit(edge.travel_time_s), risk, params))
}

#[inline]
fn cost_from_risk<T: Scalar>(time: T, risk: T, params: &CostParams<T>) -> T {
    time * (T::one() + params.alpha * risk / params.r_ref)
}

/// Per-edge risk and cost for one parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeCosts<T> {
    pub cost: Vec<T>,
    pub risk: Vec<T>,
}

impl<T: Scalar> EdgeCosts<T> {
    pub fn compute(
        graph: &RoadGraph,
        conditions: &EdgeConditions<T>,
        params: &CostParams<T>,
        tables: &RateTables<T>,
    ) -> Result<Self, RouteError> {
        if conditions.len() != graph.edge_count() {
            return Err(RouteError::ConditionsMismatch {
                conditions: conditions.len(),
                edges: graph.edge_count(),
            });
        }
        let mut cost = Vec::with_capacity(graph.edge_count());
        let mut risk = Vec::with_capacity(graph.edge_count());
        for (e, c) in graph.edges().iter().zip(&conditions.0) {
            let r = edge_risk(c, tables)?;
            cost.push(cost_from_risk(T::lit(e.travel_time_s), r, params));
            risk.push(r);
        }
        Ok(Self { cost, risk })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteEdge<T> {
    pub edge_id: EdgeId,
    pub state: RoadState,
    pub risk: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Route<T> {
    pub node_seq: Vec<NodeId>,
    pub edge_seq: Vec<EdgeId>,
    pub total_cost: T,
    pub total_time_s: T,
    pub total_distance_m: T,
    /// `Σ risk × travel_time_s` over the route.
    pub risk_sum: T,
    pub per_edge: Vec<RouteEdge<T>>,
}

impl<T: Scalar> Route<T> {
    fn empty(node: NodeId) -> Self {
        Self {
            node_seq: vec![node],
            edge_seq: Vec::new(),
            total_cost: T::zero(),
            total_time_s: T::zero(),
            total_distance_m: T::zero(),
            risk_sum: T::zero(),
            per_edge: Vec::new(),
        }
    }

    /// Assembles a route from a connected edge sequence starting at `src`.
    pub fn from_edges(
        graph: &RoadGraph,
        conditions: &EdgeConditions<T>,
        costs: &EdgeCosts<T>,
        src: NodeId,
        edges: Vec<EdgeId>,
    ) -> Self {
        let mut r = Self::empty(src);
        for &e in &edges {
            let edge = &graph.edges()[e];
            let time = T::lit(edge.travel_time_s);
            r.node_seq.push(edge.to_node);
            r.total_cost = r.total_cost + costs.cost[e];
            r.total_time_s = r.total_time_s + time;
            r.total_distance_m = r.total_distance_m + T::lit(edge.length_m);
            r.risk_sum = r.risk_sum + costs.risk[e] * time;
            r.per_edge.push(RouteEdge {
                edge_id: e,
                state: conditions.0[e].state_est,
                risk: costs.risk[e],
            });
        }
        r.edge_seq = edges;
        r
    }

    /// Concatenated edge polylines, shared vertices emitted once.
    pub fn geometry(&self, graph: &RoadGraph) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for &e in &self.edge_seq {
            let g = &graph.edges()[e].geometry;
            let skip = usize::from(!out.is_empty());
            out.extend_from_slice(&g[skip..]);
        }
        if out.is_empty() {
            if let Some(n) = self.node_seq.first().and_then(|n| graph.node(*n)) {
                out.push(n.latlon());
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStats {
    /// Nodes taken off the queue and expanded.
    pub expanded: usize,
}

struct QueueEntry<T> {
    key: T,
    g: T,
    node: usize,
}

impl<T: Scalar> PartialEq for QueueEntry<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Scalar> Eq for QueueEntry<T> {}

impl<T: Scalar> PartialOrd for QueueEntry<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Scalar> Ord for QueueEntry<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed for a min-heap
        cmp(other.key, self.key).then_with(|| other.node.cmp(&self.node))
    }
}

/// Best-first search over dense node indices with a binary heap.
///
/// With `heuristic ≡ 0` this is Dijkstra. Nodes are re-opened when a
/// cheaper path appears, so an admissible heuristic suffices. Among
/// equal-cost relaxations the lower edge id wins the predecessor slot.
pub fn search<T: Scalar>(
    graph: &RoadGraph,
    costs: &[T],
    src: usize,
    dst: usize,
    heuristic: impl Fn(usize) -> T,
) -> (Option<Vec<EdgeId>>, SearchStats) {
    let n = graph.node_count();
    let mut g = vec![T::infinity(); n];
    let mut pred: Vec<Option<EdgeId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    let mut stats = SearchStats::default();
    g[src] = T::zero();
    heap.push(QueueEntry {
        key: heuristic(src),
        g: T::zero(),
        node: src,
    });
    let mut reached = false;
    while let Some(QueueEntry { g: gu, node: u, .. }) = heap.pop() {
        if gu != g[u] {
            continue;
        }
        stats.expanded += 1;
        if u == dst {
            reached = true;
            break;
        }
        for &e in graph.out_edges(u) {
            let (_, v) = graph.endpoints(e);
            let ng = gu + costs[e];
            if ng < g[v] {
                g[v] = ng;
                pred[v] = Some(e);
                heap.push(QueueEntry {
                    key: ng + heuristic(v),
                    g: ng,
                    node: v,
                });
            } else if ng == g[v] && pred[v].is_some_and(|p| e < p) {
                pred[v] = Some(e);
            }
        }
    }
    if !reached {
        return (None, stats);
    }
    let mut edges = Vec::new();
    let mut at = dst;
    while at != src {
        let e = pred[at].expect("reached nodes have a predecessor");
        edges.push(e);
        at = graph.endpoints(e).0;
    }
    edges.reverse();
    (Some(edges), stats)
}

fn resolve(graph: &RoadGraph, id: NodeId) -> Result<usize, RouteError> {
    graph.node_idx(id).ok_or(RouteError::UnknownNode(id))
}

/// Minimum-cost route by Dijkstra; `Ok(None)` when `dst` is unreachable.
pub fn shortest_path<T: Scalar>(
    graph: &RoadGraph,
    conditions: &EdgeConditions<T>,
    tables: &RateTables<T>,
    src: NodeId,
    dst: NodeId,
    params: &CostParams<T>,
) -> Result<Option<Route<T>>, RouteError> {
    Ok(shortest_path_with_stats(graph, conditions, tables, src, dst, params, false)?.0)
}

/// A* with the straight-line travel time at the network's top speed as
/// heuristic. Same contract as [`shortest_path`].
pub fn shortest_path_astar<T: Scalar>(
    graph: &RoadGraph,
    conditions: &EdgeConditions<T>,
    tables: &RateTables<T>,
    src: NodeId,
    dst: NodeId,
    params: &CostParams<T>,
) -> Result<Option<Route<T>>, RouteError> {
    Ok(shortest_path_with_stats(graph, conditions, tables, src, dst, params, true)?.0)
}

/// Lower bound in seconds from `node` to `dst`: great-circle distance at
/// the graph's maximum speed.
pub fn astar_heuristic<T: Scalar>(graph: &RoadGraph, dst: usize) -> impl Fn(usize) -> T + '_ {
    let target = graph.node_at(dst).latlon();
    let target = (T::lit(target.0), T::lit(target.1));
    let mps = T::lit(graph.max_speed_kph() / 3.6);
    move |n| {
        let p = graph.node_at(n).latlon();
        haversine_m((T::lit(p.0), T::lit(p.1)), target) / mps
    }
}

/// Either search, returning expansion statistics as well.
pub fn shortest_path_with_stats<T: Scalar>(
    graph: &RoadGraph,
    conditions: &EdgeConditions<T>,
    tables: &RateTables<T>,
    src: NodeId,
    dst: NodeId,
    params: &CostParams<T>,
    astar: bool,
) -> Result<(Option<Route<T>>, SearchStats), RouteError> {
    let s = resolve(graph, src)?;
    let d = resolve(graph, dst)?;
    let costs = EdgeCosts::compute(graph, conditions, params, tables)?;
    if s == d {
        return Ok((Some(Route::empty(src)), SearchStats::default()));
    }
    let (edges, stats) = if astar {
        search(graph, &costs.cost, s, d, astar_heuristic::<T>(graph, d))
    } else {
        search(graph, &costs.cost, s, d, |_| T::zero())
    };
    Ok((edges.map(|e| Route::from_edges(graph, conditions, &costs, src, e)), stats))
}

/// `(alpha, route)` pairs.
pub type AlphaRoutes<T> = Vec<(T, Route<T>)>;

/// One route per alpha, sorted by ascending alpha. `Ok(None)` when `dst`
/// is unreachable (reachability does not depend on alpha).
pub fn compare_routes<T: Scalar>(
    graph: &RoadGraph,
    conditions: &EdgeConditions<T>,
    tables: &RateTables<T>,
    src: NodeId,
    dst: NodeId,
    alphas: &[T],
) -> Result<Option<AlphaRoutes<T>>, RouteError> {
    if alphas.is_empty() {
        return Err(RouteError::NoAlphas);
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| cmp(*a, *b));
    let mut out = Vec::with_capacity(sorted.len());
    for alpha in sorted {
        let params = CostParams::new(alpha, tables)?;
        match shortest_path(graph, conditions, tables, src, dst, &params)? {
            Some(r) => out.push((alpha, r)),
            None => return Ok(None),
        }
    }
    Ok(Some(out))
}
