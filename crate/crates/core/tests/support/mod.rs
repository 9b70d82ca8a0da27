//! Random instances and brute-force oracles shared by integration tests.
#![allow(dead_code)]

use frostroute::geo::{haversine_m, point_polyline_distance, polyline_length_m};
use frostroute::model::TrainingPoint;
use frostroute::roadgraph::{GraphBuilder, GraphNode, SegmentSpec};
use frostroute::safety::{ConditionSource, EdgeCondition, EdgeConditions, RateTablesConfig};
use frostroute::{EdgeId, RoadGraph, RoadState};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn sample_config() -> RateTablesConfig {
    serde_json::from_str(include_str!("../../../../config/rates.sample.json")).unwrap()
}

/// Directed multigraph on `n` nodes with random positive travel times.
/// Node ids differ from dense indices.
pub fn random_small_graph(rng: &mut StdRng, n: usize) -> RoadGraph {
    let mut b = GraphBuilder::new();
    for i in 0..n {
        let id = 1000 + 7 * i as i64;
        b.add_node(GraphNode::new(id, 68.0 + rng.gen_range(0.0..0.01), 17.0 + rng.gen_range(0.0..0.01)))
            .unwrap();
    }
    let m = rng.gen_range(0..=(n * 5 / 2).max(1));
    for _ in 0..m {
        let from = rng.gen_range(0..n);
        let to = rng.gen_range(0..n);
        if from == to {
            continue;
        }
        let mut s = SegmentSpec::new(0, 1000 + 7 * from as i64, 1000 + 7 * to as i64, "residential", true);
        s.length_m = Some(rng.gen_range(1.0..1000.0));
        s.speed_kph = Some(rng.gen_range(20.0..100.0));
        b.add_segment(s);
    }
    b.build().unwrap()
}

/// Random points in a box, each joined to its nearest neighbours by
/// two-way segments plus a few one-way shortcuts. Lengths are at least the
/// polyline length; `interior` adds bent geometry.
pub fn random_geometric_graph(rng: &mut StdRng, n: usize, interior: bool) -> RoadGraph {
    let pts: Vec<(f64, f64)> = (0..n)
        .map(|_| (rng.gen_range(68.30..68.50), rng.gen_range(17.20..17.60)))
        .collect();
    let mut b = GraphBuilder::new();
    for (i, p) in pts.iter().enumerate() {
        b.add_node(GraphNode::new(i as i64 + 1, p.0, p.1)).unwrap();
    }
    let mut pairs = std::collections::BTreeSet::new();
    for i in 0..n {
        let mut near: Vec<(f64, usize)> =
            (0..n).filter(|&j| j != i).map(|j| (haversine_m(pts[i], pts[j]), j)).collect();
        near.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(_, j) in near.iter().take(3) {
            pairs.insert((i.min(j), i.max(j), false));
        }
    }
    for _ in 0..n / 10 {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if i != j {
            pairs.insert((i, j, true));
        }
    }
    let highways = ["motorway", "primary", "secondary", "tertiary", "residential", "service"];
    for (i, j, oneway) in pairs {
        let mut s = SegmentSpec::new(rng.gen_range(1..1_000_000), i as i64 + 1, j as i64 + 1, highways[rng.gen_range(0..6)], oneway);
        if interior {
            let k = rng.gen_range(0..3);
            for t in 1..=k {
                let f = t as f64 / (k + 1) as f64;
                s.interior.push((
                    pts[i].0 + f * (pts[j].0 - pts[i].0) + rng.gen_range(-0.001..0.001),
                    pts[i].1 + f * (pts[j].1 - pts[i].1) + rng.gen_range(-0.001..0.001),
                ));
            }
        }
        let mut line = vec![pts[i]];
        line.extend_from_slice(&s.interior);
        line.push(pts[j]);
        s.length_m = Some(polyline_length_m(&line) * rng.gen_range(1.0..1.5) + 1.0);
        s.speed_kph = Some(rng.gen_range(20.0..110.0));
        b.add_segment(s);
    }
    b.build().unwrap()
}

pub fn random_conditions(rng: &mut StdRng, graph: &RoadGraph) -> EdgeConditions<f64> {
    EdgeConditions(
        (0..graph.edge_count())
            .map(|edge_id| EdgeCondition {
                edge_id,
                friction_est: (rng.gen_range(10..=81) as f64) / 100.0,
                state_est: RoadState::ALL[rng.gen_range(0..6)],
                source: ConditionSource::Predicted,
            })
            .collect(),
    )
}

/// Linear scan over half-open buckets, top bucket closed.
pub fn oracle_friction_rate(cfg: &RateTablesConfig, f: f64) -> Option<f64> {
    let b = &cfg.friction_breakpoints;
    for i in 0..cfg.friction_rates.len() {
        let last = i + 2 == b.len();
        if f >= b[i] && (f < b[i + 1] || (last && f == b[i + 1])) {
            return Some(cfg.friction_rates[i]);
        }
    }
    None
}

pub fn oracle_risk(cfg: &RateTablesConfig, f: f64, s: RoadState) -> f64 {
    oracle_friction_rate(cfg, f).unwrap() * cfg.state_rates[s.name()]
}

pub fn oracle_costs(cfg: &RateTablesConfig, graph: &RoadGraph, conds: &EdgeConditions<f64>, alpha: f64) -> Vec<f64> {
    let r_ref = oracle_risk(cfg, *cfg.friction_breakpoints.last().unwrap(), RoadState::Dry);
    graph
        .edges()
        .iter()
        .zip(&conds.0)
        .map(|(e, c)| e.travel_time_s * (1.0 + alpha * oracle_risk(cfg, c.friction_est, c.state_est) / r_ref))
        .collect()
}

/// Minimum over all simple paths of the left-to-right cost sum.
pub fn enumerate_min_cost(graph: &RoadGraph, costs: &[f64], src: usize, dst: usize) -> Option<f64> {
    fn dfs(g: &RoadGraph, c: &[f64], at: usize, dst: usize, acc: f64, seen: &mut Vec<bool>, best: &mut Option<f64>) {
        if at == dst {
            if best.is_none_or(|b| acc < b) {
                *best = Some(acc);
            }
            return;
        }
        for &e in g.out_edges(at) {
            let (_, v) = g.endpoints(e);
            if !seen[v] {
                seen[v] = true;
                dfs(g, c, v, dst, acc + c[e], seen, best);
                seen[v] = false;
            }
        }
    }
    let mut seen = vec![false; graph.node_count()];
    seen[src] = true;
    let mut best = None;
    dfs(graph, costs, src, dst, 0.0, &mut seen, &mut best);
    best
}

/// Exhaustive scan over forward edges: `(distance, id)` minimum.
pub fn brute_snap(graph: &RoadGraph, p: (f64, f64), radius_m: f64) -> Option<(EdgeId, f64)> {
    graph
        .edges()
        .iter()
        .filter(|e| !e.reversed)
        .map(|e| (point_polyline_distance(p, &e.geometry).distance_m, e.edge_id))
        .filter(|(d, _)| *d <= radius_m)
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(d, id)| (id, d))
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..a.len() {
        acc += (a[i] - b[i]) * (a[i] - b[i]);
    }
    acc
}

/// Sorted `(dist2, index)` of the `k` nearest points plus everything tied
/// with the k-th.
pub fn brute_neighbors(points: &[TrainingPoint<f64>], q: &[f64], k: usize) -> Vec<(f64, usize)> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| (dist2(&p.x, q), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let k = k.min(all.len());
    let cut = all[k - 1].0;
    all.into_iter().take_while(|(d, _)| *d <= cut).collect()
}

pub fn brute_vote(points: &[TrainingPoint<f64>], nb: &[(f64, usize)]) -> RoadState {
    let mut best: Option<(usize, f64, u8, RoadState)> = None;
    for s in RoadState::ALL {
        let mine: Vec<f64> = nb.iter().filter(|(_, i)| points[*i].state == s).map(|(d, _)| *d).collect();
        if mine.is_empty() {
            continue;
        }
        let nearest = mine.iter().copied().fold(f64::INFINITY, f64::min);
        let better = match best {
            None => true,
            Some((c, d, code, _)) => {
                mine.len() > c || (mine.len() == c && (nearest < d || (nearest == d && s.code() < code)))
            }
        };
        if better {
            best = Some((mine.len(), nearest, s.code(), s));
        }
    }
    best.unwrap().3
}

pub fn brute_mean(points: &[TrainingPoint<f64>], nb: &[(f64, usize)]) -> f64 {
    let mut v: Vec<(f64, f64)> = nb.iter().map(|(d, i)| (*d, points[*i].target)).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    v.iter().map(|x| x.1).fold(0.0, |a, b| a + b) / v.len() as f64
}
