//! Directed road graph: construction from OSM XML or edge-list CSV, and
//! map matching of coordinates onto edges through a uniform grid index.

mod edges_csv;
mod index;
mod osm;
mod speed;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_m, point_polyline_distance, polyline_length_m};

pub use edges_csv::{load_edges_csv, write_edges_csv, EDGE_CSV_HEADER};
pub use index::GridIndex;
pub use osm::{parse_osm_xml, BBox, OsmParse, ROUTABLE_HIGHWAYS};
pub use speed::{derive_speed_and_time, parse_maxspeed, travel_time_s, SpeedTable, SpeedTime};

/// Default map-matching radius.
pub const DEFAULT_SNAP_RADIUS_M: f64 = 50.0;

/// Relative tolerance for `travel_time_s = length_m / (speed_kph / 3.6)`.
pub const TRAVEL_TIME_REL_TOL: f64 = 1e-6;

pub type NodeId = i64;
pub type EdgeId = usize;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("malformed OSM XML at byte {offset}: {message}")]
    Xml { offset: u64, message: String },
    #[error("row {row}: node {node} has no coordinates")]
    DanglingNode { row: usize, node: NodeId },
    #[error("segment {from}->{to} references unknown node")]
    UnknownNode { from: NodeId, to: NodeId },
    #[error("node {0} defined twice with different attributes")]
    ConflictingNode(NodeId),
    #[error("{0}")]
    Invariant(String),
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("graph has no edges")]
    EmptyGraph,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub node_id: NodeId,
    pub lat: f64,
    pub lon: f64,
    pub height_m: f64,
}

impl GraphNode {
    pub fn new(node_id: NodeId, lat: f64, lon: f64) -> Self {
        Self {
            node_id,
            lat,
            lon,
            height_m: 0.0,
        }
    }

    pub fn latlon(&self) -> (f64, f64) {
        (self.lat, self.lon)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadEdge {
    pub edge_id: EdgeId,
    pub osmid: i64,
    pub from_node: NodeId,
    pub to_node: NodeId,
    pub highway: String,
    pub oneway: bool,
    /// Generated as the opposite direction of a two-way segment.
    pub reversed: bool,
    pub length_m: f64,
    pub speed_kph: f64,
    pub travel_time_s: f64,
    pub bridge: bool,
    pub tunnel: bool,
    pub junction: Option<String>,
    pub lanes: Option<u32>,
    /// `(lat, lon)` vertices from `from_node` to `to_node` inclusive.
    pub geometry: Vec<(f64, f64)>,
}

/// One road segment as handed to [`GraphBuilder`]. Missing length, speed
/// or travel time are derived on build.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SegmentSpec {
    pub osmid: i64,
    pub from: NodeId,
    pub to: NodeId,
    pub highway: String,
    pub oneway: bool,
    pub length_m: Option<f64>,
    pub speed_kph: Option<f64>,
    pub maxspeed: Option<String>,
    pub travel_time_s: Option<f64>,
    pub bridge: bool,
    pub tunnel: bool,
    pub junction: Option<String>,
    pub lanes: Option<u32>,
    /// Vertices strictly between the end nodes.
    pub interior: Vec<(f64, f64)>,
    /// Source row, for error messages.
    pub row: Option<usize>,
}

impl SegmentSpec {
    pub fn new(osmid: i64, from: NodeId, to: NodeId, highway: &str, oneway: bool) -> Self {
        Self {
            osmid,
            from,
            to,
            highway: highway.to_string(),
            oneway,
            ..Self::default()
        }
    }
}

/// Accumulates nodes and segments; [`GraphBuilder::build`] enforces every
/// graph invariant.
#[derive(Debug, Clone, Default)]
pub struct GraphBuilder {
    nodes: Vec<GraphNode>,
    node_index: HashMap<NodeId, usize>,
    segments: Vec<SegmentSpec>,
    speeds: SpeedTable,
    cell_deg: Option<f64>,
    warnings: Vec<String>,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_speed_table(mut self, speeds: SpeedTable) -> Self {
        self.speeds = speeds;
        self
    }

    /// Latitude extent of a spatial index cell, degrees.
    pub fn with_index_cell(mut self, cell_deg: f64) -> Self {
        self.cell_deg = Some(cell_deg);
        self
    }

    pub fn add_node(&mut self, node: GraphNode) -> Result<(), GraphError> {
        if !(-90.0..=90.0).contains(&node.lat) || !(-180.0..=180.0).contains(&node.lon) {
            return Err(GraphError::Invariant(format!(
                "node {} has invalid coordinates ({}, {})",
                node.node_id, node.lat, node.lon
            )));
        }
        match self.node_index.get(&node.node_id) {
            Some(&i) if self.nodes[i] != node => Err(GraphError::ConflictingNode(node.node_id)),
            Some(_) => Ok(()),
            None => {
                self.node_index.insert(node.node_id, self.nodes.len());
                self.nodes.push(node);
                Ok(())
            }
        }
    }

    pub fn has_node(&self, id: NodeId) -> bool {
        self.node_index.contains_key(&id)
    }

    pub fn add_segment(&mut self, seg: SegmentSpec) {
        self.segments.push(seg);
    }

    pub fn warn(&mut self, msg: String) {
        self.warnings.push(msg);
    }

    pub fn build(self) -> Result<RoadGraph, GraphError> {
        let GraphBuilder {
            nodes,
            node_index,
            segments,
            speeds,
            cell_deg,
            mut warnings,
        } = self;
        let mut edges: Vec<RoadEdge> = Vec::with_capacity(segments.len() * 2);
        let mut twin: Vec<Option<EdgeId>> = Vec::with_capacity(segments.len() * 2);
        let fail = |seg: &SegmentSpec, msg: String| match seg.row {
            Some(row) => GraphError::Row { row, message: msg },
            None => GraphError::Invariant(format!("segment {}->{}: {msg}", seg.from, seg.to)),
        };

        for seg in segments {
            let (Some(&fi), Some(&ti)) = (node_index.get(&seg.from), node_index.get(&seg.to)) else {
                return Err(match seg.row {
                    Some(row) => GraphError::DanglingNode {
                        row,
                        node: if node_index.contains_key(&seg.from) { seg.to } else { seg.from },
                    },
                    None => GraphError::UnknownNode {
                        from: seg.from,
                        to: seg.to,
                    },
                });
            };
            let mut geometry = Vec::with_capacity(seg.interior.len() + 2);
            geometry.push(nodes[fi].latlon());
            geometry.extend_from_slice(&seg.interior);
            geometry.push(nodes[ti].latlon());

            let length_m = seg.length_m.unwrap_or_else(|| polyline_length_m(&geometry));
            if !(length_m > 0.0 && length_m.is_finite()) {
                return Err(fail(&seg, format!("length_m must be positive, got {length_m}")));
            }
            let speed_kph = match seg.speed_kph {
                Some(v) => v,
                None => {
                    let st = derive_speed_and_time(&seg.highway, seg.maxspeed.as_deref(), length_m, &speeds)
                        .map_err(|e| fail(&seg, e.to_string()))?;
                    if let Some(w) = st.warning {
                        warnings.push(format!("way {}: {w}", seg.osmid));
                    }
                    st.speed_kph
                }
            };
            if !(speed_kph > 0.0 && speed_kph.is_finite()) {
                return Err(fail(&seg, format!("speed_kph must be positive, got {speed_kph}")));
            }
            let expected = travel_time_s(length_m, speed_kph);
            let time = seg.travel_time_s.unwrap_or(expected);
            if !(time > 0.0 && time.is_finite()) {
                return Err(fail(&seg, format!("travel_time_s must be positive, got {time}")));
            }
            if ((time - expected) / expected).abs() > TRAVEL_TIME_REL_TOL {
                return Err(fail(
                    &seg,
                    format!("travel_time_s {time} inconsistent with length/speed ({expected})"),
                ));
            }

            let forward = RoadEdge {
                edge_id: edges.len(),
                osmid: seg.osmid,
                from_node: seg.from,
                to_node: seg.to,
                highway: seg.highway.clone(),
                oneway: seg.oneway,
                reversed: false,
                length_m,
                speed_kph,
                travel_time_s: time,
                bridge: seg.bridge,
                tunnel: seg.tunnel,
                junction: seg.junction.clone(),
                lanes: seg.lanes,
                geometry,
            };
            if seg.oneway {
                twin.push(None);
                edges.push(forward);
            } else {
                let fwd_id = forward.edge_id;
                let mut back = forward.clone();
                back.edge_id = fwd_id + 1;
                back.from_node = seg.to;
                back.to_node = seg.from;
                back.reversed = true;
                back.geometry.reverse();
                twin.push(Some(fwd_id + 1));
                twin.push(Some(fwd_id));
                edges.push(forward);
                edges.push(back);
            }
        }

        let mut adjacency = vec![Vec::new(); nodes.len()];
        let mut endpoints = Vec::with_capacity(edges.len());
        for e in &edges {
            let (f, t) = (node_index[&e.from_node], node_index[&e.to_node]);
            adjacency[f].push(e.edge_id);
            endpoints.push((f, t));
        }
        let index = GridIndex::build(&edges, cell_deg);
        Ok(RoadGraph {
            nodes,
            node_index,
            edges,
            endpoints,
            adjacency,
            twin,
            index,
            warnings,
        })
    }
}

/// Immutable routable road network.
#[derive(Debug, Clone)]
pub struct RoadGraph {
    nodes: Vec<GraphNode>,
    node_index: HashMap<NodeId, usize>,
    edges: Vec<RoadEdge>,
    /// Dense `(from, to)` node indices per edge.
    endpoints: Vec<(usize, usize)>,
    adjacency: Vec<Vec<EdgeId>>,
    twin: Vec<Option<EdgeId>>,
    index: GridIndex,
    warnings: Vec<String>,
}

/// Result of matching a coordinate onto the network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Snap {
    pub edge_id: EdgeId,
    pub distance_m: f64,
    pub offset_fraction: f64,
}

impl RoadGraph {
    pub fn nodes(&self) -> &[GraphNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[RoadEdge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge(&self, id: EdgeId) -> Option<&RoadEdge> {
        self.edges.get(id)
    }

    pub fn node(&self, id: NodeId) -> Option<&GraphNode> {
        self.node_index.get(&id).map(|&i| &self.nodes[i])
    }

    /// Dense index of a node id, `0..node_count()`.
    pub fn node_idx(&self, id: NodeId) -> Option<usize> {
        self.node_index.get(&id).copied()
    }

    pub fn node_at(&self, idx: usize) -> &GraphNode {
        &self.nodes[idx]
    }

    /// Outgoing edge ids of the node at dense index `idx`.
    pub fn out_edges(&self, idx: usize) -> &[EdgeId] {
        &self.adjacency[idx]
    }

    /// Dense `(from, to)` indices of an edge.
    pub fn endpoints(&self, edge: EdgeId) -> (usize, usize) {
        self.endpoints[edge]
    }

    /// Opposite direction of a two-way segment.
    pub fn twin(&self, edge: EdgeId) -> Option<EdgeId> {
        self.twin[edge]
    }

    pub fn max_speed_kph(&self) -> f64 {
        self.edges.iter().map(|e| e.speed_kph).fold(0.0, f64::max)
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn index(&self) -> &GridIndex {
        &self.index
    }

    /// Nearest edge within `radius_m`, measured point-to-polyline.
    ///
    /// Reverse twins share their segment's geometry, so matches report the
    /// forward edge. Equal distances resolve to the lower edge id.
    pub fn snap_point(&self, p: (f64, f64), radius_m: f64) -> Result<Option<Snap>, GraphError> {
        if self.edges.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        Ok(self
            .index
            .nearest(p, radius_m, |id| {
                let pr = point_polyline_distance(p, &self.edges[id].geometry);
                (pr.distance_m, pr.offset_fraction)
            })
            .map(|(edge_id, distance_m, offset_fraction)| Snap {
                edge_id,
                distance_m,
                offset_fraction,
            }))
    }

    /// Nearest graph node reached through [`RoadGraph::snap_point`]: the
    /// matched edge's closer endpoint (ties pick `from_node`).
    pub fn nearest_node(&self, p: (f64, f64), radius_m: f64) -> Result<Option<NodeId>, GraphError> {
        let Some(s) = self.snap_point(p, radius_m)? else {
            return Ok(None);
        };
        let e = &self.edges[s.edge_id];
        let df = haversine_m(p, self.node(e.from_node).expect("endpoint").latlon());
        let dt = haversine_m(p, self.node(e.to_node).expect("endpoint").latlon());
        Ok(Some(if dt < df { e.to_node } else { e.from_node }))
    }

    /// Checks every structural invariant; loaders guarantee these, so this
    /// is for tests and diagnostics.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (i, n) in self.nodes.iter().enumerate() {
            if self.node_index.get(&n.node_id) != Some(&i) {
                return Err(format!("node {} not uniquely indexed", n.node_id));
            }
        }
        let mut seen = vec![Vec::new(); self.nodes.len()];
        for (i, e) in self.edges.iter().enumerate() {
            if e.edge_id != i {
                return Err(format!("edge at {i} has id {}", e.edge_id));
            }
            let (Some(f), Some(t)) = (self.node(e.from_node), self.node(e.to_node)) else {
                return Err(format!("edge {i} has a dangling endpoint"));
            };
            if !(e.length_m > 0.0 && e.speed_kph > 0.0 && e.travel_time_s > 0.0) {
                return Err(format!("edge {i} has non-positive attributes"));
            }
            let expected = travel_time_s(e.length_m, e.speed_kph);
            if ((e.travel_time_s - expected) / expected).abs() > TRAVEL_TIME_REL_TOL {
                return Err(format!("edge {i} travel time inconsistent"));
            }
            if e.geometry.first() != Some(&f.latlon()) || e.geometry.last() != Some(&t.latlon()) {
                return Err(format!("edge {i} geometry endpoints do not match nodes"));
            }
            seen[self.node_index[&e.from_node]].push(i);
            if let Some(tw) = self.twin[i] {
                let o = &self.edges[tw];
                if self.twin[tw] != Some(i) || o.from_node != e.to_node || o.to_node != e.from_node {
                    return Err(format!("edge {i} twin {tw} inconsistent"));
                }
            } else if !e.oneway {
                return Err(format!("two-way edge {i} has no twin"));
            }
        }
        if seen != self.adjacency {
            return Err("adjacency inconsistent with edges".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::meters_per_degree;

    fn line_graph() -> RoadGraph {
        let mut b = GraphBuilder::new();
        b.add_node(GraphNode::new(1, 68.0, 17.0)).unwrap();
        b.add_node(GraphNode::new(2, 68.0, 17.01)).unwrap();
        let mut s = SegmentSpec::new(10, 1, 2, "residential", false);
        s.interior = vec![(68.0, 17.005)];
        b.add_segment(s);
        b.build().unwrap()
    }

    #[test]
    fn two_way_segment_yields_twins() {
        let g = line_graph();
        assert_eq!(g.edge_count(), 2);
        assert_eq!(g.twin(0), Some(1));
        assert!(g.edges()[1].reversed);
        assert_eq!(g.edges()[1].geometry.first(), Some(&(68.0, 17.01)));
        g.check_invariants().unwrap();
    }

    #[test]
    fn snap_on_vertex_and_offset() {
        let g = line_graph();
        let s = g.snap_point((68.0, 17.005), 50.0).unwrap().unwrap();
        assert_eq!(s.edge_id, 0);
        assert_eq!(s.distance_m, 0.0);
        assert!((s.offset_fraction - 0.5).abs() < 1e-9);

        let k: f64 = meters_per_degree();
        let s = g.snap_point((68.0 + 10.0 / k, 17.0025), 50.0).unwrap().unwrap();
        assert!((s.distance_m - 10.0).abs() < 1e-6);

        assert_eq!(g.snap_point((68.0 + 500.0 / k, 17.005), 50.0).unwrap(), None);
    }

    #[test]
    fn empty_graph_snap_is_error() {
        let g = GraphBuilder::new().build().unwrap();
        assert!(matches!(g.snap_point((0.0, 0.0), 50.0), Err(GraphError::EmptyGraph)));
    }

    #[test]
    fn invariant_violations_rejected() {
        let mut b = GraphBuilder::new();
        b.add_node(GraphNode::new(1, 68.0, 17.0)).unwrap();
        b.add_node(GraphNode::new(2, 68.0, 17.01)).unwrap();
        let mut s = SegmentSpec::new(1, 1, 2, "primary", true);
        s.speed_kph = Some(50.0);
        s.travel_time_s = Some(1.0);
        b.add_segment(s);
        assert!(b.build().is_err());

        let mut b = GraphBuilder::new();
        b.add_node(GraphNode::new(1, 68.0, 17.0)).unwrap();
        assert!(b.add_node(GraphNode::new(1, 68.1, 17.0)).is_err());
        assert!(b.add_node(GraphNode::new(3, 91.0, 17.0)).is_err());
        b.add_segment(SegmentSpec::new(1, 1, 9, "primary", true));
        assert!(matches!(b.build(), Err(GraphError::UnknownNode { .. })));
    }

    #[test]
    fn nearest_node_picks_closer_endpoint() {
        let g = line_graph();
        assert_eq!(g.nearest_node((68.0, 17.009), 50.0).unwrap(), Some(2));
        assert_eq!(g.nearest_node((68.0, 17.001), 50.0).unwrap(), Some(1));
    }
}
