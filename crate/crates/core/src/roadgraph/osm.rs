//! Minimal OSM XML reader: `node`, `way`, `nd` and `tag` elements.

use std::collections::HashMap;
use std::io::BufRead;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};

use super::{GraphBuilder, GraphError, GraphNode, NodeId, RoadGraph, SegmentSpec, SpeedTable};
use crate::geo::haversine_m;

/// Highway classes kept for routing; `<class>_link` variants are kept too.
pub const ROUTABLE_HIGHWAYS: [&str; 8] = [
    "motorway",
    "trunk",
    "primary",
    "secondary",
    "tertiary",
    "unclassified",
    "residential",
    "service",
];

pub fn is_routable(highway: &str) -> bool {
    let base = highway.strip_suffix("_link").unwrap_or(highway);
    ROUTABLE_HIGHWAYS.contains(&base)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
}

impl BBox {
    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedWay {
    pub way_id: i64,
    pub reason: String,
}

#[derive(Debug)]
pub struct OsmParse {
    pub graph: RoadGraph,
    pub skipped_ways: Vec<SkippedWay>,
}

#[derive(Default)]
struct RawWay {
    id: i64,
    refs: Vec<NodeId>,
    tags: HashMap<String, String>,
}

struct RawNode {
    lat: f64,
    lon: f64,
    ele: Option<f64>,
}

fn xml_err<R>(reader: &Reader<R>, message: impl Into<String>) -> GraphError {
    GraphError::Xml {
        offset: reader.buffer_position(),
        message: message.into(),
    }
}

fn attrs<R>(reader: &Reader<R>, e: &BytesStart) -> Result<HashMap<String, String>, GraphError> {
    let mut out = HashMap::new();
    for a in e.attributes() {
        let a = a.map_err(|err| xml_err(reader, err.to_string()))?;
        let key = String::from_utf8_lossy(a.key.as_ref()).into_owned();
        let value = a
            .unescape_value()
            .map_err(|err| xml_err(reader, err.to_string()))?
            .into_owned();
        out.insert(key, value);
    }
    Ok(out)
}

fn num<T: std::str::FromStr, R>(reader: &Reader<R>, a: &HashMap<String, String>, key: &str, elem: &str) -> Result<T, GraphError> {
    a.get(key)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| xml_err(reader, format!("<{elem}> has missing or invalid `{key}`")))
}

fn truthy(v: Option<&String>) -> bool {
    v.is_some_and(|v| !matches!(v.as_str(), "no" | "false" | "0"))
}

/// Builds a graph from OSM XML.
///
/// Graph nodes are the end points of routable ways plus every node shared
/// by two or more of them; each way is cut at graph nodes and the nodes in
/// between become edge geometry.
pub fn parse_osm_xml<R: BufRead>(source: R, bbox: Option<BBox>, speeds: &SpeedTable) -> Result<OsmParse, GraphError> {
    let mut reader = Reader::from_reader(source);
    reader.config_mut().trim_text(true);
    let mut buf = Vec::new();
    let mut nodes: HashMap<NodeId, RawNode> = HashMap::new();
    let mut ways: Vec<RawWay> = Vec::new();
    let mut current_node: Option<(NodeId, RawNode)> = None;
    let mut current_way: Option<RawWay> = None;
    let mut depth = 0usize;

    loop {
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| xml_err(&reader, e.to_string()))?;
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                if !is_empty {
                    depth += 1;
                }
                match e.name().as_ref() {
                    b"node" => {
                        let a = attrs(&reader, e)?;
                        let id: NodeId = num(&reader, &a, "id", "node")?;
                        let raw = RawNode {
                            lat: num(&reader, &a, "lat", "node")?,
                            lon: num(&reader, &a, "lon", "node")?,
                            ele: None,
                        };
                        if is_empty {
                            nodes.insert(id, raw);
                        } else {
                            current_node = Some((id, raw));
                        }
                    }
                    b"way" => {
                        let a = attrs(&reader, e)?;
                        let way = RawWay {
                            id: num(&reader, &a, "id", "way")?,
                            ..RawWay::default()
                        };
                        if is_empty {
                            ways.push(way);
                        } else {
                            current_way = Some(way);
                        }
                    }
                    b"nd" => {
                        let a = attrs(&reader, e)?;
                        let r: NodeId = num(&reader, &a, "ref", "nd")?;
                        if let Some(w) = current_way.as_mut() {
                            w.refs.push(r);
                        }
                    }
                    b"tag" => {
                        let a = attrs(&reader, e)?;
                        let (Some(k), Some(v)) = (a.get("k"), a.get("v")) else {
                            return Err(xml_err(&reader, "<tag> needs `k` and `v`"));
                        };
                        if let Some(w) = current_way.as_mut() {
                            w.tags.insert(k.clone(), v.clone());
                        } else if let Some((_, n)) = current_node.as_mut() {
                            if k == "ele" {
                                n.ele = v.trim().parse().ok();
                            }
                        }
                    }
                    _ => {}
                }
            }
            Event::End(ref e) => {
                depth = depth.saturating_sub(1);
                match e.name().as_ref() {
                    b"node" => {
                        if let Some((id, n)) = current_node.take() {
                            nodes.insert(id, n);
                        }
                    }
                    b"way" => {
                        if let Some(w) = current_way.take() {
                            ways.push(w);
                        }
                    }
                    _ => {}
                }
            }
            Event::Eof => {
                if depth != 0 {
                    return Err(xml_err(&reader, "unexpected end of document"));
                }
                break;
            }
            _ => {}
        }
        buf.clear();
    }

    build_from_raw(&nodes, ways, bbox, speeds)
}

fn build_from_raw(
    nodes: &HashMap<NodeId, RawNode>,
    ways: Vec<RawWay>,
    bbox: Option<BBox>,
    speeds: &SpeedTable,
) -> Result<OsmParse, GraphError> {
    let mut skipped_ways = Vec::new();
    // (way, runs of in-bbox node ids)
    let mut kept: Vec<(RawWay, Vec<Vec<NodeId>>)> = Vec::new();
    for way in ways {
        let Some(highway) = way.tags.get("highway") else { continue };
        if !is_routable(highway) {
            continue;
        }
        if let Some(missing) = way.refs.iter().find(|r| !nodes.contains_key(r)) {
            skipped_ways.push(SkippedWay {
                way_id: way.id,
                reason: format!("references missing node {missing}"),
            });
            continue;
        }
        let mut runs: Vec<Vec<NodeId>> = Vec::new();
        let mut run: Vec<NodeId> = Vec::new();
        for &r in &way.refs {
            let n = &nodes[&r];
            if bbox.is_none_or(|b| b.contains(n.lat, n.lon)) {
                if run.last() != Some(&r) {
                    run.push(r);
                }
            } else if !run.is_empty() {
                runs.push(std::mem::take(&mut run));
            }
        }
        if !run.is_empty() {
            runs.push(run);
        }
        runs.retain(|r| r.len() >= 2);
        if runs.is_empty() {
            if bbox.is_none() {
                skipped_ways.push(SkippedWay {
                    way_id: way.id,
                    reason: "fewer than two distinct nodes".into(),
                });
            }
            continue;
        }
        kept.push((way, runs));
    }

    let mut uses: HashMap<NodeId, usize> = HashMap::new();
    for (_, runs) in &kept {
        for run in runs {
            for r in run {
                *uses.entry(*r).or_default() += 1;
            }
            // run ends are always graph nodes
            *uses.entry(run[0]).or_default() += 1;
            *uses.entry(*run.last().expect("len >= 2")).or_default() += 1;
        }
    }
    let is_graph_node = |id: &NodeId| uses.get(id).copied().unwrap_or(0) >= 2;

    let mut builder = GraphBuilder::new().with_speed_table(speeds.clone());
    for (way, runs) in kept {
        let tag = |k: &str| way.tags.get(k);
        let highway = tag("highway").cloned().unwrap_or_default();
        let junction = tag("junction").cloned();
        let roundabout = matches!(junction.as_deref(), Some("roundabout" | "circular"));
        let (oneway, reverse) = match tag("oneway").map(String::as_str) {
            Some("yes" | "true" | "1") => (true, false),
            Some("-1" | "reverse") => (true, true),
            Some("no" | "false" | "0") => (false, false),
            _ => (roundabout, false),
        };
        let lanes = tag("lanes").and_then(|v| v.trim().parse::<u32>().ok());

        for run in runs {
            let mut start = 0;
            for i in 1..run.len() {
                if !(is_graph_node(&run[i]) || i == run.len() - 1) {
                    continue;
                }
                let piece = &run[start..=i];
                start = i;
                let coords: Vec<(f64, f64)> = piece.iter().map(|r| (nodes[r].lat, nodes[r].lon)).collect();
                let length: f64 = coords.windows(2).map(|w| haversine_m(w[0], w[1])).sum();
                if length <= 0.0 || length.is_nan() {
                    builder.warn(format!("way {}: dropped zero-length piece", way.id));
                    continue;
                }
                let (mut from, mut to) = (piece[0], piece[piece.len() - 1]);
                let mut interior = coords[1..coords.len() - 1].to_vec();
                if reverse {
                    std::mem::swap(&mut from, &mut to);
                    interior.reverse();
                }
                for id in [from, to] {
                    let raw = &nodes[&id];
                    let mut n = GraphNode::new(id, raw.lat, raw.lon);
                    n.height_m = raw.ele.unwrap_or(0.0);
                    builder.add_node(n)?;
                }
                builder.add_segment(SegmentSpec {
                    osmid: way.id,
                    from,
                    to,
                    highway: highway.clone(),
                    oneway,
                    length_m: Some(length),
                    speed_kph: None,
                    maxspeed: tag("maxspeed").cloned(),
                    travel_time_s: None,
                    bridge: truthy(tag("bridge")),
                    tunnel: truthy(tag("tunnel")),
                    junction: junction.clone(),
                    lanes,
                    interior,
                    row: None,
                });
            }
        }
    }
    Ok(OsmParse {
        graph: builder.build()?,
        skipped_ways,
    })
}
