//! Edge-list CSV, the offline graph format and the export format of
//! `build-graph`.
//!
//! One row per road segment. A row with `oneway=false` produces both
//! directed edges. Node coordinates may be left empty when the node is
//! positioned by another row. Empty `length_m`, `speed_kph` or
//! `travel_time_s` cells are derived from geometry and the speed table.
//! `geometry` lists interior vertices as `lat lon` pairs separated by `;`.

use std::collections::HashMap;
use std::io::{Read, Write};

use super::{GraphBuilder, GraphError, GraphNode, NodeId, RoadGraph, SegmentSpec, SpeedTable};

pub const EDGE_CSV_HEADER: [&str; 19] = [
    "osmid",
    "from_node",
    "to_node",
    "from_lat",
    "from_lon",
    "from_ele",
    "to_lat",
    "to_lon",
    "to_ele",
    "highway",
    "oneway",
    "length_m",
    "speed_kph",
    "travel_time_s",
    "bridge",
    "tunnel",
    "junction",
    "lanes",
    "geometry",
];

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "" | "false" | "no" | "0" => Some(false),
        "true" | "yes" | "1" => Some(true),
        _ => None,
    }
}

fn parse_geometry(s: &str) -> Option<Vec<(f64, f64)>> {
    let s = s.trim();
    if s.is_empty() {
        return Some(Vec::new());
    }
    s.split(';')
        .map(|pair| {
            let mut it = pair.split_whitespace();
            let lat = it.next()?.parse().ok()?;
            let lon = it.next()?.parse().ok()?;
            it.next().is_none().then_some((lat, lon))
        })
        .collect()
}

pub fn load_edges_csv<R: Read>(source: R, speeds: &SpeedTable) -> Result<RoadGraph, GraphError> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(source);
    let headers = reader.headers()?.clone();
    let col: HashMap<&str, usize> = EDGE_CSV_HEADER
        .iter()
        .filter_map(|name| headers.iter().position(|h| h.trim() == *name).map(|i| (*name, i)))
        .collect();
    for required in ["from_node", "to_node", "highway"] {
        if !col.contains_key(required) {
            return Err(GraphError::Invariant(format!("edge csv is missing column `{required}`")));
        }
    }

    let mut builder = GraphBuilder::new().with_speed_table(speeds.clone());
    // node -> (lat, lon, ele, first row it was referenced on)
    let mut coords: HashMap<NodeId, (Option<(f64, f64)>, f64)> = HashMap::new();
    let mut first_ref: Vec<(NodeId, usize)> = Vec::new();
    let mut segments = Vec::new();

    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let bad = |field: &str, msg: &str| GraphError::Row {
            row,
            message: format!("{field}: {msg}"),
        };
        let cell = |name: &str| col.get(name).and_then(|&c| rec.get(c)).map(str::trim).unwrap_or("");
        let opt_f64 = |name: &str| -> Result<Option<f64>, GraphError> {
            let raw = cell(name);
            if raw.is_empty() {
                return Ok(None);
            }
            raw.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Some)
                .ok_or_else(|| bad(name, "not a finite number"))
        };
        let node_id = |name: &str| -> Result<NodeId, GraphError> {
            cell(name).parse().map_err(|_| bad(name, "not an integer node id"))
        };

        let from = node_id("from_node")?;
        let to = node_id("to_node")?;
        for (id, lat, lon, ele) in [(from, "from_lat", "from_lon", "from_ele"), (to, "to_lat", "to_lon", "to_ele")] {
            let pos = match (opt_f64(lat)?, opt_f64(lon)?) {
                (Some(a), Some(b)) => Some((a, b)),
                (None, None) => None,
                _ => return Err(bad(lat, "latitude and longitude must both be given")),
            };
            let height = opt_f64(ele)?.unwrap_or(0.0);
            let entry = coords.entry(id).or_insert_with(|| {
                first_ref.push((id, row));
                (None, 0.0)
            });
            if let Some(p) = pos {
                if entry.0.is_some_and(|q| q != p) {
                    return Err(GraphError::ConflictingNode(id));
                }
                *entry = (Some(p), height);
            }
        }

        let lanes = match cell("lanes") {
            "" => None,
            s => Some(s.parse::<u32>().map_err(|_| bad("lanes", "not an integer"))?),
        };
        let junction = Some(cell("junction")).filter(|s| !s.is_empty()).map(str::to_string);
        let seg = SegmentSpec {
            osmid: match cell("osmid") {
                "" => 0,
                s => s.parse().map_err(|_| bad("osmid", "not an integer"))?,
            },
            from,
            to,
            highway: cell("highway").to_string(),
            oneway: parse_bool(cell("oneway")).ok_or_else(|| bad("oneway", "not a boolean"))?,
            length_m: opt_f64("length_m")?,
            speed_kph: opt_f64("speed_kph")?,
            maxspeed: None,
            travel_time_s: opt_f64("travel_time_s")?,
            bridge: parse_bool(cell("bridge")).ok_or_else(|| bad("bridge", "not a boolean"))?,
            tunnel: parse_bool(cell("tunnel")).ok_or_else(|| bad("tunnel", "not a boolean"))?,
            junction,
            lanes,
            interior: parse_geometry(cell("geometry")).ok_or_else(|| bad("geometry", "expected `lat lon;lat lon`"))?,
            row: Some(row),
        };
        if let Some(len) = seg.length_m {
            if len <= 0.0 {
                return Err(bad("length_m", "must be positive"));
            }
        }
        segments.push(seg);
    }

    for (id, row) in first_ref {
        match coords[&id] {
            (Some((lat, lon)), height_m) => builder.add_node(GraphNode {
                node_id: id,
                lat,
                lon,
                height_m,
            })?,
            (None, _) => return Err(GraphError::DanglingNode { row, node: id }),
        }
    }
    for s in segments {
        builder.add_segment(s);
    }
    builder.build()
}

/// Writes one row per forward edge; reloading yields identical edge ids.
pub fn write_edges_csv<W: Write>(sink: W, graph: &RoadGraph) -> Result<(), GraphError> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(EDGE_CSV_HEADER)?;
    for e in graph.edges().iter().filter(|e| !e.reversed) {
        let f = graph.node(e.from_node).expect("endpoint");
        let t = graph.node(e.to_node).expect("endpoint");
        let interior = &e.geometry[1..e.geometry.len() - 1];
        let geometry = interior
            .iter()
            .map(|(a, b)| format!("{a} {b}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            e.osmid.to_string(),
            e.from_node.to_string(),
            e.to_node.to_string(),
            f.lat.to_string(),
            f.lon.to_string(),
            f.height_m.to_string(),
            t.lat.to_string(),
            t.lon.to_string(),
            t.height_m.to_string(),
            e.highway.clone(),
            e.oneway.to_string(),
            e.length_m.to_string(),
            e.speed_kph.to_string(),
            e.travel_time_s.to_string(),
            e.bridge.to_string(),
            e.tunnel.to_string(),
            e.junction.clone().unwrap_or_default(),
            e.lanes.map(|l| l.to_string()).unwrap_or_default(),
            geometry,
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = "from_node,to_node,from_lat,from_lon,to_lat,to_lon,highway,oneway\n\
        1,2,68.43,17.42,68.44,17.43,residential,false\n\
        2,3,,,68.435,17.44,residential,false\n\
        3,1,,,,,primary,no\n";

    fn load(s: &str) -> Result<RoadGraph, GraphError> {
        load_edges_csv(s.as_bytes(), &SpeedTable::default())
    }

    #[test]
    fn triangle_fixture() {
        let g = load(TRIANGLE).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 6);
        g.check_invariants().unwrap();
        assert_eq!(g.edges()[4].speed_kph, 60.0);
    }

    #[test]
    fn dangling_node_names_row() {
        let csv = "from_node,to_node,from_lat,from_lon,to_lat,to_lon,highway,oneway\n\
                   1,2,68.43,17.42,68.44,17.43,residential,false\n\
                   2,9,,,,,residential,false\n";
        match load(csv) {
            Err(GraphError::DanglingNode { row, node }) => assert_eq!((row, node), (2, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn zero_length_is_fatal() {
        let csv = "from_node,to_node,from_lat,from_lon,to_lat,to_lon,highway,oneway,length_m\n\
                   1,2,68.43,17.42,68.44,17.43,residential,false,0\n";
        assert!(matches!(load(csv), Err(GraphError::Row { row: 1, .. })));
    }

    #[test]
    fn export_reload_identical() {
        let mut csv = String::from(TRIANGLE);
        csv = csv.replace("3,1,,,,,primary,no", "3,1,,,,,primary,yes");
        let g = load(&csv).unwrap();
        let mut buf = Vec::new();
        write_edges_csv(&mut buf, &g).unwrap();
        let back = load_edges_csv(buf.as_slice(), &SpeedTable::default()).unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.nodes(), g.nodes());
    }

    #[test]
    fn geometry_cells() {
        assert_eq!(parse_geometry(""), Some(vec![]));
        assert_eq!(parse_geometry("1 2;3.5 4"), Some(vec![(1.0, 2.0), (3.5, 4.0)]));
        assert_eq!(parse_geometry("1 2 3"), None);
    }
}
