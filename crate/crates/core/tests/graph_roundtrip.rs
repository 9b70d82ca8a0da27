mod support;

use frostroute::roadgraph::{load_edges_csv, parse_osm_xml, write_edges_csv, SpeedTable};
use frostroute::RoadGraph;
use support::*;

fn round_trip(g: &RoadGraph) -> RoadGraph {
    let mut buf = Vec::new();
    write_edges_csv(&mut buf, g).unwrap();
    load_edges_csv(buf.as_slice(), &SpeedTable::default()).unwrap()
}

fn assert_same(a: &RoadGraph, b: &RoadGraph) {
    assert_eq!(a.node_count(), b.node_count());
    for n in a.nodes() {
        let m = b.node(n.node_id).expect("node survives");
        assert_eq!(m, n);
    }
    assert_eq!(a.edges(), b.edges());
    for e in 0..a.edge_count() {
        assert_eq!(a.twin(e), b.twin(e));
    }
    b.check_invariants().unwrap();
}

#[test]
fn random_graphs_survive_csv() {
    let mut r = rng(41);
    for interior in [false, true] {
        for _ in 0..5 {
            let g = random_geometric_graph(&mut r, 80, interior);
            let back = round_trip(&g);
            assert_same(&g, &back);
            assert_same(&back, &round_trip(&back));
        }
    }
}

#[test]
fn osm_graph_survives_csv() {
    let xml = r#"<?xml version="1.0"?>
<osm version="0.6">
  <node id="1" lat="68.4300" lon="17.4200"><tag k="ele" v="12"/></node>
  <node id="2" lat="68.4310" lon="17.4210"/>
  <node id="3" lat="68.4320" lon="17.4230"/>
  <node id="4" lat="68.4330" lon="17.4200"/>
  <node id="5" lat="68.4340" lon="17.4190"/>
  <way id="10"><nd ref="1"/><nd ref="2"/><nd ref="3"/><tag k="highway" v="primary"/><tag k="maxspeed" v="60"/></way>
  <way id="11"><nd ref="3"/><nd ref="4"/><nd ref="5"/><tag k="highway" v="residential"/><tag k="oneway" v="yes"/><tag k="bridge" v="yes"/></way>
  <way id="12"><nd ref="5"/><nd ref="99"/><tag k="highway" v="residential"/></way>
  <way id="13"><nd ref="4"/><nd ref="2"/><tag k="highway" v="footway"/></way>
</osm>"#;
    let parsed = parse_osm_xml(xml.as_bytes(), None, &SpeedTable::default()).unwrap();
    assert_eq!(parsed.graph.edge_count(), 3);
    assert_eq!(parsed.skipped_ways.len(), 1);
    assert_same(&parsed.graph, &round_trip(&parsed.graph));
}
