mod support;

use frostroute::route::{compare_routes, search, shortest_path, shortest_path_with_stats, CostParams};
use frostroute::RateTables;
use rand::Rng;
use support::*;

#[test]
fn dijkstra_matches_enumeration_on_small_graphs() {
    let cfg = sample_config();
    let tables = RateTables::from_config(&cfg).unwrap();
    let mut r = rng(11);
    for _ in 0..60 {
        let n = r.gen_range(1..=7);
        let g = random_small_graph(&mut r, n);
        let conds = random_conditions(&mut r, &g);
        let alpha = [0.0, 0.5, 3.0][r.gen_range(0..3)];
        let costs = oracle_costs(&cfg, &g, &conds, alpha);
        let params = CostParams::new(alpha, &tables).unwrap();
        for s in 0..n {
            for d in 0..n {
                let (src, dst) = (g.node_at(s).node_id, g.node_at(d).node_id);
                let got = shortest_path(&g, &conds, &tables, src, dst, &params).unwrap();
                let want = if s == d { Some(0.0) } else { enumerate_min_cost(&g, &costs, s, d) };
                assert_eq!(got.map(|x| x.total_cost), want, "{src}->{dst}");
            }
        }
    }
}

#[test]
fn astar_agrees_and_expands_less() {
    let cfg = sample_config();
    let tables = RateTables::from_config(&cfg).unwrap();
    let mut r = rng(12);
    for _ in 0..8 {
        let g = random_geometric_graph(&mut r, 200, false);
        let conds = random_conditions(&mut r, &g);
        let params = CostParams::new(r.gen_range(0.0..4.0), &tables).unwrap();
        for _ in 0..5 {
            let s = g.node_at(r.gen_range(0..g.node_count())).node_id;
            let d = g.node_at(r.gen_range(0..g.node_count())).node_id;
            let (a, sa) = shortest_path_with_stats(&g, &conds, &tables, s, d, &params, true).unwrap();
            let (b, sb) = shortest_path_with_stats(&g, &conds, &tables, s, d, &params, false).unwrap();
            match (a, b) {
                (Some(a), Some(b)) => {
                    assert!((a.total_cost - b.total_cost).abs() <= 1e-9 * b.total_cost.max(1.0));
                    assert!(sa.expanded <= sb.expanded, "{} > {}", sa.expanded, sb.expanded);
                }
                (None, None) => {}
                other => panic!("reachability differs: {other:?}"),
            }
        }
    }
}

#[test]
fn alpha_zero_is_pure_travel_time() {
    let cfg = sample_config();
    let tables = RateTables::from_config(&cfg).unwrap();
    let mut r = rng(13);
    let g = random_geometric_graph(&mut r, 150, false);
    let conds = random_conditions(&mut r, &g);
    let times: Vec<f64> = g.edges().iter().map(|e| e.travel_time_s).collect();
    let params = CostParams::new(0.0, &tables).unwrap();
    for _ in 0..20 {
        let (s, d) = (r.gen_range(0..g.node_count()), r.gen_range(0..g.node_count()));
        let (path, _) = search(&g, &times, s, d, |_| 0.0);
        let got = shortest_path(&g, &conds, &tables, g.node_at(s).node_id, g.node_at(d).node_id, &params).unwrap();
        if s == d {
            assert!(got.unwrap().edge_seq.is_empty());
        } else {
            assert_eq!(got.map(|x| x.edge_seq), path);
        }
    }
}

#[test]
fn compare_routes_trades_time_for_risk() {
    let tables = RateTables::sample();
    let mut r = rng(14);
    let alphas = [5.0, 0.0, 0.25, 1.0, 2.0, 10.0];
    for _ in 0..6 {
        let g = random_geometric_graph(&mut r, 120, false);
        let conds = random_conditions(&mut r, &g);
        for _ in 0..5 {
            let s = g.node_at(r.gen_range(0..g.node_count())).node_id;
            let d = g.node_at(r.gen_range(0..g.node_count())).node_id;
            let Some(out) = compare_routes(&g, &conds, &tables, s, d, &alphas).unwrap() else {
                continue;
            };
            assert!(out.windows(2).all(|w| w[0].0 <= w[1].0));
            for w in out.windows(2) {
                let (a, b) = (&w[0].1, &w[1].1);
                assert!(b.total_time_s >= a.total_time_s * (1.0 - 1e-9), "time dropped");
                assert!(b.risk_sum <= a.risk_sum * (1.0 + 1e-9), "risk grew");
            }
        }
    }
}
