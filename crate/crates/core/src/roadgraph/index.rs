use std::collections::{HashMap, HashSet};

use crate::geo::meters_per_degree;

use super::{EdgeId, RoadEdge};

const DEFAULT_CELL_DEG: f64 = 0.002;

/// Uniform lat/lon grid over edge bounding boxes.
///
/// Reverse twins are not indexed; their forward edge stands in for them.
#[derive(Debug, Clone)]
pub struct GridIndex {
    cell_lat: f64,
    cell_lon: f64,
    cells: HashMap<(i64, i64), Vec<EdgeId>>,
    /// Occupied cell range `(min_i, max_i, min_j, max_j)`.
    extent: Option<(i64, i64, i64, i64)>,
}

impl GridIndex {
    pub fn build(edges: &[RoadEdge], cell_deg: Option<f64>) -> Self {
        let cell_lat = cell_deg.unwrap_or(DEFAULT_CELL_DEG);
        let indexed: Vec<&RoadEdge> = edges.iter().filter(|e| !e.reversed).collect();
        let mean_lat = if indexed.is_empty() {
            0.0
        } else {
            indexed.iter().map(|e| e.geometry[0].0).sum::<f64>() / indexed.len() as f64
        };
        let cell_lon = cell_lat / mean_lat.to_radians().cos().max(0.1);
        let mut index = Self {
            cell_lat,
            cell_lon,
            cells: HashMap::new(),
            extent: None,
        };
        for e in indexed {
            let (mut lo_lat, mut hi_lat, mut lo_lon, mut hi_lon) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
            for &(lat, lon) in &e.geometry {
                lo_lat = lo_lat.min(lat);
                hi_lat = hi_lat.max(lat);
                lo_lon = lo_lon.min(lon);
                hi_lon = hi_lon.max(lon);
            }
            let (i0, j0) = index.cell_of((lo_lat, lo_lon));
            let (i1, j1) = index.cell_of((hi_lat, hi_lon));
            for i in i0..=i1 {
                for j in j0..=j1 {
                    index.cells.entry((i, j)).or_default().push(e.edge_id);
                }
            }
            index.extent = Some(match index.extent {
                None => (i0, i1, j0, j1),
                Some((a, b, c, d)) => (a.min(i0), b.max(i1), c.min(j0), d.max(j1)),
            });
        }
        index
    }

    pub fn cell_of(&self, p: (f64, f64)) -> (i64, i64) {
        ((p.0 / self.cell_lat).floor() as i64, (p.1 / self.cell_lon).floor() as i64)
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    /// Exact nearest indexed edge within `radius_m` under `dist`, which
    /// returns `(distance_m, payload)` for an edge id. Rings of cells are
    /// scanned outward until no unvisited cell can hold anything closer.
    pub fn nearest<F>(&self, p: (f64, f64), radius_m: f64, mut dist: F) -> Option<(EdgeId, f64, f64)>
    where
        F: FnMut(EdgeId) -> (f64, f64),
    {
        let (min_i, max_i, min_j, max_j) = self.extent?;
        let (qi, qj) = self.cell_of(p);
        let max_ring = (qi - min_i).abs().max((qi - max_i).abs()).max((qj - min_j).abs()).max((qj - max_j).abs());
        let ky: f64 = meters_per_degree();
        let kx = ky * p.0.to_radians().cos();
        let ring_step_m = (self.cell_lat * ky).min(self.cell_lon * kx).max(0.0);

        let mut visited: HashSet<EdgeId> = HashSet::new();
        let mut best: Option<(EdgeId, f64, f64)> = None;
        let mut consider = |id: EdgeId, best: &mut Option<(EdgeId, f64, f64)>| {
            if !visited.insert(id) {
                return;
            }
            let (d, payload) = dist(id);
            let better = match best {
                None => true,
                Some((bid, bd, _)) => d < *bd || (d == *bd && id < *bid),
            };
            if better {
                *best = Some((id, d, payload));
            }
        };

        for r in 0..=max_ring {
            for (i, j) in ring_cells(qi, qj, r) {
                if let Some(ids) = self.cells.get(&(i, j)) {
                    for &id in ids {
                        consider(id, &mut best);
                    }
                }
            }
            // anything unvisited lies strictly beyond this distance
            let bound = r as f64 * ring_step_m * (1.0 - 1e-12);
            if best.is_some_and(|(_, d, _)| d <= bound) || bound > radius_m {
                break;
            }
        }
        best.filter(|&(_, d, _)| d <= radius_m)
    }
}

fn ring_cells(ci: i64, cj: i64, r: i64) -> Box<dyn Iterator<Item = (i64, i64)>> {
    if r == 0 {
        return Box::new(std::iter::once((ci, cj)));
    }
    let top_bottom = (cj - r..=cj + r).flat_map(move |j| [(ci - r, j), (ci + r, j)]);
    let sides = (ci - r + 1..=ci + r - 1).flat_map(move |i| [(i, cj - r), (i, cj + r)]);
    Box::new(top_bottom.chain(sides))
}
