//! k-d tree over standardized training vectors.

use crate::scalar::{cmp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor<T> {
    pub index: usize,
    pub dist2: T,
}

#[derive(Debug, Clone, Default)]
pub struct KdTree {
    /// Point indices in tree order; the subtree over `order[lo..hi]` splits
    /// at its midpoint on `depth % dims`.
    order: Vec<usize>,
    dims: usize,
}

#[inline]
pub fn squared_distance<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (x, y)| {
        let d = *x - *y;
        acc + d * d
    })
}

impl KdTree {
    pub fn build<T: Scalar, P: AsRef<[T]>>(points: &[P]) -> Self {
        let dims = points.first().map_or(0, |p| p.as_ref().len());
        let mut order: Vec<usize> = (0..points.len()).collect();
        if dims > 0 {
            Self::build_rec(points, &mut order, 0, dims);
        }
        Self { order, dims }
    }

    fn build_rec<T: Scalar, P: AsRef<[T]>>(points: &[P], slice: &mut [usize], depth: usize, dims: usize) {
        if slice.len() <= 1 {
            return;
        }
        let axis = depth % dims;
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |&a, &b| cmp(points[a].as_ref()[axis], points[b].as_ref()[axis]).then(a.cmp(&b)));
        let (left, right) = slice.split_at_mut(mid);
        Self::build_rec(points, left, depth + 1, dims);
        Self::build_rec(points, &mut right[1..], depth + 1, dims);
    }

    /// All points whose squared distance is at most the k-th smallest,
    /// so ties at the k-th distance are all admitted. Sorted by
    /// `(dist2, index)`.
    pub fn k_nearest_with_ties<T: Scalar, P: AsRef<[T]>>(&self, points: &[P], query: &[T], k: usize) -> Vec<Neighbor<T>> {
        if points.is_empty() || k == 0 {
            return Vec::new();
        }
        let k = k.min(points.len());
        // bounded list of the k best distances, ascending
        let mut best: Vec<T> = Vec::with_capacity(k + 1);
        self.knn_rec(points, query, 0, self.order.len(), 0, k, &mut best);
        let radius = *best.last().expect("k >= 1 and points non-empty");
        let mut out = Vec::new();
        self.range_rec(points, query, 0, self.order.len(), 0, radius, &mut out);
        out.sort_by(|a, b| cmp(a.dist2, b.dist2).then(a.index.cmp(&b.index)));
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn knn_rec<T: Scalar, P: AsRef<[T]>>(&self, points: &[P], q: &[T], lo: usize, hi: usize, depth: usize, k: usize, best: &mut Vec<T>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.order[mid];
        let d = squared_distance(points[p].as_ref(), q);
        if best.len() < k || d < *best.last().expect("non-empty") {
            let pos = best.partition_point(|x| *x <= d);
            best.insert(pos, d);
            best.truncate(k);
        }
        let axis = depth % self.dims;
        let diff = q[axis] - points[p].as_ref()[axis];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(points, q, near.0, near.1, depth + 1, k, best);
        if best.len() < k || diff * diff <= *best.last().expect("non-empty") {
            self.knn_rec(points, q, far.0, far.1, depth + 1, k, best);
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn range_rec<T: Scalar, P: AsRef<[T]>>(&self, points: &[P], q: &[T], lo: usize, hi: usize, depth: usize, r2: T, out: &mut Vec<Neighbor<T>>) {
        if lo >= hi {
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let p = self.order[mid];
        let d = squared_distance(points[p].as_ref(), q);
        if d <= r2 {
            out.push(Neighbor { index: p, dist2: d });
        }
        let axis = depth % self.dims;
        let diff = q[axis] - points[p].as_ref()[axis];
        let (near, far) = if diff < T::zero() {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.range_rec(points, q, near.0, near.1, depth + 1, r2, out);
        if diff * diff <= r2 {
            self.range_rec(points, q, far.0, far.1, depth + 1, r2, out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn matches_sorting_on_random_points() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for trial in 0..50 {
            let dims = 1 + trial % 4;
            // coarse grid values force many distance ties
            let pts: Vec<Vec<f64>> = (0..60)
                .map(|_| (0..dims).map(|_| rng.gen_range(0..5) as f64).collect())
                .collect();
            let tree = KdTree::build(&pts);
            let q: Vec<f64> = (0..dims).map(|_| rng.gen_range(0..5) as f64).collect();
            let k = rng.gen_range(1..10);
            let mut all: Vec<(f64, usize)> = pts.iter().enumerate().map(|(i, p)| (squared_distance(p, &q), i)).collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let kth = all[k - 1].0;
            let expect: Vec<usize> = all.iter().filter(|(d, _)| *d <= kth).map(|x| x.1).collect();
            let got: Vec<usize> = tree.k_nearest_with_ties(&pts, &q, k).iter().map(|n| n.index).collect();
            assert_eq!(got, expect);
        }
    }

    #[test]
    fn k_larger_than_points() {
        let pts = vec![vec![0.0], vec![1.0]];
        let tree = KdTree::build(&pts);
        assert_eq!(tree.k_nearest_with_ties(&pts, &[0.2], 5).len(), 2);
    }
}
