//! Great-circle helpers.

use crate::scalar::Scalar;

/// Mean Earth radius used by every distance computation in the crate.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Haversine distance in meters between two `(lat, lon)` pairs in degrees.
pub fn haversine_m<T: Scalar>(a: (T, T), b: (T, T)) -> T {
    let two = T::lit(2.0);
    let (lat1, lat2) = (a.0.to_radians(), b.0.to_radians());
    let dlat = (b.0 - a.0).to_radians();
    let dlon = (b.1 - a.1).to_radians();
    let s_lat = (dlat / two).sin();
    let s_lon = (dlon / two).sin();
    let h = s_lat * s_lat + lat1.cos() * lat2.cos() * s_lon * s_lon;
    let h = h.min(T::one()).max(T::zero());
    two * T::lit(EARTH_RADIUS_M) * h.sqrt().asin()
}

/// Meters per degree of latitude on the sphere of radius [`EARTH_RADIUS_M`].
#[inline]
pub fn meters_per_degree<T: Scalar>() -> T {
    T::lit(EARTH_RADIUS_M) * T::lit(std::f64::consts::PI) / T::lit(180.0)
}

/// Local equirectangular projection centred on a reference point.
///
/// The mapping from `(lat, lon)` to planar meters is affine, so straight
/// lat/lon segments stay straight in the plane.
#[derive(Debug, Clone, Copy)]
pub struct LocalProjection<T> {
    origin: (T, T),
    kx: T,
    ky: T,
}

impl<T: Scalar> LocalProjection<T> {
    pub fn new(origin: (T, T)) -> Self {
        let ky = meters_per_degree::<T>();
        let kx = ky * origin.0.to_radians().cos();
        Self { origin, kx, ky }
    }

    /// Planar `(x, y)` meters east and north of the origin.
    #[inline]
    pub fn project(&self, p: (T, T)) -> (T, T) {
        ((p.1 - self.origin.1) * self.kx, (p.0 - self.origin.0) * self.ky)
    }

    /// Meters per degree of longitude at the origin.
    pub fn meters_per_degree_lon(&self) -> T {
        self.kx
    }
}

/// Closest approach of a point to a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolylineProjection<T> {
    pub distance_m: T,
    /// Position of the foot point along the polyline, in `[0, 1]`.
    pub offset_fraction: T,
}

/// Distance from `p` to a polyline, measured in the local projection
/// centred on `p`. Ties between segments resolve to the earliest segment.
pub fn point_polyline_distance<T: Scalar>(p: (T, T), line: &[(T, T)]) -> PolylineProjection<T> {
    assert!(!line.is_empty(), "polyline needs at least one vertex");
    let proj = LocalProjection::new(p);
    let pts: Vec<(T, T)> = line.iter().map(|&q| proj.project(q)).collect();
    if pts.len() == 1 {
        let (x, y) = pts[0];
        return PolylineProjection {
            distance_m: x.hypot(y),
            offset_fraction: T::zero(),
        };
    }

    let mut best_d2 = T::infinity();
    let mut best_along = T::zero();
    let mut travelled = T::zero();
    for w in pts.windows(2) {
        let (ax, ay) = w[0];
        let (bx, by) = w[1];
        let (dx, dy) = (bx - ax, by - ay);
        let len2 = dx * dx + dy * dy;
        let seg_len = len2.sqrt();
        // p sits at the origin of the projection
        let t = if len2 > T::zero() {
            ((-ax) * dx + (-ay) * dy) / len2
        } else {
            T::zero()
        };
        let t = t.max(T::zero()).min(T::one());
        let fx = ax + t * dx;
        let fy = ay + t * dy;
        let d2 = fx * fx + fy * fy;
        if d2 < best_d2 {
            best_d2 = d2;
            best_along = travelled + t * seg_len;
        }
        travelled = travelled + seg_len;
    }
    let offset_fraction = if travelled > T::zero() {
        (best_along / travelled).max(T::zero()).min(T::one())
    } else {
        T::zero()
    };
    PolylineProjection {
        distance_m: best_d2.sqrt(),
        offset_fraction,
    }
}

/// Sum of haversine lengths of consecutive polyline vertices.
pub fn polyline_length_m<T: Scalar>(line: &[(T, T)]) -> T {
    line.windows(2)
        .fold(T::zero(), |acc, w| acc + haversine_m(w[0], w[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_is_zero() {
        assert_eq!(haversine_m((69.0, 17.0), (69.0, 17.0)), 0.0);
    }

    #[test]
    fn one_degree_on_equator() {
        // R * pi / 180 evaluated with extended precision: 111194.926644...
        let d: f64 = haversine_m((0.0, 0.0), (0.0, 1.0));
        assert!((d - 111_194.926_644_558_7).abs() < 1e-6, "{d}");
        assert!((d - 111_195.0).abs() <= 1.0);
    }

    #[test]
    fn f32_agrees_with_f64() {
        let a = haversine_m((68.43f32, 17.42f32), (68.44f32, 17.43f32));
        let b = haversine_m((68.43f64, 17.42f64), (68.44f64, 17.43f64));
        assert!((a as f64 - b).abs() < 0.5, "{a} vs {b}");
    }

    #[test]
    fn perpendicular_offset_from_segment() {
        let k: f64 = meters_per_degree();
        let line = [(68.0, 17.0), (68.0, 17.01)];
        let p = (68.0 + 10.0 / k, 17.005);
        let r = point_polyline_distance(p, &line);
        assert!((r.distance_m - 10.0).abs() < 1e-6, "{:?}", r);
        assert!((r.offset_fraction - 0.5).abs() < 1e-6);
    }

    #[test]
    fn vertex_hit_is_zero() {
        let line = [(68.0, 17.0), (68.001, 17.001), (68.002, 17.0)];
        let r = point_polyline_distance((68.001, 17.001), &line);
        assert_eq!(r.distance_m, 0.0);
    }
}
