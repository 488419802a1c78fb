//! Planar geometry helpers.
//!
//! All planar geometry uses an equirectangular projection about the center of
//! the analysis bounding box, in meters. At city scale the distortion is far
//! below GPS noise.

use serde::{Deserialize, Serialize};

pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn dist2(self, o: Point) -> f64 {
        let d = self.sub(o);
        d.dot(d)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.dist2(o).sqrt()
    }

    pub fn lerp(self, o: Point, s: f64) -> Point {
        Point::new(self.x + (o.x - self.x) * s, self.y + (o.y - self.y) * s)
    }
}

/// Equirectangular projection about a fixed center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub lon_c: f64,
    pub lat_c: f64,
}

impl Projection {
    pub fn new(lon_c: f64, lat_c: f64) -> Self {
        Projection { lon_c, lat_c }
    }

    pub fn forward(&self, lon: f64, lat: f64) -> Point {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        Point::new(
            k * (lon - self.lon_c) * self.lat_c.to_radians().cos(),
            k * (lat - self.lat_c),
        )
    }

    pub fn inverse(&self, p: Point) -> (f64, f64) {
        let k = EARTH_RADIUS_M * std::f64::consts::PI / 180.0;
        (
            self.lon_c + p.x / (k * self.lat_c.to_radians().cos()),
            self.lat_c + p.y / k,
        )
    }
}

/// Axis-aligned rectangle in planar coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min: Point,
    pub max: Point,
}

impl Rect {
    pub fn new(min: Point, max: Point) -> Self {
        Rect { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn diagonal(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Counter-clockwise ring of the four corners.
    pub fn to_polygon(&self) -> Polygon {
        Polygon::new(vec![
            self.min,
            Point::new(self.max.x, self.min.y),
            self.max,
            Point::new(self.min.x, self.max.y),
        ])
    }
}

/// Simple polygon as an open ring (first vertex not repeated).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

/// Position of a point relative to a convex polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Containment {
    Inside,
    Boundary,
    Outside,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() < 3
    }

    /// Signed shoelace area; positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        ring_signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn bounds(&self) -> Option<Rect> {
        let first = *self.vertices.first()?;
        let mut r = Rect::new(first, first);
        for v in &self.vertices[1..] {
            r.min.x = r.min.x.min(v.x);
            r.min.y = r.min.y.min(v.y);
            r.max.x = r.max.x.max(v.x);
            r.max.y = r.max.y.max(v.y);
        }
        Some(r)
    }

    /// Keeps the part of a convex polygon where `normal · p <= offset`
    /// (Sutherland-Hodgman against a single line).
    pub fn clip_half_plane(&self, normal: Point, offset: f64) -> Polygon {
        let n = self.vertices.len();
        let mut out = Vec::with_capacity(n + 1);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let da = normal.dot(a) - offset;
            let db = normal.dot(b) - offset;
            if da <= 0.0 {
                out.push(a);
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                out.push(a.lerp(b, da / (da - db)));
            }
        }
        Polygon::new(out)
    }

    /// Classifies `p` against a counter-clockwise convex polygon. Points within
    /// `eps` of an edge line (and not outside another) are on the boundary.
    pub fn classify_convex(&self, p: Point, eps: f64) -> Containment {
        let mut on_edge = false;
        for (a, b) in self.edges() {
            let e = b.sub(a);
            let len = e.dot(e).sqrt();
            if len == 0.0 {
                continue;
            }
            let d = e.cross(p.sub(a)) / len;
            if d < -eps {
                return Containment::Outside;
            }
            if d <= eps {
                on_edge = true;
            }
        }
        if on_edge {
            Containment::Boundary
        } else {
            Containment::Inside
        }
    }

    pub fn centroid(&self) -> Option<Point> {
        let a = self.signed_area();
        if a == 0.0 {
            return None;
        }
        let (mut cx, mut cy) = (0.0, 0.0);
        for (p, q) in self.edges() {
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        Some(Point::new(cx / (6.0 * a), cy / (6.0 * a)))
    }
}

pub fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        s += ring[i].cross(ring[(i + 1) % n]);
    }
    0.5 * s
}

/// Length over which two segments overlap when they lie on a common line
/// (within `eps`), otherwise zero.
pub fn collinear_overlap(a0: Point, a1: Point, b0: Point, b1: Point, eps: f64) -> f64 {
    let dir = a1.sub(a0);
    let len = dir.dot(dir).sqrt();
    if len == 0.0 {
        return 0.0;
    }
    let u = Point::new(dir.x / len, dir.y / len);
    let off0 = u.cross(b0.sub(a0));
    let off1 = u.cross(b1.sub(a0));
    if off0.abs() > eps || off1.abs() > eps {
        return 0.0;
    }
    let s0 = u.dot(b0.sub(a0));
    let s1 = u.dot(b1.sub(a0));
    let (lo, hi) = if s0 < s1 { (s0, s1) } else { (s1, s0) };
    (hi.min(len) - lo.max(0.0)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_round_trips() {
        let p = Projection::new(104.06, 30.67);
        let q = p.forward(104.1, 30.6);
        let (lon, lat) = p.inverse(q);
        assert!((lon - 104.1).abs() < 1e-12);
        assert!((lat - 30.6).abs() < 1e-12);
        assert_eq!(p.forward(104.06, 30.67), Point::new(0.0, 0.0));
    }

    #[test]
    fn half_plane_clip_halves_square() {
        let sq = Rect::new(Point::new(0.0, 0.0), Point::new(2.0, 2.0)).to_polygon();
        let left = sq.clip_half_plane(Point::new(1.0, 0.0), 1.0);
        assert!((left.area() - 2.0).abs() < 1e-12);
        assert!(left.signed_area() > 0.0);
        let none = sq.clip_half_plane(Point::new(1.0, 0.0), -1.0);
        assert!(none.is_empty());
    }

    #[test]
    fn convex_classification() {
        let sq = Rect::new(Point::new(0.0, 0.0), Point::new(1.0, 1.0)).to_polygon();
        assert_eq!(
            sq.classify_convex(Point::new(0.5, 0.5), 1e-9),
            Containment::Inside
        );
        assert_eq!(
            sq.classify_convex(Point::new(1.0, 0.5), 1e-9),
            Containment::Boundary
        );
        assert_eq!(
            sq.classify_convex(Point::new(1.5, 0.5), 1e-9),
            Containment::Outside
        );
    }

    #[test]
    fn overlap_of_shared_edge() {
        let l = collinear_overlap(
            Point::new(0.0, 0.0),
            Point::new(2.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(1.0, 0.0),
            1e-9,
        );
        assert!((l - 1.0).abs() < 1e-12);
        let corner = collinear_overlap(
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(2.0, 0.0),
            1e-9,
        );
        assert_eq!(corner, 0.0);
    }
}
