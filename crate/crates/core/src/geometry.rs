//! Planar geometry helpers in metric map coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point(pub f64, pub f64);

impl Point {
    pub fn x(self) -> f64 {
        self.0
    }

    pub fn y(self) -> f64 {
        self.1
    }

    pub fn sub(self, o: Point) -> Point {
        Point(self.0 - o.0, self.1 - o.1)
    }

    pub fn add(self, o: Point) -> Point {
        Point(self.0 + o.0, self.1 + o.1)
    }

    pub fn scale(self, k: f64) -> Point {
        Point(self.0 * k, self.1 * k)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.0 * o.0 + self.1 * o.1
    }

    pub fn cross(self, o: Point) -> f64 {
        self.0 * o.1 - self.1 * o.0
    }

    pub fn norm(self) -> f64 {
        self.0.hypot(self.1)
    }

    pub fn dist(self, o: Point) -> f64 {
        self.sub(o).norm()
    }

    pub fn from_polar(heading: f64, r: f64) -> Point {
        Point(r * heading.cos(), r * heading.sin())
    }
}

/// Wrap an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut a = a % (2.0 * PI);
    if a > PI {
        a -= 2.0 * PI;
    } else if a <= -PI {
        a += 2.0 * PI;
    }
    a
}

/// Even-odd point-in-polygon test. Points on the boundary may go either way.
pub fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let n = poly.len();
    if n < 3 {
        return false;
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) * (b.0 - a.0) / (b.1 - a.1);
            if p.0 < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    b.sub(a).cross(c.sub(a))
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.0 >= a.0.min(b.0) && p.0 <= a.0.max(b.0) && p.1 >= a.1.min(b.1) && p.1 <= a.1.max(b.1)
}

pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(c, d, a), orient(c, d, b));
    let (d3, d4) = (orient(a, b, c), orient(a, b, d));
    if ((d1 > 0.0) != (d2 > 0.0))
        && ((d3 > 0.0) != (d4 > 0.0))
        && d1 != 0.0
        && d2 != 0.0
        && d3 != 0.0
        && d4 != 0.0
    {
        return true;
    }
    (d1 == 0.0 && on_segment(c, d, a))
        || (d2 == 0.0 && on_segment(c, d, b))
        || (d3 == 0.0 && on_segment(a, b, c))
        || (d4 == 0.0 && on_segment(a, b, d))
}

pub fn polygons_intersect(a: &[Point], b: &[Point]) -> bool {
    if a.iter().any(|p| point_in_polygon(*p, b)) || b.iter().any(|p| point_in_polygon(*p, a)) {
        return true;
    }
    for i in 0..a.len() {
        let (p1, p2) = (a[i], a[(i + 1) % a.len()]);
        for j in 0..b.len() {
            if segments_intersect(p1, p2, b[j], b[(j + 1) % b.len()]) {
                return true;
            }
        }
    }
    false
}

/// Closest point on a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub distance: f64,
    /// Arc length from the first vertex to the foot point.
    pub arc: f64,
    pub length: f64,
    /// Direction of the segment containing the foot point.
    pub heading: f64,
}

impl Projection {
    pub fn fraction(&self) -> f64 {
        if self.length > 0.0 {
            (self.arc / self.length).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn project_onto_polyline(p: Point, line: &[Point]) -> Option<Projection> {
    if line.len() < 2 {
        return None;
    }
    let mut best: Option<Projection> = None;
    let mut run = 0.0;
    let length: f64 = line.windows(2).map(|w| w[0].dist(w[1])).sum();
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let ab = b.sub(a);
        let seg = ab.norm();
        let t = if seg > 0.0 {
            (p.sub(a).dot(ab) / (seg * seg)).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let foot = a.add(ab.scale(t));
        let d = p.dist(foot);
        if best.is_none_or(|b| d < b.distance) {
            best = Some(Projection {
                distance: d,
                arc: run + t * seg,
                length,
                heading: ab.1.atan2(ab.0),
            });
        }
        run += seg;
    }
    best
}

/// Circular sector ahead of a pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sector {
    pub apex: Point,
    pub heading: f64,
    pub half_angle: f64,
    pub radius: f64,
}

impl Sector {
    const ARC_SAMPLES: usize = 16;

    pub fn contains(&self, p: Point) -> bool {
        let v = p.sub(self.apex);
        let r = v.norm();
        if r > self.radius {
            return false;
        }
        if r == 0.0 {
            return true;
        }
        wrap_angle(v.1.atan2(v.0) - self.heading).abs() <= self.half_angle
    }

    /// Convex polygon inscribed in the sector. Shrinking the radius yields a
    /// polygon contained in the larger one.
    pub fn polygon(&self) -> Vec<Point> {
        let mut pts = Vec::with_capacity(Self::ARC_SAMPLES + 2);
        pts.push(self.apex);
        for i in 0..=Self::ARC_SAMPLES {
            let t = i as f64 / Self::ARC_SAMPLES as f64;
            let a = self.heading - self.half_angle + 2.0 * self.half_angle * t;
            pts.push(self.apex.add(Point::from_polar(a, self.radius)));
        }
        pts
    }

    pub fn intersects_polygon(&self, poly: &[Point]) -> bool {
        poly.iter().any(|p| self.contains(*p)) || polygons_intersect(&self.polygon(), poly)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
        vec![Point(x0, y0), Point(x1, y0), Point(x1, y1), Point(x0, y1)]
    }

    #[test]
    fn wrap() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-PI / 2.0 - 2.0 * PI) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn polygon_containment() {
        let sq = square(0.0, 0.0, 2.0, 2.0);
        assert!(point_in_polygon(Point(1.0, 1.0), &sq));
        assert!(!point_in_polygon(Point(3.0, 1.0), &sq));
    }

    #[test]
    fn projection_fraction() {
        let line = [Point(0.0, 0.0), Point(10.0, 0.0), Point(30.0, 0.0)];
        let p = project_onto_polyline(Point(15.0, 2.0), &line).unwrap();
        assert!((p.distance - 2.0).abs() < 1e-12);
        assert!((p.fraction() - 0.5).abs() < 1e-12);
        assert_eq!(p.heading, 0.0);
    }

    #[test]
    fn sector_membership() {
        let s = Sector {
            apex: Point(0.0, 0.0),
            heading: 0.0,
            half_angle: PI / 4.0,
            radius: 15.0,
        };
        assert!(s.contains(Point(8.0, 0.0)));
        assert!(s.contains(Point(8.0, 7.9)));
        assert!(!s.contains(Point(8.0, 8.1)));
        assert!(!s.contains(Point(-1.0, 0.0)));
        assert!(!s.contains(Point(16.0, 0.0)));
    }

    #[test]
    fn sector_crossing_polygon() {
        let s = Sector {
            apex: Point(0.0, 0.0),
            heading: 0.0,
            half_angle: PI / 4.0,
            radius: 15.0,
        };
        // a thin strip across the road, all vertices outside the sector
        assert!(s.intersects_polygon(&square(10.0, -20.0, 11.0, 20.0)));
        assert!(!s.intersects_polygon(&square(-10.0, -20.0, -2.0, 20.0)));
        assert!(!s.intersects_polygon(&square(20.0, -2.0, 22.0, 2.0)));
    }
}
