//! Planar geometry in image pixels (origin top-left, y down).

use serde::{Deserialize, Serialize};
use std::ops::{Add, Mul, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product. In the y-down image frame a
    /// positive value means `o` is clockwise from `self` on screen.
    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn midpoint(&self) -> Point {
        (self.a + self.b) * 0.5
    }

    /// Parameter `s ∈ [0, 1]` along the motion `p → q` at which it crosses this
    /// segment, if it does. Touching the end of the motion counts; touching the
    /// start does not, so a path sampled point by point reports each crossing once.
    pub fn crossing_param(&self, p: Point, q: Point) -> Option<f64> {
        let r = q - p;
        let s = self.b - self.a;
        let denom = r.cross(s);
        if denom.abs() < 1e-12 {
            return None;
        }
        let ap = self.a - p;
        let t = ap.cross(s) / denom;
        let u = ap.cross(r) / denom;
        if t > 0.0 && t <= 1.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }
}

/// Simple polygon, vertices in order, implicitly closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon(pub Vec<Point>);

impl Polygon {
    pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Polygon(vec![
            Point::new(x0, y0),
            Point::new(x1, y0),
            Point::new(x1, y1),
            Point::new(x0, y1),
        ])
    }

    /// Even-odd containment test.
    pub fn contains(&self, p: Point) -> bool {
        let v = &self.0;
        let n = v.len();
        if n < 3 {
            return false;
        }
        let mut inside = false;
        let mut j = n - 1;
        for i in 0..n {
            let (a, b) = (v[i], v[j]);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
            j = i;
        }
        inside
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| Segment::new(self.0[i], self.0[(i + 1) % n]))
    }
}

/// Orthogonal projection of `p` onto a polyline: returns (arc length from the
/// first vertex, distance from the polyline).
pub fn project_onto_polyline(line: &[Point], p: Point) -> Option<(f64, f64)> {
    if line.len() < 2 {
        return None;
    }
    let mut best: Option<(f64, f64)> = None;
    let mut acc = 0.0;
    for w in line.windows(2) {
        let (a, b) = (w[0], w[1]);
        let d = b - a;
        let len2 = d.dot(d);
        let len = len2.sqrt();
        let t = if len2 > 0.0 {
            ((p - a).dot(d) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let foot = a + d * t;
        let dist = p.dist(foot);
        if best.is_none_or(|(_, bd)| dist < bd) {
            best = Some((acc + t * len, dist));
        }
        acc += len;
    }
    best
}

pub fn polyline_length(line: &[Point]) -> f64 {
    line.windows(2).map(|w| w[0].dist(w[1])).sum()
}

/// Least-squares direction of travel through a run of points (principal axis,
/// oriented from the first towards the last point). Unit length, or `None`
/// when the points do not move.
pub fn fit_heading(points: &[Point]) -> Option<Point> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mean = points.iter().fold(Point::default(), |acc, &p| acc + p) * (1.0 / n);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for &p in points {
        let d = p - mean;
        sxx += d.x * d.x;
        syy += d.y * d.y;
        sxy += d.x * d.y;
    }
    if sxx + syy < 1e-18 {
        return None;
    }
    let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    let mut dir = Point::new(theta.cos(), theta.sin());
    let travel = *points.last().unwrap() - points[0];
    if dir.dot(travel) < 0.0 {
        dir = dir * -1.0;
    }
    Some(dir)
}

/// Signed angle in degrees from heading `a` to heading `b`, in (-180, 180].
/// Positive is clockwise on screen (y down).
pub fn signed_angle_deg(a: Point, b: Point) -> f64 {
    a.cross(b).atan2(a.dot(b)).to_degrees()
}
