//! Crossing-time helpers shared by the kinematics and safety stages.

use crate::geom::{Point, Polygon, Segment};
use crate::model::Trajectory;

/// Every time the center path crosses the segment, interpolated between frames.
pub fn crossing_times(traj: &Trajectory, seg: &Segment) -> Vec<f64> {
    crossings_of(&traj.points.iter().map(|p| (p.time_s, p.center)).collect::<Vec<_>>(), seg)
}

pub fn crossings_of(path: &[(f64, Point)], seg: &Segment) -> Vec<f64> {
    path.windows(2)
        .filter_map(|w| {
            let ((t0, p0), (t1, p1)) = (w[0], w[1]);
            seg.crossing_param(p0, p1).map(|s| t0 + s * (t1 - t0))
        })
        .collect()
}

pub fn first_crossing(traj: &Trajectory, seg: &Segment) -> Option<f64> {
    crossing_times(traj, seg).into_iter().next()
}

/// Occupancy intervals `(t_in, t_out)` of a center path inside a polygon, with
/// entry and exit instants interpolated on the polygon edges.
pub fn occupancy_intervals(path: &[(f64, Point)], poly: &Polygon) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut t_in: Option<f64> = None;
    for (k, &(t, p)) in path.iter().enumerate() {
        let inside = poly.contains(p);
        match (t_in, inside) {
            (None, true) => {
                t_in = Some(if k == 0 {
                    t
                } else {
                    edge_time(path[k - 1], (t, p), poly).unwrap_or(t)
                });
            }
            (Some(start), false) => {
                let end = edge_time(path[k - 1], (t, p), poly).unwrap_or(path[k - 1].0);
                out.push((start, end));
                t_in = None;
            }
            _ => {}
        }
    }
    if let (Some(start), Some(&(t, _))) = (t_in, path.last()) {
        out.push((start, t));
    }
    out
}

fn edge_time(a: (f64, Point), b: (f64, Point), poly: &Polygon) -> Option<f64> {
    poly.edges()
        .filter_map(|e| e.crossing_param(a.1, b.1))
        .fold(None, |best: Option<f64>, s| Some(best.map_or(s, |b| b.min(s))))
        .map(|s| a.0 + s * (b.0 - a.0))
}
