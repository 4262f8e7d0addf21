//! Camera-deflection detection and trajectory correction.
//!
//! A frame boundary is a deflection candidate when (nearly) every vehicle seen
//! on both sides of it jumps by more than a pixel in both axes. Candidates are
//! confirmed by a two-cluster split of the per-boundary mean offset magnitude,
//! adjacent deflected boundaries merge into one event, and every later point is
//! shifted back by the accumulated offset. Rotation is estimated for reporting
//! but never applied.

use crate::exec::{self, Exec};
use crate::geom::Point;
use crate::model::{BBox, Trajectory};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionParams {
    /// Per-vehicle trigger: |Δxmin| and |Δymin| must both exceed this.
    pub trigger_px: f64,
    /// Pairs moving this much or more in either axis are treated as outliers.
    pub gate_px: f64,
    /// Boundaries with fewer vehicles on both sides are skipped.
    pub min_matched: usize,
    /// Share of matched vehicles allowed to miss the trigger.
    pub dissent_fraction: f64,
    /// How many boundaries to search on each side for a vehicle's own motion.
    pub baseline_search: usize,
}

impl Default for DeflectionParams {
    fn default() -> Self {
        Self {
            trigger_px: 1.0,
            gate_px: 40.0,
            min_matched: 3,
            dissent_fraction: 0.1,
            baseline_search: 5,
        }
    }
}

/// Mean camera offset over one frame boundary `frame_num → next frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameOffset {
    pub frame_num: u32,
    pub dx: f64,
    pub dy: f64,
    pub n_matched: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeflectionEvent {
    pub frame_start: u32,
    pub frame_end: u32,
    /// Accumulated image shift over the event (new minus old position).
    pub dx: f64,
    pub dy: f64,
    pub rotation_deg: Option<f64>,
    pub n_matched: usize,
    /// Per-boundary offsets making up the event.
    pub steps: Vec<FrameOffset>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeflectionReport {
    pub events: Vec<DeflectionEvent>,
    /// Boundaries skipped for having too few matched vehicles (left-hand frame).
    pub skipped: Vec<u32>,
    /// Mean raw offset magnitude per evaluated boundary.
    pub magnitudes: Vec<(u32, f64)>,
}

struct Boundary {
    from: u32,
    to: u32,
    /// id → (box before, box after)
    pairs: Vec<(u32, BBox, BBox)>,
    candidate: bool,
    magnitude: f64,
}

fn index_by_frame(trajs: &[Trajectory]) -> BTreeMap<u32, Vec<(u32, BBox)>> {
    let mut by_frame: BTreeMap<u32, Vec<(u32, BBox)>> = BTreeMap::new();
    for t in trajs {
        for p in &t.points {
            by_frame.entry(p.frame_num).or_default().push((t.id, p.bbox));
        }
    }
    for v in by_frame.values_mut() {
        v.sort_by_key(|(id, _)| *id);
    }
    by_frame
}

fn corner_shift(a: &BBox, b: &BBox) -> Point {
    Point::new(b.xmin - a.xmin, b.ymin - a.ymin)
}

/// Two-cluster split of scalar values (Lloyd iterations from the extremes).
/// Returns the decision threshold, or `None` when the values do not separate.
pub fn two_means_threshold(values: &[f64]) -> Option<f64> {
    let (mut lo, mut hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if values.len() < 2 || !(hi - lo > 1e-9) {
        return None;
    }
    for _ in 0..100 {
        let mid = (lo + hi) / 2.0;
        let (mut sl, mut nl, mut sh, mut nh) = (0.0, 0usize, 0.0, 0usize);
        for &v in values {
            if v > mid {
                sh += v;
                nh += 1;
            } else {
                sl += v;
                nl += 1;
            }
        }
        if nl == 0 || nh == 0 {
            break;
        }
        let (nlo, nhi) = (sl / nl as f64, sh / nh as f64);
        if (nlo - lo).abs() < 1e-12 && (nhi - hi).abs() < 1e-12 {
            break;
        }
        lo = nlo;
        hi = nhi;
    }
    Some((lo + hi) / 2.0)
}

pub fn detect_deflections(trajs: &[Trajectory], params: &DeflectionParams) -> Vec<DeflectionEvent> {
    detect_deflections_report(trajs, params).events
}

pub fn detect_deflections_report(trajs: &[Trajectory], params: &DeflectionParams) -> DeflectionReport {
    let by_frame = index_by_frame(trajs);
    let frames: Vec<u32> = by_frame.keys().copied().collect();
    let mut report = DeflectionReport::default();
    let mut boundaries: Vec<Boundary> = Vec::new();

    for w in frames.windows(2) {
        let (fa, fb) = (w[0], w[1]);
        let (a, b) = (&by_frame[&fa], &by_frame[&fb]);
        let mut pairs = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    pairs.push((a[i].0, a[i].1, b[j].1));
                    i += 1;
                    j += 1;
                }
            }
        }
        if pairs.len() < params.min_matched {
            tracing::debug!(frame = fa, matched = pairs.len(), "boundary skipped: too few matched vehicles");
            report.skipped.push(fa);
            continue;
        }
        let shifts: Vec<Point> = pairs.iter().map(|(_, a, b)| corner_shift(a, b)).collect();
        let moved = shifts
            .iter()
            .filter(|d| d.x.abs() > params.trigger_px && d.y.abs() > params.trigger_px)
            .count();
        let gated: Vec<Point> = shifts
            .iter()
            .copied()
            .filter(|d| d.x.abs() < params.gate_px && d.y.abs() < params.gate_px)
            .collect();
        let needed = (1.0 - params.dissent_fraction) * pairs.len() as f64;
        let magnitude = if gated.is_empty() {
            0.0
        } else {
            let n = gated.len() as f64;
            let m = gated.iter().fold(Point::default(), |acc, &d| acc + d) * (1.0 / n);
            m.norm()
        };
        boundaries.push(Boundary {
            from: fa,
            to: fb,
            pairs,
            candidate: !gated.is_empty() && moved as f64 >= needed - 1e-9,
            magnitude,
        });
    }
    report.magnitudes = boundaries.iter().map(|b| (b.from, b.magnitude)).collect();

    let mags: Vec<f64> = boundaries.iter().map(|b| b.magnitude).collect();
    let threshold = two_means_threshold(&mags);
    let deflected: Vec<bool> = boundaries
        .iter()
        .map(|b| b.candidate && threshold.is_none_or(|t| b.magnitude > t))
        .collect();

    // Group adjacent deflected boundaries.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (k, &d) in deflected.iter().enumerate() {
        if !d {
            continue;
        }
        match runs.last_mut() {
            Some((_, end)) if *end + 1 == k && boundaries[*end].to == boundaries[k].from => *end = k,
            _ => runs.push((k, k)),
        }
    }

    // Each vehicle's own per-frame motion, taken from nearby stable boundaries.
    let own_motion = |run: (usize, usize), id: u32| -> Point {
        let mut found = Vec::new();
        let dir_scan = |range: Box<dyn Iterator<Item = usize>>| -> Option<Point> {
            for k in range.take(params.baseline_search) {
                if deflected[k] {
                    continue;
                }
                let b = &boundaries[k];
                if let Some((_, a, bb)) = b.pairs.iter().find(|(i, _, _)| *i == id) {
                    let d = corner_shift(a, bb);
                    if d.x.abs() < params.gate_px && d.y.abs() < params.gate_px {
                        return Some(d * (1.0 / (b.to - b.from) as f64));
                    }
                }
            }
            None
        };
        if let Some(p) = dir_scan(Box::new((0..run.0).rev())) {
            found.push(p);
        }
        if let Some(p) = dir_scan(Box::new(run.1 + 1..boundaries.len())) {
            found.push(p);
        }
        if found.is_empty() {
            Point::default()
        } else {
            let n = found.len() as f64;
            found.into_iter().fold(Point::default(), |acc, p| acc + p) * (1.0 / n)
        }
    };

    for run in runs {
        let mut steps = Vec::new();
        let mut motion_cache: HashMap<u32, Point> = HashMap::new();
        for b in &boundaries[run.0..=run.1] {
            let span = (b.to - b.from) as f64;
            let residuals: Vec<Point> = b
                .pairs
                .iter()
                .filter_map(|(id, a, bb)| {
                    let d = corner_shift(a, bb);
                    if d.x.abs() >= params.gate_px || d.y.abs() >= params.gate_px {
                        return None;
                    }
                    let v = *motion_cache.entry(*id).or_insert_with(|| own_motion(run, *id));
                    Some(d - v * span)
                })
                .collect();
            let n = residuals.len();
            let mean = residuals.iter().fold(Point::default(), |acc, &d| acc + d) * (1.0 / n as f64);
            steps.push(FrameOffset {
                frame_num: b.from,
                dx: mean.x,
                dy: mean.y,
                n_matched: n,
            });
        }
        let total = steps
            .iter()
            .fold(Point::default(), |acc, s| acc + Point::new(s.dx, s.dy));

        let (f_start, f_after) = (boundaries[run.0].from, boundaries[run.1].to);
        let before = &by_frame[&f_start];
        let after: HashMap<u32, BBox> = by_frame[&f_after].iter().copied().collect();
        let span = (f_after - f_start) as f64;
        let rot_pairs: Vec<(Point, Point)> = before
            .iter()
            .filter_map(|(id, a)| {
                let bb = after.get(id)?;
                let v = motion_cache.get(id).copied().unwrap_or_else(|| own_motion(run, *id));
                Some((a.center(), bb.center() - v * span))
            })
            .collect();

        report.events.push(DeflectionEvent {
            frame_start: f_start,
            frame_end: boundaries[run.1].from,
            dx: total.x,
            dy: total.y,
            rotation_deg: estimate_rotation(&rot_pairs),
            n_matched: steps.iter().map(|s| s.n_matched).min().unwrap_or(0),
            steps,
        });
    }
    report
}

/// Least-squares rotation (degrees) of a rigid motion mapping each `before`
/// point onto its `after` point. Positive is clockwise on screen (y down).
/// `None` for fewer than three points or collinear geometry.
pub fn estimate_rotation(pairs: &[(Point, Point)]) -> Option<f64> {
    if pairs.len() < 3 {
        return None;
    }
    let n = pairs.len() as f64;
    let (ma, mb) = pairs.iter().fold((Point::default(), Point::default()), |(sa, sb), (a, b)| {
        (sa + *a, sb + *b)
    });
    let (ma, mb) = (ma * (1.0 / n), mb * (1.0 / n));
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in pairs {
        let (a, b) = (*a - ma, *b - mb);
        sxx += a.x * a.x;
        syy += a.y * a.y;
        sxy += a.x * a.y;
        num += a.cross(b);
        den += a.dot(b);
    }
    // smallest / largest eigenvalue of the spread matrix
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let (l_max, l_min) = (tr / 2.0 + disc, tr / 2.0 - disc);
    if !(l_max > 0.0) || l_min / l_max < 1e-6 {
        return None;
    }
    Some(num.atan2(den).to_degrees())
}

/// Shifts every point after each deflection back by the accumulated offset.
/// Boxes pushed outside the image are flagged, not removed.
pub fn apply_correction(
    trajs: &[Trajectory],
    events: &[DeflectionEvent],
    image_w: u32,
    image_h: u32,
    exec: Exec,
) -> Vec<Trajectory> {
    let mut steps: Vec<FrameOffset> = events.iter().flat_map(|e| e.steps.iter().copied()).collect();
    steps.sort_by_key(|s| s.frame_num);
    // prefix[k] = total offset of the first k steps
    let mut prefix = vec![Point::default()];
    for s in &steps {
        let last = *prefix.last().unwrap();
        prefix.push(last + Point::new(s.dx, s.dy));
    }
    let (iw, ih) = (image_w as f64, image_h as f64);
    exec::map_slice(exec, trajs, |t| {
        let mut t = t.clone();
        for p in &mut t.points {
            let k = steps.partition_point(|s| s.frame_num < p.frame_num);
            let off = prefix[k];
            if off == Point::default() {
                continue;
            }
            p.bbox = p.bbox.translated(-off.x, -off.y);
            p.center = p.bbox.center();
            p.out_of_frame = !p.bbox.inside_image(iw, ih);
        }
        t
    })
}

/// `frame_start,frame_end,dx,dy,rotation_deg,n_matched`
pub fn deflection_report_csv(events: &[DeflectionEvent]) -> String {
    let mut s = String::from("frame_start,frame_end,dx,dy,rotation_deg,n_matched\n");
    for e in events {
        let rot = e.rotation_deg.map(|r| format!("{r:.4}")).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{:.4},{:.4},{},{}",
            e.frame_start, e.frame_end, e.dx, e.dy, rot, e.n_matched
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{TrackPoint, VehicleClass};

    fn still_scene(n_ids: u32, frames: u32) -> Vec<Trajectory> {
        (0..n_ids)
            .map(|id| Trajectory {
                id,
                class: VehicleClass::Car,
                points: (0..frames)
                    .map(|f| {
                        let x = 100.0 + 80.0 * id as f64;
                        let y = 300.0 + 60.0 * (id % 3) as f64;
                        TrackPoint::new(f, 30.0, BBox::new(x, y, x + 20.0, y + 50.0).unwrap(), None)
                    })
                    .collect(),
            })
            .collect()
    }

    fn shift_after(trajs: &mut [Trajectory], frame: u32, dx: f64, dy: f64) {
        for t in trajs {
            for p in &mut t.points {
                if p.frame_num > frame {
                    p.bbox = p.bbox.translated(dx, dy);
                    p.center = p.bbox.center();
                }
            }
        }
    }

    #[test]
    fn static_scene_has_no_events() {
        assert!(detect_deflections(&still_scene(6, 50), &DeflectionParams::default()).is_empty());
    }

    #[test]
    fn single_jump_detected_and_undone() {
        let truth = still_scene(6, 50);
        let mut seen = truth.clone();
        shift_after(&mut seen, 20, 24.0, -8.0);
        let events = detect_deflections(&seen, &DeflectionParams::default());
        assert_eq!(events.len(), 1);
        let e = &events[0];
        assert_eq!((e.frame_start, e.frame_end), (20, 20));
        assert!((e.dx - 24.0).abs() < 1e-9 && (e.dy + 8.0).abs() < 1e-9);
        assert!(e.rotation_deg.unwrap().abs() < 1e-9);
        let fixed = apply_correction(&seen, &events, 1920, 1080, Exec::Sequential);
        assert_eq!(fixed, truth);
    }

    #[test]
    fn corrections_accumulate() {
        let truth = still_scene(5, 40);
        let events = vec![
            DeflectionEvent {
                frame_start: 10,
                frame_end: 10,
                dx: 10.0,
                dy: 0.0,
                rotation_deg: None,
                n_matched: 5,
                steps: vec![FrameOffset { frame_num: 10, dx: 10.0, dy: 0.0, n_matched: 5 }],
            },
            DeflectionEvent {
                frame_start: 20,
                frame_end: 20,
                dx: 5.0,
                dy: 5.0,
                rotation_deg: None,
                n_matched: 5,
                steps: vec![FrameOffset { frame_num: 20, dx: 5.0, dy: 5.0, n_matched: 5 }],
            },
        ];
        let out = apply_correction(&truth, &events, 1920, 1080, Exec::Parallel);
        let p = &out[0].points[30];
        let q = &truth[0].points[30];
        assert_eq!(p.center - q.center, Point::new(-15.0, -5.0));
        assert_eq!(out[0].points[5], truth[0].points[5]);
        assert_eq!(apply_correction(&truth, &[], 1920, 1080, Exec::Sequential), truth);
    }

    #[test]
    fn reference_box_restored() {
        let after = BBox::new(845.0, 139.0, 860.0, 190.0).unwrap();
        let c = after.translated(-24.0, 8.0).center();
        assert_eq!((c.x, c.y), (828.5, 172.5));
    }

    #[test]
    fn correction_flags_boxes_leaving_image() {
        let t = vec![Trajectory {
            id: 1,
            class: VehicleClass::Car,
            points: vec![
                TrackPoint::new(0, 30.0, BBox::new(5.0, 5.0, 25.0, 25.0).unwrap(), None),
                TrackPoint::new(1, 30.0, BBox::new(5.0, 5.0, 25.0, 25.0).unwrap(), None),
            ],
        }];
        let ev = vec![DeflectionEvent {
            frame_start: 0,
            frame_end: 0,
            dx: 10.0,
            dy: 0.0,
            rotation_deg: None,
            n_matched: 3,
            steps: vec![FrameOffset { frame_num: 0, dx: 10.0, dy: 0.0, n_matched: 3 }],
        }];
        let out = apply_correction(&t, &ev, 1920, 1080, Exec::Sequential);
        assert_eq!(out[0].points.len(), 2);
        assert!(out[0].points[1].out_of_frame);
        assert!(!out[0].points[0].out_of_frame);
    }

    #[test]
    fn too_few_vehicles_skip_boundary() {
        let mut seen = still_scene(2, 10);
        shift_after(&mut seen, 4, 24.0, -8.0);
        let rep = detect_deflections_report(&seen, &DeflectionParams::default());
        assert!(rep.events.is_empty());
        assert_eq!(rep.skipped.len(), 9);
    }

    #[test]
    fn rotation_estimates() {
        let c = Point::new(960.0, 540.0);
        let pts: Vec<Point> = (0..12)
            .map(|k| Point::new(200.0 + 130.0 * k as f64, 150.0 + 70.0 * ((k * 7) % 11) as f64))
            .collect();
        let translate: Vec<_> = pts.iter().map(|&p| (p, p + Point::new(7.0, -3.0))).collect();
        assert!(estimate_rotation(&translate).unwrap().abs() < 1e-9);
        let phi = 4.4f64.to_radians();
        let rot: Vec<_> = pts
            .iter()
            .map(|&p| {
                let d = p - c;
                let r = Point::new(d.x * phi.cos() - d.y * phi.sin(), d.x * phi.sin() + d.y * phi.cos());
                (p, c + r)
            })
            .collect();
        assert!((estimate_rotation(&rot).unwrap() - 4.4).abs() < 1e-6);
        assert!(estimate_rotation(&rot[..1]).is_none());
        let line: Vec<_> = (0..5)
            .map(|k| {
                let p = Point::new(k as f64 * 10.0, k as f64 * 10.0);
                (p, p)
            })
            .collect();
        assert!(estimate_rotation(&line).is_none());
    }

    #[test]
    fn two_means_splits_outlier() {
        let mut v = vec![0.5, 1.0, 0.8, 1.2, 0.9];
        v.push(25.3);
        let t = two_means_threshold(&v).unwrap();
        assert!(t > 1.2 && t < 25.3);
        assert!(two_means_threshold(&[1.0, 1.0]).is_none());
    }

    #[test]
    fn report_csv_shape() {
        let e = DeflectionEvent {
            frame_start: 100,
            frame_end: 100,
            dx: 24.0,
            dy: -8.0,
            rotation_deg: None,
            n_matched: 20,
            steps: vec![],
        };
        assert_eq!(
            deflection_report_csv(&[e]),
            "frame_start,frame_end,dx,dy,rotation_deg,n_matched\n100,100,24.0000,-8.0000,,20\n"
        );
    }
}
