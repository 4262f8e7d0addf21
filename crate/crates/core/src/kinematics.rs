//! Speed and acceleration from consecutive box centers, plus the two
//! per-vehicle mean-speed estimators used for validation.

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::geo_util::first_crossing;
use crate::geom::{fit_heading, signed_angle_deg, Point};
use crate::georef::PixelScale;
use crate::model::{Trajectory, TrackPoint};
use crate::scene::SceneConfig;
use std::fmt::Write as _;

pub const MS_TO_KMH: f64 = 3.6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KinematicSample {
    pub frame_num: u32,
    pub time_s: f64,
    pub speed_kmh: f64,
    pub speed_ms: f64,
    pub acceleration_ms2: f64,
    pub displacement_px: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicsParams {
    pub fps: f64,
    /// Span of the central difference used for acceleration, in samples.
    /// `1` is plain frame-to-frame differencing.
    pub accel_window: usize,
    /// Optional centered moving average over this many centers before differencing.
    pub smooth_window: Option<usize>,
}

impl Default for KinematicsParams {
    fn default() -> Self {
        Self {
            fps: 30.0,
            accel_window: 15,
            smooth_window: None,
        }
    }
}

/// Speed in km/h of a vehicle moving between two track points.
pub fn speed_between(p1: &TrackPoint, p2: &TrackPoint, mpp: f64, fps: f64) -> Result<f64> {
    if p2.frame_num <= p1.frame_num {
        return Err(Error::SameFrame(p2.frame_num));
    }
    let dt = (p2.frame_num - p1.frame_num) as f64 / fps;
    Ok(p1.center.dist(p2.center) * mpp / dt * MS_TO_KMH)
}

fn smoothed_centers(points: &[TrackPoint], window: usize) -> Vec<Point> {
    let n = points.len();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            let k = (hi - lo + 1) as f64;
            points[lo..=hi]
                .iter()
                .fold(Point::default(), |acc, p| acc + p.center)
                * (1.0 / k)
        })
        .collect()
}

/// Per-point kinematics. The first point has speed 0; acceleration is a
/// central difference of speed over `accel_window` samples, zero-filled on
/// tracks too short for the window.
pub fn enrich_kinematics(
    traj: &Trajectory,
    scale: &dyn PixelScale,
    params: &KinematicsParams,
) -> Vec<KinematicSample> {
    let pts = &traj.points;
    let n = pts.len();
    let centers: Vec<Point> = match params.smooth_window {
        Some(w) if w > 1 && n > 0 => smoothed_centers(pts, w),
        _ => pts.iter().map(|p| p.center).collect(),
    };
    let mut out: Vec<KinematicSample> = Vec::with_capacity(n);
    for i in 0..n {
        let (speed_ms, disp) = if i == 0 {
            (0.0, 0.0)
        } else {
            let disp = centers[i].dist(centers[i - 1]);
            let mpp = 0.5 * (scale.mpp(&pts[i]) + scale.mpp(&pts[i - 1]));
            let dt = (pts[i].frame_num - pts[i - 1].frame_num) as f64 / params.fps;
            (disp * mpp / dt, disp)
        };
        out.push(KinematicSample {
            frame_num: pts[i].frame_num,
            time_s: pts[i].time_s,
            speed_kmh: speed_ms * MS_TO_KMH,
            speed_ms,
            acceleration_ms2: 0.0,
            displacement_px: disp,
        });
    }
    let w = params.accel_window.max(1);
    if n >= w + 1 {
        let back = w.div_ceil(2);
        let fwd = w / 2;
        for j in 0..n {
            // sample 0 carries the placeholder zero speed
            let lo = j.saturating_sub(back).max(1);
            let hi = (j + fwd).min(n - 1);
            if hi > lo {
                let dv = out[hi].speed_ms - out[lo].speed_ms;
                let dt = out[hi].time_s - out[lo].time_s;
                out[j].acceleration_ms2 = dv / dt;
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnrichedTrajectory {
    pub traj: Trajectory,
    pub samples: Vec<KinematicSample>,
}

impl EnrichedTrajectory {
    /// Speed (m/s) linearly interpolated at time `t`, clamped to the track ends.
    pub fn speed_ms_at(&self, t: f64) -> Option<f64> {
        interp_at(&self.samples, t, |s| s.speed_ms)
    }
}

pub(crate) fn interp_at(samples: &[KinematicSample], t: f64, f: impl Fn(&KinematicSample) -> f64) -> Option<f64> {
    let first = samples.first()?;
    let last = samples.last()?;
    if t <= first.time_s {
        return Some(f(first));
    }
    if t >= last.time_s {
        return Some(f(last));
    }
    let k = samples.partition_point(|s| s.time_s <= t);
    let (a, b) = (&samples[k - 1], &samples[k]);
    let u = (t - a.time_s) / (b.time_s - a.time_s);
    Some(f(a) + u * (f(b) - f(a)))
}

pub fn enrich_all(
    trajs: &[Trajectory],
    scale: &dyn PixelScale,
    params: &KinematicsParams,
    exec: Exec,
) -> Vec<EnrichedTrajectory> {
    exec::map_slice(exec, trajs, |t| EnrichedTrajectory {
        traj: t.clone(),
        samples: enrich_kinematics(t, scale, params),
    })
}

/// Arithmetic mean of the per-step speeds, km/h.
pub fn trajectory_mean_speed(samples: &[KinematicSample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("trajectory_mean_speed"));
    }
    Ok(samples.iter().map(|s| s.speed_kmh).sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorridorSpeedSample {
    pub id: u32,
    pub entry_time_s: f64,
    pub exit_time_s: f64,
    pub v_video_kmh: f64,
}

/// Heading change (degrees, clockwise positive on screen) between the fitted
/// directions of the first and last `fit_points` centers.
pub fn heading_change_deg(traj: &Trajectory, fit_points: usize) -> Option<f64> {
    let c = traj.centers();
    if c.len() < 2 {
        return None;
    }
    let k = fit_points.clamp(2, c.len());
    let a = fit_heading(&c[..k])?;
    let b = fit_heading(&c[c.len() - k..])?;
    Some(signed_angle_deg(a, b))
}

/// Known corridor length over the time between crossing its two end lines.
/// Only straight-through vehicles that cross both ends qualify.
pub fn corridor_speed(traj: &Trajectory, scene: &SceneConfig, through_max_deg: f64) -> Option<CorridorSpeedSample> {
    let corridor = scene.corridor.as_ref()?;
    let turn = heading_change_deg(traj, 15)?;
    if turn.abs() >= through_max_deg {
        return None;
    }
    let t0 = first_crossing(traj, &corridor.ends[0])?;
    let t1 = first_crossing(traj, &corridor.ends[1])?;
    let (entry, exit) = if t0 <= t1 { (t0, t1) } else { (t1, t0) };
    if !(exit > entry) {
        return None;
    }
    Some(CorridorSpeedSample {
        id: traj.id,
        entry_time_s: entry,
        exit_time_s: exit,
        v_video_kmh: scene.corridor_length_m / (exit - entry) * MS_TO_KMH,
    })
}

/// Mean of the per-step speeds recorded while the vehicle was inside the
/// corridor window. The placeholder first sample is excluded.
pub fn corridor_mean_speed(e: &EnrichedTrajectory, window: &CorridorSpeedSample) -> Option<f64> {
    let inside: Vec<KinematicSample> = e
        .samples
        .iter()
        .skip(1)
        .filter(|s| s.time_s >= window.entry_time_s && s.time_s <= window.exit_time_s)
        .copied()
        .collect();
    trajectory_mean_speed(&inside).ok()
}

/// Tracker rows with `speed,acceleration` appended (km/h, m/s²), ordered by
/// frame then id.
pub fn enriched_csv(enriched: &[EnrichedTrajectory]) -> String {
    let mut rows: Vec<(u32, u32, String)> = Vec::new();
    for e in enriched {
        for (p, s) in e.traj.points.iter().zip(&e.samples) {
            let b = &p.bbox;
            rows.push((
                p.frame_num,
                e.traj.id,
                format!(
                    "{},{},{},{},{},{},{},{:.4},{:.4}",
                    p.frame_num, e.traj.id, e.traj.class, b.xmin, b.ymin, b.xmax, b.ymax, s.speed_kmh, s.acceleration_ms2
                ),
            ));
        }
    }
    rows.sort_by_key(|(f, id, _)| (*f, *id));
    let mut out = String::from("frame_num,id,name,xmin,ymin,xmax,ymax,speed,acceleration\n");
    for (_, _, r) in rows {
        let _ = writeln!(out, "{r}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Segment;
    use crate::model::{BBox, VehicleClass};
    use crate::scene::Corridor;
    use proptest::prelude::*;

    const MPP: f64 = 0.08364;

    fn pt(frame: u32, cx: f64, cy: f64) -> TrackPoint {
        TrackPoint::new(frame, 30.0, BBox::new(cx - 10.0, cy - 5.0, cx + 10.0, cy + 5.0).unwrap(), None)
    }

    fn track(f: impl Fn(f64) -> (f64, f64), frames: u32) -> Trajectory {
        Trajectory {
            id: 1,
            class: VehicleClass::Car,
            points: (0..frames)
                .map(|k| {
                    let (x, y) = f(k as f64 / 30.0);
                    pt(k, x, y)
                })
                .collect(),
        }
    }

    #[test]
    fn speed_unit_anchor() {
        // 0.08364 m per px per 1/30 s = 0.08364/1000 km ÷ (1/30/3600) h
        let oracle = 0.08364 / 1000.0 / (1.0 / 30.0 / 3600.0);
        let v = speed_between(&pt(0, 100.0, 100.0), &pt(1, 101.0, 100.0), MPP, 30.0).unwrap();
        assert!((v - oracle).abs() < 1e-9);
        assert!((v - 9.033).abs() < 1e-3);
        let v5 = speed_between(&pt(0, 100.0, 100.0), &pt(1, 103.0, 104.0), MPP, 30.0).unwrap();
        assert!((v5 - 5.0 * oracle).abs() < 1e-9);
        assert!((v5 - 45.166).abs() < 1e-3);
        assert_eq!(speed_between(&pt(0, 50.0, 50.0), &pt(1, 50.0, 50.0), MPP, 30.0).unwrap(), 0.0);
        assert!(speed_between(&pt(3, 50.0, 50.0), &pt(3, 51.0, 50.0), MPP, 30.0).is_err());
        // a missed frame divides by the real elapsed time
        let v_gap = speed_between(&pt(0, 100.0, 100.0), &pt(2, 102.0, 100.0), MPP, 30.0).unwrap();
        assert!((v_gap - oracle).abs() < 1e-9);
    }

    #[test]
    fn constant_velocity_track() {
        let v_ms = 30.0 * MPP; // 1 px per frame
        let t = track(|s| (200.0 + s * v_ms / MPP, 500.0), 120);
        let k = enrich_kinematics(&t, &MPP, &KinematicsParams::default());
        assert_eq!(k[0].speed_kmh, 0.0);
        for s in &k[1..] {
            assert!((s.speed_kmh - 9.0331).abs() < 1e-3);
        }
        for s in &k {
            assert!(s.acceleration_ms2.abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_acceleration_recovered() {
        let (v0, a) = (5.0, 0.5);
        let t = track(|s| (100.0 + (v0 * s + 0.5 * a * s * s) / MPP, 400.0), 300);
        let k = enrich_kinematics(&t, &MPP, &KinematicsParams::default());
        for s in &k[1..] {
            assert!((s.acceleration_ms2 - a).abs() < 0.01, "{}", s.acceleration_ms2);
        }
        // integrates back
        let integral: f64 = k.windows(2).skip(1).map(|w| w[1].acceleration_ms2 * (w[1].time_s - w[0].time_s)).sum();
        let dv = k.last().unwrap().speed_ms - k[1].speed_ms;
        assert!(((integral - dv) / dv).abs() < 0.01);
        // the literal per-frame method agrees on noise-free data
        let raw = enrich_kinematics(&t, &MPP, &KinematicsParams { accel_window: 1, ..Default::default() });
        assert!((raw[100].acceleration_ms2 - a).abs() < 1e-6);
    }

    #[test]
    fn smooth_speed_profile_integrates_back() {
        // v(t) = 6 + 2 sin(t / 2), position integrated analytically
        let pos = |s: f64| 6.0 * s - 4.0 * (s / 2.0).cos() + 4.0;
        let t = track(|s| (100.0 + pos(s) / MPP, 400.0), 600);
        let k = enrich_kinematics(&t, &MPP, &KinematicsParams::default());
        let integral: f64 = k.windows(2).skip(1).map(|w| w[1].acceleration_ms2 * (w[1].time_s - w[0].time_s)).sum();
        let dv = k.last().unwrap().speed_ms - k[1].speed_ms;
        assert!(((integral - dv) / dv).abs() < 0.01, "{integral} vs {dv}");
    }

    #[test]
    fn short_tracks() {
        let single = track(|_| (10.0, 10.0), 1);
        let k = enrich_kinematics(&single, &MPP, &KinematicsParams::default());
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].speed_kmh, 0.0);
        let short = track(|s| (10.0 + 30.0 * s, 10.0), 5);
        let k = enrich_kinematics(&short, &MPP, &KinematicsParams::default());
        assert!(k.iter().all(|s| s.acceleration_ms2 == 0.0));
    }

    #[test]
    fn mean_speed_examples() {
        let mk = |v: f64| KinematicSample {
            frame_num: 0,
            time_s: 0.0,
            speed_kmh: v,
            speed_ms: v / 3.6,
            acceleration_ms2: 0.0,
            displacement_px: 0.0,
        };
        assert_eq!(trajectory_mean_speed(&[mk(10.0), mk(20.0)]).unwrap(), 15.0);
        assert_eq!(trajectory_mean_speed(&[mk(9.033); 7]).unwrap(), 9.033);
        assert!(trajectory_mean_speed(&[]).is_err());
    }

    #[test]
    fn sinusoidal_mean_speed() {
        // mean 8 m/s, amplitude 2 m/s, period 10 s, 3 whole periods
        let pos = |s: f64| 8.0 * s - 2.0 * 10.0 / (2.0 * std::f64::consts::PI) * ((2.0 * std::f64::consts::PI * s / 10.0).cos() - 1.0);
        let t = track(|s| (50.0 + pos(s) / MPP, 400.0), 901);
        let k = enrich_kinematics(&t, &MPP, &KinematicsParams::default());
        let m = trajectory_mean_speed(&k[1..]).unwrap();
        assert!(((m - 8.0 * 3.6) / (8.0 * 3.6)).abs() < 1e-3, "{m}");
    }

    fn corridor_scene(length_m: f64) -> SceneConfig {
        SceneConfig {
            corridor_length_m: length_m,
            corridor: Some(Corridor {
                ends: [
                    Segment::new(Point::new(100.0, 0.0), Point::new(100.0, 1080.0)),
                    Segment::new(Point::new(1800.0, 0.0), Point::new(1800.0, 1080.0)),
                ],
            }),
            ..Default::default()
        }
    }

    #[test]
    fn corridor_speed_examples() {
        // 40 s to cross from x=100 to x=1800
        let scene = corridor_scene(160.6);
        let px_per_s = 1700.0 / 40.0;
        let t = Trajectory {
            id: 4,
            class: VehicleClass::Car,
            points: (0..1300).map(|k| pt(k, 50.0 + px_per_s * (k as f64 / 30.0 - 50.0 / px_per_s) + 50.0, 500.0)).collect(),
        };
        let s = corridor_speed(&t, &scene, 30.0).unwrap();
        assert!((s.exit_time_s - s.entry_time_s - 40.0).abs() < 1e-9);
        assert!((s.v_video_kmh - 14.454).abs() < 1e-3);

        let fast = Trajectory {
            id: 5,
            class: VehicleClass::Car,
            points: (0..700).map(|k| pt(k, 50.0 + 1700.0 / 20.0 * (k as f64 / 30.0) , 500.0)).collect(),
        };
        let s2 = corridor_speed(&fast, &scene, 30.0).unwrap();
        assert!((s2.v_video_kmh - 28.908).abs() < 1e-3);

        // turning vehicle: east along y=500, then south
        let turn = Trajectory {
            id: 6,
            class: VehicleClass::Car,
            points: (0..200)
                .map(|k| if k < 100 { pt(k, 50.0 + 20.0 * k as f64, 500.0) } else { pt(k, 2030.0 - 20.0 * 100.0 + 0.0, 500.0 + 3.0 * (k - 99) as f64) })
                .collect(),
        };
        assert!(corridor_speed(&turn, &scene, 30.0).is_none());
    }

    #[test]
    fn enriched_csv_columns() {
        let t = track(|s| (200.0 + 30.0 * s, 500.0), 3);
        let e = enrich_all(&[t], &MPP, &KinematicsParams::default(), Exec::Sequential);
        let csv = enriched_csv(&e);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "frame_num,id,name,xmin,ymin,xmax,ymax,speed,acceleration");
        assert_eq!(lines.next().unwrap(), "0,1,car,190,495,210,505,0.0000,0.0000");
        assert!(lines.next().unwrap().starts_with("1,1,car,191,495,211,505,9.0331,"));
    }

    proptest! {
        #[test]
        fn speed_translation_invariant_and_linear(
            x in 0.0f64..1000.0, y in 0.0f64..1000.0,
            dx in -20.0f64..20.0, dy in -20.0f64..20.0,
            tx in 0.0f64..500.0, ty in 0.0f64..500.0,
            mpp in 0.01f64..0.5, fps in 10.0f64..60.0,
        ) {
            let a = pt(0, x + 40.0, y + 40.0);
            let b = pt(1, x + 40.0 + dx, y + 40.0 + dy);
            let v = speed_between(&a, &b, mpp, fps).unwrap();
            let a2 = pt(0, x + 40.0 + tx, y + 40.0 + ty);
            let b2 = pt(1, x + 40.0 + dx + tx, y + 40.0 + dy + ty);
            let v2 = speed_between(&a2, &b2, mpp, fps).unwrap();
            prop_assert!((v - v2).abs() < 1e-6 * (1.0 + v));
            let v3 = speed_between(&a, &b, 2.0 * mpp, fps).unwrap();
            prop_assert!((v3 - 2.0 * v).abs() < 1e-9 * (1.0 + v));
            let v4 = speed_between(&a, &b, mpp, 2.0 * fps).unwrap();
            prop_assert!((v4 - 2.0 * v).abs() < 1e-9 * (1.0 + v));
        }

        #[test]
        fn estimators_agree_on_constant_velocity(v_ms in 2.0f64..20.0) {
            let scene = corridor_scene(1700.0 * MPP);
            let px_per_s = v_ms / MPP;
            let frames = ((1900.0 / px_per_s) * 30.0) as u32;
            let t = track(|s| (20.0 + px_per_s * s, 500.0), frames);
            let w = corridor_speed(&t, &scene, 30.0).unwrap();
            let e = enrich_all(&[t], &MPP, &KinematicsParams::default(), Exec::Sequential);
            let vt = corridor_mean_speed(&e[0], &w).unwrap();
            prop_assert!(((vt - w.v_video_kmh) / w.v_video_kmh).abs() < 0.005);
        }
    }
}
