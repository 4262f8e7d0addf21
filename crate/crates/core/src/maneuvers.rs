//! Turning movements, lane-change events from lateral offsets, and
//! time-space series.

use crate::exec::{self, Exec};
use crate::geom::{fit_heading, signed_angle_deg, Point};
use crate::georef::PixelScale;
use crate::kinematics::{interp_at, EnrichedTrajectory, KinematicSample};
use crate::model::Trajectory;
use crate::scene::{Corridor, LaneModel, SceneConfig};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Through,
    Left,
    Right,
    UTurn,
    Unclassified,
}

impl Movement {
    pub const CLASSIFIED: [Movement; 4] = [Movement::Through, Movement::Left, Movement::Right, Movement::UTurn];

    pub fn as_str(self) -> &'static str {
        match self {
            Movement::Through => "through",
            Movement::Left => "left",
            Movement::Right => "right",
            Movement::UTurn => "u_turn",
            Movement::Unclassified => "unclassified",
        }
    }
}

impl fmt::Display for Movement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TurningMovement {
    pub id: u32,
    pub entry_approach: Option<String>,
    pub exit_approach: Option<String>,
    pub movement: Movement,
    /// Heading change from entry to exit, clockwise positive on screen.
    pub heading_change_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnParams {
    pub fit_points: usize,
    pub through_max_deg: f64,
    pub uturn_min_deg: f64,
    pub min_points: usize,
}

impl Default for TurnParams {
    fn default() -> Self {
        Self {
            fit_points: 15,
            through_max_deg: 30.0,
            uturn_min_deg: 150.0,
            min_points: 15,
        }
    }
}

/// Ordered visits of a trajectory to the scene's approach regions.
fn approach_visits(traj: &Trajectory, scene: &SceneConfig) -> Vec<usize> {
    let mut visits: Vec<usize> = Vec::new();
    let mut current: Option<usize> = None;
    for p in &traj.points {
        let here = scene.approaches.iter().position(|a| a.region.contains(p.center));
        if here != current {
            if let Some(k) = here {
                visits.push(k);
            }
            current = here;
        }
    }
    visits
}

/// Classifies by the heading change between least-squares fits over the
/// first and last points. A positive (clockwise on screen) change is a right
/// turn in a north-up image. Trajectories that do not visit an entry and a
/// separate exit region are left unclassified.
pub fn classify_turn(traj: &Trajectory, scene: &SceneConfig, params: &TurnParams) -> TurningMovement {
    let visits = approach_visits(traj, scene);
    let name = |k: usize| scene.approaches[k].name.clone();
    let mut out = TurningMovement {
        id: traj.id,
        entry_approach: visits.first().map(|&k| name(k)),
        exit_approach: visits.last().map(|&k| name(k)),
        movement: Movement::Unclassified,
        heading_change_deg: None,
    };
    if visits.len() < 2 || traj.len() < params.min_points.max(2) {
        return out;
    }
    let c = traj.centers();
    let k = params.fit_points.clamp(2, c.len());
    let (Some(a), Some(b)) = (fit_heading(&c[..k]), fit_heading(&c[c.len() - k..])) else {
        return out;
    };
    let angle = signed_angle_deg(a, b);
    out.heading_change_deg = Some(angle);
    out.movement = if visits.first() == visits.last() || angle.abs() > params.uturn_min_deg {
        Movement::UTurn
    } else if angle.abs() < params.through_max_deg {
        Movement::Through
    } else if angle > 0.0 {
        Movement::Right
    } else {
        Movement::Left
    };
    out
}

pub fn classify_all(trajs: &[Trajectory], scene: &SceneConfig, params: &TurnParams, exec: Exec) -> Vec<TurningMovement> {
    exec::map_slice(exec, trajs, |t| classify_turn(t, scene, params))
}

/// Entry approach × movement matrix. Unclassified trajectories are counted
/// in their own column so the row sums cover every trajectory.
pub fn turning_counts_csv(movements: &[TurningMovement]) -> String {
    let cols = [Movement::Through, Movement::Left, Movement::Right, Movement::UTurn, Movement::Unclassified];
    let mut table: BTreeMap<String, [usize; 5]> = BTreeMap::new();
    for m in movements {
        let row = m.entry_approach.clone().unwrap_or_else(|| "none".into());
        let i = cols.iter().position(|c| *c == m.movement).unwrap();
        table.entry(row).or_default()[i] += 1;
    }
    let mut out = String::from("entry_approach,through,left,right,u_turn,unclassified\n");
    for (row, counts) in table {
        let _ = writeln!(
            out,
            "{row},{},{},{},{},{}",
            counts[0], counts[1], counts[2], counts[3], counts[4]
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSample {
    pub frame_num: u32,
    pub time_s: f64,
    /// Lateral pixel coordinate (y for horizontal lane axes, x for vertical).
    pub offset_px: f64,
    pub lane: Option<u16>,
    /// Lateral boundary positions at this point, if inside the modeled extent.
    pub boundaries: Option<Vec<f64>>,
}

pub fn lateral_offset_series(traj: &Trajectory, lanes: &LaneModel) -> Vec<OffsetSample> {
    traj.points
        .iter()
        .map(|p| {
            let s = lanes.sample(p.center);
            let lane = s.as_ref().and_then(|s| LaneModel::lane_of(s.lateral, &s.boundaries));
            OffsetSample {
                frame_num: p.frame_num,
                time_s: p.time_s,
                offset_px: lanes.lateral(p.center),
                lane,
                boundaries: s.map(|s| s.boundaries),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LaneChangeEvent {
    pub id: u32,
    pub time_s: f64,
    pub from_lane: u16,
    pub to_lane: u16,
    pub spot_speed_kmh: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneChangeParams {
    /// Distance past the boundary that confirms a change. `None` uses half
    /// the width of the lane being entered.
    pub hysteresis_px: Option<f64>,
    pub dwell_frames: u32,
    pub min_points: usize,
}

impl Default for LaneChangeParams {
    fn default() -> Self {
        Self {
            hysteresis_px: None,
            dwell_frames: 15,
            min_points: 15,
        }
    }
}

/// Lane-change events for one vehicle. Each event moves one lane; a
/// multi-lane move yields successive events.
pub fn detect_lane_changes(
    id: u32,
    series: &[OffsetSample],
    params: &LaneChangeParams,
    samples: &[KinematicSample],
) -> Vec<LaneChangeEvent> {
    let mut events = Vec::new();
    if series.len() < params.min_points {
        return events;
    }
    let Some(start) = series.iter().position(|s| s.lane.is_some()) else {
        return events;
    };
    let mut cur = series[start].lane.unwrap();
    let mut i = start + 1;
    while i < series.len() {
        let s = &series[i];
        let (Some(lane), Some(b)) = (s.lane, s.boundaries.as_ref()) else {
            i += 1;
            continue;
        };
        if lane == cur {
            i += 1;
            continue;
        }
        let up = lane > cur;
        let target = if up { cur + 1 } else { cur - 1 };
        // boundary shared by cur and target (boundaries are 0-based)
        let bidx = if up { cur as usize } else { cur as usize - 1 };
        let orient = if b[b.len() - 1] > b[0] { 1.0 } else { -1.0 };
        let dir = if up { orient } else { -orient };
        let width = (b[target as usize] - b[target as usize - 1]).abs();
        let h = params.hysteresis_px.unwrap_or(width / 2.0);
        let past = (s.offset_px - b[bidx]) * dir;
        if past < h {
            i += 1;
            continue;
        }
        let held = dwell_holds(series, i, target, up, params.dwell_frames);
        if !held {
            i += 1;
            continue;
        }
        let t = crossing_instant(series, i, bidx, dir).unwrap_or(s.time_s);
        let spot = interp_at(samples, t, |k| k.speed_kmh).unwrap_or(0.0);
        events.push(LaneChangeEvent {
            id,
            time_s: t,
            from_lane: cur,
            to_lane: target,
            spot_speed_kmh: spot,
        });
        cur = target;
        // stay on this sample: it may already confirm the next step
    }
    events
}

fn dwell_holds(series: &[OffsetSample], i: usize, target: u16, up: bool, dwell: u32) -> bool {
    let f0 = series[i].frame_num;
    let end = f0 + dwell.saturating_sub(1);
    if series.last().map_or(true, |s| s.frame_num < end) {
        return false;
    }
    series[i..]
        .iter()
        .take_while(|s| s.frame_num <= end)
        .all(|s| match s.lane {
            Some(l) => if up { l >= target } else { l <= target },
            None => false,
        })
}

/// Interpolated time of the last crossing of boundary `bidx` at or before
/// sample `i`, scanning backwards.
fn crossing_instant(series: &[OffsetSample], i: usize, bidx: usize, dir: f64) -> Option<f64> {
    let d = |s: &OffsetSample| s.boundaries.as_ref().map(|b| (s.offset_px - b[bidx]) * dir);
    let mut k = i;
    while k > 0 {
        let (a, b) = (&series[k - 1], &series[k]);
        if let (Some(da), Some(db)) = (d(a), d(b)) {
            if da < 0.0 && db >= 0.0 {
                let u = da / (da - db);
                return Some(a.time_s + u * (b.time_s - a.time_s));
            }
        }
        k -= 1;
    }
    None
}

/// The lane model a trajectory spends the most points inside.
pub fn lane_model_for<'a>(traj: &Trajectory, scene: &'a SceneConfig) -> Option<(&'a str, &'a LaneModel)> {
    scene
        .approaches
        .iter()
        .filter_map(|a| a.lanes.as_ref().map(|l| (a.name.as_str(), l)))
        .map(|(n, l)| (n, l, traj.points.iter().filter(|p| l.lane_at(p.center).is_some()).count()))
        .filter(|&(_, _, c)| c > 0)
        .max_by_key(|&(_, _, c)| c)
        .map(|(n, l, _)| (n, l))
}

pub fn lane_changes_all(
    enriched: &[EnrichedTrajectory],
    scene: &SceneConfig,
    params: &LaneChangeParams,
    exec: Exec,
) -> Vec<LaneChangeEvent> {
    let per = exec::map_slice(exec, enriched, |e| {
        lane_model_for(&e.traj, scene)
            .map(|(_, lanes)| {
                let series = lateral_offset_series(&e.traj, lanes);
                detect_lane_changes(e.traj.id, &series, params, &e.samples)
            })
            .unwrap_or_default()
    });
    per.into_iter().flatten().collect()
}

pub fn lane_changes_csv(events: &[LaneChangeEvent]) -> String {
    let mut out = String::from("id,time_s,from_lane,to_lane,spot_speed_kmh\n");
    for e in events {
        let _ = writeln!(out, "{},{:.4},{},{},{:.2}", e.id, e.time_s, e.from_lane, e.to_lane, e.spot_speed_kmh);
    }
    out
}

/// Per-point lateral offsets and lane indices, for plotting.
pub fn offsets_csv(id: u32, series: &[OffsetSample]) -> String {
    let mut out = String::from("id,time_s,offset_px,lane\n");
    for s in series {
        let lane = s.lane.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{id},{:.4},{:.3},{lane}", s.time_s, s.offset_px);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TsdPoint {
    pub id: u32,
    pub time_s: f64,
    pub distance_m: f64,
}

/// Straight reference axis for time-space diagrams.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsdAxis {
    pub origin: Point,
    /// Unit vector of the travel direction being plotted.
    pub direction: Point,
}

impl TsdAxis {
    pub fn new(origin: Point, direction: Point) -> Option<Self> {
        let n = direction.norm();
        (n > 0.0).then(|| Self { origin, direction: direction * (1.0 / n) })
    }

    /// Axis from one corridor end to the other; `reverse` plots the opposite direction.
    pub fn from_corridor(c: &Corridor, reverse: bool) -> Option<Self> {
        let (a, b) = (c.ends[0].midpoint(), c.ends[1].midpoint());
        if reverse {
            Self::new(b, a - b)
        } else {
            Self::new(a, b - a)
        }
    }
}

/// Distance along the axis (meters) against time for every trajectory whose
/// overall heading lies within 30° of the axis direction.
pub fn time_space_series(trajs: &[Trajectory], axis: &TsdAxis, scale: &dyn PixelScale) -> Vec<Vec<TsdPoint>> {
    let cos_max = 30f64.to_radians().cos();
    trajs
        .iter()
        .filter(|t| {
            let c = t.centers();
            fit_heading(&c).is_some_and(|h| h.dot(axis.direction) >= cos_max)
        })
        .map(|t| {
            t.points
                .iter()
                .map(|p| TsdPoint {
                    id: t.id,
                    time_s: p.time_s,
                    distance_m: (p.center - axis.origin).dot(axis.direction) * scale.mpp(p),
                })
                .collect()
        })
        .collect()
}

pub fn tsd_csv(series: &[Vec<TsdPoint>]) -> String {
    let mut out = String::from("id,time_s,distance_m\n");
    for p in series.iter().flatten() {
        let _ = writeln!(out, "{},{:.4},{:.3}", p.id, p.time_s, p.distance_m);
    }
    out
}
