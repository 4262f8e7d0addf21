//! Deterministic synthetic scenarios with exact ground truth, and an
//! exhaustive conflict evaluator used to cross-check the safety stage.

use crate::error::{Error, Result};
use crate::geom::{polyline_length, Point, Polygon, Segment};
use crate::model::{BBox, DetectionRecord, VehicleClass};
use crate::safety::{ConflictKind, SafetyParams};
use crate::scene::{Approach, Axis, Corridor, LaneModel, SceneConfig, Section, Travel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use std::fmt::Write as _;

/// One piece of a speed profile. `set_speed_ms` jumps the speed at the
/// start of the phase; `accel_ms2` then applies for `duration_s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub duration_s: f64,
    #[serde(default)]
    pub accel_ms2: f64,
    #[serde(default)]
    pub set_speed_ms: Option<f64>,
}

/// Raised-cosine sideways move centered on `t_mid_s`. Positive offsets go to
/// the driver's right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralMove {
    pub t_mid_s: f64,
    pub duration_s: f64,
    pub offset_px: f64,
    #[serde(default)]
    pub to_lane: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VehicleScript {
    pub id: u32,
    #[serde(default = "default_class")]
    pub class: VehicleClass,
    /// Polyline in image pixels, in the direction of travel.
    pub path: Vec<Point>,
    #[serde(default)]
    pub path_name: String,
    #[serde(default)]
    pub lane: Option<u16>,
    pub start_s: f64,
    /// Initial distance along the path, meters.
    #[serde(default)]
    pub s0_m: f64,
    pub v0_ms: f64,
    #[serde(default)]
    pub phases: Vec<Phase>,
    #[serde(default)]
    pub lateral: Vec<LateralMove>,
    #[serde(default)]
    pub length_m: Option<f64>,
    #[serde(default)]
    pub width_m: Option<f64>,
    #[serde(default)]
    pub end_s: Option<f64>,
}

fn default_class() -> VehicleClass {
    VehicleClass::Car
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Deflection {
    /// Boxes in frames after this one are displaced.
    pub frame: u32,
    pub dx: f64,
    pub dy: f64,
    /// Rotation about the image center, degrees clockwise on screen.
    #[serde(default)]
    pub rotation_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default = "default_fps")]
    pub fps: f64,
    pub duration_s: f64,
    #[serde(default = "default_mpp")]
    pub meters_per_px: f64,
    #[serde(default = "default_w")]
    pub image_w: u32,
    #[serde(default = "default_h")]
    pub image_h: u32,
    pub vehicles: Vec<VehicleScript>,
    #[serde(default)]
    pub deflections: Vec<Deflection>,
    /// Uniform integer jitter on every box corner, pixels.
    #[serde(default)]
    pub jitter_px: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scene: Option<SceneConfig>,
}

fn default_fps() -> f64 {
    30.0
}
fn default_mpp() -> f64 {
    0.08364
}
fn default_w() -> u32 {
    1920
}
fn default_h() -> u32 {
    1080
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) || !(self.duration_s >= 0.0) || !(self.meters_per_px > 0.0) {
            return Err(Error::Scenario("fps, duration and meters_per_px must be positive".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for v in &self.vehicles {
            if !ids.insert(v.id) {
                return Err(Error::Scenario(format!("duplicate vehicle id {}", v.id)));
            }
            if v.path.len() < 2 || polyline_length(&v.path) <= 0.0 {
                return Err(Error::Scenario(format!("vehicle {}: path needs two distinct points", v.id)));
            }
            if v.v0_ms < 0.0 || v.phases.iter().any(|p| !(p.duration_s >= 0.0)) {
                return Err(Error::Scenario(format!("vehicle {}: negative speed or phase duration", v.id)));
            }
            if v.lateral.iter().any(|m| !(m.duration_s > 0.0)) {
                return Err(Error::Scenario(format!("vehicle {}: lateral moves need a positive duration", v.id)));
            }
        }
        if let Some(scene) = &self.scene {
            scene.validate()?;
        }
        Ok(())
    }

    /// The embedded scene, or a default one matching the scenario's frame and scale.
    pub fn scene_or_default(&self) -> SceneConfig {
        self.scene.clone().unwrap_or_else(|| scene_for(self))
    }
}

fn scene_for(s: &Scenario) -> SceneConfig {
    let mut scene = SceneConfig {
        fps: s.fps,
        image_w: s.image_w,
        image_h: s.image_h,
        ..Default::default()
    };
    if let Some(c) = scene.camera.calibration.as_mut() {
        c.meters_per_px = s.meters_per_px;
        c.reference_altitude_m = scene.camera.altitude_m;
    }
    scene
}

/// Longitudinal state after `tau` seconds: (distance m, speed m/s, accel m/s²).
/// Speed never goes negative; a braking phase that reaches zero holds there.
pub fn profile_state(v0: f64, phases: &[Phase], tau: f64) -> (f64, f64, f64) {
    let (mut s, mut v, mut elapsed) = (0.0, v0, 0.0);
    for ph in phases {
        if let Some(vs) = ph.set_speed_ms {
            v = vs.max(0.0);
        }
        let end = elapsed + ph.duration_s;
        if tau <= end {
            let (ds, dv, a) = advance(v, ph.accel_ms2, tau - elapsed);
            return (s + ds, dv, a);
        }
        let (ds, dv, _) = advance(v, ph.accel_ms2, ph.duration_s);
        s += ds;
        v = dv;
        elapsed = end;
    }
    (s + v * (tau - elapsed), v, 0.0)
}

fn advance(v: f64, a: f64, dt: f64) -> (f64, f64, f64) {
    if a < 0.0 && v + a * dt < 0.0 {
        let t_stop = v / -a;
        return (v * t_stop + 0.5 * a * t_stop * t_stop, 0.0, 0.0);
    }
    (v * dt + 0.5 * a * dt * dt, v + a * dt, a)
}

fn lateral_state(moves: &[LateralMove], t: f64) -> (f64, f64) {
    let (mut off, mut vel) = (0.0, 0.0);
    for m in moves {
        let u = ((t - m.t_mid_s) / m.duration_s + 0.5).clamp(0.0, 1.0);
        off += m.offset_px * (1.0 - (PI * u).cos()) / 2.0;
        if u > 0.0 && u < 1.0 {
            vel += m.offset_px * PI / (2.0 * m.duration_s) * (PI * u).sin();
        }
    }
    (off, vel)
}

/// Point and unit direction at arc length `arc` (px) along a polyline.
fn along(path: &[Point], arc: f64) -> (Point, Point) {
    let mut acc = 0.0;
    for w in path.windows(2) {
        let len = w[0].dist(w[1]);
        if len > 0.0 && arc <= acc + len {
            let d = (w[1] - w[0]) * (1.0 / len);
            return (w[0] + d * (arc - acc), d);
        }
        acc += len;
    }
    let n = path.len();
    let d = path[n - 1] - path[n - 2];
    (path[n - 1], d * (1.0 / d.norm()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub frame_num: u32,
    pub id: u32,
    pub class: VehicleClass,
    pub cx: f64,
    pub cy: f64,
    pub speed_ms: f64,
    pub accel_ms2: f64,
    pub path: String,
    pub lane: Option<u16>,
    pub s_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthLaneChange {
    pub id: u32,
    pub time_s: f64,
    pub from_lane: u16,
    pub to_lane: u16,
    pub speed_kmh: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TruthEvents {
    pub deflections: Vec<Deflection>,
    pub lane_changes: Vec<TruthLaneChange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub records: Vec<DetectionRecord>,
    pub truth: Vec<TruthRow>,
    pub events: TruthEvents,
}

struct VehicleAt {
    center: Point,
    dir: Point,
    speed_ms: f64,
    accel_ms2: f64,
    s_m: f64,
    lane: Option<u16>,
}

fn vehicle_at(v: &VehicleScript, t: f64, mpp: f64, path_len_px: f64) -> Option<VehicleAt> {
    if t < v.start_s || v.end_s.is_some_and(|e| t > e) {
        return None;
    }
    let (ds, speed, accel) = profile_state(v.v0_ms, &v.phases, t - v.start_s);
    let s_m = v.s0_m + ds;
    let arc = s_m / mpp;
    if arc > path_len_px {
        return None;
    }
    let (p, dir) = along(&v.path, arc);
    let (off, lat_vel) = lateral_state(&v.lateral, t);
    let normal = Point::new(-dir.y, dir.x);
    let lat_ms = lat_vel * mpp;
    let mut lane = v.lane;
    for m in &v.lateral {
        if t >= m.t_mid_s {
            if let Some(l) = m.to_lane {
                lane = Some(l);
            }
        }
    }
    Some(VehicleAt {
        center: p + normal * off,
        dir,
        speed_ms: (speed * speed + lat_ms * lat_ms).sqrt(),
        accel_ms2: accel,
        s_m,
        lane,
    })
}

fn default_dims(class: VehicleClass) -> (f64, f64) {
    match class {
        VehicleClass::Car => (4.5, 1.8),
        VehicleClass::Bus => (11.0, 2.5),
        VehicleClass::Truck => (8.0, 2.4),
    }
}

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

fn camera_transform(p: Point, defl: &[Deflection], frame: u32, w: f64, h: f64) -> Point {
    let c = Point::new(w / 2.0, h / 2.0);
    let mut q = p;
    for d in defl.iter().filter(|d| frame > d.frame) {
        if d.rotation_deg != 0.0 {
            let (s, co) = d.rotation_deg.to_radians().sin_cos();
            let r = q - c;
            q = c + Point::new(r.x * co - r.y * s, r.x * s + r.y * co);
        }
        q = q + Point::new(d.dx, d.dy);
    }
    q
}

/// Renders a scenario. Identical scenarios give identical output.
pub fn generate(sc: &Scenario) -> Result<SynthOutput> {
    sc.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let (iw, ih) = (sc.image_w as f64, sc.image_h as f64);
    let n_frames = (sc.duration_s * sc.fps).floor() as u32 + 1;
    let lens: Vec<f64> = sc.vehicles.iter().map(|v| polyline_length(&v.path)).collect();
    let mut defl = sc.deflections.clone();
    defl.sort_by_key(|d| d.frame);
    let mut records = Vec::new();
    let mut truth = Vec::new();
    for f in 0..n_frames {
        let t = f as f64 / sc.fps;
        for (v, &len) in sc.vehicles.iter().zip(&lens) {
            let Some(st) = vehicle_at(v, t, sc.meters_per_px, len) else { continue };
            let (lm, wm) = default_dims(v.class);
            let (lpx, wpx) = (v.length_m.unwrap_or(lm) / sc.meters_per_px, v.width_m.unwrap_or(wm) / sc.meters_per_px);
            let half_w = (st.dir.x.abs() * lpx + st.dir.y.abs() * wpx) / 2.0;
            let half_h = (st.dir.y.abs() * lpx + st.dir.x.abs() * wpx) / 2.0;
            let c = st.center;
            if c.x - half_w < 0.0 || c.y - half_h < 0.0 || c.x + half_w > iw || c.y + half_h > ih {
                return Err(Error::Scenario(format!("vehicle {} leaves the frame at frame {f}", v.id)));
            }
            truth.push(TruthRow {
                frame_num: f,
                id: v.id,
                class: v.class,
                cx: c.x,
                cy: c.y,
                speed_ms: st.speed_ms,
                accel_ms2: st.accel_ms2,
                path: v.path_name.clone(),
                lane: st.lane,
                s_m: st.s_m,
            });
            let seen = camera_transform(c, &defl, f, iw, ih);
            let mut corners = [seen.x - half_w, seen.y - half_h, seen.x + half_w, seen.y + half_h];
            if sc.jitter_px > 0 {
                let j = sc.jitter_px as i64;
                for k in &mut corners {
                    *k += rng.gen_range(-j..=j) as f64;
                }
            }
            let [x0, y0, x1, y1] = corners.map(round4);
            if x0 < 0.0 || y0 < 0.0 || x1 > iw || y1 > ih || x1 <= x0 || y1 <= y0 {
                // the tracker loses boxes the camera pushes out of view
                continue;
            }
            records.push(DetectionRecord {
                frame_num: f,
                id: v.id,
                class: v.class,
                bbox: BBox::new(x0, y0, x1, y1)?,
                altitude_m: None,
            });
        }
    }
    let mut lane_changes = Vec::new();
    for (v, &len) in sc.vehicles.iter().zip(&lens) {
        let mut lane = v.lane;
        for m in &v.lateral {
            if let (Some(from), Some(to)) = (lane, m.to_lane) {
                if let Some(st) = vehicle_at(v, m.t_mid_s, sc.meters_per_px, len) {
                    lane_changes.push(TruthLaneChange {
                        id: v.id,
                        time_s: m.t_mid_s,
                        from_lane: from,
                        to_lane: to,
                        speed_kmh: st.speed_ms * 3.6,
                    });
                }
            }
            lane = m.to_lane.or(lane);
        }
    }
    Ok(SynthOutput {
        records,
        truth,
        events: TruthEvents {
            deflections: defl,
            lane_changes,
        },
    })
}

pub fn truth_csv(rows: &[TruthRow]) -> String {
    let mut out = String::from("frame_num,id,class,cx,cy,speed_ms,accel_ms2,path,lane,s_m\n");
    for r in rows {
        let lane = r.lane.map(|l| l.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{},{lane},{:.6}",
            r.frame_num, r.id, r.class, r.cx, r.cy, r.speed_ms, r.accel_ms2, r.path, r.s_m
        );
    }
    out
}

pub fn events_json(e: &TruthEvents) -> String {
    serde_json::to_string_pretty(e).expect("events serialize")
}

// ---------------------------------------------------------------------------
// Built-in scenarios

pub const BUILTIN: [&str; 9] = [
    "constant-velocity",
    "uniform-acceleration",
    "deflection",
    "deflection-control",
    "closing-pair",
    "crossing",
    "corridor",
    "lane-change",
    "signal",
];

pub fn builtin(name: &str) -> Result<Scenario> {
    Ok(match name {
        "constant-velocity" => constant_velocity(),
        "uniform-acceleration" => uniform_acceleration(),
        "deflection" => deflection_scene(true),
        "deflection-control" => deflection_scene(false),
        "closing-pair" => closing_pair(),
        "crossing" => crossing(),
        "corridor" => corridor(198, 7),
        "lane-change" => lane_change(),
        "signal" => signal(),
        "platoon" => platoon(),
        _ if name.starts_with("random-following-") => {
            let seed = name["random-following-".len()..]
                .parse()
                .map_err(|_| Error::Scenario(format!("bad seed in `{name}`")))?;
            random_following(seed)
        }
        _ => return Err(Error::Scenario(format!("unknown scenario `{name}`"))),
    })
}

fn base(name: &str, duration_s: f64) -> Scenario {
    Scenario {
        name: name.into(),
        fps: 30.0,
        duration_s,
        meters_per_px: 0.08364,
        image_w: 1920,
        image_h: 1080,
        vehicles: Vec::new(),
        deflections: Vec::new(),
        jitter_px: 0,
        seed: 0,
        scene: None,
    }
}

fn car(id: u32, path: Vec<Point>, start_s: f64, v0: f64) -> VehicleScript {
    VehicleScript {
        id,
        class: VehicleClass::Car,
        path,
        path_name: String::new(),
        lane: None,
        start_s,
        s0_m: 0.0,
        v0_ms: v0,
        phases: Vec::new(),
        lateral: Vec::new(),
        length_m: None,
        width_m: None,
        end_s: None,
    }
}

fn hline(x0: f64, x1: f64, y: f64) -> Vec<Point> {
    vec![Point::new(x0, y), Point::new(x1, y)]
}

/// Straight lanes along x with boundaries at the given y values.
pub fn straight_lanes(ys: &[f64], travel: Travel) -> LaneModel {
    LaneModel {
        axis: Axis::Horizontal,
        travel,
        boundaries: ys.iter().map(|&y| hline(0.0, 1920.0, y)).collect(),
    }
}

/// One car at 1 px/frame.
fn constant_velocity() -> Scenario {
    let mut s = base("constant-velocity", 20.0);
    s.vehicles.push(car(1, hline(100.0, 1800.0, 540.0), 0.0, 2.5092));
    s
}

fn uniform_acceleration() -> Scenario {
    let mut s = base("uniform-acceleration", 10.0);
    let mut v = car(1, hline(60.0, 1880.0, 540.0), 0.0, 5.0);
    v.phases.push(Phase { duration_s: 10.0, accel_ms2: 0.5, set_speed_ms: None });
    s.vehicles.push(v);
    s
}

/// Twenty vehicles, half queued and half moving slowly along one axis, with a
/// (+24, −8) px camera jump after frame 100.
fn deflection_scene(with_jump: bool) -> Scenario {
    let mut s = base(if with_jump { "deflection" } else { "deflection-control" }, 10.0);
    for k in 0..20u32 {
        let row = (k / 5) as f64;
        let colf = (k % 5) as f64;
        let (x, y) = (250.0 + 300.0 * colf, 200.0 + 200.0 * row);
        let v = match k % 4 {
            0 | 1 => car(k + 1, hline(x, x + 1.0, y), 0.0, 0.0),
            2 => car(k + 1, hline(x, x + 200.0, y), 0.0, 0.5 + 0.05 * k as f64),
            _ => car(k + 1, vec![Point::new(x, y), Point::new(x, y + 150.0)], 0.0, 0.4 + 0.03 * k as f64),
        };
        s.vehicles.push(v);
    }
    if with_jump {
        s.deflections.push(Deflection { frame: 100, dx: 24.0, dy: -8.0, rotation_deg: 0.0 });
    }
    s
}

fn one_lane_scene(s: &Scenario, ys: &[f64], travel: Travel) -> SceneConfig {
    let mut scene = scene_for(s);
    scene.approaches.push(Approach {
        name: "main".into(),
        region: Polygon::rect(0.0, ys[0], 1920.0, ys[ys.len() - 1]),
        lanes: Some(straight_lanes(ys, travel)),
    });
    scene
}

/// Follower gains 2.3306 m/s on its leader until the gap is 1.402625 m at
/// t = 5 s, then matches its speed.
fn closing_pair() -> Scenario {
    let mut s = base("closing-pair", 12.0);
    let (vl, dv) = (5.0, 2.3306);
    let gap_end = 1.402625;
    let t_close = 5.0;
    let len = 4.5;
    // centers: D_l - D_f - L = gap
    let d0 = gap_end + dv * t_close + len;
    let mut leader = car(45, hline(40.0, 1880.0, 510.0), 0.0, vl);
    leader.s0_m = d0;
    leader.lane = Some(1);
    let mut follower = car(19, hline(40.0, 1880.0, 510.0), 0.0, vl + dv);
    follower.lane = Some(1);
    follower.phases = vec![
        Phase { duration_s: t_close, accel_ms2: 0.0, set_speed_ms: None },
        Phase { duration_s: 0.0, accel_ms2: 0.0, set_speed_ms: Some(vl) },
    ];
    s.vehicles = vec![leader, follower];
    s.scene = Some(one_lane_scene(&s, &[480.0, 540.0], Travel::Increasing));
    s
}

/// Two crossing streams through a crosswalk line; the northbound car reaches
/// the line 987 ms after the eastbound one.
fn crossing() -> Scenario {
    let mut s = base("crossing", 20.0);
    let p = Point::new(1160.0, 540.0);
    let v = 8.0;
    let east = car(14, hline(40.0, 1880.0, p.y), 0.0, v);
    // eastbound passes p at t_e; northbound follows 0.987 s later
    let t_e = (p.x - 40.0) * s.meters_per_px / v;
    let t_n = t_e + 0.987;
    let mut north = car(6, vec![Point::new(p.x, 1040.0), Point::new(p.x, 40.0)], 0.0, v);
    north.start_s = t_n - (1040.0 - p.y) * s.meters_per_px / v;
    let mut scene = scene_for(&s);
    // diagonal line through the crossing point, cut by both paths
    scene.sections.push(Section {
        name: "crosswalk".into(),
        line: Segment::new(Point::new(p.x - 50.0, p.y - 50.0), Point::new(p.x + 50.0, p.y + 50.0)),
    });
    scene.conflict_zones.push(crate::scene::ConflictZone {
        name: "box".into(),
        polygon: Polygon::rect(p.x - 40.0, p.y - 40.0, p.x + 40.0, p.y + 40.0),
    });
    s.vehicles = vec![east, north];
    s.scene = Some(scene);
    s
}

/// `n` straight-through vehicles in two opposing lanes with mild speed changes.
pub fn corridor(n: u32, seed: u64) -> Scenario {
    let mut s = base("corridor", 0.0);
    s.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (x_a, x_b) = (100.0, 1820.0);
    let mut last_end: f64 = 0.0;
    for k in 0..n {
        let eastbound = k % 2 == 0;
        let start = k as f64 * 2.5;
        let v0 = rng.gen_range(6.0..14.0);
        let a = rng.gen_range(-0.3..0.3);
        let path = if eastbound { hline(30.0, 1890.0, 480.0) } else { hline(1890.0, 30.0, 600.0) };
        let mut v = car(k + 1, path, start, v0);
        v.path_name = if eastbound { "eastbound".into() } else { "westbound".into() };
        v.lane = Some(1);
        v.phases.push(Phase { duration_s: rng.gen_range(2.0..6.0), accel_ms2: a, set_speed_ms: None });
        let t_travel = 1860.0 * s.meters_per_px / (v0 - 0.3 * 6.0).max(1.0);
        last_end = last_end.max(start + t_travel);
        s.vehicles.push(v);
    }
    s.duration_s = last_end.ceil();
    let mut scene = scene_for(&s);
    scene.corridor = Some(Corridor {
        ends: [
            Segment::new(Point::new(x_a, 400.0), Point::new(x_a, 680.0)),
            Segment::new(Point::new(x_b, 400.0), Point::new(x_b, 680.0)),
        ],
    });
    scene.corridor_length_m = (x_b - x_a) * s.meters_per_px;
    s.scene = Some(scene);
    s
}

/// Five westbound lanes 60 px wide (lane 1 nearest y = 400). Vehicle 275
/// moves 3 → 4 crossing the boundary at t = 242.44 s and 4 → 5 five seconds
/// later, travelling at 14 km/h at both crossings.
fn lane_change() -> Scenario {
    let mut s = base("lane-change", 260.0);
    let mpp = s.meters_per_px;
    let (width, dur) = (60.0, 4.0);
    let v_total = 14.0 / 3.6;
    let lat_peak = PI * width / (2.0 * dur) * mpp;
    let v_long = (v_total * v_total - lat_peak * lat_peak).sqrt();
    let ys: Vec<f64> = (0..6).map(|k| 400.0 + width * k as f64).collect();
    let mut v = car(275, hline(1880.0, 40.0, 400.0 + width * 2.5), 236.0, v_long);
    v.path_name = "westbound".into();
    v.lane = Some(3);
    // westbound: the driver's right is up the screen, so moving down is negative
    v.lateral = vec![
        LateralMove { t_mid_s: 242.44, duration_s: dur, offset_px: -width, to_lane: Some(4) },
        LateralMove { t_mid_s: 247.44, duration_s: dur, offset_px: -width, to_lane: Some(5) },
    ];
    s.vehicles.push(v);
    s.scene = Some(one_lane_scene(&s, &ys, Travel::Decreasing));
    s
}

/// Westbound platoon stopping at a red signal between 10 s and 25 s.
fn signal() -> Scenario {
    let mut s = base("signal", 45.0);
    let stop_x = 700.0;
    let mpp = s.meters_per_px;
    let v = 10.0;
    let (red_start, red_end, decel) = (10.0, 25.0, 3.0);
    let mut scene = one_lane_scene(&s, &[480.0, 540.0], Travel::Decreasing);
    scene.sections.push(Section {
        name: "stop bar".into(),
        line: Segment::new(Point::new(stop_x, 470.0), Point::new(stop_x, 550.0)),
    });
    for k in 0..5u32 {
        let start = k as f64 * 1.5;
        // stopping point: queue position k behind the bar
        let stop_s = (1880.0 - stop_x) * mpp - k as f64 * 7.0;
        let brake_dist = v * v / (2.0 * decel);
        let t_brake = start + (stop_s - brake_dist) / v;
        let mut c = car(k + 1, hline(1880.0, 40.0, 510.0), start, v);
        c.path_name = "westbound".into();
        c.lane = Some(1);
        let t_go = red_end + 1.5 * k as f64;
        c.phases = vec![
            Phase { duration_s: t_brake - start, accel_ms2: 0.0, set_speed_ms: None },
            Phase { duration_s: v / decel, accel_ms2: -decel, set_speed_ms: None },
            Phase { duration_s: t_go - t_brake - v / decel, accel_ms2: 0.0, set_speed_ms: Some(0.0) },
            Phase { duration_s: v / 2.0, accel_ms2: 2.0, set_speed_ms: None },
        ];
        debug_assert!(t_brake + v / decel <= t_go && t_brake > red_start - 8.0);
        s.vehicles.push(c);
    }
    s.scene = Some(scene);
    s
}

/// Five cars in one lane; two followers close on their leaders.
fn platoon() -> Scenario {
    let mut s = base("platoon", 14.0);
    let speeds = [8.0, 8.0, 10.5, 8.0, 10.5];
    for (k, &v) in speeds.iter().enumerate() {
        let mut c = car(k as u32 + 1, hline(40.0, 1880.0, 510.0), 0.0, 8.0);
        c.s0_m = 80.0 - 12.0 * k as f64;
        c.lane = Some(1);
        c.path_name = "eastbound".into();
        if v != 8.0 {
            c.phases = vec![
                Phase { duration_s: 2.5, accel_ms2: 0.0, set_speed_ms: Some(v) },
                Phase { duration_s: 0.0, accel_ms2: 0.0, set_speed_ms: Some(8.0) },
            ];
        }
        s.vehicles.push(c);
    }
    s.scene = Some(one_lane_scene(&s, &[480.0, 540.0], Travel::Increasing));
    s
}

/// Up to ten cars in two eastbound lanes with random speeds, speed changes
/// and start times, plus a section line for PET.
pub fn random_following(seed: u64) -> Scenario {
    let mut s = base(&format!("random-following-{seed}"), 30.0);
    s.seed = seed;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(4..=10u32);
    for id in 1..=n {
        let lane = rng.gen_range(1..=2u16);
        let y = if lane == 1 { 500.0 } else { 560.0 };
        let mut c = car(id, hline(40.0, 1880.0, y), rng.gen_range(0.0..15.0), rng.gen_range(4.0..14.0));
        c.lane = Some(lane);
        c.path_name = "eastbound".into();
        for _ in 0..rng.gen_range(0..3) {
            c.phases.push(Phase {
                duration_s: rng.gen_range(1.0..4.0),
                accel_ms2: rng.gen_range(-2.0..2.0),
                set_speed_ms: None,
            });
        }
        s.vehicles.push(c);
    }
    let mut scene = one_lane_scene(&s, &[470.0, 530.0, 590.0], Travel::Increasing);
    scene.sections.push(Section {
        name: "line".into(),
        line: Segment::new(Point::new(1200.0, 460.0), Point::new(1200.0, 600.0)),
    });
    s.scene = Some(scene);
    s
}

// ---------------------------------------------------------------------------
// Exhaustive conflict oracle

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConflict {
    pub kind: ConflictKind,
    pub id_a: u32,
    pub id_b: u32,
    pub frame_start: u32,
    pub frame_end: u32,
    pub min_ms: f64,
}

/// All-pairs, all-frames evaluation of TTC and section PET. Positions along
/// the lane and lane membership come from ground truth; speeds and crossing
/// instants come from the tracker rows.
pub fn brute_force_conflicts(
    records: &[DetectionRecord],
    truth: &[TruthRow],
    scene: &SceneConfig,
    params: &SafetyParams,
    mpp: f64,
) -> Vec<OracleConflict> {
    let fps = scene.fps;
    let mut rows: BTreeMap<u32, Vec<&DetectionRecord>> = BTreeMap::new();
    for r in records {
        rows.entry(r.id).or_default().push(r);
    }
    rows.retain(|_, v| v.len() >= params.min_points);
    for v in rows.values_mut() {
        v.sort_by_key(|r| r.frame_num);
    }
    // (frame, id) -> speed m/s by backward difference
    let mut speed: HashMap<(u32, u32), f64> = HashMap::new();
    let mut class: HashMap<u32, VehicleClass> = HashMap::new();
    for (id, v) in &rows {
        class.insert(*id, v[0].class);
        for k in 0..v.len() {
            let s = if k == 0 {
                0.0
            } else {
                let d = v[k].bbox.center().dist(v[k - 1].bbox.center());
                d * mpp * fps / (v[k].frame_num - v[k - 1].frame_num) as f64
            };
            speed.insert((v[k].frame_num, *id), s);
        }
    }
    let mut by_frame: BTreeMap<u32, Vec<&TruthRow>> = BTreeMap::new();
    for t in truth {
        if speed.contains_key(&(t.frame_num, t.id)) && t.lane.is_some() {
            by_frame.entry(t.frame_num).or_default().push(t);
        }
    }
    let mut flagged: BTreeMap<(u32, u32), Vec<(u32, f64)>> = BTreeMap::new();
    for (&frame, present) in &by_frame {
        for f in present {
            for l in present {
                if f.id == l.id || f.path != l.path || f.lane != l.lane {
                    continue;
                }
                let key = |r: &TruthRow| (r.s_m, r.id);
                if !(key(l) > key(f)) {
                    continue;
                }
                let between = present
                    .iter()
                    .any(|k| k.path == f.path && k.lane == f.lane && key(k) > key(f) && key(k) < key(l));
                if between {
                    continue;
                }
                let vf = speed[&(frame, f.id)];
                let vl = speed[&(frame, l.id)];
                let gap = l.s_m - f.s_m - scene.vehicle_lengths_m.get(class[&l.id]);
                let dv = vf - vl;
                if !(dv > 0.0) {
                    continue;
                }
                let ttc = if gap < 0.0 { 0.0 } else { gap / dv * 1000.0 };
                let s_min = vf * params.t_react_s + vf * vf / (2.0 * params.d_max_ms2);
                if ttc < params.ttc_threshold_ms && (!params.warning_gate || gap < s_min) {
                    flagged.entry((l.id, f.id)).or_default().push((frame, ttc));
                }
            }
        }
    }
    let mut out = Vec::new();
    for ((a, b), mut frames) in flagged {
        frames.sort_by_key(|x| x.0);
        let mut run: Vec<(u32, f64)> = Vec::new();
        for (fr, v) in frames.into_iter().chain(std::iter::once((u32::MAX, 0.0))) {
            if run.last().is_some_and(|&(p, _)| fr != p + 1) {
                out.push(OracleConflict {
                    kind: ConflictKind::Ttc,
                    id_a: a,
                    id_b: b,
                    frame_start: run[0].0,
                    frame_end: run[run.len() - 1].0,
                    min_ms: run.iter().map(|x| x.1).fold(f64::INFINITY, f64::min),
                });
                run.clear();
            }
            run.push((fr, v));
        }
    }
    for sec in &scene.sections {
        let mut crossings: Vec<(f64, u32)> = Vec::new();
        for (id, v) in &rows {
            for w in v.windows(2) {
                let (p, q) = (w[0].bbox.center(), w[1].bbox.center());
                if let Some(u) = sec.line.crossing_param(p, q) {
                    let (t0, t1) = (w[0].frame_num as f64 / fps, w[1].frame_num as f64 / fps);
                    crossings.push((t0 + u * (t1 - t0), *id));
                }
            }
        }
        for &(tj, idj) in &crossings {
            let best = crossings
                .iter()
                .filter(|&&(ti, idi)| idi != idj && (ti, idi) < (tj, idj))
                .map(|&(ti, idi)| (tj - ti, idi))
                .min_by(|x, y| x.0.total_cmp(&y.0).then(y.1.cmp(&x.1)));
            if let Some((dt, idi)) = best {
                let pet = dt * 1000.0;
                if pet < params.pet_threshold_ms {
                    let frame = (tj * fps).ceil() as u32;
                    out.push(OracleConflict {
                        kind: ConflictKind::Pet,
                        id_a: idi,
                        id_b: idj,
                        frame_start: frame,
                        frame_end: frame,
                        min_ms: pet,
                    });
                }
            }
        }
    }
    out.sort_by(|x, y| (x.kind, x.id_a, x.id_b, x.frame_start).cmp(&(y.kind, y.id_a, y.id_b, y.frame_start)));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Exec;
    use crate::georef::AltitudeScale;
    use crate::kinematics::{enrich_all, KinematicsParams};
    use crate::model::assemble_trajectories;
    use crate::safety::extract_conflicts;

    #[test]
    fn constant_velocity_truth() {
        let out = generate(&builtin("constant-velocity").unwrap()).unwrap();
        for r in &out.truth {
            assert!((r.speed_ms * 3.6 - 9.033).abs() < 1e-3);
        }
        let t = assemble_trajectories(&out.records, 30.0).unwrap();
        let k = crate::kinematics::enrich_kinematics(&t[0], &0.08364, &KinematicsParams::default());
        assert!(k[1..].iter().all(|s| (s.speed_kmh - 9.033).abs() < 1e-3));
    }

    #[test]
    fn profile_examples() {
        let ph = [Phase { duration_s: 2.0, accel_ms2: -5.0, set_speed_ms: None }];
        // stops after 1 s having covered 2.5 m
        assert_eq!(profile_state(5.0, &ph, 3.0), (2.5, 0.0, 0.0));
        let (s, v, a) = profile_state(5.0, &[Phase { duration_s: 4.0, accel_ms2: 0.5, set_speed_ms: None }], 2.0);
        assert_eq!((s, v, a), (11.0, 6.0, 0.5));
        let jump = [Phase { duration_s: 1.0, accel_ms2: 0.0, set_speed_ms: None }, Phase { duration_s: 0.0, accel_ms2: 0.0, set_speed_ms: Some(2.0) }];
        assert_eq!(profile_state(4.0, &jump, 3.0), (8.0, 2.0, 0.0));
    }

    #[test]
    fn deterministic_and_jitter_seeded() {
        let mut sc = builtin("deflection").unwrap();
        sc.jitter_px = 1;
        sc.seed = 9;
        let a = generate(&sc).unwrap();
        let b = generate(&sc).unwrap();
        assert_eq!(a, b);
        sc.seed = 10;
        assert_ne!(generate(&sc).unwrap().records, a.records);
    }

    #[test]
    fn deflection_shifts_later_boxes() {
        let with = generate(&builtin("deflection").unwrap()).unwrap();
        let without = generate(&builtin("deflection-control").unwrap()).unwrap();
        assert_eq!(with.records.len(), without.records.len());
        for (a, b) in with.records.iter().zip(&without.records) {
            let (dx, dy) = if a.frame_num > 100 { (24.0, -8.0) } else { (0.0, 0.0) };
            assert!((a.bbox.xmin - b.bbox.xmin - dx).abs() < 1e-3 && (a.bbox.ymin - b.bbox.ymin - dy).abs() < 1e-3);
        }
    }

    #[test]
    fn leaving_frame_is_an_error() {
        let mut sc = base("bad", 5.0);
        sc.vehicles.push(car(1, hline(1800.0, 1950.0, 500.0), 0.0, 5.0));
        assert!(matches!(generate(&sc), Err(Error::Scenario(_))));
        assert!(builtin("nope").is_err());
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = builtin("closing-pair").unwrap();
        let back = Scenario::from_json(&sc.to_json()).unwrap();
        assert_eq!(back, sc);
        assert!(Scenario::from_json(r#"{"name":"x","duration_s":1,"vehicles":[],"bogus":1}"#).is_err());
    }

    #[test]
    fn closing_pair_truth_ttc() {
        let sc = builtin("closing-pair").unwrap();
        let out = generate(&sc).unwrap();
        let at = |id, f| out.truth.iter().find(|r| r.id == id && r.frame_num == f).unwrap();
        let (l, f) = (at(45, 150), at(19, 150));
        let gap = l.s_m - f.s_m - 4.5;
        assert!((gap - 1.402625).abs() < 1e-9);
        assert!((gap / 2.3306 * 1000.0 - 601.8).abs() < 0.1);
    }

    fn run_both(sc: &Scenario) -> (Vec<OracleConflict>, Vec<OracleConflict>) {
        let out = generate(sc).unwrap();
        let scene = sc.scene_or_default();
        let params = SafetyParams::default();
        let brute = brute_force_conflicts(&out.records, &out.truth, &scene, &params, sc.meters_per_px);
        let trajs = assemble_trajectories(&out.records, sc.fps).unwrap();
        let scale = AltitudeScale::from_scene(&scene).unwrap();
        let e = enrich_all(&trajs, &scale, &KinematicsParams::default(), Exec::Sequential);
        let mut got: Vec<OracleConflict> = extract_conflicts(&e, &scene, &scale, &params, Exec::Sequential)
            .events
            .into_iter()
            .map(|e| OracleConflict {
                kind: e.kind,
                id_a: e.id_a,
                id_b: e.id_b,
                frame_start: e.frame_start,
                frame_end: e.frame_end,
                min_ms: e.min_ms,
            })
            .collect();
        got.sort_by(|x, y| (x.kind, x.id_a, x.id_b, x.frame_start).cmp(&(y.kind, y.id_a, y.id_b, y.frame_start)));
        (brute, got)
    }

    #[test]
    fn oracle_examples() {
        let (b, g) = run_both(&builtin("closing-pair").unwrap());
        assert_eq!(b.len(), 1);
        assert_eq!(g.len(), 1);
        assert!((g[0].min_ms - 601.8).abs() < 5.0, "{}", g[0].min_ms);
        let (b, g) = run_both(&builtin("platoon").unwrap());
        assert_eq!(b.iter().filter(|c| c.kind == ConflictKind::Ttc).count(), 2);
        assert_eq!(b.len(), g.len());
        let mut free = builtin("platoon").unwrap();
        for v in &mut free.vehicles {
            v.phases.clear();
        }
        let (b, g) = run_both(&free);
        assert!(b.is_empty() && g.is_empty());
    }

    #[test]
    fn crossing_section_and_zone_pets() {
        let (b, g) = run_both(&builtin("crossing").unwrap());
        assert_eq!(b.len(), 1);
        assert_eq!(g.len(), 2, "{g:?}");
        let mut ms: Vec<f64> = g.iter().map(|c| c.min_ms).collect();
        ms.sort_by(f64::total_cmp);
        // zone: 80 px box, 40 px of each path on either side of the point
        let half = 40.0 * 0.08364 / 8.0 * 1000.0;
        assert!((ms[0] - (987.0 - 2.0 * half)).abs() < 40.0, "{ms:?}");
        // section: leader 14, follower 6, 987 ms apart at the crossing point
        assert!((ms[1] - 987.0).abs() < 40.0, "{ms:?}");
        assert!((ms[1] - b[0].min_ms).abs() < 1.0);
    }
}
