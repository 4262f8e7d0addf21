//! Surrogate safety measures: car-following TTC, section and zone PET,
//! conflict events and the severity heatmap.

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::geo_util::{crossings_of, occupancy_intervals};
use crate::geom::{polyline_length, project_onto_polyline, Point};
use crate::kinematics::{EnrichedTrajectory, MS_TO_KMH};
use crate::scene::{Axis, LaneModel, SceneConfig, Travel};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarFollowingState {
    pub leader_id: u32,
    pub follower_id: u32,
    /// Position along the lane, meters, increasing in the travel direction.
    pub d_leader_m: f64,
    pub d_follower_m: f64,
    pub l_leader_m: f64,
    pub v_follower_ms: f64,
    pub v_leader_ms: f64,
    pub time_s: f64,
}

impl CarFollowingState {
    /// Bumper-to-bumper gap in meters.
    pub fn gap_m(&self) -> f64 {
        self.d_leader_m - self.d_follower_m - self.l_leader_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Ttc {
    pub ms: f64,
    /// The boxes already overlap along the lane; `ms` is 0.
    pub overlap: bool,
}

/// Time to collision in ms, or `None` when the follower is not closing in.
pub fn compute_ttc(s: &CarFollowingState) -> Option<Ttc> {
    let dv = s.v_follower_ms - s.v_leader_ms;
    if !(dv > 0.0) {
        return None;
    }
    let gap = s.gap_m();
    Some(if gap < 0.0 {
        Ttc { ms: 0.0, overlap: true }
    } else {
        Ttc { ms: gap / dv * 1000.0, overlap: false }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectionCrossing {
    pub id: u32,
    pub section: String,
    pub time_s: f64,
}

/// Post-encroachment time in ms between two crossings of the same section.
pub fn compute_pet(leader: &SectionCrossing, follower: &SectionCrossing) -> Result<f64> {
    if leader.section != follower.section {
        return Err(Error::SectionMismatch(leader.section.clone(), follower.section.clone()));
    }
    if follower.time_s < leader.time_s {
        return Err(Error::CrossingOrder {
            leader_s: leader.time_s,
            follower_s: follower.time_s,
        });
    }
    Ok((follower.time_s - leader.time_s) * 1000.0)
}

/// Distance needed to react and brake to a stop from `v` m/s.
pub fn min_warning_distance(v_ms: f64, t_react_s: f64, d_max_ms2: f64) -> f64 {
    v_ms * t_react_s + v_ms * v_ms / (2.0 * d_max_ms2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SafetyParams {
    pub ttc_threshold_ms: f64,
    pub pet_threshold_ms: f64,
    /// Only count a TTC frame when the gap is also inside the follower's
    /// minimum warning distance.
    pub warning_gate: bool,
    pub t_react_s: f64,
    pub d_max_ms2: f64,
    /// Leader length from the box extent along the lane instead of class defaults.
    pub length_from_bbox: bool,
    /// Series whose standard deviation is below this (ms) are flagged constant.
    pub constant_eps_ms: f64,
    pub min_points: usize,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            ttc_threshold_ms: 2000.0,
            pet_threshold_ms: 1500.0,
            warning_gate: true,
            t_react_s: 2.5,
            d_max_ms2: 3.4,
            length_from_bbox: false,
            constant_eps_ms: 1.0,
            min_points: 15,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ConflictKind {
    Ttc,
    Pet,
}

impl fmt::Display for ConflictKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConflictKind::Ttc => "TTC",
            ConflictKind::Pet => "PET",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeasurePoint {
    pub frame_num: u32,
    pub time_s: f64,
    pub value_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConflictEvent {
    pub conflict_id: u32,
    pub kind: ConflictKind,
    /// Leader (TTC) or first crossing vehicle (PET).
    pub id_a: u32,
    /// Follower (TTC) or second crossing vehicle (PET).
    pub id_b: u32,
    /// Lane (`approach:lane`), section or zone name.
    pub site: String,
    pub frame_start: u32,
    pub frame_end: u32,
    pub t_start: f64,
    pub t_end: f64,
    pub series: Vec<MeasurePoint>,
    pub min_ms: f64,
    pub mean_ms: f64,
    pub location_px: Point,
    pub location_m: Point,
    pub overlap: bool,
    pub constant: bool,
}

impl ConflictEvent {
    pub fn duration_frames(&self) -> u32 {
        self.frame_end - self.frame_start + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FollowingRecord {
    pub site: String,
    pub frame_num: u32,
    pub state: CarFollowingStateRow,
    pub ttc: Option<Ttc>,
    pub flagged: bool,
}

/// Serializable mirror of [`CarFollowingState`] plus follower kinematics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CarFollowingStateRow {
    pub leader_id: u32,
    pub follower_id: u32,
    pub time_s: f64,
    pub gap_m: f64,
    pub v_follower_ms: f64,
    pub v_leader_ms: f64,
    pub a_follower_ms2: f64,
    pub follower_center: Point,
    pub mpp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PetSample {
    pub site: String,
    pub leader_id: u32,
    pub follower_id: u32,
    pub t_leader_s: f64,
    pub t_follower_s: f64,
    pub pet_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SafetyAnalysis {
    pub following: Vec<FollowingRecord>,
    pub crossings: Vec<SectionCrossing>,
    pub pets: Vec<PetSample>,
    pub events: Vec<ConflictEvent>,
}

struct LaneSite<'a> {
    name: String,
    model: &'a LaneModel,
    lane: u16,
    /// Centerline ordered in the direction of travel.
    line: Vec<Point>,
}

fn lane_sites(scene: &SceneConfig) -> Vec<LaneSite<'_>> {
    let mut sites = Vec::new();
    for a in &scene.approaches {
        let Some(m) = a.lanes.as_ref() else { continue };
        for lane in 1..=m.num_lanes() as u16 {
            let Some(mut line) = m.centerline(lane) else { continue };
            if m.travel == Travel::Decreasing {
                line.reverse();
            }
            sites.push(LaneSite {
                name: format!("{}:{lane}", a.name),
                model: m,
                lane,
                line,
            });
        }
    }
    sites
}

fn leader_length(e: &EnrichedTrajectory, pi: usize, model: &LaneModel, scene: &SceneConfig, params: &SafetyParams, mpp: f64) -> f64 {
    if params.length_from_bbox {
        let b = &e.traj.points[pi].bbox;
        let ext = match model.axis {
            Axis::Horizontal => b.width(),
            Axis::Vertical => b.height(),
        };
        ext * mpp
    } else {
        scene.vehicle_lengths_m.get(e.traj.class)
    }
}

/// Whether a car-following frame counts toward a TTC conflict.
pub fn ttc_flagged(ttc: Option<Ttc>, gap_m: f64, v_follower_ms: f64, params: &SafetyParams) -> bool {
    match ttc {
        Some(t) if t.ms < params.ttc_threshold_ms => {
            !params.warning_gate || gap_m < min_warning_distance(v_follower_ms, params.t_react_s, params.d_max_ms2)
        }
        _ => false,
    }
}

/// Per-frame car-following states for every consecutive same-lane pair.
pub fn following_states(
    enriched: &[EnrichedTrajectory],
    scene: &SceneConfig,
    scale: &dyn crate::georef::PixelScale,
    params: &SafetyParams,
    exec: Exec,
) -> Vec<FollowingRecord> {
    let sites = lane_sites(scene);
    let mut by_frame: BTreeMap<u32, Vec<(usize, usize)>> = BTreeMap::new();
    for (ti, e) in enriched.iter().enumerate() {
        if e.traj.len() < params.min_points {
            continue;
        }
        for (pi, p) in e.traj.points.iter().enumerate() {
            by_frame.entry(p.frame_num).or_default().push((ti, pi));
        }
    }
    let frames: Vec<(u32, Vec<(usize, usize)>)> = by_frame.into_iter().collect();
    let per_frame = exec::map_slice(exec, &frames, |(frame, members)| {
        let mut out = Vec::new();
        for site in &sites {
            let mut inlane: Vec<(f64, u32, usize, usize, f64)> = members
                .iter()
                .filter_map(|&(ti, pi)| {
                    let p = &enriched[ti].traj.points[pi];
                    if site.model.lane_at(p.center) != Some(site.lane) {
                        return None;
                    }
                    let (arc, _) = project_onto_polyline(&site.line, p.center)?;
                    let mpp = scale.mpp(p);
                    Some((arc * mpp, enriched[ti].traj.id, ti, pi, mpp))
                })
                .collect();
            inlane.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            for w in inlane.windows(2) {
                let (df, fid, fti, fpi, fmpp) = w[0];
                let (dl, lid, lti, lpi, lmpp) = w[1];
                let fs = &enriched[fti].samples[fpi];
                let ls = &enriched[lti].samples[lpi];
                let state = CarFollowingState {
                    leader_id: lid,
                    follower_id: fid,
                    d_leader_m: dl,
                    d_follower_m: df,
                    l_leader_m: leader_length(&enriched[lti], lpi, site.model, scene, params, lmpp),
                    v_follower_ms: fs.speed_ms,
                    v_leader_ms: ls.speed_ms,
                    time_s: fs.time_s,
                };
                let ttc = compute_ttc(&state);
                let flagged = ttc_flagged(ttc, state.gap_m(), state.v_follower_ms, params);
                out.push(FollowingRecord {
                    site: site.name.clone(),
                    frame_num: *frame,
                    state: CarFollowingStateRow {
                        leader_id: lid,
                        follower_id: fid,
                        time_s: state.time_s,
                        gap_m: state.gap_m(),
                        v_follower_ms: state.v_follower_ms,
                        v_leader_ms: state.v_leader_ms,
                        a_follower_ms2: fs.acceleration_ms2,
                        follower_center: enriched[fti].traj.points[fpi].center,
                        mpp: fmpp,
                    },
                    ttc,
                    flagged,
                });
            }
        }
        out
    });
    per_frame.into_iter().flatten().collect()
}

fn series_stats(series: &[MeasurePoint], eps: f64) -> (f64, f64, usize, bool) {
    let n = series.len() as f64;
    let mean = series.iter().map(|m| m.value_ms).sum::<f64>() / n;
    let var = series.iter().map(|m| (m.value_ms - mean).powi(2)).sum::<f64>() / n;
    let (imin, min) = series
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(bi, bv), (i, m)| if m.value_ms < bv { (i, m.value_ms) } else { (bi, bv) });
    (min, mean, imin, series.len() >= 2 && var.sqrt() < eps)
}

/// Merges runs of consecutive flagged frames per (site, leader, follower).
fn ttc_events(records: &[FollowingRecord], params: &SafetyParams) -> Vec<ConflictEvent> {
    let mut runs: BTreeMap<(&str, u32, u32), Vec<&FollowingRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.flagged) {
        runs.entry((r.site.as_str(), r.state.leader_id, r.state.follower_id)).or_default().push(r);
    }
    let mut events = Vec::new();
    for ((site, leader, follower), mut recs) in runs {
        recs.sort_by_key(|r| r.frame_num);
        let mut start = 0;
        for k in 1..=recs.len() {
            if k < recs.len() && recs[k].frame_num == recs[k - 1].frame_num + 1 {
                continue;
            }
            let run = &recs[start..k];
            let series: Vec<MeasurePoint> = run
                .iter()
                .map(|r| MeasurePoint {
                    frame_num: r.frame_num,
                    time_s: r.state.time_s,
                    value_ms: r.ttc.map(|t| t.ms).unwrap_or(f64::NAN),
                })
                .collect();
            let (min, mean, imin, constant) = series_stats(&series, params.constant_eps_ms);
            let at = run[imin];
            events.push(ConflictEvent {
                conflict_id: 0,
                kind: ConflictKind::Ttc,
                id_a: leader,
                id_b: follower,
                site: site.to_string(),
                frame_start: run[0].frame_num,
                frame_end: run[run.len() - 1].frame_num,
                t_start: run[0].state.time_s,
                t_end: run[run.len() - 1].state.time_s,
                series,
                min_ms: min,
                mean_ms: mean,
                location_px: at.state.follower_center,
                location_m: at.state.follower_center * at.state.mpp,
                overlap: run.iter().any(|r| r.ttc.is_some_and(|t| t.overlap)),
                constant,
            });
            start = k;
        }
    }
    events
}

/// Pairs every crossing with the latest earlier crossing by another vehicle.
fn nearest_previous(crossings: &mut [(f64, u32)]) -> Vec<(u32, f64, u32, f64)> {
    crossings.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut out = Vec::new();
    for j in 1..crossings.len() {
        let (tf, idf) = crossings[j];
        if let Some(&(tl, idl)) = crossings[..j].iter().rev().find(|c| c.1 != idf) {
            out.push((idl, tl, idf, tf));
        }
    }
    out
}

fn pet_event(site: &str, leader: u32, follower: u32, tl: f64, tf: f64, fps: f64, loc: Point, mpp: f64) -> ConflictEvent {
    let pet = (tf - tl) * 1000.0;
    let frame = (tf * fps).ceil() as u32;
    ConflictEvent {
        conflict_id: 0,
        kind: ConflictKind::Pet,
        id_a: leader,
        id_b: follower,
        site: site.to_string(),
        frame_start: frame,
        frame_end: frame,
        t_start: tl,
        t_end: tf,
        series: vec![MeasurePoint { frame_num: frame, time_s: tf, value_ms: pet }],
        min_ms: pet,
        mean_ms: pet,
        location_px: loc,
        location_m: loc * mpp,
        overlap: false,
        constant: false,
    }
}

fn centroid(pts: &[Point]) -> Point {
    pts.iter().fold(Point::default(), |a, &p| a + p) * (1.0 / pts.len().max(1) as f64)
}

/// PET at section lines (consecutive crossings) and conflict zones (entry of
/// one vehicle after the latest exit of another).
pub fn pet_analysis(
    enriched: &[EnrichedTrajectory],
    scene: &SceneConfig,
    scale: &dyn crate::georef::PixelScale,
    params: &SafetyParams,
) -> (Vec<SectionCrossing>, Vec<PetSample>, Vec<ConflictEvent>) {
    let eligible: Vec<&EnrichedTrajectory> = enriched.iter().filter(|e| e.traj.len() >= params.min_points).collect();
    let paths: Vec<Vec<(f64, Point)>> = eligible
        .iter()
        .map(|e| e.traj.points.iter().map(|p| (p.time_s, p.center)).collect())
        .collect();
    let mpp_ref = eligible
        .first()
        .and_then(|e| e.traj.points.first())
        .map(|p| scale.mpp(p))
        .unwrap_or(0.0);
    let mut crossings = Vec::new();
    let mut pets = Vec::new();
    let mut events = Vec::new();
    for sec in &scene.sections {
        let mut cs: Vec<(f64, u32)> = Vec::new();
        for (e, path) in eligible.iter().zip(&paths) {
            for t in crossings_of(path, &sec.line) {
                cs.push((t, e.traj.id));
            }
        }
        for (l, tl, f, tf) in nearest_previous(&mut cs) {
            push_pet(&mut pets, &mut events, &sec.name, l, f, tl, tf, scene.fps, sec.line.midpoint(), mpp_ref, params);
        }
        crossings.extend(cs.into_iter().map(|(t, id)| SectionCrossing { id, section: sec.name.clone(), time_s: t }));
    }
    for zone in &scene.conflict_zones {
        let mut occ: Vec<(f64, f64, u32)> = Vec::new();
        for (e, path) in eligible.iter().zip(&paths) {
            for (a, b) in occupancy_intervals(path, &zone.polygon) {
                occ.push((a, b, e.traj.id));
            }
        }
        occ.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let loc = centroid(&zone.polygon.0);
        for &(t_in, _, idf) in &occ {
            let leader = occ
                .iter()
                .filter(|o| o.2 != idf && o.1 <= t_in)
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.2.cmp(&a.2)));
            if let Some(&(_, t_out, idl)) = leader {
                push_pet(&mut pets, &mut events, &zone.name, idl, idf, t_out, t_in, scene.fps, loc, mpp_ref, params);
            }
        }
    }
    (crossings, pets, events)
}

#[allow(clippy::too_many_arguments)]
fn push_pet(
    pets: &mut Vec<PetSample>,
    events: &mut Vec<ConflictEvent>,
    site: &str,
    leader: u32,
    follower: u32,
    tl: f64,
    tf: f64,
    fps: f64,
    loc: Point,
    mpp: f64,
    params: &SafetyParams,
) {
    let pet_ms = (tf - tl) * 1000.0;
    pets.push(PetSample {
        site: site.to_string(),
        leader_id: leader,
        follower_id: follower,
        t_leader_s: tl,
        t_follower_s: tf,
        pet_ms,
    });
    if pet_ms < params.pet_threshold_ms {
        events.push(pet_event(site, leader, follower, tl, tf, fps, loc, mpp));
    }
}

/// Deterministic ids: ordered by start time, follower, kind, leader, site.
pub fn assign_conflict_ids(events: &mut [ConflictEvent]) {
    events.sort_by(|a, b| {
        a.t_start
            .total_cmp(&b.t_start)
            .then(a.id_b.cmp(&b.id_b))
            .then(a.kind.cmp(&b.kind))
            .then(a.id_a.cmp(&b.id_a))
            .then(a.site.cmp(&b.site))
    });
    for (k, e) in events.iter_mut().enumerate() {
        e.conflict_id = k as u32 + 1;
    }
}

pub fn extract_conflicts(
    enriched: &[EnrichedTrajectory],
    scene: &SceneConfig,
    scale: &dyn crate::georef::PixelScale,
    params: &SafetyParams,
    exec: Exec,
) -> SafetyAnalysis {
    let following = following_states(enriched, scene, scale, params, exec);
    let mut events = ttc_events(&following, params);
    let (crossings, pets, pet_events) = pet_analysis(enriched, scene, scale, params);
    events.extend(pet_events);
    assign_conflict_ids(&mut events);
    tracing::debug!(events = events.len(), states = following.len(), "conflicts extracted");
    SafetyAnalysis {
        following,
        crossings,
        pets,
        events,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PetSummary {
    pub total: usize,
    pub below_cut: usize,
    pub cut_ms: f64,
    /// Share below the cut, percent, truncated to 2 decimals.
    pub percent_2dp: f64,
}

pub fn pet_summary(pet_ms: &[f64], cut_ms: f64) -> PetSummary {
    let total = pet_ms.len();
    let below = pet_ms.iter().filter(|&&v| v < cut_ms).count();
    let hundredths = if total == 0 { 0 } else { below * 10_000 / total };
    PetSummary {
        total,
        below_cut: below,
        cut_ms,
        percent_2dp: hundredths as f64 / 100.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapParams {
    pub cols: usize,
    pub rows: usize,
    pub image_w: f64,
    pub image_h: f64,
    pub band_ms: f64,
    pub levels: u8,
}

impl Default for HeatmapParams {
    fn default() -> Self {
        Self {
            cols: 32,
            rows: 18,
            image_w: 1920.0,
            image_h: 1080.0,
            band_ms: 1000.0,
            levels: 5,
        }
    }
}

/// Level 1 is `[0, band)`, level k is `[(k-1)·band, k·band)`, the last level is open-ended.
pub fn severity_level(ms: f64, band_ms: f64, levels: u8) -> u8 {
    let k = (ms.max(0.0) / band_ms).floor();
    (k as u64 + 1).min(levels as u64) as u8
}

impl ConflictEvent {
    pub fn level(&self, hp: &HeatmapParams) -> u8 {
        severity_level(self.mean_ms, hp.band_ms, hp.levels)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatCell {
    pub row: usize,
    pub col: usize,
    pub mean_ms: f64,
    pub level: u8,
    pub count: usize,
}

pub fn cell_of(p: Point, hp: &HeatmapParams) -> Option<(usize, usize)> {
    if !(p.x >= 0.0 && p.y >= 0.0 && p.x <= hp.image_w && p.y <= hp.image_h) {
        return None;
    }
    let c = ((p.x / hp.image_w * hp.cols as f64) as usize).min(hp.cols - 1);
    let r = ((p.y / hp.image_h * hp.rows as f64) as usize).min(hp.rows - 1);
    Some((r, c))
}

/// Non-empty cells, row-major. A cell's level comes from the mean of its
/// events' mean values; events located outside the frame are skipped.
pub fn conflict_heatmap(events: &[ConflictEvent], hp: &HeatmapParams) -> Vec<HeatCell> {
    let mut cells: BTreeMap<(usize, usize), (f64, usize)> = BTreeMap::new();
    for e in events {
        if let Some(rc) = cell_of(e.location_px, hp) {
            let c = cells.entry(rc).or_default();
            c.0 += e.mean_ms;
            c.1 += 1;
        }
    }
    cells
        .into_iter()
        .map(|((row, col), (sum, count))| {
            let mean = sum / count as f64;
            HeatCell {
                row,
                col,
                mean_ms: mean,
                level: severity_level(mean, hp.band_ms, hp.levels),
                count,
            }
        })
        .collect()
}

pub fn conflicts_csv(events: &[ConflictEvent]) -> String {
    let mut out = String::from("conflict_id,kind,id_a,id_b,t_start,t_end,min_ms,loc_x,loc_y\n");
    for e in events {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.4},{:.4},{:.2},{:.1},{:.1}",
            e.conflict_id, e.kind, e.id_a, e.id_b, e.t_start, e.t_end, e.min_ms, e.location_px.x, e.location_px.y
        );
    }
    out
}

/// Per-event TTC series, one row per frame.
pub fn conflict_series_csv(events: &[ConflictEvent]) -> String {
    let mut out = String::from("conflict_id,frame_num,time_s,value_ms\n");
    for e in events {
        for m in &e.series {
            let _ = writeln!(out, "{},{},{:.4},{:.2}", e.conflict_id, m.frame_num, m.time_s, m.value_ms);
        }
    }
    out
}

/// Car-following status per follower and frame. `collisionID` names the
/// conflict event that contains a flagged frame.
pub fn safety_status_csv(analysis: &SafetyAnalysis) -> String {
    let mut owner: BTreeMap<(&str, u32, u32, u32), u32> = BTreeMap::new();
    for e in analysis.events.iter().filter(|e| e.kind == ConflictKind::Ttc) {
        for m in &e.series {
            owner.insert((e.site.as_str(), e.id_a, e.id_b, m.frame_num), e.conflict_id);
        }
    }
    let mut rows: Vec<&FollowingRecord> = analysis.following.iter().collect();
    rows.sort_by(|a, b| a.frame_num.cmp(&b.frame_num).then(a.state.follower_id.cmp(&b.state.follower_id)).then(a.site.cmp(&b.site)));
    let mut out = String::from("id,speed,acc,time,distance,speed_difference,collision,collisionID,TTC\n");
    for r in rows {
        let s = &r.state;
        let cid = owner
            .get(&(r.site.as_str(), s.leader_id, s.follower_id, r.frame_num))
            .map(|c| c.to_string())
            .unwrap_or_default();
        let ttc = r.ttc.map(|t| format!("{:.4}", t.ms)).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.2},{:.2},{:.6},{:.6},{:.2},{},{},{}",
            s.follower_id,
            s.v_follower_ms * MS_TO_KMH,
            s.a_follower_ms2,
            s.time_s,
            s.gap_m,
            (s.v_follower_ms - s.v_leader_ms) * MS_TO_KMH,
            if r.flagged { "TRUE" } else { "FALSE" },
            cid,
            ttc
        );
    }
    out
}

pub fn heatmap_csv(cells: &[HeatCell]) -> String {
    let mut out = String::from("row,col,mean_ms,level,count\n");
    for c in cells {
        let _ = writeln!(out, "{},{},{:.2},{},{}", c.row, c.col, c.mean_ms, c.level, c.count);
    }
    out
}

/// Length of a lane's centerline in meters, used for reporting.
pub fn lane_length_m(model: &LaneModel, lane: u16, mpp: f64) -> Option<f64> {
    model.centerline(lane).map(|l| polyline_length(&l) * mpp)
}
