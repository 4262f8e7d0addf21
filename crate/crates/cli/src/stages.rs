//! One function per subcommand. Each reads its inputs from disk and writes
//! its outputs into `out`, so `pipeline` is just these calls in order.

use std::fs;
use std::path::{Path, PathBuf};

use tracing::info;
use uavtraj::exec::Exec;
use uavtraj::georef::AltitudeScale;
use uavtraj::ingest::{self, QaqcRules, YoloMode};
use uavtraj::kinematics::{self, corridor_mean_speed, corridor_speed, enrich_all, trajectory_mean_speed, KinematicsParams};
use uavtraj::maneuvers::{self, LaneChangeParams, TsdAxis, TurnParams};
use uavtraj::metrics::{self, DirectionInput, MetricsParams, MetricsReport};
use uavtraj::model::{assemble_trajectories, flatten_trajectories, DetectionRecord, Trajectory};
use uavtraj::safety::{self, HeatmapParams, SafetyParams};
use uavtraj::stabilize::{self, DeflectionParams};
use uavtraj::svg;
use uavtraj::synth::{self, Scenario};
use uavtraj::{Error, Result, SceneConfig};

pub fn load_scene(path: Option<&Path>) -> Result<SceneConfig> {
    match path {
        None => Ok(SceneConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            SceneConfig::from_json(&text).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}

fn write(out: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(out)?;
    let p = out.join(name);
    fs::write(&p, contents)?;
    info!(file = %p.display(), "wrote");
    Ok(p)
}

fn tracks_text(records: &[DetectionRecord]) -> Result<String> {
    let mut buf = Vec::new();
    ingest::write_tracking_csv(&mut buf, records)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn load_tracks(path: &Path, scene: &SceneConfig) -> Result<Vec<Trajectory>> {
    let records = ingest::read_tracking_csv(path)?;
    assemble_trajectories(&records, scene.fps)
}

pub fn ingest(input: &Path, scene: &SceneConfig, rules: &QaqcRules, out: &Path) -> Result<PathBuf> {
    let records = ingest::read_tracking_csv(input)?;
    let (kept, report) = ingest::qaqc_filter(&records, scene, rules);
    info!(input = report.input, kept = report.kept, "qa/qc");
    let clean = write(out, "clean.csv", &tracks_text(&kept)?)?;
    write(out, "qaqc.json", &(serde_json::to_string_pretty(&report)? + "\n"))?;
    Ok(clean)
}

pub fn stabilize(input: &Path, scene: &SceneConfig, params: &DeflectionParams, exec: Exec, out: &Path) -> Result<PathBuf> {
    let trajs = load_tracks(input, scene)?;
    let events = stabilize::detect_deflections(&trajs, params);
    info!(events = events.len(), "deflections");
    let fixed = stabilize::apply_correction(&trajs, &events, scene.image_w, scene.image_h, exec);
    // boxes shifted off the image cannot be written back as tracker rows
    let kept: Vec<Trajectory> = fixed
        .into_iter()
        .map(|mut t| {
            t.points.retain(|p| !p.out_of_frame);
            t
        })
        .filter(|t| !t.is_empty())
        .collect();
    let p = write(out, "stabilized.csv", &tracks_text(&flatten_trajectories(&kept))?)?;
    write(out, "deflections.csv", &stabilize::deflection_report_csv(&events))?;
    Ok(p)
}

pub fn kinematics(input: &Path, scene: &SceneConfig, kp: &KinematicsParams, exec: Exec, out: &Path) -> Result<PathBuf> {
    let trajs = load_tracks(input, scene)?;
    let scale = AltitudeScale::from_scene(scene)?;
    let enriched = enrich_all(&trajs, &scale, kp, exec);
    write(out, "enriched.csv", &kinematics::enriched_csv(&enriched))
}

pub struct ManeuverOpts {
    pub kp: KinematicsParams,
    pub turns: TurnParams,
    pub lanes: LaneChangeParams,
}

pub fn maneuvers(input: &Path, scene: &SceneConfig, o: &ManeuverOpts, exec: Exec, out: &Path) -> Result<()> {
    scene.require_approaches()?;
    let trajs = load_tracks(input, scene)?;
    let scale = AltitudeScale::from_scene(scene)?;
    let turns = maneuvers::classify_all(&trajs, scene, &o.turns, exec);
    let mut per = String::from("id,entry_approach,exit_approach,movement,heading_change_deg\n");
    for t in &turns {
        per.push_str(&format!(
            "{},{},{},{},{}\n",
            t.id,
            t.entry_approach.as_deref().unwrap_or(""),
            t.exit_approach.as_deref().unwrap_or(""),
            t.movement,
            t.heading_change_deg.map(|h| format!("{h:.2}")).unwrap_or_default()
        ));
    }
    write(out, "turns.csv", &per)?;
    write(out, "turning_counts.csv", &maneuvers::turning_counts_csv(&turns))?;

    let enriched = enrich_all(&trajs, &scale, &o.kp, exec);
    let changes = maneuvers::lane_changes_all(&enriched, scene, &o.lanes, exec);
    write(out, "lane_changes.csv", &maneuvers::lane_changes_csv(&changes))?;

    let mut offsets = String::from("id,time_s,offset_px,lane\n");
    let mut plotted = Vec::new();
    for t in &trajs {
        if let Some((_, lanes)) = maneuvers::lane_model_for(t, scene) {
            let s = maneuvers::lateral_offset_series(t, lanes);
            let body = maneuvers::offsets_csv(t.id, &s);
            offsets.push_str(body.split_once('\n').map_or("", |(_, rest)| rest));
            plotted.push(s);
        }
    }
    write(out, "offsets.csv", &offsets)?;
    write(out, "offsets.svg", &svg::offsets_svg(&plotted))?;

    if let Some(axis) = scene.corridor.as_ref().and_then(|c| TsdAxis::from_corridor(c, false)) {
        let series = maneuvers::time_space_series(&trajs, &axis, &scale);
        write(out, "tsd.csv", &maneuvers::tsd_csv(&series))?;
        write(out, "tsd.svg", &svg::tsd_svg(&series))?;
    } else {
        info!("scene has no corridor; skipping time-space diagram");
    }
    Ok(())
}

pub fn safety(
    input: &Path,
    scene: &SceneConfig,
    kp: &KinematicsParams,
    sp: &SafetyParams,
    hp: &HeatmapParams,
    exec: Exec,
    out: &Path,
) -> Result<()> {
    let trajs = load_tracks(input, scene)?;
    let scale = AltitudeScale::from_scene(scene)?;
    let enriched = enrich_all(&trajs, &scale, kp, exec);
    let analysis = safety::extract_conflicts(&enriched, scene, &scale, sp, exec);
    info!(events = analysis.events.len(), "conflicts");
    let cells = safety::conflict_heatmap(&analysis.events, hp);
    write(out, "conflicts.csv", &safety::conflicts_csv(&analysis.events))?;
    write(out, "conflict_series.csv", &safety::conflict_series_csv(&analysis.events))?;
    write(out, "safety_status.csv", &safety::safety_status_csv(&analysis))?;
    write(out, "heatmap.csv", &safety::heatmap_csv(&cells))?;
    write(out, "heatmap.svg", &svg::heatmap_svg(&cells, hp))?;
    let pets: Vec<f64> = analysis.pets.iter().map(|p| p.pet_ms).filter(|&v| v < sp.pet_threshold_ms).collect();
    let summary = safety::pet_summary(&pets, 1000.0);
    let json = serde_json::json!({
        "total": summary.total,
        "below_cut": summary.below_cut,
        "cut_ms": summary.cut_ms,
        "percent": summary.percent_2dp,
    });
    write(out, "pet_summary.json", &(serde_json::to_string_pretty(&json)? + "\n"))?;
    Ok(())
}

pub fn metrics(input: &Path, scene: &SceneConfig, kp: &KinematicsParams, mp: &MetricsParams, exec: Exec, out: &Path) -> Result<PathBuf> {
    scene.require_approaches()?;
    let trajs = load_tracks(input, scene)?;
    let scale = AltitudeScale::from_scene(scene)?;
    let enriched = enrich_all(&trajs, &scale, kp, exec);
    let turns = maneuvers::classify_all(&trajs, scene, &TurnParams::default(), exec);

    let t0 = trajs.iter().map(|t| t.first_time()).fold(f64::INFINITY, f64::min);
    let t1 = trajs
        .iter()
        .filter_map(|t| t.points.last().map(|p| p.time_s))
        .fold(f64::NEG_INFINITY, f64::max);
    let (t0, t1) = if t0.is_finite() { (t0, t1) } else { (0.0, 0.0) };

    let mut directions = Vec::new();
    for a in &scene.approaches {
        let mut d = DirectionInput {
            name: a.name.clone(),
            ..Default::default()
        };
        for (e, m) in enriched.iter().zip(&turns) {
            if m.entry_approach.as_deref() != Some(a.name.as_str()) {
                continue;
            }
            d.vehicles.push((e.traj.class, e.traj.first_time()));
            if let Ok(v) = trajectory_mean_speed(&e.samples) {
                d.spot_speeds_kmh.push(v);
                d.transit_speeds_kmh.push(v);
            }
        }
        directions.push(metrics::flow_summary(&d, t0, t1, mp));
    }

    let all: Vec<_> = trajs.iter().map(|t| (t.class, t.first_time())).collect();
    let counts = metrics::class_counts(&all);
    let pairs: Vec<(u32, f64, f64)> = enriched
        .iter()
        .filter_map(|e| {
            let w = corridor_speed(&e.traj, scene, TurnParams::default().through_max_deg)?;
            Some((e.traj.id, w.v_video_kmh, corridor_mean_speed(e, &w)?))
        })
        .collect();
    let report = MetricsReport {
        window_s: (t0, t1),
        class_counts: counts,
        class_shares_percent: metrics::class_shares(&counts),
        directions,
        validation: metrics::validate_speeds(&pairs).ok(),
    };
    write(out, "metrics.json", &(report.to_json() + "\n"))
}

pub fn annotate(input: &Path, scene: &SceneConfig, mode: YoloMode, out: &Path) -> Result<usize> {
    let records = ingest::read_tracking_csv(input)?;
    let n = ingest::write_yolo_labels(&out.join("labels"), &records, scene.image_w, scene.image_h, mode, &ingest::default_class_map())?;
    info!(files = n, "labels");
    Ok(n)
}

fn read_speed_file(path: &Path) -> Result<Vec<(u32, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::Csv {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Csv {
            line,
            message: format!("{}: bad {what}", path.display()),
        };
        let id = row.get(0).and_then(|s| s.parse().ok()).ok_or_else(|| bad("id"))?;
        let v = row.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("speed"))?;
        out.push((id, v));
    }
    Ok(out)
}

/// Pairs the two `id,speed` files on id; ids present in only one are ignored.
pub fn validate(video: &Path, trajectory: &Path, out: Option<&Path>) -> Result<metrics::ValidationReport> {
    let a = read_speed_file(video)?;
    let b: std::collections::BTreeMap<u32, f64> = read_speed_file(trajectory)?.into_iter().collect();
    let pairs: Vec<(u32, f64, f64)> = a.iter().filter_map(|&(id, v)| b.get(&id).map(|&t| (id, v, t))).collect();
    let report = metrics::validate_speeds(&pairs)?;
    if let Some(dir) = out {
        write(dir, "validation.csv", &metrics::validation_csv(&report))?;
    }
    Ok(report)
}

pub fn load_scenario(spec: &str) -> Result<Scenario> {
    let p = Path::new(spec);
    if p.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("{spec}: {e}")))?;
        Scenario::from_json(&text)
    } else {
        synth::builtin(spec)
    }
}

/// Writes `tracks.csv`, `truth.csv`, `events.json`, `scene.json` and the scenario itself.
pub fn synth(sc: &Scenario, out: &Path) -> Result<PathBuf> {
    let o = synth::generate(sc)?;
    let tracks = write(out, "tracks.csv", &tracks_text(&o.records)?)?;
    write(out, "truth.csv", &synth::truth_csv(&o.truth))?;
    write(out, "events.json", &(synth::events_json(&o.events) + "\n"))?;
    write(out, "scene.json", &(sc.scene_or_default().to_json() + "\n"))?;
    write(out, "scenario.json", &(sc.to_json() + "\n"))?;
    Ok(tracks)
}
