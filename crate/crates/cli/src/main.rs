mod stages;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use uavtraj::exec::Exec;
use uavtraj::ingest::{QaqcRules, YoloMode};
use uavtraj::kinematics::KinematicsParams;
use uavtraj::maneuvers::{LaneChangeParams, TurnParams};
use uavtraj::metrics::MetricsParams;
use uavtraj::model::BBox;
use uavtraj::safety::{HeatmapParams, SafetyParams};
use uavtraj::stabilize::DeflectionParams;
use uavtraj::{Error, SceneConfig};

/// Analytics for vehicle tracks from nadir drone video.
#[derive(Parser, Debug)]
#[command(name = "uavtraj", version)]
struct Cli {
    /// Run batch work on the calling thread only.
    #[arg(long, global = true)]
    sequential: bool,

    /// Log verbosity (error, warn, info, debug).
    #[arg(long, global = true, default_value = "warn")]
    log: String,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse a tracking CSV and apply QA/QC rules.
    Ingest {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        qa: QaArgs,
    },
    /// Detect camera deflections and undo them.
    Stabilize {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        d: DeflectionArgs,
    },
    /// Per-frame speed and acceleration.
    Kinematics {
        #[command(flatten)]
        io: Io,
        #[command(flatten)]
        k: KinArgs,
    },
    /// Turning movements, lane changes, offsets and time-space diagram.
    Maneuvers {
        #[command(flatten)]
        io: GeoIo,
        #[command(flatten)]
        k: KinArgs,
        #[command(flatten)]
        m: ManeuverArgs,
    },
    /// TTC/PET conflicts, safety status and heatmap.
    Safety {
        #[command(flatten)]
        io: GeoIo,
        #[command(flatten)]
        k: KinArgs,
        #[command(flatten)]
        s: SafetyArgs,
    },
    /// Volumes, PHF, mean speeds, density, capacity and LOS.
    Metrics {
        #[command(flatten)]
        io: GeoIo,
        #[command(flatten)]
        k: KinArgs,
        #[command(flatten)]
        m: MetricsArgs,
    },
    /// Export YOLO label files, or print the label for one box.
    Annotate {
        /// Tracking CSV; required unless --box is given.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Scene config JSON (image size).
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Standard)]
        mode: Mode,
        /// Single box `xmin,ymin,xmax,ymax`; prints its label line.
        #[arg(long = "box", value_name = "XMIN,YMIN,XMAX,YMAX")]
        bbox: Option<String>,
        /// Class index for --box.
        #[arg(long, default_value_t = 0)]
        class: u32,
    },
    /// MAPE and RMSE between two `id,speed` files.
    Validate {
        #[arg(long)]
        video: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        /// Also write validation.csv here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Generate a synthetic scenario (built-in name or JSON file).
    Synth {
        /// One of the built-in names, `random-following-<seed>`, or a `.json` path.
        #[arg(long, default_value = "closing-pair")]
        scenario: String,
        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
        /// List the built-in scenarios and exit.
        #[arg(long)]
        list: bool,
    },
    /// ingest, stabilize, kinematics, maneuvers, safety and metrics in order.
    Pipeline {
        #[command(flatten)]
        io: GeoIo,
        #[command(flatten)]
        qa: QaArgs,
        #[command(flatten)]
        d: DeflectionArgs,
        #[command(flatten)]
        k: KinArgs,
        #[command(flatten)]
        m: ManeuverArgs,
        #[command(flatten)]
        s: SafetyArgs,
        #[command(flatten)]
        mt: MetricsArgs,
    },
}

#[derive(Args, Debug)]
struct Io {
    /// Tracking CSV (frame_num,id,name,xmin,ymin,xmax,ymax[,altitude]).
    #[arg(long)]
    input: PathBuf,
    /// Scene config JSON; built-in defaults when omitted.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct GeoIo {
    /// Tracking CSV (frame_num,id,name,xmin,ymin,xmax,ymax[,altitude]).
    #[arg(long)]
    input: PathBuf,
    /// Scene config JSON with approaches, lanes, sections and zones.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct QaArgs {
    /// Keep boxes that leave the image.
    #[arg(long)]
    keep_out_of_frame: bool,
    /// Minimum box side, px (0 disables).
    #[arg(long, default_value_t = 4.0)]
    min_side_px: f64,
    /// Maximum box side, px (0 disables).
    #[arg(long, default_value_t = 400.0)]
    max_side_px: f64,
    #[arg(long, default_value_t = 0.2)]
    min_aspect: f64,
    #[arg(long, default_value_t = 5.0)]
    max_aspect: f64,
    /// Drop tracks with fewer rows (0 disables).
    #[arg(long, default_value_t = 2)]
    min_track_len: usize,
}

impl QaArgs {
    fn rules(&self) -> QaqcRules {
        let pos = |v: f64| (v > 0.0).then_some(v);
        QaqcRules {
            require_in_frame: !self.keep_out_of_frame,
            min_side_px: pos(self.min_side_px),
            max_side_px: pos(self.max_side_px),
            aspect_range: Some((self.min_aspect, self.max_aspect)),
            min_track_len: (self.min_track_len > 0).then_some(self.min_track_len),
        }
    }
}

#[derive(Args, Debug)]
struct DeflectionArgs {
    /// Per-vehicle corner shift that counts as a jump, px.
    #[arg(long, default_value_t = 1.0)]
    trigger_px: f64,
    /// Shifts at or above this are treated as outliers, px.
    #[arg(long, default_value_t = 40.0)]
    gate_px: f64,
    /// Vehicles needed on both sides of a boundary.
    #[arg(long, default_value_t = 3)]
    min_matched: usize,
    /// Share of vehicles allowed to miss the trigger.
    #[arg(long, default_value_t = 0.1)]
    dissent_fraction: f64,
}

impl DeflectionArgs {
    fn params(&self) -> DeflectionParams {
        DeflectionParams {
            trigger_px: self.trigger_px,
            gate_px: self.gate_px,
            min_matched: self.min_matched,
            dissent_fraction: self.dissent_fraction,
            ..DeflectionParams::default()
        }
    }
}

#[derive(Args, Debug)]
struct KinArgs {
    /// Central-difference span for acceleration, samples.
    #[arg(long, default_value_t = 15)]
    accel_window: usize,
    /// Moving-average window on centers before differencing (off by default).
    #[arg(long)]
    smooth_window: Option<usize>,
}

impl KinArgs {
    fn params(&self, scene: &SceneConfig) -> KinematicsParams {
        KinematicsParams {
            fps: scene.fps,
            accel_window: self.accel_window,
            smooth_window: self.smooth_window,
        }
    }
}

#[derive(Args, Debug)]
struct ManeuverArgs {
    /// Largest heading change still counted as through, degrees.
    #[arg(long, default_value_t = 30.0)]
    through_max_deg: f64,
    /// Heading change above which a turn is a U-turn, degrees.
    #[arg(long, default_value_t = 150.0)]
    uturn_min_deg: f64,
    /// Distance past a lane boundary that confirms a change, px [default: half the entered lane's width].
    #[arg(long)]
    hysteresis_px: Option<f64>,
    /// Frames the vehicle must stay in the new lane.
    #[arg(long, default_value_t = 15)]
    dwell_frames: u32,
}

#[derive(Args, Debug)]
struct SafetyArgs {
    #[arg(long, default_value_t = 2000.0)]
    ttc_ms: f64,
    #[arg(long, default_value_t = 1500.0)]
    pet_ms: f64,
    /// Flag every TTC below threshold, ignoring the warning distance.
    #[arg(long)]
    no_warning_gate: bool,
    /// Reaction time for the warning distance, s.
    #[arg(long, default_value_t = 2.5)]
    t_react_s: f64,
    /// Maximum deceleration for the warning distance, m/s².
    #[arg(long, default_value_t = 3.4)]
    d_max: f64,
    /// Leader length from the box extent instead of class defaults.
    #[arg(long)]
    length_from_bbox: bool,
    /// Minimum points for a track to take part.
    #[arg(long, default_value_t = 15)]
    min_points: usize,
    #[arg(long, default_value_t = 32)]
    heatmap_cols: usize,
    #[arg(long, default_value_t = 18)]
    heatmap_rows: usize,
}

impl SafetyArgs {
    fn params(&self) -> SafetyParams {
        SafetyParams {
            ttc_threshold_ms: self.ttc_ms,
            pet_threshold_ms: self.pet_ms,
            warning_gate: !self.no_warning_gate,
            t_react_s: self.t_react_s,
            d_max_ms2: self.d_max,
            length_from_bbox: self.length_from_bbox,
            min_points: self.min_points,
            ..SafetyParams::default()
        }
    }

    fn heatmap(&self, scene: &SceneConfig) -> HeatmapParams {
        HeatmapParams {
            cols: self.heatmap_cols,
            rows: self.heatmap_rows,
            image_w: scene.image_w as f64,
            image_h: scene.image_h as f64,
            ..HeatmapParams::default()
        }
    }
}

#[derive(Args, Debug)]
struct MetricsArgs {
    /// Volume bin length, s.
    #[arg(long, default_value_t = 900.0)]
    bin_s: f64,
}

impl MetricsArgs {
    fn params(&self, scene: &SceneConfig) -> MetricsParams {
        MetricsParams {
            bin_s: self.bin_s,
            pce: scene.pce,
            ..MetricsParams::default()
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Standard,
    PaperExact,
}

impl From<Mode> for YoloMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Standard => YoloMode::Standard,
            Mode::PaperExact => YoloMode::PaperExact,
        }
    }
}

impl ManeuverArgs {
    fn opts(&self, kp: KinematicsParams) -> stages::ManeuverOpts {
        stages::ManeuverOpts {
            kp,
            turns: TurnParams {
                through_max_deg: self.through_max_deg,
                uturn_min_deg: self.uturn_min_deg,
                ..TurnParams::default()
            },
            lanes: LaneChangeParams {
                hysteresis_px: self.hysteresis_px,
                dwell_frames: self.dwell_frames,
                ..LaneChangeParams::default()
            },
        }
    }
}

fn parse_box(s: &str) -> uavtraj::Result<BBox> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| Error::InvalidAnnotation(format!("`{s}` is not four numbers")))?;
    match v[..] {
        [a, b, c, d] => BBox::new(a, b, c, d),
        _ => Err(Error::InvalidAnnotation(format!("`{s}` is not four numbers"))),
    }
}

fn run(cli: Cli) -> uavtraj::Result<()> {
    let exec = if cli.sequential { Exec::Sequential } else { Exec::Parallel };
    let scene_of = |p: &Option<PathBuf>| stages::load_scene(p.as_deref());
    match cli.cmd {
        Cmd::Ingest { io, qa } => {
            let scene = scene_of(&io.scene)?;
            stages::ingest(&io.input, &scene, &qa.rules(), &io.out_dir)?;
        }
        Cmd::Stabilize { io, d } => {
            let scene = scene_of(&io.scene)?;
            stages::stabilize(&io.input, &scene, &d.params(), exec, &io.out_dir)?;
        }
        Cmd::Kinematics { io, k } => {
            let scene = scene_of(&io.scene)?;
            stages::kinematics(&io.input, &scene, &k.params(&scene), exec, &io.out_dir)?;
        }
        Cmd::Maneuvers { io, k, m } => {
            let scene = stages::load_scene(Some(&io.scene))?;
            stages::maneuvers(&io.input, &scene, &m.opts(k.params(&scene)), exec, &io.out_dir)?;
        }
        Cmd::Safety { io, k, s } => {
            let scene = stages::load_scene(Some(&io.scene))?;
            stages::safety(&io.input, &scene, &k.params(&scene), &s.params(), &s.heatmap(&scene), exec, &io.out_dir)?;
        }
        Cmd::Metrics { io, k, m } => {
            let scene = stages::load_scene(Some(&io.scene))?;
            let p = stages::metrics(&io.input, &scene, &k.params(&scene), &m.params(&scene), exec, &io.out_dir)?;
            print!("{}", std::fs::read_to_string(p)?);
        }
        Cmd::Annotate { input, scene, out_dir, mode, bbox, class } => {
            let scene = scene_of(&scene)?;
            if let Some(b) = bbox {
                let a = uavtraj::ingest::bbox_to_yolo(&parse_box(&b)?, class, scene.image_w, scene.image_h, mode.into())?;
                println!("{}", a.to_line());
            } else {
                let input = input.ok_or_else(|| Error::Config("annotate needs --input or --box".into()))?;
                let n = stages::annotate(&input, &scene, mode.into(), &out_dir)?;
                println!("{n} label files in {}", out_dir.join("labels").display());
            }
        }
        Cmd::Validate { video, trajectory, out_dir } => {
            let r = stages::validate(&video, &trajectory, out_dir.as_deref())?;
            println!("n={} MAPE={:.4}% RMSE={:.4} km/h", r.n, r.mape_percent, r.rmse);
        }
        Cmd::Synth { scenario, out_dir, list } => {
            if list {
                for name in uavtraj::synth::BUILTIN {
                    println!("{name}");
                }
                println!("platoon\nrandom-following-<seed>");
                return Ok(());
            }
            let sc = stages::load_scenario(&scenario)?;
            stages::synth(&sc, &out_dir)?;
        }
        Cmd::Pipeline { io, qa, d, k, m, s, mt } => {
            let scene = stages::load_scene(Some(&io.scene))?;
            scene.require_approaches()?;
            let out: &Path = &io.out_dir;
            let kp = k.params(&scene);
            let clean = stages::ingest(&io.input, &scene, &qa.rules(), out)?;
            let stable = stages::stabilize(&clean, &scene, &d.params(), exec, out)?;
            stages::kinematics(&stable, &scene, &kp, exec, out)?;
            stages::maneuvers(&stable, &scene, &m.opts(kp.clone()), exec, out)?;
            stages::safety(&stable, &scene, &kp, &s.params(), &s.heatmap(&scene), exec, out)?;
            stages::metrics(&stable, &scene, &kp, &mt.params(&scene), exec, out)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let filter = tracing_subscriber::EnvFilter::try_new(&cli.log).unwrap_or_else(|_| "warn".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_ansi(false).without_time().init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
