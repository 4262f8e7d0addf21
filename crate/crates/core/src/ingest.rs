//! Tracker CSV input/output, QA/QC filtering and YOLO label conversion.

use crate::error::{Error, Result};
use crate::model::{BBox, ClassTable, DetectionRecord, VehicleClass};
use crate::scene::SceneConfig;
use serde::Serialize;
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

pub const TRACK_HEADER: [&str; 7] = ["frame_num", "id", "name", "xmin", "ymin", "xmax", "ymax"];

fn csv_err(line: u64, message: impl Into<String>) -> Error {
    Error::Csv {
        line,
        message: message.into(),
    }
}

/// Reads tracker rows. Columns are matched by header name; extra columns such
/// as `speed` or `acceleration` are ignored. An `altitude` column, when
/// present, is carried through as the per-frame drone altitude.
pub fn parse_tracking_csv<R: Read>(input: R) -> Result<Vec<DetectionRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(input);
    let headers = rdr.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    let index: HashMap<String, usize> = headers
        .iter()
        .enumerate()
        .map(|(i, h)| (h.to_ascii_lowercase(), i))
        .collect();
    let col = |name: &str| -> Result<usize> {
        index
            .get(name)
            .copied()
            .ok_or_else(|| csv_err(1, format!("header is missing column `{name}`")))
    };
    let cols: Vec<usize> = TRACK_HEADER.iter().map(|h| col(h)).collect::<Result<_>>()?;
    let alt_col = index.get("altitude").or_else(|| index.get("altitude_m")).copied();

    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<&str> {
            row.get(i)
                .ok_or_else(|| csv_err(line, format!("expected at least {} fields", i + 1)))
        };
        let int = |i: usize, name: &str| -> Result<u32> {
            let s = field(i)?;
            s.parse::<u32>()
                .map_err(|_| csv_err(line, format!("`{name}` is not a non-negative integer: `{s}`")))
        };
        let num = |i: usize, name: &str| -> Result<f64> {
            let s = field(i)?;
            s.parse::<f64>()
                .map_err(|_| csv_err(line, format!("`{name}` is not a number: `{s}`")))
        };
        let frame_num = int(cols[0], "frame_num")?;
        let id = int(cols[1], "id")?;
        let class = VehicleClass::from_str(field(cols[2])?)
            .map_err(|token| Error::UnknownClass { line, token })?;
        let bbox = BBox::new(
            num(cols[3], "xmin")?,
            num(cols[4], "ymin")?,
            num(cols[5], "xmax")?,
            num(cols[6], "ymax")?,
        )
        .map_err(|e| csv_err(line, e.to_string()))?;
        let altitude_m = match alt_col.and_then(|i| row.get(i)) {
            Some(s) if !s.is_empty() => Some(
                s.parse::<f64>()
                    .map_err(|_| csv_err(line, format!("`altitude` is not a number: `{s}`")))?,
            ),
            _ => None,
        };
        out.push(DetectionRecord {
            frame_num,
            id,
            class,
            bbox,
            altitude_m,
        });
    }
    Ok(out)
}

pub fn read_tracking_csv(path: &Path) -> Result<Vec<DetectionRecord>> {
    parse_tracking_csv(std::fs::File::open(path)?)
}

/// Writes rows in the tracker column order. An `altitude` column is appended
/// only when some record carries one.
pub fn write_tracking_csv<W: Write>(mut out: W, records: &[DetectionRecord]) -> Result<()> {
    let with_alt = records.iter().any(|r| r.altitude_m.is_some());
    let mut s = TRACK_HEADER.join(",");
    if with_alt {
        s.push_str(",altitude");
    }
    s.push('\n');
    for r in records {
        let b = &r.bbox;
        let _ = write!(
            s,
            "{},{},{},{},{},{},{}",
            r.frame_num, r.id, r.class, b.xmin, b.ymin, b.xmax, b.ymax
        );
        if with_alt {
            s.push(',');
            if let Some(a) = r.altitude_m {
                let _ = write!(s, "{a}");
            }
        }
        s.push('\n');
    }
    out.write_all(s.as_bytes())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaqcRules {
    pub require_in_frame: bool,
    pub min_side_px: Option<f64>,
    pub max_side_px: Option<f64>,
    /// Allowed width/height ratio, inclusive.
    pub aspect_range: Option<(f64, f64)>,
    pub min_track_len: Option<usize>,
}

impl Default for QaqcRules {
    fn default() -> Self {
        Self {
            require_in_frame: true,
            min_side_px: Some(4.0),
            max_side_px: Some(400.0),
            aspect_range: Some((0.2, 5.0)),
            min_track_len: Some(2),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct DropCounts {
    pub out_of_frame: usize,
    pub min_size: usize,
    pub max_size: usize,
    pub aspect_ratio: usize,
    pub short_track: usize,
}

impl DropCounts {
    pub fn total(&self) -> usize {
        self.out_of_frame + self.min_size + self.max_size + self.aspect_ratio + self.short_track
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct QaqcReport {
    pub input: usize,
    pub kept: usize,
    pub dropped: DropCounts,
}

/// Removes rows failing any enabled rule. Each dropped row is charged to the
/// first rule it fails, in declaration order; track length is judged on the
/// rows that survive the per-row rules.
pub fn qaqc_filter(
    records: &[DetectionRecord],
    scene: &SceneConfig,
    rules: &QaqcRules,
) -> (Vec<DetectionRecord>, QaqcReport) {
    let (w, h) = (scene.image_w as f64, scene.image_h as f64);
    let mut dropped = DropCounts::default();
    let survivors: Vec<&DetectionRecord> = records
        .iter()
        .filter(|r| {
            let b = &r.bbox;
            let (bw, bh) = (b.width(), b.height());
            if rules.require_in_frame && !b.inside_image(w, h) {
                dropped.out_of_frame += 1;
                return false;
            }
            if rules.min_side_px.is_some_and(|m| bw < m || bh < m) {
                dropped.min_size += 1;
                return false;
            }
            if rules.max_side_px.is_some_and(|m| bw > m || bh > m) {
                dropped.max_size += 1;
                return false;
            }
            if let Some((lo, hi)) = rules.aspect_range {
                let ar = bw / bh;
                if ar < lo || ar > hi {
                    dropped.aspect_ratio += 1;
                    return false;
                }
            }
            true
        })
        .collect();

    let kept: Vec<DetectionRecord> = match rules.min_track_len {
        Some(min_len) => {
            let mut lens: BTreeMap<u32, usize> = BTreeMap::new();
            for r in &survivors {
                *lens.entry(r.id).or_default() += 1;
            }
            survivors
                .into_iter()
                .filter(|r| {
                    let ok = lens[&r.id] >= min_len;
                    if !ok {
                        dropped.short_track += 1;
                    }
                    ok
                })
                .cloned()
                .collect()
        }
        None => survivors.into_iter().cloned().collect(),
    };
    let report = QaqcReport {
        input: records.len(),
        kept: kept.len(),
        dropped,
    };
    (kept, report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum YoloMode {
    /// Conventional normalization: center / image size.
    #[default]
    Standard,
    /// The calibration routine as published, including its one-pixel center bias.
    PaperExact,
}

impl FromStr for YoloMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "standard" => Ok(YoloMode::Standard),
            "paper-exact" => Ok(YoloMode::PaperExact),
            other => Err(format!("unknown mode `{other}` (standard | paper-exact)")),
        }
    }
}

impl YoloMode {
    fn center_bias(self) -> f64 {
        match self {
            YoloMode::Standard => 0.0,
            YoloMode::PaperExact => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloAnnotation {
    pub class_index: u32,
    pub x_center: f64,
    pub y_center: f64,
    pub width: f64,
    pub height: f64,
}

impl YoloAnnotation {
    pub fn new(class_index: u32, x_center: f64, y_center: f64, width: f64, height: f64) -> Result<Self> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(x_center) || !unit(y_center) {
            return Err(Error::InvalidAnnotation(format!(
                "center ({x_center}, {y_center}) outside [0, 1]"
            )));
        }
        if !(width > 0.0 && width <= 1.0) {
            return Err(Error::InvalidAnnotation(format!("degenerate width {width}")));
        }
        if !(height > 0.0 && height <= 1.0) {
            return Err(Error::InvalidAnnotation(format!("degenerate height {height}")));
        }
        Ok(Self {
            class_index,
            x_center,
            y_center,
            width,
            height,
        })
    }

    /// `class x_center y_center width height`, six decimals.
    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6} {:.6} {:.6} {:.6}",
            self.class_index, self.x_center, self.y_center, self.width, self.height
        )
    }

    pub fn parse_line(line: &str) -> Result<Self> {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 5 {
            return Err(Error::InvalidAnnotation(format!("expected 5 fields: `{line}`")));
        }
        let class_index = parts[0]
            .parse()
            .map_err(|_| Error::InvalidAnnotation(format!("bad class index `{}`", parts[0])))?;
        let v: Vec<f64> = parts[1..]
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::InvalidAnnotation(format!("bad number `{s}`")))
            })
            .collect::<Result<_>>()?;
        Self::new(class_index, v[0], v[1], v[2], v[3])
    }
}

/// Corner box → normalized center/size annotation.
pub fn bbox_to_yolo(
    b: &BBox,
    class_index: u32,
    image_w: u32,
    image_h: u32,
    mode: YoloMode,
) -> Result<YoloAnnotation> {
    let (iw, ih) = (image_w as f64, image_h as f64);
    if !(b.xmax > b.xmin && b.ymax > b.ymin) {
        return Err(Error::InvalidAnnotation("zero-area box".into()));
    }
    if !b.inside_image(iw, ih) {
        return Err(Error::InvalidAnnotation(format!(
            "box {:?} is outside the {image_w}x{image_h} image",
            b
        )));
    }
    let pixel_w = 1.0 / iw;
    let pixel_h = 1.0 / ih;
    let total_x = (b.xmax + b.xmin).abs();
    let total_y = (b.ymax + b.ymin).abs();
    let bias = mode.center_bias();
    YoloAnnotation::new(
        class_index,
        (total_x / 2.0 - bias) * pixel_w,
        (total_y / 2.0 - bias) * pixel_h,
        (b.xmax - b.xmin).abs() * pixel_w,
        (b.ymax - b.ymin).abs() * pixel_h,
    )
}

/// Inverse of [`bbox_to_yolo`] in the same mode, corners rounded to whole pixels.
pub fn yolo_to_bbox(a: &YoloAnnotation, image_w: u32, image_h: u32, mode: YoloMode) -> Result<BBox> {
    let a = YoloAnnotation::new(a.class_index, a.x_center, a.y_center, a.width, a.height)?;
    let (iw, ih) = (image_w as f64, image_h as f64);
    let bias = mode.center_bias();
    let cx = a.x_center * iw + bias;
    let cy = a.y_center * ih + bias;
    let (w, h) = (a.width * iw, a.height * ih);
    let b = BBox {
        xmin: (cx - w / 2.0).round(),
        ymin: (cy - h / 2.0).round(),
        xmax: (cx + w / 2.0).round(),
        ymax: (cy + h / 2.0).round(),
    };
    if !b.inside_image(iw, ih) {
        return Err(Error::InvalidAnnotation(format!(
            "annotation maps to {:?}, outside the {image_w}x{image_h} image",
            b
        )));
    }
    if b.xmax <= b.xmin || b.ymax <= b.ymin {
        return Err(Error::InvalidAnnotation("annotation rounds to a zero-area box".into()));
    }
    Ok(b)
}

pub fn default_class_map() -> ClassTable<u32> {
    ClassTable {
        car: 0,
        bus: 1,
        truck: 2,
    }
}

/// Label text for every frame: `frame_num → file contents`, lines ordered by id.
pub fn yolo_labels(
    records: &[DetectionRecord],
    image_w: u32,
    image_h: u32,
    mode: YoloMode,
    class_map: &ClassTable<u32>,
) -> Result<BTreeMap<u32, String>> {
    let mut sorted: Vec<&DetectionRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.frame_num, r.id));
    let mut files: BTreeMap<u32, String> = BTreeMap::new();
    for r in sorted {
        let a = bbox_to_yolo(&r.bbox, class_map.get(r.class), image_w, image_h, mode)?;
        let text = files.entry(r.frame_num).or_default();
        text.push_str(&a.to_line());
        text.push('\n');
    }
    Ok(files)
}

/// Writes one `<frame:06>.txt` label file per frame; returns the file count.
pub fn write_yolo_labels(
    dir: &Path,
    records: &[DetectionRecord],
    image_w: u32,
    image_h: u32,
    mode: YoloMode,
    class_map: &ClassTable<u32>,
) -> Result<usize> {
    std::fs::create_dir_all(dir)?;
    let files = yolo_labels(records, image_w, image_h, mode, class_map)?;
    for (frame, text) in &files {
        std::fs::write(dir.join(format!("{frame:06}.txt")), text)?;
    }
    Ok(files.len())
}
