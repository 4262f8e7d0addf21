//! Detection records, tracks and trajectory assembly.
//!
//! Coordinates are image pixels with the origin at the top-left corner and y
//! increasing downward, exactly as the tracker writes them.

use crate::error::{Error, Result};
use crate::geom::Point;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl BBox {
    /// Validated constructor: finite, non-negative, positive extent.
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        let err = |reason| Error::InvalidBBox {
            xmin,
            ymin,
            xmax,
            ymax,
            reason,
        };
        if ![xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) {
            return Err(err("non-finite coordinate"));
        }
        if xmin < 0.0 || ymin < 0.0 {
            return Err(err("negative coordinate"));
        }
        if xmin >= xmax {
            return Err(err("xmin must be less than xmax"));
        }
        if ymin >= ymax {
            return Err(err("ymin must be less than ymax"));
        }
        Ok(Self {
            xmin,
            ymin,
            xmax,
            ymax,
        })
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn center(&self) -> Point {
        bbox_center(self)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> BBox {
        BBox {
            xmin: self.xmin + dx,
            ymin: self.ymin + dy,
            xmax: self.xmax + dx,
            ymax: self.ymax + dy,
        }
    }

    pub fn inside_image(&self, image_w: f64, image_h: f64) -> bool {
        self.xmin >= 0.0 && self.ymin >= 0.0 && self.xmax <= image_w && self.ymax <= image_h
    }
}

/// Midpoint of the box.
pub fn bbox_center(b: &BBox) -> Point {
    Point::new((b.xmin + b.xmax) / 2.0, (b.ymin + b.ymax) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleClass {
    Car,
    Bus,
    Truck,
}

impl VehicleClass {
    pub const ALL: [VehicleClass; 3] = [VehicleClass::Car, VehicleClass::Bus, VehicleClass::Truck];

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleClass::Car => "car",
            VehicleClass::Bus => "bus",
            VehicleClass::Truck => "truck",
        }
    }
}

impl fmt::Display for VehicleClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VehicleClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "car" => Ok(VehicleClass::Car),
            "bus" => Ok(VehicleClass::Bus),
            "truck" => Ok(VehicleClass::Truck),
            _ => Err(s.trim().to_string()),
        }
    }
}

/// Per-class value table (vehicle lengths, PCE factors, label indices).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassTable<T> {
    pub car: T,
    pub bus: T,
    pub truck: T,
}

impl<T: Copy> ClassTable<T> {
    pub fn get(&self, class: VehicleClass) -> T {
        match class {
            VehicleClass::Car => self.car,
            VehicleClass::Bus => self.bus,
            VehicleClass::Truck => self.truck,
        }
    }
}

/// One tracker output row.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionRecord {
    pub frame_num: u32,
    pub id: u32,
    pub class: VehicleClass,
    pub bbox: BBox,
    /// Drone altitude for this frame, when the input carries it.
    pub altitude_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub frame_num: u32,
    pub time_s: f64,
    pub center: Point,
    pub bbox: BBox,
    pub altitude_m: Option<f64>,
    /// Set when a correction moved the box outside the image.
    pub out_of_frame: bool,
}

impl TrackPoint {
    pub fn new(frame_num: u32, fps: f64, bbox: BBox, altitude_m: Option<f64>) -> Self {
        Self {
            frame_num,
            time_s: frame_num as f64 / fps,
            center: bbox_center(&bbox),
            bbox,
            altitude_m,
            out_of_frame: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: u32,
    pub class: VehicleClass,
    pub points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Missed-detection gaps as `(last frame before, first frame after)`.
    pub fn gaps(&self) -> Vec<(u32, u32)> {
        self.points
            .windows(2)
            .filter(|w| w[1].frame_num > w[0].frame_num + 1)
            .map(|w| (w[0].frame_num, w[1].frame_num))
            .collect()
    }

    pub fn centers(&self) -> Vec<Point> {
        self.points.iter().map(|p| p.center).collect()
    }

    pub fn first_time(&self) -> f64 {
        self.points.first().map_or(0.0, |p| p.time_s)
    }

    /// Back to tracker rows, in frame order.
    pub fn to_records(&self) -> Vec<DetectionRecord> {
        self.points
            .iter()
            .map(|p| DetectionRecord {
                frame_num: p.frame_num,
                id: self.id,
                class: self.class,
                bbox: p.bbox,
                altitude_m: p.altitude_m,
            })
            .collect()
    }
}

/// Groups records by vehicle id into frame-ordered trajectories (ascending id).
pub fn assemble_trajectories(records: &[DetectionRecord], fps: f64) -> Result<Vec<Trajectory>> {
    if !(fps > 0.0) {
        return Err(Error::Config(format!("fps must be positive, got {fps}")));
    }
    let mut seen = BTreeSet::new();
    let mut by_id: BTreeMap<u32, (VehicleClass, Vec<&DetectionRecord>)> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.frame_num, r.id)) {
            return Err(Error::DuplicateRecord {
                frame_num: r.frame_num,
                id: r.id,
            });
        }
        by_id.entry(r.id).or_insert_with(|| (r.class, Vec::new())).1.push(r);
    }
    Ok(by_id
        .into_iter()
        .map(|(id, (class, mut rs))| {
            rs.sort_by_key(|r| r.frame_num);
            Trajectory {
                id,
                class,
                points: rs
                    .into_iter()
                    .map(|r| TrackPoint::new(r.frame_num, fps, r.bbox, r.altitude_m))
                    .collect(),
            }
        })
        .collect())
}

/// Flattens trajectories back into records ordered by (frame, id).
pub fn flatten_trajectories(trajs: &[Trajectory]) -> Vec<DetectionRecord> {
    let mut out: Vec<DetectionRecord> = trajs.iter().flat_map(|t| t.to_records()).collect();
    out.sort_by_key(|r| (r.frame_num, r.id));
    out
}
