//! Intersection geometry and run-wide constants.

use crate::error::{Error, Result};
use crate::geom::{Point, Polygon, Segment};
use crate::model::ClassTable;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub fps: f64,
    pub image_w: u32,
    pub image_h: u32,
    pub corridor_length_m: f64,
    pub camera: CameraConfig,
    pub approaches: Vec<Approach>,
    pub corridor: Option<Corridor>,
    pub sections: Vec<Section>,
    pub conflict_zones: Vec<ConflictZone>,
    pub vehicle_lengths_m: ClassTable<f64>,
    pub pce: ClassTable<f64>,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            fps: 30.0,
            image_w: 1920,
            image_h: 1080,
            corridor_length_m: 160.6,
            camera: CameraConfig::default(),
            approaches: Vec::new(),
            corridor: None,
            sections: Vec::new(),
            conflict_zones: Vec::new(),
            vehicle_lengths_m: ClassTable {
                car: 4.5,
                bus: 11.0,
                truck: 8.0,
            },
            pce: ClassTable {
                car: 1.0,
                bus: 2.0,
                truck: 1.5,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    /// Diagonal field of view in degrees.
    pub fov_diag_deg: Option<f64>,
    /// Flight altitude used when the tracks carry no per-frame altitude.
    pub altitude_m: f64,
    /// Measured ground scale; overrides the FOV-derived one when present.
    pub calibration: Option<Calibration>,
}

impl Default for CameraConfig {
    fn default() -> Self {
        Self {
            fov_diag_deg: None,
            altitude_m: 120.0,
            calibration: Some(Calibration::default()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibration {
    pub meters_per_px: f64,
    pub reference_altitude_m: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        // 160.6 m across 1920 px at 120 m
        Self {
            meters_per_px: 0.08364,
            reference_altitude_m: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Approach {
    pub name: String,
    /// Entry/exit region of this leg.
    pub region: Polygon,
    #[serde(default)]
    pub lanes: Option<LaneModel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Lanes run along x (east-west legs); lateral coordinate is y.
    Horizontal,
    /// Lanes run along y (north-south legs); lateral coordinate is x.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Travel {
    /// Vehicles move toward increasing longitudinal pixel coordinate.
    Increasing,
    Decreasing,
}

/// Ordered lane boundaries for one approach. `boundaries[0]` is the inner
/// edge; lane `k` (1-based) lies between `boundaries[k-1]` and `boundaries[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaneModel {
    pub axis: Axis,
    pub travel: Travel,
    pub boundaries: Vec<Vec<Point>>,
}

/// Lateral band geometry evaluated at one longitudinal position.
#[derive(Debug, Clone, PartialEq)]
pub struct BandSample {
    pub longitudinal: f64,
    pub lateral: f64,
    /// Lateral coordinate of every boundary at this position.
    pub boundaries: Vec<f64>,
}

impl LaneModel {
    pub fn num_lanes(&self) -> usize {
        self.boundaries.len().saturating_sub(1)
    }

    pub fn longitudinal(&self, p: Point) -> f64 {
        match self.axis {
            Axis::Horizontal => p.x,
            Axis::Vertical => p.y,
        }
    }

    pub fn lateral(&self, p: Point) -> f64 {
        match self.axis {
            Axis::Horizontal => p.y,
            Axis::Vertical => p.x,
        }
    }

    fn to_point(&self, longitudinal: f64, lateral: f64) -> Point {
        match self.axis {
            Axis::Horizontal => Point::new(longitudinal, lateral),
            Axis::Vertical => Point::new(lateral, longitudinal),
        }
    }

    /// Lateral coordinate of boundary `k` at longitudinal `u`, if `u` is inside
    /// that boundary's extent.
    pub fn boundary_at(&self, k: usize, u: f64) -> Option<f64> {
        let line = self.boundaries.get(k)?;
        let pts: Vec<(f64, f64)> = line
            .iter()
            .map(|&p| (self.longitudinal(p), self.lateral(p)))
            .collect();
        let (first, last) = (pts.first()?, pts.last()?);
        if u < first.0 || u > last.0 {
            return None;
        }
        for w in pts.windows(2) {
            let ((u0, v0), (u1, v1)) = (w[0], w[1]);
            if u >= u0 && u <= u1 {
                let t = if u1 > u0 { (u - u0) / (u1 - u0) } else { 0.0 };
                return Some(v0 + t * (v1 - v0));
            }
        }
        None
    }

    pub fn sample(&self, p: Point) -> Option<BandSample> {
        let u = self.longitudinal(p);
        let boundaries = (0..self.boundaries.len())
            .map(|k| self.boundary_at(k, u))
            .collect::<Option<Vec<f64>>>()?;
        Some(BandSample {
            longitudinal: u,
            lateral: self.lateral(p),
            boundaries,
        })
    }

    /// Lane index (1-based) containing the lateral coordinate. A point exactly
    /// on an interior boundary goes to the lane with the nearer centerline,
    /// ties to the lower index.
    pub fn lane_of(lateral: f64, boundaries: &[f64]) -> Option<u16> {
        let n = boundaries.len();
        if n < 2 {
            return None;
        }
        let sign = if boundaries[n - 1] > boundaries[0] { 1.0 } else { -1.0 };
        let v = lateral * sign;
        let b: Vec<f64> = boundaries.iter().map(|x| x * sign).collect();
        if v < b[0] || v > b[n - 1] {
            return None;
        }
        for k in 1..n {
            if v < b[k] {
                return Some(k as u16);
            }
            if v == b[k] {
                if k == n - 1 {
                    return Some(k as u16);
                }
                let below = (b[k - 1] + b[k]) / 2.0;
                let above = (b[k] + b[k + 1]) / 2.0;
                return Some(if (v - below).abs() <= (above - v).abs() {
                    k as u16
                } else {
                    k as u16 + 1
                });
            }
        }
        None
    }

    pub fn lane_at(&self, p: Point) -> Option<u16> {
        let s = self.sample(p)?;
        Self::lane_of(s.lateral, &s.boundaries)
    }

    /// Centerline of a lane as a polyline in image pixels, ordered by
    /// increasing longitudinal coordinate over the common extent.
    pub fn centerline(&self, lane: u16) -> Option<Vec<Point>> {
        let k = lane as usize;
        if k == 0 || k > self.num_lanes() {
            return None;
        }
        let (lo, hi) = (&self.boundaries[k - 1], &self.boundaries[k]);
        let mut us: Vec<f64> = lo
            .iter()
            .chain(hi.iter())
            .map(|&p| self.longitudinal(p))
            .collect();
        us.sort_by(f64::total_cmp);
        us.dedup();
        let pts: Vec<Point> = us
            .into_iter()
            .filter_map(|u| {
                let a = self.boundary_at(k - 1, u)?;
                let b = self.boundary_at(k, u)?;
                Some(self.to_point(u, (a + b) / 2.0))
            })
            .collect();
        (pts.len() >= 2).then_some(pts)
    }

    /// The same geometry with lane numbering reversed.
    pub fn mirrored(&self) -> LaneModel {
        let mut m = self.clone();
        m.boundaries.reverse();
        m
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        if self.boundaries.len() < 2 {
            return Err(Error::Config(format!(
                "approach `{name}`: lanes need at least two boundaries"
            )));
        }
        for (k, line) in self.boundaries.iter().enumerate() {
            if line.len() < 2 {
                return Err(Error::Config(format!(
                    "approach `{name}`: boundary {k} needs at least two points"
                )));
            }
            if line
                .windows(2)
                .any(|w| self.longitudinal(w[1]) <= self.longitudinal(w[0]))
            {
                return Err(Error::Config(format!(
                    "approach `{name}`: boundary {k} must be strictly ordered along the lane axis"
                )));
            }
        }
        // ordered and non-crossing at every vertex inside the common extent
        let mut us: Vec<f64> = self
            .boundaries
            .iter()
            .flatten()
            .map(|&p| self.longitudinal(p))
            .collect();
        us.sort_by(f64::total_cmp);
        let mut orientation = 0.0;
        for u in us {
            let Some(vals) = (0..self.boundaries.len())
                .map(|k| self.boundary_at(k, u))
                .collect::<Option<Vec<_>>>()
            else {
                continue;
            };
            for w in vals.windows(2) {
                let d = w[1] - w[0];
                if d == 0.0 || (orientation != 0.0 && d.signum() != orientation) {
                    return Err(Error::Config(format!(
                        "approach `{name}`: lane boundaries cross or touch near longitudinal {u}"
                    )));
                }
                orientation = d.signum();
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Corridor {
    /// The two boundary lines a through vehicle crosses, in either order.
    pub ends: [Segment; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub name: String,
    pub line: Segment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConflictZone {
    pub name: String,
    pub polygon: Polygon,
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let scene: SceneConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::Config("fps must be positive".into()));
        }
        if self.image_w == 0 || self.image_h == 0 {
            return Err(Error::Config("image dimensions must be positive".into()));
        }
        if !(self.corridor_length_m > 0.0) {
            return Err(Error::Config("corridor_length_m must be positive".into()));
        }
        for a in &self.approaches {
            if let Some(l) = &a.lanes {
                l.validate(&a.name)?;
            }
        }
        Ok(())
    }

    pub fn approach(&self, name: &str) -> Option<&Approach> {
        self.approaches.iter().find(|a| a.name == name)
    }

    pub fn require_approaches(&self) -> Result<()> {
        if self.approaches.is_empty() {
            return Err(Error::Config("scene is missing key `approaches`".into()));
        }
        Ok(())
    }
}
