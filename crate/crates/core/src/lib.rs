//! Post-tracking analytics for drone traffic video: ingest, georeferencing,
//! stabilization, kinematics, maneuvers, surrogate safety and flow metrics.

pub mod error;
pub mod exec;
pub mod geo_util;
pub mod geom;
pub mod georef;
pub mod ingest;
pub mod kinematics;
pub mod maneuvers;
pub mod metrics;
pub mod model;
pub mod safety;
pub mod scene;
pub mod stabilize;
pub mod svg;
pub mod synth;

pub use error::{Error, Result};
pub use exec::Exec;
pub use geom::{Point, Polygon, Segment};
pub use model::{BBox, DetectionRecord, TrackPoint, Trajectory, VehicleClass};
pub use scene::SceneConfig;
