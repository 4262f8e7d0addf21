//! Pixel-to-ground scale from camera altitude and field of view.
//!
//! Flat ground, nadir camera, no lens distortion: the ground footprint and the
//! meters-per-pixel scale are both linear in altitude.

use crate::error::{Error, Result};
use crate::model::TrackPoint;
use crate::scene::SceneConfig;
use serde::Serialize;

/// Altitude band the scale model was calibrated for.
pub const SUPPORTED_ALTITUDE_M: (f64, f64) = (120.0, 350.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fov_diag_deg: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraModel {
    pub fn new(fov_diag_deg: f64, image_w: u32, image_h: u32) -> Result<Self> {
        if !(fov_diag_deg > 0.0 && fov_diag_deg < 180.0) {
            return Err(Error::InvalidCamera(format!(
                "diagonal FOV must lie in (0, 180) degrees, got {fov_diag_deg}"
            )));
        }
        if image_w == 0 || image_h == 0 {
            return Err(Error::InvalidCamera("image dimensions must be positive".into()));
        }
        Ok(Self {
            fov_diag_deg,
            image_w,
            image_h,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroundFootprint {
    pub diagonal_m: f64,
    /// Ground span along the image width.
    pub length_m: f64,
    /// Ground span along the image height.
    pub width_m: f64,
    pub altitude_m: f64,
}

pub fn ground_footprint(cam: &CameraModel, altitude_m: f64) -> Result<GroundFootprint> {
    if !(altitude_m > 0.0) {
        return Err(Error::InvalidAltitude(altitude_m));
    }
    let cam = CameraModel::new(cam.fov_diag_deg, cam.image_w, cam.image_h)?;
    let diagonal_m = 2.0 * altitude_m * (cam.fov_diag_deg.to_radians() / 2.0).tan();
    let (w, h) = (cam.image_w as f64, cam.image_h as f64);
    let diag_px = w.hypot(h);
    Ok(GroundFootprint {
        diagonal_m,
        length_m: diagonal_m * w / diag_px,
        width_m: diagonal_m * h / diag_px,
        altitude_m,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleSource {
    Calibrated,
    FovDerived,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScaleModel {
    pub meters_per_px: f64,
    pub reference_altitude_m: f64,
    pub source: ScaleSource,
}

impl ScaleModel {
    pub fn calibrated(meters_per_px: f64, reference_altitude_m: f64) -> Result<Self> {
        if !(meters_per_px > 0.0) {
            return Err(Error::Config(format!("meters_per_px must be positive, got {meters_per_px}")));
        }
        if !(reference_altitude_m > 0.0) {
            return Err(Error::InvalidAltitude(reference_altitude_m));
        }
        Ok(Self {
            meters_per_px,
            reference_altitude_m,
            source: ScaleSource::Calibrated,
        })
    }

    pub fn from_camera(cam: &CameraModel, reference_altitude_m: f64) -> Result<Self> {
        let fp = ground_footprint(cam, reference_altitude_m)?;
        Ok(Self {
            meters_per_px: fp.length_m / cam.image_w as f64,
            reference_altitude_m,
            source: ScaleSource::FovDerived,
        })
    }

    /// Calibration wins over optics when a scene declares both.
    pub fn from_scene(scene: &SceneConfig) -> Result<Self> {
        let cam = &scene.camera;
        if let Some(c) = cam.calibration {
            return Self::calibrated(c.meters_per_px, c.reference_altitude_m);
        }
        if let Some(fov) = cam.fov_diag_deg {
            let model = CameraModel::new(fov, scene.image_w, scene.image_h)?;
            return Self::from_camera(&model, cam.altitude_m);
        }
        Err(Error::Config(
            "scene camera needs `calibration` or `fov_diag_deg`".into(),
        ))
    }
}

/// Ground meters per image pixel at `altitude_m`.
pub fn meters_per_pixel(scale: &ScaleModel, altitude_m: f64) -> Result<f64> {
    if !(altitude_m > 0.0) {
        return Err(Error::InvalidAltitude(altitude_m));
    }
    let (lo, hi) = SUPPORTED_ALTITUDE_M;
    if altitude_m < lo || altitude_m > hi {
        tracing::warn!(altitude_m, "altitude outside the supported {lo}-{hi} m envelope");
    }
    Ok(scale.meters_per_px * (altitude_m / scale.reference_altitude_m))
}

/// Scale lookup per track point.
pub trait PixelScale: Sync {
    fn mpp(&self, point: &TrackPoint) -> f64;
}

impl PixelScale for f64 {
    fn mpp(&self, _: &TrackPoint) -> f64 {
        *self
    }
}

/// Altitude-aware scale: per-point altitude when recorded, else the flight default.
#[derive(Debug, Clone, Copy)]
pub struct AltitudeScale {
    pub model: ScaleModel,
    pub default_altitude_m: f64,
    default_mpp: f64,
}

impl AltitudeScale {
    pub fn new(model: ScaleModel, default_altitude_m: f64) -> Result<Self> {
        let default_mpp = meters_per_pixel(&model, default_altitude_m)?;
        Ok(Self {
            model,
            default_altitude_m,
            default_mpp,
        })
    }

    pub fn from_scene(scene: &SceneConfig) -> Result<Self> {
        Self::new(ScaleModel::from_scene(scene)?, scene.camera.altitude_m)
    }

    pub fn default_mpp(&self) -> f64 {
        self.default_mpp
    }
}

impl PixelScale for AltitudeScale {
    fn mpp(&self, point: &TrackPoint) -> f64 {
        match point.altitude_m {
            Some(h) if h > 0.0 => self.model.meters_per_px * (h / self.model.reference_altitude_m),
            _ => self.default_mpp,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn footprint_examples() {
        let cam = CameraModel::new(90.0, 1920, 1080).unwrap();
        let fp = ground_footprint(&cam, 100.0).unwrap();
        assert_relative_eq!(fp.diagonal_m, 200.0, epsilon = 1e-9);
        assert!((fp.length_m - 174.31).abs() < 0.01);
        assert!((fp.width_m - 98.05).abs() < 0.01);
        let fp2 = ground_footprint(&cam, 200.0).unwrap();
        assert_relative_eq!(fp2.diagonal_m, 2.0 * fp.diagonal_m, max_relative = 1e-15);
        assert_relative_eq!(fp2.length_m, 2.0 * fp.length_m, max_relative = 1e-15);
        assert_relative_eq!(fp2.width_m, 2.0 * fp.width_m, max_relative = 1e-15);
    }

    #[test]
    fn camera_and_altitude_errors() {
        assert!(CameraModel::new(180.0, 1920, 1080).is_err());
        assert!(CameraModel::new(0.0, 1920, 1080).is_err());
        let cam = CameraModel::new(90.0, 1920, 1080).unwrap();
        assert!(ground_footprint(&cam, 0.0).is_err());
        let s = ScaleModel::calibrated(0.08364, 120.0).unwrap();
        assert!(meters_per_pixel(&s, -5.0).is_err());
    }

    #[test]
    fn scale_examples() {
        let s = ScaleModel::calibrated(0.08364, 120.0).unwrap();
        assert_eq!(meters_per_pixel(&s, 120.0).unwrap(), 0.08364);
        assert_eq!(meters_per_pixel(&s, 240.0).unwrap(), 0.16728);
        let cam = CameraModel::new(90.0, 1920, 1080).unwrap();
        let f = ScaleModel::from_camera(&cam, 100.0).unwrap();
        assert_eq!(f.source, ScaleSource::FovDerived);
        assert!((meters_per_pixel(&f, 100.0).unwrap() - 0.09079).abs() < 5e-6);
    }

    #[test]
    fn scene_prefers_calibration() {
        let mut scene = SceneConfig::default();
        scene.camera.fov_diag_deg = Some(90.0);
        assert_eq!(ScaleModel::from_scene(&scene).unwrap().source, ScaleSource::Calibrated);
        scene.camera.calibration = None;
        assert_eq!(ScaleModel::from_scene(&scene).unwrap().source, ScaleSource::FovDerived);
        scene.camera.fov_diag_deg = None;
        assert!(ScaleModel::from_scene(&scene).is_err());
    }

    proptest! {
        #[test]
        fn footprint_is_pythagorean(theta in 1.0f64..179.0, h in 1.0f64..1000.0) {
            let cam = CameraModel::new(theta, 1920, 1080).unwrap();
            let fp = ground_footprint(&cam, h).unwrap();
            let lhs = fp.length_m.powi(2) + fp.width_m.powi(2);
            prop_assert!(((lhs - fp.diagonal_m.powi(2)) / fp.diagonal_m.powi(2)).abs() < 1e-6);
            prop_assert!((fp.length_m / fp.width_m - 1920.0 / 1080.0).abs() < 1e-9);
        }

        #[test]
        fn scale_strictly_increasing(h1 in 1.0f64..500.0, dh in 0.01f64..500.0) {
            let s = ScaleModel::calibrated(0.08364, 120.0).unwrap();
            let a = meters_per_pixel(&s, h1).unwrap();
            let b = meters_per_pixel(&s, h1 + dh).unwrap();
            prop_assert!(b > a);
            prop_assert!((a / h1 - 0.08364 / 120.0).abs() < 1e-15);
        }
    }
}
