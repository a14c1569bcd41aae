//! Marker-based pose geometry.
//!
//! The camera looks along its +Z axis with +X to the right and +Y down. A
//! marker seen head-on gives an identity rotation, and the vehicle heading is
//! then the marker's reference orientation `phi0`. Positions refer to the
//! rear-axle center; the camera sits `l_lon` ahead of it and `l_lat` to the
//! side.

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::angle::wrap_deg;
use crate::vehicle_dynamics::VehicleState;
use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Camera-from-marker rotation, as produced by a PnP solver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix(Matrix3<f64>);

impl RotationMatrix {
    /// Wraps raw row-major entries without checking them; see [`Self::check`].
    pub fn from_rows(r: [[f64; 3]; 3]) -> Self {
        RotationMatrix(Matrix3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2],
        ))
    }

    pub fn identity() -> Self {
        RotationMatrix(Matrix3::identity())
    }

    /// Rotation about the camera Y axis (the vertical axis) by `deg` degrees.
    pub fn about_y(deg: f64) -> Self {
        let (s, c) = deg.to_radians().sin_cos();
        RotationMatrix(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
    }

    /// Row `i`, column `j`, zero-based (`r[2][0]` is r31).
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Row-major entries r11, r12, ..., r33.
    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn from_row_major(e: [f64; 9]) -> Self {
        RotationMatrix(Matrix3::from_row_slice(&e))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    /// Largest deviation from a proper rotation: entries of RᵀR - I and det(R) - 1.
    pub fn orthonormality_error(&self) -> f64 {
        let gram = self.0.transpose() * self.0 - Matrix3::identity();
        let entry = gram.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let det = (self.0.determinant() - 1.0).abs();
        if entry.is_nan() || det.is_nan() {
            return f64::INFINITY;
        }
        entry.max(det)
    }

    pub fn check(&self) -> Result<()> {
        let deviation = self.orthonormality_error();
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::InvalidRotation { deviation });
        }
        Ok(())
    }
}

/// Camera-frame translation of the marker. `t2` is vertical and unused by the
/// planar pose extraction.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TranslationVector {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
}

impl TranslationVector {
    pub fn new(t1: f64, t2: f64, t3: f64) -> Self {
        TranslationVector { t1, t2, t3 }
    }
}

/// Camera position relative to the rear-axle center, in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraOffset {
    pub l_lat: f64,
    pub l_lon: f64,
}

impl CameraOffset {
    pub fn new(l_lat: f64, l_lon: f64) -> Self {
        CameraOffset { l_lat, l_lon }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.l_lat.is_finite() {
            return Err(Error::config("camera.offset.l_lat", "must be finite"));
        }
        if !(self.l_lon.is_finite() && self.l_lon >= 0.0) {
            return Err(Error::config("camera.offset.l_lon", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// A marker with a known map pose. `phi0` is the vehicle heading at which the
/// camera sees the marker head-on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkerSpec {
    pub id: u32,
    pub x0: f64,
    pub y0: f64,
    pub phi0: f64,
}

impl MarkerSpec {
    pub fn new(id: u32, x0: f64, y0: f64, phi0: f64) -> Self {
        MarkerSpec { id, x0, y0, phi0 }
    }
}

/// Global pose measurement z = [x, y, phi] derived from one marker sighting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseMeasurement {
    pub x: f64,
    pub y: f64,
    /// Degrees, in (-180, 180].
    pub phi: f64,
    pub timestamp: f64,
    pub marker_id: u32,
}

impl PoseMeasurement {
    pub fn new(x: f64, y: f64, phi: f64) -> Self {
        PoseMeasurement {
            x,
            y,
            phi: wrap_deg(phi),
            timestamp: 0.0,
            marker_id: 0,
        }
    }
}

/// Relative yaw between camera and marker in degrees, in [-90, 90].
pub fn relative_yaw(r: &RotationMatrix) -> Result<f64> {
    r.check()?;
    let den = r.get(2, 1).hypot(r.get(2, 2));
    Ok((-r.get(2, 0)).atan2(den).to_degrees())
}

/// Planar distance from the rear-axle center to the marker.
pub fn camera_distance(t: &TranslationVector, off: &CameraOffset) -> f64 {
    (t.t1 + off.l_lat).hypot(t.t3 + off.l_lon)
}

/// Converts one solved marker sighting into a global pose measurement.
///
/// The bearing of the marker as seen from the rear axle uses `atan2`, so
/// markers behind the camera plane keep the right quadrant. A zero distance
/// returns the marker position itself.
pub fn global_pose(
    r: &RotationMatrix,
    t: &TranslationVector,
    off: &CameraOffset,
    marker: &MarkerSpec,
) -> Result<PoseMeasurement> {
    let phi1 = relative_yaw(r)?;
    let phi_aruco = wrap_deg(phi1 + marker.phi0);
    let d = camera_distance(t, off);
    if d == 0.0 {
        return Ok(PoseMeasurement {
            x: marker.x0,
            y: marker.y0,
            phi: phi_aruco,
            timestamp: 0.0,
            marker_id: marker.id,
        });
    }
    let lon = t.t3 + off.l_lon;
    if t.t1 == 0.0 && lon == 0.0 {
        return Err(Error::DegenerateGeometry(
            "marker bearing undefined (t1 = 0 and t3 + l_lon = 0)",
        ));
    }
    let phi2 = t.t1.atan2(lon).to_degrees();
    let phi3 = wrap_deg(phi_aruco - phi2).to_radians();
    Ok(PoseMeasurement {
        x: marker.x0 - d * phi3.cos(),
        y: marker.y0 - d * phi3.sin(),
        phi: phi_aruco,
        timestamp: 0.0,
        marker_id: marker.id,
    })
}

/// Synthesizes the extrinsics a camera on a vehicle at `truth` would report
/// for `marker`. Inverse of [`global_pose`].
pub fn marker_observation_inverse(
    truth: &VehicleState,
    marker: &MarkerSpec,
    off: &CameraOffset,
) -> Result<(RotationMatrix, TranslationVector)> {
    let phi1 = wrap_deg(truth.phi - marker.phi0);
    if phi1.abs() >= 90.0 {
        return Err(Error::DegenerateGeometry(
            "marker seen edge-on or from behind",
        ));
    }
    let dx = marker.x0 - truth.x;
    let dy = marker.y0 - truth.y;
    let d = dx.hypot(dy);
    if d == 0.0 {
        return Err(Error::DegenerateGeometry(
            "marker coincides with the vehicle reference point",
        ));
    }
    let phi3 = dy.atan2(dx).to_degrees();
    let phi2 = wrap_deg(truth.phi - phi3).to_radians();
    let (s2, c2) = phi2.sin_cos();
    // Range along the bearing ray from the camera's longitudinal station:
    // (rho*sin + l_lat)^2 + (rho*cos)^2 = d^2, taking the positive root.
    let disc = d * d - off.l_lat * off.l_lat * c2 * c2;
    let rho = -off.l_lat * s2 + disc.max(0.0).sqrt();
    if disc < 0.0 || rho <= 0.0 {
        return Err(Error::DegenerateGeometry(
            "no camera translation reproduces this pose for the lateral offset",
        ));
    }
    let t = TranslationVector::new(rho * s2, 0.0, rho * c2 - off.l_lon);
    Ok((RotationMatrix::about_y(phi1), t))
}
