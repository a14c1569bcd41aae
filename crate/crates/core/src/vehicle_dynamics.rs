//! Kinematic single-track process model.
//!
//! The state stores heading in degrees. The Jacobian is taken with respect to
//! the stored units, so its heading column carries a `pi/180` factor.

use nalgebra::{Matrix4, Vector4};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_deg;

/// Fused vehicle state: rear-axle position (m), heading (deg), speed (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState {
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
}

impl VehicleState {
    pub fn new(x: f64, y: f64, phi: f64, v: f64) -> Self {
        VehicleState {
            x,
            y,
            phi: wrap_deg(phi),
            v,
        }
    }

    pub fn to_vector(&self) -> Vector4<f64> {
        Vector4::new(self.x, self.y, self.phi, self.v)
    }

    /// Builds a state from a vector, wrapping the heading.
    pub fn from_vector(v: &Vector4<f64>) -> Self {
        VehicleState::new(v[0], v[1], v[2], v[3])
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.phi.is_finite() && self.v.is_finite()
    }
}

/// Gyro yaw rate (deg/s), encoder speed (m/s) and the step length (s).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlInput {
    pub omega: f64,
    pub speed: f64,
    pub dt: f64,
}

impl ControlInput {
    pub fn new(omega: f64, speed: f64, dt: f64) -> Self {
        debug_assert!(dt > 0.0, "step length must be positive");
        ControlInput { omega, speed, dt }
    }
}

pub type Jacobian4x4 = Matrix4<f64>;

/// Advances the state by one step. Position uses the previous heading and
/// speed; the new speed is the encoder reading.
pub fn step(s: &VehicleState, u: &ControlInput) -> VehicleState {
    let (sin, cos) = s.phi.to_radians().sin_cos();
    VehicleState {
        x: s.x + u.dt * s.v * cos,
        y: s.y + u.dt * s.v * sin,
        phi: wrap_deg(s.phi + u.dt * u.omega),
        v: u.speed,
    }
}

/// Analytic ∂step/∂state in storage units (heading in degrees).
pub fn jacobian(s: &VehicleState, u: &ControlInput) -> Jacobian4x4 {
    let (sin, cos) = s.phi.to_radians().sin_cos();
    let k = std::f64::consts::PI / 180.0;
    let dt = u.dt;
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, 0.0, -dt * s.v * sin * k, dt * cos,
        0.0, 1.0,  dt * s.v * cos * k, dt * sin,
        0.0, 0.0, 1.0, 0.0,
        // the encoder overwrites speed, so v' does not depend on v
        0.0, 0.0, 0.0, 0.0,
    );
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::diff_deg;
    use proptest::prelude::*;

    fn close(a: &VehicleState, b: &VehicleState, tol: f64) -> bool {
        (a.x - b.x).abs() < tol
            && (a.y - b.y).abs() < tol
            && diff_deg(a.phi, b.phi).abs() < tol
            && (a.v - b.v).abs() < tol
    }

    #[test]
    fn straight_and_axis_aligned_steps() {
        let s = step(&VehicleState::new(0.0, 0.0, 0.0, 1.0), &ControlInput::new(0.0, 1.0, 0.1));
        assert!(close(&s, &VehicleState::new(0.1, 0.0, 0.0, 1.0), 1e-15));
        let s = step(&VehicleState::new(0.0, 0.0, 90.0, 1.0), &ControlInput::new(0.0, 1.0, 0.1));
        assert!(close(&s, &VehicleState::new(0.0, 0.1, 90.0, 1.0), 1e-15));
    }

    #[test]
    fn turning_step_by_substitution() {
        let s = step(&VehicleState::new(1.0, 2.0, 0.0, 2.0), &ControlInput::new(10.0, 2.1, 0.1));
        assert!(close(&s, &VehicleState::new(1.2, 2.0, 1.0, 2.1), 1e-12));
    }

    #[test]
    fn heading_wraps() {
        let s = step(&VehicleState::new(0.0, 0.0, 179.5, 0.0), &ControlInput::new(10.0, 0.0, 0.1));
        assert!((s.phi - -179.5).abs() < 1e-12);
    }

    #[test]
    fn jacobian_examples() {
        let u = ControlInput::new(0.0, 0.0, 0.1);
        let f = jacobian(&VehicleState::new(3.0, 4.0, 0.0, 0.0), &u);
        assert!((f[(0, 3)] - 0.1).abs() < 1e-15);
        assert_eq!(f[(0, 2)], 0.0);
        assert_eq!(f[(1, 2)], 0.0);

        let f = jacobian(&VehicleState::new(0.0, 0.0, 90.0, 1.0), &u);
        // -dt*v*sin(phi) = -0.1 per radian, i.e. -0.1*pi/180 per degree
        let per_radian = f[(0, 2)] * 180.0 / std::f64::consts::PI;
        assert!((per_radian - -0.1).abs() < 1e-12);
        assert!((f[(1, 3)] - 0.1).abs() < 1e-15);
        assert_eq!(f[(2, 2)], 1.0);
    }

    #[test]
    fn rest_is_a_fixed_point() {
        let s = VehicleState::new(1.5, -2.0, 33.0, 0.0);
        assert_eq!(step(&s, &ControlInput::new(0.0, 0.0, 0.05)), s);
    }

    proptest! {
        #[test]
        fn speed_comes_from_encoder(v in -3.0f64..3.0, speed in -3.0f64..3.0, w in -90.0f64..90.0) {
            let s = step(&VehicleState::new(0.0, 0.0, 10.0, v), &ControlInput::new(w, speed, 0.02));
            prop_assert_eq!(s.v, speed);
        }

        #[test]
        fn rotation_equivariance(
            x in -5.0f64..5.0, y in -5.0f64..5.0, phi in -180.0f64..180.0,
            v in 0.0f64..2.0, w in -60.0f64..60.0, rot in -180.0f64..180.0,
        ) {
            let u = ControlInput::new(w, v, 0.05);
            let (s, c) = rot.to_radians().sin_cos();
            let rotate = |st: &VehicleState| VehicleState::new(
                c * st.x - s * st.y, s * st.x + c * st.y, st.phi + rot, st.v);
            let a = rotate(&step(&VehicleState::new(x, y, phi, v), &u));
            let b = step(&rotate(&VehicleState::new(x, y, phi, v)), &u);
            prop_assert!(close(&a, &b, 1e-9));
        }
    }
}
