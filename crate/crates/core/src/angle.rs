//! Degree-valued angle helpers. Public interfaces in this crate carry angles
//! in degrees; trigonometry converts at the call site.

/// Wraps an angle in degrees to the half-open interval (-180, 180].
pub fn wrap_deg(angle: f64) -> f64 {
    if angle > -180.0 && angle <= 180.0 {
        return angle;
    }
    let mut a = angle.rem_euclid(360.0);
    if a > 180.0 {
        a -= 360.0;
    }
    // rem_euclid can return 360.0 for tiny negative inputs
    if a <= -180.0 {
        a += 360.0;
    }
    a
}

/// Smallest signed difference `a - b` in degrees, in (-180, 180].
pub fn diff_deg(a: f64, b: f64) -> f64 {
    wrap_deg(a - b)
}
