//! Seeded synthetic experiments: a kinematically consistent ground truth
//! along a map track, and the IMU, wheel-encoder and marker-camera records a
//! vehicle driving it would produce.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::angle::{diff_deg, wrap_deg};
use crate::ground_truth_pipeline::GroundTruthTrajectory;
use crate::pose_geometry::{
    marker_observation_inverse, CameraOffset, MarkerSpec, RotationMatrix, TranslationVector,
};
use crate::vehicle_dynamics::{step, ControlInput, VehicleState};
use crate::{Error, Result};

/// Tightest turn the platform can drive.
pub const MIN_TURN_RADIUS: f64 = 0.6;
pub const MAX_SPEED: f64 = 2.0;
/// Lateral distance between the two rear wheels.
pub const REAR_TRACK: f64 = 0.26;
/// Camera sits on the front axle, one wheelbase ahead of the rear axle.
pub const WHEELBASE: f64 = 0.36;

/// Polyline track. A closed track repeats its first waypoint at the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Track {
    pub waypoints: Vec<[f64; 2]>,
}

impl Track {
    pub fn is_closed(&self) -> bool {
        self.waypoints.len() > 2 && self.waypoints.first() == self.waypoints.last()
    }

    pub fn length(&self) -> f64 {
        self.waypoints
            .windows(2)
            .map(|w| (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]))
            .sum()
    }

    /// The same closed track driven `laps` times.
    pub fn repeated(&self, laps: usize) -> Track {
        let mut waypoints = self.waypoints.clone();
        for _ in 1..laps {
            waypoints.extend_from_slice(&self.waypoints[1..]);
        }
        Track { waypoints }
    }

    /// Largest three-point circumradius curvature and the waypoint where it occurs.
    pub fn max_curvature(&self) -> (usize, f64) {
        let mut pts = self.waypoints.clone();
        let closed = self.is_closed();
        if closed {
            // wrap around the seam so the closing corner is checked too
            pts.insert(0, self.waypoints[self.waypoints.len() - 2]);
        }
        let mut worst = (0, 0.0);
        for (i, w) in pts.windows(3).enumerate() {
            let k = circumradius_curvature(w[0], w[1], w[2]);
            if k > worst.1 {
                worst = (if closed { i } else { i + 1 }, k);
            }
        }
        worst
    }

    /// Points at arc-length spacing `ds` from the start; the last point is the
    /// track end, so the final spacing may be shorter.
    pub fn resample(&self, ds: f64) -> Vec<[f64; 2]> {
        let total = self.length();
        let n = ((total / ds) - 1e-9).ceil().max(1.0) as usize;
        let mut out = Vec::with_capacity(n + 1);
        let mut seg = 0;
        let mut seg_start = 0.0;
        for k in 0..n {
            let s = k as f64 * ds;
            loop {
                let a = self.waypoints[seg];
                let b = self.waypoints[seg + 1];
                let len = (b[0] - a[0]).hypot(b[1] - a[1]);
                if s <= seg_start + len || seg + 2 == self.waypoints.len() {
                    let f = if len > 0.0 { ((s - seg_start) / len).min(1.0) } else { 0.0 };
                    out.push([a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
                    break;
                }
                seg_start += len;
                seg += 1;
            }
        }
        out.push(*self.waypoints.last().unwrap());
        out
    }
}

fn circumradius_curvature(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    let ab = (b[0] - a[0]).hypot(b[1] - a[1]);
    let bc = (c[0] - b[0]).hypot(c[1] - b[1]);
    let ca = (a[0] - c[0]).hypot(a[1] - c[1]);
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let den = ab * bc * ca;
    if den == 0.0 {
        return 0.0;
    }
    2.0 * cross.abs() / den
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapSpec {
    pub name: String,
    /// Width (x) and height (y) of the map area in meters, from the origin.
    pub extent: [f64; 2],
    pub markers: Vec<MarkerSpec>,
    pub track: Track,
}

impl MapSpec {
    pub fn validate(&self) -> Result<()> {
        let [w, h] = self.extent;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::config("map.extent", "width and height must be > 0"));
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, m) in self.markers.iter().enumerate() {
            if !ids.insert(m.id) {
                return Err(Error::config(format!("map.markers[{i}].id"), format!("duplicate id {}", m.id)));
            }
            if !(0.0..=w).contains(&m.x0) || !(0.0..=h).contains(&m.y0) {
                return Err(Error::config(format!("map.markers[{i}]"), "outside the map extent"));
            }
            if !(m.phi0 > -180.0 && m.phi0 <= 180.0) {
                return Err(Error::config(format!("map.markers[{i}].phi0"), "must lie in (-180, 180]"));
            }
        }
        if !self.track.is_closed() {
            return Err(Error::config("map.track.waypoints", "track must be closed (first = last)"));
        }
        Ok(())
    }

    pub fn marker(&self, id: u32) -> Option<&MarkerSpec> {
        self.markers.iter().find(|m| m.id == id)
    }

    /// Oval track on a 6 x 4 m floor with twelve markers.
    pub fn oval() -> MapSpec {
        let (cx, cy, straight, radius) = (3.0, 2.0, 2.4, 1.2);
        let track = stadium(cx, cy, straight, radius, 0.05);
        let markers = markers_beside(&stadium(cx, cy, straight, radius + 0.6, 0.01), 12, 0.0, 45.0, 0.0);
        MapSpec {
            name: "oval".into(),
            extent: [6.0, 4.0],
            markers,
            track,
        }
    }

    /// Figure-eight track with a central intersection on an 8 x 6 m floor
    /// (x extent 6 m, y extent 8 m) with sixteen markers.
    pub fn crossroads() -> MapSpec {
        let (cx, cy, a, b) = (3.0, 4.0, 3.2, 3.0);
        let eight = |n: usize| {
            let mut waypoints: Vec<[f64; 2]> = (0..n)
                .map(|i| {
                    let th = std::f64::consts::TAU * i as f64 / n as f64;
                    [round_um(cx + a * th.sin() * th.cos()), round_um(cy + b * th.cos())]
                })
                .collect();
            waypoints.push(waypoints[0]);
            Track { waypoints }
        };
        let track = eight(400);
        let markers = markers_beside(&eight(4000), 16, 0.5, 45.0, 0.4);
        MapSpec {
            name: "crossroads".into(),
            extent: [6.0, 8.0],
            markers,
            track,
        }
    }
}

/// Counter-clockwise stadium: two semicircles joined by straights, starting
/// at the middle of the lower straight.
fn stadium(cx: f64, cy: f64, straight: f64, radius: f64, spacing: f64) -> Track {
    let half = straight / 2.0;
    let arc = std::f64::consts::PI * radius;
    let total = 2.0 * straight + 2.0 * arc;
    let n = (total / spacing).round() as usize;
    let point = |s: f64| -> [f64; 2] {
        let s = s.rem_euclid(total);
        if s < half {
            [cx + s, cy - radius]
        } else if s < half + arc {
            let a = -std::f64::consts::FRAC_PI_2 + (s - half) / radius;
            [cx + half + radius * a.cos(), cy + radius * a.sin()]
        } else if s < half + arc + straight {
            [cx + half - (s - half - arc), cy + radius]
        } else if s < half + 2.0 * arc + straight {
            let a = std::f64::consts::FRAC_PI_2 + (s - half - arc - straight) / radius;
            [cx - half + radius * a.cos(), cy + radius * a.sin()]
        } else {
            [cx - half + (s - half - 2.0 * arc - straight), cy - radius]
        }
    };
    let mut waypoints: Vec<[f64; 2]> = (0..n)
        .map(|i| point(total * i as f64 / n as f64).map(round_um))
        .collect();
    waypoints.push(waypoints[0]);
    Track { waypoints }
}

/// Equispaced markers `lateral` meters to the right of `path`, the first
/// `phase` spacings from the start, each turned `tilt_deg` to the right of the local direction
/// of travel so approaching vehicles see it ahead.
fn markers_beside(path: &Track, count: usize, phase: f64, tilt_deg: f64, lateral: f64) -> Vec<MarkerSpec> {
    let total = path.length();
    let pts = path.resample(total / count as f64 / 50.0);
    (0..count)
        .map(|i| {
            let k = i * 50 + (phase * 50.0).round() as usize;
            let a = pts[k];
            let b = pts[(k + 1) % (pts.len() - 1)];
            let heading = (b[1] - a[1]).atan2(b[0] - a[0]);
            let (sin, cos) = heading.sin_cos();
            MarkerSpec::new(
                i as u32,
                round_mm(a[0] + lateral * sin),
                round_mm(a[1] - lateral * cos),
                round_mm(wrap_deg(heading.to_degrees() - tilt_deg)),
            )
        })
        .collect()
}

fn round_mm(v: f64) -> f64 {
    (v * 1e3).round() / 1e3
}

// Rounded so the layouts do not depend on last-bit differences in libm.
fn round_um(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeedProfile {
    /// Nominal forward speed along the track.
    pub cruise: f64,
}

impl SpeedProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.cruise > 0.0 && self.cruise <= MAX_SPEED) {
            return Err(Error::config("speed.cruise", format!("must lie in (0, {MAX_SPEED}] m/s")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub state: VehicleState,
    /// Yaw rate that led into this sample (deg/s); zero for the first one.
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTruth {
    pub dt: f64,
    pub samples: Vec<TruthSample>,
}

impl SimulatedTruth {
    pub fn trajectory(&self) -> Result<GroundTruthTrajectory> {
        let pts: Vec<(f64, [f64; 2])> = self
            .samples
            .iter()
            .map(|s| (s.t, [s.state.x, s.state.y]))
            .collect();
        GroundTruthTrajectory::from_samples(&pts)
    }

    pub fn to_csv(&self, header: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(h) = header {
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("t,x,y,phi,v,omega\n");
        for r in &self.samples {
            let st = &r.state;
            let _ = writeln!(s, "{},{},{},{},{},{}", r.t, st.x, st.y, st.phi, st.v, r.omega);
        }
        s
    }
}

/// Drives `track` at the cruise speed with step `dt`.
///
/// The track is resampled at `cruise * dt`; each state heads along the chord
/// to the next sample with the speed that covers it in one step, so
/// integrating the single-track model reproduces the resampled points.
pub fn generate_truth(track: &Track, speed: &SpeedProfile, dt: f64) -> Result<SimulatedTruth> {
    if !(dt > 0.0) {
        return Err(Error::config("dt", "must be > 0"));
    }
    speed.validate()?;
    if track.waypoints.len() < 2 {
        return Err(Error::config("track.waypoints", "need at least two waypoints"));
    }
    let limit = 1.0 / MIN_TURN_RADIUS;
    let (index, curvature) = track.max_curvature();
    if curvature > limit {
        return Err(Error::InfeasibleTrack { index, curvature, limit });
    }
    let pts = track.resample(speed.cruise * dt);
    let chords: Vec<(f64, f64)> = pts
        .windows(2)
        .map(|w| {
            let (dx, dy) = (w[1][0] - w[0][0], w[1][1] - w[0][1]);
            (dy.atan2(dx).to_degrees(), dx.hypot(dy) / dt)
        })
        .collect();
    let mut state = VehicleState::new(pts[0][0], pts[0][1], chords[0].0, chords[0].1);
    let mut samples = Vec::with_capacity(pts.len());
    samples.push(TruthSample { t: 0.0, state, omega: 0.0 });
    for k in 1..pts.len() {
        let (heading, v) = chords.get(k).copied().unwrap_or(*chords.last().unwrap());
        let omega = diff_deg(heading, state.phi) / dt;
        state = step(&state, &ControlInput::new(omega, v, dt));
        samples.push(TruthSample { t: k as f64 * dt, state, omega });
    }
    Ok(SimulatedTruth { dt, samples })
}

/// Camera field of view, range and mounting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    #[serde(default = "default_fov")]
    pub fov_deg: f64,
    #[serde(default = "default_range")]
    pub max_range_m: f64,
    #[serde(default = "default_offset")]
    pub offset: CameraOffset,
}

fn default_fov() -> f64 {
    60.0
}
fn default_range() -> f64 {
    3.0
}
fn default_offset() -> CameraOffset {
    CameraOffset::new(0.0, WHEELBASE)
}

impl Default for CameraModel {
    fn default() -> Self {
        CameraModel {
            fov_deg: default_fov(),
            max_range_m: default_range(),
            offset: default_offset(),
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.fov_deg > 0.0 && self.fov_deg < 180.0) {
            return Err(Error::config("camera.fov_deg", "must lie in (0, 180)"));
        }
        if !(self.max_range_m > 0.0) {
            return Err(Error::config("camera.max_range_m", "must be > 0"));
        }
        self.offset.validate()
    }
}

/// Markers the camera can see from `s`: within range and half the field of
/// view of the camera axis, and turned less than 90 degrees from head-on.
pub fn visible_markers<'a>(s: &VehicleState, map: &'a MapSpec, cam: &CameraModel) -> Vec<&'a MarkerSpec> {
    let (sin, cos) = s.phi.to_radians().sin_cos();
    let off = cam.offset;
    let camx = s.x + off.l_lon * cos + off.l_lat * sin;
    let camy = s.y + off.l_lon * sin - off.l_lat * cos;
    map.markers
        .iter()
        .filter(|m| {
            let (dx, dy) = (m.x0 - camx, m.y0 - camy);
            let range = dx.hypot(dy);
            if range > cam.max_range_m || range == 0.0 {
                return false;
            }
            let bearing = diff_deg(dy.atan2(dx).to_degrees(), s.phi);
            bearing.abs() <= cam.fov_deg / 2.0 && diff_deg(s.phi, m.phi0).abs() < 90.0
        })
        .collect()
}

/// Marker, gyro and encoder noise. All randomness derives from `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorNoiseSpec {
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_phi: f64,
    pub sigma_omega: f64,
    /// Gyro-bias random-walk intensity in deg/s/√s: each tick of length dt
    /// adds a zero-mean increment with standard deviation `gyro_drift_rate·√dt`.
    pub gyro_drift_rate: f64,
    pub sigma_speed: f64,
    pub outlier_prob: f64,
    pub outlier_offset: f64,
    pub seed: u64,
}

impl Default for SensorNoiseSpec {
    fn default() -> Self {
        SensorNoiseSpec {
            sigma_x: 0.05,
            sigma_y: 0.05,
            sigma_phi: 0.1,
            sigma_omega: 0.5,
            gyro_drift_rate: 0.05,
            sigma_speed: 0.02,
            outlier_prob: 0.0,
            outlier_offset: 0.5,
            seed: 0,
        }
    }
}

impl SensorNoiseSpec {
    /// Every noise source and outliers disabled.
    pub fn noiseless(seed: u64) -> Self {
        SensorNoiseSpec {
            sigma_x: 0.0,
            sigma_y: 0.0,
            sigma_phi: 0.0,
            sigma_omega: 0.0,
            gyro_drift_rate: 0.0,
            sigma_speed: 0.0,
            outlier_prob: 0.0,
            outlier_offset: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [
            ("noise.sigma_x", self.sigma_x),
            ("noise.sigma_y", self.sigma_y),
            ("noise.sigma_phi", self.sigma_phi),
            ("noise.sigma_omega", self.sigma_omega),
            ("noise.gyro_drift_rate", self.gyro_drift_rate),
            ("noise.sigma_speed", self.sigma_speed),
            ("noise.outlier_offset", self.outlier_offset),
        ];
        for (name, v) in sigmas {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(name, "must be finite and >= 0"));
            }
        }
        if !(0.0..=1.0).contains(&self.outlier_prob) {
            return Err(Error::config("noise.outlier_prob", "must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorRates {
    pub imu_hz: f64,
    pub encoder_hz: f64,
    pub camera_hz: f64,
}

impl Default for SensorRates {
    fn default() -> Self {
        SensorRates {
            imu_hz: 100.0,
            encoder_hz: 100.0,
            camera_hz: 30.0,
        }
    }
}

impl SensorRates {
    pub fn validate(&self) -> Result<()> {
        if !(self.imu_hz > 0.0 && self.imu_hz.is_finite()) {
            return Err(Error::config("rates.imu_hz", "must be > 0"));
        }
        if !(self.encoder_hz > 0.0 && self.encoder_hz <= self.imu_hz) {
            return Err(Error::config("rates.encoder_hz", "must lie in (0, imu_hz]"));
        }
        if !(self.camera_hz > 0.0 && self.camera_hz <= self.imu_hz) {
            return Err(Error::config("rates.camera_hz", "must lie in (0, imu_hz]"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.imu_hz
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogRecord {
    Imu {
        t: f64,
        omega: f64,
    },
    Encoder {
        t: f64,
        v_left: f64,
        v_right: f64,
    },
    Marker {
        t: f64,
        marker_id: u32,
        r: RotationMatrix,
        t_vec: TranslationVector,
    },
}

impl LogRecord {
    pub fn time(&self) -> f64 {
        match *self {
            LogRecord::Imu { t, .. } | LogRecord::Encoder { t, .. } | LogRecord::Marker { t, .. } => t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorLog {
    pub records: Vec<LogRecord>,
}

impl SensorLog {
    pub fn marker_count(&self) -> usize {
        self.records
            .iter()
            .filter(|r| matches!(r, LogRecord::Marker { .. }))
            .count()
    }

    pub fn to_csv(&self, header: Option<&str>) -> String {
        let mut s = String::with_capacity(self.records.len() * 48);
        if let Some(h) = header {
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("t,kind,data\n");
        for r in &self.records {
            match r {
                LogRecord::Imu { t, omega } => {
                    let _ = writeln!(s, "{t},imu,{omega}");
                }
                LogRecord::Encoder { t, v_left, v_right } => {
                    let _ = writeln!(s, "{t},enc,{v_left},{v_right}");
                }
                LogRecord::Marker { t, marker_id, r, t_vec } => {
                    let _ = write!(s, "{t},marker,{marker_id}");
                    for e in r.to_row_major() {
                        let _ = write!(s, ",{e}");
                    }
                    let _ = writeln!(s, ",{},{},{}", t_vec.t1, t_vec.t2, t_vec.t3);
                }
            }
        }
        s
    }

    /// Parses the CSV produced by [`Self::to_csv`]. Lines starting with `#`
    /// are comments. Rows must have non-decreasing timestamps.
    pub fn from_csv(text: &str, source: &str) -> Result<SensorLog> {
        let mut records = Vec::new();
        let mut last_t = f64::NEG_INFINITY;
        for (i, line) in text.lines().enumerate() {
            let row = i + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("t,") {
                continue;
            }
            let bad = |reason: String| Error::Parse {
                path: source.to_string(),
                row,
                reason,
            };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let num = |j: usize| -> Result<f64> {
                let f = fields.get(j).ok_or_else(|| bad(format!("missing field {}", j + 1)))?;
                let v: f64 = f.parse().map_err(|_| bad(format!("`{f}` is not a number")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(bad(format!("`{f}` is not finite")))
                }
            };
            let expect_len = |n: usize| -> Result<()> {
                if fields.len() == n {
                    Ok(())
                } else {
                    Err(bad(format!("expected {n} fields, found {}", fields.len())))
                }
            };
            let t = num(0)?;
            if t < last_t {
                return Err(bad("timestamp goes backwards".into()));
            }
            last_t = t;
            let rec = match fields.get(1).copied() {
                Some("imu") => {
                    expect_len(3)?;
                    LogRecord::Imu { t, omega: num(2)? }
                }
                Some("enc") => {
                    expect_len(4)?;
                    LogRecord::Encoder {
                        t,
                        v_left: num(2)?,
                        v_right: num(3)?,
                    }
                }
                Some("marker") => {
                    expect_len(15)?;
                    let marker_id: u32 = fields[2]
                        .parse()
                        .map_err(|_| bad(format!("`{}` is not a marker id", fields[2])))?;
                    let mut e = [0.0; 9];
                    for (k, v) in e.iter_mut().enumerate() {
                        *v = num(3 + k)?;
                    }
                    let r = RotationMatrix::from_row_major(e);
                    r.check().map_err(|err| bad(err.to_string()))?;
                    LogRecord::Marker {
                        t,
                        marker_id,
                        r,
                        t_vec: TranslationVector::new(num(12)?, num(13)?, num(14)?),
                    }
                }
                other => return Err(bad(format!("unknown record kind {other:?}"))),
            };
            records.push(rec);
        }
        Ok(SensorLog { records })
    }

    pub fn read(path: &Path) -> Result<SensorLog> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        SensorLog::from_csv(&text, &path.display().to_string())
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated as finite and non-negative")
}

/// Sampling period of a sensor in IMU ticks, and whether tick `k` fires.
fn fires(k: usize, imu_hz: f64, rate_hz: f64) -> bool {
    let ratio = imu_hz / rate_hz;
    let here = (k as f64 / ratio).floor();
    let before = if k == 0 { -1.0 } else { ((k - 1) as f64 / ratio).floor() };
    here > before
}

/// Produces the sensor records for `truth`. All sensors run on the IMU clock;
/// slower sensors fire on the first tick of each of their periods.
///
/// Independent random streams are used for the gyro, the encoders and the
/// camera, so e.g. changing the outlier rate leaves the gyro noise intact.
pub fn synthesize_log(
    truth: &SimulatedTruth,
    map: &MapSpec,
    cam: &CameraModel,
    noise: &SensorNoiseSpec,
    rates: &SensorRates,
) -> Result<SensorLog> {
    noise.validate()?;
    rates.validate()?;
    let stream = |n: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        rng.set_stream(n);
        rng
    };
    let mut gyro_rng = stream(1);
    let mut enc_rng = stream(2);
    let mut cam_rng = stream(3);
    let dt = truth.dt;
    let bias_step = normal(noise.gyro_drift_rate * dt.sqrt());
    let (n_omega, n_speed) = (normal(noise.sigma_omega), normal(noise.sigma_speed));
    let (n_x, n_y, n_phi) = (normal(noise.sigma_x), normal(noise.sigma_y), normal(noise.sigma_phi));

    let mut bias = 0.0;
    let mut records = Vec::new();
    for (k, sample) in truth.samples.iter().enumerate() {
        let t = sample.t;
        bias += bias_step.sample(&mut gyro_rng);
        records.push(LogRecord::Imu {
            t,
            omega: sample.omega + bias + n_omega.sample(&mut gyro_rng),
        });
        if fires(k, rates.imu_hz, rates.encoder_hz) {
            let half = sample.omega.to_radians() * REAR_TRACK / 2.0;
            let v = sample.state.v;
            records.push(LogRecord::Encoder {
                t,
                v_left: v - half + n_speed.sample(&mut enc_rng),
                v_right: v + half + n_speed.sample(&mut enc_rng),
            });
        }
        if fires(k, rates.imu_hz, rates.camera_hz) {
            for marker in visible_markers(&sample.state, map, cam) {
                let mut seen = sample.state;
                seen.x += n_x.sample(&mut cam_rng);
                seen.y += n_y.sample(&mut cam_rng);
                seen.phi = wrap_deg(seen.phi + n_phi.sample(&mut cam_rng));
                let outlier = cam_rng.random::<f64>() < noise.outlier_prob;
                let dir = cam_rng.random::<f64>() * std::f64::consts::TAU;
                if outlier {
                    seen.x += noise.outlier_offset * dir.cos();
                    seen.y += noise.outlier_offset * dir.sin();
                }
                // a perturbed pose may leave the representable yaw range
                if let Ok((r, t_vec)) = marker_observation_inverse(&seen, marker, &cam.offset) {
                    records.push(LogRecord::Marker {
                        t,
                        marker_id: marker.id,
                        r,
                        t_vec,
                    });
                }
            }
        }
    }
    Ok(SensorLog { records })
}
