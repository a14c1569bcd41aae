//! Offline reference trajectory from a fixed 16-ring LiDAR tracking a sphere
//! mounted above the rear axle.
//!
//! Pipeline: keep the rings that see the sphere, split the returns into
//! time windows, cluster each window, recover the sphere center from
//! the surface hits, then fit a chord-length cubic spline through the
//! centers projected to the map plane.

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::spline::ChordSpline;
use crate::{Error, Result};

pub const RING_COUNT: u8 = 16;
/// Gap that separates two clusters inside one window.
pub const CLUSTER_GAP: f64 = 0.15;
/// One revolution at 10 Hz.
pub const DEFAULT_WINDOW: f64 = 0.1;
/// Allowed mismatch between a point's elevation and its ring angle.
pub const RING_ANGLE_TOL_DEG: f64 = 0.5;

/// Fixed elevation of `ring` in degrees: -15 deg for ring 0 up to +15 deg for ring 15.
pub fn ring_elevation_deg(ring: u8) -> f64 {
    -15.0 + 2.0 * ring as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LidarPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub ring: u8,
}

impl LidarPoint {
    pub fn elevation_deg(&self) -> f64 {
        self.z.atan2(self.x.hypot(self.y)).to_degrees()
    }

    pub fn validate(&self) -> Result<()> {
        if self.ring >= RING_COUNT {
            return Err(Error::config("ring", format!("{} is outside 0..=15", self.ring)));
        }
        let err = (self.elevation_deg() - ring_elevation_deg(self.ring)).abs();
        if err > RING_ANGLE_TOL_DEG {
            return Err(Error::config(
                "ring",
                format!("elevation off ring {} by {err:.2} deg", self.ring),
            ));
        }
        Ok(())
    }

    fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// Tracked sphere. Heights are above the floor; the sensor height is needed
/// to place the sphere center in the sensor frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereSpec {
    pub radius: f64,
    pub mount_height: f64,
    #[serde(default = "default_sensor_height")]
    pub sensor_height: f64,
}

fn default_sensor_height() -> f64 {
    0.46
}

impl SphereSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::config("sphere.radius", "must be > 0"));
        }
        if !self.mount_height.is_finite() || !self.sensor_height.is_finite() {
            return Err(Error::config("sphere", "heights must be finite"));
        }
        Ok(())
    }

    /// Height of the sphere center in the sensor frame.
    pub fn center_z(&self) -> f64 {
        self.mount_height - self.sensor_height
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedCenter {
    pub t: f64,
    pub center: [f64; 3],
    /// Nearest surface point along the sensor ray before radius correction.
    pub surface: [f64; 3],
    pub returns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedWindow {
    pub window: i64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CenterExtraction {
    pub centers: Vec<TimedCenter>,
    pub skipped: Vec<SkippedWindow>,
}

/// Keeps points whose ring is in `keep`, in order.
pub fn partition_rings(cloud: &[LidarPoint], keep: &BTreeSet<u8>) -> Vec<LidarPoint> {
    cloud.iter().filter(|p| keep.contains(&p.ring)).copied().collect()
}

/// Pushes a surface point outward along the sensor ray by `radius`.
pub fn radius_correct(surface: [f64; 3], radius: f64) -> [f64; 3] {
    let n = norm(surface);
    if n == 0.0 {
        return surface;
    }
    let k = (n + radius) / n;
    [surface[0] * k, surface[1] * k, surface[2] * k]
}

fn norm(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Single-link clusters (indices into `pts`) with the given gap.
fn cluster(pts: &[LidarPoint], gap: f64) -> Vec<Vec<usize>> {
    let n = pts.len();
    let mut label = vec![usize::MAX; n];
    let mut clusters = Vec::new();
    for seed in 0..n {
        if label[seed] != usize::MAX {
            continue;
        }
        let id = clusters.len();
        label[seed] = id;
        let mut members = vec![seed];
        let mut head = 0;
        while head < members.len() {
            let a = pts[members[head]].position();
            head += 1;
            for j in 0..n {
                if label[j] == usize::MAX {
                    let b = pts[j].position();
                    let d = norm([a[0] - b[0], a[1] - b[1], a[2] - b[2]]);
                    if d <= gap {
                        label[j] = id;
                        members.push(j);
                    }
                }
            }
        }
        clusters.push(members);
    }
    clusters
}

/// Horizontal sphere center with known radius and known center height,
/// by Gauss-Newton on the per-point horizontal radius residuals.
fn fit_center_known_height(pts: &[LidarPoint], sphere: &SphereSpec, init: [f64; 2]) -> Option<[f64; 2]> {
    let zc = sphere.center_z();
    let r2 = sphere.radius * sphere.radius;
    let slice: Vec<([f64; 2], f64)> = pts
        .iter()
        .map(|p| ([p.x, p.y], (r2 - (p.z - zc).powi(2)).max(0.0).sqrt()))
        .collect();
    let mut c = init;
    for _ in 0..50 {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (p, rh) in &slice {
            let dx = c[0] - p[0];
            let dy = c[1] - p[1];
            let dist = dx.hypot(dy);
            if dist == 0.0 {
                continue;
            }
            let (jx, jy) = (dx / dist, dy / dist);
            let res = dist - rh;
            a11 += jx * jx;
            a12 += jx * jy;
            a22 += jy * jy;
            b1 += jx * res;
            b2 += jy * res;
        }
        let det = a11 * a22 - a12 * a12;
        if det.abs() < 1e-18 {
            return None;
        }
        let step = [(a22 * b1 - a12 * b2) / det, (a11 * b2 - a12 * b1) / det];
        c = [c[0] - step[0], c[1] - step[1]];
        if step[0].hypot(step[1]) < 1e-12 {
            break;
        }
    }
    if !(c[0].is_finite() && c[1].is_finite()) {
        return None;
    }
    // reject fits that wander away from the hits
    let worst = slice
        .iter()
        .map(|(p, rh)| ((c[0] - p[0]).hypot(c[1] - p[1]) - rh).abs())
        .fold(0.0, f64::max);
    (worst < sphere.radius).then_some(c)
}

/// Recovers one sphere center per time window.
///
/// A window opens at the first return after a pause longer than half a
/// window, and closes after `window` seconds. The sphere is seen in a short
/// burst once per revolution, so windows follow the bursts instead of a fixed
/// grid that the burst phase would drift across. Each window's returns are
/// clustered; more than one cluster makes the
/// window ambiguous and it is skipped. The surface point is the cluster
/// centroid, refined to the nearest point of a known-radius sphere fit when
/// the cluster has three or more returns, and the center is that surface
/// point pushed outward along the sensor ray by the radius.
pub fn extract_sphere_centers(
    points: &[LidarPoint],
    sphere: &SphereSpec,
    window: f64,
) -> CenterExtraction {
    let mut out = CenterExtraction::default();
    if points.is_empty() {
        return out;
    }
    let mut sorted = points.to_vec();
    sorted.sort_by(|a, b| a.t.total_cmp(&b.t));
    let mut windows: BTreeMap<i64, Vec<LidarPoint>> = BTreeMap::new();
    let (mut k, mut start, mut prev) = (0i64, sorted[0].t, sorted[0].t);
    for p in sorted {
        if p.t - prev > window / 2.0 || p.t - start >= window {
            k += 1;
            start = p.t;
        }
        prev = p.t;
        windows.entry(k).or_default().push(p);
    }
    for (k, pts) in windows {
        let clusters = cluster(&pts, CLUSTER_GAP);
        if clusters.len() > 1 {
            let e = Error::AmbiguousTarget {
                window: k,
                clusters: clusters.len(),
            };
            out.skipped.push(SkippedWindow {
                window: k,
                reason: e.to_string(),
            });
            continue;
        }
        let members: Vec<LidarPoint> = clusters[0].iter().map(|&i| pts[i]).collect();
        let n = members.len() as f64;
        let mut centroid = [0.0; 3];
        let mut t = 0.0;
        for p in &members {
            centroid[0] += p.x / n;
            centroid[1] += p.y / n;
            centroid[2] += p.z / n;
            t += p.t / n;
        }
        let mut surface = centroid;
        if members.len() >= 3 {
            let guess = radius_correct(centroid, sphere.radius);
            if let Some(c) = fit_center_known_height(&members, sphere, [guess[0], guess[1]]) {
                let c = [c[0], c[1], sphere.center_z()];
                let nc = norm(c);
                let k = (nc - sphere.radius) / nc;
                surface = [c[0] * k, c[1] * k, c[2] * k];
            }
        }
        out.centers.push(TimedCenter {
            t,
            center: radius_correct(surface, sphere.radius),
            surface,
            returns: members.len(),
        });
    }
    out
}

/// Rigid planar transform from the sensor frame to the map frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarTransform {
    pub x: f64,
    pub y: f64,
    pub yaw_deg: f64,
}

impl PlanarTransform {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw_deg.to_radians().sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }
}

/// Time-stamped reference points and their interpolating spline.
#[derive(Debug, Clone)]
pub struct GroundTruthTrajectory {
    pub times: Vec<f64>,
    pub spline: ChordSpline,
    /// Heights of the source centers, kept for diagnostics only.
    pub heights: Option<Vec<f64>>,
}

impl GroundTruthTrajectory {
    /// Builds a trajectory from (t, x, y) samples; needs at least two
    /// distinct points.
    pub fn from_samples(samples: &[(f64, [f64; 2])]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyTruth);
        }
        let mut times = Vec::with_capacity(samples.len());
        let mut pts: Vec<[f64; 2]> = Vec::with_capacity(samples.len());
        for (t, p) in samples {
            if pts.last() != Some(p) {
                times.push(*t);
                pts.push(*p);
            }
        }
        let spline = ChordSpline::fit(&pts)?;
        Ok(GroundTruthTrajectory {
            times,
            spline,
            heights: None,
        })
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, [f64; 2])> + '_ {
        self.times.iter().copied().zip(self.spline.points().iter().copied())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn at_param(&self, u: f64) -> [f64; 2] {
        self.spline.eval(u)
    }

    /// Position at time `t`, mapping time linearly onto the chord parameter
    /// within each sample interval. Clamped outside the sampled span.
    pub fn at_time(&self, t: f64) -> [f64; 2] {
        let knots = self.spline.knots();
        let n = self.times.len();
        if t <= self.times[0] {
            return self.spline.points()[0];
        }
        if t >= self.times[n - 1] {
            return self.spline.points()[n - 1];
        }
        let i = self.times.partition_point(|&ti| ti <= t) - 1;
        let span = self.times[i + 1] - self.times[i];
        let frac = if span > 0.0 { (t - self.times[i]) / span } else { 0.0 };
        self.spline.eval(knots[i] + frac * (knots[i + 1] - knots[i]))
    }
}

/// Projects the centers to the map plane and fits the reference spline.
/// With `floor_correction` the center heights are kept as diagnostics.
pub fn fit_reference(
    centers: &[TimedCenter],
    transform: &PlanarTransform,
    floor_correction: bool,
) -> Result<GroundTruthTrajectory> {
    if centers.len() < 4 {
        return Err(Error::InsufficientData {
            needed: 4,
            got: centers.len(),
        });
    }
    let samples: Vec<(f64, [f64; 2])> = centers
        .iter()
        .map(|c| (c.t, transform.apply([c.center[0], c.center[1]])))
        .collect();
    let mut traj = GroundTruthTrajectory::from_samples(&samples)?;
    if floor_correction {
        traj.heights = Some(centers.iter().map(|c| c.center[2]).collect());
    }
    Ok(traj)
}

/// Fit diagnostics written next to the reference trajectory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub sample_count: usize,
    pub input_points: usize,
    pub kept_points: usize,
    pub skipped_windows: Vec<SkippedWindow>,
    /// Distance between each center and the spline evaluated at its knot.
    pub max_residual: f64,
    pub height_min: Option<f64>,
    pub height_max: Option<f64>,
}

impl FitDiagnostics {
    pub fn new(
        input_points: usize,
        kept_points: usize,
        extraction: &CenterExtraction,
        traj: &GroundTruthTrajectory,
        transform: &PlanarTransform,
    ) -> Self {
        let max_residual = extraction
            .centers
            .iter()
            .map(|c| {
                let p = transform.apply([c.center[0], c.center[1]]);
                traj.spline.closest_point(p).distance
            })
            .fold(0.0, f64::max);
        let heights = traj.heights.as_deref();
        FitDiagnostics {
            sample_count: traj.len(),
            input_points,
            kept_points,
            skipped_windows: extraction.skipped.clone(),
            max_residual,
            height_min: heights.map(|h| h.iter().copied().fold(f64::INFINITY, f64::min)),
            height_max: heights.map(|h| h.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        }
    }
}

/// Reads a `t,x,y,z,ring` point cloud CSV.
pub fn read_point_cloud(path: &Path) -> Result<Vec<LidarPoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, 0, e))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<LidarPoint>().enumerate() {
        let row = i + 2;
        let p = rec.map_err(|e| csv_error(path, row, e))?;
        p.validate().map_err(|e| Error::Parse {
            path: path.display().to_string(),
            row,
            reason: e.to_string(),
        })?;
        out.push(p);
    }
    Ok(out)
}

pub(crate) fn csv_error(path: &Path, row: usize, e: csv::Error) -> Error {
    if let csv::ErrorKind::Io(_) = e.kind() {
        if let csv::ErrorKind::Io(io) = e.into_kind() {
            return Error::io(path, io);
        }
        unreachable!()
    }
    let row = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(row);
    Error::Parse {
        path: path.display().to_string(),
        row,
        reason: e.to_string(),
    }
}

/// Writes `t_or_param,x,y` rows, one per reference sample.
pub fn write_reference_csv(traj: &GroundTruthTrajectory, header: Option<&str>) -> String {
    let mut s = String::new();
    if let Some(h) = header {
        s.push_str(h);
        s.push('\n');
    }
    s.push_str("t_or_param,x,y\n");
    for (t, p) in traj.samples() {
        s.push_str(&format!("{t},{},{}\n", p[0], p[1]));
    }
    s
}
