//! EKF, adaptive EKF and chi-square gated EKF over the single-track model.
//!
//! All variants share one predict/correct core; [`FilterMode`] decides
//! whether a correction is gated by the innovation's chi-square statistic and
//! whether Q and R are re-estimated after each accepted correction.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, Matrix3, Matrix3x4, Matrix4, Matrix4x3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::angle::wrap_deg;
use crate::pose_geometry::PoseMeasurement;
use crate::vehicle_dynamics::{jacobian, step, ControlInput, VehicleState};
use crate::{Error, Result};

pub type Covariance4 = Matrix4<f64>;
pub type Covariance3 = Matrix3<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    Ekf,
    Aekf,
    Chi2,
    AekfChi2,
}

impl FilterMode {
    pub const ALL: [FilterMode; 4] = [
        FilterMode::Ekf,
        FilterMode::Aekf,
        FilterMode::Chi2,
        FilterMode::AekfChi2,
    ];

    pub fn is_adaptive(self) -> bool {
        matches!(self, FilterMode::Aekf | FilterMode::AekfChi2)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, FilterMode::Chi2 | FilterMode::AekfChi2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FilterMode::Ekf => "ekf",
            FilterMode::Aekf => "aekf",
            FilterMode::Chi2 => "chi2",
            FilterMode::AekfChi2 => "aekf_chi2",
        }
    }
}

impl fmt::Display for FilterMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FilterMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FilterMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::config("mode", format!("unknown filter mode `{s}`")))
    }
}

/// Noise initialization, forgetting factors and gate threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    pub q0: Covariance4,
    pub r0: Covariance3,
    pub p0: Covariance4,
    pub alpha_q: f64,
    pub alpha_r: f64,
    /// Gate on chi-square; `f64::INFINITY` disables it.
    pub chi2_threshold: f64,
    pub mode: FilterMode,
}

/// Default initial process noise, diag over (x, y, phi, v).
pub const DEFAULT_Q0: [f64; 4] = [1e-3, 1e-3, 3e-4, 2e-3];
/// Default measurement noise, diag over (x, y, phi).
pub const DEFAULT_R0: [f64; 3] = [0.5, 0.5, 1.0];
pub const DEFAULT_P0: [f64; 4] = [0.1, 0.1, 0.1, 0.1];
pub const DEFAULT_CHI2_THRESHOLD: f64 = 0.05;
/// Forgetting factors tuned for the oval map.
pub const OVAL_ALPHAS: (f64, f64) = (0.6, 1.0);
/// Forgetting factors tuned for the crossroads map.
pub const CROSSROADS_ALPHAS: (f64, f64) = (0.9, 1.0);

impl FilterConfig {
    /// Default hyperparameters for `mode`. Gated modes use the 0.05
    /// threshold, adaptive modes the oval-map forgetting factors.
    pub fn with_mode(mode: FilterMode) -> Self {
        let (alpha_q, alpha_r) = if mode.is_adaptive() {
            OVAL_ALPHAS
        } else {
            (1.0, 1.0)
        };
        FilterConfig {
            q0: Matrix4::from_diagonal(&DEFAULT_Q0.into()),
            r0: Matrix3::from_diagonal(&DEFAULT_R0.into()),
            p0: Matrix4::from_diagonal(&DEFAULT_P0.into()),
            alpha_q,
            alpha_r,
            chi2_threshold: if mode.is_gated() {
                DEFAULT_CHI2_THRESHOLD
            } else {
                f64::INFINITY
            },
            mode,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, a) in [("alpha_q", self.alpha_q), ("alpha_r", self.alpha_r)] {
            if !(a > 0.0 && a <= 1.0) {
                return Err(Error::config(name, format!("{a} is outside (0, 1]")));
            }
        }
        if self.chi2_threshold.is_nan() || self.chi2_threshold < 0.0 {
            return Err(Error::config("chi2_threshold", "must be >= 0 or infinite"));
        }
        check_covariance("q0", &self.q0)?;
        check_covariance("r0", &self.r0)?;
        check_covariance("p0", &self.p0)?;
        Ok(())
    }
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig::with_mode(FilterMode::Ekf)
    }
}

fn check_covariance<const N: usize>(name: &str, m: &nalgebra::SMatrix<f64, N, N>) -> Result<()> {
    let n = N;
    for i in 0..n {
        for j in 0..n {
            let v = m[(i, j)];
            if !v.is_finite() {
                return Err(Error::config(name, "entries must be finite"));
            }
            if (v - m[(j, i)]).abs() > 1e-12 {
                return Err(Error::config(name, "must be symmetric"));
            }
        }
        if m[(i, i)] < 0.0 {
            return Err(Error::config(name, "diagonal must be non-negative"));
        }
    }
    Ok(())
}

/// Measurement matrix H = [I₃ 0].
pub fn measurement_matrix() -> Matrix3x4<f64> {
    Matrix3x4::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0)
}

/// z - H x with the heading component wrapped to (-180, 180].
pub fn innovation(z: &PoseMeasurement, x: &VehicleState) -> Vector3<f64> {
    Vector3::new(z.x - x.x, z.y - x.y, wrap_deg(z.phi - x.phi))
}

/// Squared Mahalanobis distance dᵀ S⁻¹ d.
pub fn chi_square(d: &Vector3<f64>, s: &Covariance3) -> Result<f64> {
    let chol = Cholesky::new(*s)
        .ok_or_else(|| Error::NumericalFailure("innovation covariance is not positive definite".into()))?;
    let w = chol.l().solve_lower_triangular(d).ok_or_else(|| {
        Error::NumericalFailure("innovation covariance factor is singular".into())
    })?;
    Ok(w.norm_squared())
}

fn symmetrize<const N: usize>(
    m: &nalgebra::SMatrix<f64, N, N>,
) -> nalgebra::SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric 4x4 matrix.
pub fn min_eigenvalue(m: &Covariance4) -> f64 {
    SymmetricEigen::new(*m).eigenvalues.min()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorrectOutcome {
    Accepted { chi2: f64 },
    Rejected { chi2: f64 },
}

impl CorrectOutcome {
    pub fn chi2(&self) -> f64 {
        match *self {
            CorrectOutcome::Accepted { chi2 } | CorrectOutcome::Rejected { chi2 } => chi2,
        }
    }

    pub fn accepted(&self) -> bool {
        matches!(self, CorrectOutcome::Accepted { .. })
    }
}

/// Quantities of one accepted correction, as consumed by [`FilterState::adapt`].
#[derive(Debug, Clone, Copy)]
pub struct UpdateTerms {
    pub innovation: Vector3<f64>,
    pub residual: Vector3<f64>,
    pub gain: Matrix4x3<f64>,
    pub p_prior: Covariance4,
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub x_hat: VehicleState,
    pub p: Covariance4,
    pub q: Covariance4,
    pub r: Covariance3,
    pub initialized: bool,
    pub last_innovation: Vector3<f64>,
    pub last_chi2: f64,
    /// Number of predictions applied.
    pub step_count: u64,
    pub offered_count: u64,
    pub rejected_count: u64,
    /// Filter time, advanced by each prediction.
    pub time: f64,
    pub last_accepted_time: Option<f64>,
    config: FilterConfig,
}

impl FilterState {
    /// An uninitialized filter; the first pose measurement initializes it.
    pub fn new(config: FilterConfig) -> Self {
        FilterState {
            x_hat: VehicleState::default(),
            p: config.p0,
            q: config.q0,
            r: config.r0,
            initialized: false,
            last_innovation: Vector3::zeros(),
            last_chi2: 0.0,
            step_count: 0,
            offered_count: 0,
            rejected_count: 0,
            time: 0.0,
            last_accepted_time: None,
            config,
        }
    }

    /// Initializes from a measurement: pose from `z`, speed zero.
    pub fn initialize(z: &PoseMeasurement, config: FilterConfig) -> Self {
        let mut fs = FilterState::new(config);
        fs.x_hat = VehicleState::new(z.x, z.y, z.phi, 0.0);
        fs.initialized = true;
        fs.time = z.timestamp;
        fs.last_accepted_time = Some(z.timestamp);
        fs
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn mode(&self) -> FilterMode {
        self.config.mode
    }

    /// Seconds since the last accepted (or initializing) measurement.
    pub fn time_since_accepted(&self) -> Option<f64> {
        self.last_accepted_time.map(|t| self.time - t)
    }

    pub fn predict(&mut self, u: &ControlInput) -> Result<()> {
        if !self.initialized {
            return Err(Error::Uninitialized);
        }
        let f = jacobian(&self.x_hat, u);
        self.x_hat = step(&self.x_hat, u);
        self.p = symmetrize(&(f * self.p * f.transpose() + self.q));
        self.step_count += 1;
        self.time += u.dt;
        Ok(())
    }

    /// Innovation covariance S = H P Hᵀ + R for the current prior.
    pub fn innovation_covariance(&self) -> Covariance3 {
        self.p.fixed_view::<3, 3>(0, 0).into_owned() + self.r
    }

    pub fn correct(&mut self, z: &PoseMeasurement) -> Result<CorrectOutcome> {
        if !self.initialized {
            return Err(Error::Uninitialized);
        }
        self.offered_count += 1;
        let h = measurement_matrix();
        let d = innovation(z, &self.x_hat);
        let s = self.innovation_covariance();
        let chol = Cholesky::new(s).ok_or_else(|| {
            Error::NumericalFailure("innovation covariance is not positive definite".into())
        })?;
        let chi2 = chi_square(&d, &s)?;
        self.last_innovation = d;
        self.last_chi2 = chi2;
        if self.config.mode.is_gated() && !(chi2 <= self.config.chi2_threshold) {
            self.rejected_count += 1;
            return Ok(CorrectOutcome::Rejected { chi2 });
        }

        let p_prior = self.p;
        // K = P Hᵀ S⁻¹ = (S⁻¹ H P)ᵀ since S and P are symmetric
        let hp = h * p_prior;
        let k: Matrix4x3<f64> = chol.solve(&hp).transpose();
        let x = self.x_hat.to_vector() + k * d;
        self.x_hat = VehicleState::from_vector(&x);
        let i_kh = Matrix4::identity() - k * h;
        self.p = symmetrize(&(i_kh * p_prior * i_kh.transpose() + k * self.r * k.transpose()));
        if !self.x_hat.is_finite() || self.p.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalFailure("state became non-finite".into()));
        }
        self.last_accepted_time = Some(z.timestamp.max(self.time));

        if self.config.mode.is_adaptive() {
            let residual = innovation(z, &self.x_hat);
            self.adapt(&UpdateTerms {
                innovation: d,
                residual,
                gain: k,
                p_prior,
            });
        }
        Ok(CorrectOutcome::Accepted { chi2 })
    }

    /// Forgetting-factor blend of Q with the innovation term and of R with
    /// the residual term.
    pub fn adapt(&mut self, t: &UpdateTerms) {
        let (aq, ar) = (self.config.alpha_q, self.config.alpha_r);
        let kd = t.gain * t.innovation;
        let q_obs = kd * kd.transpose();
        let r_obs = t.residual * t.residual.transpose()
            + t.p_prior.fixed_view::<3, 3>(0, 0).into_owned();
        self.q = symmetrize(&(self.q * aq + q_obs * (1.0 - aq)));
        self.r = symmetrize(&(self.r * ar + r_obs * (1.0 - ar)));
    }
}
