//! Runs a filter over a recorded sensor log.
//!
//! Records are processed in timestamp groups. Gyro and encoder records of a
//! group set the held control inputs, the filter predicts from the previous
//! group time to this one, then every marker sighting of the group is turned
//! into a pose measurement and offered to the filter. The first sighting
//! initializes the filter; earlier records only update the held inputs.

use std::fmt::Write as _;
use std::time::Instant;

use crate::fusion_filters::{CorrectOutcome, FilterConfig, FilterMode, FilterState};
use crate::pose_geometry::{global_pose, CameraOffset};
use crate::sensor_simulator::{LogRecord, MapSpec, SensorLog};
use crate::vehicle_dynamics::{ControlInput, VehicleState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    Init,
    Predict,
    Accept,
    Reject,
}

impl StepEvent {
    pub fn as_str(self) -> &'static str {
        match self {
            StepEvent::Init => "init",
            StepEvent::Predict => "predict",
            StepEvent::Accept => "accept",
            StepEvent::Reject => "reject",
        }
    }
}

/// One row of the per-step diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    pub t: f64,
    pub event: StepEvent,
    pub marker_id: Option<u32>,
    pub state: VehicleState,
    pub p_diag: [f64; 4],
    pub chi2: Option<f64>,
    pub since_accepted: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusedSample {
    pub t: f64,
    pub state: VehicleState,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepTiming {
    pub groups: usize,
    pub mean_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone)]
pub struct FuseRun {
    pub mode: FilterMode,
    pub trajectory: Vec<FusedSample>,
    pub steps: Vec<StepRecord>,
    pub offered: u64,
    pub rejected: u64,
    pub timing: StepTiming,
}

impl FuseRun {
    pub fn final_state(&self) -> Option<VehicleState> {
        self.trajectory.last().map(|s| s.state)
    }

    pub fn positions(&self) -> Vec<(f64, [f64; 2])> {
        self.trajectory
            .iter()
            .map(|s| (s.t, [s.state.x, s.state.y]))
            .collect()
    }

    /// `t,x,y,phi,v` rows, one per processed timestamp.
    pub fn trajectory_csv(&self, header: Option<&str>) -> String {
        let mut s = String::with_capacity(self.trajectory.len() * 64);
        if let Some(h) = header {
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("t,x,y,phi,v\n");
        for f in &self.trajectory {
            let st = &f.state;
            let _ = writeln!(s, "{},{},{},{},{}", f.t, st.x, st.y, st.phi, st.v);
        }
        s
    }

    /// Per-step diagnostics with columns
    /// `t,mode,event,marker_id,x,y,phi,v,p_xx,p_yy,p_phiphi,p_vv,chi2,accepted,since_accepted`.
    /// `chi2` and `accepted` are empty for rows without a correction.
    pub fn steps_csv(&self, header: Option<&str>) -> String {
        let mut s = String::with_capacity(self.steps.len() * 128);
        if let Some(h) = header {
            s.push_str(h);
            s.push('\n');
        }
        s.push_str(
            "t,mode,event,marker_id,x,y,phi,v,p_xx,p_yy,p_phiphi,p_vv,chi2,accepted,since_accepted\n",
        );
        for r in &self.steps {
            let st = &r.state;
            let id = r.marker_id.map(|i| i.to_string()).unwrap_or_default();
            let chi2 = r.chi2.map(|c| c.to_string()).unwrap_or_default();
            let accepted = match r.event {
                StepEvent::Accept => "1",
                StepEvent::Reject => "0",
                _ => "",
            };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.t,
                self.mode,
                r.event.as_str(),
                id,
                st.x,
                st.y,
                st.phi,
                st.v,
                r.p_diag[0],
                r.p_diag[1],
                r.p_diag[2],
                r.p_diag[3],
                chi2,
                accepted,
                r.since_accepted
            );
        }
        s
    }
}

/// Options for [`run_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FuseOptions {
    /// Record per-step diagnostics (costs memory on long logs).
    pub record_steps: bool,
    /// Measure wall time per timestamp group.
    pub time_steps: bool,
}

fn record(fs: &FilterState, t: f64, event: StepEvent, marker_id: Option<u32>, chi2: Option<f64>) -> StepRecord {
    StepRecord {
        t,
        event,
        marker_id,
        state: fs.x_hat,
        p_diag: [fs.p[(0, 0)], fs.p[(1, 1)], fs.p[(2, 2)], fs.p[(3, 3)]],
        chi2,
        since_accepted: fs.time_since_accepted().unwrap_or(0.0),
    }
}

/// Runs one filter over the whole log.
pub fn run_filter(
    log: &SensorLog,
    map: &MapSpec,
    offset: &CameraOffset,
    config: &FilterConfig,
    opts: FuseOptions,
) -> Result<FuseRun> {
    config.validate()?;
    let mut fs = FilterState::new(*config);
    let mut omega = 0.0;
    let mut speed = 0.0;
    let mut trajectory = Vec::new();
    let mut steps = Vec::new();
    let mut total_ns: u128 = 0;
    let mut max_ns: u128 = 0;
    let mut groups = 0usize;

    let records = &log.records;
    let mut i = 0;
    while i < records.len() {
        let t = records[i].time();
        let mut j = i;
        while j < records.len() && records[j].time() == t {
            j += 1;
        }
        let group = &records[i..j];
        i = j;
        let started = opts.time_steps.then(Instant::now);

        for r in group {
            match *r {
                LogRecord::Imu { omega: w, .. } => omega = w,
                LogRecord::Encoder { v_left, v_right, .. } => speed = 0.5 * (v_left + v_right),
                LogRecord::Marker { .. } => {}
            }
        }
        if fs.initialized && t > fs.time {
            fs.predict(&ControlInput::new(omega, speed, t - fs.time))?;
            // keep the filter clock on the log clock
            fs.time = t;
            if opts.record_steps {
                steps.push(record(&fs, t, StepEvent::Predict, None, None));
            }
        }
        for r in group {
            let LogRecord::Marker { marker_id, r: rot, t_vec, .. } = r else {
                continue;
            };
            let marker = map.marker(*marker_id).ok_or_else(|| {
                Error::config("log", format!("marker {marker_id} at t={t} is not in map `{}`", map.name))
            })?;
            let mut z = global_pose(rot, t_vec, offset, marker)?;
            z.timestamp = t;
            if !fs.initialized {
                fs = FilterState::initialize(&z, *config);
                if opts.record_steps {
                    steps.push(record(&fs, t, StepEvent::Init, Some(*marker_id), None));
                }
                continue;
            }
            let outcome = fs.correct(&z)?;
            if opts.record_steps {
                let event = match outcome {
                    CorrectOutcome::Accepted { .. } => StepEvent::Accept,
                    CorrectOutcome::Rejected { .. } => StepEvent::Reject,
                };
                steps.push(record(&fs, t, event, Some(*marker_id), Some(outcome.chi2())));
            }
        }
        if fs.initialized {
            if !fs.x_hat.is_finite() {
                return Err(Error::NumericalFailure(format!("state diverged at t={t}")));
            }
            trajectory.push(FusedSample { t, state: fs.x_hat });
        }
        if let Some(started) = started {
            let ns = started.elapsed().as_nanos();
            total_ns += ns;
            max_ns = max_ns.max(ns);
            groups += 1;
        }
    }
    let timing = if groups > 0 {
        StepTiming {
            groups,
            mean_ms: total_ns as f64 / groups as f64 / 1e6,
            max_ms: max_ns as f64 / 1e6,
        }
    } else {
        StepTiming::default()
    };
    Ok(FuseRun {
        mode: config.mode,
        trajectory,
        steps,
        offered: fs.offered_count,
        rejected: fs.rejected_count,
        timing,
    })
}
