//! Accuracy against ground truth, and the forgetting-factor grid sweep.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::fuse::{run_filter, FuseOptions};
use crate::fusion_filters::FilterConfig;
use crate::ground_truth_pipeline::GroundTruthTrajectory;
use crate::pose_geometry::CameraOffset;
use crate::sensor_simulator::{MapSpec, SensorLog};
use crate::{Error, Result};

/// How estimates are paired with the reference.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Association {
    /// Distance to the closest point of the reference curve.
    #[default]
    Nearest,
    /// Reference position at the estimate's time plus this offset (s).
    TimeOffset(f64),
}

/// Position error of each estimate against the reference.
pub fn position_error(
    estimate: &[(f64, [f64; 2])],
    truth: &GroundTruthTrajectory,
    association: Association,
) -> Result<Vec<f64>> {
    if truth.is_empty() {
        return Err(Error::EmptyTruth);
    }
    if estimate.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let errors = estimate
        .par_iter()
        .map(|(t, p)| match association {
            Association::Nearest => truth.spline.closest_point(*p).distance,
            Association::TimeOffset(offset) => {
                let q = truth.at_time(t + offset);
                (p[0] - q[0]).hypot(p[1] - q[1])
            }
        })
        .collect();
    Ok(errors)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RmseSeries {
    /// RMSE over the first `i + 1` errors, for each `i`.
    pub cumulative: Vec<f64>,
    pub final_rmse: f64,
}

pub fn rmse(errors: &[f64]) -> RmseSeries {
    let mut sum = 0.0;
    let cumulative: Vec<f64> = errors
        .iter()
        .enumerate()
        .map(|(i, e)| {
            sum += e * e;
            (sum / (i + 1) as f64).sqrt()
        })
        .collect();
    let final_rmse = cumulative.last().copied().unwrap_or(0.0);
    RmseSeries {
        cumulative,
        final_rmse,
    }
}

/// Everything needed to score one filter configuration.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub log: SensorLog,
    pub map: MapSpec,
    pub offset: CameraOffset,
    pub truth: GroundTruthTrajectory,
    pub association: Association,
}

impl Scenario {
    /// Final RMSE of one run; a failing or diverging run scores +inf.
    pub fn score(&self, config: &FilterConfig) -> f64 {
        let run = match run_filter(&self.log, &self.map, &self.offset, config, FuseOptions::default()) {
            Ok(run) => run,
            Err(_) => return f64::INFINITY,
        };
        if run.trajectory.iter().any(|s| !s.state.is_finite()) {
            return f64::INFINITY;
        }
        match position_error(&run.positions(), &self.truth, self.association) {
            Ok(errors) => {
                let r = rmse(&errors).final_rmse;
                if r.is_finite() {
                    r
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepCell {
    pub alpha_q: f64,
    pub alpha_r: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    /// Row-major over alpha_q, then alpha_r, both ascending.
    pub cells: Vec<SweepCell>,
    pub argmin: SweepCell,
}

impl SweepResult {
    pub fn to_csv(&self, header: Option<&str>) -> String {
        let mut s = String::new();
        if let Some(h) = header {
            s.push_str(h);
            s.push('\n');
        }
        s.push_str("alpha_q,alpha_r,rmse\n");
        for c in &self.cells {
            let _ = writeln!(s, "{},{},{}", c.alpha_q, c.alpha_r, fmt_float(c.rmse));
        }
        s
    }
}

/// Formats infinities as `inf` / `-inf`.
pub fn fmt_float(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        v.to_string()
    }
}

/// Grid values {step, 2 step, ..., 1}.
pub fn alpha_grid(step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::config("grid_step", "must lie in (0, 1]"));
    }
    let n = (1.0 / step).round() as usize;
    if ((n as f64) * step - 1.0).abs() > 1e-9 {
        return Err(Error::config("grid_step", "must divide 1 evenly"));
    }
    Ok((1..=n).map(|k| k as f64 / n as f64).collect())
}

/// Scores the adaptive filter of `base` over the (alpha_q, alpha_r) grid.
/// Ties go to the larger alpha_q + alpha_r, then the larger alpha_q.
pub fn sweep_alpha(scenario: &Scenario, base: &FilterConfig, step: f64) -> Result<SweepResult> {
    if !base.mode.is_adaptive() {
        return Err(Error::config("mode", "the sweep needs an adaptive filter mode"));
    }
    let grid = alpha_grid(step)?;
    let pairs: Vec<(f64, f64)> = grid
        .iter()
        .flat_map(|&q| grid.iter().map(move |&r| (q, r)))
        .collect();
    let cells: Vec<SweepCell> = pairs
        .par_iter()
        .map(|&(alpha_q, alpha_r)| {
            let cfg = FilterConfig {
                alpha_q,
                alpha_r,
                ..*base
            };
            SweepCell {
                alpha_q,
                alpha_r,
                rmse: scenario.score(&cfg),
            }
        })
        .collect();
    let mut argmin = cells[0];
    for c in &cells[1..] {
        let better = c.rmse < argmin.rmse
            || (c.rmse == argmin.rmse
                && (c.alpha_q + c.alpha_r, c.alpha_q) > (argmin.alpha_q + argmin.alpha_r, argmin.alpha_q));
        if better {
            argmin = *c;
        }
    }
    Ok(SweepResult { cells, argmin })
}

/// Reads a trajectory CSV with a time column (`t` or `t_or_param`) and `x`,
/// `y` columns; other columns are ignored.
pub fn read_xy_csv(path: &Path) -> Result<Vec<(f64, [f64; 2])>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| crate::ground_truth_pipeline::csv_error(path, 0, e))?;
    let headers = rdr
        .headers()
        .map_err(|e| crate::ground_truth_pipeline::csv_error(path, 1, e))?
        .clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let missing = |what: &str| Error::Parse {
        path: path.display().to_string(),
        row: 1,
        reason: format!("missing `{what}` column"),
    };
    let ti = col(&["t", "t_or_param"]).ok_or_else(|| missing("t"))?;
    let xi = col(&["x"]).ok_or_else(|| missing("x"))?;
    let yi = col(&["y"]).ok_or_else(|| missing("y"))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| crate::ground_truth_pipeline::csv_error(path, 0, e))?;
        let row = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let get = |i: usize| -> Result<f64> {
            let f = rec.get(i).unwrap_or("");
            f.parse::<f64>().map_err(|_| Error::Parse {
                path: path.display().to_string(),
                row,
                reason: format!("`{f}` is not a number"),
            })
        };
        out.push((get(ti)?, [get(xi)?, get(yi)?]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line_truth() -> GroundTruthTrajectory {
        let pts: Vec<(f64, [f64; 2])> = (0..=10).map(|i| (i as f64, [i as f64 * 0.5, 0.0])).collect();
        GroundTruthTrajectory::from_samples(&pts).unwrap()
    }

    #[test]
    fn identical_estimate_has_zero_error() {
        let truth = line_truth();
        let est: Vec<_> = truth.samples().collect();
        for assoc in [Association::Nearest, Association::TimeOffset(0.0)] {
            let e = position_error(&est, &truth, assoc).unwrap();
            assert!(e.iter().all(|v| *v < 1e-12));
        }
    }

    #[test]
    fn constant_lateral_offset() {
        let truth = line_truth();
        let est: Vec<_> = (1..10).map(|i| (i as f64, [i as f64 * 0.5, 0.1])).collect();
        let e = position_error(&est, &truth, Association::Nearest).unwrap();
        assert!(e.iter().all(|v| (v - 0.1).abs() < 1e-12));
        // an offset along the line is invisible to nearest-point association
        let est: Vec<_> = (1..9).map(|i| (i as f64, [i as f64 * 0.5 + 0.1, 0.0])).collect();
        let e = position_error(&est, &truth, Association::Nearest).unwrap();
        assert!(e.iter().all(|v| *v < 1e-12));
        let e = position_error(&est, &truth, Association::TimeOffset(0.0)).unwrap();
        assert!(e.iter().all(|v| (v - 0.1).abs() < 1e-9));
    }

    #[test]
    fn circle_reparameterized() {
        let circle = |a: f64| [a.cos(), a.sin()];
        let truth: Vec<_> = (0..=360).map(|i| (i as f64, circle((i as f64).to_radians()))).collect();
        let truth = GroundTruthTrajectory::from_samples(&truth).unwrap();
        let est: Vec<_> = (20..340).map(|i| (0.0, circle((i as f64 + 0.37).to_radians()))).collect();
        let e = position_error(&est, &truth, Association::Nearest).unwrap();
        assert!(e.iter().all(|v| *v < 1e-6), "{:?}", e.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn rmse_examples() {
        let r = rmse(&[3.0, 4.0]);
        assert_eq!(r.cumulative[0], 3.0);
        assert!((r.final_rmse - 12.5f64.sqrt()).abs() < 1e-15);
        assert!((r.final_rmse - 3.5355).abs() < 1e-4);
        assert_eq!(rmse(&[0.0; 5]).final_rmse, 0.0);
        assert_eq!(rmse(&[0.7]).final_rmse, 0.7);
    }

    #[test]
    fn grid_has_100_cells() {
        let g = alpha_grid(0.1).unwrap();
        assert_eq!(g.len(), 10);
        assert_eq!(g[9], 1.0);
        assert!((g[2] - 0.3).abs() < 1e-15);
        assert!(alpha_grid(0.0).is_err());
        assert!(alpha_grid(0.3).is_err());
    }

    #[test]
    fn empty_inputs() {
        let truth = line_truth();
        assert!(position_error(&[], &truth, Association::Nearest).is_err());
        assert!(matches!(
            GroundTruthTrajectory::from_samples(&[]),
            Err(Error::EmptyTruth)
        ));
    }

    proptest! {
        #[test]
        fn rmse_scales(errors in proptest::collection::vec(0.0f64..10.0, 1..50), c in 0.0f64..100.0) {
            let a = rmse(&errors);
            let scaled: Vec<f64> = errors.iter().map(|e| e * c).collect();
            let b = rmse(&scaled);
            for (x, y) in a.cumulative.iter().zip(&b.cumulative) {
                prop_assert!((x * c - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }

        #[test]
        fn translation_invariance(dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
            let pts: Vec<(f64, [f64; 2])> = (0..30)
                .map(|i| { let a = i as f64 * 0.2; (a, [a.cos() * 2.0, a.sin()]) })
                .collect();
            let est: Vec<(f64, [f64; 2])> = (0..20)
                .map(|i| { let a = i as f64 * 0.27 + 0.05; (a, [a.cos() * 2.0 + 0.03, a.sin() - 0.02]) })
                .collect();
            let shift = |v: &[(f64, [f64; 2])]| -> Vec<(f64, [f64; 2])> {
                v.iter().map(|(t, p)| (*t, [p[0] + dx, p[1] + dy])).collect()
            };
            let base = position_error(&est, &GroundTruthTrajectory::from_samples(&pts).unwrap(), Association::Nearest).unwrap();
            let moved = position_error(&shift(&est), &GroundTruthTrajectory::from_samples(&shift(&pts)).unwrap(), Association::Nearest).unwrap();
            for (a, b) in base.iter().zip(&moved) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
