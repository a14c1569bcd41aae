use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use indoorloc::config::{Experiment, ExperimentConfig};
use indoorloc::evaluation::{fmt_float, position_error, read_xy_csv, rmse, sweep_alpha, Association, Scenario};
use indoorloc::fuse::{run_filter, FuseOptions};
use indoorloc::fusion_filters::FilterMode;
use indoorloc::ground_truth_pipeline::{
    extract_sphere_centers, fit_reference, partition_rings, read_point_cloud, write_reference_csv, FitDiagnostics,
    GroundTruthTrajectory, PlanarTransform, SphereSpec, DEFAULT_WINDOW, RING_COUNT,
};
use indoorloc::sensor_simulator::SensorLog;
use indoorloc::{Error, Result};

/// Indoor localization experiments: simulate, fuse, build ground truth,
/// evaluate and sweep.
#[derive(Parser)]
#[command(name = "indoorloc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Omit the `# generated ...` first line of CSV outputs.
    #[arg(long)]
    no_header_timestamp: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a sensor log and its ground truth.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured filters over a sensor log.
    Fuse {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        log: PathBuf,
        /// Run only this filter mode from the config.
        #[arg(long)]
        mode: Option<FilterMode>,
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct a reference trajectory from a LiDAR point cloud.
    Groundtruth {
        /// Point cloud CSV with columns t,x,y,z,ring.
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        radius: f64,
        /// Height of the sphere center above the floor.
        #[arg(long)]
        mount_height: f64,
        #[arg(long, default_value_t = 0.46)]
        sensor_height: f64,
        /// Comma-separated rings to keep (default: all).
        #[arg(long, value_delimiter = ',')]
        rings: Option<Vec<u8>>,
        #[arg(long, default_value_t = DEFAULT_WINDOW)]
        window: f64,
        /// Sensor-to-map transform as `x,y,yaw_deg`.
        #[arg(long, value_delimiter = ',', num_args = 3, allow_hyphen_values = true)]
        transform: Option<Vec<f64>>,
        /// Keep center heights in the diagnostics.
        #[arg(long)]
        floor_correction: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Position RMSE of fused trajectories against a reference.
    Evaluate {
        /// Fused trajectory CSVs (t,x,y,...).
        #[arg(long, required = true, num_args = 1..)]
        fused: Vec<PathBuf>,
        /// Reference CSV (t,x,y,... or t_or_param,x,y).
        #[arg(long)]
        truth: PathBuf,
        /// Associate by time plus this offset instead of nearest point.
        #[arg(long, allow_hyphen_values = true)]
        time_offset: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Grid search over the adaptive filter's forgetting factors.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
}

fn header(common: &Common) -> Option<String> {
    if common.no_header_timestamp {
        return None;
    }
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    Some(format!(
        "# generated by indoorloc {} at unix time {secs}",
        env!("CARGO_PKG_VERSION")
    ))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn prepare(common: &Common) -> Result<()> {
    fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))
}

fn load(config: &Path, seed: Option<u64>) -> Result<Experiment> {
    let exp = ExperimentConfig::load(config)?;
    Ok(match seed {
        Some(s) => exp.with_seed(s),
        None => exp,
    })
}

fn simulate(config: &Path, seed: Option<u64>, common: &Common) -> Result<()> {
    let exp = load(config, seed)?;
    let (truth, log) = exp.simulate()?;
    prepare(common)?;
    let h = header(common);
    write(&common.out, "sensor_log.csv", &log.to_csv(h.as_deref()))?;
    write(&common.out, "truth.csv", &truth.to_csv(h.as_deref()))?;
    write(&common.out, "resolved_config.json", &exp.resolved_json())?;
    println!(
        "{}: {} records ({} marker sightings), {} truth samples -> {}",
        exp.config.name,
        log.records.len(),
        log.marker_count(),
        truth.samples.len(),
        common.out.display()
    );
    Ok(())
}

fn fuse(config: &Path, log: &Path, mode: Option<FilterMode>, common: &Common) -> Result<()> {
    let exp = load(config, None)?;
    let log = SensorLog::read(log)?;
    let mut cfgs = exp.filter_configs()?;
    if let Some(m) = mode {
        cfgs.retain(|c| c.mode == m);
        if cfgs.is_empty() {
            return Err(Error::config("mode", format!("`{m}` is not among the configured filters")));
        }
    }
    prepare(common)?;
    let h = header(common);
    let opts = FuseOptions {
        record_steps: true,
        time_steps: true,
    };
    for cfg in &cfgs {
        let run = run_filter(&log, &exp.map, &exp.config.camera.offset, cfg, opts)?;
        write(&common.out, &format!("fused_{}.csv", cfg.mode), &run.trajectory_csv(h.as_deref()))?;
        write(&common.out, &format!("steps_{}.csv", cfg.mode), &run.steps_csv(h.as_deref()))?;
        println!(
            "{}: {} steps, {}/{} sightings rejected, step time mean {:.4} ms, max {:.4} ms",
            cfg.mode,
            run.timing.groups,
            run.rejected,
            run.offered,
            run.timing.mean_ms,
            run.timing.max_ms
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn groundtruth(
    cloud: &Path,
    sphere: SphereSpec,
    rings: Option<&[u8]>,
    window: f64,
    transform: Option<&[f64]>,
    floor_correction: bool,
    common: &Common,
) -> Result<()> {
    sphere.validate()?;
    if !(window > 0.0 && window.is_finite()) {
        return Err(Error::config("window", "must be > 0"));
    }
    let keep: BTreeSet<u8> = match rings {
        Some(r) => r.iter().copied().collect(),
        None => (0..RING_COUNT).collect(),
    };
    let transform = match transform {
        Some(&[x, y, yaw_deg]) => PlanarTransform { x, y, yaw_deg },
        Some(_) => return Err(Error::config("transform", "expected x,y,yaw_deg")),
        None => PlanarTransform::default(),
    };
    let points = read_point_cloud(cloud)?;
    let kept = partition_rings(&points, &keep);
    let extraction = extract_sphere_centers(&kept, &sphere, window);
    for s in &extraction.skipped {
        eprintln!("window {} skipped: {}", s.window, s.reason);
    }
    let traj = fit_reference(&extraction.centers, &transform, floor_correction)?;
    let diag = FitDiagnostics::new(points.len(), kept.len(), &extraction, &traj, &transform);
    prepare(common)?;
    let h = header(common);
    write(&common.out, "reference.csv", &write_reference_csv(&traj, h.as_deref()))?;
    let json = serde_json::to_string_pretty(&diag).expect("diagnostics serialize") + "\n";
    write(&common.out, "reference.json", &json)?;
    println!(
        "{} reference samples from {} points ({} skipped windows)",
        traj.len(),
        points.len(),
        extraction.skipped.len()
    );
    Ok(())
}

fn series_name(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    stem.strip_prefix("fused_").map(str::to_owned).unwrap_or(stem)
}

fn evaluate(fused: &[PathBuf], truth: &Path, time_offset: Option<f64>, common: &Common) -> Result<()> {
    let association = match time_offset {
        Some(off) if off.is_finite() => Association::TimeOffset(off),
        Some(_) => return Err(Error::config("time_offset", "must be finite")),
        None => Association::Nearest,
    };
    let reference = GroundTruthTrajectory::from_samples(&read_xy_csv(truth)?)?;
    let mut names = BTreeSet::new();
    let mut long = String::from("series,t,value\n");
    let mut summary = String::from("series,samples,final_rmse\n");
    let mut reports = Vec::new();
    for path in fused {
        let name = series_name(path);
        if !names.insert(name.clone()) {
            return Err(Error::config("fused", format!("two inputs map to series `{name}`")));
        }
        let est = read_xy_csv(path)?;
        let errors = position_error(&est, &reference, association)?;
        let series = rmse(&errors);
        let mut csv = String::from("t,error,rmse\n");
        for ((t, _), (e, r)) in est.iter().zip(errors.iter().zip(&series.cumulative)) {
            csv.push_str(&format!("{t},{e},{r}\n"));
            long.push_str(&format!("{name},{t},{r}\n"));
        }
        summary.push_str(&format!("{name},{},{}\n", est.len(), series.final_rmse));
        println!("{name}: final RMSE {:.6} m over {} samples", series.final_rmse, est.len());
        reports.push((name, csv));
    }
    prepare(common)?;
    let h = header(common);
    let with_header = |body: &str| match &h {
        Some(h) => format!("{h}\n{body}"),
        None => body.to_owned(),
    };
    for (name, csv) in &reports {
        write(&common.out, &format!("rmse_{name}.csv"), &with_header(csv))?;
    }
    write(&common.out, "rmse_long.csv", &with_header(&long))?;
    write(&common.out, "rmse_summary.csv", &with_header(&summary))?;
    Ok(())
}

fn sweep(config: &Path, seed: Option<u64>, common: &Common) -> Result<()> {
    let exp = load(config, seed)?;
    let (truth, log) = exp.simulate()?;
    let scenario = Scenario {
        log,
        map: exp.map.clone(),
        offset: exp.config.camera.offset,
        truth: truth.trajectory()?,
        association: exp.association(),
    };
    let result = sweep_alpha(&scenario, &exp.sweep_base(), exp.config.sweep.grid_step)?;
    prepare(common)?;
    let h = header(common);
    write(&common.out, "sweep.csv", &result.to_csv(h.as_deref()))?;
    let diverged = result.cells.iter().filter(|c| c.rmse.is_infinite()).count();
    println!(
        "{} cells ({} diverged); argmin alpha_q={} alpha_r={} rmse={}",
        result.cells.len(),
        diverged,
        fmt_float(result.argmin.alpha_q),
        fmt_float(result.argmin.alpha_r),
        fmt_float(result.argmin.rmse)
    );
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { config, seed, common } => simulate(&config, seed, &common),
        Command::Fuse {
            config,
            log,
            mode,
            common,
        } => fuse(&config, &log, mode, &common),
        Command::Groundtruth {
            cloud,
            radius,
            mount_height,
            sensor_height,
            rings,
            window,
            transform,
            floor_correction,
            common,
        } => groundtruth(
            &cloud,
            SphereSpec {
                radius,
                mount_height,
                sensor_height,
            },
            rings.as_deref(),
            window,
            transform.as_deref(),
            floor_correction,
            &common,
        ),
        Command::Evaluate {
            fused,
            truth,
            time_offset,
            common,
        } => evaluate(&fused, &truth, time_offset, &common),
        Command::Sweep { config, seed, common } => sweep(&config, seed, &common),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
