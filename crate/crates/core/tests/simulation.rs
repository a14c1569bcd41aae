use std::path::{Path, PathBuf};

use indoorloc::config::ExperimentConfig;
use indoorloc::evaluation::{position_error, rmse, Association};
use indoorloc::fuse::{run_filter, FuseOptions};
use indoorloc::fusion_filters::{FilterConfig, FilterMode};
use indoorloc::pose_geometry::global_pose;
use indoorloc::sensor_simulator::{
    generate_truth, synthesize_log, CameraModel, LogRecord, MapSpec, SensorNoiseSpec, SensorRates, SpeedProfile,
};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn bundled_maps_match_the_builtin_layouts() {
    for map in [MapSpec::oval(), MapSpec::crossroads()] {
        let path = configs().join("maps").join(format!("{}.json", map.name));
        let text = std::fs::read_to_string(&path).unwrap();
        let on_disk: MapSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(on_disk, map, "{} is out of date", path.display());
    }
}

#[test]
fn bundled_configs_load() {
    let oval = ExperimentConfig::load(&configs().join("oval.json")).unwrap();
    assert_eq!(oval.map.extent, [6.0, 4.0]);
    assert_eq!(oval.map.markers.len(), 12);
    let cross = ExperimentConfig::load(&configs().join("crossroads.json")).unwrap();
    assert_eq!(cross.map.extent, [6.0, 8.0]);
    assert_eq!(cross.map.markers.len(), 16);
    let aekf = cross
        .filter_configs()
        .unwrap()
        .into_iter()
        .find(|c| c.mode == FilterMode::Aekf)
        .unwrap();
    assert_eq!((aekf.alpha_q, aekf.alpha_r), (0.9, 1.0));
}

#[test]
fn outlier_fraction_matches_probability() {
    let map = MapSpec::oval();
    let cam = CameraModel::default();
    let rates = SensorRates::default();
    let truth = generate_truth(&map.track.repeated(10), &SpeedProfile { cruise: 0.5 }, rates.dt()).unwrap();
    let mut noise = SensorNoiseSpec::noiseless(11);
    noise.outlier_prob = 0.1;
    noise.outlier_offset = 0.5;
    let log = synthesize_log(&truth, &map, &cam, &noise, &rates).unwrap();

    let mut k = 0;
    let (mut n, mut outliers) = (0usize, 0usize);
    for r in &log.records {
        let LogRecord::Marker { t, marker_id, r, t_vec } = r else { continue };
        while truth.samples[k].t < *t {
            k += 1;
        }
        let s = truth.samples[k].state;
        let z = global_pose(r, t_vec, &cam.offset, map.marker(*marker_id).unwrap()).unwrap();
        let off = (z.x - s.x).hypot(z.y - s.y);
        n += 1;
        if off > 0.25 {
            assert!((off - 0.5).abs() < 1e-9);
            outliers += 1;
        } else {
            assert!(off < 1e-9);
        }
    }
    assert!(n >= 10_000, "only {n} marker records");
    let p = 0.1;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    let frac = outliers as f64 / n as f64;
    assert!((frac - p).abs() <= 3.0 * sigma, "fraction {frac} over {n} records");
}

#[test]
fn noiseless_logs_are_tracked_on_both_maps() {
    for map in [MapSpec::oval(), MapSpec::crossroads()] {
        let cam = CameraModel::default();
        let rates = SensorRates::default();
        let truth = generate_truth(&map.track, &SpeedProfile { cruise: 0.8 }, rates.dt()).unwrap();
        let log = synthesize_log(&truth, &map, &cam, &SensorNoiseSpec::noiseless(0), &rates).unwrap();
        let reference = truth.trajectory().unwrap();
        for mode in FilterMode::ALL {
            let run = run_filter(&log, &map, &cam.offset, &FilterConfig::with_mode(mode), FuseOptions::default())
                .unwrap();
            let errors = position_error(&run.positions(), &reference, Association::Nearest).unwrap();
            let r = rmse(&errors).final_rmse;
            assert!(r < 0.01, "{} {mode}: {r}", map.name);
            let end = truth.samples.last().unwrap().state;
            let last = run.final_state().unwrap();
            assert!((last.x - end.x).hypot(last.y - end.y) < 0.01, "{} {mode}", map.name);
        }
    }
}
