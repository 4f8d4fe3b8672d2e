//! The full synthetic pipeline: trajectory -> line-of-sight-driven range
//! corruption + inertial corruption + pose oracle -> one fusion run per
//! mode -> metrics and artifacts.
//!
//! Everything downstream of the config is seeded, and each noise source
//! draws from its own stream, so runs are reproducible byte for byte and
//! changing one source's settings never shifts another's draws.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::body::{build_mesh, BodyShape, BodyTemplate, N_PAIRS, N_SENSORS};
use crate::fusion::{decode_pose, pose_oracle, FusionError, FusionMode, SessionConfig, Session, StepInput};
use crate::geometry::Vec3;
use crate::imu::{corrupt_with_initial_bias, BiasTrace};
use crate::los::{noisy_distance, pair_los_reports, raw_sigma_of_los, sigma_of_los};

use super::config::ExperimentConfig;
use super::io::{
    write_series_csv, MeasurementRecord, SeriesRow,
};
use super::metrics::{compute_metrics, EstimateSeries, MetricsReport};
use super::trajectory::{generate_trajectory, Trajectory};
use super::HarnessError;

/// Sigma written into frames whose ranging round was dropped: large enough
/// that the filter treats those slots as absent.
pub const DROPOUT_SIGMA_M: f64 = 1e3;

// Stream tags mixed into the seed so each noise source is independent.
const SEED_IMU: u64 = 0x494d_55;
const SEED_RANGE: u64 = 0x5241_4e47;
const SEED_POSE: u64 = 0x504f_5345;

/// A generated scenario: truth plus the replayable measurement stream.
pub struct SynthRun {
    pub truth: Trajectory,
    pub records: Vec<MeasurementRecord>,
    /// True accelerometer bias per sensor per frame.
    pub bias: BiasTrace,
    /// Line-of-sight proportion per pair per frame.
    pub los: Vec<[f64; N_PAIRS]>,
}

/// Generates the scenario with the config's random initial IMU bias.
pub fn synthesize_measurements(
    cfg: &ExperimentConfig,
    template: &BodyTemplate,
) -> Result<SynthRun, HarnessError> {
    synthesize_with_bias(cfg, template, None)
}

/// Same, but pinning the initial accelerometer bias (for convergence
/// studies); `None` draws it from the noise spec.
pub fn synthesize_with_bias(
    cfg: &ExperimentConfig,
    template: &BodyTemplate,
    initial_bias: Option<&[Vec3; N_SENSORS]>,
) -> Result<SynthRun, HarnessError> {
    cfg.validate()?;
    let shape = cfg.shape.resolve(template)?;
    let truth = generate_trajectory(&cfg.trajectory, template, &shape)?;
    let n = truth.len();

    // Inertial corruption over the whole series at once.
    let mut imu_spec = cfg.imu_noise;
    imu_spec.seed = cfg.seed ^ SEED_IMU;
    let drawn_bias;
    let bias0 = match initial_bias {
        Some(b) => b,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(imu_spec.seed.wrapping_add(1));
            let g = rand_distr::Normal::new(0.0, imu_spec.initial_bias_std)
                .expect("bias std must be non-negative");
            drawn_bias = std::array::from_fn(|_| {
                Vec3::new(rng.sample(g), rng.sample(g), rng.sample(g))
            });
            &drawn_bias
        }
    };
    let (accels, bias) = corrupt_with_initial_bias(&truth.accels, bias0, &imu_spec);

    let mut range_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SEED_RANGE);
    let mut pose_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SEED_POSE);

    let mut records = Vec::with_capacity(n);
    let mut los = Vec::with_capacity(n);
    for k in 0..n {
        let mesh = build_mesh(template, &shape, &truth.poses[k], cfg.mesh_resolution)?;
        let reports = pair_los_reports(&mesh, &truth.sensor_pos[k]);
        let dropped = range_rng.gen::<f64>() < cfg.range_dropout_rate;

        let mut l_row = [0.0; N_PAIRS];
        let mut ranges = [0.0; N_PAIRS];
        let mut sigma_d = [0.0; N_PAIRS];
        let mut substitute = [false; N_PAIRS];
        for pair in 0..N_PAIRS {
            let l = reports[pair].proportion;
            l_row[pair] = l;
            let raw_sigma = raw_sigma_of_los(l, &cfg.sigma_model);
            ranges[pair] = noisy_distance(truth.distances[k][pair], raw_sigma, &mut range_rng);
            let decision = sigma_of_los(l, &cfg.sigma_model);
            if dropped {
                sigma_d[pair] = DROPOUT_SIGMA_M;
            } else {
                sigma_d[pair] = decision.sigma_d;
                substitute[pair] = decision.substitute;
            }
        }

        let sample = pose_oracle(&truth.poses[k], &cfg.pose_oracle, &mut pose_rng);
        records.push(MeasurementRecord {
            t: truth.t[k],
            accels: std::array::from_fn(|s| [accels[k][s].x, accels[k][s].y, accels[k][s].z]),
            ranges,
            sigma_d,
            substitute,
            pose_mean: sample.theta6d,
            pose_sigma: sample.sigma,
        });
        los.push(l_row);
    }

    Ok(SynthRun { truth, records, bias, los })
}

/// One filter pass over a measurement stream.
pub struct FusionRun {
    pub states: Vec<DVector<f64>>,
    pub distances: Vec<[f64; N_PAIRS]>,
    pub accels: Vec<[Vec3; N_SENSORS]>,
    pub nis: Vec<f64>,
}

pub fn run_fusion(
    records: &[MeasurementRecord],
    template: &BodyTemplate,
    shape: BodyShape,
    cfg: SessionConfig,
) -> Result<FusionRun, HarnessError> {
    let mode = cfg.mode;
    let mut session = Session::new(template, shape, cfg)?;
    let mut run = FusionRun {
        states: Vec::with_capacity(records.len()),
        distances: Vec::with_capacity(records.len()),
        accels: Vec::with_capacity(records.len()),
        nis: Vec::with_capacity(records.len()),
    };
    for rec in records {
        rec.validate()?;
        let sample = if mode.uses_pose() { Some(rec.pose_sample()?) } else { None };
        let input = StepInput {
            accel: rec.accel_vec3(),
            ranges: mode.uses_uwb().then(|| rec.range_obs()),
            pose: sample.as_ref(),
        };
        let out = session.step(&input)?;
        run.states.push(out.state);
        run.distances.push(out.filtered_distances);
        run.accels.push(out.filtered_accel);
        run.nis.push(out.nis);
    }
    Ok(run)
}

#[derive(Debug, Serialize)]
pub struct ArmSummary {
    pub mode: String,
    pub report: MetricsReport,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    seed: u64,
    arms: &'a [ArmSummary],
}

pub struct ExperimentOutcome {
    pub shape: BodyShape,
    pub arms: Vec<(FusionMode, MetricsReport)>,
}

impl ExperimentOutcome {
    pub fn report_for(&self, mode: FusionMode) -> Option<&MetricsReport> {
        self.arms.iter().find(|(m, _)| *m == mode).map(|(_, r)| r)
    }
}

/// Runs every configured fusion arm over one shared synthetic scenario and
/// scores it. When the config names an output directory, writes
/// `series.csv` and `summary.json` there.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let template = crate::body::default_template();
    let shape = cfg.shape.resolve(template)?;
    let synth = synthesize_measurements(cfg, template)?;

    let mut arms = Vec::with_capacity(cfg.modes.len());
    for &mode in &cfg.modes {
        let est = estimate_series_for(mode, &synth, template, &shape, cfg)?;
        let report = compute_metrics(&synth.truth, &est, template, &shape)?;
        arms.push((mode, report));
    }

    if let Some(dir) = &cfg.out_dir {
        std::fs::create_dir_all(dir)?;
        let mut rows = Vec::new();
        for (mode, report) in &arms {
            for (k, (de, ae)) in report
                .distance_mae_series_m
                .iter()
                .zip(&report.accel_mae_series_m_s2)
                .enumerate()
            {
                rows.push(SeriesRow {
                    mode: mode.label(),
                    frame: k,
                    t: synth.truth.t[k],
                    distance_mae_m: *de,
                    accel_mae_m_s2: *ae,
                });
            }
        }
        write_series_csv(&dir.join("series.csv"), &rows)?;
        let summaries: Vec<ArmSummary> = arms
            .iter()
            .map(|(mode, report)| ArmSummary { mode: mode.label().into(), report: report.clone() })
            .collect();
        let summary = Summary { seed: cfg.seed, arms: &summaries };
        let text = serde_json::to_string_pretty(&summary)
            .map_err(|e| HarnessError::Config(format!("serializing summary: {e}")))?;
        std::fs::write(dir.join("summary.json"), text + "\n")?;
    }

    Ok(ExperimentOutcome { shape, arms })
}

fn estimate_series_for(
    mode: FusionMode,
    synth: &SynthRun,
    template: &BodyTemplate,
    shape: &BodyShape,
    cfg: &ExperimentConfig,
) -> Result<EstimateSeries, HarnessError> {
    if mode == FusionMode::None {
        // Raw measurements as-is: what the hardware alone would report.
        return Ok(EstimateSeries {
            distances: synth.records.iter().map(|r| r.ranges).collect(),
            accels: synth.records.iter().map(|r| r.accel_vec3()).collect(),
            poses: None,
        });
    }
    let run = run_fusion(&synth.records, template, shape.clone(), cfg.session_for(mode))?;
    let poses = if mode.uses_pose() {
        Some(
            synth
                .records
                .iter()
                .map(|r| decode_pose(&r.pose_mean).map_err(FusionError::from))
                .collect::<Result<Vec<_>, _>>()?,
        )
    } else {
        None
    };
    Ok(EstimateSeries { distances: run.distances, accels: run.accels, poses })
}
