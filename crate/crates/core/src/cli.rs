//! Command-line surface. `run` is the whole program minus process exit, so
//! tests can drive it with argument vectors and temp directories.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 runtime error.

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::ffi::OsString;
use std::path::PathBuf;
use std::str::FromStr;

use crate::body::{default_template, fit_shape_estimator, measure_anthro, synthesize_fit_dataset};
use crate::fusion::FusionMode;
use crate::geometry::Vec3;
use crate::harness::{
    load_config, read_measurements_jsonl, run_experiment, run_fusion, synthesize_measurements,
    write_los_csv, write_measurements_jsonl, write_state_csv, write_truth_csv, ExperimentConfig,
    HarnessError,
};
use crate::uwb::{
    ranging_distances, simulate_ranging, single_sided_estimate, ClockModel, RangingConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(
    name = "bodyfuse",
    version,
    about = "Synthetic body-worn sensor fusion: generate, corrupt, fuse, score"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Experiment configuration (JSON); defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where artifacts are written.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Restricts the run to one fusion mode
    /// (none, imu+uwb, imu+pose, imu+uwb+pose).
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Report format for commands that print a report.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: OutputFormat,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate a trajectory and its corrupted measurement stream.
    Synth,
    /// Run one fusion session over a measurement file and dump the state.
    Fuse {
        /// Measurement stream (JSON lines) to replay.
        #[arg(long)]
        measurements: PathBuf,
    },
    /// Full pipeline: synthesize, fuse every configured mode, score.
    Experiment,
    /// Train the anthropometric shape estimator and report held-out error.
    Shapefit {
        /// Synthetic bodies to draw; split 80/20 into train/test.
        #[arg(long, default_value_t = 500)]
        samples: usize,
    },
    /// Export per-pair line-of-sight proportions over the trajectory.
    LosProfile,
    /// Simulate two-node ranging under clock drift and report the error.
    Ranging {
        /// Relative clock drift between the two nodes, ppm.
        #[arg(long, default_value_t = 40.0)]
        drift_ppm: f64,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        /// True distance, metres.
        #[arg(long, default_value_t = 5.0)]
        distance: f64,
        /// Responder wait between receptions and replies, seconds.
        #[arg(long, default_value_t = 300e-6)]
        reply_delay: f64,
        /// Timestamp jitter std, picoseconds.
        #[arg(long, default_value_t = 0.0)]
        jitter_ps: f64,
    },
}

#[derive(Debug)]
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_config() {
            Failure::Config(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

impl From<crate::fusion::FusionError> for Failure {
    fn from(e: crate::fusion::FusionError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

/// Parses and executes. Never exits the process; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    0
                }
                _ => {
                    eprint!("{e}");
                    2
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            2
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            3
        }
    }
}

fn effective_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = Some(dir.clone());
    }
    if cfg.out_dir.is_none() {
        cfg.out_dir = Some(PathBuf::from("out"));
    }
    if let Some(mode) = &cli.mode {
        let mode = FusionMode::from_str(mode).map_err(Failure::Config)?;
        cfg.modes = vec![mode];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf, Failure> {
    let dir = cfg.out_dir.clone().expect("effective_config always sets out_dir");
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Synth => {
            let cfg = effective_config(&cli)?;
            let dir = out_dir(&cfg)?;
            let synth = synthesize_measurements(&cfg, default_template())?;
            write_measurements_jsonl(&dir.join("measurements.jsonl"), &synth.records)?;
            write_truth_csv(&dir.join("truth.csv"), &synth.truth)?;
            println!(
                "wrote {} frames to {}",
                synth.records.len(),
                dir.join("measurements.jsonl").display()
            );
            Ok(())
        }
        Cmd::Fuse { ref measurements } => {
            let cfg = effective_config(&cli)?;
            let dir = out_dir(&cfg)?;
            let mode = match cfg.modes.as_slice() {
                [one] => *one,
                _ => cfg.session.mode,
            };
            if mode == FusionMode::None {
                return Err(Failure::Config(
                    "mode 'none' runs no filter; pick a fusing mode".into(),
                ));
            }
            let records = read_measurements_jsonl(measurements)?;
            let template = default_template();
            let shape = cfg.shape.resolve(template)?;
            let run = run_fusion(&records, template, shape, cfg.session_for(mode))?;
            write_state_csv(&dir.join("state.csv"), &run.states, &run.distances)?;
            println!("wrote {} frames to {}", run.states.len(), dir.join("state.csv").display());
            Ok(())
        }
        Cmd::Experiment => {
            let cfg = effective_config(&cli)?;
            let dir = out_dir(&cfg)?;
            let outcome = run_experiment(&cfg)?;
            for (mode, report) in &outcome.arms {
                println!(
                    "{}: distance MAE {:.4} m, accel MAE {:.4} m/s^2",
                    mode.label(),
                    report.distance_mae_m,
                    report.accel_mae_m_s2
                );
            }
            println!("artifacts in {}", dir.display());
            Ok(())
        }
        Cmd::Shapefit { samples } => {
            let cfg = effective_config(&cli)?;
            let report = shapefit_report(samples, cfg.seed)?;
            print_report(&report, cli.format);
            Ok(())
        }
        Cmd::LosProfile => {
            let cfg = effective_config(&cli)?;
            let dir = out_dir(&cfg)?;
            let synth = synthesize_measurements(&cfg, default_template())?;
            let sigma: Vec<[f64; 15]> = synth.records.iter().map(|r| r.sigma_d).collect();
            let sub: Vec<[bool; 15]> = synth.records.iter().map(|r| r.substitute).collect();
            match cli.format {
                OutputFormat::Csv => {
                    write_los_csv(&dir.join("los.csv"), &synth.truth.t, &synth.los, &sigma, &sub)?;
                    println!("wrote {}", dir.join("los.csv").display());
                }
                OutputFormat::Json => {
                    #[derive(Serialize)]
                    struct Row<'a> {
                        t: f64,
                        los: &'a [f64; 15],
                        sigma: &'a [f64; 15],
                        substitute: &'a [bool; 15],
                    }
                    let rows: Vec<Row> = (0..synth.truth.len())
                        .map(|k| Row {
                            t: synth.truth.t[k],
                            los: &synth.los[k],
                            sigma: &sigma[k],
                            substitute: &sub[k],
                        })
                        .collect();
                    let text = serde_json::to_string_pretty(&rows)
                        .map_err(|e| Failure::Runtime(e.to_string()))?;
                    std::fs::write(dir.join("los.json"), text + "\n")?;
                    println!("wrote {}", dir.join("los.json").display());
                }
            }
            Ok(())
        }
        Cmd::Ranging { drift_ppm, trials, distance, reply_delay, jitter_ps } => {
            let cfg = effective_config(&cli)?;
            let report =
                ranging_report(drift_ppm, trials, distance, reply_delay, jitter_ps, cfg.seed)?;
            print_report(&report, cli.format);
            Ok(())
        }
    }
}

#[derive(Debug, Serialize)]
struct ShapefitReport {
    samples: usize,
    train_samples: usize,
    test_samples: usize,
    factor_rmse: f64,
    height_mae_m: f64,
    weight_mae_kg: f64,
}

impl CsvReport for ShapefitReport {
    fn csv(&self) -> (String, String) {
        (
            "samples,train_samples,test_samples,factor_rmse,height_mae_m,weight_mae_kg".into(),
            format!(
                "{},{},{},{},{},{}",
                self.samples,
                self.train_samples,
                self.test_samples,
                self.factor_rmse,
                self.height_mae_m,
                self.weight_mae_kg
            ),
        )
    }
}

fn shapefit_report(samples: usize, seed: u64) -> Result<ShapefitReport, Failure> {
    if samples < 63 {
        return Err(Failure::Config(format!(
            "need at least 63 samples so the training split has 50, got {samples}"
        )));
    }
    let template = default_template();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = synthesize_fit_dataset(template, samples, &mut rng);
    let split = (samples * 4) / 5;
    let (train, test) = data.split_at(split);
    let est = fit_shape_estimator(train, 1e-3).map_err(HarnessError::from)?;

    let mut sq_sum = 0.0;
    let mut h_sum = 0.0;
    let mut w_sum = 0.0;
    for (anthro, truth) in test {
        let (shape, _) = est.predict_shape(template, anthro);
        for (p, t) in shape.factors().iter().zip(truth.factors()) {
            sq_sum += (p - t) * (p - t);
        }
        let rebuilt = measure_anthro(template, &shape);
        h_sum += (rebuilt.height_m - anthro.height_m).abs();
        w_sum += (rebuilt.weight_kg - anthro.weight_kg).abs();
    }
    let n_test = test.len() as f64;
    Ok(ShapefitReport {
        samples,
        train_samples: train.len(),
        test_samples: test.len(),
        factor_rmse: (sq_sum / (4.0 * n_test)).sqrt(),
        height_mae_m: h_sum / n_test,
        weight_mae_kg: w_sum / n_test,
    })
}

#[derive(Debug, Serialize)]
struct RangingReport {
    drift_ppm: f64,
    trials: usize,
    distance_m: f64,
    reply_delay_s: f64,
    mean_abs_error_m: f64,
    max_abs_error_m: f64,
    single_sided_mean_abs_error_m: f64,
}

impl CsvReport for RangingReport {
    fn csv(&self) -> (String, String) {
        (
            "drift_ppm,trials,distance_m,reply_delay_s,mean_abs_error_m,max_abs_error_m,single_sided_mean_abs_error_m"
                .into(),
            format!(
                "{},{},{},{},{},{},{}",
                self.drift_ppm,
                self.trials,
                self.distance_m,
                self.reply_delay_s,
                self.mean_abs_error_m,
                self.max_abs_error_m,
                self.single_sided_mean_abs_error_m
            ),
        )
    }
}

fn ranging_report(
    drift_ppm: f64,
    trials: usize,
    distance: f64,
    reply_delay: f64,
    jitter_ps: f64,
    seed: u64,
) -> Result<RangingReport, Failure> {
    if trials == 0 {
        return Err(Failure::Config("trials must be positive".into()));
    }
    if !(distance > 0.0) {
        return Err(Failure::Config(format!("distance must be positive, got {distance}")));
    }
    let positions = vec![Vec3::zeros(), Vec3::new(distance, 0.0, 0.0)];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter_s = jitter_ps * 1e-12;
    let mut abs_sum = 0.0;
    let mut abs_max: f64 = 0.0;
    let mut ss_sum = 0.0;
    for trial in 0..trials {
        let clocks = vec![
            ClockModel::new(drift_ppm / 2.0, rng.gen_range(-0.5..0.5), jitter_s)
                .map_err(|e| Failure::Config(e.to_string()))?,
            ClockModel::new(-drift_ppm / 2.0, rng.gen_range(-0.5..0.5), jitter_s)
                .map_err(|e| Failure::Config(e.to_string()))?,
        ];
        let rcfg = RangingConfig { reply_delay_s: reply_delay, seed: seed.wrapping_add(trial as u64) };
        let d = ranging_distances(&positions, &clocks, &rcfg)
            .map_err(|e| Failure::Runtime(e.to_string()))?[0];
        let err = (d - distance).abs();
        abs_sum += err;
        abs_max = abs_max.max(err);
        let timing = simulate_ranging(&positions, &clocks, &rcfg)[0];
        ss_sum += (single_sided_estimate(&timing) - distance).abs();
    }
    Ok(RangingReport {
        drift_ppm,
        trials,
        distance_m: distance,
        reply_delay_s: reply_delay,
        mean_abs_error_m: abs_sum / trials as f64,
        max_abs_error_m: abs_max,
        single_sided_mean_abs_error_m: ss_sum / trials as f64,
    })
}

trait CsvReport: Serialize {
    fn csv(&self) -> (String, String);
}

fn print_report<R: CsvReport>(report: &R, format: OutputFormat) {
    match format {
        OutputFormat::Csv => {
            let (header, row) = report.csv();
            println!("{header}");
            println!("{row}");
        }
        OutputFormat::Json => {
            println!("{}", serde_json::to_string_pretty(report).expect("report serializes"));
        }
    }
}
