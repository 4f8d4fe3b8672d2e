//! Experiment orchestration: synthetic trajectories, the corruption
//! pipeline, fusion runs per mode, metrics, and the file formats that tie
//! the command-line tools together.

pub mod config;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod trajectory;

pub use config::{load_config, ExperimentConfig, ShapeSpec};
pub use experiment::{
    run_experiment, run_fusion, synthesize_measurements, synthesize_with_bias, ExperimentOutcome,
    FusionRun, SynthRun, DROPOUT_SIGMA_M,
};
pub use io::{
    read_keyframes, read_measurements_jsonl, write_keyframes, write_los_csv,
    write_measurements_jsonl, write_series_csv, write_state_csv, write_truth_csv,
    MeasurementRecord,
};
pub use metrics::{compute_metrics, CdfPoint, EstimateSeries, MetricsReport};
pub use trajectory::{
    generate_trajectory, Keyframe, KeyframeTrack, LimbWave, Trajectory, TrajectoryKind,
    TrajectorySpec, SINUSOID_RAMP_S,
};

use crate::body::BodyError;
use crate::fusion::FusionError;
use crate::imu::ImuError;

/// Anything the pipeline can fail with, flattened for the CLI's benefit:
/// configuration and input-format problems on one side, runtime failures
/// on the other.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("bad file format in {path}: {detail}")]
    FileFormat { path: String, detail: String },
    #[error("series length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Imu(#[from] ImuError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
}

impl HarnessError {
    /// True when the failure is the operator's input rather than the run.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            HarnessError::Config(_) | HarnessError::FileFormat { .. } | HarnessError::Body(_)
        )
    }
}
