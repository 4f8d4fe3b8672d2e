//! Experiment configuration: one JSON document that pins down everything a
//! run depends on, so that (config, seed) fully determines every output
//! byte.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use crate::body::{
    fit_shape_estimator, synthesize_fit_dataset, Anthro, BodyShape, BodyTemplate,
};
use crate::fusion::{FusionMode, PoseOracleSpec, SessionConfig};
use crate::imu::ImuNoiseSpec;
use crate::los::LosSigmaConfig;

use super::trajectory::TrajectorySpec;
use super::HarnessError;

/// Body shape, either direct factors or anthropometric measurements that
/// are inverted through a synthetically trained estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeSpec {
    Factors([f64; 4]),
    Anthro(Anthro),
}

impl Default for ShapeSpec {
    fn default() -> Self {
        ShapeSpec::Factors([1.0, 1.0, 1.0, 1.0])
    }
}

/// Training set size and seed for the estimator a [`ShapeSpec::Anthro`]
/// resolution trains on the fly. Fixed so resolution is deterministic.
const ANTHRO_FIT_SAMPLES: usize = 300;
const ANTHRO_FIT_SEED: u64 = 0xA57;
const ANTHRO_FIT_LAMBDA: f64 = 1e-3;

impl ShapeSpec {
    pub fn resolve(&self, template: &BodyTemplate) -> Result<BodyShape, HarnessError> {
        match self {
            ShapeSpec::Factors(f) => Ok(BodyShape::new(*f)?),
            ShapeSpec::Anthro(anthro) => {
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(ANTHRO_FIT_SEED);
                let data = synthesize_fit_dataset(template, ANTHRO_FIT_SAMPLES, &mut rng);
                let est = fit_shape_estimator(&data, ANTHRO_FIT_LAMBDA)?;
                let (shape, clamped) = est.predict_shape(template, anthro);
                if clamped {
                    log::info!("anthro measurements fall outside the population; shape clamped");
                }
                Ok(shape)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trajectory: TrajectorySpec,
    pub shape: ShapeSpec,
    /// Fusion arms to run and score. Mode `none` scores the raw
    /// measurements without a filter.
    pub modes: Vec<FusionMode>,
    /// Filter settings. The `mode` and `dt` fields inside are overridden
    /// per arm and from the trajectory rate respectively.
    pub session: SessionConfig,
    pub imu_noise: ImuNoiseSpec,
    pub sigma_model: LosSigmaConfig,
    pub pose_oracle: PoseOracleSpec,
    /// Capsule tessellation used for line-of-sight checks.
    pub mesh_resolution: usize,
    /// Probability that a frame's whole ranging round is lost; lost frames
    /// keep their slots but carry an uninformative sigma.
    pub range_dropout_rate: f64,
    pub seed: u64,
    /// Where artifacts go; `None` keeps the run in memory.
    pub out_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            trajectory: TrajectorySpec::default(),
            shape: ShapeSpec::default(),
            modes: vec![FusionMode::None, FusionMode::ImuUwb, FusionMode::ImuUwbPose],
            session: SessionConfig::default(),
            imu_noise: ImuNoiseSpec::default(),
            sigma_model: LosSigmaConfig::default(),
            pose_oracle: PoseOracleSpec::default(),
            mesh_resolution: 8,
            range_dropout_rate: 0.0,
            seed: 7,
            out_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.trajectory.validate()?;
        if self.modes.is_empty() {
            return Err(HarnessError::Config("at least one fusion mode is required".into()));
        }
        if self.mesh_resolution < 3 {
            return Err(HarnessError::Config(format!(
                "mesh resolution must be at least 3, got {}",
                self.mesh_resolution
            )));
        }
        if !(0.0..1.0).contains(&self.range_dropout_rate) {
            return Err(HarnessError::Config(format!(
                "dropout rate must be in [0, 1), got {}",
                self.range_dropout_rate
            )));
        }
        Ok(())
    }

    /// Session settings for one arm: the configured template with the
    /// arm's mode and the trajectory's frame period.
    pub fn session_for(&self, mode: crate::fusion::FusionMode) -> SessionConfig {
        SessionConfig { mode, dt: self.trajectory.dt(), ..self.session }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::FileFormat {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    let cfg: ExperimentConfig =
        serde_json::from_str(&text).map_err(|e| HarnessError::FileFormat {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
    cfg.validate()?;
    Ok(cfg)
}
