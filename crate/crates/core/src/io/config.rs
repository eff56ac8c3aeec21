//! JSON experiment configuration with a strict schema.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::boundary::ShearRule;
use crate::decomposition::InterfaceOptions;
use crate::elasticity::ScaleSet;
use crate::evaluation::{AdaptiveStudySettings, Method};
use crate::io::fixture::FiberFixture;
use crate::material::{EngineeringConstants, MaterialFitOptions};
use crate::netcore::Topology;
use crate::optimizer::BfgsOptions;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Homogeneous,
    SingleInclusion,
    Voxel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Regular,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub mode: SamplingMode,
    /// Points per side of the regular training grid, or the square root of
    /// the total budget in adaptive mode.
    pub n_side: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptive: Option<AdaptiveStudySettings>,
}

/// Greyscale image preprocessing before the material fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePipeline {
    #[serde(default = "default_sigma")]
    pub sigma_px: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

fn default_sigma() -> f64 {
    1.0
}
fn default_threshold() -> f64 {
    0.5
}

impl Default for ImagePipeline {
    fn default() -> Self {
        ImagePipeline {
            sigma_px: default_sigma(),
            threshold: default_threshold(),
        }
    }
}

/// Source of the Lamé fields. Bright voxels (value 1 after binarization)
/// take the inclusion constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialConfig {
    Constant {
        phase: EngineeringConstants,
    },
    Tanh {
        inclusion: EngineeringConstants,
        matrix: EngineeringConstants,
        delta: f64,
        radius: f64,
    },
    Image {
        path: PathBuf,
        inclusion: EngineeringConstants,
        matrix: EngineeringConstants,
        #[serde(default)]
        pipeline: ImagePipeline,
        fit: MaterialFitOptions,
    },
    Fixture {
        fixture: FiberFixture,
        inclusion: EngineeringConstants,
        matrix: EngineeringConstants,
        #[serde(default)]
        pipeline: ImagePipeline,
        fit: MaterialFitOptions,
    },
    /// A material network written by `material-fit`.
    Snapshot {
        path: PathBuf,
        inclusion: EngineeringConstants,
        matrix: EngineeringConstants,
    },
}

impl MaterialConfig {
    /// Every phase's engineering constants.
    pub fn phases(&self) -> Vec<EngineeringConstants> {
        match self {
            MaterialConfig::Constant { phase } => vec![*phase],
            MaterialConfig::Tanh { inclusion, matrix, .. }
            | MaterialConfig::Image { inclusion, matrix, .. }
            | MaterialConfig::Fixture { inclusion, matrix, .. }
            | MaterialConfig::Snapshot { inclusion, matrix, .. } => vec![*inclusion, *matrix],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceStudyConfig {
    pub methods: Vec<Method>,
    pub sides: Vec<usize>,
    pub cpinn_split: (usize, usize),
    pub param_budget: usize,
    pub adaptive: AdaptiveStudySettings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitStudyConfig {
    pub splits: Vec<(usize, usize)>,
    pub n_side: usize,
    pub param_budget: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub convergence: Option<ConvergenceStudyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitStudyConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    /// Side of the square cell (mm).
    pub length: f64,
    /// Traction on the right edge (MPa).
    pub sigma_bar: f64,
    #[serde(default)]
    pub shear_rule: ShearRule,
    /// Topology of every subnet.
    pub topology: Topology,
    pub split: (usize, usize),
    #[serde(default)]
    pub interface: InterfaceOptions,
    pub sampling: SamplingConfig,
    pub optimizer: BfgsOptions,
    pub material: MaterialConfig,
    /// Defaults derived from the load and the phases when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scales: Option<ScaleSet>,
    pub eval_side: usize,
    pub output_dir: PathBuf,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub study: Option<StudyConfig>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.length > 0.0) {
            return bad(format!("length must be positive, got {}", self.length));
        }
        if self.split.0 == 0 || self.split.1 == 0 {
            return bad("split must be at least 1x1".into());
        }
        if self.sampling.n_side < 2 || self.eval_side < 2 {
            return bad("grids need at least 2 points per side".into());
        }
        if self.sampling.mode == SamplingMode::Adaptive && self.sampling.adaptive.is_none() {
            return bad("adaptive sampling needs an `adaptive` block".into());
        }
        self.topology.validate()?;
        self.optimizer.validate()?;
        for p in self.material.phases() {
            p.validate()?;
        }
        let consistent = matches!(
            (self.problem, &self.material),
            (ProblemKind::Homogeneous, MaterialConfig::Constant { .. })
                | (ProblemKind::SingleInclusion, MaterialConfig::Tanh { .. })
                | (ProblemKind::Voxel, MaterialConfig::Image { .. })
                | (ProblemKind::Voxel, MaterialConfig::Fixture { .. })
                | (ProblemKind::Voxel, MaterialConfig::Snapshot { .. })
        );
        if !consistent {
            return bad(format!("material kind does not match problem {:?}", self.problem));
        }
        if let Some(s) = &self.scales {
            s.validate()?;
        }
        Ok(())
    }
}
