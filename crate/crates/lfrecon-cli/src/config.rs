//! The pipeline configuration file: one JSON document covering every stage,
//! loadable by any subcommand, with individual flags taking precedence.

use std::path::Path;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use lfrecon_core::error::Result;
use lfrecon_core::io::jsonfmt;
use lfrecon_core::metrics::MetricOptions;
use lfrecon_core::oracle::SlopeSearchSpec;
use lfrecon_core::synth::{Difficulty, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Analytic variance-minimizing line search on each EPI.
    Oracle,
    /// Trained curve-regression networks.
    Network,
}

/// Which pose set to render for each scene.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PoseSet {
    /// Frontal, ±15° pitch, ±15° and ±30° yaw.
    Standard,
    /// Frontal only.
    Frontal,
}

impl PoseSet {
    pub fn poses(self) -> Vec<Pose> {
        match self {
            PoseSet::Standard => Pose::standard_set(),
            PoseSet::Frontal => vec![Pose::frontal()],
        }
    }
}

/// CLI mirror of the scene difficulty tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DifficultyArg {
    Facelike,
    Flatplane,
    Tiltedplane,
}

impl From<DifficultyArg> for Difficulty {
    fn from(d: DifficultyArg) -> Difficulty {
        match d {
            DifficultyArg::Facelike => Difficulty::FaceLike,
            DifficultyArg::Flatplane => Difficulty::FlatPlane,
            DifficultyArg::Tiltedplane => Difficulty::TiltedPlane,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub scenes: usize,
    pub poses: PoseSet,
    pub difficulty: Difficulty,
    /// (X, Y) pixels per sub-view.
    pub res: (usize, usize),
    /// (U, V) sub-views.
    pub angular: (usize, usize),
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            scenes: 4,
            poses: PoseSet::Standard,
            difficulty: Difficulty::FaceLike,
            res: (64, 64),
            angular: (15, 15),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub base_lr: f64,
    pub lr_drop_factor: f64,
    pub drop_milestones: Vec<usize>,
    pub momentum: f64,
    pub batch: usize,
    pub epochs: usize,
    pub max_iters: Option<usize>,
    /// Width of the first fully connected layer.
    pub fc_hidden: usize,
    /// Dataset items (from the end) excluded from training.
    pub hold_out: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            base_lr: 3e-4,
            lr_drop_factor: 10.0,
            drop_milestones: Vec::new(),
            momentum: 0.9,
            batch: 16,
            epochs: 1,
            max_iters: None,
            fc_hidden: 4096,
            hold_out: 0,
        }
    }
}

impl TrainSection {
    pub fn to_core(&self, seed: u64) -> lfrecon_core::net::TrainConfig {
        lfrecon_core::net::TrainConfig {
            base_lr: self.base_lr,
            lr_drop_factor: self.lr_drop_factor,
            drop_milestones: self.drop_milestones.clone(),
            momentum: self.momentum,
            batch: self.batch,
            epochs: self.epochs,
            seed,
            max_iters: self.max_iters,
        }
    }
}

/// CLI mirror of the slope-search options, so partial overrides work and
/// typos are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSection {
    pub disparity_min: f64,
    pub disparity_max: f64,
    pub coarse_steps: usize,
    pub refine: bool,
}

impl Default for SearchSection {
    fn default() -> Self {
        let s = SlopeSearchSpec::default();
        SearchSection {
            disparity_min: s.disparity_min,
            disparity_max: s.disparity_max,
            coarse_steps: s.coarse_steps,
            refine: s.refine,
        }
    }
}

impl SearchSection {
    pub fn to_spec(&self) -> SlopeSearchSpec {
        SlopeSearchSpec {
            disparity_min: self.disparity_min,
            disparity_max: self.disparity_max,
            coarse_steps: self.coarse_steps,
            refine: self.refine,
        }
    }
}

/// CLI mirror of the metric options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsSection {
    pub align: bool,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let m = MetricOptions::default();
        MetricsSection {
            align: m.align,
            icp_max_iters: m.icp_max_iters,
            icp_tol: m.icp_tol,
        }
    }
}

impl MetricsSection {
    pub fn to_options(&self) -> MetricOptions {
        MetricOptions {
            align: self.align,
            icp_max_iters: self.icp_max_iters,
            icp_tol: self.icp_tol,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridfitSection {
    pub lambda: f64,
    pub tolerance: f64,
    pub max_iters: usize,
    /// Node counts (Gx, Gy); defaults to one node per pixel column/row.
    pub grid: Option<(usize, usize)>,
}

impl Default for GridfitSection {
    fn default() -> Self {
        GridfitSection {
            lambda: 1e-3,
            tolerance: 1e-10,
            max_iters: 6000,
            grid: None,
        }
    }
}

impl GridfitSection {
    pub fn to_spec(&self, fallback_res: (usize, usize)) -> lfrecon_core::fusion::GridFitSpec {
        let (gx, gy) = self.grid.unwrap_or(fallback_res);
        lfrecon_core::fusion::GridFitSpec {
            grid_res: (gx, gy),
            lambda: self.lambda,
            tolerance: self.tolerance,
            max_iters: self.max_iters,
        }
    }
}

/// Everything a full pipeline run needs. All fields have defaults, so `{}`
/// is a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub estimator: Estimator,
    pub synth: SynthSection,
    pub search: SearchSection,
    pub train: TrainSection,
    pub gridfit: GridfitSection,
    pub metrics: MetricsSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            estimator: Estimator::Oracle,
            synth: SynthSection::default(),
            search: SearchSection::default(),
            train: TrainSection::default(),
            gridfit: GridfitSection::default(),
            metrics: MetricsSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = jsonfmt::read_file(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads the file when given, otherwise the defaults.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Self::load(p),
            None => Ok(Self::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        use lfrecon_core::error::Error;
        self.search.to_spec().validate()?;
        self.to_train_config().validate()?;
        self.gridfit.to_spec(self.synth.res).validate()?;
        let (u, v) = self.synth.angular;
        if u < 3 || v < 3 || u % 2 == 0 || v % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "synth.angular must be odd and ≥ 3 in both directions, got ({u}, {v})"
            )));
        }
        if self.synth.scenes == 0 {
            return Err(Error::InvalidInput("synth.scenes must be ≥ 1".into()));
        }
        Ok(())
    }

    pub fn to_train_config(&self) -> lfrecon_core::net::TrainConfig {
        self.train.to_core(self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_a_valid_config() {
        let cfg: PipelineConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_are_rejected_with_field_name() {
        let err = serde_json::from_str::<PipelineConfig>(r#"{"serch": {}}"#).unwrap_err();
        assert!(err.to_string().contains("serch"), "{err}");
    }

    #[test]
    fn nested_overrides_parse() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"seed": 7, "estimator": "network",
                "synth": {"scenes": 2, "poses": "frontal", "res": [32, 32], "angular": [3, 3]},
                "train": {"batch": 4, "max_iters": 10},
                "gridfit": {"lambda": 0.01}}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.estimator, Estimator::Network);
        assert_eq!(cfg.synth.scenes, 2);
        assert_eq!(cfg.synth.res, (32, 32));
        assert_eq!(cfg.train.batch, 4);
        assert_eq!(cfg.train.max_iters, Some(10));
        assert_eq!(cfg.gridfit.lambda, 0.01);
        // Untouched sections keep defaults.
        assert_eq!(cfg.search, SearchSection::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn partial_section_overrides_keep_other_fields() {
        let cfg: PipelineConfig =
            serde_json::from_str(r#"{"search": {"coarse_steps": 128}}"#).unwrap();
        assert_eq!(cfg.search.coarse_steps, 128);
        assert_eq!(cfg.search.refine, SearchSection::default().refine);
        let err = serde_json::from_str::<PipelineConfig>(r#"{"search": {"stepz": 1}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("stepz"), "{err}");
    }
}
