//! Dataset and pipeline-run manifests (JSON sidecars that make every
//! artifact set self-describing and reproducible).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::io::jsonfmt;
use crate::lightfield::CameraRig;
use crate::rng::fnv1a64;
use crate::synth::{Difficulty, Pose};

/// One rendered item of a dataset. Paths are relative to the manifest's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub scene_seed: u64,
    pub difficulty: Difficulty,
    pub pose: Pose,
    /// Light field container directory.
    pub container: PathBuf,
    /// Ground-truth depth PFM (central view).
    pub ground_truth: PathBuf,
    /// Foreground mask PNG (255 = foreground).
    pub mask: PathBuf,
    /// Two landmark points on the surface, camera frame, mm.
    pub landmarks: [[f64; 3]; 2],
    /// Landmark separation, mm.
    pub interocular: f64,
    /// (min, max) ground-truth depth over foreground, mm.
    pub depth_range: (f64, f64),
}

impl DatasetEntry {
    pub fn container_path(&self, manifest_dir: &Path) -> PathBuf {
        manifest_dir.join(&self.container)
    }

    pub fn ground_truth_path(&self, manifest_dir: &Path) -> PathBuf {
        manifest_dir.join(&self.ground_truth)
    }

    pub fn mask_path(&self, manifest_dir: &Path) -> PathBuf {
        manifest_dir.join(&self.mask)
    }
}

/// Index of a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub rig: CameraRig,
    pub angular_res: (usize, usize),
    pub spatial_res: (usize, usize),
    pub seed: u64,
    pub entries: Vec<DatasetEntry>,
    /// Per-item failure descriptions; generation continues past them.
    pub failures: Vec<String>,
    /// True when any item failed, i.e. `entries` is incomplete.
    pub partial: bool,
}

impl DatasetManifest {
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonfmt::write_file(path, self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        jsonfmt::read_file(path)
    }
}

/// Hash of a configuration's canonical JSON form: changes iff a
/// semantically meaningful field changes.
pub fn config_hash<T: Serialize>(cfg: &T) -> Result<String> {
    Ok(format!("{:016x}", fnv1a64(jsonfmt::to_string(cfg)?.as_bytes())))
}

/// Record of one pipeline stage's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub artifacts: Vec<PathBuf>,
}

/// Reproducibility record written next to pipeline outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Toolkit version that produced the artifacts.
    pub version: String,
    /// [`config_hash`] of the full pipeline configuration.
    pub config_hash: String,
    pub seed: u64,
    pub stages: Vec<StageRecord>,
}

impl RunManifest {
    pub fn new(config_hash: String, seed: u64) -> Self {
        RunManifest {
            version: crate::VERSION.to_string(),
            config_hash,
            seed,
            stages: Vec::new(),
        }
    }

    pub fn record_stage(&mut self, stage: &str, artifacts: Vec<PathBuf>) {
        self.stages.push(StageRecord {
            stage: stage.to_string(),
            artifacts,
        });
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        jsonfmt::write_file(path, self)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        jsonfmt::read_file(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = DatasetManifest {
            rig: CameraRig::default_for_res(64, 64),
            angular_res: (15, 15),
            spatial_res: (64, 64),
            seed: 99,
            entries: vec![DatasetEntry {
                scene_seed: 7,
                difficulty: Difficulty::FaceLike,
                pose: Pose::frontal(),
                container: PathBuf::from("scene_0007_pose_00"),
                ground_truth: PathBuf::from("scene_0007_pose_00/gt.pfm"),
                mask: PathBuf::from("scene_0007_pose_00/mask.png"),
                landmarks: [[-25.0, -5.0, 280.0], [25.0, -5.0, 280.5]],
                interocular: 50.0025,
                depth_range: (250.0, 380.0),
            }],
            failures: vec![],
            partial: false,
        };
        let path = dir.path().join("manifest.json");
        manifest.write(&path).unwrap();
        let back = DatasetManifest::read(&path).unwrap();
        assert_eq!(manifest, back);
        assert_eq!(
            back.entries[0].container_path(dir.path()),
            dir.path().join("scene_0007_pose_00")
        );
    }

    #[derive(Serialize)]
    struct Cfg {
        a: f64,
        b: u32,
    }

    #[test]
    fn config_hash_changes_iff_fields_change() {
        let h1 = config_hash(&Cfg { a: 1.0, b: 2 }).unwrap();
        let h2 = config_hash(&Cfg { a: 1.0, b: 2 }).unwrap();
        let h3 = config_hash(&Cfg { a: 1.0 + 1e-12, b: 2 }).unwrap();
        let h4 = config_hash(&Cfg { a: 1.0, b: 3 }).unwrap();
        assert_eq!(h1, h2);
        assert_ne!(h1, h3);
        assert_ne!(h1, h4);
        assert_eq!(h1.len(), 16);
    }

    #[test]
    fn run_manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut run = RunManifest::new("deadbeef00000000".into(), 5);
        run.record_stage("synth", vec![PathBuf::from("data/manifest.json")]);
        let path = dir.path().join("run.json");
        run.write(&path).unwrap();
        assert_eq!(RunManifest::read(&path).unwrap(), run);
    }
}
