//! Batch generation of ground-truthed light field datasets on disk.
//!
//! Each (scene, pose) item becomes one directory holding a light field
//! container, the central-view ground-truth depth as PFM, and a foreground
//! mask PNG; a JSON manifest in the output root indexes everything.
//!
//! Radiance is passed through the container's 8-bit quantization at
//! generation time, so re-loading an item reproduces the stored light
//! field bitwise and downstream stages see exactly what later runs will.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::container::{quantize_unit, write_container};
use crate::io::manifest::{DatasetEntry, DatasetManifest};
use crate::io::pfm::write_pfm;
use crate::lightfield::{CameraRig, LightField};
use crate::synth::raycast::StepPolicy;
use crate::synth::scene::{make_scene, Difficulty, Pose};
use crate::synth::{render_lightfield_with, GroundTruth, RenderOptions};

/// What to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub n_scenes: usize,
    pub difficulty: Difficulty,
    pub poses: Vec<Pose>,
    /// (X, Y) pixels per sub-view.
    pub spatial_res: (usize, usize),
    /// (U, V) sub-views; both odd, ≥ 3.
    pub angular_res: (usize, usize),
    /// Root seed; scene i uses seed `seed + i`.
    pub seed: u64,
    pub policy: StepPolicy,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_scenes == 0 {
            return Err(Error::InvalidInput("dataset needs at least one scene".into()));
        }
        if self.poses.is_empty() {
            return Err(Error::InvalidInput("dataset needs at least one pose".into()));
        }
        Ok(())
    }
}

impl Default for DatasetSpec {
    /// Desk-scale default: 40 scenes × the 7 standard poses at
    /// 15×15×128×128 (kept small enough to generate in minutes).
    fn default() -> Self {
        DatasetSpec {
            n_scenes: 40,
            difficulty: Difficulty::FaceLike,
            poses: Pose::standard_set(),
            spatial_res: (128, 128),
            angular_res: (15, 15),
            seed: 0,
            policy: StepPolicy::Adaptive,
        }
    }
}

/// Snaps every radiance sample onto the container's 8-bit lattice.
fn quantize_lightfield(lf: LightField) -> LightField {
    let (n_u, n_v) = lf.angular_res();
    let (w, h) = lf.spatial_res();
    let samples = lf
        .samples()
        .iter()
        .map(|&s| quantize_unit(s) as f32 / 255.0)
        .collect();
    LightField::from_samples(n_v, n_u, w, h, samples).expect("shape unchanged")
}

fn write_mask(path: &Path, gt: &GroundTruth) -> Result<()> {
    let (w, h) = (gt.depth.width, gt.depth.height);
    let bytes: Vec<u8> = gt.foreground.iter().map(|&f| if f { 255 } else { 0 }).collect();
    let img = image::GrayImage::from_raw(w as u32, h as u32, bytes)
        .expect("buffer length matches mask dimensions");
    img.save(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image(other),
    })
}

fn generate_item(
    spec: &DatasetSpec,
    rig: &CameraRig,
    out_dir: &Path,
    scene_index: usize,
    pose_index: usize,
) -> Result<DatasetEntry> {
    let scene_seed = spec.seed.wrapping_add(scene_index as u64);
    let scene = make_scene(scene_seed, spec.difficulty);
    let pose = spec.poses[pose_index];
    let opts = RenderOptions {
        angular_res: spec.angular_res,
        policy: spec.policy,
    };
    let (lf, gt) = render_lightfield_with(&scene, rig, &pose, spec.spatial_res, &opts)?;
    let lf = quantize_lightfield(lf);

    let rel_dir = PathBuf::from(format!("scene_{scene_index:04}_pose_{pose_index:02}"));
    let item_dir = out_dir.join(&rel_dir);
    write_container(&item_dir, &lf, rig)?;

    let gt_rel = rel_dir.join("gt.pfm");
    let (w, h) = spec.spatial_res;
    write_pfm(out_dir.join(&gt_rel), w, h, &gt.depth.to_f32())?;

    let mask_rel = rel_dir.join("mask.png");
    write_mask(&out_dir.join(&mask_rel), &gt)?;

    let depth_range = gt
        .foreground_depth_range()
        .or_else(|| gt.depth.depth_range())
        .expect("rendered depth map is non-empty");
    Ok(DatasetEntry {
        scene_seed,
        difficulty: spec.difficulty,
        pose,
        container: rel_dir,
        ground_truth: gt_rel,
        mask: mask_rel,
        landmarks: gt.landmarks,
        interocular: gt.interocular(),
        depth_range,
    })
}

/// Renders `n_scenes × poses` items into `out_dir` and writes
/// `manifest.json` there. Per-item failures are recorded in the manifest
/// (flagged `partial`) rather than aborting the run.
pub fn generate_dataset(
    spec: &DatasetSpec,
    rig: &CameraRig,
    out_dir: impl AsRef<Path>,
) -> Result<DatasetManifest> {
    spec.validate()?;
    rig.validate()?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut entries = Vec::with_capacity(spec.n_scenes * spec.poses.len());
    let mut failures = Vec::new();
    for scene_index in 0..spec.n_scenes {
        for pose_index in 0..spec.poses.len() {
            match generate_item(spec, rig, out_dir, scene_index, pose_index) {
                Ok(entry) => entries.push(entry),
                Err(e) => failures.push(format!(
                    "scene {scene_index} pose {pose_index}: {e}"
                )),
            }
        }
    }

    let manifest = DatasetManifest {
        rig: *rig,
        angular_res: spec.angular_res,
        spatial_res: spec.spatial_res,
        seed: spec.seed,
        partial: !failures.is_empty(),
        entries,
        failures,
    };
    manifest.write(out_dir.join("manifest.json"))?;
    Ok(manifest)
}
