//! One function per processing stage. The standalone subcommands and the
//! pipeline driver both call these, so behaviour cannot drift between the
//! two entry points.

use std::path::{Path, PathBuf};

use lfrecon_core::error::Error;
use lfrecon_core::fusion::{fuse, depthmap_to_pointcloud, SurfaceGrid};
use lfrecon_core::io::container::read_container;
use lfrecon_core::io::manifest::{DatasetEntry, DatasetManifest};
use lfrecon_core::io::pfm::write_pfm;
use lfrecon_core::io::ply::{read_ply_vertices, write_surface_ply};
use lfrecon_core::io::jsonfmt;
use lfrecon_core::lightfield::{CameraRig, DepthMap, Orientation};
use lfrecon_core::metrics::{crop_face_region, error_stats, nme, EvalReport, MetricOptions};
use lfrecon_core::net::{infer_depthmaps, train, FaceLfNet, NetConfig, TrainConfig, TrainingSet};
use lfrecon_core::oracle::{estimate_depthmap, SlopeSearchSpec};
use lfrecon_core::rng::fnv1a64;
use lfrecon_core::synth::{generate_dataset, DatasetSpec, StepPolicy};
use serde::Serialize;

use crate::config::{GridfitSection, SynthSection};
use crate::error::{CliError, CliResult};
use crate::meta::{pair_paths, PairMeta};
use crate::util::{apply_mask, read_depthmap_pfm, write_depthmap_pfm};

/// Creates the parent directory of a file that is about to be written.
pub fn ensure_parent(path: &Path) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    Ok(())
}

/// Returns a required input path, or a missing-artifact error naming it.
pub fn require(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::MissingArtifact(path.to_path_buf()).into())
    }
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn run_synth(section: &SynthSection, seed: u64, out_dir: &Path) -> CliResult<DatasetManifest> {
    let spec = DatasetSpec {
        n_scenes: section.scenes,
        difficulty: section.difficulty,
        poses: section.poses.poses(),
        spatial_res: section.res,
        angular_res: section.angular,
        seed,
        policy: StepPolicy::Adaptive,
    };
    let rig = CameraRig::default_for_res(section.res.0, section.res.1);
    let manifest = generate_dataset(&spec, &rig, out_dir)?;
    if manifest.partial {
        // The partial manifest is on disk for inspection, but the run as a
        // whole did not do what was asked.
        return Err(CliError::internal(format!(
            "dataset generation incomplete: {} of {} items failed (first: {})",
            manifest.failures.len(),
            manifest.entries.len() + manifest.failures.len(),
            manifest.failures.first().map(String::as_str).unwrap_or("?"),
        )));
    }
    Ok(manifest)
}

// ---------------------------------------------------------------------------
// depth-map pairs (epi / infer)
// ---------------------------------------------------------------------------

/// Optional linkage recorded in a depth-map pair's meta sidecar.
#[derive(Debug, Clone, Default)]
pub struct PairExtras {
    pub source: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub landmarks: Option<[[f64; 3]; 2]>,
    pub interocular: Option<f64>,
    pub depth_range: Option<(f64, f64)>,
}

impl PairExtras {
    /// Extras for a dataset item, with its paths re-based so they stay
    /// valid relative to the meta file's own directory.
    pub fn from_entry(entry: &DatasetEntry, rel_base: &Path) -> Self {
        PairExtras {
            source: Some(rel_base.join(&entry.container)),
            ground_truth: Some(rel_base.join(&entry.ground_truth)),
            mask: Some(rel_base.join(&entry.mask)),
            landmarks: Some(entry.landmarks),
            interocular: Some(entry.interocular),
            depth_range: Some(entry.depth_range),
        }
    }
}

fn write_pair(
    dm_h: &DepthMap,
    dm_v: &DepthMap,
    rig: &CameraRig,
    estimator: &str,
    extras: PairExtras,
    out_prefix: &Path,
) -> CliResult<(PathBuf, PathBuf, PathBuf)> {
    let (h_path, v_path, meta_path) = pair_paths(out_prefix);
    ensure_parent(&h_path)?;
    write_depthmap_pfm(&h_path, dm_h)?;
    write_depthmap_pfm(&v_path, dm_v)?;
    PairMeta {
        rig: *rig,
        spatial_res: (dm_h.width, dm_h.height),
        estimator: estimator.to_string(),
        source: extras.source,
        ground_truth: extras.ground_truth,
        mask: extras.mask,
        landmarks: extras.landmarks,
        interocular: extras.interocular,
        depth_range: extras.depth_range,
    }
    .write(&meta_path)?;
    Ok((h_path, v_path, meta_path))
}

/// Analytic line-search depth estimation on one container.
pub fn run_epi(
    container: &Path,
    spec: &SlopeSearchSpec,
    out_prefix: &Path,
    extras: PairExtras,
) -> CliResult<(PathBuf, PathBuf, PathBuf)> {
    require(container)?;
    let (lf, rig) = read_container(container)?;
    let (dm_h, dm_v) = estimate_depthmap(&lf, spec, &rig)?;
    write_pair(&dm_h, &dm_v, &rig, "oracle", extras, out_prefix)
}

/// Network depth estimation on one container with pre-loaded models.
pub fn run_infer(
    container: &Path,
    h_model: &FaceLfNet<f32>,
    v_model: &FaceLfNet<f32>,
    out_prefix: &Path,
    extras: PairExtras,
) -> CliResult<(PathBuf, PathBuf, PathBuf)> {
    require(container)?;
    let (lf, rig) = read_container(container)?;
    let (dm_h, dm_v) = infer_depthmaps(h_model, v_model, &lf, &rig)?;
    write_pair(&dm_h, &dm_v, &rig, "network", extras, out_prefix)
}

pub fn load_model(path: &Path) -> CliResult<FaceLfNet<f32>> {
    require(path)?;
    Ok(FaceLfNet::<f32>::load(path)?)
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

pub struct TrainOutcome {
    pub samples: usize,
    pub iterations: usize,
    pub first_loss: f64,
    pub final_loss: f64,
    pub final_lr: f64,
}

/// (shuffling seed, weight-init seed) for one orientation's training,
/// derived from the root seed so the horizontal and vertical models never
/// share randomness.
pub fn train_seeds(root: u64, orientation: Orientation) -> (u64, u64) {
    let tag = match orientation {
        Orientation::Horizontal => "h",
        Orientation::Vertical => "v",
    };
    (
        root.wrapping_add(fnv1a64(format!("train-{tag}").as_bytes())),
        root.wrapping_add(fnv1a64(format!("init-{tag}").as_bytes())),
    )
}

/// Trains one orientation's regressor from a dataset manifest and saves it.
pub fn run_train(
    manifest_path: &Path,
    orientation: Orientation,
    width_check: Option<usize>,
    fc_hidden: usize,
    cfg: &TrainConfig,
    init_seed: u64,
    out_model: &Path,
) -> CliResult<TrainOutcome> {
    require(manifest_path)?;
    let set = TrainingSet::<f32>::from_manifest(manifest_path, orientation)?;
    let (_, _, angular, width) = set.inputs.shape();
    if let Some(w) = width_check {
        if w != width {
            return Err(Error::InvalidInput(format!(
                "requested width {w}, but the dataset's spatial resolution gives {width}"
            ))
            .into());
        }
    }
    let mut config = NetConfig::with_width(width).with_angular(angular);
    config.fc_hidden = fc_hidden;
    let mut model = FaceLfNet::<f32>::init(config, init_seed)?;
    model.orientation = Some(orientation);
    let report = train(&mut model, &set, cfg)?;
    ensure_parent(out_model)?;
    model.save(out_model)?;
    Ok(TrainOutcome {
        samples: set.len(),
        iterations: report.iterations,
        first_loss: report.losses.first().copied().unwrap_or(f64::NAN),
        final_loss: report.losses.last().copied().unwrap_or(f64::NAN),
        final_lr: report.final_lr,
    })
}

// ---------------------------------------------------------------------------
// fuse
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AxesFile<'a> {
    x_axis: &'a [f64],
    y_axis: &'a [f64],
}

pub struct FuseOutput {
    pub ply: PathBuf,
    pub grid_pfm: PathBuf,
    pub axes_json: PathBuf,
    pub grid: SurfaceGrid,
}

/// `item.ply` → `item_grid.pfm` / `item_axes.json`.
fn sibling(path: &Path, suffix: &str) -> CliResult<PathBuf> {
    let stem = path
        .file_stem()
        .ok_or_else(|| Error::InvalidInput(format!("{} has no file name", path.display())))?;
    let name = format!("{}{suffix}", stem.to_string_lossy());
    Ok(path.with_file_name(name))
}

/// Fuses a depth-map pair into one regularized surface; writes the mesh
/// plus a node-grid PFM and an axes JSON for direct numeric access.
pub fn run_fuse(
    h_pfm: &Path,
    v_pfm: &Path,
    meta_path: &Path,
    gridfit: &GridfitSection,
    out_ply: &Path,
) -> CliResult<FuseOutput> {
    require(h_pfm)?;
    require(v_pfm)?;
    require(meta_path)?;
    let meta = PairMeta::read(meta_path)?;
    let mut dm_h = read_depthmap_pfm(h_pfm)?;
    let mut dm_v = read_depthmap_pfm(v_pfm)?;
    if (dm_h.width, dm_h.height) != meta.spatial_res {
        return Err(Error::ShapeMismatch(format!(
            "depth map is {}x{} but its meta says {}x{}",
            dm_h.width, dm_h.height, meta.spatial_res.0, meta.spatial_res.1
        ))
        .into());
    }
    // A recorded foreground mask scopes the fit to the subject, so the
    // surface isn't dragged around by background pixels.
    if let Some(mask) = &meta.mask {
        let mask = PairMeta::resolve(meta_path, mask);
        apply_mask(&mut dm_h, &mask)?;
        apply_mask(&mut dm_v, &mask)?;
    }
    let spec = gridfit.to_spec(meta.spatial_res);
    let grid = fuse(&dm_h, &dm_v, &meta.rig, &spec)?;

    ensure_parent(out_ply)?;
    write_surface_ply(out_ply, &grid)?;
    let grid_pfm = sibling(out_ply, "_grid")?.with_extension("pfm");
    let (gx, gy) = grid.dims();
    let mut nodes = Vec::with_capacity(gx * gy);
    for iy in 0..gy {
        for ix in 0..gx {
            nodes.push(grid.node(ix, iy) as f32);
        }
    }
    write_pfm(&grid_pfm, gx, gy, &nodes)?;
    let axes_json = sibling(out_ply, "_axes")?.with_extension("json");
    jsonfmt::write_file(
        &axes_json,
        &AxesFile {
            x_axis: &grid.x_axis,
            y_axis: &grid.y_axis,
        },
    )?;
    Ok(FuseOutput {
        ply: out_ply.to_path_buf(),
        grid_pfm,
        axes_json,
        grid,
    })
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

/// Compares a fused surface against ground truth and writes a JSON report.
///
/// The ground-truth map is restricted to the meta's foreground mask when one
/// is recorded; the normalized mesh error is added when the meta carries
/// landmarks and an interocular distance.
pub fn run_eval(
    pred_ply: &Path,
    gt_pfm: &Path,
    meta_path: &Path,
    opts: &MetricOptions,
    report_path: &Path,
    heatmap: Option<&Path>,
) -> CliResult<EvalReport> {
    require(pred_ply)?;
    require(gt_pfm)?;
    require(meta_path)?;
    let meta = PairMeta::read(meta_path)?;
    let cloud = read_ply_vertices(pred_ply)?;
    let grid = SurfaceGrid::from_rowmajor_points(&cloud.points)?;
    let mut gt = read_depthmap_pfm(gt_pfm)?;
    if let Some(mask) = &meta.mask {
        apply_mask(&mut gt, &PairMeta::resolve(meta_path, mask))?;
    }
    let mut report = error_stats(&grid, &gt, &meta.rig, opts)?;
    if let (Some(landmarks), Some(interocular)) = (&meta.landmarks, meta.interocular) {
        let pred_crop = crop_face_region(&grid.to_pointcloud(), landmarks)?;
        let gt_crop = crop_face_region(&depthmap_to_pointcloud(&gt, &meta.rig)?, landmarks)?;
        report.nme = Some(nme(&pred_crop, &gt_crop, interocular, opts)?);
    }
    ensure_parent(report_path)?;
    jsonfmt::write_file(report_path, &report)?;
    if let Some(heatmap_path) = heatmap {
        write_heatmap(heatmap_path, &grid, &gt, &meta.rig)?;
    }
    Ok(report)
}

/// Absolute depth error per ground-truth pixel, max-normalized to an 8-bit
/// grayscale image (pixels without a comparison stay black).
fn write_heatmap(path: &Path, grid: &SurfaceGrid, gt: &DepthMap, rig: &CameraRig) -> CliResult<()> {
    let (w, h) = (gt.width, gt.height);
    let (cx, cy) = rig.principal_point;
    let mut errors = vec![f64::NAN; w * h];
    let mut max_err = 0.0f64;
    for py in 0..h {
        for px in 0..w {
            if !gt.is_valid(px, py) {
                continue;
            }
            let z = gt.get(px, py);
            let x = (px as f64 - cx) * z / rig.focal_px;
            let y = (py as f64 - cy) * z / rig.focal_px;
            if let Some(s) = grid.sample(x, y) {
                let e = (s - z).abs();
                errors[py * w + px] = e;
                max_err = max_err.max(e);
            }
        }
    }
    let img = image::GrayImage::from_fn(w as u32, h as u32, |px, py| {
        let e = errors[py as usize * w + px as usize];
        let v = if e.is_finite() && max_err > 0.0 {
            (255.0 * e / max_err).round() as u8
        } else {
            0
        };
        image::Luma([v])
    });
    ensure_parent(path)?;
    img.save(path).map_err(Error::from)?;
    Ok(())
}
