//! Evaluation suite: depth-error statistics, RMSE, normalized mean error,
//! rigid alignment (ICP), and face-region cropping.

pub mod icp;
pub mod nn;

pub use icp::{icp_align, icp_align_traced, procrustes, RigidTransform};
pub use nn::SpatialIndex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{depthmap_to_pointcloud, PointCloud, SurfaceGrid};
use crate::lightfield::{CameraRig, DepthMap};

/// Previously reported evaluation figures from the light field face
/// reconstruction literature. Stored for context in reports only — nothing
/// in this toolkit asserts against them.
pub mod reference {
    /// Depth-error summary (mm): mean / SD / median / mean of largest 90%.
    pub const DEPTH_ERROR_MEAN_MM: f64 = 2.78;
    pub const DEPTH_ERROR_SD_MM: f64 = 2.04;
    pub const DEPTH_ERROR_MEDIAN_MM: f64 = 1.73;
    pub const DEPTH_ERROR_LARGEST90_MM: f64 = 5.30;
    /// Percent-scale normalized mean error.
    pub const NME_PERCENT: f64 = 3.72;
    /// RMSE (mm) at frontal pose and at ±30° yaw.
    pub const RMSE_FRONTAL_MM: f64 = 2.62;
    pub const RMSE_POSE30_MM: f64 = 2.93;
}

/// Options shared by the depth-error metrics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricOptions {
    /// ICP pre-alignment of prediction to ground truth before comparing.
    pub align: bool,
    pub icp_max_iters: usize,
    pub icp_tol: f64,
}

impl Default for MetricOptions {
    fn default() -> Self {
        MetricOptions {
            align: false,
            icp_max_iters: 40,
            icp_tol: 1e-9,
        }
    }
}

/// Summary of absolute depth errors plus derived metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Number of compared positions.
    pub n: usize,
    /// Mean absolute error, mm.
    pub mean: f64,
    /// Population standard deviation of absolute errors, mm.
    pub std_dev: f64,
    /// Median absolute error, mm.
    pub median: f64,
    /// Mean of the largest 90% of absolute errors, mm (the smallest 10%,
    /// rounded down, are dropped).
    pub mean_largest_90: f64,
    /// Alternative reading of the same summary: the 90th-percentile error
    /// (nearest-rank), mm.
    pub p90: f64,
    /// Root mean square error, mm.
    pub rmse: f64,
    /// Normalized mean error, when a mesh comparison was run.
    pub nme: Option<f64>,
}

/// Builds an [`EvalReport`] from raw absolute errors.
pub fn error_stats_from_values(errors: &[f64]) -> Result<EvalReport> {
    if errors.is_empty() {
        return Err(Error::EmptySelection("no errors to summarize".into()));
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return Err(Error::InvalidInput(
            "absolute errors must be finite and non-negative".into(),
        ));
    }
    let n = errors.len();
    let nf = n as f64;
    let mean = errors.iter().sum::<f64>() / nf;
    let var = errors.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / nf;
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / nf).sqrt();

    let mut sorted = errors.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    let dropped = n / 10; // floor(0.1·n) smallest errors excluded
    let top = &sorted[dropped..];
    let mean_largest_90 = top.iter().sum::<f64>() / top.len() as f64;
    let p90_rank = ((0.9 * nf).ceil() as usize).clamp(1, n);
    let p90 = sorted[p90_rank - 1];

    Ok(EvalReport {
        n,
        mean,
        std_dev: var.sqrt(),
        median,
        mean_largest_90,
        p90,
        rmse,
        nme: None,
    })
}

/// Per-pixel comparison positions between a fitted surface and a
/// ground-truth depth map: for each valid pixel the ground truth is
/// back-projected to 3D (optionally carried into the prediction's frame by
/// the inverse of the ICP alignment) and the surface is sampled bilinearly
/// at its (x, y). Returns absolute z-differences.
fn surface_depth_errors(
    pred: &SurfaceGrid,
    gt: &DepthMap,
    rig: &CameraRig,
    opts: &MetricOptions,
) -> Result<Vec<f64>> {
    let gt_cloud = depthmap_to_pointcloud(gt, rig)?;
    if gt_cloud.is_empty() {
        return Err(Error::EmptySelection("ground truth has no valid pixels".into()));
    }
    let to_pred_frame = if opts.align {
        // Align prediction onto ground truth, then evaluate in the
        // prediction's frame by moving ground truth the opposite way.
        let t = icp_align(&pred.to_pointcloud(), &gt_cloud, opts.icp_max_iters, opts.icp_tol)?;
        t.inverse()
    } else {
        RigidTransform::identity()
    };

    let mut errors = Vec::with_capacity(gt_cloud.len());
    for &p in &gt_cloud.points {
        let q = to_pred_frame.apply(p);
        if let Some(z) = pred.sample(q[0], q[1]) {
            errors.push((z - q[2]).abs());
        }
    }
    if errors.is_empty() {
        return Err(Error::EmptySelection(
            "no ground-truth pixel projects inside the predicted surface".into(),
        ));
    }
    Ok(errors)
}

/// Root mean square per-pixel depth error between a fitted surface and a
/// ground-truth map, optionally after ICP pre-alignment.
pub fn rmse(pred: &SurfaceGrid, gt: &DepthMap, rig: &CameraRig, opts: &MetricOptions) -> Result<f64> {
    let errors = surface_depth_errors(pred, gt, rig, opts)?;
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Full depth-error summary between a fitted surface and a ground-truth map.
pub fn error_stats(
    pred: &SurfaceGrid,
    gt: &DepthMap,
    rig: &CameraRig,
    opts: &MetricOptions,
) -> Result<EvalReport> {
    error_stats_from_values(&surface_depth_errors(pred, gt, rig, opts)?)
}

/// Normalized mean error between two meshes/clouds: mean nearest-neighbor
/// distance from prediction to ground truth divided by the interocular
/// distance `d` — `(1/n)·Σₖ ‖xₖ − yₖ‖ / d` with xₖ the (optionally
/// ICP-aligned) predicted vertices and yₖ their nearest ground-truth
/// partners.
pub fn nme(
    pred: &PointCloud,
    gt: &PointCloud,
    d: f64,
    opts: &MetricOptions,
) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::InvalidInput(format!(
            "interocular distance must be positive, got {d}"
        )));
    }
    if pred.is_empty() || gt.is_empty() {
        return Err(Error::EmptySelection("nme needs non-empty clouds".into()));
    }
    let aligned = if opts.align {
        icp_align(pred, gt, opts.icp_max_iters, opts.icp_tol)?.apply_cloud(pred)
    } else {
        pred.clone()
    };
    let index = SpatialIndex::build(&gt.points)?;
    let total: f64 = aligned.points.iter().map(|&p| index.nearest(p).1).sum();
    Ok(total / (aligned.len() as f64 * d))
}

/// Default crop radius as a multiple of the interocular distance.
pub const FACE_CROP_RADIUS_SCALE: f64 = 1.4;

/// Retains points within `radius_scale × interocular` of the landmark
/// centroid.
pub fn crop_face_region_with(
    pc: &PointCloud,
    landmarks: &[[f64; 3]; 2],
    radius_scale: f64,
) -> Result<PointCloud> {
    if !(radius_scale > 0.0) {
        return Err(Error::InvalidInput(format!(
            "crop radius scale must be positive, got {radius_scale}"
        )));
    }
    let [a, b] = landmarks;
    let interocular =
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
    if !(interocular > 0.0) {
        return Err(Error::InvalidInput(
            "landmarks coincide: interocular distance is zero".into(),
        ));
    }
    let center = [
        0.5 * (a[0] + b[0]),
        0.5 * (a[1] + b[1]),
        0.5 * (a[2] + b[2]),
    ];
    let radius2 = (radius_scale * interocular).powi(2);
    let points: Vec<[f64; 3]> = pc
        .points
        .iter()
        .filter(|p| {
            let dx = p[0] - center[0];
            let dy = p[1] - center[1];
            let dz = p[2] - center[2];
            dx * dx + dy * dy + dz * dz <= radius2
        })
        .copied()
        .collect();
    if points.is_empty() {
        return Err(Error::EmptySelection(
            "no points within the face crop radius".into(),
        ));
    }
    Ok(PointCloud::new(points))
}

/// [`crop_face_region_with`] at the default 1.4× radius.
pub fn crop_face_region(pc: &PointCloud, landmarks: &[[f64; 3]; 2]) -> Result<PointCloud> {
    crop_face_region_with(pc, landmarks, FACE_CROP_RADIUS_SCALE)
}
