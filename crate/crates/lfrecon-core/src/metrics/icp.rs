//! Rigid alignment: closed-form orthogonal Procrustes on matched pairs and
//! iterative closest point on unmatched clouds.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::PointCloud;
use crate::metrics::nn::SpatialIndex;

/// Proper rigid motion `p ↦ R·p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    /// Row-major rotation matrix; RᵀR = I to 1e−9, det = +1.
    pub rotation: [[f64; 3]; 3],
    /// Translation, mm.
    pub translation: [f64; 3],
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            translation: [0.0, 0.0, 0.0],
        }
    }

    /// Rotation about y (yaw) then x (pitch) composed with a translation —
    /// convenient for synthesizing test cases. Angles in degrees.
    pub fn from_angles(pitch_deg: f64, yaw_deg: f64, translation: [f64; 3]) -> Self {
        let (sp, cp) = pitch_deg.to_radians().sin_cos();
        let (sy, cy) = yaw_deg.to_radians().sin_cos();
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let r = ry * rx;
        RigidTransform {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.matrix();
        let gram = r.transpose() * r;
        let err = (gram - Matrix3::identity()).abs().max();
        if err > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "rotation is not orthonormal (max |RᵀR − I| = {err:.3e})"
            )));
        }
        if (r.determinant() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "rotation determinant {} is not +1",
                r.determinant()
            )));
        }
        Ok(())
    }

    fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_fn(|i, j| self.rotation[i][j])
    }

    #[inline]
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2] + self.translation[0],
            r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2] + self.translation[1],
            r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2] + self.translation[2],
        ]
    }

    pub fn apply_cloud(&self, pc: &PointCloud) -> PointCloud {
        PointCloud::new(pc.points.iter().map(|&p| self.apply(p)).collect())
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let r = self.matrix() * other.matrix();
        let t = self.matrix() * Vector3::from(other.translation) + Vector3::from(self.translation);
        RigidTransform {
            rotation: [
                [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
                [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
                [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
            ],
            translation: [t[0], t[1], t[2]],
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.matrix().transpose();
        let t = -(rt * Vector3::from(self.translation));
        RigidTransform {
            rotation: [
                [rt[(0, 0)], rt[(0, 1)], rt[(0, 2)]],
                [rt[(1, 0)], rt[(1, 1)], rt[(1, 2)]],
                [rt[(2, 0)], rt[(2, 1)], rt[(2, 2)]],
            ],
            translation: [t[0], t[1], t[2]],
        }
    }

    /// Rotation magnitude in degrees (axis–angle).
    pub fn rotation_angle_deg(&self) -> f64 {
        let trace = self.rotation[0][0] + self.rotation[1][1] + self.rotation[2][2];
        (((trace - 1.0) / 2.0).clamp(-1.0, 1.0)).acos().to_degrees()
    }

    pub fn translation_norm(&self) -> f64 {
        let t = self.translation;
        (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt()
    }
}

/// Closed-form least-squares rigid motion mapping `src[i]` onto `dst[i]`:
/// SVD of the centered cross-covariance with determinant correction.
pub fn procrustes(src: &[[f64; 3]], dst: &[[f64; 3]]) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::ShapeMismatch(format!(
            "procrustes needs matched pairs, got {} vs {}",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "procrustes needs at least 3 pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let mut cs = Vector3::zeros();
    let mut cd = Vector3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cs += Vector3::from(*s);
        cd += Vector3::from(*d);
    }
    cs /= n;
    cd /= n;

    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        let ps = Vector3::from(*s) - cs;
        let pd = Vector3::from(*d) - cd;
        h += ps * pd.transpose();
    }

    let svd = h.svd(true, true);
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "cross-covariance rank < 2: correspondences are collinear or coincident".into(),
        ));
    }
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    // R maps centered src onto centered dst: R = V·D·Uᵀ with D correcting
    // a possible reflection.
    let v = v_t.transpose();
    let det = (v * u.transpose()).determinant();
    let d = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det.signum()));
    let r = v * d * u.transpose();
    let t = cd - r * cs;

    let out = RigidTransform {
        rotation: [
            [r[(0, 0)], r[(0, 1)], r[(0, 2)]],
            [r[(1, 0)], r[(1, 1)], r[(1, 2)]],
            [r[(2, 0)], r[(2, 1)], r[(2, 2)]],
        ],
        translation: [t[0], t[1], t[2]],
    };
    out.validate()?;
    Ok(out)
}

/// Iterative closest point: aligns `src` onto `dst`, returning the
/// transform and the mean (quadratic mean, i.e. RMS) correspondence
/// distance per iteration — a non-increasing trace.
pub fn icp_align_traced(
    src: &PointCloud,
    dst: &PointCloud,
    max_iters: usize,
    tol: f64,
) -> Result<(RigidTransform, Vec<f64>)> {
    if src.len() < 3 || dst.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "icp needs ≥ 3 points per cloud, got {} and {}",
            src.len(),
            dst.len()
        )));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("icp tolerance must be ≥ 0, got {tol}")));
    }
    let index = SpatialIndex::build(&dst.points)?;

    let mut transform = RigidTransform::identity();
    let mut trace = Vec::new();
    let mut prev_rms = f64::INFINITY;
    for _ in 0..max_iters.max(1) {
        // Correspond each transformed source point to its nearest target.
        let moved: Vec<[f64; 3]> = src.points.iter().map(|&p| transform.apply(p)).collect();
        let mut matched = Vec::with_capacity(moved.len());
        let mut sum_sq = 0.0;
        for m in &moved {
            let (i, d) = index.nearest(*m);
            matched.push(index.point(i));
            sum_sq += d * d;
        }
        // RMS correspondence distance: the least-squares refit minimizes the
        // summed squares over fixed matches and re-matching can only shrink
        // each term, so this sequence never increases.
        let rms = (sum_sq / moved.len() as f64).sqrt();
        trace.push(rms);
        if prev_rms - rms < tol {
            break;
        }
        prev_rms = rms;
        // Refit the full transform from the original cloud to the matched
        // targets (keeps the estimate a single proper rigid motion).
        transform = procrustes(&src.points, &matched)?;
    }
    Ok((transform, trace))
}

/// [`icp_align_traced`] without the trace.
pub fn icp_align(
    src: &PointCloud,
    dst: &PointCloud,
    max_iters: usize,
    tol: f64,
) -> Result<RigidTransform> {
    icp_align_traced(src, dst, max_iters, tol).map(|(t, _)| t)
}
