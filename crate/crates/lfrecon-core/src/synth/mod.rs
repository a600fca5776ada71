//! Synthetic light field generation with analytic ground truth.
//!
//! Scenes are procedural heightfields ([`scene`]), rendered through a grid
//! of sheared pinhole cameras so the rig's focus plane projects with zero
//! disparity. Shading is Lambertian (two point lights + ambient, no
//! shadows) and depends only on the 3D surface point, never the viewing
//! direction — EPI lines therefore carry constant radiance.

pub mod dataset;
pub mod noise;
pub mod raycast;
pub mod scene;

pub use dataset::{generate_dataset, DatasetSpec};
pub use raycast::{Hit, PosedScene, StepPolicy};
pub use scene::{
    make_scene, Difficulty, GaussianBump, PointLight, Pose, Scene, TextureSpec,
    BACKGROUND_DEPTH, DEFAULT_FOCUS_DEPTH,
};

use crate::error::{Error, Result};
use crate::exec;
use crate::lightfield::{CameraRig, DepthMap, Image, LightField};

/// Ground truth rendered from the central camera only.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    /// Per-pixel depth in mm; finite everywhere (the background closes the
    /// scene).
    pub depth: DepthMap,
    /// Foreground mask: true where the pixel sees the pure face surface
    /// (blend weight 1). Plane scenes are foreground everywhere.
    pub foreground: Vec<bool>,
    /// The two eye landmarks in the camera frame (pose applied).
    pub landmarks: [[f64; 3]; 2],
}

impl GroundTruth {
    #[inline]
    pub fn is_foreground(&self, x: usize, y: usize) -> bool {
        self.foreground[y * self.depth.width + x]
    }

    pub fn foreground_count(&self) -> usize {
        self.foreground.iter().filter(|&&b| b).count()
    }

    /// Interocular distance from the landmarks, mm.
    pub fn interocular(&self) -> f64 {
        let [a, b] = &self.landmarks;
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    /// (min, max) ground-truth depth over foreground pixels.
    pub fn foreground_depth_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for y in 0..self.depth.height {
            for x in 0..self.depth.width {
                if self.is_foreground(x, y) {
                    let z = self.depth.get(x, y);
                    lo = lo.min(z);
                    hi = hi.max(z);
                    any = true;
                }
            }
        }
        any.then_some((lo, hi))
    }
}

/// Renderer knobs beyond the spec-level inputs.
#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Angular resolution (U, V); both odd, ≥ 3.
    pub angular_res: (usize, usize),
    pub policy: StepPolicy,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            angular_res: (15, 15),
            policy: StepPolicy::Adaptive,
        }
    }
}

/// Ray origin/direction of pixel (x, y) for the sub-camera at lateral
/// offset (t_u, t_v). All cameras aim their pixel rays at the same point on
/// the focus plane, which realizes the shear: zero disparity at focus depth.
#[inline]
fn pixel_ray(rig: &CameraRig, t_u: f64, t_v: f64, x: f64, y: f64) -> ([f64; 3], [f64; 3]) {
    let z0 = rig.focus_depth;
    let xf = (x - rig.principal_point.0) * z0 / rig.focal_px;
    let yf = (y - rig.principal_point.1) * z0 / rig.focal_px;
    let d = [xf - t_u, yf - t_v, z0];
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    ([t_u, t_v, 0.0], [d[0] / n, d[1] / n, d[2] / n])
}

/// Lambertian shading with two point lights plus ambient; depends only on
/// the hit point, never on the viewing ray.
#[inline]
fn shade(scene: &Scene, hit: &Hit) -> [f32; 3] {
    let mut irradiance = scene.ambient;
    for light in &scene.lights {
        let w = [
            light.position[0] - hit.point[0],
            light.position[1] - hit.point[1],
            light.position[2] - hit.point[2],
        ];
        let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        let cos = (hit.normal[0] * w[0] + hit.normal[1] * w[1] + hit.normal[2] * w[2]) / norm;
        if cos > 0.0 {
            irradiance += light.intensity * cos;
        }
    }
    let mut rgb = [0.0f32; 3];
    for c in 0..3 {
        rgb[c] = (hit.albedo[c] * irradiance).clamp(0.0, 1.0) as f32;
    }
    rgb
}

fn render_view(
    posed: &PosedScene<'_>,
    rig: &CameraRig,
    t_u: f64,
    t_v: f64,
    width: usize,
    height: usize,
    policy: StepPolicy,
) -> Image {
    let mut img = Image::new(width, height);
    for y in 0..height {
        for x in 0..width {
            let (o, d) = pixel_ray(rig, t_u, t_v, x as f64, y as f64);
            let hit = posed.intersect(o, d, policy, rig.focal_px);
            img.set_pixel(x, y, shade(posed.scene, &hit));
        }
    }
    img
}

/// Renders the full light field and its central-view ground truth with
/// default options (15×15 angular grid, adaptive marching).
pub fn render_lightfield(
    scene: &Scene,
    rig: &CameraRig,
    pose: &Pose,
    spatial_res: (usize, usize),
) -> Result<(LightField, GroundTruth)> {
    render_lightfield_with(scene, rig, pose, spatial_res, &RenderOptions::default())
}

pub fn render_lightfield_with(
    scene: &Scene,
    rig: &CameraRig,
    pose: &Pose,
    spatial_res: (usize, usize),
    opts: &RenderOptions,
) -> Result<(LightField, GroundTruth)> {
    let (width, height) = spatial_res;
    if width < 32 || height < 32 {
        return Err(Error::InvalidInput(format!(
            "spatial resolution must be at least 32x32, got {width}x{height}"
        )));
    }
    rig.validate()?;
    scene.validate(rig.focus_depth)?;
    let (n_u, n_v) = opts.angular_res;

    let posed = PosedScene::new(scene, pose);
    let u_c = (n_u as f64 - 1.0) / 2.0;
    let v_c = (n_v as f64 - 1.0) / 2.0;
    let lf = LightField::from_views(n_v, n_u, width, height, |v, u| {
        let t_u = (u as f64 - u_c) * rig.baseline;
        let t_v = (v as f64 - v_c) * rig.baseline;
        render_view(&posed, rig, t_u, t_v, width, height, opts.policy)
    })?;

    let gt = render_ground_truth(&posed, rig, spatial_res, opts.policy);
    Ok((lf, gt))
}

/// Ground truth alone (central camera, geometry only — no shading).
/// Radiometric scene fields (lights, textures) cannot influence the result.
pub fn render_ground_truth(
    posed: &PosedScene<'_>,
    rig: &CameraRig,
    spatial_res: (usize, usize),
    policy: StepPolicy,
) -> GroundTruth {
    let (width, height) = spatial_res;
    let rows = exec::par_map_indices(height, |y| {
        let mut depth = vec![0.0f64; width];
        let mut fg = vec![false; width];
        for x in 0..width {
            let (o, d) = pixel_ray(rig, 0.0, 0.0, x as f64, y as f64);
            let hit = posed.intersect(o, d, policy, rig.focal_px);
            depth[x] = hit.point[2];
            fg[x] = hit.face_weight >= 1.0;
        }
        (depth, fg)
    });

    let mut dm = DepthMap::new_invalid(width, height);
    let mut foreground = vec![false; width * height];
    for (y, (depth, fg)) in rows.into_iter().enumerate() {
        for x in 0..width {
            dm.set(x, y, depth[x]);
            foreground[y * width + x] = fg[x];
        }
    }
    GroundTruth {
        depth: dm,
        foreground,
        landmarks: posed.landmarks(),
    }
}
