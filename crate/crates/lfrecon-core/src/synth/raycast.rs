//! Ray–scene intersection.
//!
//! The posed scene is an implicit surface g(p) = 0 in the camera frame:
//! the face heightfield (rotated by the pose about the scene pivot) blended
//! with the static background plane by the face weight. Rays are marched
//! with Lipschitz-safe adaptive steps (or fixed pixel-footprint steps) to a
//! sign change, then refined by bisection to sub-micrometre brackets.

use serde::{Deserialize, Serialize};

use super::scene::{Pose, Scene};

/// Marching step policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepPolicy {
    /// Steps of |g| / L where L bounds |dg/dt| along the ray: cannot skip a
    /// crossing. Default.
    Adaptive,
    /// Steps of `fraction` of the pixel footprint at the current depth
    /// (footprint = depth / focal_px). Slower; used by accuracy audits.
    FixedFootprint { fraction: f64 },
}

/// Nearest depth any valid scene surface may reach (mm); marching starts
/// slightly in front of this plane.
const MARCH_NEAR_Z: f64 = 30.0;
/// Minimum adaptive step, mm: forces progress through the surface so the
/// sign change is always bracketed.
const MIN_STEP: f64 = 0.02;
/// Bisection bracket width target, mm along the ray.
const BISECT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy)]
pub struct Hit {
    /// Ray parameter (mm; directions are unit length).
    pub t: f64,
    /// Intersection in the camera/world frame.
    pub point: [f64; 3],
    /// Intersection in the scene-local (unrotated) frame.
    pub local: [f64; 3],
    /// Face blend weight at the hit (1 = pure face, 0 = background).
    pub face_weight: f64,
    /// Unit surface normal in the camera frame, facing the camera.
    pub normal: [f64; 3],
    /// Surface albedo at the hit.
    pub albedo: [f64; 3],
}

#[inline]
fn mat_vec(m: &[[f64; 3]; 3], v: [f64; 3]) -> [f64; 3] {
    [
        m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
        m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
        m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
    ]
}

#[inline]
fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// A scene with its pose baked in, ready for ray queries. Immutable and
/// safe to share across rendering threads.
#[derive(Debug, Clone)]
pub struct PosedScene<'a> {
    pub scene: &'a Scene,
    /// local → camera rotation.
    rot: [[f64; 3]; 3],
    /// camera → local rotation (transpose).
    rot_t: [[f64; 3]; 3],
    pivot: [f64; 3],
    /// Far marching bound (camera z), beyond every surface.
    far_z: f64,
    /// Bound on |∇ face_height|.
    face_grad_bound: f64,
    /// Bound on |∇ face_weight|.
    weight_grad_bound: f64,
    /// Bound on the magnitude of either implicit branch over the march
    /// range; multiplies the weight-gradient term of the Lipschitz bound.
    span: f64,
}

impl<'a> PosedScene<'a> {
    pub fn new(scene: &'a Scene, pose: &Pose) -> Self {
        let (sp, cp) = pose.pitch.to_radians().sin_cos();
        let (sy, cy) = pose.yaw.to_radians().sin_cos();
        // R = R_yaw(y-axis) · R_pitch(x-axis).
        let rot = [
            [cy, sy * sp, sy * cp],
            [0.0, cp, -sp],
            [-sy, cy * sp, cy * cp],
        ];
        let rot_t = [
            [rot[0][0], rot[1][0], rot[2][0]],
            [rot[0][1], rot[1][1], rot[2][1]],
            [rot[0][2], rot[1][2], rot[2][2]],
        ];
        let (_, hi) = scene.depth_bounds();
        let far_z = hi.min(880.0) + 40.0;
        PosedScene {
            scene,
            rot,
            rot_t,
            pivot: [0.0, 0.0, scene.base_depth],
            far_z,
            face_grad_bound: scene.face_gradient_bound(),
            weight_grad_bound: scene.weight_gradient_bound(),
            span: far_z - MARCH_NEAR_Z + 160.0,
        }
    }

    /// camera frame → scene local frame.
    #[inline]
    pub fn to_local(&self, p: [f64; 3]) -> [f64; 3] {
        let d = [p[0] - self.pivot[0], p[1] - self.pivot[1], p[2] - self.pivot[2]];
        let r = mat_vec(&self.rot_t, d);
        [r[0] + self.pivot[0], r[1] + self.pivot[1], r[2] + self.pivot[2]]
    }

    /// scene local frame → camera frame.
    #[inline]
    pub fn to_camera(&self, q: [f64; 3]) -> [f64; 3] {
        let d = [q[0] - self.pivot[0], q[1] - self.pivot[1], q[2] - self.pivot[2]];
        let r = mat_vec(&self.rot, d);
        [r[0] + self.pivot[0], r[1] + self.pivot[1], r[2] + self.pivot[2]]
    }

    /// Scene landmarks in the camera frame.
    pub fn landmarks(&self) -> [[f64; 3]; 2] {
        [
            self.to_camera(self.scene.landmark_points[0]),
            self.to_camera(self.scene.landmark_points[1]),
        ]
    }

    /// Signed implicit function: negative in front of the surface, positive
    /// behind. Zero set = face surface blended with the background plane.
    #[inline]
    pub fn implicit(&self, p: [f64; 3]) -> f64 {
        let q = self.to_local(p);
        let w = self.scene.face_weight(q[0], q[1]);
        let face = q[2] - self.scene.face_height(q[0], q[1]);
        if w >= 1.0 {
            face
        } else {
            w * face + (1.0 - w) * (p[2] - self.scene.background_depth)
        }
    }

    /// Upper bound on |d/dt implicit(o + t·dir)| for a unit direction.
    fn directional_bound(&self, dir: [f64; 3]) -> f64 {
        let qd = mat_vec(&self.rot_t, dir);
        let q_lat = (qd[0] * qd[0] + qd[1] * qd[1]).sqrt();
        qd[2].abs()
            + self.face_grad_bound * q_lat
            + dir[2].abs()
            + self.weight_grad_bound * q_lat * self.span
    }

    /// Casts a ray from `origin` (on the camera plane z=0) along unit
    /// direction `dir` (dir_z > 0). The scene construction guarantees a hit:
    /// the background closes every ray.
    pub fn intersect(&self, origin: [f64; 3], dir: [f64; 3], policy: StepPolicy, focal_px: f64) -> Hit {
        let t_start = (MARCH_NEAR_Z - origin[2]) / dir[2];
        let t_end = (self.far_z - origin[2]) / dir[2];
        let l_bound = self.directional_bound(dir);

        let point_at = |t: f64| {
            [
                origin[0] + t * dir[0],
                origin[1] + t * dir[1],
                origin[2] + t * dir[2],
            ]
        };

        let mut a = t_start;
        let mut ga = self.implicit(point_at(a));
        debug_assert!(ga < 0.0, "march must start in front of the surface");
        let t_hit = loop {
            let step = match policy {
                StepPolicy::Adaptive => (-ga / l_bound).max(MIN_STEP),
                StepPolicy::FixedFootprint { fraction } => {
                    let z = origin[2] + a * dir[2];
                    fraction * z.max(1.0) / focal_px
                }
            };
            let b = (a + step).min(t_end);
            let gb = self.implicit(point_at(b));
            if gb >= 0.0 {
                break self.bisect(&point_at, a, b, 30);
            }
            if b >= t_end {
                // Unreachable by construction (the background plane closes
                // the scene before far_z); fall back to the far bound.
                break t_end;
            }
            a = b;
            ga = gb;
        };

        self.make_hit(t_hit, point_at(t_hit), focal_px)
    }

    /// Bisection on a bracketing interval [a, b] with g(a) < 0 ≤ g(b):
    /// at least `min_iters` halvings, continuing until the bracket is
    /// below `BISECT_TOL`.
    fn bisect(&self, point_at: &impl Fn(f64) -> [f64; 3], mut a: f64, mut b: f64, min_iters: usize) -> f64 {
        for iter in 0..64 {
            if iter >= min_iters && (b - a) < BISECT_TOL {
                break;
            }
            let mid = 0.5 * (a + b);
            if self.implicit(point_at(mid)) < 0.0 {
                a = mid;
            } else {
                b = mid;
            }
        }
        0.5 * (a + b)
    }

    fn make_hit(&self, t: f64, p: [f64; 3], focal_px: f64) -> Hit {
        let q = self.to_local(p);
        let w = self.scene.face_weight(q[0], q[1]);
        let (_, fx, fy) = self.scene.face_height_and_gradient(q[0], q[1]);
        // Camera-facing normal of z = F(x, y) is (Fx, Fy, -1)/|·|, rotated
        // into the camera frame, then blended with the background normal.
        let nf = mat_vec(&self.rot, normalize([fx, fy, -1.0]));
        let normal = normalize([w * nf[0], w * nf[1], w * nf[2] - (1.0 - w)]);
        // One pixel subtends z/f mm at the hit depth; band-limit the albedo
        // to that footprint so the rendered texture respects the sampling
        // rate (the footprint depends only on the point, keeping radiance
        // view-independent).
        let footprint = (p[2] / focal_px).max(0.0);
        let albedo = self.scene.albedo(q[0], q[1], p[0], p[1], w, footprint);
        Hit {
            t,
            point: p,
            local: q,
            face_weight: w,
            normal,
            albedo,
        }
    }
}
