//! Procedural scene definitions.
//!
//! A scene is a continuous heightfield `z = S(x, y)` (depth in mm, camera
//! looking along +z) with a procedural albedo and two point lights. Three
//! difficulty levels exist:
//!
//! * `FlatPlane` — a fronto-parallel plane at the default focus depth.
//! * `TiltedPlane` — a plane with seeded, analytically known slopes.
//! * `FaceLike` — a raised face-shaped relief (dome, nose ridge, brow, eye
//!   sockets, cheeks, mouth as anisotropic Gaussian bumps/dents) that blends
//!   into a textured background plane at a fixed far depth.
//!
//! All geometry and gradients are analytic, so ground truth carries no
//! approximation beyond ray-cast tolerance.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::noise::Fbm;
use crate::error::{Error, Result};
use crate::rng::derive_rng;

/// Focus depth of the default rig; flat-plane scenes sit exactly here.
pub const DEFAULT_FOCUS_DEPTH: f64 = 300.0;
/// Depth of the background plane in mm.
pub const BACKGROUND_DEPTH: f64 = 380.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Difficulty {
    FlatPlane,
    TiltedPlane,
    FaceLike,
}

impl std::fmt::Display for Difficulty {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Difficulty::FlatPlane => write!(f, "flat-plane"),
            Difficulty::TiltedPlane => write!(f, "tilted-plane"),
            Difficulty::FaceLike => write!(f, "face-like"),
        }
    }
}

impl std::str::FromStr for Difficulty {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat-plane" => Ok(Difficulty::FlatPlane),
            "tilted-plane" => Ok(Difficulty::TiltedPlane),
            "face-like" => Ok(Difficulty::FaceLike),
            other => Err(Error::InvalidInput(format!(
                "unknown difficulty '{other}' (expected flat-plane | tilted-plane | face-like)"
            ))),
        }
    }
}

/// Anisotropic Gaussian relief feature. Positive amplitude bulges toward
/// the camera (reduces depth), negative recedes (eye sockets).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianBump {
    pub center: (f64, f64),
    pub sigma: (f64, f64),
    /// Rotation of the principal axes, radians.
    pub theta: f64,
    pub amplitude: f64,
}

impl GaussianBump {
    /// Relief value and gradient at local coordinates (x, y).
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let dx = x - self.center.0;
        let dy = y - self.center.1;
        let (s, c) = self.theta.sin_cos();
        let xr = c * dx + s * dy;
        let yr = -s * dx + c * dy;
        let qx = xr / self.sigma.0;
        let qy = yr / self.sigma.1;
        let e2 = 0.5 * (qx * qx + qy * qy);
        // Beyond 6σ the residual is < 2e-8 of the amplitude (≪ the 1e-4 mm
        // ray-cast tolerance); skipping keeps the march inner loop cheap.
        if e2 > 18.0 {
            return (0.0, 0.0, 0.0);
        }
        let g = self.amplitude * (-e2).exp();
        // d/dxr = -xr/σx² · g, rotate back to local frame.
        let gxr = -xr / (self.sigma.0 * self.sigma.0) * g;
        let gyr = -yr / (self.sigma.1 * self.sigma.1) * g;
        (g, c * gxr - s * gyr, s * gxr + c * gyr)
    }

    /// Upper bound on |∇(amplitude·G)| anywhere.
    fn gradient_bound(&self) -> f64 {
        // max |d/dt exp(-t²/2σ²)| = exp(-1/2)/σ at t = σ.
        let inv_sigma = 1.0 / self.sigma.0.min(self.sigma.1);
        self.amplitude.abs() * inv_sigma * (-0.5f64).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointLight {
    /// Position in the world (central camera) frame, mm. Lights do not
    /// rotate with the scene pose.
    pub position: [f64; 3],
    pub intensity: f64,
}

/// Procedural texture parameters for one surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub seed: u64,
    pub base_color: [f64; 3],
    pub base_wavelength: f64,
    pub octaves: usize,
    /// Texture = base_color · (floor + span·fbm).
    pub floor: f64,
    pub span: f64,
}

impl TextureSpec {
    pub fn sample(&self, x: f64, y: f64) -> [f64; 3] {
        self.sample_filtered(x, y, 0.0)
    }

    /// Sample with band-limiting to the given sampling footprint (mm per
    /// pixel at the surface); see [`Fbm::sample_filtered`].
    pub fn sample_filtered(&self, x: f64, y: f64, footprint: f64) -> [f64; 3] {
        let fbm = Fbm {
            seed: self.seed,
            base_wavelength: self.base_wavelength,
            octaves: self.octaves,
            gain: 0.55,
        };
        let mut rgb = [0.0; 3];
        for (ch, out) in rgb.iter_mut().enumerate() {
            let n = fbm.sample_filtered(x, y, ch as u32, footprint);
            *out = (self.base_color[ch] * (self.floor + self.span * n)).clamp(0.0, 1.0);
        }
        rgb
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub seed: u64,
    pub difficulty: Difficulty,
    /// Depth of the face base plane (or the plane itself), mm.
    pub base_depth: f64,
    /// Plane slopes (dz/dx, dz/dy) for plane difficulties.
    pub plane_slopes: (f64, f64),
    /// Relief features (face-like only).
    pub features: Vec<GaussianBump>,
    /// Radius of the pure-face region, mm (local frame).
    pub face_radius: f64,
    /// Width of the blend band from face to background, mm.
    pub falloff_width: f64,
    /// Depth of the static background plane, mm.
    pub background_depth: f64,
    pub lights: [PointLight; 2],
    pub face_texture: TextureSpec,
    pub background_texture: TextureSpec,
    /// Ambient shading term added to the Lambertian sum.
    pub ambient: f64,
    /// Two designated "eye" surface points, local frame, mm.
    pub landmark_points: [[f64; 3]; 2],
}

impl Scene {
    /// True when the surface is a single plane covering the whole frame
    /// (no background blend).
    pub fn is_plane(&self) -> bool {
        matches!(self.difficulty, Difficulty::FlatPlane | Difficulty::TiltedPlane)
    }

    /// Face-surface depth at local (x, y): base plane minus relief.
    /// For plane difficulties this is the plane itself.
    #[inline]
    pub fn face_height(&self, x: f64, y: f64) -> f64 {
        let mut z = self.base_depth + self.plane_slopes.0 * x + self.plane_slopes.1 * y;
        for b in &self.features {
            z -= b.eval(x, y).0;
        }
        z
    }

    /// Face-surface depth and gradient (dz/dx, dz/dy) at local (x, y).
    #[inline]
    pub fn face_height_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let mut z = self.base_depth + self.plane_slopes.0 * x + self.plane_slopes.1 * y;
        let mut gx = self.plane_slopes.0;
        let mut gy = self.plane_slopes.1;
        for b in &self.features {
            let (v, bx, by) = b.eval(x, y);
            z -= v;
            gx -= bx;
            gy -= by;
        }
        (z, gx, gy)
    }

    /// Blend weight of the face surface at local radius r: 1 inside
    /// `face_radius`, 0 beyond `face_radius + falloff_width`, smoothstep
    /// in between. Planes are weight 1 everywhere.
    #[inline]
    pub fn face_weight(&self, x: f64, y: f64) -> f64 {
        if self.is_plane() {
            return 1.0;
        }
        let r = (x * x + y * y).sqrt();
        if r <= self.face_radius {
            1.0
        } else if r >= self.face_radius + self.falloff_width {
            0.0
        } else {
            let t = (r - self.face_radius) / self.falloff_width;
            1.0 - t * t * (3.0 - 2.0 * t)
        }
    }

    /// Gradient of [`face_weight`](Self::face_weight) w.r.t. local (x, y).
    #[inline]
    pub fn face_weight_gradient(&self, x: f64, y: f64) -> (f64, f64) {
        if self.is_plane() {
            return (0.0, 0.0);
        }
        let r = (x * x + y * y).sqrt();
        if r <= self.face_radius || r >= self.face_radius + self.falloff_width || r == 0.0 {
            return (0.0, 0.0);
        }
        let t = (r - self.face_radius) / self.falloff_width;
        let dw_dt = -6.0 * t * (1.0 - t);
        let dw_dr = dw_dt / self.falloff_width;
        (dw_dr * x / r, dw_dr * y / r)
    }

    /// Upper bound on |∇ face_height| over the plane; used for safe ray
    /// marching step sizes.
    pub fn face_gradient_bound(&self) -> f64 {
        let mut l = self.plane_slopes.0.abs() + self.plane_slopes.1.abs();
        for b in &self.features {
            l += b.gradient_bound();
        }
        l
    }

    /// Maximum smoothstep slope of the blend weight, per mm.
    pub fn weight_gradient_bound(&self) -> f64 {
        if self.is_plane() {
            0.0
        } else {
            1.5 / self.falloff_width
        }
    }

    /// Conservative (min, max) depth over the visible scene, before pose
    /// rotation. Rotation margins are handled by the caster.
    pub fn depth_bounds(&self) -> (f64, f64) {
        let relief_up: f64 = self.features.iter().map(|b| b.amplitude.max(0.0)).sum();
        let relief_down: f64 = self.features.iter().map(|b| (-b.amplitude).max(0.0)).sum();
        // Plane slopes over a 300 mm half-extent — a comfortable bound on
        // the lateral footprint the cameras actually see at these fields of
        // view (the marching far bound adds its own margin on top).
        let plane_span = (self.plane_slopes.0.abs() + self.plane_slopes.1.abs()) * 300.0;
        let lo = self.base_depth - relief_up - plane_span;
        let hi = if self.is_plane() {
            self.base_depth + relief_down + plane_span
        } else {
            self.background_depth.max(self.base_depth + relief_down)
        };
        (lo, hi)
    }

    /// Checks the scene invariants against the rig's focus depth.
    pub fn validate(&self, focus_depth: f64) -> Result<()> {
        let (lo, hi) = self.depth_bounds();
        if !(lo > 0.2 * focus_depth && hi < 3.0 * focus_depth) {
            return Err(Error::InvalidInput(format!(
                "scene depth range [{lo:.1}, {hi:.1}] mm outside (0.2, 3)×focus_depth ({focus_depth} mm)"
            )));
        }
        if self.lights.iter().any(|l| l.intensity < 0.0) {
            return Err(Error::InvalidInput("negative light intensity".into()));
        }
        Ok(())
    }

    /// Albedo at a surface point: the face and background textures blended
    /// with the face weight. Face texture is anchored to the local frame
    /// (so it rotates with the pose); the background texture is anchored to
    /// world x/y. `footprint` is the sampling footprint at the surface (mm
    /// per pixel), used to band-limit the textures; 0 disables filtering.
    #[inline]
    pub fn albedo(
        &self,
        local_x: f64,
        local_y: f64,
        world_x: f64,
        world_y: f64,
        w: f64,
        footprint: f64,
    ) -> [f64; 3] {
        let f = self.face_texture.sample_filtered(local_x, local_y, footprint);
        if w >= 1.0 {
            return f;
        }
        let b = self.background_texture.sample_filtered(world_x, world_y, footprint);
        [
            w * f[0] + (1.0 - w) * b[0],
            w * f[1] + (1.0 - w) * b[1],
            w * f[2] + (1.0 - w) * b[2],
        ]
    }

    /// Interocular distance: separation of the two eye landmarks, mm.
    pub fn interocular(&self) -> f64 {
        let [a, b] = &self.landmark_points;
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }
}

/// Rigid scene rotation applied about the scene pivot before rendering.
/// Angles in degrees; pitch rotates about the x-axis, yaw about the y-axis
/// (applied as yaw ∘ pitch).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub pitch: f64,
    pub yaw: f64,
}

impl Pose {
    pub fn frontal() -> Self {
        Pose { pitch: 0.0, yaw: 0.0 }
    }

    /// The standard 7-pose sampling: frontal, ±15° pitch, ±15° and ±30° yaw.
    pub fn standard_set() -> Vec<Pose> {
        vec![
            Pose { pitch: 0.0, yaw: 0.0 },
            Pose { pitch: -15.0, yaw: 0.0 },
            Pose { pitch: 15.0, yaw: 0.0 },
            Pose { pitch: 0.0, yaw: -15.0 },
            Pose { pitch: 0.0, yaw: 15.0 },
            Pose { pitch: 0.0, yaw: -30.0 },
            Pose { pitch: 0.0, yaw: 30.0 },
        ]
    }

    /// True for poses on the standard sampling grid.
    pub fn is_standard(&self) -> bool {
        Pose::standard_set().iter().any(|p| p == self)
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo..hi)
}

/// Deterministically builds a scene from (seed, difficulty).
pub fn make_scene(seed: u64, difficulty: Difficulty) -> Scene {
    let mut rng = derive_rng(seed, "scene");

    // Lights: two lamps at different world positions, seeded intensities.
    // Total direct light is capped so radiance stays below 1 with ambient.
    let total = uniform(&mut rng, 0.62, 0.85);
    let frac = uniform(&mut rng, 0.35, 0.65);
    let lights = [
        PointLight {
            position: [
                uniform(&mut rng, -200.0, -120.0),
                uniform(&mut rng, -160.0, -80.0),
                uniform(&mut rng, 20.0, 70.0),
            ],
            intensity: total * frac,
        },
        PointLight {
            position: [
                uniform(&mut rng, 130.0, 210.0),
                uniform(&mut rng, -150.0, -60.0),
                uniform(&mut rng, 40.0, 100.0),
            ],
            intensity: total * (1.0 - frac),
        },
    ];

    let face_texture = TextureSpec {
        seed: rng.gen(),
        base_color: [
            uniform(&mut rng, 0.78, 0.92),
            uniform(&mut rng, 0.58, 0.72),
            uniform(&mut rng, 0.45, 0.60),
        ],
        base_wavelength: uniform(&mut rng, 22.0, 30.0),
        octaves: 4,
        floor: 0.45,
        span: 0.52,
    };
    let background_texture = TextureSpec {
        seed: rng.gen(),
        base_color: [
            uniform(&mut rng, 0.40, 0.55),
            uniform(&mut rng, 0.45, 0.60),
            uniform(&mut rng, 0.55, 0.70),
        ],
        base_wavelength: uniform(&mut rng, 35.0, 55.0),
        octaves: 4,
        floor: 0.35,
        span: 0.60,
    };

    let mut scene = Scene {
        seed,
        difficulty,
        base_depth: DEFAULT_FOCUS_DEPTH,
        plane_slopes: (0.0, 0.0),
        features: Vec::new(),
        face_radius: 70.0,
        falloff_width: 50.0,
        background_depth: BACKGROUND_DEPTH,
        lights,
        face_texture,
        background_texture,
        ambient: 0.10,
        landmark_points: [[-30.0, 0.0, DEFAULT_FOCUS_DEPTH], [30.0, 0.0, DEFAULT_FOCUS_DEPTH]],
    };

    match difficulty {
        Difficulty::FlatPlane => {
            // Fronto-parallel plane exactly at the default focus depth.
        }
        Difficulty::TiltedPlane => {
            let sx = uniform(&mut rng, 0.12, 0.30) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let sy = uniform(&mut rng, 0.12, 0.30) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
            scene.plane_slopes = (sx, sy);
        }
        Difficulty::FaceLike => {
            scene.base_depth = DEFAULT_FOCUS_DEPTH + uniform(&mut rng, -8.0, 8.0);
            scene.face_radius = uniform(&mut rng, 64.0, 74.0);
            let j = |rng: &mut rand_chacha::ChaCha8Rng, s: f64| uniform(rng, -s, s);

            let eye_y = -15.0 + j(&mut rng, 3.0);
            let eye_dx = 27.0 + j(&mut rng, 3.0);
            let mut features = vec![
                // Dome: the overall face mound.
                GaussianBump {
                    center: (j(&mut rng, 4.0), j(&mut rng, 4.0)),
                    sigma: (52.0 + j(&mut rng, 6.0), 58.0 + j(&mut rng, 6.0)),
                    theta: j(&mut rng, 0.15),
                    amplitude: 42.0 + j(&mut rng, 6.0),
                },
                // Nose ridge.
                GaussianBump {
                    center: (j(&mut rng, 2.0), 8.0 + j(&mut rng, 3.0)),
                    sigma: (7.5 + j(&mut rng, 1.0), 22.0 + j(&mut rng, 3.0)),
                    theta: j(&mut rng, 0.06),
                    amplitude: 19.0 + j(&mut rng, 3.0),
                },
                // Brow bar.
                GaussianBump {
                    center: (j(&mut rng, 2.0), -24.0 + j(&mut rng, 3.0)),
                    sigma: (30.0 + j(&mut rng, 4.0), 7.5 + j(&mut rng, 1.0)),
                    theta: j(&mut rng, 0.06),
                    amplitude: 8.0 + j(&mut rng, 2.0),
                },
                // Eye sockets (dents).
                GaussianBump {
                    center: (-eye_dx, eye_y),
                    sigma: (11.0 + j(&mut rng, 1.5), 9.0 + j(&mut rng, 1.5)),
                    theta: j(&mut rng, 0.2),
                    amplitude: -(6.5 + j(&mut rng, 1.5)),
                },
                GaussianBump {
                    center: (eye_dx, eye_y),
                    sigma: (11.0 + j(&mut rng, 1.5), 9.0 + j(&mut rng, 1.5)),
                    theta: j(&mut rng, 0.2),
                    amplitude: -(6.5 + j(&mut rng, 1.5)),
                },
                // Cheeks.
                GaussianBump {
                    center: (-32.0 + j(&mut rng, 4.0), 16.0 + j(&mut rng, 4.0)),
                    sigma: (17.0 + j(&mut rng, 2.5), 14.0 + j(&mut rng, 2.0)),
                    theta: j(&mut rng, 0.25),
                    amplitude: 6.0 + j(&mut rng, 1.5),
                },
                GaussianBump {
                    center: (32.0 + j(&mut rng, 4.0), 16.0 + j(&mut rng, 4.0)),
                    sigma: (17.0 + j(&mut rng, 2.5), 14.0 + j(&mut rng, 2.0)),
                    theta: j(&mut rng, 0.25),
                    amplitude: 6.0 + j(&mut rng, 1.5),
                },
                // Mouth ridge.
                GaussianBump {
                    center: (j(&mut rng, 2.0), 36.0 + j(&mut rng, 4.0)),
                    sigma: (15.0 + j(&mut rng, 2.5), 6.0 + j(&mut rng, 1.0)),
                    theta: j(&mut rng, 0.06),
                    amplitude: 5.0 + j(&mut rng, 1.5),
                },
            ];
            scene.features.append(&mut features);

            // Eye landmarks sit on the surface above the socket centres.
            let lz = scene.face_height(-eye_dx, eye_y);
            let rz = scene.face_height(eye_dx, eye_y);
            scene.landmark_points = [[-eye_dx, eye_y, lz], [eye_dx, eye_y, rz]];
        }
    }
    scene
}
