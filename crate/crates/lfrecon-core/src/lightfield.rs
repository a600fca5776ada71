//! 4D light field container, camera rig model, and EPI extraction.
//!
//! Conventions used across the crate:
//!
//! * Axis order is `[V][U][Y][X][3]`: `v` indexes camera rows, `u` camera
//!   columns, `y`/`x` image rows/columns, and the innermost axis is RGB.
//! * The world frame is the central camera frame: x right, y down, z forward
//!   (into the scene), units are millimetres.
//! * Sub-aperture camera `(u, v)` sits at `((u−u_c)·baseline, (v−v_c)·baseline, 0)`
//!   with its frustum sheared so the plane `z = focus_depth` projects with
//!   zero disparity. A point at depth `z` therefore appears in view `u` at
//!   `x_px(u) = x_px(u_c) − disparity_of_depth(z)·(u−u_c)`, i.e. EPI lines
//!   have slope `k = −disparity`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Camera rig: focal length, sub-aperture spacing, and the zero-disparity
/// plane. `epi_scale_f` is the constant relating an EPI line slope `k` to
/// the depth proxy `−f·k`; with the default `1.0` the proxy is the disparity
/// in px/view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRig {
    /// Focal length in pixels.
    pub focal_px: f64,
    /// Distance between adjacent sub-aperture cameras, mm.
    pub baseline: f64,
    /// Depth of the zero-disparity plane, mm.
    pub focus_depth: f64,
    /// Principal point (cx, cy) in pixels.
    pub principal_point: (f64, f64),
    /// Slope-to-proxy constant of the depth proxy relation `Z = −f·k`.
    pub epi_scale_f: f64,
}

impl CameraRig {
    /// Default rig for a given spatial resolution: ~56° field of view
    /// (focal = 0.9·width), focus plane at 300 mm, and a baseline giving
    /// exactly 1 px/view disparity for an object at 280 mm.
    pub fn default_for_res(width: usize, height: usize) -> Self {
        let focal_px = 0.9 * width as f64;
        CameraRig {
            focal_px,
            baseline: 4200.0 / focal_px,
            focus_depth: 300.0,
            principal_point: ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0),
            epi_scale_f: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focal_px must be positive and finite, got {}",
                self.focal_px
            )));
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "baseline must be positive and finite, got {}",
                self.baseline
            )));
        }
        if !(self.focus_depth > 0.0 && self.focus_depth.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "focus_depth must be positive and finite, got {}",
                self.focus_depth
            )));
        }
        if self.epi_scale_f == 0.0 || !self.epi_scale_f.is_finite() {
            return Err(Error::InvalidInput(format!(
                "epi_scale_f must be nonzero and finite, got {}",
                self.epi_scale_f
            )));
        }
        Ok(())
    }

    /// Disparity in px/view of a point at depth `z` mm:
    /// `d = focal_px · baseline · (1/z − 1/focus_depth)`.
    pub fn disparity_of_depth(&self, z: f64) -> Result<f64> {
        if !(z > 0.0) {
            return Err(Error::InvalidInput(format!(
                "depth must be positive, got {z}"
            )));
        }
        Ok(self.focal_px * self.baseline * (1.0 / z - 1.0 / self.focus_depth))
    }

    /// Inverse of [`disparity_of_depth`](Self::disparity_of_depth).
    /// Errors when `d` lies at or beyond the disparity of an infinitely far
    /// point (`−focal·baseline/focus_depth`), where no positive depth exists.
    pub fn depth_of_disparity(&self, d: f64) -> Result<f64> {
        let inv_z = d / (self.focal_px * self.baseline) + 1.0 / self.focus_depth;
        if !(inv_z > 0.0) {
            return Err(Error::InvalidInput(format!(
                "disparity {d} px/view is beyond the horizon of this rig"
            )));
        }
        Ok(1.0 / inv_z)
    }

    /// Depth proxy of an EPI line slope `k` (px/view): `−epi_scale_f · k`.
    /// With the rendering convention `k = −disparity`, the proxy equals
    /// `epi_scale_f · disparity`.
    pub fn slope_to_depth_proxy(&self, k: f64) -> f64 {
        -self.epi_scale_f * k
    }

    /// Metric depth of a depth proxy: divides out `epi_scale_f` to recover
    /// the disparity, then inverts the rig model.
    pub fn depth_of_proxy(&self, proxy: f64) -> Result<f64> {
        self.depth_of_disparity(proxy / self.epi_scale_f)
    }
}

/// A single 2D RGB image, row-major `[Y][X][3]`, radiance in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn new(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::ShapeMismatch(format!(
                "image data length {} != {width}x{height}x3",
                data.len()
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn row(&self, y: usize) -> &[f32] {
        &self.data[y * self.width * 3..(y + 1) * self.width * 3]
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }
}

/// 4D light field `L[v][u][y][x]` with RGB samples in `[0, 1]`.
///
/// Immutable after construction; all reads are safe to share across threads.
#[derive(Debug, Clone, PartialEq)]
pub struct LightField {
    n_v: usize,
    n_u: usize,
    height: usize,
    width: usize,
    samples: Vec<f32>,
}

impl LightField {
    /// Builds a light field by evaluating `f(v, u)` for every sub-view.
    /// Views are rendered independently (in parallel when enabled).
    pub fn from_views(
        n_v: usize,
        n_u: usize,
        width: usize,
        height: usize,
        f: impl Fn(usize, usize) -> Image + Sync,
    ) -> Result<Self> {
        Self::check_angular(n_u, n_v)?;
        let view_len = width * height * 3;
        let mut samples = vec![0.0f32; n_v * n_u * view_len];
        crate::exec::par_chunks_mut(&mut samples, view_len, |i, out| {
            let (v, u) = (i / n_u, i % n_u);
            let img = f(v, u);
            assert_eq!(
                (img.width, img.height),
                (width, height),
                "view generator returned a wrongly sized image"
            );
            out.copy_from_slice(img.data());
        });
        Ok(LightField {
            n_v,
            n_u,
            height,
            width,
            samples,
        })
    }

    pub fn from_samples(
        n_v: usize,
        n_u: usize,
        width: usize,
        height: usize,
        samples: Vec<f32>,
    ) -> Result<Self> {
        Self::check_angular(n_u, n_v)?;
        if samples.len() != n_v * n_u * height * width * 3 {
            return Err(Error::ShapeMismatch(format!(
                "sample count {} != {n_v}x{n_u}x{height}x{width}x3",
                samples.len()
            )));
        }
        Ok(LightField {
            n_v,
            n_u,
            height,
            width,
            samples,
        })
    }

    fn check_angular(n_u: usize, n_v: usize) -> Result<()> {
        if n_u < 3 || n_v < 3 || n_u % 2 == 0 || n_v % 2 == 0 {
            return Err(Error::InvalidInput(format!(
                "angular resolution must be odd and >= 3 in both axes, got {n_u}x{n_v}"
            )));
        }
        Ok(())
    }

    /// Checks every sample is finite and in `[0, 1]`.
    pub fn validate(&self) -> Result<()> {
        for (i, &s) in self.samples.iter().enumerate() {
            if !(s.is_finite() && (0.0..=1.0).contains(&s)) {
                return Err(Error::InvalidInput(format!(
                    "radiance sample {i} out of [0,1]: {s}"
                )));
            }
        }
        Ok(())
    }

    /// Angular resolution as (U, V).
    pub fn angular_res(&self) -> (usize, usize) {
        (self.n_u, self.n_v)
    }

    /// Spatial resolution as (X, Y).
    pub fn spatial_res(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn central_u(&self) -> usize {
        (self.n_u - 1) / 2
    }

    pub fn central_v(&self) -> usize {
        (self.n_v - 1) / 2
    }

    #[inline]
    fn view_offset(&self, v: usize, u: usize) -> usize {
        (v * self.n_u + u) * self.height * self.width * 3
    }

    #[inline]
    pub fn sample(&self, v: usize, u: usize, y: usize, x: usize) -> [f32; 3] {
        let i = self.view_offset(v, u) + (y * self.width + x) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    /// Borrow of one sub-view's samples, row-major `[Y][X][3]`.
    pub fn view_samples(&self, v: usize, u: usize) -> Result<&[f32]> {
        if v >= self.n_v {
            return Err(Error::IndexOutOfRange {
                what: "view row v",
                index: v,
                extent: self.n_v,
            });
        }
        if u >= self.n_u {
            return Err(Error::IndexOutOfRange {
                what: "view column u",
                index: u,
                extent: self.n_u,
            });
        }
        let off = self.view_offset(v, u);
        Ok(&self.samples[off..off + self.height * self.width * 3])
    }

    /// Copy of the sub-view at `(u, v)`.
    pub fn view(&self, v: usize, u: usize) -> Result<Image> {
        Ok(Image {
            width: self.width,
            height: self.height,
            data: self.view_samples(v, u)?.to_vec(),
        })
    }

    /// The sub-aperture image at the unique grid centre.
    pub fn central_view(&self) -> Image {
        self.view(self.central_v(), self.central_u())
            .expect("central indices are always in range")
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }

    /// Horizontal EPI at image row `y_star`: fixes `v` to the central row,
    /// giving an `[U][X][3]` slice whose row `a` is row `y_star` of sub-view
    /// `(u=a, v=centre)`.
    pub fn extract_horizontal_epi(&self, y_star: usize) -> Result<Epi> {
        if y_star >= self.height {
            return Err(Error::IndexOutOfRange {
                what: "y_star",
                index: y_star,
                extent: self.height,
            });
        }
        let v_c = self.central_v();
        let mut samples = Vec::with_capacity(self.n_u * self.width * 3);
        for a in 0..self.n_u {
            let off = self.view_offset(v_c, a) + y_star * self.width * 3;
            samples.extend_from_slice(&self.samples[off..off + self.width * 3]);
        }
        Ok(Epi {
            n_a: self.n_u,
            n_s: self.width,
            samples,
            orientation: Orientation::Horizontal,
            fixed_index: y_star,
        })
    }

    /// Vertical EPI at image column `x_star`: fixes `u` to the central
    /// column, giving a `[V][Y][3]` slice whose row `a` is column `x_star`
    /// of sub-view `(u=centre, v=a)`.
    pub fn extract_vertical_epi(&self, x_star: usize) -> Result<Epi> {
        if x_star >= self.width {
            return Err(Error::IndexOutOfRange {
                what: "x_star",
                index: x_star,
                extent: self.width,
            });
        }
        let u_c = self.central_u();
        let mut samples = Vec::with_capacity(self.n_v * self.height * 3);
        for a in 0..self.n_v {
            let base = self.view_offset(a, u_c) + x_star * 3;
            for y in 0..self.height {
                let i = base + y * self.width * 3;
                samples.extend_from_slice(&self.samples[i..i + 3]);
            }
        }
        Ok(Epi {
            n_a: self.n_v,
            n_s: self.height,
            samples,
            orientation: Orientation::Vertical,
            fixed_index: x_star,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Horizontal,
    Vertical,
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Orientation::Horizontal => write!(f, "horizontal"),
            Orientation::Vertical => write!(f, "vertical"),
        }
    }
}

/// One epipolar plane image: `[A][S][3]` radiance, where `A` is the angular
/// extent (U for horizontal, V for vertical) and `S` the spatial extent.
#[derive(Debug, Clone, PartialEq)]
pub struct Epi {
    n_a: usize,
    n_s: usize,
    samples: Vec<f32>,
    pub orientation: Orientation,
    pub fixed_index: usize,
}

impl Epi {
    pub fn from_samples(
        n_a: usize,
        n_s: usize,
        samples: Vec<f32>,
        orientation: Orientation,
        fixed_index: usize,
    ) -> Result<Self> {
        if samples.len() != n_a * n_s * 3 {
            return Err(Error::ShapeMismatch(format!(
                "EPI sample count {} != {n_a}x{n_s}x3",
                samples.len()
            )));
        }
        Ok(Epi {
            n_a,
            n_s,
            samples,
            orientation,
            fixed_index,
        })
    }

    /// (angular extent, spatial extent).
    pub fn shape(&self) -> (usize, usize) {
        (self.n_a, self.n_s)
    }

    pub fn central_a(&self) -> usize {
        (self.n_a - 1) / 2
    }

    /// Angular row `a` as an `[S][3]` slice.
    pub fn row(&self, a: usize) -> &[f32] {
        &self.samples[a * self.n_s * 3..(a + 1) * self.n_s * 3]
    }

    #[inline]
    pub fn sample(&self, a: usize, s: usize) -> [f32; 3] {
        let i = (a * self.n_s + s) * 3;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    pub fn samples(&self) -> &[f32] {
        &self.samples
    }
}

/// Per-position metric depth (mm) along one EPI, aligned to the central
/// view's pixel grid. Positions where estimation failed are marked invalid
/// and carry NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthCurve {
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub orientation: Orientation,
    pub fixed_index: usize,
}

impl DepthCurve {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }
}

/// Dense per-pixel depth in mm with a validity mask, aligned to the central
/// view. Invalid pixels hold NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    pub fn new_invalid(width: usize, height: usize) -> Self {
        DepthMap {
            width,
            height,
            data: vec![f64::NAN; width * height],
            valid: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut dm = DepthMap::new_invalid(width, height);
        for y in 0..height {
            for x in 0..width {
                dm.set(x, y, f(x, y));
            }
        }
        dm
    }

    pub fn from_values(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::ShapeMismatch(format!(
                "depth map length {} != {width}x{height}",
                data.len()
            )));
        }
        let valid = data.iter().map(|z| z.is_finite()).collect();
        Ok(DepthMap {
            width,
            height,
            data,
            valid,
        })
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, z: f64) {
        let i = y * self.width + x;
        self.data[i] = z;
        self.valid[i] = z.is_finite();
    }

    #[inline]
    pub fn set_invalid(&mut self, x: usize, y: usize) {
        let i = y * self.width + x;
        self.data[i] = f64::NAN;
        self.valid[i] = false;
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    /// Lossy narrowing for PFM output (the on-disk format is 32-bit).
    pub fn to_f32(&self) -> Vec<f32> {
        self.data.iter().map(|&z| z as f32).collect()
    }

    pub fn from_f32(width: usize, height: usize, data: &[f32]) -> Result<Self> {
        Self::from_values(width, height, data.iter().map(|&z| z as f64).collect())
    }

    /// (min, max) over valid pixels.
    pub fn depth_range(&self) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut any = false;
        for (z, ok) in self.data.iter().zip(&self.valid) {
            if *ok {
                lo = lo.min(*z);
                hi = hi.max(*z);
                any = true;
            }
        }
        any.then_some((lo, hi))
    }
}
