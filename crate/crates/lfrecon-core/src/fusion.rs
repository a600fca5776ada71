//! Fusion of per-orientation depth maps into one fitted surface.
//!
//! Both depth maps are back-projected to 3D pointclouds through the central
//! pinhole, the horizontal cloud is shifted 1 mm left along x, and a single
//! heightfield z(x, y) on a regular grid is fitted to the union by
//! regularized least squares:
//!
//! ```text
//!   min_z  Σᵢ (B(pᵢ)·z − zᵢ)²  +  λ·‖R·z‖²
//! ```
//!
//! where B(pᵢ) are the four bilinear weights of the containing cell and R
//! stacks second-difference rows along both grid axes (scaled by node
//! spacing). The normal equations are solved matrix-free by conjugate
//! gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::lightfield::{CameraRig, DepthMap};

/// Scattered 3D points, mm.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f64; 3]>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }

    /// Componentwise (min, max) corners, or None when empty.
    pub fn bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        if self.points.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in &self.points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        Some((lo, hi))
    }

    /// Centroid of the cloud.
    pub fn centroid(&self) -> Option<[f64; 3]> {
        if self.points.is_empty() {
            return None;
        }
        let mut c = [0.0; 3];
        for p in &self.points {
            for i in 0..3 {
                c[i] += p[i];
            }
        }
        let n = self.points.len() as f64;
        Some([c[0] / n, c[1] / n, c[2] / n])
    }
}

/// Fitted heightfield on a regular grid: `nodes[iy * gx + ix]` is the z
/// value at `(x_axis[ix], y_axis[iy])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceGrid {
    pub x_axis: Vec<f64>,
    pub y_axis: Vec<f64>,
    pub nodes: Vec<f64>,
}

impl SurfaceGrid {
    /// (Gx, Gy).
    pub fn dims(&self) -> (usize, usize) {
        (self.x_axis.len(), self.y_axis.len())
    }

    #[inline]
    pub fn node(&self, ix: usize, iy: usize) -> f64 {
        self.nodes[iy * self.x_axis.len() + ix]
    }

    /// Bilinear sample at (x, y); None outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (gx, gy) = self.dims();
        let (x0, x1) = (self.x_axis[0], self.x_axis[gx - 1]);
        let (y0, y1) = (self.y_axis[0], self.y_axis[gy - 1]);
        if !(x >= x0 && x <= x1 && y >= y0 && y <= y1) {
            return None;
        }
        let hx = (x1 - x0) / (gx - 1) as f64;
        let hy = (y1 - y0) / (gy - 1) as f64;
        let ix = (((x - x0) / hx) as usize).min(gx - 2);
        let iy = (((y - y0) / hy) as usize).min(gy - 2);
        let tx = ((x - self.x_axis[ix]) / hx).clamp(0.0, 1.0);
        let ty = ((y - self.y_axis[iy]) / hy).clamp(0.0, 1.0);
        let z00 = self.node(ix, iy);
        let z10 = self.node(ix + 1, iy);
        let z01 = self.node(ix, iy + 1);
        let z11 = self.node(ix + 1, iy + 1);
        Some(z00 * (1.0 - tx) * (1.0 - ty) + z10 * tx * (1.0 - ty) + z01 * (1.0 - tx) * ty + z11 * tx * ty)
    }

    /// Grid nodes as a pointcloud.
    pub fn to_pointcloud(&self) -> PointCloud {
        let (gx, _) = self.dims();
        let points = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, &z)| [self.x_axis[i % gx], self.y_axis[i / gx], z])
            .collect();
        PointCloud::new(points)
    }

    /// Rebuilds a grid from points laid out the way [`Self::to_pointcloud`]
    /// (and the PLY writer) emit them: node-major rows, x fastest. Errors
    /// when the points do not form such a lattice.
    pub fn from_rowmajor_points(points: &[[f64; 3]]) -> Result<SurfaceGrid> {
        let n = points.len();
        let mut gx = 1;
        while gx < n && points[gx][0] > points[gx - 1][0] {
            gx += 1;
        }
        if gx < 2 || n % gx != 0 || n / gx < 2 {
            return Err(Error::MalformedFile {
                format: "surface mesh",
                detail: format!("{n} vertices do not form a row-major grid (row length {gx})"),
            });
        }
        let gy = n / gx;
        let x_axis: Vec<f64> = points[..gx].iter().map(|p| p[0]).collect();
        let y_axis: Vec<f64> = (0..gy).map(|iy| points[iy * gx][1]).collect();
        if y_axis.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::MalformedFile {
                format: "surface mesh",
                detail: "grid y coordinates are not strictly increasing".into(),
            });
        }
        let mut nodes = Vec::with_capacity(n);
        for iy in 0..gy {
            for ix in 0..gx {
                let p = points[iy * gx + ix];
                if p[0] != x_axis[ix] || p[1] != y_axis[iy] {
                    return Err(Error::MalformedFile {
                        format: "surface mesh",
                        detail: format!(
                            "vertex ({}, {}) breaks the lattice at row {iy}, column {ix}",
                            p[0], p[1]
                        ),
                    });
                }
                nodes.push(p[2]);
            }
        }
        Ok(SurfaceGrid {
            x_axis,
            y_axis,
            nodes,
        })
    }

    /// Sum of squared second differences along both axes (spacing-scaled):
    /// the smoothness energy ‖R·z‖² the fit penalizes.
    pub fn roughness(&self) -> f64 {
        let (gx, gy) = self.dims();
        let hx = (self.x_axis[gx - 1] - self.x_axis[0]) / (gx - 1) as f64;
        let hy = (self.y_axis[gy - 1] - self.y_axis[0]) / (gy - 1) as f64;
        let mut sum = 0.0;
        for iy in 0..gy {
            for ix in 1..gx - 1 {
                let d = (self.node(ix - 1, iy) - 2.0 * self.node(ix, iy) + self.node(ix + 1, iy))
                    / (hx * hx);
                sum += d * d;
            }
        }
        for ix in 0..gx {
            for iy in 1..gy - 1 {
                let d = (self.node(ix, iy - 1) - 2.0 * self.node(ix, iy) + self.node(ix, iy + 1))
                    / (hy * hy);
                sum += d * d;
            }
        }
        sum
    }
}

/// Fitting parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridFitSpec {
    /// Node counts (Gx, Gy).
    pub grid_res: (usize, usize),
    /// Smoothness weight λ ≥ 0, balanced internally by the ratio of data
    /// points to regularizer rows.
    pub lambda: f64,
    /// Relative residual tolerance of the conjugate-gradient solve.
    pub tolerance: f64,
    pub max_iters: usize,
}

impl GridFitSpec {
    pub fn new(gx: usize, gy: usize) -> Self {
        GridFitSpec {
            grid_res: (gx, gy),
            lambda: 1e-3,
            tolerance: 1e-10,
            max_iters: 6000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_res.0 < 2 || self.grid_res.1 < 2 {
            return Err(Error::InvalidInput(format!(
                "grid resolution must be at least 2x2, got {}x{}",
                self.grid_res.0, self.grid_res.1
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!("lambda must be ≥ 0, got {}", self.lambda)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "solver tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        Ok(())
    }
}

impl Default for GridFitSpec {
    fn default() -> Self {
        GridFitSpec::new(128, 128)
    }
}

/// Back-projects a depth map through the central pinhole:
/// `x = (px−cx)·z/f`, `y = (py−cy)·z/f`. Invalid pixels are dropped.
pub fn depthmap_to_pointcloud(dm: &DepthMap, rig: &CameraRig) -> Result<PointCloud> {
    let (cx, cy) = rig.principal_point;
    let mut points = Vec::with_capacity(dm.valid_count());
    for py in 0..dm.height {
        for px in 0..dm.width {
            if !dm.is_valid(px, py) {
                continue;
            }
            let z = dm.get(px, py);
            if z <= 0.0 {
                return Err(Error::InvalidInput(format!(
                    "non-positive depth {z} at valid pixel ({px}, {py})"
                )));
            }
            points.push([
                (px as f64 - cx) * z / rig.focal_px,
                (py as f64 - cy) * z / rig.focal_px,
                z,
            ]);
        }
    }
    Ok(PointCloud::new(points))
}

/// Forward pinhole projection of a 3D point to pixel coordinates.
pub fn project_to_pixel(p: [f64; 3], rig: &CameraRig) -> (f64, f64) {
    (
        rig.principal_point.0 + rig.focal_px * p[0] / p[2],
        rig.principal_point.1 + rig.focal_px * p[1] / p[2],
    )
}

/// Translates every point along x by `dx` mm (y, z unchanged).
pub fn jitter_x(pc: &PointCloud, dx: f64) -> PointCloud {
    PointCloud::new(pc.points.iter().map(|p| [p[0] + dx, p[1], p[2]]).collect())
}

/// Matrix-free operators of the regularized normal equations.
struct FitOperator {
    gx: usize,
    gy: usize,
    /// Per point: index of the cell's (ix, iy) corner node and the four
    /// bilinear weights [w00, w10, w01, w11].
    entries: Vec<(usize, [f64; 4])>,
    targets: Vec<f64>,
    lambda_eff: f64,
    inv_hx2: f64,
    inv_hy2: f64,
    n_row_reg: usize,
    n_col_reg: usize,
}

impl FitOperator {
    fn build(points: &PointCloud, x_axis: &[f64], y_axis: &[f64], lambda: f64) -> Result<Self> {
        let (gx, gy) = (x_axis.len(), y_axis.len());
        let hx = (x_axis[gx - 1] - x_axis[0]) / (gx - 1) as f64;
        let hy = (y_axis[gy - 1] - y_axis[0]) / (gy - 1) as f64;
        let slack_x = 1e-9 * hx * (gx - 1) as f64;
        let slack_y = 1e-9 * hy * (gy - 1) as f64;

        let mut entries = Vec::with_capacity(points.len());
        let mut targets = Vec::with_capacity(points.len());
        for p in &points.points {
            if p[0] < x_axis[0] - slack_x
                || p[0] > x_axis[gx - 1] + slack_x
                || p[1] < y_axis[0] - slack_y
                || p[1] > y_axis[gy - 1] + slack_y
            {
                return Err(Error::InvalidInput(format!(
                    "point ({}, {}) outside the grid bounding box",
                    p[0], p[1]
                )));
            }
            let ix = (((p[0] - x_axis[0]) / hx).floor() as isize).clamp(0, gx as isize - 2) as usize;
            let iy = (((p[1] - y_axis[0]) / hy).floor() as isize).clamp(0, gy as isize - 2) as usize;
            let tx = ((p[0] - x_axis[ix]) / hx).clamp(0.0, 1.0);
            let ty = ((p[1] - y_axis[iy]) / hy).clamp(0.0, 1.0);
            entries.push((
                iy * gx + ix,
                [
                    (1.0 - tx) * (1.0 - ty),
                    tx * (1.0 - ty),
                    (1.0 - tx) * ty,
                    tx * ty,
                ],
            ));
            targets.push(p[2]);
        }

        let n_row_reg = gy * gx.saturating_sub(2);
        let n_col_reg = gx * gy.saturating_sub(2);
        let n_reg = (n_row_reg + n_col_reg).max(1);
        // Balance the smoothness energy against the data energy so λ keeps
        // comparable meaning across point densities and grid sizes.
        let lambda_eff = lambda * points.len() as f64 / n_reg as f64;
        Ok(FitOperator {
            gx,
            gy,
            entries,
            targets,
            lambda_eff,
            inv_hx2: 1.0 / (hx * hx),
            inv_hy2: 1.0 / (hy * hy),
            n_row_reg,
            n_col_reg,
        })
    }

    fn n_nodes(&self) -> usize {
        self.gx * self.gy
    }

    /// B·z — bilinear interpolation of the grid at every data point.
    fn apply_a(&self, z: &[f64]) -> Vec<f64> {
        exec::par_map_indices(self.entries.len(), |i| {
            let (base, w) = self.entries[i];
            w[0] * z[base] + w[1] * z[base + 1] + w[2] * z[base + self.gx] + w[3] * z[base + self.gx + 1]
        })
    }

    /// out += Bᵀ·r (sequential scatter keeps the result deterministic).
    fn scatter_at(&self, r: &[f64], out: &mut [f64]) {
        for ((base, w), &ri) in self.entries.iter().zip(r) {
            out[*base] += w[0] * ri;
            out[*base + 1] += w[1] * ri;
            out[*base + self.gx] += w[2] * ri;
            out[*base + self.gx + 1] += w[3] * ri;
        }
    }

    /// R·z — second differences along grid rows then columns.
    fn apply_r(&self, z: &[f64]) -> Vec<f64> {
        let gx = self.gx;
        let row_part = exec::par_map_indices(self.n_row_reg, |k| {
            let iy = k / (gx - 2);
            let ix = k % (gx - 2) + 1;
            let i = iy * gx + ix;
            (z[i - 1] - 2.0 * z[i] + z[i + 1]) * self.inv_hx2
        });
        let gy = self.gy;
        let col_part = exec::par_map_indices(self.n_col_reg, |k| {
            let ix = k / (gy - 2);
            let iy = k % (gy - 2) + 1;
            let i = iy * gx + ix;
            (z[i - gx] - 2.0 * z[i] + z[i + gx]) * self.inv_hy2
        });
        let mut out = row_part;
        out.extend_from_slice(&col_part);
        out
    }

    /// out += scale·Rᵀ·r.
    fn scatter_rt(&self, r: &[f64], out: &mut [f64], scale: f64) {
        let gx = self.gx;
        for k in 0..self.n_row_reg {
            let iy = k / (gx - 2);
            let ix = k % (gx - 2) + 1;
            let i = iy * gx + ix;
            let v = scale * r[k] * self.inv_hx2;
            out[i - 1] += v;
            out[i] -= 2.0 * v;
            out[i + 1] += v;
        }
        let gy = self.gy;
        for k in 0..self.n_col_reg {
            let ix = k / (gy - 2);
            let iy = k % (gy - 2) + 1;
            let i = iy * gx + ix;
            let v = scale * r[self.n_row_reg + k] * self.inv_hy2;
            out[i - gx] += v;
            out[i] -= 2.0 * v;
            out[i + gx] += v;
        }
    }

    /// M·z = Bᵀ(B·z) + λ_eff·Rᵀ(R·z).
    fn apply_m(&self, z: &[f64]) -> Vec<f64> {
        let az = self.apply_a(z);
        let rz = self.apply_r(z);
        let mut out = vec![0.0; z.len()];
        self.scatter_at(&az, &mut out);
        self.scatter_rt(&rz, &mut out, self.lambda_eff);
        out
    }

    /// diag(M), the Jacobi preconditioner. Data-rich and data-free nodes
    /// differ by orders of magnitude in diagonal scale, which is exactly
    /// what stalls unpreconditioned CG on masked inputs.
    fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n_nodes()];
        for (base, w) in &self.entries {
            d[*base] += w[0] * w[0];
            d[*base + 1] += w[1] * w[1];
            d[*base + self.gx] += w[2] * w[2];
            d[*base + self.gx + 1] += w[3] * w[3];
        }
        let gx = self.gx;
        let cx = self.lambda_eff * self.inv_hx2 * self.inv_hx2;
        for k in 0..self.n_row_reg {
            let iy = k / (gx - 2);
            let ix = k % (gx - 2) + 1;
            let i = iy * gx + ix;
            d[i - 1] += cx;
            d[i] += 4.0 * cx;
            d[i + 1] += cx;
        }
        let gy = self.gy;
        let cy = self.lambda_eff * self.inv_hy2 * self.inv_hy2;
        for k in 0..self.n_col_reg {
            let ix = k / (gy - 2);
            let iy = k % (gy - 2) + 1;
            let i = iy * gx + ix;
            d[i - gx] += cy;
            d[i] += 4.0 * cy;
            d[i + gx] += cy;
        }
        // Nodes with neither data nor a regularization row only occur on
        // degenerate tiny grids; leave the preconditioner inert there.
        for v in &mut d {
            if *v <= 0.0 {
                *v = 1.0;
            }
        }
        d
    }

    /// Quadratic objective: data misfit plus smoothness energy.
    fn objective(&self, z: &[f64]) -> f64 {
        let az = self.apply_a(z);
        let data: f64 = az
            .iter()
            .zip(&self.targets)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        let reg: f64 = self.apply_r(z).iter().map(|r| r * r).sum();
        data + self.lambda_eff * reg
    }

    /// True iff every node receives weight from at least one data point.
    fn fully_supported(&self) -> bool {
        let mut hit = vec![false; self.n_nodes()];
        for (base, _) in &self.entries {
            hit[*base] = true;
            hit[*base + 1] = true;
            hit[*base + self.gx] = true;
            hit[*base + self.gx + 1] = true;
        }
        hit.iter().all(|&h| h)
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        // Degenerate extent (e.g. a single point cluster): give the grid a
        // token span around the value.
        let pad = lo.abs().max(1.0) * 0.5;
        (lo - pad, lo + pad)
    };
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}

/// Fits a surface grid spanning the points' bounding box.
pub fn gridfit(points: &PointCloud, spec: &GridFitSpec) -> Result<SurfaceGrid> {
    gridfit_traced(points, spec).map(|(g, _)| g)
}

/// Like [`gridfit`], also returning the per-iteration objective values
/// (data misfit + smoothness energy), which are non-increasing.
pub fn gridfit_traced(points: &PointCloud, spec: &GridFitSpec) -> Result<(SurfaceGrid, Vec<f64>)> {
    spec.validate()?;
    let (lo, hi) = points
        .bounds()
        .ok_or_else(|| Error::EmptySelection("gridfit needs at least one point".into()))?;
    let x_axis = linspace(lo[0], hi[0], spec.grid_res.0);
    let y_axis = linspace(lo[1], hi[1], spec.grid_res.1);
    gridfit_on_axes(points, spec, x_axis, y_axis)
}

/// Fits on caller-provided axes (must contain every point).
pub fn gridfit_on_axes(
    points: &PointCloud,
    spec: &GridFitSpec,
    x_axis: Vec<f64>,
    y_axis: Vec<f64>,
) -> Result<(SurfaceGrid, Vec<f64>)> {
    spec.validate()?;
    if points.is_empty() {
        return Err(Error::EmptySelection("gridfit needs at least one point".into()));
    }
    let op = FitOperator::build(points, &x_axis, &y_axis, spec.lambda)?;

    if spec.lambda == 0.0 {
        if !op.fully_supported() {
            return Err(Error::Degenerate(
                "λ = 0 with data-free grid nodes: the unregularized system is singular".into(),
            ));
        }
        check_noncollinear(points)?;
    }

    // Right-hand side c = Bᵀ·targets.
    let n = op.n_nodes();
    let mut c = vec![0.0; n];
    op.scatter_at(&op.targets, &mut c);
    let c_norm = norm(&c);
    let diag = op.diagonal();

    // Start from the constant mean-depth surface: it already solves the
    // smoothness term and makes the fit exactly equivariant to z shifts.
    let mean = op.targets.iter().sum::<f64>() / op.targets.len() as f64;
    let mut z = vec![mean; n];

    // Jacobi-preconditioned conjugate gradient. The stored residual is
    // recomputed from scratch periodically so floating-point drift cannot
    // stall convergence just above the tolerance.
    let exact_residual = |z: &[f64]| -> Vec<f64> {
        let mz = op.apply_m(z);
        c.iter().zip(&mz).map(|(a, b)| a - b).collect()
    };
    let mut r = exact_residual(&z);
    let mut s: Vec<f64> = r.iter().zip(&diag).map(|(ri, di)| ri / di).collect();
    let mut p = s.clone();
    let mut rs_old: f64 = r.iter().zip(&s).map(|(a, b)| a * b).sum();
    let mut r_norm = norm(&r);
    let mut trace = vec![op.objective(&z)];
    let mut converged = r_norm <= spec.tolerance * c_norm;

    for iter in 1..=spec.max_iters {
        if converged {
            break;
        }
        let mp = op.apply_m(&p);
        let p_mp: f64 = p.iter().zip(&mp).map(|(a, b)| a * b).sum();
        if p_mp <= 0.0 {
            // Numerically exhausted search direction; accept the iterate.
            converged = true;
            break;
        }
        let alpha = rs_old / p_mp;
        for i in 0..n {
            z[i] += alpha * p[i];
        }
        if iter % 64 == 0 {
            r = exact_residual(&z);
        } else {
            for i in 0..n {
                r[i] -= alpha * mp[i];
            }
        }
        trace.push(op.objective(&z));
        r_norm = norm(&r);
        if r_norm <= spec.tolerance * c_norm {
            converged = true;
            break;
        }
        for i in 0..n {
            s[i] = r[i] / diag[i];
        }
        let rs_new: f64 = r.iter().zip(&s).map(|(a, b)| a * b).sum();
        let beta = rs_new / rs_old;
        for i in 0..n {
            p[i] = s[i] + beta * p[i];
        }
        rs_old = rs_new;
    }

    if !converged {
        return Err(Error::SolverDidNotConverge {
            iters: spec.max_iters,
            residual: r_norm / c_norm.max(f64::MIN_POSITIVE),
        });
    }
    Ok((
        SurfaceGrid {
            x_axis,
            y_axis,
            nodes: z,
        },
        trace,
    ))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_noncollinear(points: &PointCloud) -> Result<()> {
    let c = points.centroid().expect("non-empty");
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for p in &points.points {
        let dx = p[0] - c[0];
        let dy = p[1] - c[1];
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    // Smaller eigenvalue of the 2×2 scatter matrix.
    let tr = sxx + syy;
    let det = sxx * syy - sxy * sxy;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    let lam_min = tr / 2.0 - disc;
    if points.len() < 3 || lam_min <= 1e-12 * tr.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "gridfit with λ = 0 needs at least 3 non-collinear points".into(),
        ));
    }
    Ok(())
}

/// The full fusion step: back-project both maps, jitter the horizontal
/// cloud 1 mm left, fit one surface to the union.
pub fn fuse(
    dm_h: &DepthMap,
    dm_v: &DepthMap,
    rig: &CameraRig,
    spec: &GridFitSpec,
) -> Result<SurfaceGrid> {
    if (dm_h.width, dm_h.height) != (dm_v.width, dm_v.height) {
        return Err(Error::ShapeMismatch(format!(
            "depth map resolutions differ: {}x{} vs {}x{}",
            dm_h.width, dm_h.height, dm_v.width, dm_v.height
        )));
    }
    let mut cloud = jitter_x(&depthmap_to_pointcloud(dm_h, rig)?, -1.0);
    cloud.extend(&depthmap_to_pointcloud(dm_v, rig)?);
    gridfit(&cloud, spec)
}
