//! Nearest-neighbor queries over a uniform spatial hash grid, sized from
//! the median spacing of a point sample. Read-only after construction.

use crate::error::{Error, Result};

/// Uniform-grid nearest-neighbor index over a fixed point set.
pub struct SpatialIndex {
    points: Vec<[f64; 3]>,
    origin: [f64; 3],
    cell: [f64; 3],
    dims: [usize; 3],
    /// CSR bucket layout: `order[starts[b]..starts[b+1]]` are the point
    /// indices in bucket `b`.
    starts: Vec<u32>,
    order: Vec<u32>,
}

/// Caps the grid at 96³ cells regardless of extent.
const MAX_CELLS_PER_AXIS: usize = 96;

/// Median nearest-neighbor distance of (a stride-sampled subset of) the
/// points; the scale the hash cells are sized to.
fn median_spacing(points: &[[f64; 3]]) -> f64 {
    let stride = (points.len() / 256).max(1);
    let sample: Vec<[f64; 3]> = points.iter().step_by(stride).copied().collect();
    let mut dists: Vec<f64> = sample
        .iter()
        .enumerate()
        .map(|(i, p)| {
            sample
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| dist2(*p, *q))
                .fold(f64::INFINITY, f64::min)
        })
        .filter(|d| d.is_finite())
        .collect();
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let med = dists[dists.len() / 2].sqrt();
    // Stride sampling dilates spacing roughly with the cube root of the
    // sampling factor; compensate so cells track the full-set spacing.
    let med = med / (stride as f64).cbrt();
    if med > 0.0 {
        med
    } else {
        1.0
    }
}

#[inline]
fn dist2(a: [f64; 3], b: [f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

impl SpatialIndex {
    pub fn build(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptySelection(
                "cannot build a nearest-neighbor index over zero points".into(),
            ));
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for i in 0..3 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let spacing = median_spacing(points);
        let mut dims = [0usize; 3];
        let mut cell = [0.0f64; 3];
        for i in 0..3 {
            let span = (hi[i] - lo[i]).max(spacing * 1e-6);
            dims[i] = ((span / spacing).ceil() as usize).clamp(1, MAX_CELLS_PER_AXIS);
            cell[i] = span / dims[i] as f64;
        }

        let n_cells = dims[0] * dims[1] * dims[2];
        let bucket_of = |p: &[f64; 3]| -> usize {
            let mut idx = [0usize; 3];
            for i in 0..3 {
                idx[i] = (((p[i] - lo[i]) / cell[i]) as usize).min(dims[i] - 1);
            }
            (idx[2] * dims[1] + idx[1]) * dims[0] + idx[0]
        };

        // Counting sort into CSR buckets.
        let mut counts = vec![0u32; n_cells + 1];
        for p in points {
            counts[bucket_of(p) + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let starts = counts.clone();
        let mut cursor = counts;
        let mut order = vec![0u32; points.len()];
        for (i, p) in points.iter().enumerate() {
            let b = bucket_of(p);
            order[cursor[b] as usize] = i as u32;
            cursor[b] += 1;
        }

        Ok(SpatialIndex {
            points: points.to_vec(),
            origin: lo,
            cell,
            dims,
            starts,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> [f64; 3] {
        self.points[i]
    }

    /// Index and Euclidean distance of the nearest stored point.
    pub fn nearest(&self, q: [f64; 3]) -> (usize, f64) {
        let mut home = [0isize; 3];
        for i in 0..3 {
            home[i] = (((q[i] - self.origin[i]) / self.cell[i]).floor() as isize)
                .clamp(0, self.dims[i] as isize - 1);
        }
        let min_cell = self.cell.iter().cloned().fold(f64::INFINITY, f64::min);
        let max_shell = self.dims.iter().max().copied().unwrap_or(1) + 1;

        let mut best = (usize::MAX, f64::INFINITY); // (index, squared distance)
        for r in 0..=max_shell as isize {
            self.scan_shell(home, r, q, &mut best);
            // Any point in a cell at Chebyshev shell ≥ r+1 is separated
            // from q by at least r whole cells along some axis, so once the
            // best distance is within r·min_cell no farther shell can win.
            if best.0 != usize::MAX && best.1.sqrt() <= (r as f64) * min_cell {
                break;
            }
        }
        debug_assert!(best.0 != usize::MAX, "grid covers all points");
        (best.0, best.1.sqrt())
    }

    /// Scans all in-range cells at exact Chebyshev distance `r` from `home`.
    fn scan_shell(&self, home: [isize; 3], r: isize, q: [f64; 3], best: &mut (usize, f64)) {
        let (dx_lo, dx_hi) = (home[0] - r, home[0] + r);
        for ix in dx_lo..=dx_hi {
            if ix < 0 || ix >= self.dims[0] as isize {
                continue;
            }
            for iy in (home[1] - r)..=(home[1] + r) {
                if iy < 0 || iy >= self.dims[1] as isize {
                    continue;
                }
                for iz in (home[2] - r)..=(home[2] + r) {
                    if iz < 0 || iz >= self.dims[2] as isize {
                        continue;
                    }
                    let cheb = (ix - home[0])
                        .abs()
                        .max((iy - home[1]).abs())
                        .max((iz - home[2]).abs());
                    if cheb != r {
                        continue;
                    }
                    if self.cell_box_dist2([ix, iy, iz], q) >= best.1 {
                        continue;
                    }
                    let b = ((iz as usize * self.dims[1]) + iy as usize) * self.dims[0]
                        + ix as usize;
                    for &pi in &self.order[self.starts[b] as usize..self.starts[b + 1] as usize] {
                        let d2 = dist2(self.points[pi as usize], q);
                        if d2 < best.1 || (d2 == best.1 && (pi as usize) < best.0) {
                            *best = (pi as usize, d2);
                        }
                    }
                }
            }
        }
    }

    /// Squared distance from `q` to the axis-aligned box of a cell.
    fn cell_box_dist2(&self, idx: [isize; 3], q: [f64; 3]) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let lo = self.origin[i] + idx[i] as f64 * self.cell[i];
            let hi = lo + self.cell[i];
            let d = if q[i] < lo {
                lo - q[i]
            } else if q[i] > hi {
                q[i] - hi
            } else {
                0.0
            };
            d2 += d * d;
        }
        d2
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn brute_nearest(points: &[[f64; 3]], q: [f64; 3]) -> (usize, f64) {
        let mut best = (0usize, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d2 = dist2(*p, q);
            if d2 < best.1 {
                best = (i, d2);
            }
        }
        (best.0, best.1.sqrt())
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = derive_rng(31, "nn-test");
        let points: Vec<[f64; 3]> = (0..2000)
            .map(|_| {
                [
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(-50.0..50.0),
                    rng.gen_range(250.0..380.0),
                ]
            })
            .collect();
        let index = SpatialIndex::build(&points).unwrap();
        for _ in 0..300 {
            let q = [
                rng.gen_range(-70.0..70.0),
                rng.gen_range(-70.0..70.0),
                rng.gen_range(200.0..420.0),
            ];
            let (gi, gd) = index.nearest(q);
            let (bi, bd) = brute_nearest(&points, q);
            assert!(
                (gd - bd).abs() < 1e-12,
                "grid {gd} (idx {gi}) vs brute {bd} (idx {bi}) at {q:?}"
            );
        }
    }

    #[test]
    fn exact_hit_returns_zero_distance() {
        let points = vec![[0.0, 0.0, 0.0], [1.0, 2.0, 3.0], [-4.0, 0.5, 2.0]];
        let index = SpatialIndex::build(&points).unwrap();
        let (i, d) = index.nearest([1.0, 2.0, 3.0]);
        assert_eq!(i, 1);
        assert_eq!(d, 0.0);
    }

    #[test]
    fn empty_set_rejected() {
        assert!(SpatialIndex::build(&[]).is_err());
    }

    #[test]
    fn coincident_points_handled() {
        let points = vec![[1.0, 1.0, 1.0]; 50];
        let index = SpatialIndex::build(&points).unwrap();
        let (_, d) = index.nearest([1.5, 1.0, 1.0]);
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn queries_far_outside_the_bounds_still_resolve() {
        let points = vec![[0.0, 0.0, 300.0], [10.0, 0.0, 300.0], [0.0, 10.0, 305.0]];
        let index = SpatialIndex::build(&points).unwrap();
        let (i, _) = index.nearest([1000.0, 1000.0, -1000.0]);
        let (bi, _) = brute_nearest(&points, [1000.0, 1000.0, -1000.0]);
        assert_eq!(i, bi);
    }
}
