//! Network building blocks with hand-derived backward passes.
//!
//! Every operation is a pure function of its inputs plus a cache captured on
//! the forward pass; batch-axis loops go through [`crate::exec`] and merge
//! per-sample results in index order, so outputs and gradients are bitwise
//! reproducible regardless of worker count.

use crate::exec;

use super::real::Real;
use super::tensor::{Mat, Tensor4};

// ---------------------------------------------------------------------------
// 3×3 convolution, stride 1, zero padding 1, no bias.
// ---------------------------------------------------------------------------

/// Lowers one `[C][H][W]` sample into the im2col matrix `(C·9) × (H·W)`:
/// row `c·9 + (dy·3+dx)` holds the input shifted by `(dy−1, dx−1)`.
fn im2col<T: Real>(x: &[T], c_in: usize, h: usize, w: usize) -> Vec<T> {
    let plane = h * w;
    let mut k = vec![T::zero(); c_in * 9 * plane];
    for c in 0..c_in {
        for (tap, row) in k[c * 9 * plane..(c + 1) * 9 * plane]
            .chunks_exact_mut(plane)
            .enumerate()
        {
            let (dy, dx) = ((tap / 3) as isize - 1, (tap % 3) as isize - 1);
            for y in 0..h as isize {
                let sy = y + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let (x_lo, x_hi) = ((-dx).max(0), (w as isize - dx).min(w as isize));
                for xx in x_lo..x_hi {
                    row[(y * w as isize + xx) as usize] =
                        x[(c * h + sy as usize) * w + (xx + dx) as usize];
                }
            }
        }
    }
    k
}

/// Adjoint of [`im2col`]: scatters the `(C·9) × (H·W)` matrix back onto a
/// `[C][H][W]` sample, summing overlaps.
fn col2im<T: Real>(k: &[T], c_in: usize, h: usize, w: usize) -> Vec<T> {
    let plane = h * w;
    let mut x = vec![T::zero(); c_in * plane];
    for c in 0..c_in {
        for (tap, row) in k[c * 9 * plane..(c + 1) * 9 * plane]
            .chunks_exact(plane)
            .enumerate()
        {
            let (dy, dx) = ((tap / 3) as isize - 1, (tap % 3) as isize - 1);
            for y in 0..h as isize {
                let sy = y + dy;
                if sy < 0 || sy >= h as isize {
                    continue;
                }
                let (x_lo, x_hi) = ((-dx).max(0), (w as isize - dx).min(w as isize));
                for xx in x_lo..x_hi {
                    let xi = (c * h + sy as usize) * w + (xx + dx) as usize;
                    x[xi] = x[xi] + row[(y * w as isize + xx) as usize];
                }
            }
        }
    }
    x
}

/// `weight`: `(C_out) × (C_in·9)` row-major. Output keeps the spatial size.
pub fn conv3x3_forward<T: Real>(x: &Tensor4<T>, weight: &Mat<T>) -> Tensor4<T> {
    let (n, c_in, h, w) = x.shape();
    debug_assert_eq!(weight.cols, c_in * 9, "conv weight fan-in");
    let c_out = weight.rows;
    let plane = h * w;
    let per_sample: Vec<Vec<T>> = exec::par_map_indices(n, |i| {
        let k = im2col(x.sample(i), c_in, h, w);
        let mut out = vec![T::zero(); c_out * plane];
        T::gemm(c_out, c_in * 9, plane, T::one(), &weight.data, &k, T::zero(), &mut out);
        out
    });
    let mut out = Tensor4::zeros(n, c_out, h, w);
    for (i, s) in per_sample.into_iter().enumerate() {
        out.sample_mut(i).copy_from_slice(&s);
    }
    out
}

/// Returns `(dx, dweight)`. The weight gradient is accumulated over samples
/// in index order.
pub fn conv3x3_backward<T: Real>(
    x: &Tensor4<T>,
    weight: &Mat<T>,
    dy: &Tensor4<T>,
) -> (Tensor4<T>, Mat<T>) {
    let (n, c_in, h, w) = x.shape();
    let c_out = weight.rows;
    let plane = h * w;
    debug_assert_eq!(dy.shape(), (n, c_out, h, w));
    let per_sample: Vec<(Vec<T>, Vec<T>)> = exec::par_map_indices(n, |i| {
        let k = im2col(x.sample(i), c_in, h, w);
        // dW_i = dY_i · K_i^T  —  (c_out × plane) · (plane × c_in·9).
        let mut kt = vec![T::zero(); plane * c_in * 9];
        for r in 0..c_in * 9 {
            for col in 0..plane {
                kt[col * c_in * 9 + r] = k[r * plane + col];
            }
        }
        let mut dw = vec![T::zero(); c_out * c_in * 9];
        T::gemm(c_out, plane, c_in * 9, T::one(), dy.sample(i), &kt, T::zero(), &mut dw);
        // dK_i = W^T · dY_i, then scatter back to the input layout.
        let mut wt = vec![T::zero(); c_in * 9 * c_out];
        for r in 0..c_out {
            for col in 0..c_in * 9 {
                wt[col * c_out + r] = weight.data[r * c_in * 9 + col];
            }
        }
        let mut dk = vec![T::zero(); c_in * 9 * plane];
        T::gemm(c_in * 9, c_out, plane, T::one(), &wt, dy.sample(i), T::zero(), &mut dk);
        (col2im(&dk, c_in, h, w), dw)
    });
    let mut dx = Tensor4::zeros(n, c_in, h, w);
    let mut dweight = Mat::zeros(c_out, c_in * 9);
    for (i, (dxi, dwi)) in per_sample.into_iter().enumerate() {
        dx.sample_mut(i).copy_from_slice(&dxi);
        for (a, b) in dweight.data.iter_mut().zip(&dwi) {
            *a = *a + *b;
        }
    }
    (dx, dweight)
}

// ---------------------------------------------------------------------------
// Batch normalization (per channel over N·H·W).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::one(); channels],
            beta: vec![T::zero(); channels],
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Forward-pass byproducts needed by the backward pass and the
/// running-statistics update.
#[derive(Debug, Clone)]
pub struct BnCache<T> {
    /// Per-channel batch mean.
    pub mean: Vec<T>,
    /// Per-channel batch (population) variance.
    pub var: Vec<T>,
    /// Per-channel 1/√(σ²+ε) from batch statistics.
    pub inv_std: Vec<T>,
}

/// Batch-statistics forward without side effects: normalizes with the
/// statistics of `x` itself. Use [`batchnorm_update_running`] afterwards to
/// fold the cached statistics into the running estimates.
pub fn batchnorm_forward_batch<T: Real>(
    x: &Tensor4<T>,
    bn: &BatchNorm<T>,
    eps: T,
) -> (Tensor4<T>, BnCache<T>) {
    let (n, c, h, w) = x.shape();
    debug_assert_eq!(c, bn.channels());
    let m = T::of_f64((n * h * w) as f64);
    let mut mean = vec![T::zero(); c];
    let mut var = vec![T::zero(); c];
    for ch in 0..c {
        let mut sum = T::zero();
        for i in 0..n {
            for &v in &x.sample(i)[ch * h * w..(ch + 1) * h * w] {
                sum = sum + v;
            }
        }
        let mu = sum / m;
        let mut ss = T::zero();
        for i in 0..n {
            for &v in &x.sample(i)[ch * h * w..(ch + 1) * h * w] {
                let d = v - mu;
                ss = ss + d * d;
            }
        }
        mean[ch] = mu;
        var[ch] = ss / m;
    }
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = Tensor4::zeros(n, c, h, w);
    for i in 0..n {
        let xs = x.sample(i);
        let ys = y.sample_mut(i);
        for ch in 0..c {
            let (g, b, mu, is) = (bn.gamma[ch], bn.beta[ch], mean[ch], inv_std[ch]);
            for p in ch * h * w..(ch + 1) * h * w {
                ys[p] = g * (xs[p] - mu) * is + b;
            }
        }
    }
    (y, BnCache { mean, var, inv_std })
}

/// `running ← momentum·running + (1−momentum)·batch`.
pub fn batchnorm_update_running<T: Real>(bn: &mut BatchNorm<T>, cache: &BnCache<T>, momentum: T) {
    for ch in 0..bn.channels() {
        bn.running_mean[ch] =
            momentum * bn.running_mean[ch] + (T::one() - momentum) * cache.mean[ch];
        bn.running_var[ch] = momentum * bn.running_var[ch] + (T::one() - momentum) * cache.var[ch];
    }
}

/// Training-mode forward: batch normalization plus running-stat update.
pub fn batchnorm_forward_train<T: Real>(
    x: &Tensor4<T>,
    bn: &mut BatchNorm<T>,
    eps: T,
    momentum: T,
) -> (Tensor4<T>, BnCache<T>) {
    let (y, cache) = batchnorm_forward_batch(x, bn, eps);
    batchnorm_update_running(bn, &cache, momentum);
    (y, cache)
}

/// Inference-mode forward: uses the stored running statistics only.
pub fn batchnorm_forward_eval<T: Real>(x: &Tensor4<T>, bn: &BatchNorm<T>, eps: T) -> Tensor4<T> {
    let (n, c, h, w) = x.shape();
    debug_assert_eq!(c, bn.channels());
    let mut y = Tensor4::zeros(n, c, h, w);
    for i in 0..n {
        let xs = x.sample(i);
        let ys = y.sample_mut(i);
        for ch in 0..c {
            let is = T::one() / (bn.running_var[ch] + eps).sqrt();
            let (g, b, mu) = (bn.gamma[ch], bn.beta[ch], bn.running_mean[ch]);
            for p in ch * h * w..(ch + 1) * h * w {
                ys[p] = g * (xs[p] - mu) * is + b;
            }
        }
    }
    y
}

/// Returns `(dx, dgamma, dbeta)` for training-mode normalization (the batch
/// statistics are functions of `x`, and their contribution is included).
pub fn batchnorm_backward<T: Real>(
    x: &Tensor4<T>,
    bn: &BatchNorm<T>,
    cache: &BnCache<T>,
    dy: &Tensor4<T>,
) -> (Tensor4<T>, Vec<T>, Vec<T>) {
    let (n, c, h, w) = x.shape();
    let m = T::of_f64((n * h * w) as f64);
    let mut dx = Tensor4::zeros(n, c, h, w);
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for ch in 0..c {
        let (mu, is, g) = (cache.mean[ch], cache.inv_std[ch], bn.gamma[ch]);
        // Channel-wise sums of dy and dy·x̂.
        let mut sum_dy = T::zero();
        let mut sum_dy_xh = T::zero();
        for i in 0..n {
            let xs = x.sample(i);
            let dys = dy.sample(i);
            for p in ch * h * w..(ch + 1) * h * w {
                let xh = (xs[p] - mu) * is;
                sum_dy = sum_dy + dys[p];
                sum_dy_xh = sum_dy_xh + dys[p] * xh;
            }
        }
        dgamma[ch] = sum_dy_xh;
        dbeta[ch] = sum_dy;
        // dx = (γ·is/m)·(m·dy − Σdy − x̂·Σ(dy·x̂))
        let scale = g * is / m;
        for i in 0..n {
            let xs = x.sample(i);
            let dys = dy.sample(i);
            let dxs = dx.sample_mut(i);
            for p in ch * h * w..(ch + 1) * h * w {
                let xh = (xs[p] - mu) * is;
                dxs[p] = scale * (m * dys[p] - sum_dy - xh * sum_dy_xh);
            }
        }
    }
    (dx, dgamma, dbeta)
}

// ---------------------------------------------------------------------------
// ReLU.
// ---------------------------------------------------------------------------

pub fn relu_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let mut y = x.clone();
    for v in &mut y.data {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
    y
}

/// `x` is the pre-activation input captured on the forward pass.
pub fn relu_backward<T: Real>(x: &Tensor4<T>, dy: &Tensor4<T>) -> Tensor4<T> {
    let mut dx = dy.clone();
    for (d, &v) in dx.data.iter_mut().zip(&x.data) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// 2×2 average pool, stride 2, ceiling semantics: odd extents keep their last
// row/column as a partial cell whose divisor counts only covered inputs.
// ---------------------------------------------------------------------------

/// Output extents of the pool for the given input extents.
pub fn pooled_extent(e: usize) -> usize {
    e.div_ceil(2)
}

pub fn avgpool_forward<T: Real>(x: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = x.shape();
    let (h2, w2) = (pooled_extent(h), pooled_extent(w));
    let mut y = Tensor4::zeros(n, c, h2, w2);
    for i in 0..n {
        for ch in 0..c {
            for oy in 0..h2 {
                for ox in 0..w2 {
                    let mut sum = T::zero();
                    let mut cnt = 0usize;
                    for yy in 2 * oy..(2 * oy + 2).min(h) {
                        for xx in 2 * ox..(2 * ox + 2).min(w) {
                            sum = sum + x.data[x.idx(i, ch, yy, xx)];
                            cnt += 1;
                        }
                    }
                    let p = y.idx(i, ch, oy, ox);
                    y.data[p] = sum / T::of_f64(cnt as f64);
                }
            }
        }
    }
    y
}

pub fn avgpool_backward<T: Real>(x_shape: (usize, usize, usize, usize), dy: &Tensor4<T>) -> Tensor4<T> {
    let (n, c, h, w) = x_shape;
    let mut dx = Tensor4::zeros(n, c, h, w);
    for i in 0..n {
        for ch in 0..c {
            for oy in 0..dy.h {
                for ox in 0..dy.w {
                    let y_hi = (2 * oy + 2).min(h);
                    let x_hi = (2 * ox + 2).min(w);
                    let cnt = (y_hi - 2 * oy) * (x_hi - 2 * ox);
                    let g = dy.data[dy.idx(i, ch, oy, ox)] / T::of_f64(cnt as f64);
                    for yy in 2 * oy..y_hi {
                        for xx in 2 * ox..x_hi {
                            let p = dx.idx(i, ch, yy, xx);
                            dx.data[p] = dx.data[p] + g;
                        }
                    }
                }
            }
        }
    }
    dx
}

// ---------------------------------------------------------------------------
// Fully connected layer: y = x·Wᵀ + b, x: (N×in), W: (out×in).
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T> {
    pub weight: Mat<T>,
    pub bias: Vec<T>,
}

pub fn linear_forward<T: Real>(x: &Mat<T>, layer: &Linear<T>) -> Mat<T> {
    let (n, fin) = (x.rows, x.cols);
    let fout = layer.weight.rows;
    debug_assert_eq!(fin, layer.weight.cols, "linear fan-in");
    let wt = layer.weight.transpose();
    let mut y = Mat::zeros(n, fout);
    T::gemm(n, fin, fout, T::one(), &x.data, &wt.data, T::zero(), &mut y.data);
    for r in 0..n {
        for c in 0..fout {
            y.data[r * fout + c] = y.data[r * fout + c] + layer.bias[c];
        }
    }
    y
}

/// Returns `(dx, dweight, dbias)`; `dbias` is the column sums of `dy`.
pub fn linear_backward<T: Real>(x: &Mat<T>, layer: &Linear<T>, dy: &Mat<T>) -> (Mat<T>, Mat<T>, Vec<T>) {
    let (n, fin) = (x.rows, x.cols);
    let fout = layer.weight.rows;
    debug_assert_eq!(dy.rows, n);
    debug_assert_eq!(dy.cols, fout);
    // dW = dyᵀ·x : (out×N)·(N×in)
    let dyt = dy.transpose();
    let mut dw = Mat::zeros(fout, fin);
    T::gemm(fout, n, fin, T::one(), &dyt.data, &x.data, T::zero(), &mut dw.data);
    let mut db = vec![T::zero(); fout];
    for r in 0..n {
        for c in 0..fout {
            db[c] = db[c] + dy.data[r * fout + c];
        }
    }
    // dx = dy·W : (N×out)·(out×in)
    let mut dx = Mat::zeros(n, fin);
    T::gemm(n, fout, fin, T::one(), &dy.data, &layer.weight.data, T::zero(), &mut dx.data);
    (dx, dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_rng;
    use rand::Rng;

    fn random_tensor(seed: u64, n: usize, c: usize, h: usize, w: usize) -> Tensor4<f64> {
        let mut rng = derive_rng(seed, "layers-test");
        let data = (0..n * c * h * w).map(|_| rng.gen_range(-1.0..1.0)).collect();
        Tensor4::from_vec(n, c, h, w, data).unwrap()
    }

    /// Direct (quadruple-loop) 3×3 convolution for cross-checking im2col.
    fn conv_reference(x: &Tensor4<f64>, weight: &Mat<f64>) -> Tensor4<f64> {
        let (n, c_in, h, w) = x.shape();
        let c_out = weight.rows;
        let mut y = Tensor4::zeros(n, c_out, h, w);
        for i in 0..n {
            for co in 0..c_out {
                for yy in 0..h as isize {
                    for xx in 0..w as isize {
                        let mut acc = 0.0;
                        for ci in 0..c_in {
                            for dy in -1..=1isize {
                                for dx in -1..=1isize {
                                    let (sy, sx) = (yy + dy, xx + dx);
                                    if sy < 0 || sy >= h as isize || sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    let wv = weight.at(co, ci * 9 + ((dy + 1) * 3 + dx + 1) as usize);
                                    acc += wv * x.data[x.idx(i, ci, sy as usize, sx as usize)];
                                }
                            }
                        }
                        let p = y.idx(i, co, yy as usize, xx as usize);
                        y.data[p] = acc;
                    }
                }
            }
        }
        y
    }

    #[test]
    fn conv_matches_direct_loop() {
        let x = random_tensor(1, 2, 3, 5, 7);
        let mut rng = derive_rng(2, "layers-test");
        let weight =
            Mat::from_vec(4, 3 * 9, (0..4 * 27).map(|_| rng.gen_range(-0.5..0.5)).collect())
                .unwrap();
        let got = conv3x3_forward(&x, &weight);
        let want = conv_reference(&x, &weight);
        for (a, b) in got.data.iter().zip(&want.data) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn conv_identity_kernel_is_identity() {
        let x = random_tensor(3, 1, 2, 6, 6);
        let mut weight = Mat::zeros(2, 2 * 9);
        *weight.at_mut(0, 4) = 1.0; // centre tap of channel 0
        *weight.at_mut(1, 9 + 4) = 1.0; // centre tap of channel 1
        let y = conv3x3_forward(&x, &weight);
        assert_eq!(y.data, x.data);
    }

    /// Checks ⟨conv(x), u⟩ = ⟨x, convᵀ(u)⟩ — col2im is the exact adjoint.
    #[test]
    fn conv_backward_is_adjoint() {
        let x = random_tensor(5, 2, 3, 4, 5);
        let mut rng = derive_rng(6, "layers-test");
        let weight =
            Mat::from_vec(2, 27, (0..54).map(|_| rng.gen_range(-0.5..0.5)).collect()).unwrap();
        let u = random_tensor(7, 2, 2, 4, 5);
        let y = conv3x3_forward(&x, &weight);
        let (dx, _) = conv3x3_backward(&x, &weight, &u);
        let lhs: f64 = y.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
    }

    #[test]
    fn batchnorm_normalizes_batch() {
        let x = random_tensor(8, 2, 3, 4, 4);
        let mut bn = BatchNorm::new(3);
        let (y, _) = batchnorm_forward_train(&x, &mut bn, 1e-12, 0.9);
        let m = (2 * 4 * 4) as f64;
        for ch in 0..3 {
            let mut mean = 0.0;
            let mut var = 0.0;
            for i in 0..2 {
                for &v in &y.sample(i)[ch * 16..(ch + 1) * 16] {
                    mean += v;
                }
            }
            mean /= m;
            for i in 0..2 {
                for &v in &y.sample(i)[ch * 16..(ch + 1) * 16] {
                    var += (v - mean) * (v - mean);
                }
            }
            var /= m;
            assert!(mean.abs() < 1e-9, "channel {ch} mean {mean}");
            assert!((var - 1.0).abs() < 1e-6, "channel {ch} var {var}");
        }
        // Running stats moved from their init toward the batch statistics.
        assert!(bn.running_mean.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn batchnorm_eval_is_deterministic_and_uses_running_stats() {
        let x = random_tensor(9, 2, 2, 3, 3);
        let mut bn = BatchNorm::new(2);
        let _ = batchnorm_forward_train(&x, &mut bn, 1e-5, 0.5);
        let a = batchnorm_forward_eval(&x, &bn, 1e-5);
        let b = batchnorm_forward_eval(&x, &bn, 1e-5);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn batchnorm_backward_matches_finite_differences() {
        let x = random_tensor(10, 2, 2, 2, 3);
        let mut bn = BatchNorm::new(2);
        bn.gamma = vec![1.3, 0.7];
        bn.beta = vec![0.1, -0.2];
        let dy = random_tensor(11, 2, 2, 2, 3);
        let (_, cache) = batchnorm_forward_train(&x.clone(), &mut bn.clone(), 1e-5, 1.0);
        let (dx, dgamma, dbeta) = batchnorm_backward(&x, &bn, &cache, &dy);

        let loss = |xp: &Tensor4<f64>, bnp: &BatchNorm<f64>| -> f64 {
            let (y, _) = batchnorm_forward_train(xp, &mut bnp.clone(), 1e-5, 1.0);
            y.data.iter().zip(&dy.data).map(|(a, b)| a * b).sum()
        };
        let eps = 1e-6;
        for p in [0, 5, 17, 23] {
            let mut xp = x.clone();
            xp.data[p] += eps;
            let mut xm = x.clone();
            xm.data[p] -= eps;
            let fd = (loss(&xp, &bn) - loss(&xm, &bn)) / (2.0 * eps);
            assert!((fd - dx.data[p]).abs() < 1e-6, "dx[{p}]: fd {fd} vs {}", dx.data[p]);
        }
        for ch in 0..2 {
            let mut bp = bn.clone();
            bp.gamma[ch] += eps;
            let mut bm = bn.clone();
            bm.gamma[ch] -= eps;
            let fd = (loss(&x, &bp) - loss(&x, &bm)) / (2.0 * eps);
            assert!((fd - dgamma[ch]).abs() < 1e-6, "dgamma[{ch}]");
            let mut bp = bn.clone();
            bp.beta[ch] += eps;
            let mut bm = bn.clone();
            bm.beta[ch] -= eps;
            let fd = (loss(&x, &bp) - loss(&x, &bm)) / (2.0 * eps);
            assert!((fd - dbeta[ch]).abs() < 1e-6, "dbeta[{ch}]");
        }
    }

    #[test]
    fn relu_roundtrip() {
        let x = Tensor4::from_vec(1, 1, 1, 4, vec![-1.0, 0.0, 2.0, -0.5]).unwrap();
        let y = relu_forward(&x);
        assert_eq!(y.data, vec![0.0, 0.0, 2.0, 0.0]);
        let dy = Tensor4::from_vec(1, 1, 1, 4, vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let dx = relu_backward(&x, &dy);
        assert_eq!(dx.data, vec![0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn avgpool_handles_odd_extents_with_partial_cells() {
        // 3×3 input: the corner cell averages 4 values, edges 2, corner 1.
        let x = Tensor4::from_vec(
            1,
            1,
            3,
            3,
            vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
        )
        .unwrap();
        let y = avgpool_forward(&x);
        assert_eq!((y.h, y.w), (2, 2));
        assert_eq!(y.data, vec![(1.0 + 2.0 + 4.0 + 5.0) / 4.0, (3.0 + 6.0) / 2.0, (7.0 + 8.0) / 2.0, 9.0]);
        assert_eq!(pooled_extent(15), 8);
        assert_eq!(pooled_extent(8), 4);
        assert_eq!(pooled_extent(4), 2);
    }

    #[test]
    fn avgpool_backward_is_adjoint() {
        let x = random_tensor(13, 2, 3, 5, 7);
        let y = avgpool_forward(&x);
        let u = random_tensor(14, 2, 3, y.h, y.w);
        let dx = avgpool_backward(x.shape(), &u);
        let lhs: f64 = y.data.iter().zip(&u.data).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data.iter().zip(&dx.data).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }

    #[test]
    fn linear_matches_hand_case_and_bias_grad_is_column_sums() {
        let x = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let layer = Linear {
            weight: Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]).unwrap(),
            bias: vec![10.0, 20.0],
        };
        let y = linear_forward(&x, &layer);
        assert_eq!(y.data, vec![1.0 - 3.0 + 10.0, 3.0 + 20.0, 4.0 - 6.0 + 10.0, 7.5 + 20.0]);
        let dy = Mat::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (dx, dw, db) = linear_backward(&x, &layer, &dy);
        assert_eq!(db, vec![4.0, 6.0]);
        // dW[0][0] = Σ_n dy[n][0]·x[n][0] = 1·1 + 3·4 = 13.
        assert_eq!(dw.at(0, 0), 13.0);
        // dx[0][0] = Σ_o dy[0][o]·W[o][0] = 1·1 + 2·0.5 = 2.
        assert_eq!(dx.at(0, 0), 2.0);
    }
}
