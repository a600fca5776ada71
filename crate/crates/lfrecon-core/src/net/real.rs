//! Scalar abstraction letting the network run in f32 (training speed) or
//! f64 (finite-difference verification) with one code path.

use num_traits::Float;

/// Floating-point element type of network tensors. The GEMM hook routes to
/// the precision-matched single-threaded kernel, keeping results
/// deterministic and identical across runs.
pub trait Real:
    Float + std::fmt::Debug + std::fmt::Display + Default + Send + Sync + 'static
{
    const PRECISION: &'static str;

    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `c ← alpha·a·b + beta·c` for row-major `a: m×k`, `b: k×n`, `c: m×n`.
    #[allow(clippy::too_many_arguments)]
    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    );
}

impl Real for f32 {
    const PRECISION: &'static str = "f32";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    ) {
        debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        if m == 0 || k == 0 || n == 0 {
            return;
        }
        unsafe {
            matrixmultiply::sgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

impl Real for f64 {
    const PRECISION: &'static str = "f64";

    #[inline]
    fn of_f64(v: f64) -> Self {
        v
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: &[Self],
        b: &[Self],
        beta: Self,
        c: &mut [Self],
    ) {
        debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
        if m == 0 || k == 0 || n == 0 {
            return;
        }
        unsafe {
            matrixmultiply::dgemm(
                m,
                k,
                n,
                alpha,
                a.as_ptr(),
                k as isize,
                1,
                b.as_ptr(),
                n as isize,
                1,
                beta,
                c.as_mut_ptr(),
                n as isize,
                1,
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn check_gemm<T: Real>() {
        // 2×3 · 3×2 against hand computation.
        let a: Vec<T> = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
            .iter()
            .map(|&v| T::of_f64(v))
            .collect();
        let b: Vec<T> = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]
            .iter()
            .map(|&v| T::of_f64(v))
            .collect();
        let mut c = vec![T::of_f64(0.0); 4];
        T::gemm(2, 3, 2, T::of_f64(1.0), &a, &b, T::of_f64(0.0), &mut c);
        let expect = [58.0, 64.0, 139.0, 154.0];
        for (got, want) in c.iter().zip(expect) {
            assert!((got.as_f64() - want).abs() < 1e-6, "{got} vs {want}");
        }
        // beta accumulation.
        T::gemm(2, 3, 2, T::of_f64(1.0), &a, &b, T::of_f64(1.0), &mut c);
        for (got, want) in c.iter().zip(expect) {
            assert!((got.as_f64() - 2.0 * want).abs() < 1e-5);
        }
    }

    #[test]
    fn gemm_matches_hand_computation() {
        check_gemm::<f32>();
        check_gemm::<f64>();
    }
}
