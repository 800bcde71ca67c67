//! Spectral building blocks on periodic tensor grids.
//!
//! One-dimensional Fourier operators (differentiation, phase shifts) are
//! small dense real matrices applied along one axis of a row-major array.
//! Multi-axis FFTs back the circular convolutions of the coefficient
//! pipeline.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

/// Wavenumber of mode index `m` on a box of half-width `half_width` with `n` points.
/// The Nyquist mode is returned with its positive sign.
pub fn wavenumber(m: usize, n: usize, half_width: f64) -> f64 {
    let k = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
    k * PI / half_width
}

/// Wavenumber used for first derivatives: Nyquist mode zeroed.
pub fn diff_wavenumber(m: usize, n: usize, half_width: f64) -> f64 {
    if 2 * m == n {
        0.0
    } else {
        wavenumber(m, n, half_width)
    }
}

/// Dense `n x n` row-major matrix of the Fourier first derivative with the
/// Nyquist mode zeroed.
pub fn diff_matrix(n: usize, half_width: f64) -> Vec<f64> {
    let h = 2.0 * half_width / n as f64;
    let kstep = PI / half_width;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = (i as f64 - j as f64) * h;
            let mut s = 0.0;
            for k in 1..n / 2 {
                let kk = k as f64 * kstep;
                s += kk * (kk * d).sin();
            }
            m[i * n + j] = -2.0 * s / n as f64;
        }
    }
    m
}

/// Dense matrix of the trigonometric-interpolant shift `g(x) = f(x - s)`.
/// The Nyquist mode is carried by its cosine part so the output stays real.
pub fn shift_matrix(n: usize, half_width: f64, s: f64) -> Vec<f64> {
    let h = 2.0 * half_width / n as f64;
    let kstep = PI / half_width;
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let d = (i as f64 - j as f64) * h - s;
            let mut acc = 1.0;
            for k in 1..n / 2 {
                acc += 2.0 * (k as f64 * kstep * d).cos();
            }
            acc += (0.5 * n as f64 * kstep * d).cos();
            m[i * n + j] = acc / n as f64;
        }
    }
    m
}

fn split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, n, inner)
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

fn apply_block(src: &[f64], dst: &mut [f64], n: usize, inner: usize, mat: &[f64]) {
    if inner == 1 {
        for i in 0..n {
            let row = &mat[i * n..(i + 1) * n];
            dst[i] = row.iter().zip(src).map(|(a, b)| a * b).sum();
        }
    } else {
        for i in 0..n {
            let out = &mut dst[i * inner..(i + 1) * inner];
            out.fill(0.0);
            for k in 0..n {
                let a = mat[i * n + k];
                if a != 0.0 {
                    axpy(a, &src[k * inner..(k + 1) * inner], out);
                }
            }
        }
    }
}

/// `dst = M src` along `axis` of a row-major array with the given shape.
pub fn apply_axis(src: &[f64], dst: &mut [f64], shape: &[usize], axis: usize, mat: &[f64]) {
    let (_, n, inner) = split(shape, axis);
    debug_assert_eq!(mat.len(), n * n);
    debug_assert_eq!(src.len(), dst.len());
    let block = n * inner;
    dst.par_chunks_mut(block)
        .zip(src.par_chunks(block))
        .for_each(|(d, s)| apply_block(s, d, n, inner, mat));
}

/// Like [`apply_axis`], but the matrix is selected by the index along
/// `sel_axis`, which must come after `axis`.
pub fn apply_axis_selected(
    src: &[f64],
    dst: &mut [f64],
    shape: &[usize],
    axis: usize,
    sel_axis: usize,
    mats: &[Vec<f64>],
) {
    assert!(sel_axis > axis);
    let (_, n, inner) = split(shape, axis);
    let ns = shape[sel_axis];
    let post: usize = shape[sel_axis + 1..].iter().product();
    let pre = inner / (ns * post);
    let block = n * inner;
    dst.par_chunks_mut(block)
        .zip(src.par_chunks(block))
        .for_each(|(d, s)| {
            for i in 0..n {
                let out = &mut d[i * inner..(i + 1) * inner];
                out.fill(0.0);
                for k in 0..n {
                    let inrow = &s[k * inner..(k + 1) * inner];
                    for p in 0..pre {
                        for (sel, mat) in mats.iter().enumerate().take(ns) {
                            let a = mat[i * n + k];
                            let off = (p * ns + sel) * post;
                            axpy(a, &inrow[off..off + post], &mut out[off..off + post]);
                        }
                    }
                }
            }
        });
}

/// Multi-dimensional complex FFT over a subset of axes of a row-major array.
pub struct FftNd {
    shape: Vec<usize>,
    axes: Vec<usize>,
    fwd: Vec<Arc<dyn Fft<f64>>>,
    inv: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for FftNd {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FftNd")
            .field("shape", &self.shape)
            .field("axes", &self.axes)
            .finish()
    }
}

impl FftNd {
    pub fn new(shape: &[usize], axes: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = axes
            .iter()
            .map(|&a| planner.plan_fft_forward(shape[a]))
            .collect();
        let inv = axes
            .iter()
            .map(|&a| planner.plan_fft_inverse(shape[a]))
            .collect();
        Self {
            shape: shape.to_vec(),
            axes: axes.to_vec(),
            fwd,
            inv,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Number of points covered by the transformed axes.
    pub fn transform_size(&self) -> usize {
        self.axes.iter().map(|&a| self.shape[a]).product()
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        for (t, &a) in self.axes.iter().enumerate() {
            self.axis_pass(data, a, &self.fwd[t]);
        }
    }

    /// Inverse transform including the `1/N` normalization.
    pub fn inverse(&self, data: &mut [Complex64]) {
        for (t, &a) in self.axes.iter().enumerate() {
            self.axis_pass(data, a, &self.inv[t]);
        }
        let s = 1.0 / self.transform_size() as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }

    fn axis_pass(&self, data: &mut [Complex64], axis: usize, fft: &Arc<dyn Fft<f64>>) {
        let (_, n, inner) = split(&self.shape, axis);
        let block = n * inner;
        if inner == 1 {
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(data, &mut scratch);
            return;
        }
        data.par_chunks_mut(block).for_each(|blk| {
            let mut tmp = vec![Complex64::default(); block];
            for i in 0..n {
                for j in 0..inner {
                    tmp[j * n + i] = blk[i * inner + j];
                }
            }
            let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
            fft.process_with_scratch(&mut tmp, &mut scratch);
            for i in 0..n {
                for j in 0..inner {
                    blk[i * inner + j] = tmp[j * n + i];
                }
            }
        });
    }
}

pub fn to_complex(src: &[f64]) -> Vec<Complex64> {
    src.iter().map(|&x| Complex64::new(x, 0.0)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: usize, l: f64) -> Vec<f64> {
        (0..n).map(|i| -l + i as f64 * 2.0 * l / n as f64).collect()
    }

    #[test]
    fn diff_matrix_is_exact_on_modes() {
        let (n, l) = (10, 2.5);
        let d = diff_matrix(n, l);
        let x = nodes(n, l);
        for k in 1..n / 2 {
            let kk = k as f64 * PI / l;
            let f: Vec<f64> = x.iter().map(|&t| (kk * t).sin()).collect();
            for i in 0..n {
                let df: f64 = (0..n).map(|j| d[i * n + j] * f[j]).sum();
                assert!((df - kk * (kk * x[i]).cos()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn diff_matrix_matches_fft_derivative() {
        let (n, l) = (8, 1.7);
        let d = diff_matrix(n, l);
        let f: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) % 5) as f64 - 1.3).collect();
        let plan = FftNd::new(&[n], &[0]);
        let mut z = to_complex(&f);
        plan.forward(&mut z);
        for (m, zm) in z.iter_mut().enumerate() {
            *zm *= Complex64::new(0.0, diff_wavenumber(m, n, l));
        }
        plan.inverse(&mut z);
        for i in 0..n {
            let df: f64 = (0..n).map(|j| d[i * n + j] * f[j]).sum();
            assert!((df - z[i].re).abs() < 1e-12);
        }
    }

    #[test]
    fn shift_matrix_identity_and_integer_shift() {
        let (n, l) = (6, 1.0);
        let s0 = shift_matrix(n, l, 0.0);
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((s0[i * n + j] - e).abs() < 1e-14);
            }
        }
        let h = 2.0 * l / n as f64;
        let s1 = shift_matrix(n, l, h);
        for i in 0..n {
            for j in 0..n {
                let e = if (j + 1) % n == i { 1.0 } else { 0.0 };
                assert!((s1[i * n + j] - e).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn apply_axis_matches_naive() {
        let shape = [3, 4, 5];
        let src: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        for axis in 0..3 {
            let n = shape[axis];
            let mat: Vec<f64> = (0..n * n).map(|i| (i as f64 * 0.11).cos()).collect();
            let mut dst = vec![0.0; 60];
            apply_axis(&src, &mut dst, &shape, axis, &mat);
            for a in 0..3 {
                for b in 0..4 {
                    for c in 0..5 {
                        let idx = [a, b, c];
                        let mut acc = 0.0;
                        for k in 0..n {
                            let mut j = idx;
                            j[axis] = k;
                            acc += mat[idx[axis] * n + k] * src[(j[0] * 4 + j[1]) * 5 + j[2]];
                        }
                        assert!((acc - dst[(a * 4 + b) * 5 + c]).abs() < 1e-13);
                    }
                }
            }
        }
    }

    #[test]
    fn fft_roundtrip_on_subset_of_axes() {
        let shape = [4, 6, 2];
        let src: Vec<f64> = (0..48).map(|i| (i as f64).sqrt()).collect();
        let plan = FftNd::new(&shape, &[0, 2]);
        let mut z = to_complex(&src);
        plan.forward(&mut z);
        plan.inverse(&mut z);
        for (a, b) in z.iter().zip(&src) {
            assert!((a.re - b).abs() < 1e-12 && a.im.abs() < 1e-12);
        }
    }
}
