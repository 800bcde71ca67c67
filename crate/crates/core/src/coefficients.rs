//! Nonlocal collision coefficients by a two-stage circular-convolution pipeline:
//! `H = kappa *_x f`, then `A = N *_v H`, `b = (div N) *_v H`, `lapA`.

use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid};
use crate::kernels::{
    bracket, div_landau_kernel, div_reg_landau_kernel, landau_kernel, lap_reg_landau_kernel,
    reg_landau_kernel, spatial_kernel, sym_eigenvalues, Mat3, ModelParams, Vec3,
};
use crate::spectral::{diff_wavenumber, to_complex, FftNd};
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

/// Number of independent entries of a symmetric `dv x dv` matrix.
pub fn nsym(dv: usize) -> usize {
    dv * (dv + 1) / 2
}

/// Position of entry `(i, j)` in the packed upper-triangular storage.
pub fn sym_index(i: usize, j: usize, dv: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * dv - i * i.saturating_sub(1) / 2 + j - i
}

/// Offset of grid index `m` on a periodic axis: `m h` for `m < n/2`, `(m - n) h` otherwise.
pub fn wrapped_offset(m: usize, n: usize, h: f64) -> f64 {
    if m < n / 2 {
        m as f64 * h
    } else {
        (m as f64 - n as f64) * h
    }
}

/// Sample `kernel` at the wrapped offset of multi-index `m`. Components that sit
/// exactly on the box boundary (`m_a = n/2`) are averaged over both images so the
/// sampled kernel keeps the symmetry `K(m) = K(-m)`.
fn sample_wrapped<const K: usize>(
    m: &[usize],
    n: usize,
    h: f64,
    kernel: &dyn Fn(&Vec3) -> [f64; K],
) -> [f64; K] {
    let d = m.len();
    let ties: Vec<usize> = (0..d).filter(|&a| 2 * m[a] == n).collect();
    let mut w = [0.0; 3];
    for a in 0..d {
        w[a] = wrapped_offset(m[a], n, h);
    }
    let combos = 1usize << ties.len();
    let mut acc = [0.0; K];
    for c in 0..combos {
        let mut wc = w;
        for (t, &a) in ties.iter().enumerate() {
            if c >> t & 1 == 1 {
                wc[a] = -wc[a];
            }
        }
        let v = kernel(&wc);
        for i in 0..K {
            acc[i] += v[i];
        }
    }
    acc.iter_mut().for_each(|x| *x /= combos as f64);
    acc
}

/// Average of `kernel` over a `5^d` subgrid of the cell centred at the origin, centre omitted.
fn origin_cell_average<const K: usize>(d: usize, h: f64, kernel: &dyn Fn(&Vec3) -> [f64; K]) -> [f64; K] {
    let total = 5usize.pow(d as u32);
    let mut acc = [0.0; K];
    let mut count = 0.0;
    for idx in 0..total {
        let mut w = [0.0; 3];
        let mut r = idx;
        for a in 0..d {
            w[a] = ((r % 5) as f64 - 2.0) * h / 5.0;
            r /= 5;
        }
        if w.iter().all(|&c| c == 0.0) {
            continue;
        }
        let v = kernel(&w);
        for i in 0..K {
            acc[i] += v[i];
        }
        count += 1.0;
    }
    acc.iter_mut().for_each(|x| *x /= count);
    acc
}

fn multi_index(mut i: usize, n: usize, d: usize) -> [usize; 3] {
    let mut m = [0; 3];
    for a in (0..d).rev() {
        m[a] = i % n;
        i /= n;
    }
    m
}

/// Table of a kernel on the velocity offset grid, with the wrap and origin conventions.
fn velocity_table<const K: usize>(
    grid: &PhaseGrid,
    singular_at_origin: bool,
    kernel: &dyn Fn(&Vec3) -> [f64; K],
) -> Vec<[f64; K]> {
    let (n, d, h) = (grid.nv, grid.dv, grid.hv);
    (0..grid.nvt())
        .map(|iv| {
            let m = multi_index(iv, n, d);
            if iv == 0 && singular_at_origin {
                origin_cell_average(d, h, kernel)
            } else {
                sample_wrapped(&m[..d], n, h, kernel)
            }
        })
        .collect()
}

fn pack_sym(m: &Mat3, dv: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(nsym(dv));
    for i in 0..dv {
        for j in i..dv {
            out.push(m[i][j]);
        }
    }
    out
}

/// Which velocity kernel family to sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VelocityKernel {
    Landau,
    Regularized,
}

/// Kernel samples on the velocity offset grid: packed `N`, `div N`, and `div div N`.
#[derive(Debug, Clone)]
pub struct KernelSamples {
    pub n: Vec<Vec<f64>>,
    pub div: Vec<Vec<f64>>,
    pub lap: Vec<f64>,
}

/// With `truncate`, every kernel is zeroed outside the injectivity ball `|w| < Lv` of the box.
pub fn sample_velocity_kernels(
    grid: &PhaseGrid,
    params: &ModelParams,
    kind: VelocityKernel,
    truncate: bool,
) -> Result<KernelSamples> {
    let dv = grid.dv;
    let gamma = params.gamma;
    let delta = params.delta;
    if kind == VelocityKernel::Regularized && !(delta > 0.0) {
        return Err(Error::Param(format!(
            "regularized kernels need delta > 0, got {delta}"
        )));
    }
    let cutoff2 = grid.lv * grid.lv;
    let outside = |w: &Vec3| truncate && w.iter().map(|c| c * c).sum::<f64>() >= cutoff2;
    let nfun = |w: &Vec3| -> [f64; 6] {
        if outside(w) {
            return [0.0; 6];
        }
        let m = match kind {
            VelocityKernel::Landau => landau_kernel(w, dv, gamma),
            VelocityKernel::Regularized => reg_landau_kernel(w, dv, gamma, delta).unwrap_or_default(),
        };
        let p = pack_sym(&m, dv);
        let mut out = [0.0; 6];
        out[..p.len()].copy_from_slice(&p);
        out
    };
    let dfun = |w: &Vec3| -> [f64; 3] {
        if outside(w) {
            return [0.0; 3];
        }
        match kind {
            VelocityKernel::Regularized => div_reg_landau_kernel(w, dv, gamma, delta).unwrap_or_default(),
            _ => div_landau_kernel(w, dv, gamma),
        }
    };
    let lfun = |w: &Vec3| -> [f64; 1] {
        if outside(w) {
            return [0.0];
        }
        match kind {
            VelocityKernel::Regularized => [lap_reg_landau_kernel(w, dv, gamma, delta).unwrap_or(0.0)],
            _ => {
                let r2: f64 = w.iter().map(|c| c * c).sum();
                let c = -((dv - 1) as f64) * (gamma + dv as f64);
                if r2 == 0.0 {
                    [if gamma == 0.0 { c } else { 0.0 }]
                } else {
                    [c * r2.powf(0.5 * gamma)]
                }
            }
        }
    };
    let singular = kind != VelocityKernel::Regularized && gamma < 0.0;
    let nt = velocity_table(grid, singular, &nfun);
    let dt = velocity_table(grid, false, &dfun);
    let lt = velocity_table(grid, singular, &lfun);
    let ns = nsym(dv);
    Ok(KernelSamples {
        n: (0..ns).map(|c| nt.iter().map(|x| x[c]).collect()).collect(),
        div: (0..dv).map(|c| dt.iter().map(|x| x[c]).collect()).collect(),
        lap: lt.iter().map(|x| x[0]).collect(),
    })
}

/// Spatial kernel sampled on the x offset grid (wrapped).
pub fn sample_spatial_kernel(grid: &PhaseGrid, params: &ModelParams, regularized: bool) -> Result<Vec<f64>> {
    spatial_kernel(&[0.0; 3], grid.dx, params, regularized)?;
    let f = |x: &Vec3| [spatial_kernel(x, grid.dx, params, regularized).unwrap_or(0.0)];
    Ok((0..grid.nxt())
        .map(|ix| {
            let m = multi_index(ix, grid.nx, grid.dx);
            sample_wrapped(&m[..grid.dx], grid.nx, grid.hx, &f)[0]
        })
        .collect())
}

fn spectrum(plan: &FftNd, table: &[f64], scale: f64) -> Vec<Complex64> {
    let mut z = to_complex(table);
    plan.forward(&mut z);
    z.iter_mut().for_each(|c| *c *= scale);
    z
}

/// Coefficient fields; when `x_uniform` every field stores a single velocity slice.
#[derive(Debug, Clone)]
pub struct CollisionCoefficients {
    pub grid: PhaseGrid,
    pub params: ModelParams,
    pub regularized: bool,
    pub x_uniform: bool,
    pub h: Vec<f64>,
    /// Packed symmetric entries of `A`.
    pub a: Vec<Vec<f64>>,
    /// `(div N) * H`.
    pub b: Vec<Vec<f64>>,
    /// `N * grad_v H`: the drift that makes `div(A grad f - f b)` equal the bilinear form.
    pub b_bilinear: Vec<Vec<f64>>,
    pub lap_a: Vec<f64>,
}

impl CollisionCoefficients {
    /// Storage index of flat node `k`.
    #[inline]
    pub fn at(&self, k: usize) -> usize {
        if self.x_uniform {
            k % self.grid.nvt()
        } else {
            k
        }
    }

    pub fn a_matrix(&self, k: usize) -> Mat3 {
        let dv = self.grid.dv;
        let s = self.at(k);
        let mut m = [[0.0; 3]; 3];
        for i in 0..dv {
            for j in 0..dv {
                m[i][j] = self.a[sym_index(i, j, dv)][s];
            }
        }
        m
    }

    /// Expand to full-grid storage.
    pub fn broadcast(&self, comp: &[f64]) -> Vec<f64> {
        if !self.x_uniform {
            return comp.to_vec();
        }
        let mut out = Vec::with_capacity(self.grid.len());
        for _ in 0..self.grid.nxt() {
            out.extend_from_slice(comp);
        }
        out
    }

    /// Largest eigenvalue of `A` over all nodes and where it occurs.
    pub fn max_eigenvalue(&self) -> (f64, usize) {
        let n = self.h.len();
        let mut best = (f64::NEG_INFINITY, 0);
        for k in 0..n {
            let e = sym_eigenvalues(&self.a_matrix(k), self.grid.dv)[self.grid.dv - 1];
            if e > best.0 {
                best = (e, k);
            }
        }
        best
    }

    /// Smallest eigenvalue of `A` over all nodes.
    pub fn min_eigenvalue(&self) -> (f64, usize) {
        let n = self.h.len();
        let mut best = (f64::INFINITY, 0);
        for k in 0..n {
            let e = sym_eigenvalues(&self.a_matrix(k), self.grid.dv)[0];
            if e < best.0 {
                best = (e, k);
            }
        }
        best
    }

    pub fn max_abs_a(&self) -> f64 {
        self.a
            .iter()
            .flat_map(|c| c.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Reusable convolution machinery for one grid and parameter set.
#[derive(Debug)]
pub struct CoefficientPipeline {
    pub grid: PhaseGrid,
    pub params: ModelParams,
    pub regularized: bool,
    x_uniform: bool,
    kappa_const: f64,
    x_plan: Option<FftNd>,
    kappa_hat: Vec<Complex64>,
    v_plan: FftNd,
    n_hat: Vec<Vec<Complex64>>,
    div_hat: Vec<Vec<Complex64>>,
    bil_hat: Vec<Vec<Complex64>>,
    lap_hat: Vec<Complex64>,
}

impl CoefficientPipeline {
    pub fn new(grid: PhaseGrid, params: ModelParams, regularized: bool) -> Result<Self> {
        Self::with_truncation(grid, params, regularized, false)
    }

    /// Pipeline whose velocity kernels vanish for `|w| >= Lv`.
    pub fn with_truncation(grid: PhaseGrid, params: ModelParams, regularized: bool, truncate: bool) -> Result<Self> {
        let kind = if regularized {
            VelocityKernel::Regularized
        } else {
            VelocityKernel::Landau
        };
        params.validate()?;
        let x_uniform = params.kappa_is_constant(regularized);
        let kappa_table = sample_spatial_kernel(&grid, &params, regularized)?;
        let (x_plan, kappa_hat) = if x_uniform {
            (None, Vec::new())
        } else {
            let shape = grid.x_shape();
            let axes: Vec<usize> = (0..grid.dx).collect();
            let plan = FftNd::new(&shape, &axes);
            let hat = spectrum(&plan, &kappa_table, grid.x_cell());
            (Some(FftNd::new(&grid.shape(), &axes)), hat)
        };
        let v_shape = grid.v_shape();
        let v_axes: Vec<usize> = (0..grid.dv).collect();
        let v_plan = FftNd::new(&v_shape, &v_axes);
        let samples = sample_velocity_kernels(&grid, &params, kind, truncate)?;
        let vc = grid.v_cell();
        let n_hat: Vec<_> = samples.n.iter().map(|t| spectrum(&v_plan, t, vc)).collect();
        let div_hat = samples.div.iter().map(|t| spectrum(&v_plan, t, vc)).collect();
        let lap_hat = spectrum(&v_plan, &samples.lap, vc);
        let dv = grid.dv;
        let ik: Vec<[f64; 3]> = (0..grid.nvt())
            .map(|iv| {
                let m = multi_index(iv, grid.nv, dv);
                let mut k = [0.0; 3];
                for a in 0..dv {
                    k[a] = diff_wavenumber(m[a], grid.nv, grid.lv);
                }
                k
            })
            .collect();
        let bil_hat = (0..dv)
            .map(|i| {
                (0..grid.nvt())
                    .map(|q| {
                        let mut s = Complex64::default();
                        for j in 0..dv {
                            s += n_hat[sym_index(i, j, dv)][q] * Complex64::new(0.0, ik[q][j]);
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            params,
            regularized,
            x_uniform,
            kappa_const: kappa_table[0],
            x_plan,
            kappa_hat,
            v_plan,
            n_hat,
            div_hat,
            bil_hat,
            lap_hat,
        })
    }

    pub fn x_uniform(&self) -> bool {
        self.x_uniform
    }

    /// `kappa *_x g` for a full-grid scalar; a single velocity slice when the kernel is constant.
    pub fn conv_x(&self, g: &[f64]) -> Vec<f64> {
        let grid = &self.grid;
        if self.x_uniform {
            let nvt = grid.nvt();
            let mut out = vec![0.0; nvt];
            for chunk in g.chunks(nvt) {
                for (o, f) in out.iter_mut().zip(chunk) {
                    *o += f;
                }
            }
            let s = self.kappa_const * grid.x_cell();
            out.iter_mut().for_each(|o| *o *= s);
            return out;
        }
        let plan = self.x_plan.as_ref().expect("x plan");
        let mut z = to_complex(g);
        plan.forward(&mut z);
        let nvt = grid.nvt();
        z.par_chunks_mut(nvt)
            .zip(self.kappa_hat.par_iter())
            .for_each(|(c, k)| c.iter_mut().for_each(|x| *x *= k));
        plan.inverse(&mut z);
        z.into_iter().map(|c| c.re).collect()
    }

    pub fn smooth_density(&self, f: &DistributionField) -> Vec<f64> {
        self.conv_x(&f.values)
    }

    /// Convolve each velocity slice of `h` with the kernels whose spectra are given.
    fn conv_v_many(&self, h: &[f64], kernels: &[&Vec<Complex64>]) -> Vec<Vec<f64>> {
        let nvt = self.grid.nvt();
        let slices = h.len() / nvt;
        let per_slice: Vec<Vec<Vec<f64>>> = h
            .par_chunks(nvt)
            .map(|hs| {
                let mut hh = to_complex(hs);
                self.v_plan.forward(&mut hh);
                kernels
                    .iter()
                    .map(|k| {
                        let mut z: Vec<Complex64> = hh.iter().zip(k.iter()).map(|(a, b)| a * b).collect();
                        self.v_plan.inverse(&mut z);
                        z.into_iter().map(|c| c.re).collect()
                    })
                    .collect()
            })
            .collect();
        (0..kernels.len())
            .map(|c| {
                let mut out = Vec::with_capacity(slices * nvt);
                for s in &per_slice {
                    out.extend_from_slice(&s[c]);
                }
                out
            })
            .collect()
    }

    pub fn compute(&self, f: &DistributionField) -> Result<CollisionCoefficients> {
        f.check_finite()?;
        let h = self.smooth_density(f);
        let dv = self.grid.dv;
        let ns = nsym(dv);
        let mut ks: Vec<&Vec<Complex64>> = self.n_hat.iter().collect();
        ks.extend(self.div_hat.iter());
        ks.extend(self.bil_hat.iter());
        ks.push(&self.lap_hat);
        let mut out = self.conv_v_many(&h, &ks);
        let lap_a = out.pop().unwrap();
        let b_bilinear = out.split_off(ns + dv);
        let b = out.split_off(ns);
        Ok(CollisionCoefficients {
            grid: self.grid,
            params: self.params,
            regularized: self.regularized,
            x_uniform: self.x_uniform,
            h,
            a: out,
            b,
            b_bilinear,
            lap_a,
        })
    }

    /// `A~[G]_i = sum_j N_ij * kappa * G_j` for a full-grid vector field `G`.
    pub fn tilde_a(&self, g: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let dv = self.grid.dv;
        let smoothed: Vec<Vec<f64>> = g.iter().map(|c| self.conv_x(c)).collect();
        let len = smoothed[0].len();
        let mut out = vec![vec![0.0; len]; dv];
        for j in 0..dv {
            let ks: Vec<&Vec<Complex64>> = (0..dv).map(|i| &self.n_hat[sym_index(i, j, dv)]).collect();
            let conv = self.conv_v_many(&smoothed[j], &ks);
            for i in 0..dv {
                for (o, c) in out[i].iter_mut().zip(&conv[i]) {
                    *o += c;
                }
            }
        }
        if self.x_uniform {
            let n = self.grid.nxt();
            out.into_iter()
                .map(|c| {
                    let mut full = Vec::with_capacity(c.len() * n);
                    for _ in 0..n {
                        full.extend_from_slice(&c);
                    }
                    full
                })
                .collect()
        } else {
            out
        }
    }
}

pub fn smooth_density(f: &DistributionField, params: &ModelParams) -> Result<Vec<f64>> {
    Ok(CoefficientPipeline::new(f.grid, *params, false)?.smooth_density(f))
}

pub fn diffusion_matrix(f: &DistributionField, params: &ModelParams, regularized: bool) -> Result<Vec<Vec<f64>>> {
    let c = CoefficientPipeline::new(f.grid, *params, regularized)?.compute(f)?;
    Ok(c.a.iter().map(|x| c.broadcast(x)).collect())
}

pub fn drift_vector(f: &DistributionField, params: &ModelParams, regularized: bool) -> Result<Vec<Vec<f64>>> {
    let c = CoefficientPipeline::new(f.grid, *params, regularized)?.compute(f)?;
    Ok(c.b.iter().map(|x| c.broadcast(x)).collect())
}

pub fn laplacian_a(f: &DistributionField, params: &ModelParams) -> Result<Vec<f64>> {
    let c = CoefficientPipeline::new(f.grid, *params, false)?.compute(f)?;
    Ok(c.broadcast(&c.lap_a))
}

#[derive(Debug, Clone, Serialize)]
pub struct EllipticityReport {
    pub alpha_hat: f64,
    /// Flat node index of the minimizing sample.
    pub worst_node: usize,
    pub worst_direction: Vec3,
}

/// Normalized ellipticity `min xi.A xi / (<x>^-lambda <v>^gamma)` over random
/// samples plus the extreme nodes of the grid.
pub fn ellipticity_probe(coeffs: &CollisionCoefficients, samples: usize, seed: u64) -> Result<EllipticityReport> {
    use rand::SeedableRng;
    let grid = coeffs.grid;
    if !coeffs.h.iter().any(|&x| x > 0.0) {
        return Err(Error::Degenerate("ellipticity probe needs f with positive mass".into()));
    }
    let dv = grid.dv;
    let (lambda, gamma) = (coeffs.params.lambda, coeffs.params.gamma);
    let weight = |k: usize| {
        let x = grid.x_coords(k / grid.nvt());
        let v = grid.v_coords(k % grid.nvt());
        let x2: f64 = x.iter().map(|c| c * c).sum();
        let v2: f64 = v.iter().map(|c| c * c).sum();
        bracket(x2).powf(-lambda) * bracket(v2).powf(gamma)
    };
    let mut best = EllipticityReport {
        alpha_hat: f64::INFINITY,
        worst_node: 0,
        worst_direction: [0.0; 3],
    };
    let consider = |k: usize, xi: Vec3, best: &mut EllipticityReport| {
        let m = coeffs.a_matrix(k);
        let mut q = 0.0;
        for i in 0..dv {
            for j in 0..dv {
                q += xi[i] * m[i][j] * xi[j];
            }
        }
        let val = q / weight(k);
        if val < best.alpha_hat {
            *best = EllipticityReport {
                alpha_hat: val,
                worst_node: k,
                worst_direction: xi,
            };
        }
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = grid.len();
    for _ in 0..samples {
        let k = rng.gen_range(0..n);
        let mut xi = [0.0; 3];
        for c in xi.iter_mut().take(dv) {
            *c = rng.gen_range(-1.0..1.0);
        }
        let nrm: f64 = xi.iter().map(|c| c * c).sum::<f64>().sqrt();
        if nrm < 1e-3 {
            continue;
        }
        xi.iter_mut().for_each(|c| *c /= nrm);
        consider(k, xi, &mut best);
    }
    // Extreme nodes: box corners and face centres in x and v, all unit axes and the minimal eigendirection.
    let corners_x = extreme_indices(grid.nx, grid.dx);
    let corners_v = extreme_indices(grid.nv, grid.dv);
    for &ix in &corners_x {
        for &iv in &corners_v {
            let k = ix * grid.nvt() + iv;
            for a in 0..dv {
                let mut xi = [0.0; 3];
                xi[a] = 1.0;
                consider(k, xi, &mut best);
            }
            let m = coeffs.a_matrix(k);
            let e = sym_eigenvalues(&m, dv)[0];
            let val = e / weight(k);
            if val < best.alpha_hat {
                best.alpha_hat = val;
                best.worst_node = k;
            }
        }
    }
    Ok(best)
}

fn extreme_indices(n: usize, d: usize) -> Vec<usize> {
    let picks = [0, n / 2, n - 1];
    let total = 3usize.pow(d as u32);
    (0..total)
        .map(|mut c| {
            let mut idx = 0;
            for _ in 0..d {
                idx = idx * n + picks[c % 3];
                c /= 3;
            }
            idx
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct HBoundsReport {
    pub mass: f64,
    pub second_moment: f64,
    pub entropy_bound: f64,
    /// Superlevel-set recipe of the mass lemma.
    pub r: f64,
    pub ell: f64,
    pub t_level: f64,
    pub superlevel_measure: f64,
    pub superlevel_required: f64,
    pub superlevel_ok: bool,
    /// Fitted constants of the H bounds.
    pub c_h: f64,
    pub big_c_h: f64,
    pub int_h_lower_ok: bool,
    pub ell_tilde: f64,
    pub r_tilde: f64,
    pub mu_hat: f64,
    pub all_ok: bool,
}

/// Superlevel-set and H-bound diagnostics.
pub fn h_bounds_check(f: &DistributionField, params: &ModelParams) -> Result<HBoundsReport> {
    let grid = f.grid;
    let mass = f.mass();
    if !(mass > 0.0) {
        return Err(Error::Degenerate("h_bounds_check needs positive mass".into()));
    }
    let cell = grid.cell_volume();
    let nvt = grid.nvt();
    let vsq = grid.v_sq_table();
    let xsq = grid.x_sq_table();
    let mut c2 = 0.0;
    let mut h0 = 0.0;
    for (k, &fv) in f.values.iter().enumerate() {
        let (ix, iv) = (k / nvt, k % nvt);
        c2 += (xsq[ix] + vsq[iv]) * fv;
        if fv > 0.0 {
            h0 += fv * fv.ln().abs();
        }
    }
    c2 *= cell;
    h0 *= cell;
    let dim = grid.ndim() as f64;
    let r = (8.0 * c2 / mass).sqrt();
    let omega = unit_ball_volume(grid.ndim());
    let ell = mass / (8.0 * omega * r.powf(dim));
    // Smallest level T >= max(1, ell) whose tail mass is at most mass / 8.
    let mut sorted: Vec<f64> = f.values.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut tail = 0.0;
    let mut t_level = ell.max(1.0);
    for &v in &sorted {
        if v < t_level {
            break;
        }
        if (tail + v) * cell > mass / 8.0 {
            t_level = t_level.max(v);
            break;
        }
        tail += v;
    }
    let mut meas = 0.0;
    for (k, &fv) in f.values.iter().enumerate() {
        let (ix, iv) = (k / nvt, k % nvt);
        if fv >= ell && xsq[ix] + vsq[iv] < r * r {
            meas += cell;
        }
    }
    let required = 5.0 * mass / (8.0 * t_level);
    let pipe = CoefficientPipeline::new(grid, *params, false)?;
    let h = pipe.smooth_density(f);
    let hx = |k: usize| if pipe.x_uniform() { h[k % nvt] } else { h[k] };
    // int H dv >= c_H <x>^-lambda ; H <= C_H <x>^-lambda pointwise scale
    let mut c_h = f64::INFINITY;
    let mut big_c_h: f64 = 0.0;
    for ix in 0..grid.nxt() {
        let w = bracket(xsq[ix]).powf(-params.lambda);
        let s: f64 = (0..nvt).map(|iv| hx(ix * nvt + iv)).sum::<f64>() * grid.v_cell();
        c_h = c_h.min(s / w);
        big_c_h = big_c_h.max(s / w);
    }
    // Velocity superlevel set of H: ell_tilde = c_H / (4 |B_R|), R_tilde = sqrt(8 E_v / mass)
    let v2m: f64 = {
        let fv = f.v_marginal();
        fv.iter().zip(&vsq).map(|(a, b)| a * b).sum::<f64>() * grid.v_cell()
    };
    let r_tilde = (8.0 * v2m / mass).sqrt().max(grid.hv);
    let ball = unit_ball_volume(grid.dv) * r_tilde.powi(grid.dv as i32);
    let ell_tilde = c_h / (4.0 * ball);
    let mut mu_hat = f64::INFINITY;
    for ix in 0..grid.nxt() {
        let w = bracket(xsq[ix]).powf(-params.lambda);
        let mut m = 0.0;
        for iv in 0..nvt {
            if vsq[iv] < r_tilde * r_tilde && hx(ix * nvt + iv) >= ell_tilde * w {
                m += grid.v_cell();
            }
        }
        mu_hat = mu_hat.min(m);
    }
    let superlevel_ok = meas >= required;
    let int_h_lower_ok = c_h > 0.0;
    Ok(HBoundsReport {
        mass,
        second_moment: c2,
        entropy_bound: h0,
        r,
        ell,
        t_level,
        superlevel_measure: meas,
        superlevel_required: required,
        superlevel_ok,
        c_h,
        big_c_h,
        int_h_lower_ok,
        ell_tilde,
        r_tilde,
        mu_hat,
        all_ok: superlevel_ok && int_h_lower_ok && mu_hat > 0.0,
    })
}

pub fn unit_ball_volume(d: usize) -> f64 {
    use std::f64::consts::PI;
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// Decay envelopes `max |A| / <v>^{gamma+2}`, `max |b| / <v>^{gamma+1}`, `max |lapA| / <v>^gamma`.
pub fn coefficient_envelopes(c: &CollisionCoefficients) -> [f64; 3] {
    let grid = c.grid;
    let gamma = c.params.gamma;
    let vsq = grid.v_sq_table();
    let nvt = grid.nvt();
    let dv = grid.dv;
    let mut env = [0.0f64; 3];
    for k in 0..c.h.len() {
        let w = bracket(vsq[k % nvt]);
        let m = c.a_matrix(k);
        let e = sym_eigenvalues(&m, dv);
        let an = e[dv - 1].abs().max(e[0].abs());
        let bn: f64 = (0..dv).map(|i| c.b[i][k].powi(2)).sum::<f64>().sqrt();
        env[0] = env[0].max(an / w.powf(gamma + 2.0));
        env[1] = env[1].max(bn / w.powf(gamma + 1.0));
        env[2] = env[2].max(c.lap_a[k].abs() / w.powf(gamma));
    }
    env
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sym_index_layout() {
        assert_eq!(sym_index(0, 0, 2), 0);
        assert_eq!(sym_index(0, 1, 2), 1);
        assert_eq!(sym_index(1, 1, 2), 2);
        let expect = [[0, 1, 2], [1, 3, 4], [2, 4, 5]];
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sym_index(i, j, 3), expect[i][j]);
            }
        }
    }

    #[test]
    fn ball_volumes() {
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-14);
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-14);
    }

    #[test]
    fn tie_offsets_are_symmetrized() {
        let g = PhaseGrid::new(1, 2, 4, 4, 1.0, 2.0).unwrap();
        let p = ModelParams {
            gamma: 0.0,
            ..Default::default()
        };
        let s = sample_velocity_kernels(&g, &p, VelocityKernel::Landau, false).unwrap();
        let n = g.nv;
        for iv in 0..g.nvt() {
            let m = multi_index(iv, n, 2);
            let neg = ((n - m[0]) % n) * n + (n - m[1]) % n;
            for c in 0..3 {
                assert_eq!(s.n[c][iv], s.n[c][neg]);
            }
        }
    }
}
