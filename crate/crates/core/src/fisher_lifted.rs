//! Doubled-variable checks on tiny grids: the lifted operator `Q(F)` for
//! `F(x, v, y, w) = f(x, v) f(y, w)`, the Fisher time-derivative identities and
//! the commutator-term inequality.
//!
//! Pair integrals are enumerated over velocity pairs `(v, w)`. With `kappa = 1`
//! the `x` and `y` integrals factor through the per-velocity moments
//! `M0 = int f dx`, `M1 = int f P dx`, `M2 = int f P P^T dx` of the local
//! log-derivative vector `P = (grad_v log f, D_v^2 log f, D_x grad_v log f)`.

use crate::collision::{fisher_information, CollisionOperator, FISHER_CUTOFF_REL, THETA_REL};
use crate::coefficients::wrapped_offset;
use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid, SpectralOps};
use crate::kernels::{cross, landau_kernel, spatial_kernel, unit, ModelParams, Vec3};
use rayon::prelude::*;
use serde::Serialize;
use std::path::Path;

/// Pointwise lifted-operator evaluation needs trigonometric interpolation of every
/// velocity slab; beyond this many points per axis it is refused.
pub const LIFTED_MAX_POINTS: usize = 6;
/// Largest number of velocity nodes for the pair sums (the work is quadratic in it).
pub const PAIR_MAX_VELOCITY_NODES: usize = 24 * 24 * 24;

/// Length of the local vector `P`: 3 first derivatives, 9 velocity and 9 mixed second derivatives.
const NP: usize = 21;
const PHI: usize = 0;
const HV: usize = 3;
const GX: usize = 12;

fn require_3x3(grid: &PhaseGrid) -> Result<()> {
    if grid.dx != 3 || grid.dv != 3 {
        return Err(Error::Dimension(format!(
            "lifted variables need dx = dv = 3, got dx = {}, dv = {}",
            grid.dx, grid.dv
        )));
    }
    Ok(())
}

fn require_constant_kappa(params: &ModelParams) -> Result<()> {
    if !params.kappa_is_constant(false) {
        return Err(Error::Config("Fisher identities need kappa_choice = constant_one".into()));
    }
    Ok(())
}

/// `F = f(x,v) f(y,w)` kept as the single factor `f`.
#[derive(Debug, Clone)]
pub struct DoubledField {
    pub f: DistributionField,
}

impl DoubledField {
    pub fn new(f: DistributionField) -> Result<Self> {
        require_3x3(&f.grid)?;
        Ok(Self { f })
    }

    /// `F` at the pair of nodes `(a, b)`.
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.f.values[a] * self.f.values[b]
    }
}

type SlabEval = Box<dyn Fn(usize, &Vec3) -> f64 + Send + Sync>;

/// Pointwise values of the lifted operator at a node pair.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LiftedQPoint {
    /// `Div_{v-w}[kappa N (grad_v - grad_w) F]`.
    pub divergence_form: f64,
    /// `kappa sum_k sqrt(alpha) b~_k . grad(sqrt(alpha) b~_k . grad F)`.
    pub lifted_form: f64,
}

/// Evaluates both sides of the lifted-operator identity by central differences
/// along the directions `(e_j, -e_j)` of the pair velocity variables.
pub struct LiftedQ {
    pub grid: PhaseGrid,
    pub params: ModelParams,
    pub step: f64,
    eval: SlabEval,
}

impl std::fmt::Debug for LiftedQ {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiftedQ")
            .field("grid", &self.grid)
            .field("params", &self.params)
            .field("step", &self.step)
            .finish()
    }
}

/// Handle on the lifted operator of the trigonometric interpolant of `f` in `v`.
pub fn lifted_q_apply(f: &DistributionField, params: &ModelParams) -> Result<LiftedQ> {
    let grid = f.grid;
    require_3x3(&grid)?;
    params.validate()?;
    if grid.nx > LIFTED_MAX_POINTS || grid.nv > LIFTED_MAX_POINTS {
        return Err(Error::SizeGuard(format!(
            "lifted operator evaluation allows at most {LIFTED_MAX_POINTS} points per axis, got nx = {}, nv = {}",
            grid.nx, grid.nv
        )));
    }
    f.check_finite()?;
    let nv = grid.nv;
    let nvt = grid.nvt();
    let k: Vec<f64> = (0..nv)
        .map(|m| crate::spectral::wavenumber(m, nv, grid.lv))
        .collect();
    // Per x node, the DFT coefficients of the velocity slab.
    let coeffs: Vec<Vec<(f64, f64)>> = (0..grid.nxt())
        .map(|ix| {
            let slab = &f.values[ix * nvt..(ix + 1) * nvt];
            (0..nvt)
                .map(|m| {
                    let km = grid.v_index(m);
                    let (mut re, mut im) = (0.0, 0.0);
                    for (j, &val) in slab.iter().enumerate() {
                        let jm = grid.v_index(j);
                        let ph: f64 = (0..3)
                            .map(|d| -2.0 * std::f64::consts::PI * (km[d] * jm[d]) as f64 / nv as f64)
                            .sum();
                        re += val * ph.cos();
                        im += val * ph.sin();
                    }
                    (re / nvt as f64, im / nvt as f64)
                })
                .collect()
        })
        .collect();
    let v0 = grid.v_node(0);
    let eval: SlabEval = Box::new(move |ix: usize, v: &Vec3| {
        let mut s = 0.0;
        for (m, &(re, im)) in coeffs[ix].iter().enumerate() {
            let mut ph = 0.0;
            let mut rem = m;
            for d in (0..3).rev() {
                ph += k[rem % nv] * (v[d] - v0);
                rem /= nv;
            }
            s += re * ph.cos() - im * ph.sin();
        }
        s
    });
    Ok(LiftedQ {
        grid,
        params: *params,
        step: 1e-3,
        eval,
    })
}

impl LiftedQ {
    /// Handle for an analytic `f(x, v)` sampled only at the grid's `x` nodes.
    pub fn from_fn(
        grid: PhaseGrid,
        params: &ModelParams,
        f: impl Fn(Vec3, Vec3) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        require_3x3(&grid)?;
        params.validate()?;
        let eval: SlabEval = Box::new(move |ix: usize, v: &Vec3| f(grid.x_coords(ix), *v));
        Ok(Self {
            grid,
            params: *params,
            step: 1e-3,
            eval,
        })
    }

    pub fn with_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    fn pair_value(&self, xa: usize, xb: usize, v: &Vec3, w: &Vec3) -> f64 {
        (self.eval)(xa, v) * (self.eval)(xb, w)
    }

    /// Central difference of `g` along `(e_j, -e_j)` at `(v, w)`.
    fn d_pair(&self, j: usize, v: &Vec3, w: &Vec3, g: &dyn Fn(&Vec3, &Vec3) -> f64) -> f64 {
        let h = self.step;
        let (mut vp, mut wp, mut vm, mut wm) = (*v, *w, *v, *w);
        vp[j] += h;
        wp[j] -= h;
        vm[j] -= h;
        wm[j] += h;
        (g(&vp, &wp) - g(&vm, &wm)) / (2.0 * h)
    }

    /// Both forms at the node pair `(a, b)`; the two velocities must differ.
    pub fn eval(&self, a: usize, b: usize) -> Result<LiftedQPoint> {
        let g = self.grid;
        let n = g.len();
        if a >= n || b >= n {
            return Err(Error::Param(format!("pair ({a}, {b}) outside grid of {n} nodes")));
        }
        let nvt = g.nvt();
        let (xa, xb) = (a / nvt, b / nvt);
        let (v, w) = (g.v_coords(a % nvt), g.v_coords(b % nvt));
        if a % nvt == b % nvt {
            return Err(Error::Degenerate("lifted operator is singular at v = w".into()));
        }
        let xd = {
            let (ia, ib) = (g.x_index(xa), g.x_index(xb));
            let mut d = [0.0; 3];
            for c in 0..3 {
                d[c] = wrapped_offset((ia[c] + g.nx - ib[c]) % g.nx, g.nx, g.hx);
            }
            d
        };
        let kappa = spatial_kernel(&xd, 3, &self.params, false)?;
        let gamma = self.params.gamma;
        let big_f = |v: &Vec3, w: &Vec3| self.pair_value(xa, xb, v, w);
        let rel = |v: &Vec3, w: &Vec3| [v[0] - w[0], v[1] - w[1], v[2] - w[2]];

        let mut div = 0.0;
        for i in 0..3 {
            let flux = |v: &Vec3, w: &Vec3| {
                let nm = landau_kernel(&rel(v, w), 3, gamma);
                (0..3)
                    .map(|j| nm[i][j] * self.d_pair(j, v, w, &big_f))
                    .sum::<f64>()
            };
            div += self.d_pair(i, &v, &w, &flux);
        }

        let mut lifted = 0.0;
        for k in 0..3 {
            let field = |v: &Vec3, w: &Vec3| -> Vec3 {
                let r = rel(v, w);
                let s = crate::kernels::sqrt_alpha(&r, gamma);
                let b = cross(&unit(k), &r);
                [s * b[0], s * b[1], s * b[2]]
            };
            let inner = |v: &Vec3, w: &Vec3| {
                let c = field(v, w);
                (0..3).map(|j| c[j] * self.d_pair(j, v, w, &big_f)).sum::<f64>()
            };
            let c = field(&v, &w);
            lifted += (0..3).map(|i| c[i] * self.d_pair(i, &v, &w, &inner)).sum::<f64>();
        }
        Ok(LiftedQPoint {
            divergence_form: kappa * div,
            lifted_form: kappa * lifted,
        })
    }
}

/// Per-velocity moments of the local vector `P` over `x`.
struct PairMoments {
    m0: Vec<f64>,
    m1: Vec<[f64; NP]>,
    m2: Vec<Vec<f64>>,
}

/// Node-local log-derivatives built from spectral derivatives of `f` by the product rule,
/// so nothing periodic is asked of `log f`.
fn pair_moments(f: &DistributionField, ops: &SpectralOps) -> PairMoments {
    let g = f.grid;
    let nvt = g.nvt();
    let fv = &f.values;
    let dvf: Vec<Vec<f64>> = (0..3).map(|j| ops.dv(fv, j)).collect();
    let dxf: Vec<Vec<f64>> = (0..3).map(|i| ops.dx(fv, i)).collect();
    let dvv: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|i| (0..3).map(|j| if j >= i { ops.dv(&dvf[j], i) } else { Vec::new() }).collect())
        .collect();
    let dxv: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|i| (0..3).map(|j| ops.dx(&dvf[j], i)).collect())
        .collect();
    let fmax = f.max();
    let theta = THETA_REL * fmax;
    let cut = FISHER_CUTOFF_REL * fmax;
    let wx = g.x_cell();
    let local = |k: usize| -> [f64; NP] {
        let inv = 1.0 / (fv[k] + theta);
        let mut p = [0.0; NP];
        for j in 0..3 {
            p[PHI + j] = dvf[j][k] * inv;
        }
        for i in 0..3 {
            for j in 0..3 {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                p[HV + 3 * i + j] = dvv[a][b][k] * inv - p[PHI + i] * p[PHI + j];
                p[GX + 3 * i + j] = dxv[i][j][k] * inv - dxf[i][k] * inv * p[PHI + j];
            }
        }
        p
    };
    let per_v: Vec<(f64, [f64; NP], Vec<f64>)> = (0..nvt)
        .into_par_iter()
        .map(|iv| {
            let mut m0 = 0.0;
            let mut m1 = [0.0; NP];
            let mut m2 = vec![0.0; NP * NP];
            for ix in 0..g.nxt() {
                let k = ix * nvt + iv;
                let fk = fv[k];
                if fk < cut {
                    continue;
                }
                let p = local(k);
                m0 += fk;
                for a in 0..NP {
                    let fa = fk * p[a];
                    m1[a] += fa;
                    for b in a..NP {
                        m2[a * NP + b] += fa * p[b];
                    }
                }
            }
            for a in 0..NP {
                m1[a] *= wx;
                for b in a..NP {
                    m2[a * NP + b] *= wx;
                    m2[b * NP + a] = m2[a * NP + b];
                }
            }
            (m0 * wx, m1, m2)
        })
        .collect();
    let mut out = PairMoments {
        m0: Vec::with_capacity(nvt),
        m1: Vec::with_capacity(nvt),
        m2: Vec::with_capacity(nvt),
    };
    for (a, b, c) in per_v {
        out.m0.push(a);
        out.m1.push(b);
        out.m2.push(c);
    }
    out
}

/// Sparse linear form on `P`.
#[derive(Clone, Copy)]
struct Form {
    idx: [usize; 6],
    val: [f64; 6],
    len: usize,
}

impl Form {
    fn new() -> Self {
        Self {
            idx: [0; 6],
            val: [0.0; 6],
            len: 0,
        }
    }

    fn block(mut self, base: usize, c: &Vec3, s: f64) -> Self {
        for j in 0..3 {
            self.idx[self.len] = base + j;
            self.val[self.len] = s * c[j];
            self.len += 1;
        }
        self
    }

    fn scaled(&self, s: f64) -> Self {
        let mut o = *self;
        o.val.iter_mut().for_each(|v| *v *= s);
        o
    }

    fn dot(&self, m1: &[f64; NP]) -> f64 {
        (0..self.len).map(|t| self.val[t] * m1[self.idx[t]]).sum()
    }

    fn bilinear(&self, other: &Form, m2: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in 0..self.len {
            let row = self.idx[p] * NP;
            let mut t = 0.0;
            for q in 0..other.len {
                t += other.val[q] * m2[row + other.idx[q]];
            }
            s += self.val[p] * t;
        }
        s
    }

    fn quad(&self, m2: &[f64]) -> f64 {
        let mut s = 0.0;
        for p in 0..self.len {
            let row = self.idx[p] * NP;
            let mut t = 0.0;
            for q in 0..self.len {
                t += self.val[q] * m2[row + self.idx[q]];
            }
            s += self.val[p] * t;
        }
        s
    }
}

/// Pair sums of the lifted squared terms.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct PairTerms {
    /// `-1/2 sum_{k,i} int F (|e~_i . grad(sqrt(a) b~_k . grad ln F)|^2 + |e^_i . ...|^2)`.
    pub dissipation_x: f64,
    /// Same with `xi~_i`, `xi^_i`.
    pub dissipation_v: f64,
    /// `gamma^2/2 sum_k int F (sqrt(a) b~_k . grad ln F)^2 / |v-w|^2`.
    pub commutator: f64,
    /// Exact contribution of the `[xi^_i, sqrt(a) b~_k]` commutators to `d/dt int |grad_v f|^2 / f`.
    pub commutator_remainder: f64,
    pub pairs: usize,
}

fn pair_terms(f: &DistributionField, params: &ModelParams, ops: &SpectralOps) -> Result<PairTerms> {
    let g = f.grid;
    let nvt = g.nvt();
    if nvt > PAIR_MAX_VELOCITY_NODES {
        return Err(Error::SizeGuard(format!(
            "pair sums allow at most {PAIR_MAX_VELOCITY_NODES} velocity nodes, got {nvt}"
        )));
    }
    let mom = pair_moments(f, ops);
    let gamma = params.gamma;
    let nv = g.nv;
    let hv = g.hv;
    let idx: Vec<[usize; 3]> = (0..nvt).map(|k| g.v_index(k)).collect();
    let cross_ei: Vec<Vec<Vec3>> = (0..3)
        .map(|k| (0..3).map(|i| cross(&unit(k), &unit(i))).collect())
        .collect();
    let quad = |la: &Form, lb: &Form, a: usize, b: usize| -> f64 {
        la.quad(&mom.m2[a]) * mom.m0[b] + lb.quad(&mom.m2[b]) * mom.m0[a]
            + 2.0 * la.dot(&mom.m1[a]) * lb.dot(&mom.m1[b])
    };
    let bil = |l1a: &Form, l1b: &Form, l2a: &Form, l2b: &Form, a: usize, b: usize| -> f64 {
        l1a.bilinear(l2a, &mom.m2[a]) * mom.m0[b] + l1b.bilinear(l2b, &mom.m2[b]) * mom.m0[a]
            + l1a.dot(&mom.m1[a]) * l2b.dot(&mom.m1[b])
            + l2a.dot(&mom.m1[a]) * l1b.dot(&mom.m1[b])
    };
    let (dx_sum, dv_sum, comm_sum, rem_sum) = (0..nvt)
        .into_par_iter()
        .map(|a| {
            let mut acc = (0.0, 0.0, 0.0, 0.0);
            if mom.m0[a] == 0.0 {
                return acc;
            }
            for b in 0..nvt {
                if b == a || mom.m0[b] == 0.0 {
                    continue;
                }
                // Offsets on the box boundary are averaged over both images.
                let mut r0 = [0.0; 3];
                let mut ties = Vec::new();
                for c in 0..3 {
                    let m = (idx[a][c] + nv - idx[b][c]) % nv;
                    r0[c] = wrapped_offset(m, nv, hv);
                    if 2 * m == nv {
                        ties.push(c);
                    }
                }
                let images = 1usize << ties.len();
                let wimg = 1.0 / images as f64;
                for img in 0..images {
                    let mut r = r0;
                    for (t, &c) in ties.iter().enumerate() {
                        if img >> t & 1 == 1 {
                            r[c] = -r[c];
                        }
                    }
                    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
                    let s = r2.powf(0.25 * gamma);
                    let gr = if gamma != 0.0 { gamma / r2 } else { 0.0 };
                    for k in 0..3 {
                        let bk = cross(&unit(k), &r);
                        let wa = Form::new().block(PHI, &bk, s);
                        let wb = wa.scaled(-1.0);
                        if gamma != 0.0 {
                            acc.2 += wimg * quad(&wa, &wb, a, b) / r2;
                        }
                        for i in 0..3 {
                            let gi = Form::new().block(GX + 3 * i, &bk, s);
                            acc.0 += wimg * (quad(&gi, &gi.scaled(-1.0), a, b) + quad(&gi, &gi, a, b));
                            let hi = Form::new().block(HV + 3 * i, &bk, s);
                            let t1 = quad(&hi, &hi.scaled(-1.0), a, b);
                            let dbk = &cross_ei[k][i];
                            let mut c = [0.0; 3];
                            for j in 0..3 {
                                c[j] = gr * r[i] * s * bk[j] + 2.0 * s * dbk[j];
                            }
                            let la = Form::new().block(PHI, &c, 1.0).block(HV + 3 * i, &bk, s);
                            let lb = Form::new().block(PHI, &c, -1.0).block(HV + 3 * i, &bk, s);
                            acc.1 += wimg * (t1 + quad(&la, &lb, a, b));
                            // Commutator remainder -2 int F (X u)(C Y u) + 2 int F (C u)(Y X u)
                            // with Y = xi^_i, X = sqrt(a) b~_k, C = [Y, X], u = ln F.
                            let ca = Form::new().block(PHI, &c, 1.0);
                            let cb = ca.scaled(-1.0);
                            let cy = Form::new().block(HV + 3 * i, &c, 1.0);
                            acc.3 += wimg
                                * (-2.0 * bil(&wa, &wb, &cy, &cy, a, b) + 2.0 * bil(&ca, &cb, &la, &lb, a, b));
                        }
                    }
                }
            }
            acc
        })
        .reduce(
            || (0.0, 0.0, 0.0, 0.0),
            |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2, x.3 + y.3),
        );
    let wv2 = g.v_cell() * g.v_cell();
    Ok(PairTerms {
        dissipation_x: -0.5 * dx_sum * wv2,
        dissipation_v: -0.5 * dv_sum * wv2,
        commutator: 0.5 * gamma * gamma * comm_sum * wv2,
        commutator_remainder: 0.25 * rem_sum * wv2,
        pairs: nvt * (nvt - 1),
    })
}

/// Central difference of a functional along `q`, shrinking `dt` by 4 until two
/// successive values agree or the sweep ends. Returns `(value, last change)`.
fn directional_derivative(
    f: &DistributionField,
    q: &[f64],
    functional: &dyn Fn(&DistributionField) -> f64,
) -> (f64, f64) {
    let qmax = q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if qmax == 0.0 {
        return (0.0, 0.0);
    }
    let mut dt = 1e-3 * f.max() / qmax;
    let mut prev: Option<f64> = None;
    let mut change = f64::INFINITY;
    let mut value = 0.0;
    for _ in 0..4 {
        let shifted = |s: f64| DistributionField {
            grid: f.grid,
            values: f.values.iter().zip(q).map(|(a, b)| a + s * b).collect(),
        };
        value = (functional(&shifted(dt)) - functional(&shifted(-dt))) / (2.0 * dt);
        if let Some(p) = prev {
            change = (value - p).abs();
            if change <= 1e-6 * value.abs().max(1e-300) {
                break;
            }
        }
        prev = Some(value);
        dt *= 0.25;
    }
    (value, change)
}

fn check_inputs(f: &DistributionField, params: &ModelParams) -> Result<()> {
    require_3x3(&f.grid)?;
    params.validate()?;
    require_constant_kappa(params)?;
    f.check_finite()?;
    if f.values.iter().any(|&v| v <= 0.0) {
        return Err(Error::Degenerate("Fisher identities need f > 0 everywhere".into()));
    }
    Ok(())
}

fn rel_gap(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (lhs - rhs).abs() / rhs.abs().max(1e-300)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FisherXIdentity {
    /// `d/dt int |grad_x f|^2 / f` along the collision operator.
    pub lhs: f64,
    pub rhs: f64,
    pub rel_gap: f64,
    pub lhs_dt_change: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FisherVIdentity {
    /// `d/dt int |grad_v f|^2 / f` along collisions plus free transport.
    pub lhs: f64,
    pub lhs_collision: f64,
    pub lhs_transport: f64,
    pub rhs_dissipation: f64,
    pub rhs_commutator: f64,
    /// `-8 int grad_v sqrt(f) . grad_x sqrt(f)`.
    pub rhs_cross: f64,
    pub rel_gap: f64,
    /// Exact commutator contribution, replacing the closed-form `rhs_commutator`.
    pub commutator_remainder: f64,
    /// Gap of `lhs` against `rhs_dissipation + commutator_remainder + rhs_cross`.
    pub rel_gap_remainder: f64,
    pub lhs_dt_change: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CommutatorInequality {
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// All identity terms from one pass over the pairs.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FisherIdentityReport {
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    pub gamma: f64,
    pub fisher_x: f64,
    pub fisher_v: f64,
    pub x_identity: FisherXIdentity,
    pub v_identity: FisherVIdentity,
    pub commutator_inequality: CommutatorInequality,
    /// `d/dt (I_x + I_v) + 8 int grad_v sqrt(f) . grad_x sqrt(f)`, which the theory makes `<= 0`.
    pub combined_excess: f64,
    pub pairs: usize,
}

impl FisherIdentityReport {
    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// `-v . grad_x f` over the transported axes.
fn free_transport(f: &DistributionField, ops: &SpectralOps) -> Vec<f64> {
    let g = f.grid;
    let nvt = g.nvt();
    let mut out = vec![0.0; f.values.len()];
    for i in 0..g.transported_axes() {
        let d = ops.dx(&f.values, i);
        out.par_iter_mut().enumerate().for_each(|(k, o)| {
            *o -= g.v_coords(k % nvt)[i] * d[k];
        });
    }
    out
}

fn cross_term(f: &DistributionField, ops: &SpectralOps) -> f64 {
    let g = f.grid;
    let theta = THETA_REL * f.max();
    let cut = FISHER_CUTOFF_REL * f.max();
    let mut s = 0.0;
    for i in 0..g.transported_axes() {
        let a = ops.dv(&f.values, i);
        let b = ops.dx(&f.values, i);
        s += (0..f.values.len())
            .into_par_iter()
            .map(|k| {
                let fv = f.values[k];
                if fv < cut {
                    0.0
                } else {
                    a[k] * b[k] / (fv + theta)
                }
            })
            .sum::<f64>();
    }
    -2.0 * s * g.cell_volume()
}

/// Both Fisher identities and the commutator-term inequality on one field.
pub fn fisher_identity_report(f: &DistributionField, params: &ModelParams) -> Result<FisherIdentityReport> {
    check_inputs(f, params)?;
    let g = f.grid;
    let ops = SpectralOps::new(g);
    let op = CollisionOperator::new(g, *params, false)?;
    let (q, _) = op.apply(f)?;
    let terms = pair_terms(f, params, &ops)?;
    let [ix, iv] = fisher_information(f, &ops);
    let fx = |h: &DistributionField| fisher_information(h, &ops)[0];
    let fvf = |h: &DistributionField| fisher_information(h, &ops)[1];
    let (lhs_x, ch_x) = directional_derivative(f, &q, &fx);
    let (lhs_vc, ch_vc) = directional_derivative(f, &q, &fvf);
    let t = free_transport(f, &ops);
    let (lhs_vt, ch_vt) = directional_derivative(f, &t, &fvf);
    let rhs_cross = cross_term(f, &ops);
    let rhs_v = terms.dissipation_v + terms.commutator + rhs_cross;
    let lhs_v = lhs_vc + lhs_vt;
    let ineq_rhs = -terms.dissipation_v;
    Ok(FisherIdentityReport {
        nx: g.nx,
        nv: g.nv,
        lx: g.lx,
        lv: g.lv,
        gamma: params.gamma,
        fisher_x: ix,
        fisher_v: iv,
        x_identity: FisherXIdentity {
            lhs: lhs_x,
            rhs: terms.dissipation_x,
            rel_gap: rel_gap(lhs_x, terms.dissipation_x),
            lhs_dt_change: ch_x,
        },
        v_identity: FisherVIdentity {
            lhs: lhs_v,
            lhs_collision: lhs_vc,
            lhs_transport: lhs_vt,
            rhs_dissipation: terms.dissipation_v,
            rhs_commutator: terms.commutator,
            rhs_cross,
            rel_gap: rel_gap(lhs_v, rhs_v),
            commutator_remainder: terms.commutator_remainder,
            rel_gap_remainder: rel_gap(lhs_v, terms.dissipation_v + terms.commutator_remainder + rhs_cross),
            lhs_dt_change: ch_vc.max(ch_vt),
        },
        commutator_inequality: CommutatorInequality {
            lhs: terms.commutator,
            rhs: ineq_rhs,
            ratio: if ineq_rhs > 0.0 { terms.commutator / ineq_rhs } else { 0.0 },
        },
        combined_excess: lhs_x + lhs_v - rhs_cross,
        pairs: terms.pairs,
    })
}

pub fn fisher_x_derivative_identity(f: &DistributionField, params: &ModelParams) -> Result<FisherXIdentity> {
    Ok(fisher_identity_report(f, params)?.x_identity)
}

pub fn fisher_v_derivative_identity(f: &DistributionField, params: &ModelParams) -> Result<FisherVIdentity> {
    Ok(fisher_identity_report(f, params)?.v_identity)
}

pub fn gs24_inequality_probe(f: &DistributionField, params: &ModelParams) -> Result<CommutatorInequality> {
    check_inputs(f, params)?;
    let ops = SpectralOps::new(f.grid);
    let t = pair_terms(f, params, &ops)?;
    let rhs = -t.dissipation_v;
    Ok(CommutatorInequality {
        lhs: t.commutator,
        rhs,
        ratio: if rhs > 0.0 { t.commutator / rhs } else { 0.0 },
    })
}

/// `-2 sum_i int f (D_xi grad_v log f) . A (D_xi grad_v log f)` from the FFT coefficients;
/// the collapsed form of the `x` pair sum.
pub fn fisher_x_rhs_collapsed(f: &DistributionField, params: &ModelParams) -> Result<f64> {
    check_inputs(f, params)?;
    let g = f.grid;
    let ops = SpectralOps::new(g);
    let c = CollisionOperator::new(g, *params, false)?.coefficients(f)?;
    let theta = THETA_REL * f.max();
    let dvf: Vec<Vec<f64>> = (0..3).map(|j| ops.dv(&f.values, j)).collect();
    let mut total = 0.0;
    for i in 0..3 {
        let dx = ops.dx(&f.values, i);
        let dxv: Vec<Vec<f64>> = (0..3).map(|j| ops.dx(&dvf[j], i)).collect();
        total += (0..f.values.len())
            .into_par_iter()
            .map(|k| {
                let inv = 1.0 / (f.values[k] + theta);
                let gk: Vec<f64> = (0..3).map(|j| dxv[j][k] * inv - dx[k] * inv * dvf[j][k] * inv).collect();
                let a = c.a_matrix(k);
                let mut s = 0.0;
                for p in 0..3 {
                    for q in 0..3 {
                        s += gk[p] * a[p][q] * gk[q];
                    }
                }
                f.values[k] * s
            })
            .sum::<f64>();
    }
    Ok(-2.0 * total * g.cell_volume())
}
