//! Time integration: explicit Strang splitting, and the regularized implicit scheme
//! `(f - f_prev)/tau + e^{-delta |v|^2} v.grad_x f - eps (Lap_x + Lap_v) f = Q_delta(f~, f)`
//! solved by Picard iteration on `f~`.

use crate::collision::{entropy_flog, fisher_information, CollisionOperator, Dissipation};
use crate::coefficients::CollisionCoefficients;
use crate::diagnostics::{lp_norms, moment_sums, moments, DiagnosticsContext, DiagnosticsRecord, RecordOptions, NEGATIVITY_REL};
use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid, SpectralOps, Transport};
use crate::spectral::{diff_wavenumber, to_complex, FftNd};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeMode {
    ExplicitSplit,
    FaithfulImplicit,
}

/// Time-stepping controls. Explicit mode steps with `dt`; faithful mode with `ModelParams::tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeConfig {
    pub mode: SchemeMode,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_safety: f64,
    pub picard_tol: f64,
    pub picard_max: usize,
    pub snapshot_every: usize,
    /// Midpoint rule instead of Euler for the collision substep.
    pub rk2: bool,
    pub halt_on_negativity: bool,
    pub gmres_tol: f64,
    pub gmres_restart: usize,
    pub gmres_max_iter: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        Self {
            mode: SchemeMode::ExplicitSplit,
            dt: 1e-3,
            t_end: 1.0,
            cfl_safety: 0.25,
            picard_tol: 1e-10,
            picard_max: 200,
            snapshot_every: 50,
            rk2: false,
            halt_on_negativity: false,
            gmres_tol: 1e-12,
            gmres_restart: 60,
            gmres_max_iter: 600,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self, params: &crate::kernels::ModelParams) -> Result<()> {
        params.validate()?;
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::Config(format!("cfl_safety = {} outside (0, 1]", self.cfl_safety)));
        }
        if self.snapshot_every == 0 {
            return Err(Error::Config("snapshot_every must be >= 1".into()));
        }
        match self.mode {
            SchemeMode::ExplicitSplit => {
                if !(self.dt > 0.0) {
                    return Err(Error::Config(format!("dt = {} must be > 0", self.dt)));
                }
            }
            SchemeMode::FaithfulImplicit => {
                if !(params.delta > 0.0 && params.epsilon > 0.0) {
                    return Err(Error::Config(
                        "faithful mode needs delta > 0 and epsilon > 0".into(),
                    ));
                }
                if !(self.picard_tol > 0.0) || self.picard_max == 0 {
                    return Err(Error::Config("picard_tol must be > 0 and picard_max >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Uniform step count and step size covering `[0, t_end]`.
    pub fn schedule(&self, step: f64) -> (usize, f64) {
        if self.t_end == 0.0 {
            return (0, step);
        }
        let n = ((self.t_end / step) - 1e-9).ceil().max(1.0) as usize;
        (n, self.t_end / n as f64)
    }
}

/// `f0 = f_in` in explicit mode, `min(f_in, e^{-|v|^2} / eps)` in faithful mode.
pub fn initial_condition(
    f_in: &DistributionField,
    params: &crate::kernels::ModelParams,
    mode: SchemeMode,
) -> Result<DistributionField> {
    f_in.check_finite()?;
    if let Some((node, &value)) = f_in.values.iter().enumerate().find(|(_, v)| **v < 0.0) {
        return Err(Error::NegativeInput { node, value });
    }
    match mode {
        SchemeMode::ExplicitSplit => Ok(f_in.clone()),
        SchemeMode::FaithfulImplicit => {
            if !(params.epsilon > 0.0) {
                return Err(Error::Param("faithful initial datum needs epsilon > 0".into()));
            }
            let g = f_in.grid;
            let nvt = g.nvt();
            let vsq = g.v_sq_table();
            let values = f_in
                .values
                .iter()
                .enumerate()
                .map(|(k, &f)| f.min((-vsq[k % nvt]).exp() / params.epsilon))
                .collect();
            Ok(DistributionField { grid: g, values })
        }
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    y.par_iter_mut().zip(x.par_iter()).for_each(|(yi, xi)| *yi += a * xi);
}

/// Strang splitting: half transport, lagged-coefficient collision step, half transport.
#[derive(Debug)]
pub struct ExplicitStepper {
    pub grid: PhaseGrid,
    pub params: crate::kernels::ModelParams,
    pub dt: f64,
    pub cfl_safety: f64,
    pub rk2: bool,
    op: CollisionOperator,
    half: Transport,
    full: Transport,
}

impl ExplicitStepper {
    pub fn new(grid: PhaseGrid, params: crate::kernels::ModelParams, dt: f64, cfl_safety: f64, rk2: bool) -> Result<Self> {
        Ok(Self {
            grid,
            params,
            dt,
            cfl_safety,
            rk2,
            op: CollisionOperator::new(grid, params, false)?,
            half: Transport::new(grid, 0.5 * dt),
            full: Transport::new(grid, dt),
        })
    }

    /// Stable step bound `cfl_safety hv^2 / (2 dv lambda_max(A))`.
    pub fn cfl_limit(&self, c: &CollisionCoefficients) -> (f64, f64, usize) {
        let (lmax, node) = c.max_eigenvalue();
        let g = self.grid;
        let limit = if lmax > 0.0 {
            self.cfl_safety * g.hv * g.hv / (2.0 * g.dv as f64 * lmax)
        } else {
            f64::INFINITY
        };
        (limit, lmax, node)
    }

    fn checked_coefficients(&self, values: &[f64]) -> Result<CollisionCoefficients> {
        let f = DistributionField {
            grid: self.grid,
            values: values.to_vec(),
        };
        let c = self.op.coefficients(&f)?;
        let (limit, lmax, node) = self.cfl_limit(&c);
        if self.dt > limit * (1.0 + 1e-12) {
            return Err(Error::Cfl {
                dt: self.dt,
                limit,
                eigenvalue: lmax,
                node,
            });
        }
        Ok(c)
    }

    /// Collision substep over `dt` in place.
    pub fn collide(&self, values: &mut Vec<f64>) -> Result<()> {
        let c = self.checked_coefficients(values)?;
        let q = self.op.apply_with(&c, values);
        if self.rk2 {
            let mut mid = values.clone();
            axpy(0.5 * self.dt, &q, &mut mid);
            let cm = self.checked_coefficients(&mid)?;
            let qm = self.op.apply_with(&cm, &mid);
            axpy(self.dt, &qm, values);
        } else {
            axpy(self.dt, &q, values);
        }
        crate::grid::check_finite(values)
    }

    pub fn transport_half(&self, values: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        self.half.apply(values, scratch);
    }

    pub fn transport_full(&self, values: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        self.full.apply(values, scratch);
    }

    pub fn step(&self, f: &DistributionField) -> Result<DistributionField> {
        let mut v = f.values.clone();
        let mut scratch = vec![0.0; v.len()];
        self.transport_half(&mut v, &mut scratch);
        self.collide(&mut v)?;
        self.transport_half(&mut v, &mut scratch);
        Ok(DistributionField {
            grid: self.grid,
            values: v,
        })
    }
}

pub fn step_explicit(f: &DistributionField, dt: f64, params: &crate::kernels::ModelParams) -> Result<DistributionField> {
    ExplicitStepper::new(f.grid, *params, dt, SchemeConfig::default().cfl_safety, false)?.step(f)
}

/// Restarted GMRES with right preconditioning. Returns `(x, iterations, relative residual)`.
pub fn gmres(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    precond: &dyn Fn(&[f64]) -> Vec<f64>,
    b: &[f64],
    mut x: Vec<f64>,
    tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = b.len();
    let dot = |a: &[f64], c: &[f64]| -> f64 { a.par_iter().zip(c.par_iter()).map(|(p, q)| p * q).sum() };
    let bnorm = dot(b, b).sqrt();
    if bnorm == 0.0 {
        return Ok((vec![0.0; n], 0, 0.0));
    }
    let mut total = 0;
    loop {
        let ax = apply(&x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
        let beta = dot(&r, &r).sqrt();
        let rel = beta / bnorm;
        if rel <= tol {
            return Ok((x, total, rel));
        }
        if total >= max_iter {
            return Err(Error::LinearSolver(format!(
                "GMRES stalled at relative residual {rel:e} after {total} iterations"
            )));
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut hess = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut used = 0;
        for j in 0..m {
            let z = precond(&basis[j]);
            let mut w = apply(&z);
            for i in 0..=j {
                let h = dot(&w, &basis[i]);
                hess[i][j] = h;
                axpy(-h, &basis[i], &mut w);
            }
            let hn = dot(&w, &w).sqrt();
            hess[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * hess[i][j] + sn[i] * hess[i + 1][j];
                hess[i + 1][j] = -sn[i] * hess[i][j] + cs[i] * hess[i + 1][j];
                hess[i][j] = t;
            }
            let den = hess[j][j].hypot(hess[j + 1][j]);
            if den == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = hess[j][j] / den;
                sn[j] = hess[j + 1][j] / den;
            }
            hess[j][j] = den;
            hess[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() / bnorm <= tol || hn == 0.0 {
                break;
            }
            basis.push(w.iter().map(|v| v / hn).collect());
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= hess[i][k] * y[k];
            }
            y[i] = s / hess[i][i];
        }
        let mut u = vec![0.0; n];
        for (i, yi) in y.iter().enumerate() {
            axpy(*yi, &basis[i], &mut u);
        }
        let dx = precond(&u);
        axpy(1.0, &dx, &mut x);
    }
}

#[derive(Debug, Clone)]
pub struct FaithfulStep {
    pub f_next: DistributionField,
    pub picard_iters: usize,
    /// Relative L1 size of the last Picard update.
    pub residual: f64,
    pub history: Vec<f64>,
    pub gmres_iters: usize,
}

/// One implicit step of the regularized scheme. With `delta = 0` the unregularized
/// kernels are used and the transport weight is 1 (for delta-limit comparisons).
#[derive(Debug)]
pub struct FaithfulStepper {
    pub grid: PhaseGrid,
    pub params: crate::kernels::ModelParams,
    pub cfg: SchemeConfig,
    /// Collision switch of the fixed-point map; 1 for the scheme, 0 for the linear part only.
    pub sigma: f64,
    tau: f64,
    op: CollisionOperator,
    fft: FftNd,
    symbol: Vec<f64>,
    speed: Vec<Vec<f64>>,
}

impl FaithfulStepper {
    pub fn new(grid: PhaseGrid, params: crate::kernels::ModelParams, cfg: SchemeConfig) -> Result<Self> {
        params.validate()?;
        if !(params.epsilon > 0.0) {
            return Err(Error::Param("faithful stepper needs epsilon > 0".into()));
        }
        let tau = params.tau;
        let regularized = params.delta > 0.0;
        let shape = grid.shape();
        let axes: Vec<usize> = (0..shape.len()).collect();
        let fft = FftNd::new(&shape, &axes);
        let n = grid.len();
        let symbol = (0..n)
            .into_par_iter()
            .map(|k| {
                let mut rem = k;
                let mut k2 = 0.0;
                for a in (0..shape.len()).rev() {
                    let m = rem % shape[a];
                    rem /= shape[a];
                    let (nn, l) = if a < grid.dx { (grid.nx, grid.lx) } else { (grid.nv, grid.lv) };
                    k2 += diff_wavenumber(m, nn, l).powi(2);
                }
                1.0 / tau + params.epsilon * k2
            })
            .collect();
        let nvt = grid.nvt();
        let speed = (0..grid.transported_axes())
            .map(|i| {
                (0..nvt)
                    .map(|iv| {
                        let v = grid.v_coords(iv);
                        let v2: f64 = v.iter().map(|c| c * c).sum();
                        (-params.delta * v2).exp() * v[i]
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            grid,
            params,
            cfg,
            sigma: 1.0,
            tau,
            op: CollisionOperator::new(grid, params, regularized)?,
            fft,
            symbol,
            speed,
        })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn operator(&self) -> &CollisionOperator {
        &self.op
    }

    /// `g/tau + w(v) v.grad_x g - eps Lap g - sigma Q(f~, g)`.
    pub fn apply_linear(&self, c: &CollisionCoefficients, g: &[f64]) -> Vec<f64> {
        let grid = self.grid;
        let ops = &self.op.ops;
        let nvt = grid.nvt();
        let eps = self.params.epsilon;
        let mut out: Vec<f64> = g.iter().map(|x| x / self.tau).collect();
        let mut d1 = vec![0.0; g.len()];
        let mut d2 = vec![0.0; g.len()];
        for a in 0..grid.dx {
            ops.dx_into(g, &mut d1, a);
            if a < self.speed.len() {
                let sp = &self.speed[a];
                out.par_iter_mut()
                    .enumerate()
                    .for_each(|(k, o)| *o += sp[k % nvt] * d1[k]);
            }
            ops.dx_into(&d1, &mut d2, a);
            axpy(-eps, &d2, &mut out);
        }
        for a in 0..grid.dv {
            ops.dv_into(g, &mut d1, a);
            ops.dv_into(&d1, &mut d2, a);
            axpy(-eps, &d2, &mut out);
        }
        if self.sigma != 0.0 {
            let q = self.op.apply_with(c, g);
            axpy(-self.sigma, &q, &mut out);
        }
        out
    }

    /// `(1/tau - eps Lap)^{-1} r` by FFT.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let mut z = to_complex(r);
        self.fft.forward(&mut z);
        z.par_iter_mut().zip(self.symbol.par_iter()).for_each(|(c, s)| *c /= s);
        self.fft.inverse(&mut z);
        z.into_iter().map(|c| c.re).collect()
    }

    pub fn step(&self, f_prev: &DistributionField) -> Result<FaithfulStep> {
        let rhs: Vec<f64> = f_prev.values.iter().map(|x| x / self.tau).collect();
        let mut tilde = f_prev.clone();
        let mut history = Vec::new();
        let mut gmres_total = 0;
        for it in 1..=self.cfg.picard_max {
            let c = self.op.coefficients(&tilde)?;
            let apply = |g: &[f64]| self.apply_linear(&c, g);
            let pre = |r: &[f64]| self.precondition(r);
            let (x, iters, _) = gmres(
                &apply,
                &pre,
                &rhs,
                tilde.values.clone(),
                self.cfg.gmres_tol,
                self.cfg.gmres_restart,
                self.cfg.gmres_max_iter,
            )?;
            gmres_total += iters;
            crate::grid::check_finite(&x)?;
            let norm: f64 = x.iter().map(|v| v.abs()).sum();
            let diff: f64 = x.iter().zip(&tilde.values).map(|(a, b)| (a - b).abs()).sum();
            let rel = if norm > 0.0 { diff / norm } else { diff };
            history.push(rel);
            tilde.values = x;
            if rel < self.cfg.picard_tol || self.sigma == 0.0 {
                return Ok(FaithfulStep {
                    f_next: tilde,
                    picard_iters: it,
                    residual: rel,
                    history,
                    gmres_iters: gmres_total,
                });
            }
        }
        Err(Error::PicardNonConvergence { history })
    }
}

pub fn step_faithful(
    f_prev: &DistributionField,
    cfg: &SchemeConfig,
    params: &crate::kernels::ModelParams,
) -> Result<FaithfulStep> {
    FaithfulStepper::new(f_prev.grid, *params, *cfg)?.step(f_prev)
}

/// Cheap per-step functionals.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StepSample {
    pub time: f64,
    pub mass: f64,
    pub momentum: [f64; 3],
    pub energy: f64,
    pub entropy_flog: f64,
    /// `[||f||_2, ||f||_4, ||f||_inf]`.
    pub lp: [f64; 3],
    pub moment_v_m: f64,
    pub moment_v_m2: f64,
    pub min_f: f64,
    pub max_f: f64,
    pub picard_iters: usize,
    /// Faithful mode: `(S_k - S_{k-1})/tau + eps I(f_k) + D_delta(f_k)` with `S = int f log f`.
    pub app_s_lhs: f64,
}

fn sample(f: &DistributionField, time: f64, m: f64) -> StepSample {
    let (mass, momentum, energy) = moments(f);
    let (_, vm, vm2) = moment_sums(f, m);
    StepSample {
        time,
        mass,
        momentum,
        energy,
        entropy_flog: entropy_flog(f),
        lp: lp_norms(f),
        moment_v_m: vm,
        moment_v_m2: vm2,
        min_f: f.min(),
        max_f: f.max(),
        picard_iters: 0,
        app_s_lhs: f64::NAN,
    }
}

#[derive(Debug, Clone)]
pub struct Frame {
    pub time: f64,
    pub field: DistributionField,
    pub record: DiagnosticsRecord,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode: SchemeMode,
    /// Effective step (`dt` or `tau`).
    pub step: f64,
    pub frames: Vec<Frame>,
    pub steps: Vec<StepSample>,
    pub negativity_flags: usize,
}

impl Trajectory {
    pub fn records(&self) -> Vec<DiagnosticsRecord> {
        self.frames.iter().map(|f| f.record.clone()).collect()
    }

    pub fn final_field(&self) -> &DistributionField {
        &self.frames.last().expect("trajectory has frames").field
    }

    pub fn frame_refs(&self) -> Vec<(f64, &DistributionField)> {
        self.frames.iter().map(|f| (f.time, &f.field)).collect()
    }
}

/// Integrate to `t_end`, recording a frame every `snapshot_every` steps and at the end.
pub fn run(
    cfg: &SchemeConfig,
    params: &crate::kernels::ModelParams,
    f_in: &DistributionField,
    options: RecordOptions,
) -> Result<Trajectory> {
    cfg.validate(params)?;
    let grid = f_in.grid;
    let f0 = initial_condition(f_in, params, cfg.mode)?;
    let faithful = cfg.mode == SchemeMode::FaithfulImplicit;
    let regularized = faithful && params.delta > 0.0;
    let ctx = DiagnosticsContext::new(grid, *params, regularized, options)?;
    let m = params.m_moment;
    let negative = |f: &DistributionField, t: f64| -> Result<bool> {
        let (min, max) = (f.min(), f.max());
        let flagged = min < -NEGATIVITY_REL * max;
        if flagged && cfg.halt_on_negativity {
            return Err(Error::Negativity { min, max, time: t });
        }
        Ok(flagged)
    };
    let mut traj = Trajectory {
        mode: cfg.mode,
        step: 0.0,
        frames: Vec::new(),
        steps: vec![sample(&f0, 0.0, m)],
        negativity_flags: 0,
    };
    traj.frames.push(Frame {
        time: 0.0,
        record: ctx.record(&f0, 0.0, 0)?,
        field: f0.clone(),
    });
    match cfg.mode {
        SchemeMode::ExplicitSplit => {
            let (n, dt) = cfg.schedule(cfg.dt);
            traj.step = dt;
            let stepper = ExplicitStepper::new(grid, *params, dt, cfg.cfl_safety, cfg.rk2)?;
            let mut v = f0.values.clone();
            let mut scratch = vec![0.0; v.len()];
            // A trailing half transport is merged with the next leading one unless a frame is due.
            let mut pending_half = false;
            for s in 1..=n {
                if pending_half {
                    stepper.transport_full(&mut v, &mut scratch);
                } else {
                    stepper.transport_half(&mut v, &mut scratch);
                }
                stepper.collide(&mut v)?;
                let t = s as f64 * dt;
                let frame_due = s % cfg.snapshot_every == 0 || s == n;
                let need_sample = true;
                if frame_due || need_sample {
                    let mut out = v.clone();
                    stepper.transport_half(&mut out, &mut scratch);
                    let f = DistributionField { grid, values: out };
                    if negative(&f, t)? {
                        traj.negativity_flags += 1;
                    }
                    traj.steps.push(sample(&f, t, m));
                    if frame_due {
                        traj.frames.push(Frame {
                            time: t,
                            record: ctx.record(&f, t, 0)?,
                            field: f.clone(),
                        });
                        v = f.values;
                        pending_half = false;
                        continue;
                    }
                }
                pending_half = true;
            }
        }
        SchemeMode::FaithfulImplicit => {
            let (n, tau) = cfg.schedule(params.tau);
            traj.step = tau;
            let mut p = *params;
            p.tau = tau;
            let stepper = FaithfulStepper::new(grid, p, *cfg)?;
            let diss = Dissipation::new(grid, p, regularized)?;
            let ops = SpectralOps::new(grid);
            let mut f = f0;
            let mut s_prev = traj.steps[0].entropy_flog;
            for s in 1..=n {
                let out = stepper.step(&f)?;
                f = out.f_next;
                let t = s as f64 * tau;
                if negative(&f, t)? {
                    traj.negativity_flags += 1;
                }
                let mut smp = sample(&f, t, m);
                smp.picard_iters = out.picard_iters;
                let [ix, iv] = fisher_information(&f, &ops);
                smp.app_s_lhs = (smp.entropy_flog - s_prev) / tau + p.epsilon * (ix + iv) + diss.rate(&f)?;
                s_prev = smp.entropy_flog;
                traj.steps.push(smp);
                if s % cfg.snapshot_every == 0 || s == n {
                    traj.frames.push(Frame {
                        time: t,
                        record: ctx.record(&f, t, out.picard_iters as u32)?,
                        field: f.clone(),
                    });
                }
            }
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepEntry {
    pub delta: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub steps: usize,
    pub mass_drift_rel: f64,
    pub entropy_residual: f64,
    pub entropy_delta: f64,
    /// Largest per-step discrete entropy inequality left-hand side.
    pub max_app_s_lhs: f64,
    /// L1 distance of the final state to the previous schedule entry's.
    pub cauchy_l1: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    pub monotone: bool,
    pub error: Option<String>,
}

/// Faithful runs along a schedule of `(delta, eps, tau)`, each non-increasing.
pub fn limit_sweep(
    cfg: &SchemeConfig,
    params: &crate::kernels::ModelParams,
    f_in: &DistributionField,
    schedule: &[(f64, f64, f64)],
) -> Result<SweepReport> {
    if schedule.is_empty() {
        return Err(Error::Config("empty sweep schedule".into()));
    }
    for w in schedule.windows(2) {
        if w[1].0 > w[0].0 || w[1].1 > w[0].1 || w[1].2 > w[0].2 {
            return Err(Error::Config(format!(
                "sweep schedule must be non-increasing in each parameter: {:?} -> {:?}",
                w[0], w[1]
            )));
        }
    }
    let mut cfg = *cfg;
    cfg.mode = SchemeMode::FaithfulImplicit;
    let options = RecordOptions {
        ellipticity_samples: 50,
        generic: false,
        sobolev: false,
    };
    let mut entries: Vec<SweepEntry> = Vec::new();
    let mut prev: Option<DistributionField> = None;
    for &(delta, epsilon, tau) in schedule {
        let mut p = *params;
        p.delta = delta;
        p.epsilon = epsilon;
        p.tau = tau;
        let traj = match run(&cfg, &p, f_in, options) {
            Ok(t) => t,
            Err(e) => {
                return Ok(SweepReport {
                    monotone: false,
                    entries,
                    error: Some(e.to_string()),
                })
            }
        };
        let bal = crate::collision::entropy_balance_residual(&traj.frame_refs(), &p, true)?;
        let m0 = traj.steps[0].mass;
        let mass_drift = traj
            .steps
            .iter()
            .map(|s| ((s.mass - m0) / m0).abs())
            .fold(0.0, f64::max);
        let fin = traj.final_field().clone();
        entries.push(SweepEntry {
            delta,
            epsilon,
            tau,
            steps: traj.steps.len() - 1,
            mass_drift_rel: mass_drift,
            entropy_residual: bal.residual,
            entropy_delta: bal.delta_s,
            max_app_s_lhs: traj.steps.iter().skip(1).map(|s| s.app_s_lhs).fold(f64::NEG_INFINITY, f64::max),
            cauchy_l1: prev.as_ref().map(|p| p.l1_distance(&fin)),
        });
        prev = Some(fin);
    }
    let diffs: Vec<f64> = entries.iter().filter_map(|e| e.cauchy_l1).collect();
    let monotone = diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(SweepReport {
        entries,
        monotone,
        error: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::ModelParams;

    #[test]
    fn gmres_solves_diagonal_system() {
        let d: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let b: Vec<f64> = (0..20).map(|i| (i as f64).sin()).collect();
        let apply = |x: &[f64]| x.iter().zip(&d).map(|(a, b)| a * b).collect::<Vec<_>>();
        let pre = |x: &[f64]| x.to_vec();
        let (x, _, rel) = gmres(&apply, &pre, &b, vec![0.0; 20], 1e-13, 8, 200).unwrap();
        assert!(rel <= 1e-13);
        for i in 0..20 {
            assert!((x[i] * d[i] - b[i]).abs() < 1e-11);
        }
    }

    #[test]
    fn faithful_cap_applies() {
        let g = PhaseGrid::new(1, 2, 4, 8, 1.0, 3.0).unwrap();
        let p = ModelParams {
            epsilon: 0.5,
            delta: 0.1,
            ..Default::default()
        };
        let f_in = DistributionField::from_fn(g, |_, v| 4.0 * (-(v[0] * v[0] + v[1] * v[1])).exp());
        let f0 = initial_condition(&f_in, &p, SchemeMode::FaithfulImplicit).unwrap();
        for (a, b) in f0.values.iter().zip(&f_in.values) {
            assert!((a - b / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_end_time_gives_one_frame() {
        let g = PhaseGrid::new(1, 2, 4, 8, 1.0, 4.0).unwrap();
        let f = DistributionField::from_fn(g, |_, v| (-(v[0] * v[0] + v[1] * v[1])).exp());
        let cfg = SchemeConfig {
            t_end: 0.0,
            ..Default::default()
        };
        let opts = RecordOptions {
            ellipticity_samples: 10,
            generic: false,
            sobolev: false,
        };
        let t = run(&cfg, &ModelParams::default(), &f, opts).unwrap();
        assert_eq!(t.frames.len(), 1);
    }
}
