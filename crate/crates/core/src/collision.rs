//! Collision operator in divergence form and its entropy-dissipation quadratic form.

use crate::coefficients::{sym_index, CoefficientPipeline, CollisionCoefficients};
use crate::error::{Error, Result};
use crate::grid::{check_finite, DistributionField, PhaseGrid, SpectralOps};
use crate::kernels::ModelParams;
use rayon::prelude::*;

/// Relative logarithm floor: `theta = THETA_REL * max f`.
pub const THETA_REL: f64 = 1e-30;
/// Nodes below this fraction of `max f` are left out of Fisher integrands.
pub const FISHER_CUTOFF_REL: f64 = 1e-14;

#[derive(Debug, Clone)]
pub struct CollisionOutput {
    pub q: Vec<f64>,
    pub dissipation: f64,
    pub coeffs: CollisionCoefficients,
}

/// Assembles `Q(f~, g) = div_v(A[f~] grad_v g - g b[f~])` on one grid.
#[derive(Debug)]
pub struct CollisionOperator {
    pub pipeline: CoefficientPipeline,
    pub ops: SpectralOps,
}

impl CollisionOperator {
    pub fn new(grid: PhaseGrid, params: ModelParams, regularized: bool) -> Result<Self> {
        Ok(Self {
            pipeline: CoefficientPipeline::new(grid, params, regularized)?,
            ops: SpectralOps::new(grid),
        })
    }

    pub fn grid(&self) -> PhaseGrid {
        self.pipeline.grid
    }

    pub fn coefficients(&self, f: &DistributionField) -> Result<CollisionCoefficients> {
        self.pipeline.compute(f)
    }

    /// Velocity flux `A grad_v g - g b` with the drift of the discrete bilinear form.
    pub fn flux(&self, c: &CollisionCoefficients, g: &[f64]) -> Vec<Vec<f64>> {
        let dv = self.grid().dv;
        let grads: Vec<Vec<f64>> = (0..dv).map(|j| self.ops.dv(g, j)).collect();
        (0..dv)
            .map(|i| {
                let mut out = vec![0.0; g.len()];
                out.par_iter_mut().enumerate().for_each(|(k, o)| {
                    let s = c.at(k);
                    let mut acc = -g[k] * c.b_bilinear[i][s];
                    for (j, gj) in grads.iter().enumerate() {
                        acc += c.a[sym_index(i, j, dv)][s] * gj[k];
                    }
                    *o = acc;
                });
                out
            })
            .collect()
    }

    /// `Q(f~, g)` for coefficients assembled from `f~`.
    pub fn apply_with(&self, c: &CollisionCoefficients, g: &[f64]) -> Vec<f64> {
        let flux = self.flux(c, g);
        let mut q = vec![0.0; g.len()];
        let mut tmp = vec![0.0; g.len()];
        for (i, fl) in flux.iter().enumerate() {
            self.ops.dv_into(fl, &mut tmp, i);
            q.iter_mut().zip(&tmp).for_each(|(a, b)| *a += b);
        }
        q
    }

    pub fn apply(&self, f: &DistributionField) -> Result<(Vec<f64>, CollisionCoefficients)> {
        let c = self.coefficients(f)?;
        let q = self.apply_with(&c, &f.values);
        check_finite(&q)?;
        Ok((q, c))
    }
}

/// `Q(f, f)` together with the dissipation and the coefficients used.
pub fn apply_q(f: &DistributionField, params: &ModelParams, regularized: bool) -> Result<CollisionOutput> {
    let op = CollisionOperator::new(f.grid, *params, regularized)?;
    let (q, coeffs) = op.apply(f)?;
    let dissipation = Dissipation::new(f.grid, *params, regularized)?.rate(f)?;
    Ok(CollisionOutput { q, dissipation, coeffs })
}

/// Entropy production `D(f) = 1/2 sum (phi - phi*) N kappa f f* (phi - phi*)` with `phi = grad_v log f`,
/// built from the same kernel samples as [`CollisionOperator`] so that `D = -<log f, Q(f)>` on resolved data.
#[derive(Debug)]
pub struct Dissipation {
    pipeline: CoefficientPipeline,
    ops: SpectralOps,
}

impl Dissipation {
    pub fn new(grid: PhaseGrid, params: ModelParams, regularized: bool) -> Result<Self> {
        Ok(Self {
            pipeline: CoefficientPipeline::new(grid, params, regularized)?,
            ops: SpectralOps::new(grid),
        })
    }

    pub fn rate(&self, f: &DistributionField) -> Result<f64> {
        f.check_finite()?;
        let grid = f.grid;
        let dv = grid.dv;
        let fmax = f.max();
        if !(fmax > 0.0) {
            return Ok(0.0);
        }
        let theta = THETA_REL * fmax;
        let cut = FISHER_CUTOFF_REL * fmax;
        // Nodes below the cutoff leave the pair weight f f*; their log-gradients are roundoff.
        let masked = DistributionField {
            grid,
            values: f.values.iter().map(|&v| if v >= cut { v } else { 0.0 }).collect(),
        };
        let phi: Vec<Vec<f64>> = (0..dv)
            .map(|i| {
                let mut d = self.ops.dv(&f.values, i);
                d.iter_mut()
                    .zip(&masked.values)
                    .for_each(|(g, &fv)| *g = if fv > 0.0 { *g / (fv + theta) } else { 0.0 });
                d
            })
            .collect();
        let fphi: Vec<Vec<f64>> = phi
            .iter()
            .map(|p| p.iter().zip(&masked.values).map(|(a, &b)| a * b).collect())
            .collect();
        let c = self.pipeline.compute(&masked)?;
        let f = &masked;
        let cross = self.pipeline.tilde_a(&fphi);
        let total: f64 = (0..f.values.len())
            .into_par_iter()
            .map(|k| {
                let s = c.at(k);
                let fk = f.values[k].max(0.0);
                let mut acc = 0.0;
                for i in 0..dv {
                    let mut ai = 0.0;
                    for j in 0..dv {
                        ai += c.a[sym_index(i, j, dv)][s] * phi[j][k];
                    }
                    acc += fk * phi[i][k] * ai - fphi[i][k] * cross[i][k];
                }
                acc
            })
            .sum();
        let d = total * grid.cell_volume();
        // Cancellation leaves roundoff-level negatives on equilibria.
        Ok(d.max(0.0))
    }
}

pub fn dissipation_rate(f: &DistributionField, params: &ModelParams) -> Result<f64> {
    Dissipation::new(f.grid, *params, false)?.rate(f)
}

/// `int f log f` with `0 log 0 = 0` and the relative floor.
pub fn entropy_flog(f: &DistributionField) -> f64 {
    let theta = THETA_REL * f.max().max(0.0);
    let s: f64 = f
        .values
        .par_iter()
        .map(|&v| if v > 0.0 { v * (v + theta).ln() } else { 0.0 })
        .sum();
    s * f.grid.cell_volume()
}

/// `(int |grad_x f|^2 / f, int |grad_v f|^2 / f)` with the floor and low-density cutoff.
pub fn fisher_information(f: &DistributionField, ops: &SpectralOps) -> [f64; 2] {
    let grid = f.grid;
    let fmax = f.max();
    if !(fmax > 0.0) {
        return [0.0, 0.0];
    }
    let theta = THETA_REL * fmax;
    let cut = FISHER_CUTOFF_REL * fmax;
    let part = |grads: Vec<Vec<f64>>| -> f64 {
        let s: f64 = (0..f.values.len())
            .into_par_iter()
            .map(|k| {
                let fv = f.values[k];
                if fv < cut {
                    return 0.0;
                }
                grads.iter().map(|g| g[k] * g[k]).sum::<f64>() / (fv + theta)
            })
            .sum();
        s * grid.cell_volume()
    };
    let gx = (0..grid.dx).map(|a| ops.dx(&f.values, a)).collect();
    let gv = (0..grid.dv).map(|a| ops.dv(&f.values, a)).collect();
    [part(gx), part(gv)]
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EntropyBalance {
    /// `S(t) + int_0^t (D + eps I) - S(0)` with `S = int f log f`.
    pub residual: f64,
    pub delta_s: f64,
    pub dissipated: f64,
}

/// Entropy balance along uniformly spaced frames. The artificial-diffusion
/// production `eps * int |grad f|^2 / f` is included when `params.epsilon > 0`.
pub fn entropy_balance_residual(
    frames: &[(f64, &DistributionField)],
    params: &ModelParams,
    regularized: bool,
) -> Result<EntropyBalance> {
    if frames.len() < 2 {
        return Err(Error::Trajectory(format!(
            "entropy balance needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let grid = frames[0].1.grid;
    if frames.iter().any(|(_, f)| f.grid != grid) {
        return Err(Error::Trajectory("frames live on different grids".into()));
    }
    let diss = Dissipation::new(grid, *params, regularized)?;
    let ops = SpectralOps::new(grid);
    let mut rates = Vec::with_capacity(frames.len());
    for (_, f) in frames {
        let mut r = diss.rate(f)?;
        if params.epsilon > 0.0 {
            let [fx, fv] = fisher_information(f, &ops);
            r += params.epsilon * (fx + fv);
        }
        rates.push(r);
    }
    let mut dissipated = 0.0;
    for w in 0..frames.len() - 1 {
        let dt = frames[w + 1].0 - frames[w].0;
        if !(dt > 0.0) {
            return Err(Error::Trajectory("frame times must increase".into()));
        }
        dissipated += 0.5 * dt * (rates[w] + rates[w + 1]);
    }
    let s0 = entropy_flog(frames[0].1);
    let s1 = entropy_flog(frames[frames.len() - 1].1);
    Ok(EntropyBalance {
        residual: s1 + dissipated - s0,
        delta_s: s1 - s0,
        dissipated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn maxwellian(grid: PhaseGrid) -> DistributionField {
        let dv = grid.dv as i32;
        DistributionField::from_fn(grid, |x, v| {
            let v2: f64 = v.iter().map(|c| c * c).sum();
            (1.0 + 0.3 * (std::f64::consts::PI * x[0] / grid.lx).cos())
                * (-0.5 * v2).exp()
                / (2.0 * std::f64::consts::PI).powi(dv).sqrt()
        })
    }

    #[test]
    fn zero_field_gives_zero_q() {
        let g = PhaseGrid::new(1, 2, 4, 8, 1.0, 4.0).unwrap();
        let out = apply_q(&DistributionField::zeros(g), &ModelParams::default(), false).unwrap();
        assert!(out.q.iter().all(|&x| x == 0.0));
        assert_eq!(out.dissipation, 0.0);
    }

    #[test]
    fn maxwellian_is_equilibrium() {
        let g = PhaseGrid::new(1, 2, 4, 50, 1.0, 10.0).unwrap();
        let f = maxwellian(g);
        let p = ModelParams {
            gamma: 0.0,
            ..Default::default()
        };
        let out = apply_q(&f, &p, false).unwrap();
        let qmax = out.q.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        assert!(qmax < 1e-8, "max |Q| = {qmax}");
        assert!(out.dissipation < 1e-8, "D = {}", out.dissipation);
    }

    #[test]
    fn q_has_zero_mass() {
        let g = PhaseGrid::new(1, 2, 4, 8, 1.0, 3.0).unwrap();
        let f = DistributionField::from_fn(g, |x, v| {
            (-(v[0] - 0.5).powi(2) - 0.7 * v[1] * v[1] + 0.2 * x[0] * v[1]).exp()
        });
        let out = apply_q(&f, &ModelParams::default(), false).unwrap();
        let l1: f64 = out.q.iter().map(|x| x.abs()).sum();
        let s: f64 = out.q.iter().sum();
        assert!(s.abs() <= 1e-12 * l1);
    }

    #[test]
    fn short_trajectory_is_rejected() {
        let g = PhaseGrid::new(1, 2, 4, 4, 1.0, 3.0).unwrap();
        let f = DistributionField::zeros(g);
        assert!(entropy_balance_residual(&[(0.0, &f)], &ModelParams::default(), false).is_err());
    }
}
