//! Metriplectic form `d_t f = L(f) dE + M(f) dS` with
//! `E = 1/2 int |v|^2 f` and `S = -int f log f`.

use crate::coefficients::{sym_index, CollisionCoefficients};
use crate::collision::{CollisionOperator, THETA_REL};
use crate::error::{Error, Result};
use crate::grid::{DistributionField, PhaseGrid, SpectralOps};
use crate::kernels::ModelParams;
use serde::Serialize;

/// Grid function `g` with its x- and v-gradients.
#[derive(Debug, Clone)]
pub struct CotangentField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub grad_x: Vec<Vec<f64>>,
    pub grad_v: Vec<Vec<f64>>,
}

impl CotangentField {
    /// Gradients by spectral differentiation.
    pub fn from_values(grid: PhaseGrid, values: Vec<f64>, ops: &SpectralOps) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "cotangent field has {} values, grid has {}",
                values.len(),
                grid.len()
            )));
        }
        crate::grid::check_finite(&values)?;
        let grad_x = (0..grid.dx).map(|a| ops.dx(&values, a)).collect();
        let grad_v = (0..grid.dv).map(|a| ops.dv(&values, a)).collect();
        Ok(Self {
            grid,
            values,
            grad_x,
            grad_v,
        })
    }

    /// `dE = |v|^2 / 2` with its exact gradient `(0, v)`; `|v|^2` is not periodic.
    pub fn energy(grid: PhaseGrid) -> Self {
        let n = grid.len();
        let nvt = grid.nvt();
        let vsq = grid.v_sq_table();
        let values = (0..n).map(|k| 0.5 * vsq[k % nvt]).collect();
        let grad_v = (0..grid.dv)
            .map(|a| (0..n).map(|k| grid.v_coords(k % nvt)[a]).collect())
            .collect();
        Self {
            grid,
            values,
            grad_x: vec![vec![0.0; n]; grid.dx],
            grad_v,
        }
    }

    /// `dS = -(log f + 1)` with gradients `-grad f / f` (floored).
    pub fn entropy(f: &DistributionField, ops: &SpectralOps) -> Self {
        let grid = f.grid;
        let theta = THETA_REL * f.max().max(0.0);
        let floor = |v: f64| v.max(0.0) + theta;
        let values = f.values.iter().map(|&v| -(floor(v).ln() + 1.0)).collect();
        let quot = |d: Vec<f64>| -> Vec<f64> {
            d.iter().zip(&f.values).map(|(g, &v)| -g / floor(v)).collect()
        };
        let grad_x = (0..grid.dx).map(|a| quot(ops.dx(&f.values, a))).collect();
        let grad_v = (0..grid.dv).map(|a| quot(ops.dv(&f.values, a))).collect();
        Self {
            grid,
            values,
            grad_x,
            grad_v,
        }
    }
}

/// `<g, h> = int g h`.
pub fn pairing(grid: &PhaseGrid, g: &[f64], h: &[f64]) -> f64 {
    g.iter().zip(h).map(|(a, b)| a * b).sum::<f64>() * grid.cell_volume()
}

fn l1(grid: &PhaseGrid, g: &[f64]) -> f64 {
    g.iter().map(|x| x.abs()).sum::<f64>() * grid.cell_volume()
}

/// `L(f) g = div_v(f grad_x g) - div_x(f grad_v g)` over the paired axes `x_i <-> v_i`.
pub fn poisson_apply(f: &DistributionField, g: &CotangentField, ops: &SpectralOps) -> Vec<f64> {
    let grid = f.grid;
    let mut out = vec![0.0; grid.len()];
    let mut tmp = vec![0.0; grid.len()];
    for i in 0..grid.transported_axes() {
        let a: Vec<f64> = f.values.iter().zip(&g.grad_x[i]).map(|(f, g)| f * g).collect();
        ops.dv_into(&a, &mut tmp, i);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o += t);
        let b: Vec<f64> = f.values.iter().zip(&g.grad_v[i]).map(|(f, g)| f * g).collect();
        ops.dx_into(&b, &mut tmp, i);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= t);
    }
    out
}

/// `M(f) g = -div_v(f (A[f] grad_v g - A~[f grad_v g]))`.
pub fn metric_apply_with(
    f: &DistributionField,
    g: &CotangentField,
    op: &CollisionOperator,
    coeffs: &CollisionCoefficients,
) -> Vec<f64> {
    let grid = f.grid;
    let dv = grid.dv;
    let fg: Vec<Vec<f64>> = g
        .grad_v
        .iter()
        .map(|gr| gr.iter().zip(&f.values).map(|(a, b)| a * b).collect())
        .collect();
    let tilde = op.pipeline.tilde_a(&fg);
    let mut out = vec![0.0; grid.len()];
    let mut tmp = vec![0.0; grid.len()];
    for i in 0..dv {
        let flux: Vec<f64> = (0..grid.len())
            .map(|k| {
                let s = coeffs.at(k);
                let mut ag = 0.0;
                for j in 0..dv {
                    ag += coeffs.a[sym_index(i, j, dv)][s] * g.grad_v[j][k];
                }
                f.values[k] * ag - f.values[k] * tilde[i][k]
            })
            .collect();
        op.ops.dv_into(&flux, &mut tmp, i);
        out.iter_mut().zip(&tmp).for_each(|(o, t)| *o -= t);
    }
    out
}

pub fn metric_apply(f: &DistributionField, g: &CotangentField, params: &ModelParams) -> Result<Vec<f64>> {
    let op = CollisionOperator::new(f.grid, *params, false)?;
    let c = op.coefficients(f)?;
    Ok(metric_apply_with(f, g, &op, &c))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GenericReport {
    /// `||(L dE + M dS) - (-v.grad_x f + Q)||_1 / ||Q||_1`, or the absolute value when `Q = 0`.
    pub relative_residual: f64,
    pub absolute_residual: f64,
    pub q_norm: f64,
    pub l_ds_norm: f64,
    pub m_de_norm: f64,
    pub f_norm: f64,
}

/// Operators reused across frames.
#[derive(Debug)]
pub struct GenericChecks {
    op: CollisionOperator,
}

impl GenericChecks {
    pub fn new(grid: PhaseGrid, params: ModelParams) -> Result<Self> {
        Ok(Self {
            op: CollisionOperator::new(grid, params, false)?,
        })
    }

    pub fn operator(&self) -> &CollisionOperator {
        &self.op
    }

    pub fn evaluate(&self, f: &DistributionField) -> Result<GenericReport> {
        let grid = f.grid;
        let ops = &self.op.ops;
        let coeffs = self.op.coefficients(f)?;
        let de = CotangentField::energy(grid);
        let ds = CotangentField::entropy(f, ops);
        let l_de = poisson_apply(f, &de, ops);
        let m_ds = metric_apply_with(f, &ds, &self.op, &coeffs);
        let q = self.op.apply_with(&coeffs, &f.values);
        let nvt = grid.nvt();
        let mut transport = vec![0.0; grid.len()];
        for i in 0..grid.transported_axes() {
            let d = ops.dx(&f.values, i);
            for (k, t) in transport.iter_mut().enumerate() {
                *t -= grid.v_coords(k % nvt)[i] * d[k];
            }
        }
        let diff: Vec<f64> = (0..grid.len())
            .map(|k| (l_de[k] + m_ds[k]) - (transport[k] + q[k]))
            .collect();
        let abs = l1(&grid, &diff);
        let q_norm = l1(&grid, &q);
        let l_ds = poisson_apply(f, &ds, ops);
        let m_de = metric_apply_with(f, &de, &self.op, &coeffs);
        Ok(GenericReport {
            relative_residual: if q_norm > 0.0 { abs / q_norm } else { abs },
            absolute_residual: abs,
            q_norm,
            l_ds_norm: l1(&grid, &l_ds),
            m_de_norm: l1(&grid, &m_de),
            f_norm: l1(&grid, &f.values),
        })
    }
}

pub fn generic_residual(f: &DistributionField, params: &ModelParams) -> Result<GenericReport> {
    GenericChecks::new(f.grid, *params)?.evaluate(f)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct DegeneracyReport {
    pub l_ds_norm: f64,
    pub m_de_norm: f64,
    pub f_norm: f64,
}

/// `||L(f) dS||_1` and `||M(f) dE||_1`.
pub fn degeneracy_check(f: &DistributionField, params: &ModelParams) -> Result<DegeneracyReport> {
    let r = generic_residual(f, params)?;
    Ok(DegeneracyReport {
        l_ds_norm: r.l_ds_norm,
        m_de_norm: r.m_de_norm,
        f_norm: r.f_norm,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct JacobiReport {
    /// `{F,{G,K}} + {G,{K,F}} + {K,{F,G}}`.
    pub cyclic_sum: f64,
    /// Sum of the absolute values of the three terms.
    pub scale: f64,
    pub relative: f64,
}

/// Jacobi identity of `{F, G} = <dF, L(f) dG>` for `F = int phi1 f`, `G = int phi2 f`,
/// `K = 1/2 int phi3 f^2`, with the functional derivatives of the inner brackets taken by
/// central differences node by node. A smoke test: it can falsify, not certify.
pub fn jacobi_smoke_test(
    f: &DistributionField,
    phis: [&[f64]; 3],
    ops: &SpectralOps,
) -> Result<JacobiReport> {
    let grid = f.grid;
    let cell = grid.cell_volume();
    // Functional derivatives of the three base functionals at a given f.
    let d_f = |i: usize, fv: &[f64]| -> Vec<f64> {
        match i {
            0 | 1 => phis[i].to_vec(),
            _ => phis[2].iter().zip(fv).map(|(p, x)| p * x).collect(),
        }
    };
    let bracket = |fv: &[f64], da: &[f64], db: &[f64]| -> Result<f64> {
        let field = DistributionField {
            grid,
            values: fv.to_vec(),
        };
        let gb = CotangentField::from_values(grid, db.to_vec(), ops)?;
        Ok(pairing(&grid, da, &poisson_apply(&field, &gb, ops)))
    };
    // Functional derivative of {A, B} at f by central differences; the bracket is
    // at most quadratic in f, so the difference quotient is exact up to roundoff.
    let inner_derivative = |a: usize, b: usize| -> Result<Vec<f64>> {
        let eta = 1e-3 * f.max().max(1e-300);
        let mut out = vec![0.0; grid.len()];
        let mut work = f.values.clone();
        for k in 0..grid.len() {
            let base = work[k];
            work[k] = base + eta;
            let up = bracket(&work, &d_f(a, &work), &d_f(b, &work))?;
            work[k] = base - eta;
            let dn = bracket(&work, &d_f(a, &work), &d_f(b, &work))?;
            work[k] = base;
            out[k] = (up - dn) / (2.0 * eta * cell);
        }
        Ok(out)
    };
    let fv = &f.values;
    let t1 = bracket(fv, &d_f(0, fv), &inner_derivative(1, 2)?)?;
    let t2 = bracket(fv, &d_f(1, fv), &inner_derivative(2, 0)?)?;
    let t3 = bracket(fv, &d_f(2, fv), &inner_derivative(0, 1)?)?;
    let sum = t1 + t2 + t3;
    let scale = t1.abs() + t2.abs() + t3.abs();
    Ok(JacobiReport {
        cyclic_sum: sum,
        scale,
        relative: if scale > 0.0 { sum.abs() / scale } else { sum.abs() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_cotangent_is_annihilated() {
        let g = PhaseGrid::new(2, 2, 4, 6, 1.0, 3.0).unwrap();
        let ops = SpectralOps::new(g);
        let f = DistributionField::from_fn(g, |x, v| (1.0 + 0.2 * x[0].sin()) * (-(v[0] * v[0] + v[1] * v[1])).exp());
        let c = CotangentField::from_values(g, vec![3.0; g.len()], &ops).unwrap();
        let l = poisson_apply(&f, &c, &ops);
        assert!(l.iter().all(|x| x.abs() < 1e-12));
    }
}
