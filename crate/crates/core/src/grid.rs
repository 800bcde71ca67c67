//! Periodic phase-space grid, quadrature, spectral gradients and exact transport.

use crate::error::{Error, Result};
use crate::spectral::{apply_axis, apply_axis_selected, diff_matrix, shift_matrix};
use serde::{Deserialize, Serialize};

/// Tensor grid on `[-Lx, Lx)^dx x [-Lv, Lv)^dv`. Nodes sit at `-L + i h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub dx: usize,
    pub dv: usize,
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    pub hx: f64,
    pub hv: f64,
}

impl PhaseGrid {
    pub fn new(dx: usize, dv: usize, nx: usize, nv: usize, lx: f64, lv: f64) -> Result<Self> {
        if !(1..=3).contains(&dx) {
            return Err(Error::Grid(format!("dx = {dx} must be 1, 2 or 3")));
        }
        if !(2..=3).contains(&dv) {
            return Err(Error::Grid(format!("dv = {dv} must be 2 or 3")));
        }
        for (name, n) in [("nx", nx), ("nv", nv)] {
            if n < 4 || n % 2 != 0 {
                return Err(Error::Grid(format!("{name} = {n} must be even and >= 4")));
            }
        }
        if !(lx > 0.0 && lx.is_finite() && lv > 0.0 && lv.is_finite()) {
            return Err(Error::Grid(format!(
                "box half-widths must be positive, got Lx = {lx}, Lv = {lv}"
            )));
        }
        Ok(Self {
            dx,
            dv,
            nx,
            nv,
            lx,
            lv,
            hx: 2.0 * lx / nx as f64,
            hv: 2.0 * lv / nv as f64,
        })
    }

    pub fn ndim(&self) -> usize {
        self.dx + self.dv
    }

    /// Array shape, x axes first.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.dx];
        s.extend(std::iter::repeat(self.nv).take(self.dv));
        s
    }

    pub fn v_shape(&self) -> Vec<usize> {
        vec![self.nv; self.dv]
    }

    pub fn x_shape(&self) -> Vec<usize> {
        vec![self.nx; self.dx]
    }

    /// Number of spatial nodes.
    pub fn nxt(&self) -> usize {
        self.nx.pow(self.dx as u32)
    }

    /// Number of velocity nodes.
    pub fn nvt(&self) -> usize {
        self.nv.pow(self.dv as u32)
    }

    pub fn len(&self) -> usize {
        self.nxt() * self.nvt()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x_cell(&self) -> f64 {
        self.hx.powi(self.dx as i32)
    }

    pub fn v_cell(&self) -> f64 {
        self.hv.powi(self.dv as i32)
    }

    /// Quadrature weight of one phase-space cell.
    pub fn cell_volume(&self) -> f64 {
        self.x_cell() * self.v_cell()
    }

    pub fn x_node(&self, i: usize) -> f64 {
        -self.lx + i as f64 * self.hx
    }

    pub fn v_node(&self, i: usize) -> f64 {
        -self.lv + i as f64 * self.hv
    }

    /// Coordinates of spatial node `ix` (row-major multi-index), unused axes zero.
    pub fn x_coords(&self, ix: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut r = ix;
        for a in (0..self.dx).rev() {
            out[a] = self.x_node(r % self.nx);
            r /= self.nx;
        }
        out
    }

    pub fn v_coords(&self, iv: usize) -> [f64; 3] {
        let mut out = [0.0; 3];
        let mut r = iv;
        for a in (0..self.dv).rev() {
            out[a] = self.v_node(r % self.nv);
            r /= self.nv;
        }
        out
    }

    /// Velocity multi-index of `iv`.
    pub fn v_index(&self, iv: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut r = iv;
        for a in (0..self.dv).rev() {
            out[a] = r % self.nv;
            r /= self.nv;
        }
        out
    }

    pub fn x_index(&self, ix: usize) -> [usize; 3] {
        let mut out = [0; 3];
        let mut r = ix;
        for a in (0..self.dx).rev() {
            out[a] = r % self.nx;
            r /= self.nx;
        }
        out
    }

    /// Spatial axes advected by a velocity component: x axis `j` moves with `v_j` when `j < dv`.
    pub fn transported_axes(&self) -> usize {
        self.dx.min(self.dv)
    }

    /// Table of `|v|^2` over velocity nodes.
    pub fn v_sq_table(&self) -> Vec<f64> {
        (0..self.nvt())
            .map(|iv| {
                let v = self.v_coords(iv);
                v.iter().map(|c| c * c).sum()
            })
            .collect()
    }

    pub fn x_sq_table(&self) -> Vec<f64> {
        (0..self.nxt())
            .map(|ix| {
                let x = self.x_coords(ix);
                x.iter().map(|c| c * c).sum()
            })
            .collect()
    }
}

/// Nonnegative phase-space density sampled on a [`PhaseGrid`]; flat index `ix * nvt + iv`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Sample `f(x, v)` at every node.
    pub fn from_fn(grid: PhaseGrid, f: impl Fn([f64; 3], [f64; 3]) -> f64) -> Self {
        let nvt = grid.nvt();
        let vc: Vec<[f64; 3]> = (0..nvt).map(|iv| grid.v_coords(iv)).collect();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nxt() {
            let x = grid.x_coords(ix);
            for v in &vc {
                values.push(f(x, *v));
            }
        }
        Self { grid, values }
    }

    pub fn check_finite(&self) -> Result<()> {
        check_finite(&self.values)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Spatial marginal weights: `F(v) = sum_x f(x, v) hx^dx`.
    pub fn v_marginal(&self) -> Vec<f64> {
        let nvt = self.grid.nvt();
        let mut out = vec![0.0; nvt];
        for chunk in self.values.chunks(nvt) {
            for (o, f) in out.iter_mut().zip(chunk) {
                *o += f;
            }
        }
        let w = self.grid.x_cell();
        out.iter_mut().for_each(|o| *o *= w);
        out
    }

    pub fn l1_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            * self.grid.cell_volume()
    }
}

pub fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|x| !x.is_finite()) {
        Some(node) => Err(Error::NonFinite {
            node,
            value: values[node],
        }),
        None => Ok(()),
    }
}

/// `sum weight(x, v) f(x, v) hx^dx hv^dv`.
pub fn integrate(field: &DistributionField, weight: impl Fn([f64; 3], [f64; 3]) -> f64) -> Result<f64> {
    field.check_finite()?;
    let g = field.grid;
    let nvt = g.nvt();
    let vc: Vec<[f64; 3]> = (0..nvt).map(|iv| g.v_coords(iv)).collect();
    let mut acc = 0.0;
    for (ix, chunk) in field.values.chunks(nvt).enumerate() {
        let x = g.x_coords(ix);
        for (f, v) in chunk.iter().zip(&vc) {
            let w = weight(x, *v);
            if !w.is_finite() {
                return Err(Error::NonFinite {
                    node: ix * nvt,
                    value: w,
                });
            }
            acc += w * f;
        }
    }
    Ok(acc * g.cell_volume())
}

/// Precomputed spectral differentiation along every axis of a grid.
#[derive(Debug, Clone)]
pub struct SpectralOps {
    pub grid: PhaseGrid,
    shape: Vec<usize>,
    dmat_x: Vec<f64>,
    dmat_v: Vec<f64>,
}

impl SpectralOps {
    pub fn new(grid: PhaseGrid) -> Self {
        Self {
            grid,
            shape: grid.shape(),
            dmat_x: diff_matrix(grid.nx, grid.lx),
            dmat_v: diff_matrix(grid.nv, grid.lv),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// `dst = d/dx_a src`.
    pub fn dx_into(&self, src: &[f64], dst: &mut [f64], a: usize) {
        apply_axis(src, dst, &self.shape, a, &self.dmat_x);
    }

    /// `dst = d/dv_a src`.
    pub fn dv_into(&self, src: &[f64], dst: &mut [f64], a: usize) {
        apply_axis(src, dst, &self.shape, self.grid.dx + a, &self.dmat_v);
    }

    pub fn dx(&self, src: &[f64], a: usize) -> Vec<f64> {
        let mut d = vec![0.0; src.len()];
        self.dx_into(src, &mut d, a);
        d
    }

    pub fn dv(&self, src: &[f64], a: usize) -> Vec<f64> {
        let mut d = vec![0.0; src.len()];
        self.dv_into(src, &mut d, a);
        d
    }

    /// Velocity derivative of a single velocity slice (shape `[nv; dv]`).
    pub fn dv_slice(&self, src: &[f64], a: usize) -> Vec<f64> {
        let mut d = vec![0.0; src.len()];
        apply_axis(src, &mut d, &self.grid.v_shape(), a, &self.dmat_v);
        d
    }

    pub fn dmat_v(&self) -> &[f64] {
        &self.dmat_v
    }
}

pub fn gradient_x(field: &DistributionField) -> Vec<Vec<f64>> {
    let ops = SpectralOps::new(field.grid);
    (0..field.grid.dx).map(|a| ops.dx(&field.values, a)).collect()
}

pub fn gradient_v(field: &DistributionField) -> Vec<Vec<f64>> {
    let ops = SpectralOps::new(field.grid);
    (0..field.grid.dv).map(|a| ops.dv(&field.values, a)).collect()
}

/// Cached per-velocity shift matrices for exact advection `x -> x - v dt`.
#[derive(Debug, Clone)]
pub struct Transport {
    grid: PhaseGrid,
    shape: Vec<usize>,
    dt: f64,
    weight: Vec<f64>,
    mats: Vec<Vec<Vec<f64>>>,
}

impl Transport {
    /// `speed_weight(v_a)` scales the advection speed along each axis; use `|_| 1.0` for pure transport.
    pub fn new(grid: PhaseGrid, dt: f64) -> Self {
        Self::with_weight(grid, dt, vec![1.0; grid.nv])
    }

    /// Advection speed `w_i * v` where `w_i` is indexed by the node along each velocity axis.
    pub fn with_weight(grid: PhaseGrid, dt: f64, weight: Vec<f64>) -> Self {
        let mats = (0..grid.transported_axes())
            .map(|_| {
                (0..grid.nv)
                    .map(|iv| shift_matrix(grid.nx, grid.lx, weight[iv] * grid.v_node(iv) * dt))
                    .collect()
            })
            .collect();
        Self {
            grid,
            shape: grid.shape(),
            dt,
            weight,
            mats,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    /// Advect in place; `scratch` must have the field length.
    pub fn apply(&self, values: &mut Vec<f64>, scratch: &mut Vec<f64>) {
        if self.dt == 0.0 {
            return;
        }
        let g = self.grid;
        for a in 0..g.transported_axes() {
            apply_axis_selected(values, scratch, &self.shape, a, g.dx + a, &self.mats[a]);
            std::mem::swap(values, scratch);
        }
    }
}

/// Exact spectral advection of every v-slice by `-v dt`.
pub fn shift_transport(field: &DistributionField, dt: f64) -> DistributionField {
    let t = Transport::new(field.grid, dt);
    let mut values = field.values.clone();
    let mut scratch = vec![0.0; values.len()];
    t.apply(&mut values, &mut scratch);
    DistributionField {
        grid: field.grid,
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn grid_rejects_odd_or_small() {
        assert!(PhaseGrid::new(1, 2, 5, 8, 1.0, 1.0).is_err());
        assert!(PhaseGrid::new(1, 2, 8, 2, 1.0, 1.0).is_err());
        assert!(PhaseGrid::new(1, 1, 8, 8, 1.0, 1.0).is_err());
        assert!(PhaseGrid::new(4, 2, 8, 8, 1.0, 1.0).is_err());
        let g = PhaseGrid::new(2, 3, 4, 6, 2.0, 3.0).unwrap();
        assert_eq!(g.hx, 1.0);
        assert_eq!(g.hv, 1.0);
        assert_eq!(g.len(), 16 * 216);
    }

    #[test]
    fn sine_derivative_is_exact() {
        let g = PhaseGrid::new(1, 2, 8, 4, 2.0, 1.0).unwrap();
        let f = DistributionField::from_fn(g, |x, _| (PI * x[0] / g.lx).sin());
        let d = gradient_x(&f);
        let ex = DistributionField::from_fn(g, |x, _| PI / g.lx * (PI * x[0] / g.lx).cos());
        for (a, b) in d[0].iter().zip(&ex.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_slice_is_not_moved() {
        let g = PhaseGrid::new(2, 2, 8, 8, 1.0, 2.0).unwrap();
        let f = DistributionField::from_fn(g, |x, v| (1.0 + x[0] * x[1]).exp() + v[0]);
        let s = shift_transport(&f, 0.37);
        let iv0 = (g.nv / 2) * g.nv + g.nv / 2;
        for ix in 0..g.nxt() {
            let k = ix * g.nvt() + iv0;
            assert!((s.values[k] - f.values[k]).abs() < 1e-12);
        }
    }
}
