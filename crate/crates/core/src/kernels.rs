//! Pointwise kernels: Landau kernel and projection, regularized kernels,
//! the spatial kernel family, rotation fields and lifted vector fields.
//!
//! Velocity vectors are `[f64; 3]`; for `dv = 2` the third slot is ignored
//! and returned as zero. Axis and field indices are 0-based.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];
pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaChoice {
    /// `kappa = kappa1` everywhere (requires `lambda = 0`).
    ConstantOne,
    /// `kappa(x) = kappa1 <x>^-lambda`.
    InverseBracket,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    pub gamma: f64,
    pub lambda: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub kappa_choice: KappaChoice,
    pub delta: f64,
    pub epsilon: f64,
    pub tau: f64,
    pub m_moment: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            gamma: -1.0,
            lambda: 0.0,
            kappa1: 1.0,
            kappa2: 1.0,
            kappa_choice: KappaChoice::ConstantOne,
            delta: 0.0,
            epsilon: 0.0,
            tau: 0.01,
            m_moment: 14.0,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if !(-3.0..=1.0).contains(&self.gamma) {
            return Err(Error::Param(format!("gamma = {} outside [-3, 1]", self.gamma)));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Param(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if !(self.kappa1 > 0.0 && self.kappa1 <= self.kappa2) {
            return Err(Error::Param(format!(
                "need 0 < kappa1 <= kappa2, got {} and {}",
                self.kappa1, self.kappa2
            )));
        }
        if self.kappa_choice == KappaChoice::ConstantOne && self.lambda != 0.0 {
            return Err(Error::Config(
                "kappa_choice = constant_one requires lambda = 0".into(),
            ));
        }
        if !(self.delta >= 0.0 && self.epsilon >= 0.0) {
            return Err(Error::Param("delta and epsilon must be >= 0".into()));
        }
        if !(self.tau > 0.0) {
            return Err(Error::Param(format!("tau = {} must be > 0", self.tau)));
        }
        Ok(())
    }

    /// Whether the spatial kernel is constant, so coefficients do not depend on x.
    pub fn kappa_is_constant(&self, regularized: bool) -> bool {
        self.kappa_choice == KappaChoice::ConstantOne && (!regularized || self.delta == 0.0)
    }
}

fn norm_sq(w: &Vec3, dv: usize) -> f64 {
    w[..dv].iter().map(|c| c * c).sum()
}

pub fn bracket(r2: f64) -> f64 {
    (1.0 + r2).sqrt()
}

/// `Pi(w) = I - w w^T / |w|^2`; the zero matrix when `|w| < 1e-30`.
pub fn projection(w: &Vec3, dv: usize) -> Mat3 {
    let r2 = norm_sq(w, dv);
    let mut p = [[0.0; 3]; 3];
    if r2.sqrt() < 1e-30 {
        return p;
    }
    for i in 0..dv {
        for j in 0..dv {
            p[i][j] = if i == j { 1.0 } else { 0.0 } - w[i] * w[j] / r2;
        }
    }
    p
}

/// `N(w) = |w|^(gamma+2) Pi(w)`; zero matrix at `w = 0`.
pub fn landau_kernel(w: &Vec3, dv: usize, gamma: f64) -> Mat3 {
    let r2 = norm_sq(w, dv);
    let mut n = [[0.0; 3]; 3];
    if r2 == 0.0 {
        return n;
    }
    let s = r2.powf(0.5 * gamma);
    for i in 0..dv {
        for j in 0..dv {
            n[i][j] = s * (if i == j { r2 } else { 0.0 } - w[i] * w[j]);
        }
    }
    n
}

/// `div N(w) = -(dv - 1) |w|^gamma w`; zero at `w = 0`.
pub fn div_landau_kernel(w: &Vec3, dv: usize, gamma: f64) -> Vec3 {
    let r2 = norm_sq(w, dv);
    let mut out = [0.0; 3];
    if r2 == 0.0 {
        return out;
    }
    let c = -((dv - 1) as f64) * r2.powf(0.5 * gamma);
    for i in 0..dv {
        out[i] = c * w[i];
    }
    out
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::Param(format!("regularization delta = {delta} must be > 0")))
    }
}

/// `N_delta(w) = e^{-delta|w|^2} (delta + |w|^2)^{1+gamma/2} (I - w w^T / (delta + |w|^2))`.
pub fn reg_landau_kernel(w: &Vec3, dv: usize, gamma: f64, delta: f64) -> Result<Mat3> {
    check_delta(delta)?;
    let r2 = norm_sq(w, dv);
    let s = delta + r2;
    let g = (-delta * r2).exp();
    let a = g * s.powf(1.0 + 0.5 * gamma);
    let b = g * s.powf(0.5 * gamma);
    let mut n = [[0.0; 3]; 3];
    for i in 0..dv {
        for j in 0..dv {
            n[i][j] = if i == j { a } else { 0.0 } - b * w[i] * w[j];
        }
    }
    Ok(n)
}

/// Divergence (row-wise) of `N_delta`:
/// `e^{-delta|w|^2} w [ (1 - dv - 2 delta^2) s^{gamma/2} + gamma delta s^{gamma/2 - 1} ]`, `s = delta + |w|^2`.
pub fn div_reg_landau_kernel(w: &Vec3, dv: usize, gamma: f64, delta: f64) -> Result<Vec3> {
    check_delta(delta)?;
    let c = reg_div_scalar(norm_sq(w, dv), dv, gamma, delta);
    let mut out = [0.0; 3];
    for i in 0..dv {
        out[i] = c * w[i];
    }
    Ok(out)
}

fn reg_div_scalar(r2: f64, dv: usize, gamma: f64, delta: f64) -> f64 {
    let s = delta + r2;
    let g = (-delta * r2).exp();
    g * ((1.0 - dv as f64 - 2.0 * delta * delta) * s.powf(0.5 * gamma)
        + gamma * delta * s.powf(0.5 * gamma - 1.0))
}

/// `div div N_delta(w)`.
pub fn lap_reg_landau_kernel(w: &Vec3, dv: usize, gamma: f64, delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let r2 = norm_sq(w, dv);
    let s = delta + r2;
    let g = (-delta * r2).exp();
    let c1 = 1.0 - dv as f64 - 2.0 * delta * delta;
    let c = c1 * s.powf(0.5 * gamma) + gamma * delta * s.powf(0.5 * gamma - 1.0);
    let dc = c1 * 0.5 * gamma * s.powf(0.5 * gamma - 1.0)
        + gamma * delta * (0.5 * gamma - 1.0) * s.powf(0.5 * gamma - 2.0);
    Ok(g * (dv as f64 * c - 2.0 * delta * r2 * c + 2.0 * r2 * dc))
}

/// Principal square root `M_delta` of the implemented `N_delta`, from its
/// eigen-decomposition: eigenvalue `g s^{gamma/2} delta` along `w`,
/// `g s^{1+gamma/2}` on the orthogonal complement.
pub fn sqrt_reg_landau_kernel(w: &Vec3, dv: usize, gamma: f64, delta: f64) -> Result<Mat3> {
    check_delta(delta)?;
    let r2 = norm_sq(w, dv);
    let s = delta + r2;
    let g = (-delta * r2).exp();
    let perp = (g * s.powf(1.0 + 0.5 * gamma)).sqrt();
    let along = (g * s.powf(0.5 * gamma) * delta).sqrt();
    let mut m = [[0.0; 3]; 3];
    for i in 0..dv {
        m[i][i] = perp;
    }
    if r2 > 0.0 {
        for i in 0..dv {
            for j in 0..dv {
                m[i][j] += (along - perp) * w[i] * w[j] / r2;
            }
        }
    }
    Ok(m)
}

/// Spatial kernel `kappa(x)`, or `kappa_delta = kappa e^{-delta|x|^2}` when `regularized`.
pub fn spatial_kernel(x: &Vec3, dx: usize, params: &ModelParams, regularized: bool) -> Result<f64> {
    let r2: f64 = x[..dx].iter().map(|c| c * c).sum();
    let base = match params.kappa_choice {
        KappaChoice::ConstantOne => {
            if params.lambda != 0.0 {
                return Err(Error::Config(
                    "kappa_choice = constant_one requires lambda = 0".into(),
                ));
            }
            params.kappa1
        }
        KappaChoice::InverseBracket => params.kappa1 * bracket(r2).powf(-params.lambda),
    };
    Ok(if regularized {
        base * (-params.delta * r2).exp()
    } else {
        base
    })
}

fn require_3d(dv: usize) -> Result<()> {
    if dv == 3 {
        Ok(())
    } else {
        Err(Error::Dimension(format!(
            "rotation fields need dv = 3, got {dv}"
        )))
    }
}

pub fn cross(a: &Vec3, b: &Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn unit(k: usize) -> Vec3 {
    let mut e = [0.0; 3];
    e[k] = 1.0;
    e
}

/// `b_k(v - w) = e_k x (v - w)`; for `k = 0` this is `(0, w3 - v3, v2 - w2)`.
pub fn rotation_field(k: usize, v: &Vec3, w: &Vec3, dv: usize) -> Result<Vec3> {
    require_3d(dv)?;
    if k > 2 {
        return Err(Error::Param(format!("rotation index {k} out of range 0..3")));
    }
    let r = [v[0] - w[0], v[1] - w[1], v[2] - w[2]];
    Ok(cross(&unit(k), &r))
}

/// Matrix of `r -> e_k x r`.
fn cross_matrix(k: usize) -> Mat3 {
    let mut m = [[0.0; 3]; 3];
    for j in 0..3 {
        let c = cross(&unit(k), &unit(j));
        for i in 0..3 {
            m[i][j] = c[i];
        }
    }
    m
}

pub type Z12 = [f64; 12];
pub type Jac12 = [[f64; 12]; 12];

/// Lifted fields on `z = (x, v, y, w)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LiftedField {
    /// `b~_k = (0, b_k, 0, -b_k)`
    BTilde(usize),
    /// `sqrt(alpha) b~_k` with `alpha = |v - w|^gamma`
    SqrtAlphaBTilde(usize, f64),
    /// `e~_i = (e_i, 0, e_i, 0)`
    ETilde(usize),
    /// `e^_i = (e_i, 0, -e_i, 0)`
    EHat(usize),
    /// `xi~_i = (0, e_i, 0, e_i)`
    XiTilde(usize),
    /// `xi^_i = (0, e_i, 0, -e_i)`
    XiHat(usize),
}

fn rel(z: &Z12) -> Vec3 {
    [z[3] - z[9], z[4] - z[10], z[5] - z[11]]
}

impl LiftedField {
    fn index(&self) -> usize {
        match *self {
            LiftedField::BTilde(i)
            | LiftedField::SqrtAlphaBTilde(i, _)
            | LiftedField::ETilde(i)
            | LiftedField::EHat(i)
            | LiftedField::XiTilde(i)
            | LiftedField::XiHat(i) => i,
        }
    }

    pub fn value(&self, z: &Z12) -> Result<Z12> {
        let i = self.index();
        if i > 2 {
            return Err(Error::Param(format!("lifted field index {i} out of range 0..3")));
        }
        let mut out = [0.0; 12];
        match *self {
            LiftedField::BTilde(k) | LiftedField::SqrtAlphaBTilde(k, _) => {
                let b = cross(&unit(k), &rel(z));
                let s = match *self {
                    LiftedField::SqrtAlphaBTilde(_, gamma) => sqrt_alpha(&rel(z), gamma),
                    _ => 1.0,
                };
                for c in 0..3 {
                    out[3 + c] = s * b[c];
                    out[9 + c] = -s * b[c];
                }
            }
            LiftedField::ETilde(i) => {
                out[i] = 1.0;
                out[6 + i] = 1.0;
            }
            LiftedField::EHat(i) => {
                out[i] = 1.0;
                out[6 + i] = -1.0;
            }
            LiftedField::XiTilde(i) => {
                out[3 + i] = 1.0;
                out[9 + i] = 1.0;
            }
            LiftedField::XiHat(i) => {
                out[3 + i] = 1.0;
                out[9 + i] = -1.0;
            }
        }
        Ok(out)
    }

    /// Exact Jacobian `J[r][c] = d field_r / d z_c`.
    pub fn jacobian(&self, z: &Z12) -> Result<Jac12> {
        let mut j = [[0.0; 12]; 12];
        match *self {
            LiftedField::BTilde(k) | LiftedField::SqrtAlphaBTilde(k, _) => {
                let c = cross_matrix(k);
                let r = rel(z);
                let (s, grad) = match *self {
                    LiftedField::SqrtAlphaBTilde(_, gamma) => {
                        (sqrt_alpha(&r, gamma), grad_sqrt_alpha(&r, gamma))
                    }
                    _ => (1.0, [0.0; 3]),
                };
                let b = cross(&unit(k), &r);
                for a in 0..3 {
                    for e in 0..3 {
                        j[3 + a][3 + e] = s * c[a][e] + b[a] * grad[e];
                        j[3 + a][9 + e] = -s * c[a][e] - b[a] * grad[e];
                        j[9 + a][3 + e] = -s * c[a][e] - b[a] * grad[e];
                        j[9 + a][9 + e] = s * c[a][e] + b[a] * grad[e];
                    }
                }
            }
            _ => {
                self.value(z)?;
            }
        }
        Ok(j)
    }
}

/// `sqrt(alpha) = |r|^{gamma/2}`.
pub fn sqrt_alpha(r: &Vec3, gamma: f64) -> f64 {
    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    r2.powf(0.25 * gamma)
}

/// Gradient of `|r|^{gamma/2}` with respect to `r` (equal to the `v`-gradient).
pub fn grad_sqrt_alpha(r: &Vec3, gamma: f64) -> Vec3 {
    let r2 = r[0] * r[0] + r[1] * r[1] + r[2] * r[2];
    let c = 0.5 * gamma * r2.powf(0.25 * gamma - 1.0);
    [c * r[0], c * r[1], c * r[2]]
}

/// `[a, b]_i = sum_j a_j d_j b_i - b_j d_j a_i`, exact from the analytic Jacobians.
pub fn commutator(a: &LiftedField, b: &LiftedField, z: &Z12) -> Result<Z12> {
    let (va, vb) = (a.value(z)?, b.value(z)?);
    let (ja, jb) = (a.jacobian(z)?, b.jacobian(z)?);
    let mut out = [0.0; 12];
    for i in 0..12 {
        let mut s = 0.0;
        for j in 0..12 {
            s += va[j] * jb[i][j] - vb[j] * ja[i][j];
        }
        out[i] = s;
    }
    Ok(out)
}

/// Eigenvalues of a symmetric `dv x dv` matrix in ascending order (unused slots zero).
pub fn sym_eigenvalues(m: &Mat3, dv: usize) -> Vec3 {
    if dv == 2 {
        let (a, b, d) = (m[0][0], m[0][1], m[1][1]);
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        return [mean - rad, mean + rad, 0.0];
    }
    let p1 = m[0][1] * m[0][1] + m[0][2] * m[0][2] + m[1][2] * m[1][2];
    let q = (m[0][0] + m[1][1] + m[2][2]) / 3.0;
    if p1 == 0.0 {
        let mut e = [m[0][0], m[1][1], m[2][2]];
        e.sort_by(|a, b| a.total_cmp(b));
        return e;
    }
    let p2 = (m[0][0] - q).powi(2) + (m[1][1] - q).powi(2) + (m[2][2] - q).powi(2) + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    let mut bm = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            bm[i][j] = (m[i][j] - if i == j { q } else { 0.0 }) / p;
        }
    }
    let det = bm[0][0] * (bm[1][1] * bm[2][2] - bm[1][2] * bm[2][1])
        - bm[0][1] * (bm[1][0] * bm[2][2] - bm[1][2] * bm[2][0])
        + bm[0][2] * (bm[1][0] * bm[2][1] - bm[1][1] * bm[2][0]);
    let r = (0.5 * det).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let e_max = q + 2.0 * p * phi.cos();
    let e_min = q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos();
    [e_min, 3.0 * q - e_min - e_max, e_max]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_examples() {
        let p = projection(&[1.0, 0.0, 0.0], 3);
        assert_eq!(p, [[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        let s = 0.5f64.sqrt();
        let p = projection(&[s, s, 0.0], 3);
        assert!((p[0][0] + p[1][1] + p[2][2] - 2.0).abs() < 1e-15);
        assert_eq!(projection(&[0.0; 3], 3), [[0.0; 3]; 3]);
    }

    #[test]
    fn landau_kernel_example() {
        let n = landau_kernel(&[2.0, 0.0, 0.0], 3, 0.0);
        assert_eq!(n, [[0.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 4.0]]);
        assert_eq!(div_landau_kernel(&[1.0, 0.0, 0.0], 3, 0.0), [-2.0, 0.0, 0.0]);
        assert_eq!(div_landau_kernel(&[0.0; 3], 3, -1.0), [0.0; 3]);
    }

    #[test]
    fn reg_kernel_at_origin_and_errors() {
        let (g, d) = (-1.5, 0.3);
        let n = reg_landau_kernel(&[0.0; 3], 3, g, d).unwrap();
        let e = d.powf(1.0 + g / 2.0);
        for i in 0..3 {
            assert!((n[i][i] - e).abs() < 1e-15);
        }
        let m = sqrt_reg_landau_kernel(&[0.0; 3], 3, g, d).unwrap();
        assert!((m[1][1] - d.powf((g + 2.0) / 4.0)).abs() < 1e-15);
        assert!(reg_landau_kernel(&[1.0, 0.0, 0.0], 3, g, 0.0).is_err());
    }

    #[test]
    fn b1_sign_follows_display() {
        let b = rotation_field(0, &[0.0, 0.0, 1.0], &[0.0; 3], 3).unwrap();
        assert_eq!(b, [0.0, -1.0, 0.0]);
        assert!(rotation_field(0, &[0.0; 3], &[0.0; 3], 2).is_err());
    }

    #[test]
    fn lifted_examples() {
        let z = [0.3; 12];
        let e = LiftedField::ETilde(0).value(&z).unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[6], 1.0);
        assert_eq!(e.iter().sum::<f64>(), 2.0);
        let xh = LiftedField::XiHat(1).value(&z).unwrap();
        assert_eq!((xh[4], xh[10]), (1.0, -1.0));
        let mut z = [0.0; 12];
        z[5] = 1.0;
        let b = LiftedField::BTilde(0).value(&z).unwrap();
        assert_eq!(&b[3..6], &[0.0, -1.0, 0.0]);
        assert_eq!(&b[9..12], &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn constant_kappa_rejects_lambda() {
        let p = ModelParams {
            lambda: 1.0,
            ..Default::default()
        };
        assert!(spatial_kernel(&[0.0; 3], 1, &p, false).is_err());
        let p = ModelParams {
            lambda: 2.0,
            kappa_choice: KappaChoice::InverseBracket,
            kappa1: 0.7,
            ..Default::default()
        };
        assert_eq!(spatial_kernel(&[0.0; 3], 2, &p, false).unwrap(), 0.7);
    }

    #[test]
    fn eigenvalues_of_diagonal_and_rotated() {
        let e = sym_eigenvalues(&[[3.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 2.0]], 3);
        assert_eq!(e, [1.0, 2.0, 3.0]);
        let m = [[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0, 0.0, 5.0]];
        let e = sym_eigenvalues(&m, 3);
        assert!((e[0] - 1.0).abs() < 1e-12 && (e[1] - 3.0).abs() < 1e-12 && (e[2] - 5.0).abs() < 1e-12);
        let e = sym_eigenvalues(&[[2.0, 1.0, 0.0], [1.0, 2.0, 0.0], [0.0; 3]], 2);
        assert!((e[0] - 1.0).abs() < 1e-14 && (e[1] - 3.0).abs() < 1e-14);
    }
}
