//! Benchmark fixtures for the collision operator pipeline.

use flandau_core::kernels::{KappaChoice, ModelParams};
use flandau_core::{DistributionField, PhaseGrid};

/// Phase grids of increasing size: `(label, grid)`.
pub fn grids() -> Vec<(&'static str, PhaseGrid)> {
    vec![
        ("1x2v_16x24", PhaseGrid::new(1, 2, 16, 24, 2.0, 6.0).unwrap()),
        ("2x2v_16x32", PhaseGrid::new(2, 2, 16, 32, 4.0, 9.0).unwrap()),
        ("3x3v_4x12", PhaseGrid::new(3, 3, 4, 12, std::f64::consts::PI, 5.0).unwrap()),
    ]
}

/// Smooth positive datum: two velocity bumps modulated in x.
pub fn datum(grid: PhaseGrid) -> DistributionField {
    let kx = std::f64::consts::PI / grid.lx;
    DistributionField::from_fn(grid, |x, v| {
        let a = (-((v[0] + 0.3).powi(2) + v[1] * v[1] + v[2] * v[2]) / 2.0).exp();
        let b = (-((v[0] - 0.3).powi(2) + (v[1] - 0.2).powi(2) + v[2] * v[2]) / 2.0).exp();
        (0.6 * a + 0.4 * b) * (1.0 + 0.5 * (kx * x[0]).cos())
    })
}

pub fn params() -> ModelParams {
    ModelParams { gamma: -1.0, lambda: 1.0, kappa_choice: KappaChoice::InverseBracket, ..ModelParams::default() }
}
