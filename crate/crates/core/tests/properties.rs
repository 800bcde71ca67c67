use flandau_core::collision::{apply_q, Dissipation};
use flandau_core::config::{GridSpec, RunConfig};
use flandau_core::generic::{metric_apply_with, pairing, poisson_apply, CotangentField, GenericChecks};
use flandau_core::grid::{shift_transport, SpectralOps};
use flandau_core::kernels::{
    commutator, div_landau_kernel, landau_kernel, LiftedField, ModelParams, Vec3, Z12,
};
use flandau_core::{DistributionField, PhaseGrid};
use proptest::prelude::*;

fn small_grid() -> PhaseGrid {
    PhaseGrid::new(1, 2, 4, 6, 1.5, 3.0).unwrap()
}

fn positive_field(grid: PhaseGrid, coeffs: &[f64]) -> DistributionField {
    DistributionField::from_fn(grid, |x, v| {
        let bump = (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp();
        let wiggle = 1.0
            + 0.3 * coeffs[0] * (std::f64::consts::PI * x[0] / 1.5).cos()
            + 0.2 * coeffs[1] * (0.7 * v[0]).sin()
            + 0.2 * coeffs[2] * (0.5 * v[1] + coeffs[3]).cos();
        bump * wiggle
    })
}

fn noise(grid: PhaseGrid, seed: &[f64]) -> Vec<f64> {
    (0..grid.len())
        .map(|k| (seed[k % seed.len()] * (k as f64 + 1.0)).sin())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn spectral_derivative_is_skew(seed in prop::collection::vec(0.1f64..3.0, 7), axis in 0usize..3) {
        let grid = small_grid();
        let ops = SpectralOps::new(grid);
        let a = noise(grid, &seed);
        let b = noise(grid, &seed[1..]);
        let (da, db) = if axis == 0 { (ops.dx(&a, 0), ops.dx(&b, 0)) } else { (ops.dv(&a, axis - 1), ops.dv(&b, axis - 1)) };
        let lhs: f64 = a.iter().zip(&db).map(|(p, q)| p * q).sum();
        let rhs: f64 = da.iter().zip(&b).map(|(p, q)| p * q).sum();
        let scale: f64 = a.iter().map(|p| p.abs()).sum::<f64>() * db.iter().map(|p| p.abs()).fold(0.0, f64::max);
        prop_assert!((lhs + rhs).abs() <= 1e-12 * scale.max(1.0));
    }

    #[test]
    fn collision_conserves_mass_and_dissipates(c in prop::collection::vec(-1.0f64..1.0, 4), gamma in -2.0f64..0.0) {
        let grid = small_grid();
        let f = positive_field(grid, &c);
        let params = ModelParams { gamma, ..ModelParams::default() };
        let out = apply_q(&f, &params, false).unwrap();
        let mass: f64 = out.q.iter().sum::<f64>() * grid.cell_volume();
        let scale: f64 = out.q.iter().map(|q| q.abs()).sum::<f64>() * grid.cell_volume();
        prop_assert!(mass.abs() <= 1e-12 * scale.max(1e-300));
        prop_assert!(out.dissipation >= 0.0);
    }

    #[test]
    fn transport_keeps_slice_mass(c in prop::collection::vec(-1.0f64..1.0, 4), dt in -2.0f64..2.0) {
        let grid = small_grid();
        let f = positive_field(grid, &c);
        let g = shift_transport(&f, dt);
        let (a, b) = (f.v_marginal(), g.v_marginal());
        for (p, q) in a.iter().zip(&b) {
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1e-300));
        }
    }

    #[test]
    fn landau_kernel_annihilates_offset(w in prop::array::uniform3(-3.0f64..3.0), gamma in -3.0f64..1.0) {
        prop_assume!(w.iter().map(|c| c * c).sum::<f64>() > 1e-4);
        let n = landau_kernel(&w, 3, gamma);
        let m = landau_kernel(&[-w[0], -w[1], -w[2]], 3, gamma);
        for i in 0..3 {
            let nw: f64 = (0..3).map(|j| n[i][j] * w[j]).sum();
            prop_assert!(nw.abs() <= 1e-12 * n[i].iter().map(|x| x.abs()).sum::<f64>().max(1.0) * 3.0);
            for j in 0..3 {
                prop_assert_eq!(n[i][j], n[j][i]);
                prop_assert_eq!(n[i][j], m[i][j]);
            }
        }
    }

    #[test]
    fn rotation_commutators_vanish(z in prop::array::uniform12(-2.0f64..2.0), gamma in -2.0f64..0.0) {
        let z: Z12 = z;
        for i in 0..3 {
            for k in 0..3 {
                let sab = LiftedField::SqrtAlphaBTilde(k, gamma);
                for a in [LiftedField::ETilde(i), LiftedField::EHat(i), LiftedField::XiTilde(i)] {
                    let c = commutator(&a, &sab, &z).unwrap();
                    prop_assert!(c.iter().all(|x| x.abs() <= 1e-12));
                }
            }
        }
    }

    #[test]
    fn poisson_is_skew_and_metric_symmetric(s1 in prop::collection::vec(0.1f64..3.0, 5), s2 in prop::collection::vec(0.1f64..3.0, 5)) {
        let grid = small_grid();
        let f = positive_field(grid, &[0.5, -0.3, 0.2, 1.0]);
        let params = ModelParams::default();
        let checks = GenericChecks::new(grid, params).unwrap();
        let op = checks.operator();
        let coeffs = op.coefficients(&f).unwrap();
        let g = CotangentField::from_values(grid, noise(grid, &s1), &op.ops).unwrap();
        let h = CotangentField::from_values(grid, noise(grid, &s2), &op.ops).unwrap();
        let lgh = pairing(&grid, &g.values, &poisson_apply(&f, &h, &op.ops));
        let lhg = pairing(&grid, &h.values, &poisson_apply(&f, &g, &op.ops));
        prop_assert!((lgh + lhg).abs() <= 1e-10 * (lgh.abs() + lhg.abs()).max(1e-300));
        let mgh = pairing(&grid, &g.values, &metric_apply_with(&f, &h, op, &coeffs));
        let mhg = pairing(&grid, &h.values, &metric_apply_with(&f, &g, op, &coeffs));
        prop_assert!((mgh - mhg).abs() <= 1e-10 * (mgh.abs() + mhg.abs()).max(1e-300));
        let mgg = pairing(&grid, &g.values, &metric_apply_with(&f, &g, op, &coeffs));
        prop_assert!(mgg >= -1e-12 * mgh.abs().max(1e-300));
    }

    #[test]
    fn config_round_trips_through_toml(nx in 2usize..8, nv in 2usize..8, lv in 1.0f64..8.0, gamma in -2.0f64..0.0) {
        let text = format!("[grid]\ndx = 1\ndv = 2\nnx = {}\nnv = {}\nlx = 2.0\nlv = {lv}\n[model]\ngamma = {gamma}\n", 2 * nx, 2 * nv);
        let cfg = RunConfig::from_toml_str(&text).unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        prop_assert_eq!(&cfg, &back);
        prop_assert_eq!(cfg.grid, GridSpec::from(cfg.phase_grid().unwrap()));
    }
}

#[test]
fn kernel_divergence_matches_finite_differences() {
    let h = 1e-4;
    for w in [[0.7, -0.4, 1.1], [1.5, 0.2, -0.3], [-0.8, -0.9, 0.6]] {
        for gamma in [-2.0, -1.0, 0.0] {
            let div = div_landau_kernel(&w, 3, gamma);
            for i in 0..3 {
                let mut fd = 0.0;
                for j in 0..3 {
                    let mut p: Vec3 = w;
                    let mut m: Vec3 = w;
                    p[j] += h;
                    m[j] -= h;
                    fd += (landau_kernel(&p, 3, gamma)[i][j] - landau_kernel(&m, 3, gamma)[i][j]) / (2.0 * h);
                }
                assert!((fd - div[i]).abs() <= 1e-6 * div[i].abs().max(1.0), "gamma {gamma} w {w:?}: {fd} vs {}", div[i]);
            }
        }
    }
}

#[test]
fn spectral_gradient_converges_to_finite_differences() {
    // Band-limited field: the central difference error must fall by ~4 per halving of h.
    let mut errs = Vec::new();
    for n in [8usize, 16, 32] {
        let grid = PhaseGrid::new(1, 2, 4, n, 1.0, std::f64::consts::PI).unwrap();
        let f = DistributionField::from_fn(grid, |_, v| (v[0]).sin() + 0.5 * (2.0 * v[0]).cos());
        let d = SpectralOps::new(grid).dv(&f.values, 0);
        let h = 2.0 * std::f64::consts::PI / n as f64;
        let nvt = grid.nvt();
        let mut e: f64 = 0.0;
        for ix in 0..grid.nxt() {
            for iv in 0..nvt {
                let k = ix * nvt + iv;
                let up = f.values[ix * nvt + (iv + n) % nvt];
                let dn = f.values[ix * nvt + (iv + nvt - n) % nvt];
                e = e.max(((up - dn) / (2.0 * h) - d[k]).abs());
            }
        }
        errs.push(e);
    }
    for w in errs.windows(2) {
        let rate = (w[0] / w[1]).log2();
        assert!((1.8..2.3).contains(&rate), "observed order {rate} from {errs:?}");
    }
}

#[test]
fn dissipation_matches_entropy_pairing_on_resolved_data() {
    let grid = PhaseGrid::new(1, 2, 4, 32, 1.5, 5.0).unwrap();
    let f = positive_field(grid, &[0.5, 0.4, -0.3, 0.2]);
    let params = ModelParams::default();
    let out = apply_q(&f, &params, false).unwrap();
    let pair: f64 = f.values.iter().zip(&out.q).map(|(v, q)| v.ln() * q).sum::<f64>() * grid.cell_volume();
    let d = Dissipation::new(grid, params, false).unwrap().rate(&f).unwrap();
    // D uses grad f / f, the pairing uses the spectral grad of log f; they agree to discretization error.
    assert!((pair + d).abs() <= 2e-3 * d, "<log f, Q> = {pair}, D = {d}");
}
