use flandau_core::diagnostics::RecordOptions;
use flandau_core::integrator::{run, ExplicitStepper, FaithfulStepper, SchemeConfig, SchemeMode};
use flandau_core::kernels::ModelParams;
use flandau_core::{DistributionField, Error, PhaseGrid};

fn bump_field(grid: PhaseGrid) -> DistributionField {
    DistributionField::from_fn(grid, |x, v| {
        let m = (-(v[0] * v[0] + v[1] * v[1]) / 2.0).exp();
        let s = (-((v[0] - 0.8).powi(2) + v[1] * v[1]) / 1.2).exp();
        0.05 * (m + 0.4 * s) * (1.0 + 0.3 * (std::f64::consts::PI * x[0] / 2.0).cos())
    })
}

fn quiet() -> RecordOptions {
    RecordOptions { ellipticity_samples: 0, generic: false, sobolev: false }
}

fn tiny_scheme() -> SchemeConfig {
    SchemeConfig { dt: 0.004, t_end: 0.08, snapshot_every: 10, ..SchemeConfig::default() }
}

#[test]
fn explicit_run_conserves_mass_and_decreases_entropy() {
    let grid = PhaseGrid::new(1, 2, 8, 12, 2.0, 5.0).unwrap();
    let traj = run(&tiny_scheme(), &ModelParams::default(), &bump_field(grid), quiet()).unwrap();
    let m0 = traj.steps[0].mass;
    for s in &traj.steps {
        assert!((s.mass - m0).abs() <= 1e-12 * m0, "mass {} vs {m0}", s.mass);
    }
    for w in traj.steps.windows(2) {
        let (a, b) = (w[0].entropy_flog, w[1].entropy_flog);
        assert!(b <= a + 1e-8 * a.abs(), "entropy rose from {a} to {b} at t = {}", w[1].time);
    }
    assert_eq!(traj.frames.len(), 3);
    assert!((traj.frames.last().unwrap().time - 0.08).abs() < 1e-12);
}

#[test]
fn zero_end_time_records_one_frame() {
    let grid = PhaseGrid::new(1, 2, 4, 8, 2.0, 4.0).unwrap();
    let scheme = SchemeConfig { t_end: 0.0, ..tiny_scheme() };
    let traj = run(&scheme, &ModelParams::default(), &bump_field(grid), quiet()).unwrap();
    assert_eq!(traj.frames.len(), 1);
    assert_eq!(traj.frames[0].time, 0.0);
}

#[test]
fn oversized_step_is_a_cfl_error() {
    let grid = PhaseGrid::new(1, 2, 4, 12, 2.0, 5.0).unwrap();
    let stepper = ExplicitStepper::new(grid, ModelParams::default(), 1.0, 0.25, false).unwrap();
    match stepper.step(&bump_field(grid)) {
        Err(Error::Cfl { dt, limit, .. }) => assert!(dt > limit),
        other => panic!("expected a CFL error, got {other:?}"),
    }
}

#[test]
fn midpoint_and_euler_collision_agree_to_first_order() {
    let grid = PhaseGrid::new(1, 2, 4, 12, 2.0, 5.0).unwrap();
    let f = bump_field(grid);
    let gap = |dt: f64| {
        let p = ModelParams::default();
        let a = ExplicitStepper::new(grid, p, dt, 1.0, false).unwrap().step(&f).unwrap();
        let b = ExplicitStepper::new(grid, p, dt, 1.0, true).unwrap().step(&f).unwrap();
        a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>()
    };
    // Euler and midpoint differ by O(dt^2) per step.
    let ratio = gap(0.004) / gap(0.002);
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn runs_are_deterministic() {
    let grid = PhaseGrid::new(1, 2, 4, 8, 2.0, 4.0).unwrap();
    let a = run(&tiny_scheme(), &ModelParams::default(), &bump_field(grid), quiet()).unwrap();
    let b = run(&tiny_scheme(), &ModelParams::default(), &bump_field(grid), quiet()).unwrap();
    assert_eq!(a.final_field().values, b.final_field().values);
}

#[test]
fn linear_faithful_step_damps_a_velocity_mode() {
    let grid = PhaseGrid::new(1, 2, 4, 8, 2.0, 4.0).unwrap();
    let params = ModelParams { delta: 0.1, epsilon: 0.05, tau: 0.01, ..ModelParams::default() };
    let scheme = SchemeConfig { mode: SchemeMode::FaithfulImplicit, ..SchemeConfig::default() };
    let mut stepper = FaithfulStepper::new(grid, params, scheme).unwrap();
    stepper.sigma = 0.0;
    let k = 2.0 * std::f64::consts::PI / (2.0 * grid.lv);
    let f = DistributionField::from_fn(grid, |_, v| (k * v[1]).cos());
    let out = stepper.step(&f).unwrap();
    let factor = 1.0 / (1.0 + params.tau * params.epsilon * k * k);
    for (a, b) in out.f_next.values.iter().zip(&f.values) {
        assert!((a - factor * b).abs() <= 1e-10, "{a} vs {}", factor * b);
    }
}

#[test]
fn faithful_run_conserves_mass() {
    let grid = PhaseGrid::new(1, 2, 4, 12, 2.0, 5.0).unwrap();
    let params = ModelParams { delta: 0.1, epsilon: 0.05, tau: 0.005, ..ModelParams::default() };
    let scheme = SchemeConfig { mode: SchemeMode::FaithfulImplicit, t_end: 0.02, ..SchemeConfig::default() };
    let traj = run(&scheme, &params, &bump_field(grid), quiet()).unwrap();
    let m0 = traj.steps[0].mass;
    for s in &traj.steps[1..] {
        assert!((s.mass - m0).abs() <= 1e-9 * m0);
        assert!(s.picard_iters >= 1);
    }
}
