use flandau_core::fisher_lifted::{fisher_identity_report, fisher_x_derivative_identity, fisher_x_rhs_collapsed};
use flandau_core::kernels::ModelParams;
use flandau_core::verify::{gs24_checks, identity_field, lifted_operator_checks};
use flandau_core::{DistributionField, PhaseGrid};

fn tiny() -> PhaseGrid {
    PhaseGrid::new(3, 3, 4, 8, std::f64::consts::PI, 4.0).unwrap()
}

#[test]
fn lifted_operator_forms_agree_and_vanish_on_maxwellian() {
    for c in lifted_operator_checks(&ModelParams::default()).unwrap() {
        assert!(c.pass, "{c}");
    }
}

#[test]
fn commutator_term_is_zero_at_gamma_zero() {
    let params = ModelParams { gamma: 0.0, ..ModelParams::default() };
    let rep = fisher_identity_report(&identity_field(tiny()), &params).unwrap();
    assert_eq!(rep.v_identity.rhs_commutator, 0.0);
}

#[test]
fn x_homogeneous_data_has_no_x_fisher() {
    let f = DistributionField::from_fn(tiny(), |_, v| (-(v[0] * v[0] + v[1] * v[1] + 0.5 * v[2] * v[2]) / 2.0).exp());
    let id = fisher_x_derivative_identity(&f, &ModelParams::default()).unwrap();
    assert!(id.lhs.abs() < 1e-12 && id.rhs.abs() < 1e-12, "{id:?}");
}

#[test]
fn x_identity_pair_sum_matches_collapsed_form() {
    let f = identity_field(tiny());
    let p = ModelParams::default();
    let id = fisher_x_derivative_identity(&f, &p).unwrap();
    let collapsed = fisher_x_rhs_collapsed(&f, &p).unwrap();
    // Both are quadratures of the same integral; they differ by discretization error on this grid.
    assert!((id.rhs - collapsed).abs() <= 5e-3 * collapsed.abs(), "{} vs {collapsed}", id.rhs);
    assert!(id.rhs <= 0.0);
}

#[test]
fn commutator_term_inequality_holds() {
    let p = ModelParams { gamma: -2.0, ..ModelParams::default() };
    for c in gs24_checks(&p).unwrap() {
        assert!(c.pass, "{c}");
    }
}
