//! One test per acceptance criterion. Each prints its checks and verdict.

use dquon::acceptance::run_criterion;

fn assert_criterion(id: usize) {
    let report = run_criterion(id);
    println!("{}", report.render());
    let failed: Vec<_> = report.failed_checks().map(|c| c.label.clone()).collect();
    assert!(report.pass(), "criterion {id} failed: {failed:?} {:?}", report.error);
}

#[test]
fn criterion_01_qmutator_identity() {
    assert_criterion(1);
}

#[test]
fn criterion_02_biorthogonality() {
    assert_criterion(2);
}

#[test]
fn criterion_03_ladder_relations() {
    assert_criterion(3);
}

#[test]
fn criterion_04_number_operator_spectrum() {
    assert_criterion(4);
}

#[test]
fn criterion_05_metric_operator() {
    assert_criterion(5);
}

#[test]
fn criterion_06_bicoherent_eigenvalue_and_pairing() {
    assert_criterion(6);
}

#[test]
fn criterion_07_radii_of_convergence() {
    assert_criterion(7);
}

#[test]
fn criterion_08_resolution_of_identity() {
    assert_criterion(8);
}

#[test]
fn criterion_09_uncertainty_product() {
    assert_criterion(9);
}

#[test]
fn criterion_10_position_coefficients_and_norms() {
    assert_criterion(10);
}

#[test]
fn criterion_11_closed_form_bicoherent_states() {
    assert_criterion(11);
}

#[test]
fn criterion_12_bosonic_and_fermionic_limits() {
    assert_criterion(12);
}
