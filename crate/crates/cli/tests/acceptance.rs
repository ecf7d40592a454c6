//! Acceptance suite: one test per criterion, each printing its verdict
//! lines. Criteria run with their pinned configurations and tolerances.

use annilab_cli::acceptance::{run_criterion, Criterion};

fn check(criterion: Criterion) {
    let result = run_criterion(criterion, None).expect("criterion runs");
    print!("{}", result.render());
    for note in &result.notes {
        println!("    note: {note}");
    }
    assert!(
        result.pass,
        "criterion {} ({}) failed: {:?}",
        result.index,
        result.name,
        result
            .checks
            .iter()
            .filter(|c| !c.pass)
            .map(|c| format!("{}: measured {} target {} ({})", c.name, c.measured, c.target, c.tolerance))
            .collect::<Vec<_>>()
    );
}

#[test]
fn criterion_01_density_amplitude_1d() {
    check(Criterion::DensityAmplitude1d);
}

#[test]
fn criterion_02_density_exponent_2d() {
    check(Criterion::DensityExponent2d);
}

#[test]
fn criterion_03_single_type_decay() {
    check(Criterion::SingleTypeDecay);
}

#[test]
fn criterion_04_exact_oracle() {
    check(Criterion::ExactOracle);
}

#[test]
fn criterion_05_martingale_identity() {
    check(Criterion::MartingaleIdentity);
}

#[test]
fn criterion_06_kernel_suite() {
    check(Criterion::KernelSuite);
}

#[test]
fn criterion_07_gaussian_suite() {
    check(Criterion::GaussianSuite);
}

#[test]
fn criterion_08_macro_block_law() {
    check(Criterion::MacroBlockLaw);
}

#[test]
fn criterion_09_sample_path_agreement() {
    check(Criterion::SamplePathAgreement);
}

#[test]
fn criterion_10_segregation_trend() {
    check(Criterion::SegregationTrend);
}

#[test]
fn criterion_11_micro_mixture() {
    check(Criterion::MicroMixture);
}

#[test]
fn criterion_12_determinism_audit() {
    check(Criterion::DeterminismAudit);
}
