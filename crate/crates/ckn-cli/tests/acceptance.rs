//! Acceptance battery: one test per numbered criterion, full settings.
//!
//! Criteria 1 through 10 call the library runners directly; criterion 11
//! drives the installed binary twice and compares the report bytes.

use std::process::Command;
use std::time::Instant;

use ckn::verify::run_criterion;

fn check(id: usize) {
    let r = run_criterion(id, false);
    println!(
        "criterion {:2} {} ({:.1}s): {}",
        r.id,
        if r.passed { "pass" } else { "FAIL" },
        r.seconds,
        r.details
    );
    assert!(r.passed, "criterion {id} failed: {}", r.details);
}

#[test]
fn criterion_01_best_constant_closed_forms() {
    check(1);
}

#[test]
fn criterion_02_profile_identities_and_isometry() {
    check(2);
}

#[test]
fn criterion_03_spectra_match_the_bound_state_formula() {
    check(3);
}

#[test]
fn criterion_04_symmetry_breaking_threshold() {
    check(4);
}

#[test]
fn criterion_05_interaction_decay() {
    check(5);
}

#[test]
fn criterion_06_corrector_trichotomy() {
    check(6);
}

#[test]
fn criterion_07_counterexample_energy_and_residual() {
    check(7);
}

#[test]
fn criterion_08_one_bubble_distance_growth() {
    check(8);
}

#[test]
fn criterion_09_multi_bubble_trichotomy() {
    check(9);
}

#[test]
fn criterion_10_ensemble_deficit_law() {
    check(10);
}

#[test]
fn criterion_11_quick_battery_determinism() {
    let start = Instant::now();
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_ckn"))
            .args(["verify-all", "--quick"])
            .output()
            .expect("binary runs")
    };
    let first = run();
    let second = run();
    assert!(first.status.success(), "first run failed: {:?}", first.status);
    assert!(second.status.success(), "second run failed: {:?}", second.status);
    assert_eq!(first.stdout, second.stdout, "report tables differ between runs");
    assert!(!first.stdout.is_empty());
    let elapsed = start.elapsed().as_secs_f64();
    println!("criterion 11 pass ({elapsed:.1}s): two quick batteries, identical bytes");
    assert!(elapsed < 180.0, "two quick batteries took {elapsed:.0}s");
}
