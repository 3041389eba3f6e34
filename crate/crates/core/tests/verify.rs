use std::time::Duration;

use iconify::autodiff::OpKind;
use iconify::verify::{run_verify, VerifyOptions, ORACLE_COMBOS};

const _: () = assert!(ORACLE_COMBOS >= 20);

#[test]
fn fast_suite_passes_on_pristine_build() {
    let report = run_verify(&VerifyOptions {
        fast: true,
        fault: None,
        seed: 0,
    })
    .unwrap();
    assert!(report.all_passed(), "{}", report.table());
    assert!(report.rows.iter().all(|r| r.value < 1e-4));
    assert!(report.elapsed < Duration::from_secs(60), "{:?}", report.elapsed);
}

#[test]
fn broken_activation_gradient_is_reported_by_name() {
    let report = run_verify(&VerifyOptions {
        fast: true,
        fault: Some(OpKind::Activation),
        seed: 0,
    })
    .unwrap();
    let failures = report.failures();
    assert!(!failures.is_empty());
    assert!(failures.iter().any(|r| r.name.contains("activation")));
    for r in report
        .rows
        .iter()
        .filter(|r| r.name.starts_with("grad ") && !r.name.contains("objective"))
    {
        assert_eq!(r.passed(), !r.name.contains("activation"), "{}", r.name);
    }
}
