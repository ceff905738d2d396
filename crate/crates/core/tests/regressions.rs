use capsys::corpus::{run_regressions, RegressionOptions};

#[test]
fn corpus_passes_on_defaults() {
    let report = run_regressions(&RegressionOptions::default()).unwrap();
    assert!(report.all_passed, "\n{report}");
    let examples: std::collections::BTreeSet<&str> =
        report.rows.iter().map(|r| r.example.as_str()).collect();
    assert_eq!(
        examples.into_iter().collect::<Vec<_>>(),
        [
            "bxb1_families",
            "bxb1_gamma",
            "bxb1_gamma_n",
            "bxb1_numeric",
            "polydisc_p11"
        ]
    );
}

#[test]
fn coarse_truncation_fails_only_the_numeric_action() {
    let report = run_regressions(&RegressionOptions {
        modes: 8,
        ..Default::default()
    })
    .unwrap();
    let failed: Vec<_> = report.failures().map(|r| r.example.as_str()).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|e| *e == "bxb1_numeric"), "{failed:?}");
}

#[test]
fn disabled_corner_windows_fail_piecewise_inclusion() {
    let report = run_regressions(&RegressionOptions {
        corner_window: 0,
        ..Default::default()
    })
    .unwrap();
    let failed: Vec<_> = report.failures().collect();
    assert!(!failed.is_empty());
    assert!(
        failed.iter().all(|r| r.check.starts_with("inclusion[")),
        "{failed:?}"
    );
    assert!(failed.iter().any(|r| r.example == "bxb1_gamma"));
    assert!(report
        .rows
        .iter()
        .filter(|r| r.example == "polydisc_p11")
        .all(|r| r.passed));
}
