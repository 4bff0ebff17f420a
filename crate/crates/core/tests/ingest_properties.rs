mod support;

use estnma_core::ingest::{parse_evidence, parse_evidence_str, se_from_ci, validate_evidence, Format, IssueCode};
use estnma_core::stats::normal_quantile;
use estnma_core::synth::{random_evidence, SynthSpec};
use estnma_core::{Severity, UncertaintySource};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;

use support::oracle;

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn reported_interval_gives_expected_se() {
    let se = se_from_ci(-0.70, -0.23, 0.95).unwrap();
    assert!((se - 0.11990).abs() < 1e-5, "{se}");
    assert!((se - oracle::se_from_ci(-0.70, -0.23, 0.95)).abs() < 1e-10);
}

#[test]
fn quantile_agrees_with_quadrature_oracle() {
    for i in 1..200 {
        let p = i as f64 / 200.0;
        let q = normal_quantile(p);
        assert!((q - oracle::normal_quantile(p)).abs() < 1e-8, "p = {p}");
    }
}

#[test]
fn degenerate_intervals_are_rejected() {
    assert!(se_from_ci(1.0, 1.0, 0.95).is_err());
    assert!(se_from_ci(1.0, 0.5, 0.95).is_err());
    assert!(se_from_ci(f64::NAN, 0.5, 0.95).is_err());
    assert!(se_from_ci(0.0, 1.0, 1.0).is_err());
    assert!(se_from_ci(0.0, 1.0, 0.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn se_scales_with_interval(lo in -50.0f64..50.0, w in 1e-3f64..20.0, k in 1e-3f64..1e3, level in 0.5f64..0.999) {
        let a = se_from_ci(lo, lo + w, level).unwrap();
        let b = se_from_ci(k * lo, k * (lo + w), level).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * k * a);
    }

    #[test]
    fn se_ignores_location(lo in -50.0f64..50.0, w in 1e-3f64..20.0, shift in -100.0f64..100.0) {
        let a = se_from_ci(lo, lo + w, 0.95).unwrap();
        let b = se_from_ci(lo + shift, lo + w + shift, 0.95).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn se_is_monotone(w in 1e-3f64..20.0, extra in 1e-3f64..5.0, l1 in 0.5f64..0.95, dl in 1e-3f64..0.04) {
        prop_assert!(se_from_ci(0.0, w + extra, l1).unwrap() > se_from_ci(0.0, w, l1).unwrap());
        prop_assert!(se_from_ci(0.0, w, l1 + dl).unwrap() < se_from_ci(0.0, w, l1).unwrap());
    }
}

#[test]
fn csv_and_json_fixtures_agree() {
    let csv = parse_evidence(fixture("case_study.csv")).unwrap();
    let json = parse_evidence(fixture("case_study.json")).unwrap();
    assert_eq!(csv, json);
    assert_eq!(csv.trials.len(), 3);
    assert_eq!(csv.contrasts.len(), 16);
    assert_eq!(csv.arm_summaries.len(), 12);
    assert!(csv.contrasts.iter().any(|c| c.source == UncertaintySource::FromArms));
    assert!(csv.contrasts.iter().any(|c| c.source == UncertaintySource::FromCi));
}

#[test]
fn case_study_validates_with_timepoint_warning_only() {
    let base = parse_evidence(fixture("case_study.csv")).unwrap();
    let issues = validate_evidence(&base);
    assert!(issues.iter().all(|i| i.severity == Severity::Warning), "{issues:?}");
    assert!(issues.iter().any(|i| i.code == IssueCode::TimepointSpread));
}

#[test]
fn malformed_number_is_located() {
    let err = parse_evidence(fixture("malformed.csv")).unwrap_err().to_string();
    assert!(err.contains("line 26"), "{err}");
}

#[test]
fn written_evidence_parses_back_unchanged() {
    let base = parse_evidence(fixture("case_study.csv")).unwrap();
    for format in [Format::Csv, Format::Json] {
        let again = parse_evidence_str(&base.write(format), format).unwrap();
        assert_eq!(base, again, "{format:?}");
    }
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..50 {
        let base = random_evidence(&mut rng, SynthSpec::default());
        for format in [Format::Csv, Format::Json] {
            assert_eq!(base, parse_evidence_str(&base.write(format), format).unwrap());
        }
    }
}
