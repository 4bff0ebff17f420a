use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_estnma")).args(args).output().expect("run estnma")
}

fn analyze(format: &str) -> Vec<u8> {
    let out = run(&[
        "analyze",
        "-i",
        &fixture("case_study.csv"),
        "-c",
        &fixture("case_study_config.json"),
        "-f",
        format,
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

#[test]
fn output_is_byte_identical_across_runs() {
    for format in ["text", "csv", "json"] {
        assert_eq!(analyze(format), analyze(format), "{format}");
    }
}

#[test]
fn csv_and_json_fixtures_give_the_same_analysis() {
    let from = |file: &str| {
        run(&["analyze", "-i", &fixture(file), "-c", &fixture("case_study_config.json"), "-f", "csv"]).stdout
    };
    assert_eq!(from("case_study.csv"), from("case_study.json"));
}

#[test]
fn analysis_csv_has_one_row_per_ordered_pair() {
    let text = String::from_utf8(analyze("csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("estimand,endpoint,treatment,comparator,md,ci_lower,ci_upper,se,ci_level")
    );
    // Two strategies, two endpoints, five treatments.
    assert_eq!(lines.count(), 4 * 20);
}

#[test]
fn output_file_matches_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.json");
    let out = run(&[
        "analyze",
        "-i",
        &fixture("case_study.csv"),
        "-c",
        &fixture("case_study_config.json"),
        "-f",
        "json",
        "-o",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read(&path).unwrap(), analyze("json"));
}

#[test]
fn compare_reports_attenuation() {
    let out = run(&["compare", "-i", &fixture("case_study.csv"), "-c", &fixture("case_study_config.json")]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let row = text
        .lines()
        .skip_while(|l| !l.starts_with("body_weight"))
        .find(|l| l.trim_start().starts_with("sema_2.0") && l.contains("dula_3.0"))
        .unwrap();
    assert!(row.trim_end().ends_with("yes"), "{row}");
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["validate", "-i", &fixture("case_study.csv")]).status.code(), Some(0));
    let bad = run(&["validate", "-i", &fixture("malformed.csv")]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 26"));
    assert_eq!(run(&["validate", "-i", "/nonexistent/evidence.csv"]).status.code(), Some(2));
    assert_eq!(run(&["network", "-i", &fixture("disconnected.csv")]).status.code(), Some(3));
    assert_eq!(run(&["network", "-i", &fixture("case_study.csv")]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["analyze", "-i", &fixture("case_study.csv")]).status.code(), Some(1));
}

#[test]
fn forcing_a_disconnected_slice_analyses_the_reference_component() {
    let out = run(&[
        "analyze",
        "-i",
        &fixture("disconnected.csv"),
        "-c",
        &fixture("case_study_config.json"),
        "-e",
        "hba1c",
        "--force",
        "-f",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("forced"));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("dula_4.5,dula_1.5") && !text.contains("sema"));
}

#[test]
fn every_subcommand_has_help() {
    for sub in [None, Some("validate"), Some("network"), Some("analyze"), Some("compare")] {
        let mut args: Vec<&str> = sub.into_iter().collect();
        args.push("--help");
        let out = run(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"));
    }
}
