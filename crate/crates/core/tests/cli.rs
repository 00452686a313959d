//! Parsing round trips and end-to-end runs of the `wfdr` binary.

use std::fs;
use std::path::Path;
use std::process::Command;

use proptest::prelude::*;
use wfdr::exact_tests::{CountData, PoissonPair, TestFamily, TwoByTwo};
use wfdr::io::{parse_counts_reader, write_counts_csv, InputLayout, StudyInput, StudyRow};

fn wfdr() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wfdr"))
}

fn write_binomial_input(path: &Path) {
    let mut text = String::from("id,c1,c2\n");
    for i in 0..60u64 {
        let (a, b) = if i % 4 == 0 {
            (i % 3, 15 + i % 7)
        } else {
            (3 + i % 5, 4 + i % 6)
        };
        text.push_str(&format!("gene{i},{a},{b}\n"));
    }
    fs::write(path, text).unwrap();
}

fn analyze(dir: &Path, extra: &[&str]) -> std::process::Output {
    let input = dir.join("counts.csv");
    if !input.exists() {
        write_binomial_input(&input);
    }
    wfdr()
        .args(["analyze", "--test", "binomial", "--input"])
        .arg(&input)
        .arg("--output")
        .arg(dir.join("out"))
        .args(extra)
        .output()
        .unwrap()
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("out/summary.json")).unwrap()).unwrap()
}

#[test]
fn analyze_writes_both_procedures() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(
        dir.path(),
        &["--alpha", "0.1", "--groups", "3", "--procedure", "all"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(
        lines.next().unwrap(),
        "id,pvalue,group,weight,weighted_pvalue,rejected_wfdr,rejected_bh"
    );
    assert_eq!(lines.count(), 60);
    let s = summary(dir.path());
    assert_eq!(s["options"]["alpha"], 0.1);
    assert_eq!(s["options"]["groups"], 3);
    assert!(s["k_star"].is_u64() && s["k_tilde_star"].is_u64());
}

#[test]
fn zero_level_rejects_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(dir.path(), &["--alpha", "0", "--groups", "2"]);
    assert!(out.status.success());
    let s = summary(dir.path());
    assert_eq!(s["rejections_wfdr"], 0);
    assert_eq!(s["rejections_bh"], 0);
}

#[test]
fn one_group_overall_equals_global() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(
        dir.path(),
        &["--alpha", "0.05", "--groups", "1", "--grouping", "metric"],
    );
    assert!(out.status.success());
    let s = summary(dir.path());
    assert_eq!(s["pi0_overall"], s["pi0_global"]);
}

#[test]
fn bh_only_report_has_no_weight_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(
        dir.path(),
        &["--alpha", "0.05", "--groups", "2", "--procedure", "bh"],
    );
    assert!(out.status.success());
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(report.lines().next().unwrap(), "id,pvalue,rejected_bh");
}

#[test]
fn filter_restricts_report_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = analyze(
        dir.path(),
        &[
            "--alpha",
            "0.05",
            "--groups",
            "2",
            "--min-total",
            "10",
            "--max-per-cell",
            "8",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let s = summary(dir.path());
    let analysed = s["hypotheses_analysed"].as_u64().unwrap();
    let report = fs::read_to_string(dir.path().join("out/report.csv")).unwrap();
    assert_eq!(report.lines().count() as u64 - 1, analysed);
    assert!(analysed < 60);
    assert_eq!(s["options"]["filter"]["min_total"], 10);
}

#[test]
fn fet_with_study_totals() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("drugs.csv");
    let mut text = String::from("id,cases,events\n");
    for i in 0..30u64 {
        text.push_str(&format!(
            "drug{i},{},{}\n",
            i % 6 + if i < 5 { 8 } else { 0 },
            200 + 13 * i
        ));
    }
    fs::write(&input, text).unwrap();
    let out = wfdr()
        .args([
            "analyze", "--test", "fet", "--alpha", "0.1", "--groups", "2",
        ])
        .args([
            "--study-totals",
            "400,20000",
            "--grouping",
            "metric",
            "--distance",
            "margins",
        ])
        .arg("--input")
        .arg(&input)
        .arg("--output")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(summary(dir.path())["hypotheses_analysed"], 30);
}

#[test]
fn distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad_header = dir.path().join("bad_header.csv");
    fs::write(&bad_header, "name,x,y\na,1,2\n").unwrap();
    let bad_number = dir.path().join("bad_number.csv");
    fs::write(&bad_number, "id,c1,c2\na,1,2\nb,x,2\n").unwrap();
    let run = |input: &Path, alpha: &str| {
        wfdr()
            .args([
                "analyze", "--test", "binomial", "--groups", "1", "--alpha", alpha, "--input",
            ])
            .arg(input)
            .arg("--output")
            .arg(dir.path().join("out"))
            .output()
            .unwrap()
    };
    let schema = run(&bad_header, "0.1");
    assert_eq!(schema.status.code(), Some(3));
    let parse = run(&bad_number, "0.1");
    assert_eq!(parse.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("line 3"));
    let missing = run(&dir.path().join("missing.csv"), "0.1");
    assert_eq!(missing.status.code(), Some(6));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.csv"));
    let config = run(&bad_header, "1.5");
    assert_eq!(config.status.code(), Some(2));
    let usage = wfdr()
        .args(["analyze", "--test", "poisson"])
        .output()
        .unwrap();
    assert_eq!(usage.status.code(), Some(2));
}

fn simulate(dir: &Path, threads: &str) -> (Vec<u8>, Vec<u8>) {
    let out = wfdr()
        .args([
            "simulate", "--family", "fet", "--m", "120", "--pi0", "0.5", "--pi0", "1.0",
        ])
        .args([
            "--alpha", "0.05", "--alpha", "0.2", "--l-star", "3", "--reps", "2", "--seed", "7",
        ])
        .args(["--threads", threads, "--output"])
        .arg(dir)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    (
        fs::read(dir.join("summary.json")).unwrap(),
        fs::read(dir.join("summary.csv")).unwrap(),
    )
}

#[test]
fn simulate_is_reproducible_and_reports_no_power_without_alternatives() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(&dir.path().join("a"), "1");
    let b = simulate(&dir.path().join("b"), "4");
    assert_eq!(a, b);
    let csv = String::from_utf8(a.1).unwrap();
    let power: Vec<&str> = csv
        .lines()
        .filter(|l| l.starts_with("fet,1,") && l.contains(",mean_power,"))
        .collect();
    assert_eq!(power.len(), 4);
    assert!(power.iter().all(|l| l.ends_with(",0")));
}

fn row() -> impl Strategy<Value = CountData> {
    prop_oneof![
        (0u64..500, 0u64..500).prop_map(|(a, b)| CountData::Pair(PoissonPair::new(a, b))),
        (0u64..500, 0u64..500, 0u64..500, 0u64..500).prop_map(|(a, x, b, y)| {
            CountData::Table(TwoByTwo::new(a.min(x), x, b.min(y), y).unwrap())
        }),
    ]
}

proptest! {
    #[test]
    fn parse_emit_parse_round_trip(rows in prop::collection::vec(row(), 0..30), family_pick in any::<bool>()) {
        let family = if family_pick { TestFamily::Binomial } else { TestFamily::Fet };
        let rows: Vec<StudyRow> = rows
            .into_iter()
            .filter(|c| c.family() == family)
            .enumerate()
            .map(|(i, counts)| StudyRow { id: format!("row{i}"), counts })
            .collect();
        let input = StudyInput::new(family, rows).unwrap();
        let mut first = Vec::new();
        write_counts_csv(&input, &mut first).unwrap();
        let parsed = parse_counts_reader(first.as_slice(), InputLayout::Family(family)).unwrap();
        prop_assert_eq!(&parsed, &input);
        let mut second = Vec::new();
        write_counts_csv(&parsed, &mut second).unwrap();
        prop_assert_eq!(first, second);
    }
}
