//! End-to-end tests for the `projsym` command-line interface, run in-process
//! through `projsym::cli::run` and checked through `--report`/`--out` files.

use std::path::PathBuf;

use projsym::cli;
use projsym::expr::ParamEnv;
use projsym::geometry::MetricSpec;

fn tmp(name: &str) -> PathBuf {
    std::env::temp_dir().join(format!("projsym-cli-{}-{name}", std::process::id()))
}

fn run(args: &[&str]) -> i32 {
    cli::run(std::iter::once("projsym").chain(args.iter().copied()))
}

fn read_and_remove(path: &PathBuf) -> String {
    let text = std::fs::read_to_string(path).expect("output file should exist");
    let _ = std::fs::remove_file(path);
    text
}

fn parse_csv(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = text.lines();
    let header = lines
        .next()
        .expect("csv should have a header")
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn list_exits_zero() {
    assert_eq!(run(&["list"]), 0);
}

#[test]
fn verify_single_entry_writes_passing_report() {
    let report = tmp("verify.json");
    let code = run(&[
        "verify",
        "--entry",
        "main-111-tan",
        "--samples",
        "40",
        "--seed",
        "3",
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = read_and_remove(&report);
    let json: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["config"]["seed"], 3);
    assert_eq!(json["config"]["samples"], 40);
    assert_eq!(json["passed"], 1);
    assert_eq!(json["failed"], 0);
    assert_eq!(json["entries"][0]["id"], "main-111-tan");
    assert_eq!(json["entries"][0]["pass"], true);
}

#[test]
fn verify_unknown_entry_exits_two() {
    assert_eq!(run(&["verify", "--entry", "no-such-entry"]), 2);
}

#[test]
fn check_accepts_flat_space_dilation_and_rejects_non_symmetry() {
    let flat = MetricSpec::new(
        &["x", "y", "z"],
        &["1", "0", "0", "1", "0", "1"],
        ParamEnv::new(),
        &[[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
        &[],
    )
    .unwrap();
    let metric_path = tmp("metric.json");
    std::fs::write(&metric_path, flat.to_json()).unwrap();
    let vf_path = tmp("vf.json");

    std::fs::write(&vf_path, r#"{"components": ["x", "y", "z"]}"#).unwrap();
    let code = run(&[
        "check",
        "--metric",
        metric_path.to_str().unwrap(),
        "--vf",
        vf_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "a dilation is projective for the flat metric");

    std::fs::write(&vf_path, r#"{"components": ["0", "x^2*y", "0"]}"#).unwrap();
    let code = run(&[
        "check",
        "--metric",
        metric_path.to_str().unwrap(),
        "--vf",
        vf_path.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "a generic cubic field is not projective");

    let _ = std::fs::remove_file(&metric_path);
    let _ = std::fs::remove_file(&vf_path);
}

#[test]
fn benenti_csv_has_eigenvalue_columns_over_full_grid() {
    let out = tmp("benenti.csv");
    let code = run(&[
        "benenti",
        "--entry",
        "main-111-tan",
        "--grid",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&read_and_remove(&out));
    assert_eq!(
        header,
        ["x", "y", "z", "lambda1", "lambda2", "lambda3", "diagonalizable"]
    );
    assert_eq!(rows.len(), 27, "3 subdivisions per coordinate");
    for row in &rows {
        for v in &row[..6] {
            let x: f64 = v.parse().expect("numeric cell");
            assert!(x.is_finite());
            assert!(!v.contains(','), "decimal separator must be '.'");
        }
        assert_eq!(row[6], "true");
    }
}

#[test]
fn benenti_requires_a_partner_metric() {
    assert_eq!(run(&["benenti", "--entry", "21-cc-flat-1a"]), 2);
}

#[test]
fn geodesics_of_the_flat_metric_are_straight_lines() {
    let flat = MetricSpec::new(
        &["x", "y", "z"],
        &["1", "0", "0", "1", "0", "1"],
        ParamEnv::new(),
        &[[-2.0, 2.0], [-2.0, 2.0], [-2.0, 2.0]],
        &[],
    )
    .unwrap();
    let metric_path = tmp("flat-geo.json");
    std::fs::write(&metric_path, flat.to_json()).unwrap();
    let out = tmp("geodesic.csv");
    let code = run(&[
        "geodesic",
        "--metric",
        metric_path.to_str().unwrap(),
        "--init",
        "0,0,0,0.5,-0.25",
        "--range",
        "0,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    let _ = std::fs::remove_file(&metric_path);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&read_and_remove(&out));
    assert_eq!(header, ["x", "y", "z", "y_x", "z_x"]);
    for row in &rows {
        let x: f64 = row[0].parse().unwrap();
        let y: f64 = row[1].parse().unwrap();
        let z: f64 = row[2].parse().unwrap();
        assert!((y - 0.5 * x).abs() < 1e-9);
        assert!((z + 0.25 * x).abs() < 1e-9);
    }
    let last: f64 = rows.last().unwrap()[0].parse().unwrap();
    assert!((last - 1.0).abs() < 1e-12, "range endpoint reached");
}

#[test]
fn transport_defects_pass_for_catalog_generators() {
    let out = tmp("transport.csv");
    let code = run(&[
        "transport",
        "--entry",
        "21-c1-invz2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&read_and_remove(&out));
    assert_eq!(header, ["generator", "defect", "tol", "pass"]);
    assert!(!rows.is_empty());
    for row in &rows {
        assert_eq!(row[3], "true");
    }
}

#[test]
fn solve_psi_csv_matches_hyperbolic_closed_form() {
    let out = tmp("psi.csv");
    let z0 = 0.5_f64;
    let psi0 = z0 - z0.tanh();
    let dpsi0 = z0.tanh().powi(2);
    let code = run(&[
        "solve-psi",
        "--k",
        "1",
        "--range",
        "0.5,1.5",
        "--init",
        &format!("{psi0:.17e},{dpsi0:.17e}"),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let (header, rows) = parse_csv(&read_and_remove(&out));
    assert_eq!(header, ["z", "psi", "psi_prime", "residual"]);
    for row in &rows {
        let z: f64 = row[0].parse().unwrap();
        let psi: f64 = row[1].parse().unwrap();
        let residual: f64 = row[3].parse().unwrap();
        assert!((psi - (z - z.tanh())).abs() < 1e-8);
        assert!(residual < 1e-6);
    }
}

#[test]
fn malformed_arguments_exit_two() {
    assert_eq!(run(&["geodesic", "--init", "0,0", "--range", "0,1"]), 2);
    assert_eq!(
        run(&["solve-psi", "--k", "1", "--range", "zero,one", "--init", "0,0"]),
        2
    );
}
