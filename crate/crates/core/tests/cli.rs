use std::path::Path;
use std::process::{Command, Output};

use inforelax::cli::{ResultDocument, SolutionDocument};
use inforelax::ssmodel::{ModelDocument, OutputMap, ParameterPartials, ParameterizedModel};
use nalgebra::{DMatrix, DVector};

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inforelax"))
        .args(args)
        .current_dir(dir)
        .env_remove("INFORELAX_THREADS")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

#[test]
fn l2_design_json_reproduces_the_summary_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["design", "--model", "mri", "--norm", "l2", "--out", "d.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: ResultDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    assert_eq!(doc.summary_line(), stdout(&o));
    assert!(doc.exact);
    assert_eq!(doc.status, "Optimal");
    let u = doc.u.unwrap();
    assert_eq!(u.len(), 30);
    let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!((norm - 4.0).abs() < 1e-6);
}

#[test]
fn certify_reports_interval_and_rejects_infeasible_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let boxcar: Vec<String> = (0..30).map(|t| if t < 8 { "1" } else { "0" }.into()).collect();
    std::fs::write(dir.path().join("box.txt"), boxcar.join(" ")).unwrap();
    let o = run(
        &["certify", "--norm", "l1", "--candidate", "box.txt", "--out", "c.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    let line = stdout(&o);
    assert!(line.contains('[') && line.contains("ratio=0.98"), "{line}");
    let doc: ResultDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert!(doc.candidate_value.unwrap() <= doc.relaxation_value);

    let mut over = boxcar.clone();
    over[8] = "0.5".into();
    std::fs::write(dir.path().join("bad.json"), over.join(",")).unwrap();
    let o = run(&["certify", "--norm", "l1", "--candidate", "bad.json"], dir.path());
    assert_eq!(o.status.code(), Some(4));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("violated"), "{err}");
}

#[test]
fn usage_and_input_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["design", "--norm", "l3", "--out", "x.json"][..],
        &["design", "--norm", "l2", "--out", "x.json", "--tol", "-1"],
        &["design", "--norm", "l2", "--out", "x.json", "--theta", "kPL,bogus"],
        &["certify", "--norm", "l2", "--candidate", "missing.txt"],
        &["solve", "--problem", "missing.json", "--out", "s.json"],
        &["frobnicate"],
    ] {
        assert_eq!(run(args, dir.path()).status.code(), Some(2), "{args:?}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_inforelax"))
        .args(["design", "--norm", "l2", "--out", "x.json"])
        .current_dir(dir.path())
        .env("INFORELAX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn exported_problem_solves_to_the_design_value() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["export-problem", "--norm", "l1", "--out", "p.json"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("497 constraints"));
    let o = Command::new(env!("CARGO_BIN_EXE_inforelax"))
        .args(["solve", "--problem", "p.json", "--out", "s.json"])
        .current_dir(dir.path())
        .env("INFORELAX_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let sol: SolutionDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    assert_eq!(sol.x.len(), 31);
    assert!(sol.gap <= 1e-8);
    assert!((sol.value - 1.39686974e10).abs() / 1.39686974e10 < 1e-7, "{}", sol.value);

    let o = run(&["solve", "--problem", "p.json", "--out", "s.json", "--max-iters", "2"], dir.path());
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn simulate_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("u.txt"), vec!["0.5"; 30].join("\n")).unwrap();
    let o = run(&["simulate", "--input", "u.txt", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,u_1,x_1,x_2,x_3,x_4,x_5,y_1,y_2");
    assert_eq!(lines.len(), 32);

    std::fs::write(dir.path().join("zero.json"), format!("[{}]", ["0"; 30].join(","))).unwrap();
    let o = run(&["simulate", "--input", "zero.json", "--out", "z.csv"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("z.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        for y in &cells[cells.len() - 2..] {
            assert_eq!(y.parse::<f64>().unwrap(), 0.0);
        }
    }

    std::fs::write(dir.path().join("short.txt"), "1 2 3").unwrap();
    let o = run(&["simulate", "--input", "short.txt", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("30"));

    std::fs::write(dir.path().join("typo.txt"), "1 2\n3 x4").unwrap();
    let o = run(&["simulate", "--input", "typo.txt", "--out", "t.csv"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn model_files_are_accepted() {
    let dir = tempfile::tempdir().unwrap();
    // x' = θx + u, y = x
    let model = ParameterizedModel::new(
        DMatrix::from_element(1, 1, 0.7),
        DMatrix::from_element(1, 1, 1.0),
        OutputMap::Constant(DMatrix::from_element(1, 1, 1.0)),
        DMatrix::from_element(1, 1, 1.0),
        DVector::zeros(1),
        vec![ParameterPartials {
            name: "theta".into(),
            da: DMatrix::from_element(1, 1, 1.0),
            db: DMatrix::zeros(1, 1),
            dx0: DVector::zeros(1),
        }],
        6,
    )
    .unwrap();
    std::fs::write(dir.path().join("m.json"), ModelDocument::from_model(&model).to_json().unwrap()).unwrap();
    let o = run(&["design", "--model", "m.json", "--norm", "l2", "--l2-budget", "1.5", "--out", "d.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["design", "--model", "m.json", "--norm", "l1", "--out", "d.json"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["design", "--model", "m.json", "--theta", "kPL", "--norm", "l1", "--out", "d.json"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn extracted_l2_optimum_certifies_with_unit_ratio() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(
        &["design", "--norm", "l2", "--out", "d.json", "--trajectory", "t.csv"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(dir.path().join("t.csv")).unwrap().lines().count(), 32);
    let doc: ResultDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.json")).unwrap()).unwrap();
    std::fs::write(dir.path().join("u.json"), serde_json::to_string(&doc.u.unwrap()).unwrap()).unwrap();
    let o = run(
        &["certify", "--norm", "l2", "--candidate", "u.json", "--out", "c.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: ResultDocument =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("c.json")).unwrap()).unwrap();
    assert!((cert.ratio.unwrap() - 1.0).abs() <= 1e-6);
}
