use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_liquidate"))
}

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr_json(out: &Output) -> serde_json::Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().last().expect("stderr has a line");
    serde_json::from_str(line).expect("stderr is JSON")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let problem = problems().join("fig2_rho20.json");
    let out = run(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--emit-plot-data",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let report = read_json(&dir.path().join("report.json"));
    assert_eq!(report["converged"], true);
    let history: Vec<f64> = report["j_history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert!(history.windows(2).all(|w| w[1] <= w[0] + 1e-12));

    let csv = std::fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 101);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 300000.0);
    assert_eq!(rows[100][2].parse::<f64>().unwrap(), 0.0);
    let tol = report["tol_residual"].as_f64().unwrap();
    for r in &rows[..100] {
        let participation: f64 = r[4].parse().unwrap();
        assert!(participation <= 0.2 + tol / (2e6 * 0.01));
    }

    // Capped start: slope −ρ_m V / q0 per unit time in normalized units.
    let plot = std::fs::read_to_string(dir.path().join("plotdata.csv")).unwrap();
    let second: Vec<f64> = plot.lines().nth(2).unwrap().split(',').map(|x| x.parse().unwrap()).collect();
    let slope = (second[1] - 1.0) / second[0];
    assert!((slope + 0.2 * 2e6 / 300000.0).abs() <= 1e-6 * 4.0 / 3.0);

    let manifest = read_json(&dir.path().join("manifest.json"));
    let files: Vec<&str> = manifest["artifacts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["file"].as_str().unwrap())
        .collect();
    assert_eq!(files, ["trajectory.csv", "report.json", "plotdata.csv"]);
    assert_eq!(manifest["artifacts"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let problem = problems().join("fig3.json");
    for d in [&a, &b] {
        let out = run(&[
            "solve",
            "--problem",
            problem.to_str().unwrap(),
            "--out",
            d.path().to_str().unwrap(),
            "--emit-plot-data",
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["trajectory.csv", "plotdata.csv", "report.json"] {
        assert_eq!(
            std::fs::read(a.path().join(f)).unwrap(),
            std::fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn malformed_json_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"horizon\": 1.0,\n  \"steps\": 10,,\n}").unwrap();
    let out = run(&["solve", "--problem", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["error"], "Parse");
    assert_eq!(err["details"]["line"], 3);
}

#[test]
fn infeasible_problem_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(problems().join("fig2_rho20.json"))
        .unwrap()
        .replace("300000.0", "500000.0");
    let path = dir.path().join("p.json");
    std::fs::write(&path, text).unwrap();
    let out = run(&["solve", "--problem", path.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_json(&out);
    assert_eq!(err["details"][0]["kind"], "InfeasibleLiquidation");
}

#[test]
fn oversized_step_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let k: f64 = 2e6 * 0.2_f64.sqrt() / (0.045 * 0.5 * 1.5);
    let dtheta = format!("{:e}", 100.0 * 2.0 / k);
    let problem = problems().join("fig2_rho20.json");
    let out = run(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--dtheta",
        &dtheta,
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"], "Diverged");
}

#[test]
fn iteration_cap_exits_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let problem = problems().join("fig5.json");
    let out = run(&[
        "solve",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--max-iter",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&dir.path().join("report.json"))["converged"], false);
}

#[test]
fn verify_shooting_and_linear() {
    let dir = tempfile::tempdir().unwrap();
    for (file, oracle, rel) in [("fig2_rho40.json", "shooting", 1e-5), ("quadratic_d2.json", "linear", 1e-6)] {
        let problem = problems().join(file);
        let out = run(&[
            "verify",
            "--problem",
            problem.to_str().unwrap(),
            "--out",
            dir.path().to_str().unwrap(),
            "--oracle",
            oracle,
        ]);
        assert_eq!(out.status.code(), Some(0), "{file}: {}", String::from_utf8_lossy(&out.stderr));
        let v = read_json(&dir.path().join("verify.json"));
        assert_eq!(v["passed"], true);
        let gap = v["gap_inf"].as_f64().unwrap();
        let tol = v["tolerance"].as_f64().unwrap();
        assert!(gap <= tol);
        // Both problems have |q0|∞ = 3e5.
        assert!((tol / rel - 300000.0).abs() < 1e-6);
    }
}

#[test]
fn verify_shooting_on_two_assets_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let problem = problems().join("fig3.json");
    let out = run(&[
        "verify",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--oracle",
        "shooting",
    ]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"], "OraclePrecondition");
}

#[test]
fn verify_failure_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let problem = problems().join("fig2_rho20.json");
    let out = run(&[
        "verify",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--oracle",
        "shooting",
        "--tol-verify",
        "1e-15",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(read_json(&dir.path().join("verify.json"))["passed"], false);
}

#[test]
fn verify_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let problem = problems().join("fig4.json");
    let out = run(&[
        "verify",
        "--problem",
        problem.to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
        "--oracle",
        "perturbation",
        "--trials",
        "200",
        "--seed",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = read_json(&dir.path().join("verify.json"));
    assert_eq!(v["perturbation"]["trials"], 200);
    assert_eq!(v["perturbation"]["seed"], 3);
}

#[test]
fn figures_emit_all_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["figures", "--out", dir.path().to_str().unwrap(), "--steps", "50"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let header = |f: &str| {
        std::fs::read_to_string(dir.path().join(f))
            .unwrap()
            .lines()
            .next()
            .unwrap()
            .to_string()
    };
    assert_eq!(header("fig2.csv"), "time,rho_max_0.6,rho_max_0.4,rho_max_0.2");
    assert_eq!(header("fig3.csv"), "time,asset1,asset2,asset1_standalone");
    assert_eq!(header("fig4.csv"), "time,asset1,asset2,asset1_standalone");
    assert_eq!(header("fig5.csv"), "time,asset1,asset2,asset1_unhedged,hedge_overlay");

    let fig2 = std::fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    for line in fig2.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(v[1] <= v[2] + 1e-6 && v[2] <= v[3] + 1e-6, "{line}");
    }
    let fig5 = std::fs::read_to_string(dir.path().join("fig5.csv")).unwrap();
    let hedge: Vec<f64> = fig5
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    assert_eq!(hedge[0], 0.0);
    assert_eq!(*hedge.last().unwrap(), 0.0);
    assert!(hedge.iter().cloned().fold(f64::INFINITY, f64::min) < 0.0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["solve"]).status.code(), Some(1));
    assert_eq!(run(&["verify", "--problem", "x", "--out", "y", "--oracle", "bogus"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}
