use std::path::Path;

use decoupling::cli;
use serde_json::Value;

fn decouple(args: &[&str]) -> i32 {
    cli::run(std::iter::once("decouple").chain(args.iter().copied()))
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn small_heat(out: &Path) -> i32 {
    decouple(&[
        "solve",
        "--problem",
        "heat",
        "--spacing",
        "0.05",
        "--dt",
        "5e-3",
        "--save-every",
        "50",
        "--out",
        out.to_str().unwrap(),
    ])
}

fn snapshot_files(dir: &Path) -> Vec<String> {
    let manifest = json(&dir.join("manifest.json"));
    manifest["snapshots"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["file"].as_str().unwrap().to_string())
        .collect()
}

#[test]
fn solve_writes_manifest_diagnostics_and_snapshots() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("heat");
    assert_eq!(small_heat(&out), 0);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["completed"], true);
    assert_eq!(manifest["config"]["problem"], "heat");
    let diag = json(&out.join("diagnostics.json"));
    assert!(diag["triggered"].is_null());
    let files = snapshot_files(&out);
    assert_eq!(files.len(), 5);
    let text = std::fs::read_to_string(out.join(&files[0])).unwrap();
    assert_eq!(text.lines().next().unwrap(), "x1,u0[1],u1[1][1],u2[1][1][1]");
    assert!(!out.join("error.json").exists());
}

#[test]
fn blow_up_exits_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("burgers");
    let code = decouple(&["solve", "--problem", "burgers_blowup", "--grid-nodes", "21", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 2);
    let diag = json(&out.join("diagnostics.json"));
    assert_eq!(diag["completed"], false);
    let s = diag["sMinEstimate"].as_f64().unwrap();
    assert!((0.45..=0.55).contains(&s), "{s}");
}

#[test]
fn bad_input_exits_with_one_and_writes_error_json() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bad");
    assert_eq!(decouple(&["solve", "--problem", "nonesuch", "--out", out.to_str().unwrap()]), 1);
    assert_eq!(json(&out.join("error.json"))["kind"], "unknown_problem");

    let out = tmp.path().join("bad-boundary");
    assert_eq!(decouple(&["solve", "--boundary", "mirror", "--out", out.to_str().unwrap()]), 1);
    assert_eq!(json(&out.join("error.json"))["kind"], "config");

    let out = tmp.path().join("too-deep");
    assert_eq!(decouple(&["solve", "--k", "9", "--out", out.to_str().unwrap()]), 1);
    assert_eq!(json(&out.join("error.json"))["kind"], "order_exceeded");

    assert_eq!(decouple(&["solve", "--no-such-flag"]), 1);
    assert_eq!(decouple(&["verify", tmp.path().join("missing").to_str().unwrap()]), 1);
    assert_eq!(decouple(&["--version"]), 0);
}

#[test]
fn verify_accepts_a_good_run_and_rejects_a_corrupted_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("heat");
    assert_eq!(small_heat(&out), 0);
    let dir = out.to_str().unwrap();
    assert_eq!(decouple(&["verify", dir, "--paths", "1000", "--seed", "3"]), 0);
    let report = json(&out.join("verify.json"));
    assert_eq!(report["passed"], true);

    // shift u1 by 0.1 in the t = 0 snapshot
    let last = out.join(snapshot_files(&out).last().unwrap());
    let text = std::fs::read_to_string(&last).unwrap();
    let mut lines = text.lines();
    let mut corrupted = format!("{}\n", lines.next().unwrap());
    for line in lines {
        let mut cells: Vec<String> = line.split(',').map(str::to_string).collect();
        cells[2] = (cells[2].parse::<f64>().unwrap() + 0.1).to_string();
        corrupted.push_str(&cells.join(","));
        corrupted.push('\n');
    }
    std::fs::write(&last, corrupted).unwrap();
    assert_eq!(decouple(&["verify", dir, "--paths", "1000", "--seed", "3"]), 1);
    assert_eq!(json(&out.join("verify.json"))["passed"], false);
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let first = tmp.path().join("first");
    let second = tmp.path().join("second");
    assert_eq!(small_heat(&first), 0);
    let manifest = first.join("manifest.json");
    assert_eq!(
        decouple(&["solve", "--config", manifest.to_str().unwrap(), "--out", second.to_str().unwrap()]),
        0
    );
    let files = snapshot_files(&first);
    assert_eq!(files, snapshot_files(&second));
    for file in files {
        assert_eq!(std::fs::read(first.join(&file)).unwrap(), std::fs::read(second.join(&file)).unwrap());
    }
}

#[test]
fn toml_config_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.toml");
    std::fs::write(
        &config,
        "problem = \"linear\"\nk = 1\n[params]\nslope = 2.0\n[solver]\ndt = 0.01\n[grid]\nnodes = [21]\n",
    )
    .unwrap();
    let out = tmp.path().join("linear");
    let code = decouple(&[
        "solve",
        "--config",
        config.to_str().unwrap(),
        "--dt",
        "0.02",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let manifest = json(&out.join("manifest.json"));
    assert_eq!(manifest["config"]["k"], 1);
    assert_eq!(manifest["config"]["params"]["slope"], 2.0);
    assert_eq!(manifest["config"]["solver"]["dt"], 0.02);
    assert_eq!(manifest["config"]["grid"]["nodes"], serde_json::json!([21]));
}

#[test]
fn table_reports_errors_and_orders() {
    let tmp = tempfile::tempdir().unwrap();
    let coarse = tmp.path().join("coarse");
    let fine = tmp.path().join("fine");
    for (dir, h, dt) in [(&coarse, "0.1", "1e-2"), (&fine, "0.05", "5e-3")] {
        let code = decouple(&["solve", "--spacing", h, "--dt", dt, "--out", dir.to_str().unwrap()]);
        assert_eq!(code, 0);
    }
    let csv = tmp.path().join("table.csv");
    let code = decouple(&[
        "table",
        fine.to_str().unwrap(),
        coarse.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let headers = reader.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    // coarse first, and the error shrinks under refinement
    let h0: f64 = rows[0][col("h")].parse().unwrap();
    let h1: f64 = rows[1][col("h")].parse().unwrap();
    assert!(h0 > h1);
    let e0: f64 = rows[0][col("err_u0")].parse().unwrap();
    let e1: f64 = rows[1][col("err_u0")].parse().unwrap();
    assert!(e1 < e0);
    let order: f64 = rows[1][col("order_u0")].parse().unwrap();
    assert!(order > 0.0);
}
