use std::path::PathBuf;
use std::process::{Command, Output};

use pap_core::ad::dual_type;
use pap_core::parser::parse;
use pap_core::prims::registry;
use pap_core::typecheck::{typecheck, Context};
use serde_json::Value as Json;

fn program(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "programs", name]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn pap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pap"))
        .args(args)
        .output()
        .expect("pap binary runs")
}

fn stdout_json(out: &Output) -> Json {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

#[test]
fn run_sillyid_at_two() {
    let out = pap(&["run", &program("sillyid.pap"), "--arg", "2.0"]);
    assert_eq!(out.status.code(), Some(0));
    let j = stdout_json(&out);
    assert_eq!(j["status"], "val");
    assert_eq!(j["value"], 2.0);
    assert_eq!(j["schema"], "pap/1");
    assert!(j["steps"].is_u64());
}

#[test]
fn grad_sillyid_at_zero_is_zero() {
    let out = pap(&["grad", &program("sillyid.pap"), "--at", "0.0"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["ad"], 0.0);
}

#[test]
fn grad_check_reports_boundary_at_zero() {
    let out = pap(&[
        "grad",
        &program("sillyid.pap"),
        "--at",
        "0.0",
        "--at",
        "-3",
        "--check",
    ]);
    let j = stdout_json(&out);
    let reports = j["reports"].as_array().unwrap();
    assert_eq!(reports[0]["class"], "suspected_boundary");
    assert_eq!(reports[0]["fd"], 1.0);
    assert_eq!(reports[1]["class"], "interior");
    assert_eq!(reports[1]["ad"], 1.0);
}

#[test]
fn grad_multivariate_gradient_and_jvp() {
    let out = pap(&["grad", &program("quadratic2.pap"), "--at", "1,2"]);
    assert_eq!(stdout_json(&out)["ad"], serde_json::json!([2.0, 12.0]));
    let out = pap(&[
        "grad",
        &program("quadratic2.pap"),
        "--at",
        "1,2",
        "--seed-vec",
        "1,-1",
    ]);
    assert_eq!(stdout_json(&out)["ad"], -10.0);
}

#[test]
fn gd_counterexample_csv_steps_down_by_one() {
    let out = pap(&[
        "gd",
        &program("counterexample_p.pap"),
        "--x0",
        "5.0",
        "--eps",
        "1.0",
        "--T",
        "10",
        "--mode",
        "ad",
        "--csv",
        "-",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("# manifest {"));
    assert_eq!(lines.next().unwrap(), "t,x,grad,f");
    let xs: Vec<f64> = lines
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let expected: Vec<f64> = std::iter::once(5.0)
        .chain((0..10).map(|k| -(k as f64)))
        .collect();
    assert_eq!(xs, expected);
}

#[test]
fn gd_csv_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("traj.csv");
    let out = pap(&[
        "gd",
        &program("quadratic2.pap"),
        "--x0",
        "1,-1",
        "--eps",
        "0.1",
        "--T",
        "5",
        "--mode",
        "fd",
        "--csv",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "t,x0,x1,grad0,grad1,f");
    assert_eq!(text.lines().count(), 2 + 6);
}

#[test]
fn stable_output_is_byte_identical() {
    let args = [
        "estimate",
        &program("diagonal.pap"),
        "--event",
        "box:0,0.5;0,0.5",
        "-N",
        "2000",
        "--seed",
        "7",
        "--stable",
    ];
    let a = pap(&args);
    let b = pap(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert_eq!(pap(&seq).stdout, a.stdout);
    assert!(!String::from_utf8_lossy(&a.stdout).contains("elapsed_ms"));
    let timed = pap(&args[..args.len() - 1]);
    assert!(String::from_utf8_lossy(&timed.stdout).contains("elapsed_ms"));
}

#[test]
fn manifest_records_program_hash_and_seed() {
    let j = stdout_json(&pap(&[
        "dim",
        &program("diagonal.pap"),
        "-N",
        "50",
        "--seed",
        "3",
    ]));
    let m = &j["manifest"];
    assert_eq!(m["command"], "dim");
    assert_eq!(m["seed"], 3);
    assert_eq!(m["program_sha256"].as_str().unwrap().len(), 64);
    assert_eq!(j["counts"]["1"], 50);
}

#[test]
fn exit_codes() {
    let bad = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(bad.path(), "fun (x : real) -> frob(x)").unwrap();
    assert_eq!(
        pap(&["run", bad.path().to_str().unwrap()]).status.code(),
        Some(1)
    );
    std::fs::write(bad.path(), "add(1.0, true)").unwrap();
    assert_eq!(
        pap(&["typecheck", bad.path().to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(pap(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(pap(&["run", "/nonexistent.pap"]).status.code(), Some(1));

    let out = pap(&[
        "run",
        &program("cantor.pap"),
        "--arg",
        "0.25",
        "--fuel",
        "1000",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let j = stdout_json(&out);
    assert_eq!(j["status"], "bottom");
    assert_eq!(j["reason"]["kind"], "fuel_exhausted");

    std::fs::write(bad.path(), "fun (x : real) -> log(x)").unwrap();
    let out = pap(&[
        "gd",
        bad.path().to_str().unwrap(),
        "--x0",
        "0.5",
        "--eps",
        "1.0",
        "--T",
        "5",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        stdout_json(&out)["trajectory"]["termination"]["kind"],
        "undefined"
    );
}

#[test]
fn run_probabilistic_program_reports_trace() {
    let j = stdout_json(&pap(&["run", &program("diagonal.pap"), "--seed", "4"]));
    assert_eq!(j["status"], "val");
    let trace = j["trace"].as_array().unwrap();
    assert_eq!(trace.len(), 1);
    assert_eq!(j["value"][0], trace[0]);
    assert_eq!(j["value"][1], trace[0]);
}

#[test]
fn trace_and_weight() {
    let j = stdout_json(&pap(&[
        "trace",
        &program("diagonal.pap"),
        "--trace",
        "0.3,0.7",
        "--json",
    ]));
    assert_eq!(j["value"], serde_json::json!([0.3, 0.3]));
    assert_eq!(j["remainder"], serde_json::json!([0.7]));

    let file = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(file.path(), "0.25\n0.75\n").unwrap();
    let j = stdout_json(&pap(&[
        "trace",
        &program("square_sample.pap"),
        "--trace-file",
        file.path().to_str().unwrap(),
    ]));
    assert_eq!(j["value"], serde_json::json!([0.25, 0.75]));

    let j = stdout_json(&pap(&[
        "weight",
        &program("abs_kink.pap"),
        "--trace",
        "0.75",
        "--grad",
    ]));
    assert_eq!(j["weight"], 0.25);
    assert_eq!(j["grad"], serde_json::json!([1.0]));
    let j = stdout_json(&pap(&[
        "weight",
        &program("abs_kink.pap"),
        "--trace",
        "0.75,0.1",
    ]));
    assert_eq!(j["weight"], 0.0);
}

#[test]
fn simulate_csv_has_one_row_per_run() {
    let out = pap(&["simulate", &program("geometric.pap"), "-N", "5", "--csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2 + 5);
    for row in text.lines().skip(2) {
        let cols: Vec<&str> = row.split(',').collect();
        assert_eq!(cols[1], "val");
        let trace: Vec<f64> = cols[4].split(';').map(|v| v.parse().unwrap()).collect();
        // The geometric count equals the number of draws before the last.
        assert_eq!(cols[3].parse::<f64>().unwrap(), (trace.len() - 1) as f64);
        assert!(*trace.last().unwrap() < 0.5);
    }
}

#[test]
fn estimate_total_mass() {
    let j = stdout_json(&pap(&[
        "estimate",
        &program("scored_sample.pap"),
        "-N",
        "1000",
    ]));
    assert_eq!(j["mean"], 2.0);
}

#[test]
fn prims_json_lists_registry() {
    let j = stdout_json(&pap(&["prims", "--json"]));
    let names: Vec<&str> = j["prims"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["name"].as_str().unwrap())
        .collect();
    let expected: Vec<&str> = registry().iter().map(|s| s.name).collect();
    assert_eq!(names, expected);
}

#[test]
fn ad_emit_reparses_at_dual_type() {
    let out = pap(&["ad", &program("counterexample_p.pap"), "--emit"]);
    assert_eq!(out.status.code(), Some(0));
    let src = String::from_utf8(out.stdout).unwrap();
    let dual = parse(&src).expect("emitted source parses");
    let original =
        parse(&std::fs::read_to_string(program("counterexample_p.pap")).unwrap()).unwrap();
    let ty = typecheck(&Context::new(), &original).unwrap();
    assert_eq!(typecheck(&Context::new(), &dual), Ok(dual_type(&ty)));
}

#[test]
fn check_alias_prints_type() {
    let j = stdout_json(&pap(&["check", &program("mixture.pap")]));
    assert_eq!(j["type"], "real * real");
    assert_eq!(j["deterministic"], false);
}
