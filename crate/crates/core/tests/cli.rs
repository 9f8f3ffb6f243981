use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn osa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_osa")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: tempfile::tempdir().unwrap() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn generate(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.file(name);
        let mut args = vec!["gen", "--n", "80", "--d", "6", "--k", "2", "--alpha", "0.2", "--seed", "5", "--out", path_str(&out)];
        args.extend_from_slice(extra);
        json_of(&osa(&args));
        out
    }
}

fn relative_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

#[test]
fn gen_solve_eval_round_trip() {
    let ws = Workspace::new();
    let points = ws.generate("x.csv", &[]);
    let basis = ws.file("b.csv");
    let report = json_of(&osa(&["solve", "--input", path_str(&points), "--k", "2", "--alpha", "0.2", "--basis-out", path_str(&basis)]));
    let solved = report["result"]["trimmed_cost_k"].as_f64().unwrap();
    let eval = json_of(&osa(&["eval", "--input", path_str(&points), "--basis", path_str(&basis), "--alpha", "0.2"]));
    assert!(relative_gap(solved, eval["result"]["cost"].as_f64().unwrap()) <= 1e-9);
    assert_eq!(eval["result"]["inlier_indices"], report["result"]["inlier_indices"]);
    assert_eq!(eval["result"]["orthonormalized"], false);
    assert_eq!(report["manifest"]["input"]["n"], 80);
    assert_eq!(report["manifest"]["input"]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn round_trip_with_loss_and_affine_origin() {
    let ws = Workspace::new();
    let points = ws.generate("x.csv", &["--origin-scale", "4"]);
    let (basis, origin) = (ws.file("b.csv"), ws.file("o.csv"));
    let report = json_of(&osa(&[
        "solve", "--input", path_str(&points), "--k", "2", "--alpha", "0.2", "--affine", "--eta", "0.8",
        "--basis-out", path_str(&basis), "--origin-out", path_str(&origin),
    ]));
    assert_eq!(report["result"]["method"], "affine");
    let eval = json_of(&osa(&[
        "eval", "--input", path_str(&points), "--basis", path_str(&basis), "--origin", path_str(&origin), "--alpha", "0.2",
    ]));
    let (a, b) = (report["result"]["trimmed_cost_k"].as_f64().unwrap(), eval["result"]["cost"].as_f64().unwrap());
    assert!(relative_gap(a, b) <= 1e-9, "{a} vs {b}");

    let report = json_of(&osa(&[
        "solve", "--input", path_str(&points), "--k", "2", "--alpha", "0.2", "--loss", "huber:0.5", "--basis-out", path_str(&basis),
    ]));
    assert_eq!(report["result"]["mestimator"]["loss"], "huber:0.5");
    let eval = json_of(&osa(&[
        "eval", "--input", path_str(&points), "--basis", path_str(&basis), "--alpha", "0.2", "--loss", "huber:0.5",
    ]));
    let (a, b) = (report["result"]["trimmed_cost_k"].as_f64().unwrap(), eval["result"]["cost"].as_f64().unwrap());
    assert!(relative_gap(a, b) <= 1e-9, "{a} vs {b}");
}

#[test]
fn oracle_subspace_reproduces_its_cost() {
    let ws = Workspace::new();
    let points = ws.file("x.csv");
    json_of(&osa(&["gen", "--n", "12", "--d", "4", "--k", "1", "--alpha", "0.25", "--seed", "2", "--out", path_str(&points)]));
    let basis = ws.file("ob.csv");
    let oracle = json_of(&osa(&["oracle", "--input", path_str(&points), "--k", "1", "--alpha", "0.25", "--basis-out", path_str(&basis)]));
    assert_eq!(oracle["result"]["method"], "enumerate");
    assert_eq!(oracle["result"]["subsets_evaluated"], 220);
    let eval = json_of(&osa(&["eval", "--input", path_str(&points), "--basis", path_str(&basis), "--alpha", "0.25"]));
    let (a, b) = (oracle["result"]["best_cost"].as_f64().unwrap(), eval["result"]["cost"].as_f64().unwrap());
    assert!(relative_gap(a, b) <= 1e-9);

    let bb = json_of(&osa(&["oracle", "--input", path_str(&points), "--k", "1", "--alpha", "0.25", "--method", "branch-bound"]));
    assert!(relative_gap(a, bb["result"]["best_cost"].as_f64().unwrap()) <= 1e-9);
}

#[test]
fn identity_basis_costs_nothing_and_bad_bases_are_fixed() {
    let ws = Workspace::new();
    let points = ws.file("x.csv");
    fs::write(&points, "# a,b,c\n1,2,3\n-4,0.5,2\n7,7,-1\n").unwrap();
    let identity = ws.file("id.csv");
    fs::write(&identity, "1,0,0\n0,1,0\n0,0,1\n").unwrap();
    let eval = json_of(&osa(&["eval", "--input", path_str(&points), "--basis", path_str(&identity)]));
    assert_eq!(eval["result"]["cost"], 0.0);
    assert_eq!(eval["manifest"]["warnings"].as_array().unwrap().len(), 0);

    let skewed = ws.file("skew.csv");
    fs::write(&skewed, "2,0,0\n1,1,0\n").unwrap();
    let eval = json_of(&osa(&["eval", "--input", path_str(&points), "--basis", path_str(&skewed)]));
    assert_eq!(eval["result"]["orthonormalized"], true);
    assert_eq!(eval["result"]["k"], 2);
    assert_eq!(eval["result"]["cost"], 14.0);
    assert!(eval["manifest"]["warnings"][0].as_str().unwrap().contains("orthonormalized"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let points = ws.generate("x.csv", &[]);
    let p = path_str(&points);

    assert_eq!(osa(&["solve", "--k", "1"]).status.code(), Some(2));
    assert_eq!(osa(&["solve", "--input", p, "--k", "1", "--alpha", "1.5"]).status.code(), Some(2));
    assert_eq!(osa(&["solve", "--input", p, "--k", "1", "--loss", "cauchy:1"]).status.code(), Some(2));
    assert_eq!(osa(&["solve", "--input", p, "--k", "1", "--affine", "--loss", "lp:2"]).status.code(), Some(2));
    assert_eq!(osa(&["frobnicate"]).status.code(), Some(2));

    let missing = ws.file("missing.csv");
    assert_eq!(osa(&["solve", "--input", path_str(&missing), "--k", "1"]).status.code(), Some(3));
    let bad = ws.file("bad.csv");
    fs::write(&bad, "# header\n1,2\n3,4\n5,oops\n").unwrap();
    let out = osa(&["solve", "--input", path_str(&bad), "--k", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 4"));
    let ragged = ws.file("ragged.csv");
    fs::write(&ragged, "1,2\n3\n").unwrap();
    assert_eq!(osa(&["solve", "--input", path_str(&ragged), "--k", "1"]).status.code(), Some(3));

    assert_eq!(osa(&["solve", "--input", p, "--k", "2", "--alpha", "0.2", "--affine", "--eta", "0.1"]).status.code(), Some(4));
    assert_eq!(osa(&["oracle", "--input", p, "--k", "2", "--alpha", "0.2", "--method", "enumerate"]).status.code(), Some(4));
    let out = osa(&["oracle", "--input", p, "--k", "2", "--alpha", "0.2", "--method", "branch-bound", "--node-budget", "3"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn generation_is_reproducible() {
    let ws = Workspace::new();
    let a = ws.generate("a.csv", &["--outliers", "clustered:4"]);
    let b = ws.generate("b.csv", &["--outliers", "clustered:4"]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn bench_writes_ordered_long_format() {
    let ws = Workspace::new();
    let csv_path = ws.file("bench.csv");
    let run = || {
        json_of(&osa(&[
            "bench", "--n", "40", "--d", "5", "--k", "1,2", "--alpha", "0.05", "--epsilon", "0.3,0.5", "--trials", "2",
            "--out", path_str(&csv_path),
        ]));
        fs::read_to_string(&csv_path).unwrap()
    };
    let first = run();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "n,d,k,alpha,epsilon,delta,trial,cost,oracle_cost,ratio,ms,oracle_kind");
    assert_eq!(lines.len(), 1 + 2 * 2 * 2);
    assert!(lines[1].ends_with(",exact"));
    let keys: Vec<(String, String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[2].to_string(), f[4].to_string(), f[6].to_string())
        })
        .collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);

    // Everything but the timing column repeats exactly.
    let strip = |text: &str| -> Vec<String> {
        text.lines()
            .map(|l| l.split(',').enumerate().filter(|(i, _)| *i != 10).map(|(_, f)| f).collect::<Vec<_>>().join(","))
            .collect()
    };
    assert_eq!(strip(&first), strip(&run()));
}
