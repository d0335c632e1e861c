use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const T1: &str = r#"{"dim":2,"drift":[0.1,0.0],"cov":[[1.0,0.2],[0.2,0.5]],
  "atoms":[{"x":[0.5,0.5],"w":0.8},{"x":[1.5,-1.0],"w":0.4}]}"#;
const T_HALF: &str = "[[0.5,0.0],[0.0,0.5]]";
const T2: &str = r#"{"dim":2,"drift":[0.3,0.1],"cov":[[1.0,0.1],[0.1,0.5]],
  "atoms":[{"x":[0.25,0.25],"w":0.8},{"x":[0.75,-0.5],"w":0.5},{"x":[1.0,0.0],"w":0.3}]}"#;
const T2_BAD_JUMP: &str = r#"{"dim":2,"drift":[0.3,0.1],"cov":[[1.0,0.1],[0.1,0.5]],
  "atoms":[{"x":[0.25,0.25],"w":0.5}]}"#;
const SCENARIO: &str = r#"{"name":"file","T":[[0.5,0.0],[0.0,0.5]],
  "lambda1":{"dim":2,"drift":[0.1,0.0],"cov":[[1.0,0.2],[0.2,0.5]],"atoms":[{"x":[0.5,0.5],"w":0.8},{"x":[1.5,-1.0],"w":0.4}]},
  "rho":{"dim":2,"drift":[0.0,0.1],"cov":[[0.3,0.0],[0.0,0.2]],"atoms":[{"x":[1.0,0.0],"w":0.3}]}}"#;
const F_CUBIC: &str = r#"{"dim":2,"terms":[{"coef":1.0,"powers":[3,0]},{"coef":-0.5,"powers":[1,1]},{"coef":2.0,"powers":[0,2]}]}"#;

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self { dir: TempDir::new().unwrap() }
    }

    fn file(&self, name: &str, text: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn levykit(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_levykit"));
    c.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("APP_") {
            c.env_remove(k);
        }
    }
    c
}

fn run(args: &[&str]) -> Output {
    levykit(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not JSON ({e}); stderr: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn assert_schema_valid(v: &Value) {
    let schema: Value =
        serde_json::from_str(include_str!(concat!(env!("CARGO_MANIFEST_DIR"), "/../../schemas/report.schema.json"))).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(v).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "schema violations: {errors:?}");
}

fn check<'a>(v: &'a Value, name: &str) -> &'a Value {
    v["checks"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap_or_else(|| panic!("no check {name}"))
}

#[test]
fn rosinski_default_passes() {
    let out = run(&["rosinski"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_schema_valid(&v);
    assert_eq!(v["schema"], 1);
    assert_eq!(v["passed"], true);
    assert_eq!(v["config"]["horizon"], 60);
    assert_eq!(v["result"]["nu_3"]["9"], "-1/1");
    assert_eq!(v["result"]["nu_2"]["6"], "17/1");
    assert_eq!(v["result"]["z"]["label"], "NotID");
    assert_eq!(v["result"]["z"]["witness"], serde_json::json!([3, "-1/1"]));
    assert_eq!(v["result"]["x_plus_z"]["label"], "ID_up_to_60");
    let levy = v["result"]["x_plus_z"]["recovered_levy"].as_object().unwrap();
    let got: Vec<(&str, &str)> = levy.iter().map(|(k, q)| (k.as_str(), q.as_str().unwrap())).collect();
    assert_eq!(got, [("1", "2/1"), ("2", "2/1"), ("4", "2/1"), ("5", "2/1")]);
}

#[test]
fn rosinski_small_horizons() {
    let v = report(&run(&["rosinski", "--N", "10"]));
    assert_eq!(v["passed"], true);
    let mut sites: Vec<u64> = v["result"]["exp_measure"].as_object().unwrap().keys().map(|k| k.parse().unwrap()).collect();
    sites.sort();
    assert_eq!(sites, (0..=10).collect::<Vec<_>>());

    let out = run(&["rosinski", "--N", "0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_eq!(v["result"]["z"]["label"], "ID_up_to_0");
    assert_schema_valid(&v);
}

#[test]
fn env_overrides_and_flags_win() {
    let out = levykit(&["rosinski"]).env("APP_HORIZON", "7").env("APP_SEED", "99").output().unwrap();
    let v = report(&out);
    assert_eq!(v["config"]["horizon"], 7);
    assert_eq!(v["config"]["seed"], 99);

    let out = levykit(&["rosinski", "--N", "5"]).env("APP_HORIZON", "7").output().unwrap();
    assert_eq!(report(&out)["config"]["horizon"], 5);
}

#[test]
fn invalid_config_is_input_error() {
    assert_eq!(run(&["rosinski", "--n", "0"]).status.code(), Some(2));
    assert_eq!(run(&["rosinski", "--ecf-tol", "-1"]).status.code(), Some(2));
    assert_eq!(run(&["rosinski", "--workers", "0"]).status.code(), Some(2));
}

#[test]
fn out_flag_writes_report_file() {
    let ws = Workspace::new();
    let path = ws.path("r.json");
    let out = run(&["rosinski", "--N", "12", "--out", p(&path)]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["config"]["horizon"], 12);
}

#[test]
fn skew_round_trip_and_identity() {
    let ws = Workspace::new();
    let (t, t1, t2) = (ws.file("T.json", T_HALF), ws.file("t1.json", T1), ws.file("t2.json", T2));
    let out = run(&["skew", "--T", p(&t), "--t1", p(&t1), "--t2", p(&t2)]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_schema_valid(&v);
    let rho = &v["result"]["rho"];
    assert_eq!(rho["atoms"].as_array().unwrap().len(), 2);
    let drift: Vec<f64> = rho["drift"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    // the atom at (1.5, −1) is large but its image is small, so its image moves into the drift
    let expected = [0.3 - (0.05 + 0.4 * 0.75), 0.1 - (0.0 - 0.4 * 0.5)];
    assert!(drift.iter().zip(expected).all(|(a, b)| (a - b).abs() < 1e-12), "{drift:?}");

    let id = ws.file("I.json", r#"{"T":[[1.0,0.0],[0.0,1.0]]}"#);
    let v = report(&run(&["skew", "--T", p(&id), "--t1", p(&t1), "--t2", p(&t1)]));
    assert_eq!(v["passed"], true);
    assert!(v["result"]["rho"]["atoms"].as_array().unwrap().is_empty());
}

#[test]
fn skew_failure_reports_witness() {
    let ws = Workspace::new();
    let (t, t1, bad) = (ws.file("T.json", T_HALF), ws.file("t1.json", T1), ws.file("bad.json", T2_BAD_JUMP));
    let out = run(&["skew", "--T", p(&t), "--t1", p(&t1), "--t2", p(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let v = report(&out);
    assert_schema_valid(&v);
    assert_eq!(v["passed"], false);
    let w = &v["result"]["witness"];
    assert_eq!(w["kind"], "jump");
    assert_eq!(w["point"], serde_json::json!([0.75, -0.5]));
    assert!((w["weight"].as_f64().unwrap() + 0.4).abs() < 1e-12);
    assert!(String::from_utf8_lossy(&out.stderr).contains("FAIL skew factor exists"));

    let gauss_bad = ws.file("g.json", r#"{"dim":2,"drift":[0,0],"cov":[[0.1,0],[0,0.5]],"atoms":[]}"#);
    let v = report(&run(&["skew", "--T", p(&t), "--t1", p(&t1), "--t2", p(&gauss_bad)]));
    assert_eq!(v["result"]["witness"]["kind"], "gaussian");
}

#[test]
fn idtest_verdicts() {
    let ws = Workspace::new();
    // Poisson(1) truncated at 30: Lévy measure δ1
    let mut coeffs = serde_json::Map::new();
    let mut fact: u128 = 1;
    for k in 0..=30u64 {
        if k > 0 {
            fact *= k as u128;
        }
        coeffs.insert(k.to_string(), Value::String(format!("1/{fact}")));
    }
    let poisson = ws.file("poisson.json", &serde_json::json!({ "coeffs": coeffs }).to_string());
    let out = run(&["idtest", "--measure", p(&poisson), "--N", "30", "--expect", "id"]);
    assert_eq!(out.status.code(), Some(0));
    let v = report(&out);
    assert_schema_valid(&v);
    assert_eq!(v["result"]["recovered_levy"], serde_json::json!({"1": "1/1"}));

    let bernoulli = ws.file("b.json", r#"{"coeffs":{"0":"1/2","1":"1/2"}}"#);
    assert_eq!(run(&["idtest", "--measure", p(&bernoulli), "--N", "10", "--expect", "notid"]).status.code(), Some(0));
    assert_eq!(run(&["idtest", "--measure", p(&bernoulli), "--N", "10", "--expect", "id"]).status.code(), Some(1));
}

#[test]
fn idtest_bad_input_is_exit_two() {
    let ws = Workspace::new();
    let missing = ws.path("missing.json");
    let out = run(&["idtest", "--measure", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    let junk = ws.file("junk.json", r#"{"coeffs":{"0":"one half"}}"#);
    assert_eq!(run(&["idtest", "--measure", p(&junk)]).status.code(), Some(2));
    let no_zero = ws.file("nz.json", r#"{"coeffs":{"1":"1/1"}}"#);
    assert_eq!(run(&["idtest", "--measure", p(&no_zero)]).status.code(), Some(2));
}

#[test]
fn sample_writes_csv_and_is_reproducible() {
    let ws = Workspace::new();
    let t1 = ws.file("t1.json", T1);
    let (a, b) = (ws.path("a.csv"), ws.path("b.csv"));
    let out = run(&["sample", "--triplet", p(&t1), "--n", "50000", "--seed", "7", "--out", p(&a)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(&out);
    assert_schema_valid(&v);
    assert!(v["result"]["ecf_sup_distance"].as_f64().unwrap() <= 0.01);
    run(&["sample", "--triplet", p(&t1), "--n", "50000", "--seed", "7", "--out", p(&b)]);
    let (ta, tb) = (std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(ta, tb);

    let mut rdr = csv::Reader::from_path(&a).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["x0", "x1"]);
    let rows: Vec<Vec<f64>> =
        rdr.records().map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 50000);
    let mean0 = rows.iter().map(|r| r[0]).sum::<f64>() / rows.len() as f64;
    // E X = ξ + Σ w x [‖x‖ > 1]: only the atom at (1.5, −1) is large
    assert!((mean0 - (0.1 + 0.4 * 1.5)).abs() < 0.05, "{mean0}");

    let c = ws.path("c.csv");
    run(&["sample", "--triplet", p(&t1), "--n", "50000", "--seed", "8", "--out", p(&c)]);
    assert_ne!(std::fs::read(&c).unwrap(), ta);
}

#[test]
fn diagram_check_file_scenario() {
    let ws = Workspace::new();
    let (s, f) = (ws.file("s.json", SCENARIO), ws.file("f.json", F_CUBIC));
    let blocks = ws.path("blocks");
    let coeffs = ws.path("coeffs.json");
    let out = run(&[
        "diagram-check",
        "--scenario",
        p(&s),
        "--f",
        p(&f),
        "--blocks-csv",
        p(&blocks),
        "--coeffs-out",
        p(&coeffs),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = report(&out);
    assert_schema_valid(&v);
    assert_eq!(v["config"]["horizon"], 3);
    assert!(v["result"]["diagram"]["coefficient_max_abs_diff"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["result"]["commute"].as_array().unwrap().len(), 4);

    let g = std::fs::read_to_string(blocks.join("gaussian_block.csv")).unwrap();
    assert_eq!(g.lines().count(), 2);
    let pb = std::fs::read_to_string(blocks.join("poisson_block.csv")).unwrap();
    assert_eq!(pb.lines().count(), 2);
    assert_eq!(pb.lines().next().unwrap().split(',').count(), 3);

    let c: Value = serde_json::from_str(&std::fs::read_to_string(&coeffs).unwrap()).unwrap();
    assert_eq!(c["m"], 3);
    assert!(c["blocks"].as_object().unwrap().contains_key("3/0/3"));
}

#[test]
fn verify_alias_and_builtins() {
    for name in ["identity", "mehler", "rank-deficient"] {
        let out = run(&["verify", "--builtin", name]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let v = report(&out);
        assert_eq!(v["command"], "diagram-check");
        assert_schema_valid(&v);
    }
    assert_eq!(run(&["verify"]).status.code(), Some(2));
}

#[test]
fn diagram_mismatched_f_is_input_error() {
    let ws = Workspace::new();
    let f = ws.file("f.json", r#"{"dim":3,"terms":[{"coef":1.0,"powers":[1,0,0]}]}"#);
    assert_eq!(run(&["verify", "--builtin", "identity", "--f", p(&f)]).status.code(), Some(2));
}

#[test]
fn mc_reports_are_bit_identical() {
    let args = ["verify", "--builtin", "mehler", "--mode", "mc", "--n", "20000", "--seed", "3", "--ecf-tol", "0.05"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let v = report(&a);
    assert_schema_valid(&v);
    let side = &v["result"]["diagram"]["sides"][0]["distribution"];
    assert_eq!(side["partial"], true);
    assert_eq!(side["moments"].as_array().unwrap().len(), 4);
    assert_eq!(check(&v, "coefficient diagram")["passed"], true);

    let c = run(&["verify", "--builtin", "mehler", "--mode", "mc", "--n", "20000", "--seed", "4", "--ecf-tol", "0.05"]);
    assert_ne!(a.stdout, c.stdout);
}
