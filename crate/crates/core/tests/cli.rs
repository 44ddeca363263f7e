use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use zib_core::SimDesign;

fn zib(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zib")).args(args).env_remove("ZIB_SEED").output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let design = SimDesign::default_design(n, 99);
        std::fs::write(dir.path().join("design.json"), serde_json::to_string_pretty(&design).unwrap()).unwrap();
        let f = Fixture { dir };
        let out = zib(&[
            "simulate",
            "--config",
            s(&f.path("design.json")),
            "--out",
            s(&f.path("data.csv")),
            "--schema-out",
            s(&f.path("schema.json")),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        f
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

#[test]
fn fit_prints_table_and_writes_report() {
    let f = Fixture::new(500);
    let report = f.path("fit.json");
    let out = zib(&[
        "fit",
        "--data",
        s(&f.path("data.csv")),
        "--schema",
        s(&f.path("schema.json")),
        "--link-zero",
        "probit",
        "--link-count",
        "probit",
        "--level",
        "0.9",
        "--out",
        s(&report),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let table = String::from_utf8(out.stdout).unwrap();
    for word in ["estimate", "std.err", "ci.lower", "(intercept)", "x1", "w1"] {
        assert!(table.contains(word), "{table}");
    }
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["converged"], true);
    assert_eq!(v["std_errors"].as_array().unwrap().len(), 4);

    // Diagnose at the estimate reports a vanishing score.
    let theta = serde_json::to_string(&v["estimates"]).unwrap();
    let out = zib(&["diagnose", "--data", s(&f.path("data.csv")), "--schema", s(&f.path("schema.json")), "--theta", &theta]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let norm: f64 = text
        .lines()
        .find(|l| l.starts_with("score_norm"))
        .and_then(|l| l.split_whitespace().nth(1))
        .unwrap()
        .parse()
        .unwrap();
    assert!(norm < 1e-6, "{text}");
}

#[test]
fn inline_schema_and_input_errors() {
    let f = Fixture::new(200);
    let data = f.path("data.csv");
    let inline = r#"{"response_column":"y","trials_column":"n","zero_covariates":["x1"],"count_covariates":["w1"]}"#;
    assert_eq!(zib(&["fit", "--data", s(&data), "--schema", inline]).status.code(), Some(0));

    let out = zib(&["fit", "--data", s(&data), "--schema", inline, "--link-zero", "cloglog"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported link"));

    let missing = r#"{"response_column":"y","trials_column":"n","zero_covariates":["age"],"count_covariates":[]}"#;
    let out = zib(&["fit", "--data", s(&data), "--schema", missing]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("age"));

    assert_eq!(zib(&["fit", "--data", s(&data)]).status.code(), Some(1));
    assert_eq!(zib(&["fit", "--nonsense"]).status.code(), Some(1));
    assert_eq!(zib(&["--help"]).status.code(), Some(0));
}

#[test]
fn non_convergence_exits_two() {
    let f = Fixture::new(300);
    let data = f.path("data.csv");
    let schema = f.path("schema.json");
    // A single iteration is not enough from the default start.
    let cfg = zib_core::FitConfig { max_iterations: 1, ..Default::default() };
    let d = zib_core::io::read_csv(&data, &zib_core::io::read_json(&schema).unwrap()).unwrap().dataset;
    assert!(!zib_core::fit(&d, &cfg).unwrap().converged);
    // An all-zero response has no finite binomial-only estimate.
    std::fs::write(&data, "y,n,x1,w1\n0,3,0.1,0\n0,2,0.5,1\n0,4,-0.3,1\n0,5,0.9,0\n0,2,-0.8,1\n").unwrap();
    let out = zib(&["fit", "--data", s(&data), "--schema", s(&schema), "--binomial-only", "--out", s(&f.path("r.json"))]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(f.path("r.json")).unwrap()).unwrap();
    assert_eq!(v["converged"], false);
    assert!(v["std_errors"].is_null());
}

#[test]
fn simulate_is_reproducible() {
    let f = Fixture::new(150);
    let cfg = f.path("design.json");
    let run = |out: &str, seed: &str| {
        let o = zib(&["simulate", "--config", s(&cfg), "--out", s(&f.path(out)), "--seed", seed]);
        assert!(o.status.success());
        std::fs::read(f.path(out)).unwrap()
    };
    let a = run("a.csv", "5");
    assert_eq!(a, run("b.csv", "5"));
    assert_ne!(a, run("c.csv", "6"));
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next(), Some("y,n,x1,w1"));
    assert_eq!(text.lines().count(), 151);

    // Environment seed is used when neither flag nor config provides one.
    let mut design: SimDesign = serde_json::from_str(&std::fs::read_to_string(&cfg).unwrap()).unwrap();
    design.seed = None;
    std::fs::write(&cfg, serde_json::to_string(&design).unwrap()).unwrap();
    let env_run = |out: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_zib"))
            .args(["simulate", "--config", s(&cfg), "--out", s(&f.path(out))])
            .env("ZIB_SEED", "5")
            .output()
            .unwrap();
        assert!(o.status.success());
        std::fs::read(f.path(out)).unwrap()
    };
    assert_eq!(env_run("d.csv"), run("e.csv", "5"));

    design.n = 0;
    std::fs::write(&cfg, serde_json::to_string(&design).unwrap()).unwrap();
    assert_eq!(zib(&["simulate", "--config", s(&cfg), "--out", s(&f.path("z.csv"))]).status.code(), Some(1));
}

#[test]
fn mc_study_outputs_and_limits() {
    let f = Fixture::new(200);
    let cfg = f.path("design.json");
    let out = f.path("mc.json");
    assert_eq!(zib(&["mc-study", "--config", s(&cfg), "--reps", "1", "--out", s(&out)]).status.code(), Some(1));
    let o = zib(&["mc-study", "--config", s(&cfg), "--reps", "6", "--out", s(&out), "--threads", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let table = std::fs::read_to_string(f.path("mc.json.standardized.tsv")).unwrap();
    assert_eq!(table.lines().count(), 7);
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["replications"], 6);

    let mis = f.path("mis.json");
    let o = zib(&["mc-study", "--config", s(&cfg), "--reps", "4", "--out", s(&mis), "--alt-link-zero", "logit", "--alt-link-count", "logit"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mis).unwrap()).unwrap();
    assert_eq!(v["differences"].as_array().unwrap().len(), 4);
}

#[test]
fn diagnose_reports_rank_deficiency_and_identity() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    std::fs::write(&data, "y,n,a,b\n0,3,1,2\n1,2,2,4\n2,5,3,6\n1,4,0,0\n").unwrap();
    let schema = r#"{"response_column":"y","trials_column":"n","zero_covariates":["a","b"],"count_covariates":[]}"#;
    let out = zib(&["diagnose", "--data", s(&data), "--schema", schema, "--theta", "[0,0,0,0]"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('b'));

    // Logit links at zero with y = n = 1: both diagonal entries are 1/4, cross term 0.
    std::fs::write(&data, "y,n\n1,1\n").unwrap();
    let schema = r#"{"response_column":"y","trials_column":"n","zero_covariates":[],"count_covariates":[]}"#;
    let out = zib(&["diagnose", "--data", s(&data), "--schema", schema, "--theta", r#"{"beta":[0],"mu":[0]}"#, "--link-zero", "logit", "--link-count", "logit"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.split_whitespace().collect::<Vec<_>>() == ["ratio", "1"]), "{text}");
}
