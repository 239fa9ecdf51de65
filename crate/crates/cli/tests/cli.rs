use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn urnlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_urnlab"))
        .args(args)
        .env("URNLAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn schema(name: &str) -> jsonschema::JSONSchema {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("schemas").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    let value: Value = serde_json::from_str(&text).unwrap();
    jsonschema::JSONSchema::compile(&value).expect("schema compiles")
}

fn assert_schema(name: &str, out: &[u8]) -> Value {
    let value: Value = serde_json::from_slice(out).expect("valid JSON");
    let s = schema(name);
    if let Err(errors) = s.validate(&value) {
        let msgs: Vec<String> = errors.map(|e| format!("{} at {}", e, e.instance_path)).collect();
        panic!("{name}: {msgs:#?}");
    }
    value
}

fn write_spec(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn presets_round_trip_through_the_spec_schema() {
    for name in urnlab::presets::NAMES {
        let out = urnlab(&["preset", name]);
        assert!(out.status.success());
        assert_schema("urn_spec.schema.json", &out.stdout);
        let spec = urnlab::UrnSpec::from_json(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        assert_eq!(spec, urnlab::presets::by_name(name).unwrap());
    }
}

#[test]
fn validate_reports_and_exit_codes() {
    let out = urnlab(&["validate", "--preset", "small"]);
    assert_eq!(out.status.code(), Some(0));
    let v = assert_schema("validation_report.schema.json", &out.stdout);
    assert_eq!(v["ok"], true);

    let dir = tempfile::tempdir().unwrap();
    let bad = write_spec(
        dir.path(),
        "bad.json",
        r#"{"k":2,"s":1,"core":[[1,0],[0,2]],"x0":[1,1]}"#,
    );
    let out = urnlab(&["validate", "--spec", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let v = assert_schema("validation_report.schema.json", &out.stdout);
    assert_eq!(v["ok"], false);
    assert_eq!(v["violations"][0]["rule"], "balance");

    // other commands refuse an invalid model
    let out = urnlab(&["classify", "--spec", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn io_and_model_errors() {
    let out = urnlab(&["expand", "--spec", "/definitely/not/here.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());

    let dir = tempfile::tempdir().unwrap();
    let garbage = write_spec(dir.path(), "g.json", "{ not json");
    assert_eq!(
        urnlab(&["classify", "--spec", garbage.to_str().unwrap()]).status.code(),
        Some(2)
    );

    let out = urnlab(&["asymptotics", "--preset", "table"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(urnlab(&["classify", "--preset", "nope"]).status.code(), Some(2));
}

#[test]
fn expand_reproduces_the_ten_row_table() {
    let out = urnlab(&["expand", "--preset", "table"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let expected = "\
sample,color_1,color_2,color_3
300,3,3,3
210,4,2,3
201,2,2,5
120,5,1,3
111,3,1,5
102,1,1,7
030,6,0,3
021,4,0,5
012,2,0,7
003,0,0,9
";
    assert_eq!(text, expected);
}

#[test]
fn classify_outputs() {
    let out = urnlab(&["classify", "--preset", "large"]);
    let v = assert_schema("spectrum_report.schema.json", &out.stdout);
    assert_eq!(v["regime"], "large");
    let out = urnlab(&["classify", "--preset", "critical"]);
    let v = assert_schema("spectrum_report.schema.json", &out.stdout);
    assert_eq!(v["regime"], "critical");
    let out = urnlab(&["classify", "--preset", "defective"]);
    let v = assert_schema("spectrum_report.schema.json", &out.stdout);
    assert_eq!(v["regime"], "small");
    assert_eq!(v["nu2"], 2);
    let out = urnlab(&["classify", "--preset", "table"]);
    let v = assert_schema("spectrum_report.schema.json", &out.stdout);
    assert!(v["v1"].is_null());
}

#[test]
fn asymptotics_outputs() {
    for name in ["small", "defective", "critical", "large"] {
        let out = urnlab(&["asymptotics", "--preset", name]);
        assert!(out.status.success(), "{name}");
        let v = assert_schema("asymptotic_summary.schema.json", &out.stdout);
        let applicable = name != "large";
        assert_eq!(v["sigma_inf"].is_null(), !applicable);
        assert_eq!(
            v["limit_status"],
            if applicable { "computed" } else { "not applicable" }
        );
    }
}

#[test]
fn moments_csv_round_trips() {
    let out = urnlab(&["moments", "--preset", "small", "--n", "50", "--every", "7"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,mu_1,mu_2,mu_3,sigma_1_1,sigma_1_2,sigma_1_3,sigma_2_2,sigma_2_3,sigma_3_3"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    let steps: Vec<u64> = rows.iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(steps, vec![0, 7, 14, 21, 28, 35, 42, 49, 50]);
    let spec = urnlab::presets::small_diagonalizable();
    let last = &rows[rows.len() - 1];
    let mu = urnlab::moments::exact_mean(&spec, 50);
    let sigma = urnlab::moments::exact_cov(&spec, 50);
    for j in 0..3 {
        assert_eq!(last[1 + j].parse::<f64>().unwrap(), mu[j]);
    }
    assert_eq!(last[4].parse::<f64>().unwrap(), sigma[(0, 0)]);
    assert_eq!(last[9].parse::<f64>().unwrap(), sigma[(2, 2)]);
    assert!(last[1].contains('e') && !last[1].contains(' '));
}

#[test]
fn simulate_is_deterministic_and_schema_valid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("states.csv");
    let args = [
        "simulate",
        "--preset",
        "small",
        "--n",
        "100",
        "--reps",
        "50",
        "--seed",
        "9",
        "--record-y",
    ];
    let a = urnlab(&[&args[..], &["--csv", csv.to_str().unwrap()]].concat());
    assert!(a.status.success());
    let v = assert_schema("simulation_summary.schema.json", &a.stdout);
    assert_eq!(v["y_diagnostics"]["annihilation_exact"], true);
    let total: i64 = v["sum_x"].as_array().unwrap().iter().map(|x| x.as_i64().unwrap()).sum();
    assert_eq!(total, 50 * urnlab::presets::small_diagonalizable().tau(100));

    let states = std::fs::read_to_string(&csv).unwrap();
    assert!(states.starts_with("rep,x_1,x_2,x_3\n0,"));
    assert_eq!(states.lines().count(), 51);

    // thread count must not change the output
    let b = Command::new(env!("CARGO_BIN_EXE_urnlab"))
        .args(args)
        .env("URNLAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(a.stdout, b.stdout);

    let out = urnlab(&[
        "simulate",
        "--preset",
        "large",
        "--n",
        "20",
        "--reps",
        "10",
        "--mode",
        "with_replacement",
    ]);
    let v = assert_schema("simulation_summary.schema.json", &out.stdout);
    assert_eq!(v["mode"], "with_replacement");
}

#[test]
fn verify_passes_and_fails_by_threshold() {
    // moment bounds sized for this short horizon; the defaults target n = reps = 1e4
    let out = urnlab(&[
        "verify",
        "--preset",
        "small",
        "--n",
        "200",
        "--reps",
        "2000",
        "--seed",
        "4",
        "--skew-max",
        "0.4",
        "--kurtosis-max",
        "0.8",
    ]);
    let v = assert_schema("compare_report.schema.json", &out.stdout);
    assert_eq!(out.status.code(), Some(0), "{v:#}");
    assert_eq!(v["passed"], true);

    let out = urnlab(&["verify", "--preset", "large", "--n", "100", "--reps", "500"]);
    let v = assert_schema("compare_report.schema.json", &out.stdout);
    assert_eq!(v["limit"]["applicable"], false);

    // an impossible z threshold forces a failed verification
    let out = urnlab(&[
        "verify", "--preset", "small", "--n", "50", "--reps", "200", "--z-max", "0",
    ]);
    assert_eq!(out.status.code(), Some(5));
    assert_schema("compare_report.schema.json", &out.stdout);
}

#[test]
fn reruns_are_byte_identical() {
    for args in [
        vec!["classify", "--preset", "critical"],
        vec!["asymptotics", "--preset", "small"],
        vec!["moments", "--preset", "defective", "--n", "30"],
    ] {
        assert_eq!(urnlab(&args).stdout, urnlab(&args).stdout);
    }
}
