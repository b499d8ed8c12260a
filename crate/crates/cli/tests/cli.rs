use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::TempDir;

const KDV: &str = r#"{
  "nonlinearity": {"kind": "power", "coef": 0.5, "exponent": 2},
  "a": 0.0, "E": -0.05, "c": 1.0, "sigma": 1
}"#;

const MKDV_CNOIDAL: &str = r#"{
  "nonlinearity": {"kind": "power", "coef": 0.3333333333333333, "exponent": 3},
  "a": 0.0, "E": 0.5, "c": 1.0, "sigma": -1
}"#;

const MKDV_DNOIDAL: &str = r#"{
  "nonlinearity": {"kind": "power", "coef": 0.3333333333333333, "exponent": 3},
  "a": 0.0, "E": -0.5, "c": 1.0, "sigma": 1, "well": [0.5, 2.0]
}"#;

struct Run {
    dir: TempDir,
    out: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.out.status.code().expect("terminated by signal")
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join("out").join(name)
    }

    fn read(&self, name: &str) -> String {
        std::fs::read_to_string(self.path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
    }

    fn json(&self, name: &str) -> Value {
        serde_json::from_str(&self.read(name)).unwrap()
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.out.stderr).into_owned()
    }
}

fn run(cmd: &str, config: &str, extra: &[&str]) -> Run {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_transverse"))
        .arg(cmd)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(extra)
        .output()
        .unwrap();
    Run { dir, out }
}

/// Inserts `extra` (a JSON fragment of extra keys) into a config object.
fn with(config: &str, extra: &str) -> String {
    let end = config.rfind('}').unwrap();
    format!("{}, {}}}", &config[..end], extra)
}

fn sigma(config: &str, s: i32) -> String {
    config.replace("\"sigma\": 1", &format!("\"sigma\": {s}")).replace("\"sigma\": -1", &format!("\"sigma\": {s}"))
}

#[test]
fn profile_csv_has_header_and_n_plus_one_rows() {
    let r = run("profile", &with(KDV, r#""samples": 128"#), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.read("profile.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x,u,ux");
    assert_eq!(lines.len(), 1 + 129);
    assert!(!csv.contains('\r'));
    let summary = r.json("profile.json");
    let t = summary["period"].as_f64().unwrap();
    assert_eq!(summary["invariants"]["T"].as_f64().unwrap(), t);
    let last: Vec<f64> = lines[129].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((last[0] - t).abs() < 1e-12 * t);
}

#[test]
fn outputs_are_byte_stable() {
    let a = run("profile", KDV, &[]);
    let b = run("profile", KDV, &["--threads", "2"]);
    assert_eq!(a.read("profile.csv"), b.read("profile.csv"));
    assert_eq!(a.read("profile.json"), b.read("profile.json"));
}

#[test]
fn separatrix_energy_is_a_numerical_failure() {
    let r = run("profile", &KDV.replace("-0.05", "0.0"), &[]);
    assert_eq!(r.code(), 3);
    assert!(r.stderr().contains("degenerate turning point"), "{}", r.stderr());
}

#[test]
fn missing_or_unknown_keys_are_input_errors() {
    let r = run("profile", &KDV.replace(r#""c": 1.0, "#, ""), &[]);
    assert_eq!(r.code(), 2, "{}", r.stderr());
    assert!(r.stderr().contains("missing field `c`"));
    assert_eq!(run("profile", &with(KDV, r#""speed": 1"#), &[]).code(), 2);
    assert_eq!(run("profile", &sigma(KDV, 0), &[]).code(), 2);
    assert_eq!(run("profile", KDV, &["--tol-scale", "-1"]).code(), 2);
}

#[test]
fn index_exit_codes() {
    let r = run("index", KDV, &[]);
    assert_eq!(r.code(), 10, "{}", r.stderr());
    assert_eq!(r.json("index.json")["verdict"]["conclusion"], "UnstableDetected");
    let r = run("index", &sigma(KDV, -1), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    assert_eq!(r.json("index.json")["verdict"]["conclusion"], "IndexInconclusive");
    assert_eq!(run("index", MKDV_CNOIDAL, &[]).code(), 10);
    assert_eq!(run("index", MKDV_DNOIDAL, &[]).code(), 10);
}

#[test]
fn scan_rows_and_refined_root() {
    let cfg = with(KDV, r#""scan": {"mu_grid": {"start": 0.02, "stop": 1.0, "count": 50}, "k": [0.1]}"#);
    let r = run("scan", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.read("scan_k0.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "mu,k,re_D,im_D,log_scale,sign");
    assert_eq!(lines.len(), 51);
    let report = r.json("scan.json");
    let roots = report["scans"][0]["roots"].as_array().unwrap();
    let root = roots.iter().find(|r| r["mu_star"].as_f64().unwrap() > 0.0).expect("no positive root");
    assert!(root["width"].as_f64().unwrap() <= 1e-6);
    assert!((root["mu_star"].as_f64().unwrap() - 0.048731).abs() < 1e-5);
    assert_eq!(report["scans"][0]["unstable"], true);
}

#[test]
fn scan_asymptotic_reports() {
    let cfg = with(KDV, r#""scan": {"high_freq": {"k": [0.5], "mu": [50.0, 100.0, 200.0]}, "low_freq": {}}"#);
    let r = run("scan", &cfg, &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let report = r.json("scan.json");
    assert_eq!(report["high_freq"][0]["verdict"], 1);
    assert!(report["low_freq"]["relative_error"].as_f64().unwrap() < 5e-3);
    assert_eq!(r.read("high_freq_k0.csv").lines().count(), 4);
    assert_eq!(r.read("low_freq.csv").lines().count(), 6);
}

#[test]
fn scan_guards() {
    let r = run("scan", &with(KDV, r#""scan": {"high_freq": {"k": [0.0]}}"#), &[]);
    assert_eq!(r.code(), 2, "{}", r.stderr());
    assert_eq!(run("scan", KDV, &[]).code(), 2);
    let r = run("scan", &with(KDV, r#""scan": {"high_freq": {"k": [0.5], "mu": [50.0, 100.0, 400.0]}}"#), &[]);
    assert_eq!(r.code(), 2, "{}", r.stderr());
}

#[test]
fn invariants_with_sweep() {
    let r = run("invariants", &with(KDV, r#""sweep": [[0.0, -0.05, 1.0], [0.1, 0.0, 1.2]]"#), &[]);
    assert_eq!(r.code(), 0, "{}", r.stderr());
    let csv = r.read("sweep.csv");
    assert_eq!(csv.lines().next().unwrap(), "a,E,c,T,M,P,H,jacobian_TM");
    assert_eq!(csv.lines().count(), 3);
    let report = r.json("invariants.json");
    assert_eq!(report["sweep"][0]["T"], report["invariants"]["T"]);
    assert!(report["jensen_gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn verify_passes_by_default_and_fails_when_tightened() {
    let r = run("verify", KDV, &[]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stdout));
    let report = r.json("verify.json");
    assert_eq!(report["failed"], 0);
    assert_eq!(report["sign_table"]["index"], "UnstableDetected");

    let r = run("verify", KDV, &["--tol-scale", "1e-3"]);
    assert_eq!(r.code(), 5, "{}", r.stderr());
    let report = r.json("verify.json");
    let failed: Vec<&str> = report["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["pass"] == false)
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert!(!failed.is_empty());
}

#[test]
fn verify_sign_table_for_dnoidal_wave() {
    let r = run("verify", MKDV_DNOIDAL, &[]);
    assert_eq!(r.code(), 0, "{}", String::from_utf8_lossy(&r.out.stdout));
    let table = &r.json("verify.json")["sign_table"];
    assert_eq!(table["index"], "UnstableDetected");
    assert_eq!(table["high_freq_sign"], 1);
    assert!(table["scan_root"].as_f64().unwrap() > 0.0);
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["kdv.json", "mkdv_dnoidal.json", "mkdv_cnoidal.json"] {
        let text = std::fs::read_to_string(root.join(name)).unwrap();
        let r = run("profile", &text, &[]);
        assert_eq!(r.code(), 0, "{name}: {}", r.stderr());
    }
}
