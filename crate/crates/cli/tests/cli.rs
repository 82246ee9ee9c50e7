use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = r#"
mode = "realizable"
predictor = "lp"
eps = 0.25
delta = 0.1
scale = 1e-4
trials = 3
seed = 11

[class]
kind = "thresholds"
count = 41

[marginal]
kind = "uniform"
lo = 0.0
hi = 1.0

[labels]
kind = "realizable"
truth = 20
"#;

fn confal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_confal")).args(args).output().unwrap()
}

fn setup(dir: &Path, text: &str) -> (String, String) {
    let cfg = dir.join("exp.toml");
    fs::write(&cfg, text).unwrap();
    (cfg.display().to_string(), dir.join("out").display().to_string())
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn run_writes_reports_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    let o = confal(&["run", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    assert!(csv.starts_with("# confal runs v1\ntrial,seed,"));
    assert_eq!(data_rows(&csv).len(), 3);
    for t in 0..3 {
        let json = fs::read_to_string(Path::new(&out).join(format!("trial_{t}.json"))).unwrap();
        assert!(json.contains("\"epochs\""));
    }

    let o = confal(&["replay", "--config", &cfg, "--out", &out]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("runs.csv: identical"));

    // Worker count does not change results.
    let out2 = dir.path().join("out2").display().to_string();
    let o = confal(&["run", "--config", &cfg, "--out", &out2, "--workers", "2"]);
    assert!(o.status.success());
    assert_eq!(csv, fs::read_to_string(Path::new(&out2).join("runs.csv")).unwrap());

    let tampered = csv.replacen(",ok,", ",ok,9", 1);
    fs::write(Path::new(&out).join("runs.csv"), tampered).unwrap();
    let o = confal(&["replay", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stdout).contains("runs.csv: differs"));
}

#[test]
fn seed_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    let a = dir.path().join("a").display().to_string();
    assert!(confal(&["run", "--config", &cfg, "--out", &out]).status.success());
    assert!(confal(&["run", "--config", &cfg, "--out", &a, "--seed", "12"]).status.success());
    let x = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    let y = fs::read_to_string(Path::new(&a).join("runs.csv")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn eps_one_gives_empty_schedule() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE.replace("eps = 0.25", "eps = 1.0").replace("trials = 3", "trials = 1");
    let (cfg, out) = setup(dir.path(), &text);
    let o = confal(&["run", "--config", &cfg, "--out", &out]);
    assert!(o.status.success());
    let csv = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 1);
    // total_labels and epochs
    assert_eq!(rows[0][6], "0");
    assert_eq!(rows[0][10], "0");
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), &BASE.replace("eps = 0.25\n", ""));
    let o = confal(&["run", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps"));

    let (cfg, out) = setup(dir.path(), &BASE.replace("seed = 11", "sed = 11"));
    let o = confal(&["run", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));

    let (cfg, out) = setup(dir.path(), &BASE.replace("truth = 20", "truth = 99"));
    assert_eq!(confal(&["run", "--config", &cfg, "--out", &out]).status.code(), Some(2));

    let o = confal(&["run", "--config", "/nonexistent/exp.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_failure_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // Full-size constants need far more unlabeled points than allowed.
    let (cfg, out) = setup(dir.path(), &BASE.replace("scale = 1e-4", "scale = 1.0"));
    let o = confal(&["run", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(1));
    let csv = fs::read_to_string(Path::new(&out).join("runs.csv")).unwrap();
    assert!(data_rows(&csv).iter().all(|r| r[4].starts_with("error")));
}

#[test]
fn theta_on_thresholds_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let text = BASE
        .replace("count = 41", "count = 201")
        .replace("truth = 20", "truth = 100")
        .replace("kind = \"uniform\"\nlo = 0.0\nhi = 1.0", "kind = \"grid\"\nlo = 0.0\nhi = 1.0\ncount = 201")
        + "\n[estimate]\nh_star = 100\nr = [0.05, 0.1, 0.2]\n";
    let (cfg, out) = setup(dir.path(), &text);
    let o = confal(&["estimate-theta", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(Path::new(&out).join("theta.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "quantity,r,eta,pool_size,value,stderr");
    let rows = data_rows(&csv);
    assert_eq!(rows.len(), 3);
    for r in rows {
        let v: f64 = r[4].parse().unwrap();
        assert!((v - 2.0).abs() < 0.05, "{v}");
    }
}

#[test]
fn phi_at_zero_radius_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[estimate]\nh_star = 20\nr = [0.0]\neta = [0.0, 0.05]\npool_size = 500\n");
    let (cfg, out) = setup(dir.path(), &text);
    let o = confal(&["estimate-phi", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = data_rows(&fs::read_to_string(Path::new(&out).join("phi.csv")).unwrap());
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[4] == "0"));
    assert!(confal(&["replay", "--config", &cfg, "--out", &out]).status.success());
}

#[test]
fn curve_cardinality() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!("{BASE}\n[curve]\neps = [0.5, 0.25, 0.125]\nstrategies = [\"lp\", \"dis\"]\ntrials = 5\n");
    let (cfg, out) = setup(dir.path(), &text);
    let o = confal(&["curve", "--config", &cfg, "--out", &out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(Path::new(&out).join("curve.csv")).unwrap();
    assert!(csv.starts_with("# confal curve v1\n"));
    assert_eq!(data_rows(&csv).len(), 6);
}

#[test]
fn replay_without_outputs_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, out) = setup(dir.path(), BASE);
    assert_eq!(confal(&["replay", "--config", &cfg, "--out", &out]).status.code(), Some(2));
}
