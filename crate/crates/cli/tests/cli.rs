use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn hecke(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hecke")).args(args).arg("--out").arg(out).output().expect("binary runs")
}

fn summary(out: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

const SMALL_GRID: &str = r#"{"n": 8, "radius": 6.0, "ladder": [8], "steps": 8,
    "plan": {"gl": 4, "inner_levels": 3, "n_theta": 16, "pu_power": 4, "ratio": 2.0, "ring_breaks": false}}"#;

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_jets_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hecke(&["verify", "jets"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let s = summary(dir.path());
    assert_eq!(s["passed"], true);
    assert_eq!(s["command"], "verify");
    assert!(s["gates"].as_array().unwrap().iter().all(|g| g["pass"] == true));
}

#[test]
fn suite_flag_selects_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = hecke(&["verify", "--suite", "jets"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(summary(dir.path())["criteria"][0]["criterion"], 1);
}

#[test]
fn invalid_configs_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    for (i, body) in [r#"{"x": [0.5, "#, r#"{"bogus": 1}"#, r#"{"x": [0.0, 0.0]}"#, r#"{"k": 0}"#, r#"{"classical": [{"t": [2, 1], "chi": [[0, 0.5]]}]}"#]
        .iter()
        .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        let o = hecke(&["verify", "jets", "--config", &cfg], dir.path());
        assert_eq!(o.status.code(), Some(2), "{body}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = hecke(&["verify", "nonexistent"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = hecke(&["verify", "jets", "--config", "/nonexistent/config.json"], dir.path());
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn spectrum_csv_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(r#"{{"grid": {SMALL_GRID}, "x_path": [[-0.6, 0.9], [-0.55, 0.95]], "k": 3}}"#);
    let cfg = write_config(dir.path(), "small.json", &body);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let oa = hecke(&["spectrum", "--config", &cfg, "--seed", "5", "--threads", "1"], &a);
    let ob = hecke(&["spectrum", "--config", &cfg, "--seed", "5", "--threads", "2"], &b);
    assert!(matches!(oa.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&oa.stderr));
    assert_eq!(oa.status.code(), ob.status.code());
    let ca = fs::read(a.join("spectrum.csv")).unwrap();
    assert_eq!(ca, fs::read(b.join("spectrum.csv")).unwrap());
    let text = String::from_utf8(ca).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,x_re,x_im,beta,residual"));
    assert_eq!(lines.count(), 6);
    assert_eq!(summary(&a)["seed"], 5);
}

#[test]
fn limit_study_writes_ladder() {
    let dir = tempfile::tempdir().unwrap();
    let body = r#"{"collision": {"t0": [-1.5, 0.5], "a": [[0.0, 0.7]], "a_long": [[0.0, 0.6], [0.0, -0.4]], "others": [],
        "deltas": [0.2, 0.1], "x": [0.6, 1.1], "samples": 3, "tol": 0.05}}"#;
    let cfg = write_config(dir.path(), "limit.json", body);
    let o = hecke(&["limit-study", "--config", &cfg], dir.path());
    assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(dir.path().join("limit_study.csv")).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "delta,distance,max_pointwise_error");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("0.2,"));
    let o = hecke(&["limit-study", "--config", &cfg, "--suite", "four_point"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
