use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn hypercd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypercd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn operators(xy: &str) -> String {
    format!(
        "operators = [\n  {{ psi = {xy} }},\n  {{ psi = {xy} }},\n  \
         {{ psi = [0.0, -1.0, 0.0, 0.0], xi = [1, 0, 2, 3] }},\n]\n"
    )
}

fn config(kind: &str, p: f64, operators: &str, beta: f64, extra: &str) -> String {
    format!(
        "schema_version = 1\nseed = 3\n\n[scenario]\nkind = \"{kind}\"\nr = 2\ns = 1\np = {p:?}\n\
         coord = 1\nt_coord = 0\n{operators}modes = [{{ beta = {beta:?}, kappa = 1.0 }}]\n\n\
         [grid]\nx_min = -1.0\nx_max = 1.0\nz_max = 11.0\nh = 0.1\ndt = 0.025\n\n\
         [refinement]\nlevels = 1\nmargin = 0.4\n{extra}"
    )
}

fn kdv_config() -> String {
    config("kdv", 1.0, &operators("[0.0, 1.0, 0.0, 0.0]"), 2.0, "")
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn run(path: &Path) -> Output {
    hypercd(&["run", path.to_str().unwrap()])
}

#[test]
fn run_writes_both_reports() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "kdv.toml", &kdv_config());
    let out = run(&path);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("out/residuals.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("equation_id,h,res_Linf,res_L2,tail,order_est,schema_version")
    );
    let ids: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(ids, ["kdv_kernel", "kdv_field", "kdv_hyperbolic"]);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",1")));

    let json: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(json["schema_version"], 1);
    assert_eq!(json["seed"], 3);
    assert_eq!(json["levels"].as_array().unwrap().len(), 1);
    let c = json["modes"][0]["c"].as_f64().unwrap();
    assert!((c - 8.0).abs() < 1e-12);
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "kdv.toml", &kdv_config());
    let csv = dir.path().join("out/residuals.csv");
    assert_eq!(code(&run(&path)), 0);
    let first = std::fs::read(&csv).unwrap();
    let single = Command::new(env!("CARGO_BIN_EXE_hypercd"))
        .args(["run", path.to_str().unwrap()])
        .env("HYPERCD_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&single), 0);
    assert_eq!(first, std::fs::read(&csv).unwrap());
}

#[test]
fn violated_constraint_exits_with_2() {
    let dir = TempDir::new().unwrap();
    // y-operator twice as strong as the x-operator: σ_x² ≠ σ_y² on F.
    let ops = "operators = [\n  { psi = [0.0, 1.0, 0.0, 0.0] },\n  { psi = [0.0, 2.0, 0.0, 0.0] },\n  \
               { psi = [0.0, -1.0, 0.0, 0.0], xi = [1, 0, 2, 3] },\n]\n";
    let path = write_config(&dir, "bad.toml", &config("kdv", 1.0, ops, 2.0, ""));
    let out = run(&path);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn singular_operator_exits_with_3() {
    // Classical mKdV with p = 1 and γ = Σ w_k β e^{−2z_k} = 2 on the
    // trapezoid ray from x = 0 to 11.
    let gamma_unit: f64 = (0..111)
        .map(|k| {
            let w = if k == 0 || k == 110 { 0.05 } else { 0.1 };
            w * (-0.2 * k as f64).exp()
        })
        .sum();
    let ops = "operators = [\n  { psi = [1.0, 0.0, 0.0, 0.0] },\n  { psi = [1.0, 0.0, 0.0, 0.0] },\n  \
               { psi = [1.0, 0.0, 0.0, 0.0] },\n]\n";
    let text = config("mkdv", 1.0, ops, 2.0 / gamma_unit, "")
        .replace("coord = 1", "coord = 0")
        .replace("dt = 0.025", "dt = 0.025\nrule = \"trapezoid\"\neps_tail = 1.0");
    let dir = TempDir::new().unwrap();
    let path = write_config(&dir, "pole.toml", &text);
    let out = run(&path);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn invalid_configurations_exit_with_4() {
    let dir = TempDir::new().unwrap();
    let real_part = config("kdv", 1.0, &operators("[0.5, 1.0, 0.0, 0.0]"), 2.0, "");
    let unknown_key = kdv_config().replace("levels = 1", "levels = 1\nsmoothing = 2");
    let short_ray = kdv_config().replace("z_max = 11.0", "z_max = 3.0");
    for (name, text) in [("real.toml", real_part), ("key.toml", unknown_key), ("ray.toml", short_ray)] {
        let out = run(&write_config(&dir, name, &text));
        assert_eq!(code(&out), 4, "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert_eq!(code(&run(&dir.path().join("missing.toml"))), 4);
}

#[test]
fn selftest_reports_pass_and_forced_failure() {
    let ok = hypercd(&["selftest", "--seed", "5"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let stdout = String::from_utf8_lossy(&ok.stdout);
    assert!(stdout.lines().any(|l| l.starts_with("ok  ")));
    assert!(!stdout.contains("FAIL"));

    let bad = hypercd(&["selftest", "--force-fail"]);
    assert_eq!(code(&bad), 1);
    assert!(String::from_utf8_lossy(&bad.stdout).contains("FAIL forced failure"));
}

#[test]
fn table_prints_quaternion_products() {
    let out = hypercd(&["table", "2"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8_lossy(&out.stdout);
    assert_eq!(text.lines().count(), 5, "{text}");
    let i1: Vec<&str> = text.lines().nth(2).unwrap().split_whitespace().collect();
    assert_eq!(i1, ["i1", "i1", "-i0", "i3", "-i2"]);
    assert_eq!(code(&hypercd(&["table", "9"])), 4);
}
