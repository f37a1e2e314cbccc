use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn sqmle(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqmle")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn constants_prints_csv() {
    let o = sqmle(&["constants", "--beta", "1.5"]);
    assert_eq!(o.status.code(), Some(0));
    let line = String::from_utf8(o.stdout).unwrap();
    let parts: Vec<f64> = line.trim().split(',').map(|p| p.parse().unwrap()).collect();
    assert_eq!(parts[0], 1.5);
    assert!((parts[1] - 0.4281).abs() < 5e-3 && (parts[2] - 0.9556).abs() < 5e-3);
    assert_eq!(sqmle(&["constants", "--beta", "2"]).status.code(), Some(1));
}

#[test]
fn missing_config_is_a_usage_error_naming_the_path() {
    let o = sqmle(&["simulate", "--config", "/no/such/dir/run.toml", "--out", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/dir/run.toml"));
}

#[test]
fn unknown_override_key_is_named() {
    let o = sqmle(&["mc", "--preset", "nig-1d", "--out", "unused", "--set", "experiment.replicatez=2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("replicatez"));
}

#[test]
fn fit_reports_model_violations() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("s.csv");
    fs::write(&data, "t,x\n0,-1\n0.1,-0.5\n0.2,-2\n0.3,-1\n").unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(&cfg, "[model]\ndrift = \"alpha1\"\nscale = \"gamma1*x\"\nbounds = [[-1, 1], [0.5, 2]]\n[estimation]\nbeta = 1.0\n").unwrap();
    let o = sqmle(&["fit", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("model violation"), "{}", stderr(&o));
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap()).map(|e| (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())).collect();
    v.sort();
    v
}

#[test]
fn simulate_then_fit_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, seed: &str| {
        let out = dir.path().join(sub);
        fs::create_dir_all(&out).unwrap();
        let series = out.join("s.csv");
        let o = sqmle(&["simulate", "--preset", "stable15-1d", "--seed", seed, "--design", "2", "--out", series.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let fit = out.join("fit.json");
        let o = sqmle(&["fit", "--preset", "stable15-1d", "--seed", seed, "--data", series.to_str().unwrap(), "--out", fit.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        files(&out)
    };
    let (a, b, c) = (run("a", "5"), run("b", "5"), run("c", "6"));
    assert_eq!(a, b);
    assert_ne!(a, c);
    let names: Vec<&str> = a.iter().map(|f| f.0.as_str()).collect();
    assert_eq!(names, ["fit.json", "s.csv", "s.json"]);
    let fit: serde_json::Value = serde_json::from_slice(&a[0].1).unwrap();
    assert_eq!(fit["n"], 500);
    let gamma = fit["fit"]["theta_hat"]["gamma"][0].as_f64().unwrap();
    assert!((gamma - 1.5).abs() < 0.5, "{gamma}");
    assert_eq!(fit["report"]["z_alpha"].as_array().unwrap().len(), 1);
}

#[test]
fn mc_and_llt_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let mc = dir.path().join("mc");
    let o = sqmle(&[
        "mc", "--preset", "stable15-1d", "--replicates", "2", "--workers", "1", "--out", mc.to_str().unwrap(),
        "--set", "simulation.designs=[{horizon=5.0,n=50,fine_factor=2}]",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(mc.join("replicates.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("rep,design,alpha1_hat,gamma1_hat,z_alpha1,z_gamma1,"));

    let cfg = dir.path().join("llt.toml");
    fs::write(&cfg, "[llt]\ncf = { kind = \"gh_nig\", gh_lambda = -0.5, gh_eta = 5.0 }\nh_values = [0.5, 0.2, 0.05, 0.005]\ngrid = { half_width = 20.0, spacing = 0.02 }\n").unwrap();
    let out = dir.path().join("llt");
    let o = sqmle(&["llt", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rows = fs::read_to_string(out.join("llt.csv")).unwrap();
    assert_eq!(rows.lines().next(), Some("h,l1"));
    assert_eq!(rows.lines().count(), 5);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("llt.json")).unwrap()).unwrap();
    assert!(report["fit"]["slope"].as_f64().unwrap() > 0.5);
}

#[test]
fn mc_exits_3_when_replicates_fail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    fs::write(
        &cfg,
        "[model]\ndrift = \"alpha1*x^3\"\nscale = \"exp(gamma1)\"\ntheta_true = [5.0, 3.0]\nbounds = [[0, 10], [0, 5]]\n\
         [noise]\nkind = \"stable\"\nbeta = 1.5\n[simulation]\nx0 = 1.0\ndesigns = [{ horizon = 5.0, n = 20, fine_factor = 50 }]\n",
    )
    .unwrap();
    let o = sqmle(&["mc", "--config", cfg.to_str().unwrap(), "--replicates", "2", "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
