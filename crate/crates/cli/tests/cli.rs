use std::path::Path;
use std::process::Command;

const CONFIG: &str = r#"
[kernel]
family = "matern"
sigma2 = 1.0
lengthscale = 0.4
nu = 2.5

[constraints]
monotone = "increasing"
bounds = { lower = 0.0, upper = 1.0 }

[sampler]
N = 40
n_obs = 15
seed = 5

[refine]
kind = "greedy"
Nmax = 12

[sweep]
replicates = 2
N_ref = 60
"#;

fn csmooth(args: &[&str]) -> String {
    let out = Command::new(env!("CARGO_BIN_EXE_csmooth")).args(args).output().unwrap();
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sample_fit_diagnose_converge() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.path().join("out");

    csmooth(&["sample", "--config", s(&cfg), "--out", s(&out)]);
    let obs = out.join("observations_001.csv");
    let text = std::fs::read_to_string(&obs).unwrap();
    assert!(text.starts_with("x,y"));
    assert_eq!(text.lines().count(), 16);
    assert!(out.join("replicate_000.csv").exists());

    let fit_dir = dir.path().join("fit");
    csmooth(&["fit", "--config", s(&cfg), "--data", s(&obs), "--knots", "9", "--out", s(&fit_dir)]);
    let map = fit_dir.join("map.csv");
    assert!(std::fs::read_to_string(&map).unwrap().contains("knot,coefficient"));

    let report = csmooth(&["diagnose", "--config", s(&cfg), "--data", s(&obs), "--fit", s(&map), "--out", s(&fit_dir)]);
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    let r = &v["report"];
    assert_eq!(r["n"], 9);
    assert!(r["sup_error"].as_f64().unwrap() <= r["bounds"]["bound56"].as_f64().unwrap());
    assert_eq!(v["label"], "estimated, N_ref = 60");

    let a = dir.path().join("a");
    let b = dir.path().join("b");
    csmooth(&["converge", "--config", s(&cfg), "--out", s(&a)]);
    csmooth(&["converge", "--config", s(&cfg), "--out", s(&b), "--seed", "5"]);
    let csv = std::fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("sweep.csv")).unwrap());
    assert!(String::from_utf8(csv).unwrap().starts_with(
        "replicate_id,strategy,N,delta_N,sup_error,G_N,alpha_est,bound56,objective,kkt_residual,wall_time_ms\n"
    ));
    assert!(a.join("convergence_greedy.svg").exists());
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(a.join("sweep_meta.json")).unwrap()).unwrap();
    assert!(meta["greedy_criterion"].as_str().unwrap().contains("surrogate"));

    csmooth(&["converge", "--config", s(&cfg), "--out", s(&a), "--strategy", "equispaced"]);
    assert!(a.join("convergence_equispaced.svg").exists());
}

#[test]
fn rejects_unknown_strategy_and_keys() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_csmooth"))
        .args(["converge", "--config", s(&cfg), "--strategy", "maxmod"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown strategy"));

    std::fs::write(&cfg, format!("{CONFIG}\n[extra]\nx = 1\n")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_csmooth")).args(["sample", "--config", s(&cfg)]).output().unwrap();
    assert!(!out.status.success());
}
