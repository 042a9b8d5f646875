use std::path::Path;
use std::process::{Command, Output};

fn pulm_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulm-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn consensus_run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "task = consensus\nrounds = 30\ntopology.n = 8\ndata.d = 4\n",
    );
    let out = dir.path().join("trace.csv");
    let res = pulm_sim(&["consensus", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("round,"));
    assert_eq!(csv.lines().count(), 32);
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_key = write_config(dir.path(), "a.cfg", "task = consensus\ntopology.q = 3\n");
    let res = pulm_sim(&["consensus", "--config", &bad_key]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("topology.q"));

    let mismatch = write_config(dir.path(), "b.cfg", "task = optimize\n");
    assert_eq!(pulm_sim(&["consensus", "--config", &mismatch]).status.code(), Some(2));

    let no_out = write_config(dir.path(), "c.cfg", "task = consensus\nrounds = 5\n");
    let res = pulm_sim(&["consensus", "--config", &no_out]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("output"));
}

#[test]
fn failed_certification_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.cfg",
        "task = certify\nrounds = 20\ntopology.n = 20\ntopology.p_c = 0.001\n",
    );
    let out = dir.path().join("cert.csv");
    let res = pulm_sim(&["certify", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(3));
    assert!(!out.exists());
}

#[test]
fn seed_sweep_writes_one_file_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.cfg",
        "task = consensus\nrounds = 20\ntopology.n = 6\n",
    );
    let out = dir.path().join("runs");
    let res = pulm_sim(&[
        "consensus",
        "--config",
        &cfg,
        "--seeds",
        "0..3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for seed in 0..3 {
        assert!(out.join(format!("run-seed{seed}.csv")).exists());
    }
    assert_eq!(
        pulm_sim(&["consensus", "--config", &cfg, "--seeds", "3..1"])
            .status
            .code(),
        Some(2)
    );
}
