use std::fs;
use std::path::Path;
use std::process::Command;

use isr_core::bench::{synthetic_instance, write_solomon};

fn isr(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_isr"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn small_config(dir: &Path) {
    let out = isr(
        &[
            "gen-city",
            "--seed",
            "3",
            "--clusters",
            "15",
            "--area-km",
            "4",
            "--out",
            "city",
        ],
        dir,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    fs::write(
        dir.join("cfg.json"),
        r#"{"city": {"file": "city/city.json"}, "seeds": [0, 1, 2], "horizon_days": 12, "warmup_days": 4,
            "scenarios": [
              {"name": "base", "policy": {"policy": "baseline", "top_n": 6}},
              {"name": "isr", "policy": {"policy": "isr", "epsilon": 0.0, "rho_km": 64}}
            ],
            "tune": {"epsilon": [0.0], "rho_km": [64]}}"#,
    )
    .unwrap();
}

#[test]
fn simulate_writes_cell_and_mean_rows() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    let out = isr(&["simulate", "--config", "cfg.json", "--out", "sim"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("sim/reports.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 6 + 2);
    assert_eq!(rows.iter().filter(|r| r.contains(",mean,")).count(), 2);
}

#[test]
fn single_cell_tune_matches_simulate() {
    let dir = tempfile::tempdir().unwrap();
    small_config(dir.path());
    assert!(isr(&["simulate", "--config", "cfg.json", "--out", "sim"], dir.path())
        .status
        .success());
    assert!(isr(&["tune", "--config", "cfg.json", "--out", "tune"], dir.path())
        .status
        .success());
    let sim = fs::read_to_string(dir.path().join("sim/reports.csv")).unwrap();
    let isr_mean = sim.lines().find(|l| l.contains(",isr,mean,")).unwrap();
    let distance = isr_mean.split(',').nth(3).unwrap();
    let heatmap = fs::read_to_string(dir.path().join("tune/heatmap_distance.csv")).unwrap();
    assert_eq!(heatmap.lines().nth(1).unwrap(), format!("0,{distance}"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty_seeds.json"), r#"{"seeds": []}"#).unwrap();
    let out = isr(&["simulate", "--config", "empty_seeds.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = isr(&["tune", "--config", "missing.json", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = isr(&["simulate"], dir.path());
    assert_eq!(out.status.code(), Some(2));

    // A required client whose window closes before anyone can reach it.
    fs::write(
        dir.path().join("tight.txt"),
        "TIGHT\n\nVEHICLE\nNUMBER CAPACITY\n 1 100\n\nCUSTOMER\nCUST NO. XCOORD. YCOORD. DEMAND READY DUE SERVICE\n\n\
         0 0 0 0 0 1000 0\n1 100 0 5 0 10 5\n",
    )
    .unwrap();
    let out = isr(&["solve", "--instance", "tight.txt", "--iterations", "10"], dir.path());
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bench_reports_gaps_per_group() {
    let dir = tempfile::tempdir().unwrap();
    let inst = synthetic_instance("RC1_2_1", 60, 4);
    fs::write(dir.path().join("rc1.txt"), write_solomon(&inst)).unwrap();
    fs::write(dir.path().join("bks.txt"), "RC1_2_1 1000.0\n").unwrap();
    let out = isr(
        &[
            "bench",
            "--instances",
            "rc1.txt",
            "--bks",
            "bks.txt",
            "--seeds",
            "0",
            "1",
            "--iterations",
            "50",
            "--out",
            "b",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("b/bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    for row in csv.lines().skip(1) {
        let f: Vec<&str> = row.split(',').collect();
        let (initial, cost): (f64, f64) = (f[5].parse().unwrap(), f[6].parse().unwrap());
        assert!(cost <= initial + 1e-9);
        assert_eq!(f[2], "RC1");
        assert_eq!(f[4], "50it");
    }
    let groups = fs::read_to_string(dir.path().join("b/bench_groups.csv")).unwrap();
    assert!(groups.lines().nth(1).unwrap().contains(",RC1,2,"));
}
