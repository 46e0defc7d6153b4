use std::fs;
use std::path::Path;
use std::process::Command as Proc;

use spheroid_cld::cli::run_command;
use spheroid_cld::config::{Command, ExperimentConfig};
use spheroid_cld::field::{DensityField, FieldKind};
use spheroid_cld::Grid1D;

fn bin() -> Proc {
    Proc::new(env!("CARGO_BIN_EXE_spheroid-cld"))
}

fn config(json: &str) -> ExperimentConfig {
    serde_json::from_str(json).unwrap()
}

#[test]
fn dirac_sphere_curve_is_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("f");
    let status = bin()
        .args(["forward", "--dirac", "1e-3 m", "--eta", "1", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let text = fs::read_to_string(out.join("dirac_curves.csv")).unwrap();
    let mut rows = 0;
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        let exact = 1.0 - (1.0 - (v[0] / 2e-3).powi(2)).max(0.0).sqrt();
        assert!((v[2] - exact).abs() < 1e-6, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 200);
}

#[test]
fn zero_psd_gives_zero_cld() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid1D::new(1e-4, 3e-4, 30).unwrap();
    let psd = dir.path().join("psd.csv");
    DensityField::zeros(g, FieldKind::Psd).write_csv(&psd).unwrap();
    let mut cfg = config(r#"{"quadrature": {"n_phi": 16, "n_theta": 16}, "chord": {"points": 40}}"#);
    cfg.forward.psd = vec![psd];
    cfg.output_dir = Some(dir.path().join("out"));
    run_command(Command::Forward, &cfg).unwrap();
    let q = DensityField::read_csv(&dir.path().join("out/cumulative_cld.csv"), FieldKind::CumulativeCld).unwrap();
    assert!(q.values.iter().all(|v| *v == 0.0));
}

#[test]
fn forward_reports_particle_count() {
    let dir = tempfile::tempdir().unwrap();
    let g = Grid1D::new(1e-4, 3e-4, 30).unwrap();
    let psd = dir.path().join("psd.csv");
    DensityField::from_fn(g, FieldKind::Psd, |r| (-((r - 2e-4) / 3e-5f64).powi(2)).exp())
        .unwrap()
        .write_csv(&psd)
        .unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"shapes": [2], "quadrature": {"n_phi": 16, "n_theta": 16}, "chord": {"points": 40},
            "forward": {"psd": ["psd.csv"], "concentration": {"c_s": 10, "rho_s": 2000}},
            "output_dir": "out"}"#,
    )
    .unwrap();
    let status = bin()
        .arg("forward")
        .arg("--config")
        .arg(dir.path().join("cfg.json"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/forward_summary.json")).unwrap()).unwrap();
    let count = summary["shapes"][0]["particle_count"].as_f64().unwrap();
    assert!(count > 0.0 && count.is_finite());
    let q_end = summary["cumulative_at_chord_max"].as_f64().unwrap();
    let mass = summary["shapes"][0]["psd_integral"].as_f64().unwrap();
    assert!((q_end - mass).abs() < 1e-9 * mass);
}

#[test]
fn validation_failures_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        r#"{"shapes": [0]}"#,
        r#"{"unknown": 1}"#,
        r#"{"invert": {"data": "missing.csv"}}"#,
        r#"{"radius": {"min": "2e-4 m", "max": "1 h", "points": 10}}"#,
        "not json",
    ];
    for (k, c) in cases.iter().enumerate() {
        let p = dir.path().join(format!("c{k}.json"));
        fs::write(&p, c).unwrap();
        let o = bin().arg("invert").arg("--config").arg(&p).output().unwrap();
        assert_eq!(o.status.code(), Some(2), "{c}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let o = bin().args(["bogus"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn aggregated_report_lists_every_problem() {
    let o = bin().args(["simulate", "--eta", "1,-2,3"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(
        err.contains("shapes[1]") && err.contains("process.growth") && err.contains("process.spacing"),
        "{err}"
    );
}

#[test]
fn solver_stall_exits_with_3_after_writing_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"radius": {"min": "100 um", "max": "300 um", "points": 60}, "chord": {"points": 60},
            "quadrature": {"n_phi": 16, "n_theta": 16},
            "invert": {"deltas": [1e-9], "max_iters": 1, "tol": 1e-14}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = bin()
        .arg("invert")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("invert_summary.json").exists());
}

#[test]
fn observer_blow_up_exits_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"radius": {"min": 1e-4, "max": 2e-4, "points": 21}, "chord": {"points": 41},
            "quadrature": {"n_phi": 12, "n_theta": 12}, "bfn": {"mu0": 5000, "iterations": 40}}"#,
    )
    .unwrap();
    let o = bin()
        .arg("bfn")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

fn read_all(dir: &Path, files: &[std::path::PathBuf]) -> Vec<Vec<u8>> {
    files
        .iter()
        .map(|f| fs::read(dir.join(f.file_name().unwrap())).unwrap())
        .collect()
}

#[test]
fn simulate_hits_terminal_profiles_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(
        r#"{"radius": {"min": "1e-4 m", "max": "2e-4 m", "points": 21}, "chord": {"points": 41},
                             "quadrature": {"n_phi": 12, "n_theta": 12},
                             "process": {"t_max": "1h", "growth": ["1e-4 m/h", "2e-4 m/h"], "spacing": ["1um", "2um"],
                                         "nucleation": {"terminal_peaks": [["150 um"], ["150um"]]}}}"#,
    );
    cfg.output_dir = Some(dir.path().join("a"));
    let files = run_command(Command::Simulate, &cfg).unwrap();
    cfg.output_dir = Some(dir.path().join("b"));
    run_command(Command::Simulate, &cfg).unwrap();
    assert_eq!(
        read_all(&dir.path().join("a"), &files),
        read_all(&dir.path().join("b"), &files)
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a/simulate_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["steps"], 100);
    for s in summary["shapes"].as_array().unwrap() {
        assert!(s["terminal_deviation"].as_f64().unwrap() < 1e-2);
    }
}

#[test]
fn oracle_and_bfn_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args([
            "oracle",
            "--eta",
            "0.5",
            "--r",
            "1 mm",
            "--samples",
            "2e5",
            "--seed",
            "3",
            "--out",
        ])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let rows = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(rows.lines().count(), 21);

    let cfg = dir.path().join("c.json");
    fs::write(
        &cfg,
        r#"{"radius": {"min": 1e-4, "max": 2e-4, "points": 21}, "chord": {"points": 41},
            "quadrature": {"n_phi": 12, "n_theta": 12}}"#,
    )
    .unwrap();
    let o = bin()
        .args(["bfn", "--iters", "6", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("bfn_report.json")).unwrap()).unwrap();
    let its = report["iterations"].as_array().unwrap();
    assert_eq!(its.len(), 6);
    let e1 = its[0]["error"].as_f64().unwrap();
    let e5 = its[4]["error"].as_f64().unwrap();
    assert!(e5 < e1);
}
