use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pme_lab::cli::{RunManifest, RUNS_DIR_ENV, SUMMARY_HEADER};
use pme_lab::selfsimilar::shoot_xi;

fn pme_lab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pme-lab"))
        .env(RUNS_DIR_ENV, root)
        .args(args)
        .output()
        .unwrap()
}

fn run_dir(out: &Output) -> PathBuf {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    PathBuf::from(String::from_utf8(out.stdout.clone()).unwrap().trim())
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

const SMALL: &str = "[reaction]
theta = 0.3
sigma = 0.02
p = 2.0
m = 2.0

[grid]
x_max = 2.0
n = 40

[run]
horizon = 1.0
sample_every = 0.1

[psi]
shape = \"tent\"
width = 2.0
height = 1.0
lambda = 3.0
";

#[test]
fn shoot_xi_lists_its_y0_file() {
    let root = tempfile::tempdir().unwrap();
    let dir = run_dir(&pme_lab(
        root.path(),
        &["shoot-xi", "--m", "2", "--theta", "0.5"],
    ));
    assert!(dir.starts_with(root.path()));
    assert!(dir
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .ends_with("-shoot-xi"));
    let manifest = RunManifest::read(&dir).unwrap();
    assert!(manifest.files.iter().any(|f| f.path == "y0.json"));
    assert!(manifest.verify(&dir).is_empty());
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("y0.json")).unwrap()).unwrap();
    let expected = shoot_xi(2.0, 0.5, 1e-10).unwrap().y0;
    assert_eq!(report["y0"].as_f64().unwrap(), expected);
    assert!(expected > 0.0 && expected < 0.5f64.sqrt());
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    assert_eq!(pme_lab(root.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(pme_lab(root.path(), &[]).status.code(), Some(1));
    assert_eq!(pme_lab(root.path(), &["--help"]).status.code(), Some(0));
    assert_eq!(
        pme_lab(root.path(), &["shoot-xi", "--m", "2"])
            .status
            .code(),
        Some(1)
    );

    let bad = write_config(
        root.path(),
        "bad.toml",
        &SMALL.replace("theta = 0.3", "theta = 1.2"),
    );
    let out = pme_lab(root.path(), &["solve", "--config", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("line 2") && stderr.contains("theta<1"),
        "{stderr}"
    );

    // m = 1 is rejected by the shooting routine itself
    assert_eq!(
        pme_lab(root.path(), &["shoot-xi", "--m", "1", "--theta", "0.5"])
            .status
            .code(),
        Some(2)
    );
    // no plateau on a short interval is a numerical failure
    let out = pme_lab(
        root.path(),
        &[
            "hw-profile",
            "--p",
            "4",
            "--m",
            "2",
            "--theta",
            "0.5",
            "--gamma",
            "0.1",
            "--Y",
            "10",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn solve_is_deterministic() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "small.toml", SMALL);
    let a = RunManifest::read(&run_dir(&pme_lab(
        root.path(),
        &["solve", "--config", cfg.to_str().unwrap()],
    )))
    .unwrap();
    let b_dir = run_dir(&pme_lab(
        root.path(),
        &["solve", "--config", cfg.to_str().unwrap()],
    ));
    let b = RunManifest::read(&b_dir).unwrap();
    for file in ["trace.csv", "report.json", "final.csv", "config.toml"] {
        assert!(a.digest_of(file).is_some(), "{file} missing");
        assert_eq!(a.digest_of(file), b.digest_of(file), "{file}");
    }
    assert!(b.verify(&b_dir).is_empty());
    // the snapshot alone reproduces the run
    let replay = write_config(
        root.path(),
        "replay.toml",
        &fs::read_to_string(b_dir.join("config.toml")).unwrap(),
    );
    let c = RunManifest::read(&run_dir(&pme_lab(
        root.path(),
        &["solve", "--config", replay.to_str().unwrap()],
    )))
    .unwrap();
    assert_eq!(a.digest_of("trace.csv"), c.digest_of("trace.csv"));
}

#[test]
fn sweep_grid_and_failure_isolation() {
    let root = tempfile::tempdir().unwrap();
    let text = format!("{SMALL}\n[sweep]\np = [2.0, 5.0]\nm = [2.0, 3.0]\nworkers = 2\n");
    let cfg = write_config(root.path(), "sweep.toml", &text);
    let dir = run_dir(&pme_lab(
        root.path(),
        &["sweep", "--config", cfg.to_str().unwrap()],
    ));
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], SUMMARY_HEADER);
    assert_eq!(lines.len(), 5);
    assert!(
        lines[1..].iter().all(|l| l.split(',').nth(3) == Some("ok")),
        "{summary}"
    );
    for i in 0..4 {
        let cell = dir.join(format!("cells/{i:03}"));
        assert!(RunManifest::read(&cell).unwrap().verify(&cell).is_empty());
    }
    assert!(RunManifest::read(&dir).unwrap().verify(&dir).is_empty());

    // p = 0.5 is not a valid exponent; that cell fails alone
    let text = format!("{SMALL}\n[sweep]\np = [0.5, 2.0]\n");
    let cfg = write_config(root.path(), "mixed.toml", &text);
    let dir = run_dir(&pme_lab(
        root.path(),
        &["sweep", "--config", cfg.to_str().unwrap(), "--workers", "2"],
    ));
    let summary = fs::read_to_string(dir.join("summary.csv")).unwrap();
    let status: Vec<&str> = summary
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap())
        .collect();
    assert_eq!(status, ["failed", "ok"]);
    assert!(dir.join("cells/000/error.txt").exists());

    let text = format!("{SMALL}\n[sweep]\np = []\n");
    let cfg = write_config(root.path(), "empty.toml", &text);
    let dir = run_dir(&pme_lab(
        root.path(),
        &["sweep", "--config", cfg.to_str().unwrap()],
    ));
    assert_eq!(
        fs::read_to_string(dir.join("summary.csv")).unwrap(),
        format!("{SUMMARY_HEADER}\n")
    );
}

#[test]
fn profile_and_hw_outputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = write_config(root.path(), "small.toml", SMALL);
    let dir = run_dir(&pme_lab(
        root.path(),
        &[
            "profile-qb",
            "--config",
            cfg.to_str().unwrap(),
            "--b-list",
            "0.01,0.001",
        ],
    ));
    let widths = fs::read_to_string(dir.join("widths.csv")).unwrap();
    let rows: Vec<Vec<f64>> = widths
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(widths.lines().next(), Some("b,l_b,L_b,slope_at_l"));
    assert_eq!(rows.len(), 2);
    // smaller bumps are wider
    assert!(rows[1][1] > rows[0][1] && rows[1][2] > rows[0][2]);

    let dir = run_dir(&pme_lab(
        root.path(),
        &[
            "hw-profile",
            "--p",
            "4",
            "--m",
            "2",
            "--theta",
            "0.5",
            "--gamma",
            "0.1",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!(report["A"].as_f64().unwrap() > 0.0);
    assert!(report["min_phi"].as_f64().unwrap() > 0.0);
}

#[test]
fn find_lambda_then_asymptotics() {
    let root = tempfile::tempdir().unwrap();
    let text = SMALL.replace("horizon = 1.0", "horizon = 20.0");
    let cfg = write_config(root.path(), "fl.toml", &text);
    let dir = run_dir(&pme_lab(
        root.path(),
        &[
            "find-lambda",
            "--config",
            cfg.to_str().unwrap(),
            "--tol",
            "1e-3",
        ],
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    let (lo, hi) = (
        report["lambda_lo"].as_f64().unwrap(),
        report["lambda_hi"].as_f64().unwrap(),
    );
    assert!(lo < hi && (hi - lo) / hi <= 1e-3);
    assert!(report["monotone"].as_bool().unwrap());
    let probes = report["iterations"].as_u64().unwrap() as usize;
    assert!(dir
        .join(format!("probes/probe_{:03}.csv", probes - 1))
        .exists());

    // synthetic front r = 2·0.5·√t + 3 on a decade-spanning window
    let mut trace = String::from("t,l,r,theta_pos,u_center,mass\n");
    for i in 0..=400 {
        let t = 1.0 + i as f64 * 0.25;
        let r = t.sqrt() + 3.0;
        trace.push_str(&format!("{t},{},{r},1,0.5,1\n", -r));
    }
    let path = write_config(root.path(), "trace.csv", &trace);
    let dir = run_dir(&pme_lab(
        root.path(),
        &[
            "asymptotics",
            "--trace",
            path.to_str().unwrap(),
            "--y0",
            "0.5",
            "--p",
            "2",
            "--dx",
            "0.01",
        ],
    ));
    let fit = fs::read_to_string(dir.join("fit.csv")).unwrap();
    assert_eq!(
        fit.lines().next(),
        Some("t,r,lead,corr,lower_bound,upper_bound")
    );
    for line in fit.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((v[3] - 3.0).abs() < 1e-9);
        assert!(v[4] <= v[1] + 1e-9 && v[1] <= v[5] + 1e-9);
    }
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("report.json")).unwrap()).unwrap();
    assert!((report["correction"]["q_fit"].as_f64().unwrap()).abs() < 1e-6);
}
