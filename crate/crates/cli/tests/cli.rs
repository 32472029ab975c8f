use std::fs;
use std::path::Path;
use std::process::Command;

use qg3_cli::io::{parse_config_str, read_field, sha256_hex, MANIFEST_NAME};

fn qg3(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qg3"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("sim.cfg");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(str::to_string).collect();
    let rows = lines
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn silent_linear_run_decays_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=8\nny=8\ngamma=0.5\ndt=0.01\nhorizon=1\nnonlinear=false\nnoise_amplitude=0\n\
         initial=mode 1 2 1.0 -0.5 0.25\nobservables=q_l2,q_l4,q_linf\nrecord_every=10\n",
    );
    let out = dir.path().join("out");
    let o = qg3(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out.join("series.csv"));
    assert_eq!(header, ["time", "q_l2", "q_l4", "q_linf"]);
    assert_eq!(rows.len(), 11);
    let first: Vec<f64> = rows[0].iter().map(|v| v.parse().unwrap()).collect();
    for row in &rows {
        let v: Vec<f64> = row.iter().map(|v| v.parse().unwrap()).collect();
        let decay = (-0.5 * v[0]).exp();
        for j in 1..4 {
            assert!((v[j] / (first[j] * decay) - 1.0).abs() < 1e-12, "{row:?}");
        }
    }
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "nx=8\nny=8\ndt=0.005\nhorizon=0.2\nnoise_modes=16\n");
    let mut manifests = Vec::new();
    for threads in ["1", "8"] {
        let out = dir.path().join(format!("t{threads}"));
        let o = qg3(&[
            "invariant",
            "--config",
            &cfg,
            "--seed",
            "42",
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--horizons",
            "0.1,0.2",
            "--paths",
            "6",
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        manifests.push(fs::read_to_string(out.join(MANIFEST_NAME)).unwrap());
        let bytes = fs::read(out.join("kb_average.csv")).unwrap();
        assert!(manifests[manifests.len() - 1].contains(&sha256_hex(&bytes)));
    }
    assert_eq!(manifests[0], manifests[1]);
    // The manifest is itself a configuration reproducing the run.
    assert_eq!(parse_config_str(&manifests[0]).unwrap().seed, 42);
}

#[test]
fn viscosity_report_has_rung_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=8\nny=8\ndt=0.005\nhorizon=0.05\ninitial=random 1 1.0 4\n",
    );
    let out = dir.path().join("out");
    let o = qg3(&[
        "viscosity",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--eps-ladder",
        "0.2,0.1,0.05",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out.join("viscosity.csv"));
    assert_eq!(header, ["from", "to", "metric", "value"]);
    assert_eq!(rows.iter().filter(|r| r[2] == "sup_h-1").count(), 2);
    assert_eq!(rows.iter().filter(|r| r[2] == "est2").count(), 3);
}

#[test]
fn constraint_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = write_config(dir.path(), "gamma=-1\n");
    let o = qg3(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("gamma must be positive"));

    let cfg = write_config(dir.path(), "nx=8\nwhatever=3\n");
    let o = qg3(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));

    let o = qg3(&[
        "galerkin",
        "--out",
        out.to_str().unwrap(),
        "--n-ladder",
        "8,16",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn blow_up_exits_with_three_and_keeps_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=4\nny=4\ndt=0.01\nhorizon=1\nnonlinear=false\nnoise_amplitude=1e307\n",
    );
    let out = dir.path().join("out");
    let o = qg3(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join(MANIFEST_NAME).exists());
    let (_, rows) = csv(&out.join("series.csv"));
    assert!(!rows.is_empty() && rows.len() < 101);
}

#[test]
fn snapshots_follow_cadence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=6\nny=4\ndt=0.01\nhorizon=0.2\nrecord_every=5\ninitial=random 2 1.0 3\n",
    );
    let out = dir.path().join("out");
    let o = qg3(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--snap-every",
        "10",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut snaps: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".lqg"))
        .collect();
    snaps.sort();
    assert_eq!(snaps, ["snap_000000000.lqg", "snap_000000010.lqg", "snap_000000020.lqg"]);
    let f = read_field(&out.join(&snaps[0])).unwrap();
    assert_eq!(f.shape(), (6, 4));

    let o = qg3(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--snap-every", "7"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn remaining_subcommands_write_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=8\nny=8\ndt=0.005\nhorizon=0.1\nnoise_modes=12\nnoise_amplitude=0.2\n",
    );
    let cases: [(&[&str], &[&str]); 4] = [
        (&["stability", "--deltas", "0.1,0.01"], &["stability.csv", "stability_z.csv"]),
        (
            &["tightness", "--rate", "1.0"],
            &["tightness.csv", "tightness_series.csv", "tightness_summary.csv"],
        ),
        (
            &["diagnose"],
            &["log_estimate.csv", "w14.csv", "lp_envelope.csv", "diagnose_summary.csv"],
        ),
        (&["galerkin", "--n-ladder", "4,8,16"], &["galerkin.csv"]),
    ];
    let epsilon_cfg = write_config(
        dir.path(),
        "nx=8\nny=8\ndt=0.005\nhorizon=0.1\nnoise_modes=12\nnoise_amplitude=0.2\nepsilon=0.05\n",
    );
    for (i, (args, files)) in cases.iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        let config = if args[0] == "galerkin" { &epsilon_cfg } else { &cfg };
        let mut full = vec![args[0], "--config", config, "--out", out.to_str().unwrap()];
        full.extend_from_slice(&args[1..]);
        let o = qg3(&full);
        assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest = fs::read_to_string(out.join(MANIFEST_NAME)).unwrap();
        for f in *files {
            let bytes = fs::read(out.join(f)).unwrap();
            assert!(manifest.contains(&format!("# artifact {f} sha256={}", sha256_hex(&bytes))));
        }
    }
}

#[test]
fn invariance_window_adds_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "nx=4\nny=4\ngamma=1\ndt=0.01\nhorizon=40\nnonlinear=false\nnoise_modes=8\nobservables=pairsq1\n",
    );
    let out = dir.path().join("out");
    let o = qg3(&[
        "invariant",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--paths",
        "4",
        "--burn-in",
        "10",
        "--window",
        "20",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv(&out.join("invariance.csv"));
    assert_eq!(header[0], "observable");
    assert_eq!(rows.len(), 2);
}
