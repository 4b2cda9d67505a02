use std::path::Path;
use std::process::{Command, Output};

fn thermal_adapt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_thermal-adapt"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn text(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn gen_writes_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = thermal_adapt(&["gen", "--n", "1,2", "--trials", "2", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for n in 1..=2 {
        for t in 0..2 {
            let p = dir.path().join(format!("instance_n{n}_trial{t}.json"));
            assert!(text(&p).contains("\"beta\""), "{}", p.display());
        }
    }
    let listed = String::from_utf8(o.stdout).unwrap();
    assert_eq!(listed.lines().count(), 4);
}

#[test]
fn gen_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = thermal_adapt(&["gen", "--n", "3", "--seed", "9", "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    let f = "instance_n3_trial0.json";
    assert_eq!(text(&a.path().join(f)), text(&b.path().join(f)));
}

#[test]
fn grad_scan_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = thermal_adapt(&["grad-scan", "--n", "1,2,3", "--trials", "3", "--out", out, "--plot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["grad_scan.csv", "grad_scan_medians.csv", "grad_scan_fits.csv"] {
        assert!(text(&dir.path().join(f)).starts_with("# generated-unix="), "{f}");
    }
    let raw = text(&dir.path().join("grad_scan.csv"));
    assert_eq!(raw.lines().nth(1).unwrap(), "loss,n,trial,g_inf");
    assert_eq!(raw.lines().count(), 2 + 3 * 3 * 3);

    for input in ["grad_scan.csv", "grad_scan_medians.csv"] {
        let fits = dir.path().join(format!("refit_{input}"));
        let o = thermal_adapt(&[
            "fit",
            "--input",
            dir.path().join(input).to_str().unwrap(),
            "--out",
            fits.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let printed = String::from_utf8(o.stdout).unwrap();
        assert_eq!(printed.lines().count(), 4);
        for loss in ["overlap", "gibbs", "renyi"] {
            assert!(printed.lines().any(|l| l.starts_with(loss)), "{printed}");
        }
        // Refitting the scan's own output reproduces its fit file.
        let body = |p: &Path| text(p).lines().skip(1).collect::<Vec<_>>().join("\n");
        assert_eq!(body(&fits), body(&dir.path().join("grad_scan_fits.csv")));
    }
}

#[test]
fn loss_curves_single_qubit() {
    let dir = tempfile::tempdir().unwrap();
    let o = thermal_adapt(&["loss-curves", "--n", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for loss in ["overlap", "gibbs", "renyi"] {
        for method in ["adapt", "vqe"] {
            assert!(dir.path().join(format!("trace_{loss}_{method}.csv")).exists());
        }
    }
    assert!(text(&dir.path().join("summary.csv")).contains("renyi"));
}

#[test]
fn invalid_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for args in [
        vec!["grad-scan", "--n", "0", "--out", out],
        vec!["grad-scan", "--n", "7", "--out", out],
        vec!["size-scan", "--n", "4", "--out", out],
        vec!["grad-scan", "--trials", "0", "--out", out],
        vec!["grad-scan", "--epsilon", "-1", "--out", out],
        vec!["loss-curves", "--n", "1,2", "--out", out],
        vec!["gen", "--n", "9", "--out", out],
    ] {
        let o = thermal_adapt(&args);
        assert_eq!(code(&o), 2, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    }
}

#[test]
fn unreadable_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let o = thermal_adapt(&["fit", "--input", missing.to_str().unwrap()]);
    assert_ne!(code(&o), 0);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "loss,n,g_inf\noverlap,1,zero\n").unwrap();
    let o = thermal_adapt(&["fit", "--input", bad.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
}

#[test]
fn partial_failure_exits_4() {
    // Large beta drives the Taylor-truncated target outside the state space
    // for some instances, so those Gibbs trials fail and the rest complete.
    let dir = tempfile::tempdir().unwrap();
    let o = thermal_adapt(&[
        "grad-scan",
        "--n",
        "1,2,3",
        "--trials",
        "10",
        "--beta",
        "10",
        "--loss",
        "gibbs",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("trial failed"));
    assert!(dir.path().join("grad_scan.csv").exists());
}
