use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_nejunction");

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn field(text: &str, key: &str) -> f64 {
    text.lines()
        .find_map(|l| l.strip_prefix(key))
        .and_then(|rest| rest.split_whitespace().next())
        .and_then(|v| v.parse().ok())
        .unwrap_or_else(|| panic!("no `{key}` in:\n{text}"))
}

fn kappa_by_hand(d: f64, r_eff: f64, l: f64, alpha_deg: f64) -> f64 {
    let a_star = std::f64::consts::PI * r_eff * (r_eff + l * alpha_deg.to_radians().tan());
    40.0 * d * a_star / (30.0 * l)
}

#[test]
fn kappa_defaults_and_note() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["kappa"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let k = field(&text, "kappa_per_s");
    assert!((k - 0.1779).abs() / 0.1779 < 1e-3, "{k}");
    assert_eq!(field(&text, "delta2"), 0.15);
    assert!(text.contains("δ₂ = 0.150 not ≪ 1"), "{text}");
}

#[test]
fn flags_beat_file_beats_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("c.toml"),
        "[junction]\nL_um = 0.005\nalpha_deg = 50\n",
    )
    .unwrap();
    let file_only = field(
        &stdout(&run(tmp.path(), &["-c", "c.toml", "kappa"])),
        "kappa_per_s",
    );
    assert!((file_only - kappa_by_hand(3.3, 9.25e-3, 0.005, 50.0)).abs() < 1e-6);
    let flagged = field(
        &stdout(&run(
            tmp.path(),
            &["-c", "c.toml", "kappa", "--L-um", "0.02"],
        )),
        "kappa_per_s",
    );
    assert!((flagged - kappa_by_hand(3.3, 9.25e-3, 0.02, 50.0)).abs() < 1e-6);
    let set = field(
        &stdout(&run(
            tmp.path(),
            &["-c", "c.toml", "--set", "reporter.name=large", "kappa"],
        )),
        "kappa_per_s",
    );
    assert!((set - kappa_by_hand(0.52, 8.5e-3, 0.005, 50.0)).abs() < 1e-6);
}

#[test]
fn errors_are_one_machine_readable_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "[junction]\nalpha_deg = 95\n",
            "error[config]: junction.alpha_deg",
        ),
        (
            "[junction]\nR_um = 0.011\n[reporter]\nr_um = 0.012\n",
            "error[config]: reporter.r_um",
        ),
        ("[cell]\nvolume = 1\n", "error[parse]"),
        ("[solver]\ndt_s = \n", "error[parse]"),
    ];
    for (text, prefix) in cases {
        std::fs::write(tmp.path().join("bad.toml"), text).unwrap();
        let o = run(tmp.path(), &["-c", "bad.toml", "kappa"]);
        assert_eq!(o.status.code(), Some(2), "{text}");
        let err = stderr(&o);
        assert_eq!(err.lines().count(), 1, "{err}");
        assert!(err.starts_with(prefix), "{text}: {err}");
    }
    let o = run(tmp.path(), &["-c", "missing.toml", "kappa"]);
    assert!(stderr(&o).starts_with("error[io]"));
}

#[test]
fn check_passes_on_reference_config() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["check"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert_eq!(
        text.lines().filter(|l| l.starts_with("PASS")).count(),
        4,
        "{text}"
    );
}

#[test]
fn simulate_writes_curve_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "--output-dir",
            "sim",
            "simulate",
            "--t-end-s",
            "2",
            "--dt-s",
            "0.01",
            "--junction-csv",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(tmp.path().join("sim/simulate.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t_s,rho_NE,rho_ER"));
    assert_eq!(csv.lines().last().unwrap().split(',').next(), Some("2"));
    let junction = std::fs::read_to_string(tmp.path().join("sim/junction.csv")).unwrap();
    assert!(junction.starts_with("t_s,z_"));
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(tmp.path().join("sim/manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["command"], "simulate");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    assert!(manifest["files"]["simulate.csv"].is_string());
}

#[test]
fn fit_recovers_planted_rate_from_forty_noisy_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(
        tmp.path(),
        &[
            "--output-dir",
            "fx",
            "synth",
            "fit",
            "--cells",
            "40",
            "--sigma",
            "0.05",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(tmp.path(), &["-c", "fx/fit.toml", "fit"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mean = field(&stdout(&o), "cells 40 converged 40 mean_kappa_per_s");
    let planted = kappa_by_hand(3.3, 9.25e-3, 0.01, 25.0);
    assert!(
        (mean - planted).abs() / planted < 0.05,
        "{mean} vs {planted}"
    );

    let table = std::fs::read_to_string(tmp.path().join("fx/fit_results/fit_results.csv")).unwrap();
    assert_eq!(
        table.lines().next(),
        Some("file,kappa_per_s,plateau,y0,rss,converged")
    );
    assert_eq!(table.lines().count(), 41);
    let mean_curve =
        std::fs::read_to_string(tmp.path().join("fx/fit_results/mean_curve.csv")).unwrap();
    assert_eq!(mean_curve.lines().next(), Some("t_s,mean,sd"));
    let first: Vec<f64> = mean_curve
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    assert_eq!(first[..2], [0.0, 0.0]);
}

#[test]
fn fit_flags_point_at_data_outside_the_config() {
    let tmp = tempfile::tempdir().unwrap();
    run(
        tmp.path(),
        &["--output-dir", "fx", "synth", "fit", "--cells", "5"],
    );
    let o = run(
        tmp.path(),
        &[
            "--output-dir",
            "res",
            "fit",
            "--cells",
            "fx/cells",
            "--reference",
            "fx/reference.csv",
            "--background",
            "100",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("cells 5 converged 5"));
    let o = run(tmp.path(), &["fit"]);
    assert!(stderr(&o).starts_with("error[config]: fit.cells_dir"));
}

#[test]
fn frap2d_estimates_fixture_diffusivity() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(tmp.path(), &["--output-dir", "f2", "synth", "frap2d"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = run(
        tmp.path(),
        &[
            "--output-dir",
            "est",
            "frap2d",
            "--mask",
            "f2/mask.pgm",
            "--bleach",
            "f2/bleach.pgm",
            "--pixel-um",
            "0.106",
            "--observed",
            "f2/observed.csv",
            "--seed",
            "7",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let d = field(&text, "D_um2_s");
    assert!((d - 3.3).abs() < 0.2, "{text}");
    assert!(text.contains("ok true"));
    let curve = std::fs::read_to_string(tmp.path().join("est/frap2d_curve.csv")).unwrap();
    assert_eq!(curve.lines().next(), Some("t_s,observed,model"));
    let manifest = std::fs::read_to_string(tmp.path().join("est/manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 7"));
}

#[test]
fn frap2d_reads_csv_masks_and_rejects_bad_ones() {
    let tmp = tempfile::tempdir().unwrap();
    let grid = |f: &dyn Fn(usize, usize) -> bool| {
        (0..20)
            .map(|y| {
                (0..20)
                    .map(|x| if f(x, y) { "1" } else { "0" })
                    .collect::<Vec<_>>()
                    .join(",")
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    std::fs::write(tmp.path().join("in.csv"), grid(&|_, _| true)).unwrap();
    std::fs::write(
        tmp.path().join("b.csv"),
        grid(&|x, y| (8..12).contains(&x) && (8..12).contains(&y)),
    )
    .unwrap();
    let o = run(
        tmp.path(),
        &[
            "frap2d",
            "--mask",
            "in.csv",
            "--bleach",
            "b.csv",
            "--n-particles",
            "2000",
            "--n-steps",
            "50",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let curve = std::fs::read_to_string(tmp.path().join("out/lattice_recovery.csv")).unwrap();
    assert_eq!(curve.lines().count(), 52);

    std::fs::write(tmp.path().join("b.csv"), grid(&|_, _| false)).unwrap();
    let o = run(
        tmp.path(),
        &["frap2d", "--mask", "in.csv", "--bleach", "b.csv"],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr(&o).lines().count(), 1);
}

#[test]
fn sweep_writes_summary_and_curves() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(
        tmp.path().join("s.toml"),
        "[sweep]\nL_um = [0.01]\nalpha_deg = [25]\nreporters = [\"small\", \"large\"]\nlarge_r_um = [0.0025, 0.006]\n\
         data = { small = \"small.csv\" }\n",
    )
    .unwrap();
    let k = kappa_by_hand(3.3, 9.25e-3, 0.01, 25.0);
    let data: String = std::iter::once("t_s,intensity".to_string())
        .chain((0..=20).map(|i| format!("{},{}", i, 1.0 - (-k * i as f64).exp())))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(tmp.path().join("small.csv"), data).unwrap();
    let o = run(tmp.path(), &["-c", "s.toml", "sweep"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = std::fs::read_to_string(tmp.path().join("out/summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(
        lines[0],
        "L_um,alpha_deg,reporter,R_um,kappa_per_s,half_time_s,delta1,delta2,rmse,status"
    );
    assert_eq!(lines.len(), 4);
    let small: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(small[2], "small");
    assert!(small[8].parse::<f64>().unwrap() < 1e-12);
    assert!(lines[3].contains("large_r6nm"));
    let curve = std::fs::read_to_string(
        tmp.path()
            .join("out/curves/curve_000_small_L10nm_a25deg_R11nm.csv"),
    )
    .unwrap();
    assert_eq!(curve.lines().next(), Some("t_s,model,data"));
    assert_eq!(curve.lines().count(), 22);
}
