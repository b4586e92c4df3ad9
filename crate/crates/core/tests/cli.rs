mod common;

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use common::config_path;
use pivotal::cli::{run, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};
use pivotal::margin::{read_margin_csv, UncertaintyKind};
use pivotal::trajectory::{Mode, Trajectory};
use tempfile::TempDir;

fn pivotal(args: &[&str]) -> (i32, String) {
    let mut out = Vec::new();
    let code = run(
        std::iter::once("pivotal").chain(args.iter().copied()),
        &mut out,
    );
    (code, String::from_utf8(out).expect("utf-8 output"))
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Shared solved files: nominal and robust-mass gear 1 plus nominal peg 1.
struct Fixture {
    _dir: TempDir,
    gear_nominal: PathBuf,
    gear_robust: PathBuf,
    peg_nominal: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let solve = |obj: &str, mode: &str, extra: &[&str]| {
            let out = dir.path().join(format!("{obj}-{mode}.json"));
            let cfg = config_path(obj);
            let mut args = vec![
                "optimize",
                "--object",
                s(&cfg),
                "--mode",
                mode,
                "--out",
                s(&out),
                "--no-meta",
            ];
            args.extend_from_slice(extra);
            let (code, text) = pivotal(&args);
            assert_eq!(code, EXIT_OK, "{obj} {mode}: {text}");
            out
        };
        Fixture {
            gear_nominal: solve("gear1", "nominal", &[]),
            gear_robust: solve("gear1", "robust-mass", &[]),
            peg_nominal: solve("peg1", "nominal", &["--N", "15"]),
            _dir: dir,
        }
    })
}

#[test]
fn optimize_writes_trajectories_with_the_requested_mode() {
    let f = fixture();
    let robust = Trajectory::load(&f.gear_robust).unwrap();
    assert_eq!(robust.mode, Mode::RobustMass);
    assert!(robust.meta.robust.is_some());
    assert_eq!(robust.meta.created_unix, None);
    let text = std::fs::read_to_string(&f.gear_robust).unwrap();
    assert!(text.contains("\"robust-mass\""));
    let peg = Trajectory::load(&f.peg_nominal).unwrap();
    assert_eq!(peg.mode, Mode::Nominal);
    assert_eq!(peg.steps(), 15);
}

#[test]
fn optimize_prints_a_margin_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let cfg = config_path("peg1");
    let (code, text) = pivotal(&[
        "optimize",
        "--object",
        s(&cfg),
        "--out",
        s(&out),
        "--no-meta",
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(
        text.contains("eps+") && text.contains("r+") && text.contains("nominal"),
        "{text}"
    );
}

#[test]
fn optimize_without_meta_is_byte_reproducible() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let again = dir.path().join("again.json");
    let cfg = config_path("peg1");
    let (code, _) = pivotal(&[
        "optimize",
        "--object",
        s(&cfg),
        "--N",
        "15",
        "--out",
        s(&again),
        "--no-meta",
    ]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(
        std::fs::read(&again).unwrap(),
        std::fs::read(&f.peg_nominal).unwrap()
    );
}

#[test]
fn optimize_with_meta_records_a_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let cfg = config_path("peg1");
    assert_eq!(
        pivotal(&["optimize", "--object", s(&cfg), "--out", s(&out)]).0,
        EXIT_OK
    );
    assert!(Trajectory::load(&out).unwrap().meta.created_unix.is_some());
}

#[test]
fn usage_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(
        pivotal(&["optimize", "--object", s(&missing)]).0,
        EXIT_USAGE
    );
    assert_eq!(pivotal(&["optimize"]).0, EXIT_USAGE);
    assert_eq!(pivotal(&["frobnicate"]).0, EXIT_USAGE);
    let cfg = config_path("peg1");
    assert_eq!(
        pivotal(&["optimize", "--object", s(&cfg), "--mode", "sideways"]).0,
        EXIT_USAGE
    );
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(pivotal(&["margin", "--traj", s(&bad)]).0, EXIT_USAGE);
}

#[test]
fn margin_csv_has_one_row_per_step_and_matches_metadata() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let nominal_csv = dir.path().join("nominal.csv");
    assert_eq!(
        pivotal(&[
            "margin",
            "--traj",
            s(&f.gear_nominal),
            "--out",
            s(&nominal_csv)
        ])
        .0,
        EXIT_OK
    );
    let (unit, rows) = read_margin_csv(std::fs::File::open(&nominal_csv).unwrap()).unwrap();
    assert_eq!(unit, "N");
    assert_eq!(rows.len(), 60);

    let robust_csv = dir.path().join("robust.csv");
    assert_eq!(
        pivotal(&[
            "margin",
            "--traj",
            s(&f.gear_robust),
            "--out",
            s(&robust_csv)
        ])
        .0,
        EXIT_OK
    );
    let (_, rows) = read_margin_csv(std::fs::File::open(&robust_csv).unwrap()).unwrap();
    let traj = Trajectory::load(&f.gear_robust).unwrap();
    let meta = traj.meta.robust.as_ref().unwrap();
    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let worst_plus = min(rows.iter().map(|r| r.xi_plus).collect());
    let worst_minus = min(rows.iter().map(|r| r.xi_minus).collect());
    let prof = traj
        .margin_profile(UncertaintyKind::Mass, Some(meta.cap))
        .unwrap();
    assert!(
        (worst_plus - prof.worst_plus).abs() < 1e-9,
        "{worst_plus} vs {}",
        prof.worst_plus
    );
    assert!((worst_minus - prof.worst_minus).abs() < 1e-9);
    assert!(
        (worst_plus - meta.t_plus).abs() < 1e-6,
        "{worst_plus} vs {}",
        meta.t_plus
    );
}

#[test]
fn margin_of_an_empty_trajectory_is_an_error() {
    let f = fixture();
    let mut traj = Trajectory::load(&f.peg_nominal).unwrap();
    traj.states.clear();
    traj.controls.clear();
    traj.forces.clear();
    traj.slips.clear();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, serde_json::to_string(&traj.to_file()).unwrap()).unwrap();
    assert_ne!(pivotal(&["margin", "--traj", s(&path)]).0, EXIT_OK);
}

#[test]
fn margin_to_stdout_round_trips() {
    let f = fixture();
    let (code, text) = pivotal(&["margin", "--traj", s(&f.peg_nominal), "--kind", "com"]);
    assert_eq!(code, EXIT_OK);
    let (unit, rows) = read_margin_csv(text.as_bytes()).unwrap();
    assert_eq!(unit, "m");
    assert_eq!(rows.len(), 15);
}

#[test]
fn validate_exit_code_reflects_failures() {
    let f = fixture();
    let (code, text) = pivotal(&[
        "validate",
        "--traj",
        s(&f.gear_nominal),
        "--true-mass-g",
        "100,110,140,170",
    ]);
    assert_eq!(code, EXIT_FAILURE, "{text}");
    assert!(text.contains("/4"), "{text}");
    let (code, _) = pivotal(&[
        "validate",
        "--traj",
        s(&f.gear_nominal),
        "--true-mass-g",
        "140",
    ]);
    assert_eq!(code, EXIT_OK);
    let (code, _) = pivotal(&[
        "validate",
        "--traj",
        s(&f.gear_nominal),
        "--com-shift-mm",
        "0,-0.5,0.5",
    ]);
    assert_eq!(code, EXIT_OK);
}

#[test]
fn validate_without_perturbations_is_a_usage_error() {
    let f = fixture();
    assert_eq!(
        pivotal(&["validate", "--traj", s(&f.gear_nominal)]).0,
        EXIT_USAGE
    );
}

#[test]
fn validate_writes_a_csv_report() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    pivotal(&[
        "validate",
        "--traj",
        s(&f.gear_nominal),
        "--true-mass-g",
        "100,140",
        "--out",
        s(&out),
    ]);
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "eps_N,pass,first_failing_step");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].contains(",false,"));
    assert!(lines[2].ends_with(",true,"));
}

#[test]
fn plot_data_is_deterministic_and_checks_the_format() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    assert_eq!(
        pivotal(&["margin", "--traj", s(&f.gear_nominal), "--out", s(&csv)]).0,
        EXIT_OK
    );
    let render = |name: &str| {
        let out = dir.path().join(name);
        let args = [
            "plot-data",
            "--margin",
            s(&csv),
            "--traj",
            s(&f.gear_nominal),
            "--out",
            s(&out),
        ];
        assert_eq!(pivotal(&args).0, EXIT_OK);
        std::fs::read(out).unwrap()
    };
    let a = render("a.svg");
    assert_eq!(a, render("b.svg"));
    assert!(a.starts_with(b"<svg"));
    let (code, text) = pivotal(&["plot-data", "--margin", s(&csv), "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert!(text.starts_with("k,series,value\n"));
    assert_eq!(
        pivotal(&["plot-data", "--margin", s(&csv), "--format", "png"]).0,
        EXIT_USAGE
    );
    assert_eq!(pivotal(&["plot-data"]).0, EXIT_USAGE);
}

#[test]
fn plot_data_of_an_empty_profile_is_an_empty_svg() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("empty.csv");
    std::fs::write(&csv, "k,bound_A_N,bound_B_N,xi_plus_N,xi_minus_N\n").unwrap();
    let (code, text) = pivotal(&["plot-data", "--margin", s(&csv)]);
    assert_eq!(code, EXIT_OK);
    assert!(text.starts_with("<svg") && !text.contains("<polyline"));
}

#[test]
fn written_trajectories_reload_without_loss() {
    let f = fixture();
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("copy.json");
    for path in [&f.gear_nominal, &f.gear_robust, &f.peg_nominal] {
        Trajectory::load(path).unwrap().save(&copy).unwrap();
        assert_eq!(std::fs::read(&copy).unwrap(), std::fs::read(path).unwrap());
    }
}
