mod common;

use common::{object, solved};
use pivotal::margin::{read_margin_csv, ActiveRow, MarginCsvRow, UncertaintyKind};
use pivotal::object::contact_geometry;
use pivotal::plot::{margin_svg, snapshots, tidy_csv, PlotFormat};
use pivotal::trajectory::Trajectory;
use pivotal::validate::{
    mass_perturbations, perturb_sweep, static_feasible, Perturbation, STATIC_TOL,
};

/// Signed `(eps, r)` that moves the uncertainty by `xi` in the given direction.
fn shift(kind: UncertaintyKind, plus: bool, xi: f64) -> (f64, f64) {
    match (kind, plus) {
        // the plus mass direction removes weight
        (UncertaintyKind::Mass, true) => (-xi, 0.0),
        (UncertaintyKind::Mass, false) => (xi, 0.0),
        (UncertaintyKind::Com, true) => (0.0, xi),
        (UncertaintyKind::Com, false) => (0.0, -xi),
    }
}

fn check_brackets(traj: &Trajectory, kind: UncertaintyKind) -> usize {
    let prof = traj.margin_profile(kind, None).unwrap();
    let mut checked = 0;
    for ((x, u), step) in traj.step_pairs().zip(&prof.steps) {
        let geom = contact_geometry(&traj.object, x).unwrap();
        for (plus, lp) in [(true, step.plus), (false, step.minus)] {
            let inside = shift(kind, plus, 0.5 * lp.xi);
            assert!(
                static_feasible(&geom, u, &traj.object, inside.0, inside.1, STATIC_TOL).unwrap()
            );
            if lp.active == ActiveRow::Cap || lp.infeasible {
                continue;
            }
            let past = shift(kind, plus, lp.xi + 1e-6);
            assert!(
                !static_feasible(&geom, u, &traj.object, past.0, past.1, STATIC_TOL).unwrap(),
                "{kind} plus={plus}: feasible past the bound {}",
                lp.xi
            );
            checked += 1;
        }
    }
    checked
}

#[test]
fn static_feasibility_brackets_the_mass_margin() {
    let s = solved("gear1", None);
    assert!(check_brackets(&s.0, UncertaintyKind::Mass) > 0);
}

#[test]
fn static_feasibility_brackets_the_com_margin() {
    let s = solved("gear1", None);
    assert!(check_brackets(&s.0, UncertaintyKind::Com) > 0);
}

#[test]
fn zero_perturbation_passes_on_accepted_trajectories() {
    for name in ["gear1", "peg1"] {
        let s = solved(name, None);
        for kind in [Perturbation::Mass, Perturbation::Com] {
            let rep = perturb_sweep(&s.0, kind, &[0.0]).unwrap();
            assert!(rep.all_pass(), "{name} {kind:?}");
            assert_eq!(rep.rows[0].first_failing_step, None);
        }
    }
}

#[test]
fn empty_perturbation_list_gives_empty_table() {
    let s = solved("gear1", None);
    let rep = perturb_sweep(&s.0, Perturbation::Mass, &[]).unwrap();
    assert!(rep.rows.is_empty());
    assert!(rep.all_pass());
    assert_eq!(rep.summary(), "0/0 perturbations feasible");
    let mut buf = Vec::new();
    rep.write_csv(&mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "eps_N,pass,first_failing_step\n"
    );
}

#[test]
fn sweep_is_monotone_in_perturbation_size() {
    let s = solved("gear1", None);
    let w = s.0.object.weight();
    for (kind, scale) in [
        (Perturbation::Mass, w),
        (Perturbation::Com, s.0.object.profile.length()),
    ] {
        for side in [1.0, -1.0] {
            let values: Vec<f64> = (0..=40).map(|i| side * scale * i as f64 / 20.0).collect();
            let rep = perturb_sweep(&s.0, kind, &values).unwrap();
            let first_fail = rep
                .rows
                .iter()
                .position(|r| !r.pass)
                .unwrap_or(rep.rows.len());
            assert!(
                rep.rows[first_fail..].iter().all(|r| !r.pass),
                "{kind:?} side {side}: pass after a failure"
            );
        }
    }
}

#[test]
fn mass_perturbations_follow_true_minus_assumed() {
    let obj = object("gear1");
    let eps = mass_perturbations(&obj, &[obj.m * 1e3, 170.0]).unwrap();
    assert!(eps[0].abs() < 1e-12);
    assert!((eps[1] - (0.170 - obj.m) * obj.g_mag).abs() < 1e-12);
    assert!(mass_perturbations(&obj, &[0.0]).is_err());
}

#[test]
fn nominal_fails_when_much_lighter_than_planned() {
    let s = solved("gear1", None);
    let eps = mass_perturbations(&s.0.object, &[100.0]).unwrap();
    let rep = perturb_sweep(&s.0, Perturbation::Mass, &eps).unwrap();
    assert!(!rep.all_pass());
    assert!(rep.rows[0].first_failing_step.is_some());
}

fn csv_rows(traj: &Trajectory, kind: UncertaintyKind) -> (String, Vec<MarginCsvRow>) {
    let mut buf = Vec::new();
    traj.margin_profile(kind, None)
        .unwrap()
        .write_csv(&mut buf)
        .unwrap();
    read_margin_csv(buf.as_slice()).unwrap()
}

#[test]
fn svg_is_deterministic() {
    let s = solved("gear1", None);
    let (unit, rows) = csv_rows(&s.0, UncertaintyKind::Mass);
    let outlines = snapshots(&s.0, 5).unwrap();
    let a = margin_svg(&unit, &rows, &outlines);
    let b = margin_svg(&unit, &rows, &snapshots(&s.0, 5).unwrap());
    assert_eq!(a, b);
    assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
    assert_eq!(a.matches("<polyline").count(), 2);
    assert_eq!(a.matches("<polygon").count(), 5);
}

#[test]
fn empty_profile_renders_an_empty_plot() {
    let svg = margin_svg("N", &[], &[]);
    assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    assert!(!svg.contains("<polyline"));
    assert_eq!(tidy_csv("N", &[]), "k,series,value\n");
}

#[test]
fn unknown_plot_format_is_rejected() {
    assert_eq!("svg".parse::<PlotFormat>().unwrap(), PlotFormat::Svg);
    assert_eq!("CSV".parse::<PlotFormat>().unwrap(), PlotFormat::Csv);
    assert!("png".parse::<PlotFormat>().is_err());
}

#[test]
fn tidy_csv_has_one_line_per_present_value() {
    let s = solved("gear1", None);
    let (unit, rows) = csv_rows(&s.0, UncertaintyKind::Mass);
    let present: usize = rows
        .iter()
        .map(|r| 2 + r.bound_a.is_some() as usize + r.bound_b.is_some() as usize)
        .sum();
    let text = tidy_csv(&unit, &rows);
    assert_eq!(text.lines().count(), present + 1);
    assert!(text.lines().nth(1).unwrap().starts_with("0,"));
}

#[test]
fn snapshots_cover_first_and_last_pose() {
    let s = solved("gear1", None);
    let shots = snapshots(&s.0, 4).unwrap();
    assert_eq!(shots.len(), 4);
    let body = s.0.object.profile.outline();
    // the first pose is upright, so its outline is the body outline
    for (p, q) in shots[0].iter().zip(&body) {
        assert!((p[0] - q[0]).abs() < 1e-12 && (p[1] - q[1]).abs() < 1e-12);
    }
    let last = contact_geometry(&s.0.object, *s.0.states.last().unwrap()).unwrap();
    let q = body[1];
    let expect = [
        last.rot[0][0] * q[0] + last.rot[0][1] * q[1],
        last.rot[1][0] * q[0] + last.rot[1][1] * q[1],
    ];
    assert!(
        (shots[3][1][0] - expect[0]).abs() < 1e-12 && (shots[3][1][1] - expect[1]).abs() < 1e-12
    );
    assert!(snapshots(&s.0, 0).unwrap().is_empty());
}
