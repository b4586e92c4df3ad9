//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. Failing criteria are reported but only
//! fail the process when `PIVOTAL_ACCEPTANCE_STRICT=1`; panics always fail.

mod common;

use std::f64::consts::FRAC_PI_2;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{object, solved, ALPHA, OBJECTS};
use pivotal::margin::{
    com_margin_bounds, lp_margin, margin_oracle, mass_margin_bounds, Direction, UncertaintyKind,
    FEASIBILITY_TOL,
};
use pivotal::mechanics::{
    equilibrium_residual, slip_complementarity_residuals, slip_equalities, solve_contact_forces,
};
use pivotal::object::{contact_geometry, ObjectParams, PoseState};
use pivotal::ocp::{build_nominal, OcpSpec};
use pivotal::robust::{bilevel_consistency, build_robust, evaluate_worstcase, RobustConfig};
use pivotal::solver::check_derivatives;
use pivotal::trajectory::Trajectory;
use pivotal::validate::{mass_perturbations, perturb_sweep, Perturbation};

const ORACLE_SAMPLES: usize = 1000;
const ORACLE_TOL: f64 = 1e-6;
const EQ_TOL: f64 = 1e-6;
const COMPL_TOL: f64 = 1e-6;
const THETA_TOL: f64 = 1e-9;
const CONSISTENCY_TOL: f64 = 1e-6;
const DERIV_TOL: f64 = 1e-5;
const ROUND_TRIP_TOL: f64 = 1e-10;
const ROUND_TRIP_SAMPLES: usize = 10_000;
const FACTOR: f64 = 3.0;
/// Reference worst-case margins for gear 1: nominal and robust, mass (N) and CoM (m).
const REF_NOMINAL: [f64; 4] = [0.10, 0.66, 1.5e-3, 0.85e-3];
const REF_ROBUST: [f64; 4] = [0.34, 0.50, 3.43e-3, 2.70e-3];
/// Reference peg-1 mass margins: nominal then robust.
const REF_PEG: [f64; 4] = [0.035, 0.018, 0.050, 0.021];
const SWEEP_MASSES_G: [f64; 4] = [100.0, 110.0, 140.0, 170.0];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Random pose and input with both normal forces nonnegative.
fn feasible_sample(
    obj: &ObjectParams,
    rng: &mut ChaCha8Rng,
) -> (pivotal::object::ContactGeometry, (f64, f64)) {
    loop {
        let x = PoseState::new(
            rng.gen_range(0.0..FRAC_PI_2),
            rng.gen_range(0.0..obj.profile.far_width()),
        );
        let Ok(g) = contact_geometry(obj, x) else {
            continue;
        };
        let f_np = rng.gen_range(0.0..obj.f_u);
        let f_tp = rng.gen_range(-obj.mu_p * f_np..=obj.mu_p * f_np);
        let Ok(f) = solve_contact_forces(&g, (f_np, f_tp), obj, obj.m, 0.0) else {
            continue;
        };
        if f.f_na >= 0.0 && f.f_nb >= 0.0 {
            return (g, (f_np, f_tp));
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for (i, name) in OBJECTS.iter().enumerate() {
        let obj = object(name);
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
        for _ in 0..ORACLE_SAMPLES {
            let (g, u) = feasible_sample(&obj, &mut rng);
            for kind in [UncertaintyKind::Mass, UncertaintyKind::Com] {
                let bounds = match kind {
                    UncertaintyKind::Mass => mass_margin_bounds(&g, u, &obj),
                    UncertaintyKind::Com => com_margin_bounds(&g, u, &obj),
                }
                .expect("nonsingular sample");
                let cap = kind.default_cap(&obj);
                for dir in [Direction::Plus, Direction::Minus] {
                    let lp = lp_margin(&bounds, dir, cap).unwrap().xi;
                    let oracle = margin_oracle(&g, u, &obj, kind, dir, cap).unwrap().xi;
                    worst = worst.max((lp - oracle).abs());
                }
            }
            count += 1;
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= ORACLE_TOL && t < Duration::from_secs(30),
        format!("{count} samples, max |analytic - oracle| = {worst:.2e} (tol {ORACLE_TOL:e}), {t:.2?} (< 30 s)"),
    )
}

struct StepChecks {
    equilibrium: f64,
    complementarity: f64,
}

fn step_checks(t: &Trajectory) -> StepChecks {
    let obj = &t.object;
    let mut eq = 0.0f64;
    let mut compl = 0.0f64;
    for (k, (x, _)) in t.step_pairs().enumerate() {
        let g = contact_geometry(obj, x).unwrap();
        let f = &t.forces[k];
        for v in equilibrium_residual(&g, f, obj.g_mag, obj.m, 0.0)
            .into_iter()
            .chain(slip_equalities(f, obj.mu()))
        {
            eq = eq.max(v.abs());
        }
        for (a, b) in slip_complementarity_residuals(f, &t.slips[k], obj.mu()) {
            compl = compl.max(a * b);
        }
    }
    StepChecks {
        equilibrium: eq,
        complementarity: compl,
    }
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let s = solved("gear1", None);
    let t = start.elapsed();
    let (traj, report) = (&s.0, &s.1);
    let c = step_checks(traj);
    let theta_n = traj.states.last().unwrap().theta;
    let eq = c.equilibrium.max(report.feasibility);
    let pass = report.converged()
        && traj.steps() == 60
        && eq < EQ_TOL
        && c.complementarity < COMPL_TOL
        && (theta_n - FRAC_PI_2).abs() <= THETA_TOL
        && t < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "N={}, equality residual {eq:.2e}, max complementarity {:.2e}, |theta_N - pi/2| = {:.1e}, {} iterations, {t:.2?}",
            traj.steps(),
            c.complementarity,
            (theta_n - FRAC_PI_2).abs(),
            report.total_iterations()
        ),
    )
}

fn within_factor(v: f64, reference: f64) -> bool {
    v > 0.0 && v <= FACTOR * reference && v >= reference / FACTOR
}

fn criterion_3() -> Outcome {
    let nominal = solved("gear1", None);
    let mass = solved("gear1", Some(UncertaintyKind::Mass));
    let com = solved("gear1", Some(UncertaintyKind::Com));
    let wc = |t: &Trajectory, k| evaluate_worstcase(t, k, ALPHA, None).unwrap();
    let (nm, rm) = (
        wc(&nominal.0, UncertaintyKind::Mass),
        wc(&mass.0, UncertaintyKind::Mass),
    );
    let (nc, rc) = (
        wc(&nominal.0, UncertaintyKind::Com),
        wc(&com.0, UncertaintyKind::Com),
    );
    let mass_dominates = rm.objective > nm.objective;
    let com_dominates = rc.worst_plus > nc.worst_plus && rc.worst_minus > nc.worst_minus;
    let ours = [rm.worst_plus, rm.worst_minus, rc.worst_plus, rc.worst_minus];
    let magnitude: Vec<bool> = ours
        .iter()
        .zip(REF_ROBUST)
        .map(|(&v, r)| within_factor(v, r))
        .collect();
    let pass = mass_dominates && com_dominates && magnitude.iter().all(|&b| b);
    outcome(
        pass,
        format!(
            "mass objective robust {:.6} vs nominal {:.6} ({}); eps+/eps- [N] nominal {:.4}/{:.4} (ref {}/{}), robust {:.4}/{:.4} (ref {}/{}); \
             r+/r- [mm] nominal {:.3}/{:.3} (ref {:.2}/{:.2}), robust {:.3}/{:.3} (ref {:.2}/{:.2}) ({}); within x{FACTOR} of ref: {:?}",
            rm.objective,
            nm.objective,
            if mass_dominates { "dominates" } else { "does not dominate" },
            nm.worst_plus,
            nm.worst_minus,
            REF_NOMINAL[0],
            REF_NOMINAL[1],
            rm.worst_plus,
            rm.worst_minus,
            REF_ROBUST[0],
            REF_ROBUST[1],
            nc.worst_plus * 1e3,
            nc.worst_minus * 1e3,
            REF_NOMINAL[2] * 1e3,
            REF_NOMINAL[3] * 1e3,
            rc.worst_plus * 1e3,
            rc.worst_minus * 1e3,
            REF_ROBUST[2] * 1e3,
            REF_ROBUST[3] * 1e3,
            if com_dominates { "both improve" } else { "not both improved" },
            magnitude
        ),
    )
}

fn criterion_4() -> Outcome {
    let nominal = solved("peg1", None);
    let mass = solved("peg1", Some(UncertaintyKind::Mass));
    let com = solved("peg1", Some(UncertaintyKind::Com));
    let all_solved = [&nominal, &mass, &com]
        .iter()
        .all(|s| s.1.converged() && s.0.steps() == 15);
    let n = evaluate_worstcase(&nominal.0, UncertaintyKind::Mass, ALPHA, None).unwrap();
    let r = evaluate_worstcase(&mass.0, UncertaintyKind::Mass, ALPHA, None).unwrap();
    let weak = r.worst_plus >= n.worst_plus - FEASIBILITY_TOL
        && r.worst_minus >= n.worst_minus - FEASIBILITY_TOL;
    outcome(
        all_solved && weak,
        format!(
            "three modes solved: {all_solved}; eps+/eps- [N] nominal {:.6}/{:.6} (ref {}/{}), robust {:.6}/{:.6} (ref {}/{}); weak dominance (tol {FEASIBILITY_TOL:e}): {weak}",
            n.worst_plus, n.worst_minus, REF_PEG[0], REF_PEG[1], r.worst_plus, r.worst_minus, REF_PEG[2], REF_PEG[3]
        ),
    )
}

fn criterion_5() -> Outcome {
    let robust = solved("gear1", Some(UncertaintyKind::Mass));
    let nominal = solved("gear1", None);
    let start = Instant::now();
    let eps = mass_perturbations(&robust.0.object, &SWEEP_MASSES_G).unwrap();
    let r = perturb_sweep(&robust.0, Perturbation::Mass, &eps).unwrap();
    let n = perturb_sweep(&nominal.0, Perturbation::Mass, &eps).unwrap();
    let t = start.elapsed();
    let fmt = |rep: &pivotal::validate::SweepReport| {
        SWEEP_MASSES_G
            .iter()
            .zip(&rep.rows)
            .map(|(m, row)| format!("{m}g:{}", if row.pass { "pass" } else { "fail" }))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let nominal_fails_170 = !n.rows[3].pass;
    outcome(
        r.all_pass() && nominal_fails_170 && t < Duration::from_secs(5),
        format!("robust [{}], nominal [{}], {t:.2?}", fmt(&r), fmt(&n)),
    )
}

fn criterion_6() -> Outcome {
    let mut worst_lp = 0.0f64;
    let mut worst_t = 0.0f64;
    let mut names = Vec::new();
    for name in ["gear1", "peg1"] {
        for kind in [UncertaintyKind::Mass, UncertaintyKind::Com] {
            let s = solved(name, Some(kind));
            let c = bilevel_consistency(&s.0).unwrap();
            worst_lp = worst_lp.max(c.lp_gap);
            worst_t = worst_t.max(c.epigraph_gap);
            names.push(format!("{name}/{kind}"));
        }
    }
    outcome(
        worst_lp <= CONSISTENCY_TOL && worst_t <= CONSISTENCY_TOL,
        format!(
            "{}: max |embedded - lp_margin| = {worst_lp:.2e}, max |t - min_k eps| = {worst_t:.2e} (tol {CONSISTENCY_TOL:e})",
            names.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let obj = object("gear1");
    let spec = OcpSpec::for_object(&obj, 60);
    let nominal = solved("gear1", None);
    let robust = solved("gear1", Some(UncertaintyKind::Mass));
    let first_delta = pivotal::solver::SolverOptions::default().homotopy[0];

    let nom = build_nominal(&obj, &spec).unwrap();
    let mut cfg = RobustConfig::new(UncertaintyKind::Mass, ALPHA);
    cfg.u_reg = robust.0.meta.robust.as_ref().unwrap().u_reg;
    let rob = build_robust(&obj, &spec, &cfg, Some(&nominal.0)).unwrap();
    let checks = [
        check_derivatives(&nom.nlp, nom.nlp.initial_point(), first_delta).max_error(),
        check_derivatives(&nom.nlp, &nominal.1.x, nominal.1.final_delta).max_error(),
        check_derivatives(&rob.base.nlp, rob.base.nlp.initial_point(), first_delta).max_error(),
        check_derivatives(&rob.base.nlp, &robust.1.x, robust.1.final_delta).max_error(),
    ];
    let deriv = checks.iter().copied().fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut rt = 0.0f64;
    let mut n = 0;
    while n < ROUND_TRIP_SAMPLES {
        let o = object(OBJECTS[n % OBJECTS.len()]);
        let x = PoseState::new(
            rng.gen_range(0.0..FRAC_PI_2),
            rng.gen_range(0.0..o.profile.far_width()),
        );
        let g = contact_geometry(&o, x).unwrap();
        let u = (rng.gen_range(0.0..o.f_u), rng.gen_range(-o.f_u..o.f_u));
        let m_eff = o.m * rng.gen_range(0.5..1.5);
        let r = rng.gen_range(-0.01..0.01);
        let Ok(f) = solve_contact_forces(&g, u, &o, m_eff, r) else {
            continue;
        };
        for v in equilibrium_residual(&g, &f, o.g_mag, m_eff, r) {
            rt = rt.max(v.abs());
        }
        n += 1;
    }
    outcome(
        deriv < DERIV_TOL && rt < ROUND_TRIP_TOL,
        format!(
            "derivative errors nominal warm/solution {:.1e}/{:.1e}, robust warm/solution {:.1e}/{:.1e} (tol {DERIV_TOL:e}); \
             contact-force round trip max {rt:.1e} over {n} points (tol {ROUND_TRIP_TOL:e})",
            checks[0], checks[1], checks[2], checks[3]
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 7] = [
        ("oracle equivalence", criterion_1),
        ("nominal solve", criterion_2),
        ("robustness dominance", criterion_3),
        ("peg instance", criterion_4),
        ("perturbation sweep", criterion_5),
        ("bilevel consistency", criterion_6),
        ("numerical hygiene", criterion_7),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    let mut ran = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let o = run();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {} {}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            name,
            o.detail
        );
    }
    println!("acceptance: {}/{ran} criteria pass", ran - failed);
    if failed > 0 && std::env::var("PIVOTAL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
