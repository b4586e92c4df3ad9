//! Nominal contact-implicit trajectory optimization for pivoting.
//!
//! Decision variables per knot `k = 0..=N` are the pivot angle `theta_k` and
//! the finger position `p_k` (stored scaled by the far-face width). Each
//! control step `k < N` adds the manipulator input, the four external contact
//! force components, the finger slip `p_{k+1} - p_k = s+ - s-` and the two
//! finger cone slacks `c± = mu_P f_nP ∓ f_tP`, with `s+ ⊥ c+` and `s- ⊥ c-`.

use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use crate::ad::{Jet, Scalar};
use crate::error::{Error, Result};
use crate::margin::UncertaintyKind;
use crate::mechanics::{
    admissible_line, equilibrium_residual, equilibrium_terms, manipulator_force,
    solve_contact_forces, ContactForces, SlipSlacks,
};
use crate::object::{contact_geometry, points, ObjectParams, PoseState};
use crate::solver::{self, NlpProblem, RowKind, SolveReport, SolverOptions};
use crate::trajectory::{MarginSummary, Mode, SpecSummary, Trajectory, TrajectoryMeta};

/// Equilibrium and slip residual tolerance for accepted trajectories.
pub const EXTRACT_TOL: f64 = 1e-6;
/// Boundary-state tolerance.
pub const BOUNDARY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct OcpSpec {
    pub n: usize,
    pub x_s: PoseState,
    pub x_g: PoseState,
    /// State weights for `(theta, p_y)`.
    pub q: [f64; 2],
    /// Input weights for `(f_nP, f_tP)`.
    pub r: [f64; 2],
    pub theta_bounds: [f64; 2],
    /// Finger position range in m.
    pub p_bounds: [f64; 2],
    pub f_np_bounds: [f64; 2],
    pub f_tp_bounds: [f64; 2],
    /// Cap on every normal force.
    pub f_u: f64,
    pub theta_rate_max: f64,
}

impl OcpSpec {
    /// Defaults for pivoting from lying flat to upright with `N` steps.
    pub fn for_object(obj: &ObjectParams, n: usize) -> Self {
        let w = obj.profile.far_width();
        let f_u = obj.f_u;
        OcpSpec {
            n,
            x_s: PoseState::new(0.0, 0.25 * w),
            x_g: PoseState::new(FRAC_PI_2, 0.25 * w),
            q: [0.1, 0.0],
            r: [0.01, 0.01],
            theta_bounds: [0.0, FRAC_PI_2],
            p_bounds: [0.0, w],
            f_np_bounds: [0.0, f_u],
            f_tp_bounds: [-obj.mu_p * f_u, obj.mu_p * f_u],
            f_u,
            theta_rate_max: FRAC_PI_2 / (0.5 * n as f64),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Build(m));
        if self.n < 2 {
            return bad(format!("N must be at least 2, got {}", self.n));
        }
        if self.q.iter().any(|&q| !(q >= 0.0 && q.is_finite())) {
            return bad("state weights must be nonnegative".into());
        }
        if self.r.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad("input weights must be positive".into());
        }
        for (name, b) in [
            ("theta", self.theta_bounds),
            ("p_y", self.p_bounds),
            ("f_nP", self.f_np_bounds),
            ("f_tP", self.f_tp_bounds),
        ] {
            if !(b[0] <= b[1]) || b.iter().any(|v| v.is_nan()) {
                return bad(format!("empty {name} bounds {b:?}"));
            }
        }
        if !(self.f_u > 0.0) {
            return bad("force cap must be positive".into());
        }
        if !(self.theta_rate_max > 0.0) {
            return bad("theta rate cap must be positive".into());
        }
        for (name, x) in [("start", self.x_s), ("goal", self.x_g)] {
            let inside = |v: f64, b: [f64; 2]| v >= b[0] && v <= b[1];
            if !inside(x.theta, self.theta_bounds) || !inside(x.p_y, self.p_bounds) {
                return bad(format!("{name} state {x:?} violates the state bounds"));
            }
        }
        if self.x_g.theta < self.x_s.theta {
            return bad("goal angle precedes the start angle".into());
        }
        if self.x_g.theta - self.x_s.theta > self.theta_rate_max * self.n as f64 + 1e-12 {
            return bad("goal angle unreachable under the rate cap".into());
        }
        Ok(())
    }

    pub fn summary(&self) -> SpecSummary {
        SpecSummary {
            n: self.n,
            q: self.q,
            r: self.r,
            theta_rate_max: self.theta_rate_max,
        }
    }
}

/// Variable indices of one control step.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StageVars {
    pub f_np: usize,
    pub f_tp: usize,
    pub f_na: usize,
    pub f_ta: usize,
    pub f_nb: usize,
    pub f_tb: usize,
    pub s_plus: usize,
    pub s_minus: usize,
    pub c_plus: usize,
    pub c_minus: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OcpLayout {
    pub theta: Vec<usize>,
    /// Finger position divided by [`OcpLayout::p_scale`].
    pub p: Vec<usize>,
    pub stages: Vec<StageVars>,
    pub p_scale: f64,
}

/// A transcribed problem together with the data needed to unpack it.
#[derive(Clone)]
pub struct OcpProblem {
    pub nlp: NlpProblem,
    pub layout: OcpLayout,
    pub spec: OcpSpec,
    pub obj: ObjectParams,
}

/// Initial guess: linear angle, constant finger, admissible inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub states: Vec<PoseState>,
    pub controls: Vec<(f64, f64)>,
    pub forces: Vec<ContactForces>,
}

/// Chooses the smallest input on the admissible line keeping every force
/// within its bounds; falls back to the least-violating input.
fn admissible_input(obj: &ObjectParams, spec: &OcpSpec, x: PoseState) -> Result<(f64, f64)> {
    let geom = contact_geometry(obj, x)?;
    let Some(line) = admissible_line(&geom, obj, obj.m, 0.0)? else {
        return Ok((0.0, 0.0));
    };
    let forces = |f_np: f64| solve_contact_forces(&geom, (f_np, line.f_tp(f_np)), obj, obj.m, 0.0);
    let f0 = forces(0.0)?;
    let f1 = forces(1.0)?;
    // constraints g(f) = a + b f >= 0 along the line
    let mu_p = obj.mu_p;
    let rows = [
        (f0.f_na, f1.f_na - f0.f_na),
        (f0.f_nb, f1.f_nb - f0.f_nb),
        (spec.f_u - f0.f_na, -(f1.f_na - f0.f_na)),
        (spec.f_u - f0.f_nb, -(f1.f_nb - f0.f_nb)),
        (-line.tp_offset, mu_p - line.tp_slope),
        (line.tp_offset, mu_p + line.tp_slope),
        (line.tp_offset - spec.f_tp_bounds[0], line.tp_slope),
        (spec.f_tp_bounds[1] - line.tp_offset, -line.tp_slope),
    ];
    let (mut lo, mut hi) = (spec.f_np_bounds[0], spec.f_np_bounds[1]);
    for &(a, b) in &rows {
        if b > 0.0 {
            lo = lo.max(-a / b);
        } else if b < 0.0 {
            hi = hi.min(-a / b);
        } else if a < 0.0 {
            hi = f64::NEG_INFINITY;
        }
    }
    let s = line.tp_slope;
    let target = -line.tp_offset * s / (1.0 + s * s);
    let f_np = if lo <= hi {
        target.clamp(lo, hi)
    } else {
        let violation = |f: f64| {
            rows.iter()
                .map(|&(a, b)| (-(a + b * f)).max(0.0))
                .sum::<f64>()
        };
        let grid = 4000;
        (0..=grid)
            .map(|i| {
                spec.f_np_bounds[0]
                    + (spec.f_np_bounds[1] - spec.f_np_bounds[0]) * i as f64 / grid as f64
            })
            .min_by(|a, b| violation(*a).total_cmp(&violation(*b)))
            .unwrap_or(0.0)
    };
    let f_tp = line
        .f_tp(f_np)
        .clamp(spec.f_tp_bounds[0], spec.f_tp_bounds[1]);
    Ok((f_np, f_tp))
}

pub fn warm_start(obj: &ObjectParams, spec: &OcpSpec) -> Result<WarmStart> {
    spec.validate()?;
    let n = spec.n;
    let states: Vec<PoseState> = (0..=n)
        .map(|k| {
            let t = k as f64 / n as f64;
            PoseState::new(
                spec.x_s.theta + t * (spec.x_g.theta - spec.x_s.theta),
                spec.x_s.p_y,
            )
        })
        .collect();
    let mut controls = Vec::with_capacity(n);
    let mut forces = Vec::with_capacity(n);
    for x in &states[..n] {
        let u = admissible_input(obj, spec, *x)?;
        let geom = contact_geometry(obj, *x)?;
        forces.push(solve_contact_forces(&geom, u, obj, obj.m, 0.0)?);
        controls.push(u);
    }
    Ok(WarmStart {
        states,
        controls,
        forces,
    })
}

/// Builds the nominal problem with the quadratic stage cost.
pub fn build_nominal(obj: &ObjectParams, spec: &OcpSpec) -> Result<OcpProblem> {
    build_core(obj, spec, true, 0.0)
}

/// Shared transcription. `stage_cost` toggles the tracking objective;
/// `u_reg` adds `u_reg * |u|²` per step on top.
pub(crate) fn build_core(
    obj: &ObjectParams,
    spec: &OcpSpec,
    stage_cost: bool,
    u_reg: f64,
) -> Result<OcpProblem> {
    obj.validate().map_err(|e| Error::Build(e.to_string()))?;
    spec.validate()?;
    let ws = warm_start(obj, spec)?;
    let n = spec.n;
    let w = obj.profile.far_width();
    let len = obj.profile.length();
    let mu = obj.mu();
    let mut nlp = NlpProblem::new();

    let mut theta = Vec::with_capacity(n + 1);
    let mut p = Vec::with_capacity(n + 1);
    for (k, x) in ws.states.iter().enumerate() {
        let (tl, tu) = if k == 0 {
            (spec.x_s.theta, spec.x_s.theta)
        } else if k == n {
            (spec.x_g.theta, spec.x_g.theta)
        } else {
            (spec.theta_bounds[0], spec.theta_bounds[1])
        };
        theta.push(nlp.add_var(format!("theta[{k}]"), tl, tu, x.theta));
        let (pl, pu) = if k == 0 {
            (spec.x_s.p_y / w, spec.x_s.p_y / w)
        } else {
            (spec.p_bounds[0] / w, spec.p_bounds[1] / w)
        };
        p.push(nlp.add_var(format!("p[{k}]"), pl, pu, x.p_y / w));
    }

    let mut stages = Vec::with_capacity(n);
    for k in 0..n {
        let f = &ws.forces[k];
        let (f_np, f_tp) = ws.controls[k];
        let inf = f64::INFINITY;
        let sv = StageVars {
            f_np: nlp.add_var(
                format!("f_nP[{k}]"),
                spec.f_np_bounds[0],
                spec.f_np_bounds[1],
                f_np,
            ),
            f_tp: nlp.add_var(
                format!("f_tP[{k}]"),
                spec.f_tp_bounds[0],
                spec.f_tp_bounds[1],
                f_tp,
            ),
            f_na: nlp.add_var(format!("f_nA[{k}]"), 0.0, spec.f_u, f.f_na),
            f_ta: nlp.add_var(format!("f_tA[{k}]"), -inf, inf, f.f_ta),
            f_nb: nlp.add_var(format!("f_nB[{k}]"), 0.0, spec.f_u, f.f_nb),
            f_tb: nlp.add_var(format!("f_tB[{k}]"), -inf, inf, f.f_tb),
            s_plus: nlp.add_var(format!("s+[{k}]"), 0.0, inf, 0.0),
            s_minus: nlp.add_var(format!("s-[{k}]"), 0.0, inf, 0.0),
            c_plus: nlp.add_var(format!("c+[{k}]"), 0.0, inf, (mu[2] * f_np - f_tp).max(0.0)),
            c_minus: nlp.add_var(format!("c-[{k}]"), 0.0, inf, (mu[2] * f_np + f_tp).max(0.0)),
        };

        let profile = obj.profile;
        let weight = obj.weight();
        nlp.add_block(
            &format!("equilibrium[{k}]"),
            vec![
                theta[k], p[k], sv.f_np, sv.f_tp, sv.f_na, sv.f_ta, sv.f_nb, sv.f_tb,
            ],
            &[RowKind::Eq; 3],
            Arc::new(move |v: &[Jet]| {
                let pts = points(&profile, v[0], v[1] * w);
                let f_xy = manipulator_force(pts.sin, pts.cos, v[2], v[3]);
                let [fx, fy, moment] = equilibrium_terms(
                    &pts,
                    v[4],
                    v[5],
                    v[6],
                    v[7],
                    f_xy,
                    Jet::cst(weight),
                    Jet::cst(0.0),
                );
                vec![fx, fy, moment / len]
            }),
        )?;
        nlp.add_linear(
            format!("slip_A[{k}]"),
            RowKind::Eq,
            vec![(sv.f_ta, 1.0), (sv.f_na, -mu[0])],
            0.0,
        );
        nlp.add_linear(
            format!("slip_B[{k}]"),
            RowKind::Eq,
            vec![(sv.f_tb, 1.0), (sv.f_nb, mu[1])],
            0.0,
        );
        nlp.add_linear(
            format!("finger_slide[{k}]"),
            RowKind::Eq,
            vec![
                (p[k + 1], 1.0),
                (p[k], -1.0),
                (sv.s_plus, -1.0),
                (sv.s_minus, 1.0),
            ],
            0.0,
        );
        nlp.add_linear(
            format!("cone+[{k}]"),
            RowKind::Eq,
            vec![(sv.c_plus, 1.0), (sv.f_np, -mu[2]), (sv.f_tp, 1.0)],
            0.0,
        );
        nlp.add_linear(
            format!("cone-[{k}]"),
            RowKind::Eq,
            vec![(sv.c_minus, 1.0), (sv.f_np, -mu[2]), (sv.f_tp, -1.0)],
            0.0,
        );
        nlp.add_linear(
            format!("monotone[{k}]"),
            RowKind::Ineq,
            vec![(theta[k + 1], 1.0), (theta[k], -1.0)],
            0.0,
        );
        nlp.add_linear(
            format!("rate[{k}]"),
            RowKind::Ineq,
            vec![(theta[k + 1], -1.0), (theta[k], 1.0)],
            spec.theta_rate_max,
        );
        nlp.add_complementarity(sv.s_plus, sv.c_plus)?;
        nlp.add_complementarity(sv.s_minus, sv.c_minus)?;

        if stage_cost {
            nlp.add_quadratic(theta[k], spec.q[0], spec.x_g.theta);
            if spec.q[1] > 0.0 {
                nlp.add_quadratic(p[k], spec.q[1] * w * w, spec.x_g.p_y / w);
            }
            nlp.add_quadratic(sv.f_np, spec.r[0], 0.0);
            nlp.add_quadratic(sv.f_tp, spec.r[1], 0.0);
        }
        if u_reg > 0.0 {
            nlp.add_quadratic(sv.f_np, u_reg, 0.0);
            nlp.add_quadratic(sv.f_tp, u_reg, 0.0);
        }
        stages.push(sv);
    }

    Ok(OcpProblem {
        nlp,
        layout: OcpLayout {
            theta,
            p,
            stages,
            p_scale: w,
        },
        spec: spec.clone(),
        obj: obj.clone(),
    })
}

/// Stage cost of a trajectory, re-evaluated from its states and inputs.
pub fn nominal_objective(spec: &OcpSpec, traj: &Trajectory) -> f64 {
    let mut cost = 0.0;
    for (x, u) in traj.step_pairs() {
        cost += spec.q[0] * (x.theta - spec.x_g.theta).powi(2)
            + spec.q[1] * (x.p_y - spec.x_g.p_y).powi(2)
            + spec.r[0] * u.0 * u.0
            + spec.r[1] * u.1 * u.1;
    }
    cost
}

struct Worst {
    name: &'static str,
    step: usize,
    residual: f64,
    limit: f64,
}

impl Worst {
    fn observe(&mut self, name: &'static str, step: usize, residual: f64, limit: f64) {
        let excess = residual - limit;
        if excess > self.residual - self.limit {
            *self = Worst {
                name,
                step,
                residual,
                limit,
            };
        }
    }
}

impl OcpProblem {
    /// Unpacks a solution vector and checks the physical invariants.
    pub fn extract_trajectory(
        &self,
        x: &[f64],
        final_delta: f64,
        mode: Mode,
    ) -> Result<Trajectory> {
        let lay = &self.layout;
        let spec = &self.spec;
        let obj = &self.obj;
        if x.len() != self.nlp.n_vars() {
            return Err(Error::Build(format!(
                "solution has {} entries, problem has {}",
                x.len(),
                self.nlp.n_vars()
            )));
        }
        let n = spec.n;
        let mut worst = Worst {
            name: "",
            step: 0,
            residual: 0.0,
            limit: 0.0,
        };
        let raw: Vec<PoseState> = (0..=n)
            .map(|k| PoseState::new(x[lay.theta[k]], x[lay.p[k]] * lay.p_scale))
            .collect();
        for (k, s) in raw.iter().enumerate() {
            let tb = spec.theta_bounds;
            worst.observe(
                "theta bounds",
                k,
                (tb[0] - s.theta).max(s.theta - tb[1]),
                EXTRACT_TOL,
            );
            let pb = spec.p_bounds;
            worst.observe(
                "p_y bounds",
                k,
                (pb[0] - s.p_y).max(s.p_y - pb[1]),
                EXTRACT_TOL,
            );
        }
        worst.observe(
            "start state",
            0,
            (raw[0].theta - spec.x_s.theta).abs(),
            BOUNDARY_TOL,
        );
        worst.observe(
            "start state",
            0,
            (raw[0].p_y - spec.x_s.p_y).abs(),
            BOUNDARY_TOL,
        );
        worst.observe(
            "goal angle",
            n,
            (raw[n].theta - spec.x_g.theta).abs(),
            BOUNDARY_TOL,
        );
        let states: Vec<PoseState> = raw
            .iter()
            .map(|s| {
                PoseState::new(
                    s.theta.clamp(spec.theta_bounds[0], spec.theta_bounds[1]),
                    s.p_y.clamp(spec.p_bounds[0], spec.p_bounds[1]),
                )
            })
            .collect();

        let mut controls = Vec::with_capacity(n);
        let mut forces = Vec::with_capacity(n);
        let mut slips = Vec::with_capacity(n);
        let comp_limit = final_delta * (1.0 + 1e-6) + 1e-10;
        for k in 0..n {
            let sv = lay.stages[k];
            let geom = contact_geometry(obj, states[k])?;
            let (f_np, f_tp) = (x[sv.f_np], x[sv.f_tp]);
            let f_xy = manipulator_force(geom.rot[1][0], geom.rot[0][0], f_np, f_tp);
            let f = ContactForces {
                f_na: x[sv.f_na],
                f_ta: x[sv.f_ta],
                f_nb: x[sv.f_nb],
                f_tb: x[sv.f_tb],
                f_np,
                f_tp,
                f_x: f_xy[0],
                f_y: f_xy[1],
            };
            let res = equilibrium_residual(&geom, &f, obj.g_mag, obj.m, 0.0);
            let scaled = [res[0], res[1], res[2] / obj.profile.length()];
            let eq = scaled.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            worst.observe("equilibrium", k, eq, EXTRACT_TOL);
            for (name, v) in [
                ("f_nA >= 0", f.f_na),
                ("f_nB >= 0", f.f_nb),
                ("f_nP >= 0", f.f_np),
            ] {
                worst.observe(name, k, -v, EXTRACT_TOL);
            }
            for (name, v) in [
                ("f_nA <= f_u", f.f_na),
                ("f_nB <= f_u", f.f_nb),
                ("f_nP <= f_u", f.f_np),
            ] {
                worst.observe(name, k, v - spec.f_u, EXTRACT_TOL);
            }
            worst.observe(
                "slip at A",
                k,
                (f.f_ta - obj.mu_a * f.f_na).abs(),
                EXTRACT_TOL,
            );
            worst.observe(
                "slip at B",
                k,
                (f.f_tb + obj.mu_b * f.f_nb).abs(),
                EXTRACT_TOL,
            );
            worst.observe(
                "finger cone",
                k,
                f.f_tp.abs() - obj.mu_p * f.f_np,
                EXTRACT_TOL,
            );
            let d_theta = x[lay.theta[k + 1]] - x[lay.theta[k]];
            worst.observe("monotone theta", k, -d_theta, EXTRACT_TOL);
            worst.observe("theta rate", k, d_theta - spec.theta_rate_max, EXTRACT_TOL);
            let (sp, sm) = (x[sv.s_plus].max(0.0), x[sv.s_minus].max(0.0));
            let cp = (obj.mu_p * f_np - f_tp).max(0.0);
            let cm = (obj.mu_p * f_np + f_tp).max(0.0);
            worst.observe(
                "finger complementarity",
                k,
                (sp * cp).max(sm * cm),
                comp_limit,
            );

            let g_next = contact_geometry(obj, states[k + 1])?;
            let split = |d: f64| (d.max(0.0), (-d).max(0.0));
            // A sliding down the wall pairs with f_tA = +mu_A f_nA, B sliding
            // away from the wall with f_tB = -mu_B f_nB
            let (a_p, a_m) = split(geom.a[1] - g_next.a[1]);
            let (b_m, b_p) = split(geom.a[0] - g_next.a[0]);
            slips.push(SlipSlacks {
                pdot_a_plus: a_p,
                pdot_a_minus: a_m,
                pdot_b_plus: b_p,
                pdot_b_minus: b_m,
                pdot_y_plus: sp * lay.p_scale,
                pdot_y_minus: sm * lay.p_scale,
            });
            controls.push((f_np, f_tp));
            forces.push(f);
        }
        if worst.residual > worst.limit {
            return Err(Error::RejectedSolution {
                constraint: worst.name.to_string(),
                step: worst.step,
                residual: worst.residual,
            });
        }
        Ok(Trajectory {
            object: obj.clone(),
            mode,
            states,
            controls,
            forces,
            slips,
            meta: TrajectoryMeta {
                spec: Some(spec.summary()),
                ..Default::default()
            },
        })
    }
}

/// Adds mass and CoM margin summaries to the trajectory metadata.
pub fn annotate_margins(traj: &mut Trajectory) -> Result<()> {
    let mut out = Vec::new();
    for kind in [UncertaintyKind::Mass, UncertaintyKind::Com] {
        out.push(MarginSummary::from(&traj.margin_profile(kind, None)?));
    }
    traj.meta.margins = out;
    Ok(())
}

fn require_converged(report: &SolveReport) -> Result<()> {
    if report.converged() {
        return Ok(());
    }
    let stage = report
        .failed_stage
        .map(|s| format!(" at homotopy stage {s} (delta {:e})", report.final_delta))
        .unwrap_or_default();
    Err(Error::Solve(format!(
        "{:?}{stage}; stationarity {:.2e}, feasibility {:.2e}",
        report.status, report.stationarity, report.feasibility
    )))
}

/// Builds, solves and unpacks the nominal problem.
pub fn solve_nominal(
    obj: &ObjectParams,
    spec: &OcpSpec,
    opts: &SolverOptions,
) -> Result<(Trajectory, SolveReport)> {
    let prob = build_nominal(obj, spec)?;
    let report = solver::solve(&prob.nlp, opts)?;
    require_converged(&report)?;
    let mut traj = prob.extract_trajectory(&report.x, report.final_delta, Mode::Nominal)?;
    traj.meta.solver = Some((&report).into());
    annotate_margins(&mut traj)?;
    Ok((traj, report))
}

pub(crate) fn check_converged(report: &SolveReport) -> Result<()> {
    require_converged(report)
}
