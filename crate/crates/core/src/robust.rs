//! Robust pivoting: the per-step margin LPs embedded through their KKT systems.
//!
//! For every control step and each direction `sigma = ±1` the lower-level LP
//!
//! ```text
//! max xi  s.t.  sigma a_A xi <= b_A,  sigma a_B xi <= b_B,  xi >= 0,  xi <= cap
//! ```
//!
//! is replaced by primal feasibility (through nonnegative row slacks),
//! nonnegative multipliers `w`, complementary slackness `w_j ⊥ slack_j` and the
//! scalar stationarity `-1 + sigma (w_A a_A + w_B a_B) - w_0 + w_cap = 0`.
//! Epigraph variables `t± <= xi±_k` turn the worst-case margins into a smooth
//! objective `max t+ + alpha t-`.

use std::sync::Arc;

use crate::ad::{Jet, Scalar};
use crate::error::{Error, Result};
use crate::margin::{
    lp_margin, margin_coefficients, margin_rows, Direction, LpMargin, MarginBounds, UncertaintyKind,
};
use crate::mechanics::manipulator_force;
use crate::object::{contact_geometry, points, ObjectParams};
use crate::ocp::{self, build_core, OcpProblem, OcpSpec};
use crate::solver::{self, RowKind, SolveReport, SolverOptions};
use crate::trajectory::{Mode, RobustSummary, Trajectory};

/// Data and candidate solution of one step's pair of lower-level LPs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktBlock {
    /// `(a, b)` of the contact-A and contact-B rows; an absent row is `(0, 0)`.
    pub rows: [(f64, f64); 2],
    pub cap: f64,
    pub eps_plus: f64,
    pub eps_minus: f64,
    /// Multipliers of `[contact A, contact B, xi >= 0, xi <= cap]`.
    pub w_plus: [f64; 4],
    pub w_minus: [f64; 4],
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KktResiduals {
    /// Largest primal row violation.
    pub primal: f64,
    /// Largest multiplier negativity.
    pub dual: f64,
    /// Largest `|w_j * slack_j|`.
    pub complementarity: f64,
    /// Stationarity residual for `[plus, minus]`.
    pub stationarity: [f64; 2],
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal
            .max(self.dual)
            .max(self.complementarity)
            .max(self.stationarity[0].abs())
            .max(self.stationarity[1].abs())
    }
}

impl KktBlock {
    /// Block built from closed-form bounds and LP solutions.
    pub fn from_lp(bounds: &MarginBounds, cap: f64, plus: &LpMargin, minus: &LpMargin) -> Self {
        let row = |c| bounds.row(c).map(|r| (r.a, r.b)).unwrap_or((0.0, 0.0));
        KktBlock {
            rows: [
                row(crate::margin::Contact::A),
                row(crate::margin::Contact::B),
            ],
            cap,
            eps_plus: plus.xi,
            eps_minus: minus.xi,
            w_plus: plus.multipliers,
            w_minus: minus.multipliers,
        }
    }
}

pub fn kkt_residuals(block: &KktBlock) -> KktResiduals {
    let mut out = KktResiduals {
        primal: 0.0,
        dual: 0.0,
        complementarity: 0.0,
        stationarity: [0.0; 2],
    };
    for (d, (sigma, xi, w)) in [
        (1.0, block.eps_plus, block.w_plus),
        (-1.0, block.eps_minus, block.w_minus),
    ]
    .into_iter()
    .enumerate()
    {
        let coef = [sigma * block.rows[0].0, sigma * block.rows[1].0, -1.0, 1.0];
        let slack = [
            block.rows[0].1 - coef[0] * xi,
            block.rows[1].1 - coef[1] * xi,
            xi,
            block.cap - xi,
        ];
        let mut stat = -1.0;
        for j in 0..4 {
            out.primal = out.primal.max(-slack[j]);
            out.dual = out.dual.max(-w[j]);
            out.complementarity = out.complementarity.max((w[j] * slack[j]).abs());
            stat += w[j] * coef[j];
        }
        out.stationarity[d] = stat;
    }
    out
}

/// Variables of one direction's embedded LP.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LowerVars {
    pub xi: usize,
    pub slack_a: usize,
    pub slack_b: usize,
    pub slack_cap: usize,
    pub w: [usize; 4],
}

#[derive(Clone)]
pub struct RobustProblem {
    pub base: OcpProblem,
    pub kind: UncertaintyKind,
    pub alpha: f64,
    /// LP cap in physical units (N or m).
    pub cap: f64,
    /// Physical units per unit of the `xi` variables.
    pub xi_scale: f64,
    /// `[plus, minus]` per control step.
    pub lower: Vec<[LowerVars; 2]>,
    pub t_plus: usize,
    pub t_minus: usize,
}

pub const DEFAULT_U_REG: f64 = 0.0;
/// Input regularization weights tried in order when a robust solve fails.
pub const FALLBACK_U_REG: [f64; 3] = [1e-4, 1e-3, 1e-2];
pub const DEFAULT_W_REG: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct RobustConfig {
    pub kind: UncertaintyKind,
    pub alpha: f64,
    /// LP cap; defaults to ten weights or ten lengths.
    pub cap: Option<f64>,
    /// Weight of `|u|²` added for conditioning.
    pub u_reg: f64,
    /// Weight of `|w|²`; picks the smallest certificate when an LP is degenerate.
    pub w_reg: f64,
    /// Retry with larger input regularization when a solve fails.
    pub fallback: bool,
}

impl RobustConfig {
    pub fn new(kind: UncertaintyKind, alpha: f64) -> Self {
        RobustConfig {
            kind,
            alpha,
            cap: None,
            u_reg: DEFAULT_U_REG,
            w_reg: DEFAULT_W_REG,
            fallback: true,
        }
    }
}

/// Builds the single-level robust problem, initialized from `init` when given
/// (typically the nominal solution) or from the default warm start otherwise.
pub fn build_robust(
    obj: &ObjectParams,
    spec: &OcpSpec,
    cfg: &RobustConfig,
    init: Option<&Trajectory>,
) -> Result<RobustProblem> {
    if !(cfg.alpha >= 0.0 && cfg.alpha.is_finite()) {
        return Err(Error::Build(format!(
            "alpha must be nonnegative, got {}",
            cfg.alpha
        )));
    }
    if !(cfg.u_reg >= 0.0 && cfg.w_reg >= 0.0) {
        return Err(Error::Build(
            "regularization weights must be nonnegative".into(),
        ));
    }
    let cap = cfg.cap.unwrap_or_else(|| cfg.kind.default_cap(obj));
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Build(format!(
            "margin cap must be positive, got {cap}"
        )));
    }
    let mut base = build_core(obj, spec, false, cfg.u_reg)?;
    if let Some(t) = init {
        seed_from_trajectory(&mut base, t)?;
    }
    let w = obj.profile.far_width();
    let xi_scale = match cfg.kind {
        UncertaintyKind::Mass => 1.0,
        UncertaintyKind::Com => w,
    };
    let kind = cfg.kind;
    let n = spec.n;
    let x0 = base.nlp.initial_point().to_vec();

    // initial lower-level solutions from the closed-form LPs
    let mut lps = Vec::with_capacity(n);
    for k in 0..n {
        let lay = &base.layout;
        let sv = lay.stages[k];
        let pose = crate::object::PoseState::new(
            x0[lay.theta[k]].clamp(spec.theta_bounds[0], spec.theta_bounds[1]),
            (x0[lay.p[k]] * w).clamp(spec.p_bounds[0], spec.p_bounds[1]),
        );
        let geom = contact_geometry(obj, pose)?;
        let u = (x0[sv.f_np], x0[sv.f_tp]);
        let pts = crate::margin::points_of(&geom);
        let f_xy = manipulator_force(pts.sin, pts.cos, u.0, u.1);
        let rows = margin_rows(&pts, obj, f_xy, kind);
        let bounds = MarginBounds {
            kind,
            rows: vec![
                crate::margin::MarginRow {
                    a: rows[0].0,
                    b: rows[0].1,
                    source: crate::margin::Contact::A,
                },
                crate::margin::MarginRow {
                    a: rows[1].0,
                    b: rows[1].1,
                    source: crate::margin::Contact::B,
                },
            ],
        };
        let plus = lp_margin(&bounds, Direction::Plus, cap)?;
        let minus = lp_margin(&bounds, Direction::Minus, cap)?;
        lps.push((rows, plus, minus));
    }

    let nlp = &mut base.nlp;
    let inf = f64::INFINITY;
    let mut lower = Vec::with_capacity(n);
    let mut min_xi = [f64::INFINITY; 2];
    for k in 0..n {
        let lay = &base.layout;
        let sv = lay.stages[k];
        let (rows, plus, minus) = &lps[k];
        let mut pair = Vec::with_capacity(2);
        for (d, (dir, lp)) in [(Direction::Plus, plus), (Direction::Minus, minus)]
            .into_iter()
            .enumerate()
        {
            let sigma = dir.sign();
            let tag = if d == 0 { "+" } else { "-" };
            let xi0 = if lp.infeasible { 0.0 } else { lp.xi };
            min_xi[d] = min_xi[d].min(xi0);
            let slack0 = |j: usize| (rows[j].1 - sigma * rows[j].0 * xi0).max(0.0);
            // a cap-bound LP has no finite contact multiplier; start it at the cap row
            let mut w0 = lp.multipliers;
            if lp.infeasible {
                w0 = [0.0, 0.0, 0.0, 1.0];
            }
            let lv = LowerVars {
                xi: nlp.add_var(format!("xi{tag}[{k}]"), 0.0, inf, xi0 / xi_scale),
                slack_a: nlp.add_var(format!("slA{tag}[{k}]"), 0.0, inf, slack0(0)),
                slack_b: nlp.add_var(format!("slB{tag}[{k}]"), 0.0, inf, slack0(1)),
                slack_cap: nlp.add_var(
                    format!("slcap{tag}[{k}]"),
                    0.0,
                    inf,
                    (cap - xi0) / xi_scale,
                ),
                w: [
                    nlp.add_var(format!("wA{tag}[{k}]"), 0.0, inf, w0[0] / xi_scale),
                    nlp.add_var(format!("wB{tag}[{k}]"), 0.0, inf, w0[1] / xi_scale),
                    nlp.add_var(format!("w0{tag}[{k}]"), 0.0, inf, w0[2]),
                    nlp.add_var(format!("wcap{tag}[{k}]"), 0.0, inf, w0[3]),
                ],
            };

            // at equilibrium the nominal normal forces are the row right-hand sides
            let profile = obj.profile;
            let objc = obj.clone();
            nlp.add_block(
                &format!("lp_rows{tag}[{k}]"),
                vec![
                    lay.theta[k],
                    sv.f_na,
                    sv.f_nb,
                    lv.xi,
                    lv.slack_a,
                    lv.slack_b,
                ],
                &[RowKind::Eq, RowKind::Eq],
                Arc::new(move |v: &[Jet]| {
                    let pts = points(&profile, v[0], Jet::cst(0.0));
                    let [a_a, a_b] = margin_coefficients(&pts, &objc, kind);
                    let xi = v[3] * (sigma * xi_scale);
                    vec![v[4] - v[1] + a_a * xi, v[5] - v[2] + a_b * xi]
                }),
            )?;
            let profile = obj.profile;
            let objc = obj.clone();
            nlp.add_block(
                &format!("lp_stationarity{tag}[{k}]"),
                vec![lay.theta[k], lv.w[0], lv.w[1], lv.w[2], lv.w[3]],
                &[RowKind::Eq],
                Arc::new(move |v: &[Jet]| {
                    let pts = points(&profile, v[0], Jet::cst(0.0));
                    let [a_a, a_b] = margin_coefficients(&pts, &objc, kind);
                    let s = sigma * xi_scale;
                    vec![(v[1] * a_a + v[2] * a_b) * s - v[3] + v[4] - 1.0]
                }),
            )?;
            nlp.add_linear(
                format!("lp_cap{tag}[{k}]"),
                RowKind::Eq,
                vec![(lv.slack_cap, 1.0), (lv.xi, 1.0)],
                -cap / xi_scale,
            );
            nlp.add_complementarity(lv.w[0], lv.slack_a)?;
            nlp.add_complementarity(lv.w[1], lv.slack_b)?;
            nlp.add_complementarity(lv.w[2], lv.xi)?;
            nlp.add_complementarity(lv.w[3], lv.slack_cap)?;
            if cfg.w_reg > 0.0 {
                for &wi in &lv.w {
                    nlp.add_quadratic(wi, cfg.w_reg, 0.0);
                }
            }
            pair.push(lv);
        }
        lower.push([pair[0], pair[1]]);
    }

    let t_plus = nlp.add_var("t+", f64::NEG_INFINITY, inf, min_xi[0] / xi_scale);
    // without weight t- would drift down freely; margins lie in [0, cap]
    let (t_lo, t_hi) = if cfg.alpha > 0.0 {
        (f64::NEG_INFINITY, inf)
    } else {
        (-cap / xi_scale, cap / xi_scale)
    };
    let t_minus = nlp.add_var("t-", t_lo, t_hi, min_xi[1] / xi_scale);
    for (k, lv) in lower.iter().enumerate() {
        nlp.add_linear(
            format!("epigraph+[{k}]"),
            RowKind::Ineq,
            vec![(lv[0].xi, 1.0), (t_plus, -1.0)],
            0.0,
        );
        nlp.add_linear(
            format!("epigraph-[{k}]"),
            RowKind::Ineq,
            vec![(lv[1].xi, 1.0), (t_minus, -1.0)],
            0.0,
        );
    }
    nlp.add_linear_cost(t_plus, -1.0);
    nlp.add_linear_cost(t_minus, -cfg.alpha);

    Ok(RobustProblem {
        base,
        kind,
        alpha: cfg.alpha,
        cap,
        xi_scale,
        lower,
        t_plus,
        t_minus,
    })
}

/// Overwrites the initial point of the shared variables with a trajectory.
fn seed_from_trajectory(base: &mut OcpProblem, t: &Trajectory) -> Result<()> {
    let n = base.spec.n;
    if t.steps() != n {
        return Err(Error::Build(format!(
            "initial trajectory has {} steps, problem has {n}",
            t.steps()
        )));
    }
    t.check_shape()?;
    let lay = base.layout.clone();
    let mu_p = base.obj.mu_p;
    let (xl, xu) = {
        let (l, u) = base.nlp.bounds();
        (l.to_vec(), u.to_vec())
    };
    let mut set = |i: usize, v: f64| {
        if xl[i] < xu[i] {
            base.nlp.set_initial(i, v.clamp(xl[i], xu[i]));
        }
    };
    for k in 0..=n {
        set(lay.theta[k], t.states[k].theta);
        set(lay.p[k], t.states[k].p_y / lay.p_scale);
    }
    for k in 0..n {
        let sv = lay.stages[k];
        let f = &t.forces[k];
        set(sv.f_np, f.f_np);
        set(sv.f_tp, f.f_tp);
        set(sv.f_na, f.f_na);
        set(sv.f_ta, f.f_ta);
        set(sv.f_nb, f.f_nb);
        set(sv.f_tb, f.f_tb);
        set(sv.s_plus, t.slips[k].pdot_y_plus / lay.p_scale);
        set(sv.s_minus, t.slips[k].pdot_y_minus / lay.p_scale);
        set(sv.c_plus, (mu_p * f.f_np - f.f_tp).max(0.0));
        set(sv.c_minus, (mu_p * f.f_np + f.f_tp).max(0.0));
    }
    Ok(())
}

impl RobustProblem {
    /// Raises `t±` to the smallest embedded optimum. This keeps every row
    /// feasible and can only improve the objective; it removes the gap of
    /// order `mu / alpha` an interior point leaves on the epigraph rows.
    pub fn tighten_epigraph(&self, x: &mut [f64]) {
        for (d, t) in [self.t_plus, self.t_minus].into_iter().enumerate() {
            let min = self
                .lower
                .iter()
                .map(|l| x[l[d].xi])
                .fold(f64::INFINITY, f64::min);
            if min.is_finite() {
                x[t] = min;
            }
        }
    }

    /// Unpacks a solution, including the embedded lower-level optima.
    pub fn extract_trajectory(&self, x: &[f64], final_delta: f64) -> Result<Trajectory> {
        let mode = match self.kind {
            UncertaintyKind::Mass => Mode::RobustMass,
            UncertaintyKind::Com => Mode::RobustCom,
        };
        let mut traj = self.base.extract_trajectory(x, final_delta, mode)?;
        let s = self.xi_scale;
        let eps_plus: Vec<f64> = self.lower.iter().map(|l| x[l[0].xi] * s).collect();
        let eps_minus: Vec<f64> = self.lower.iter().map(|l| x[l[1].xi] * s).collect();
        let cap_active = eps_plus
            .iter()
            .chain(&eps_minus)
            .any(|&e| e >= self.cap * (1.0 - 1e-6));
        traj.meta.robust = Some(RobustSummary {
            kind: self.kind,
            alpha: self.alpha,
            cap: self.cap,
            t_plus: x[self.t_plus] * s,
            t_minus: x[self.t_minus] * s,
            eps_plus,
            eps_minus,
            cap_active,
            u_reg: 0.0,
        });
        Ok(traj)
    }

    /// KKT block of step `k` as found in the solution vector `x`.
    pub fn kkt_block(&self, x: &[f64], k: usize) -> Result<KktBlock> {
        let lay = &self.base.layout;
        let obj = &self.base.obj;
        let spec = &self.base.spec;
        let sv = lay.stages[k];
        let pose = crate::object::PoseState::new(
            x[lay.theta[k]].clamp(spec.theta_bounds[0], spec.theta_bounds[1]),
            (x[lay.p[k]] * lay.p_scale).clamp(spec.p_bounds[0], spec.p_bounds[1]),
        );
        let geom = contact_geometry(obj, pose)?;
        let pts = crate::margin::points_of(&geom);
        let f_xy = manipulator_force(pts.sin, pts.cos, x[sv.f_np], x[sv.f_tp]);
        let rows = margin_rows(&pts, obj, f_xy, self.kind);
        let s = self.xi_scale;
        let lv = self.lower[k];
        let w = |l: &LowerVars| [x[l.w[0]] * s, x[l.w[1]] * s, x[l.w[2]], x[l.w[3]]];
        Ok(KktBlock {
            rows,
            cap: self.cap,
            eps_plus: x[lv[0].xi] * s,
            eps_minus: x[lv[1].xi] * s,
            w_plus: w(&lv[0]),
            w_minus: w(&lv[1]),
        })
    }
}

/// Worst-case margins of a trajectory recomputed from the closed-form LPs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WorstCase {
    pub worst_plus: f64,
    pub worst_minus: f64,
    /// `worst_plus + alpha * worst_minus`.
    pub objective: f64,
    /// `worst_plus + worst_minus`.
    pub total: f64,
}

pub fn evaluate_worstcase(
    traj: &Trajectory,
    kind: UncertaintyKind,
    alpha: f64,
    cap: Option<f64>,
) -> Result<WorstCase> {
    let prof = traj.margin_profile(kind, cap)?;
    Ok(WorstCase {
        worst_plus: prof.worst_plus,
        worst_minus: prof.worst_minus,
        objective: prof.worst_plus + alpha * prof.worst_minus,
        total: prof.worst_plus + prof.worst_minus,
    })
}

/// Largest gap between the embedded lower-level optima and the closed-form LP
/// solutions, and between `t±` and the smallest embedded optimum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Consistency {
    pub lp_gap: f64,
    pub epigraph_gap: f64,
}

pub fn bilevel_consistency(traj: &Trajectory) -> Result<Consistency> {
    let r = traj
        .meta
        .robust
        .as_ref()
        .ok_or_else(|| Error::Config("trajectory carries no embedded margins".into()))?;
    let prof = traj.margin_profile(r.kind, Some(r.cap))?;
    let mut lp_gap = 0.0f64;
    for (k, s) in prof.steps.iter().enumerate() {
        lp_gap = lp_gap
            .max((s.plus.xi - r.eps_plus[k]).abs())
            .max((s.minus.xi - r.eps_minus[k]).abs());
    }
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let epigraph_gap = (r.t_plus - min(&r.eps_plus))
        .abs()
        .max((r.t_minus - min(&r.eps_minus)).abs());
    Ok(Consistency {
        lp_gap,
        epigraph_gap,
    })
}

/// Builds, solves and unpacks a robust problem. Without `init`, the nominal
/// problem is solved first and used as the starting point.
///
/// When the configured input regularization does not converge and
/// `cfg.fallback` is set, the solve is repeated with the larger weights of
/// [`FALLBACK_U_REG`]; the weight that succeeded is recorded in the metadata.
pub fn solve_robust(
    obj: &ObjectParams,
    spec: &OcpSpec,
    cfg: &RobustConfig,
    opts: &SolverOptions,
    init: Option<&Trajectory>,
) -> Result<(Trajectory, SolveReport)> {
    let nominal;
    let init = match init {
        Some(t) => t,
        None => {
            nominal = ocp::solve_nominal(obj, spec, opts)?.0;
            &nominal
        }
    };
    let mut weights = vec![cfg.u_reg];
    if cfg.fallback {
        weights.extend(FALLBACK_U_REG.iter().copied().filter(|&w| w > cfg.u_reg));
    }
    let mut last_err = None;
    for u_reg in weights {
        let attempt = RobustConfig {
            u_reg,
            ..cfg.clone()
        };
        match solve_once(obj, spec, &attempt, opts, init) {
            Ok(out) => return Ok(out),
            Err(e @ (Error::Solve(_) | Error::RejectedSolution { .. })) => {
                log::info!("robust solve with u_reg {u_reg:e} failed: {e}");
                last_err = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("at least one attempt"))
}

fn solve_once(
    obj: &ObjectParams,
    spec: &OcpSpec,
    cfg: &RobustConfig,
    opts: &SolverOptions,
    init: &Trajectory,
) -> Result<(Trajectory, SolveReport)> {
    let prob = build_robust(obj, spec, cfg, Some(init))?;
    let mut report = solver::solve(&prob.base.nlp, opts)?;
    ocp::check_converged(&report)?;
    prob.tighten_epigraph(&mut report.x);
    report.objective = prob.base.nlp.objective(&report.x);
    let mut traj = prob.extract_trajectory(&report.x, report.final_delta)?;
    if let Some(r) = traj.meta.robust.as_mut() {
        r.u_reg = cfg.u_reg;
    }
    traj.meta.solver = Some((&report).into());
    ocp::annotate_margins(&mut traj)?;
    Ok((traj, report))
}
