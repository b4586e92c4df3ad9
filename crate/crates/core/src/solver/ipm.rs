//! Primal-dual interior-point method for one relaxation stage.
//!
//! Inequality rows `c_I(x) >= 0` receive slacks `s` with `c_I(x) - s = 0`, and
//! logarithmic barriers act on `s` and on the finite variable bounds. Fixed
//! variables (`lower == upper`) are removed from the linear algebra. Each
//! iteration factorizes the reduced symmetric system
//!
//! ```text
//! [ W + Σx + δw I      Jᵀ          ] [ Δx ]
//! [ J             -(Σs⁻¹ or 0) - δc ] [-Δy ]
//! ```
//!
//! raising `δw` until the inertia is `(n, m, 0)`, then performs a backtracking
//! line search on an ℓ1 merit function subject to the fraction-to-boundary rule.

use super::sparse::{sym_matvec, SymbolicLdl};
use super::{NlpProblem, RowKind, SolveStatus};

const BOUND_PUSH: f64 = 1e-2;
const BOUND_RELAX: f64 = 1e-8;
const KAPPA_SIGMA: f64 = 1e10;
const DUAL_SCALE_MAX: f64 = 100.0;
const DELTA_C: f64 = 1e-8;
const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACK: usize = 40;
const MAX_SOC: usize = 4;
const NU_UPDATE_FLOOR: f64 = 1e-13;
const NU_MAX_FACTOR: f64 = 1e6;
const MAX_LS_RECOVERY: usize = 8;

#[derive(Clone, Debug)]
pub struct IpmOptions {
    pub tol: f64,
    pub constr_tol: f64,
    pub compl_tol: f64,
    pub max_iter: usize,
    pub mu_init: f64,
    /// Largest violation `-c_I(x)` of an inequality row accepted at convergence.
    pub ineq_tol: f64,
    pub verbose: bool,
}

/// Primal-dual iterate, kept between homotopy stages for warm starts.
#[derive(Clone, Debug)]
pub struct IpmState {
    pub x: Vec<f64>,
    /// Slack per row (unused for equality rows).
    pub s: Vec<f64>,
    /// Constraint multipliers per row, for `L = f - yᵀc`.
    pub y: Vec<f64>,
    pub z_l: Vec<f64>,
    pub z_u: Vec<f64>,
    /// Slack bound multipliers per row.
    pub v: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct IpmOutput {
    pub state: IpmState,
    pub status: SolveStatus,
    pub iterations: usize,
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

struct Layout {
    n: usize,
    m: usize,
    free: Vec<usize>,
    /// KKT column of each variable, or `None` when fixed.
    col: Vec<Option<usize>>,
    ineq: Vec<bool>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    has_lo: Vec<bool>,
    has_hi: Vec<bool>,
    jac_keep: Vec<usize>,
    hess_keep: Vec<usize>,
    triplets: Vec<(usize, usize)>,
    symbolic: SymbolicLdl,
}

impl Layout {
    fn new(p: &NlpProblem) -> Self {
        let n = p.n_vars();
        let m = p.n_rows();
        let (xl, xu) = p.bounds();
        let mut col = vec![None; n];
        let mut free = Vec::new();
        for i in 0..n {
            if xl[i] < xu[i] {
                col[i] = Some(free.len());
                free.push(i);
            }
        }
        let nf = free.len();
        let relax = |b: f64, dir: f64| {
            if b.is_finite() {
                b + dir * BOUND_RELAX * b.abs().max(1.0)
            } else {
                b
            }
        };
        let lo: Vec<f64> = (0..n)
            .map(|i| {
                if col[i].is_some() {
                    relax(xl[i], -1.0)
                } else {
                    xl[i]
                }
            })
            .collect();
        let hi: Vec<f64> = (0..n)
            .map(|i| {
                if col[i].is_some() {
                    relax(xu[i], 1.0)
                } else {
                    xu[i]
                }
            })
            .collect();
        let has_lo = (0..n)
            .map(|i| col[i].is_some() && lo[i].is_finite())
            .collect();
        let has_hi = (0..n)
            .map(|i| col[i].is_some() && hi[i].is_finite())
            .collect();
        let ineq = (0..m).map(|r| p.row_kind(r) == RowKind::Ineq).collect();

        let mut triplets = Vec::new();
        let mut hess_keep = Vec::new();
        for (k, (i, j)) in p.hessian_structure().into_iter().enumerate() {
            if let (Some(a), Some(b)) = (col[i], col[j]) {
                hess_keep.push(k);
                triplets.push((a, b));
            }
        }
        let mut jac_keep = Vec::new();
        for (k, (r, c)) in p.jacobian_structure().into_iter().enumerate() {
            if let Some(a) = col[c] {
                jac_keep.push(k);
                triplets.push((nf + r, a));
            }
        }
        let symbolic = SymbolicLdl::analyze(nf + m, &triplets);
        Layout {
            n,
            m,
            free,
            col,
            ineq,
            lo,
            hi,
            has_lo,
            has_hi,
            jac_keep,
            hess_keep,
            triplets,
            symbolic,
        }
    }

    fn nf(&self) -> usize {
        self.free.len()
    }
}

struct Point {
    f: f64,
    grad: Vec<f64>,
    /// Constraint values `c(x)` (without slacks).
    c: Vec<f64>,
    jac: Vec<f64>,
}

fn eval(p: &NlpProblem, x: &[f64], delta: f64) -> Point {
    let ev = p.evaluate(x, delta);
    Point {
        f: ev.objective,
        grad: ev.gradient,
        c: ev.residuals,
        jac: ev.jacobian,
    }
}

fn push_into(x: f64, lo: f64, hi: f64, has_lo: bool, has_hi: bool) -> f64 {
    let mut x = x;
    let width = if has_lo && has_hi {
        hi - lo
    } else {
        f64::INFINITY
    };
    if has_lo {
        let pl = (BOUND_PUSH * lo.abs().max(1.0)).min(BOUND_PUSH * width);
        x = x.max(lo + pl);
    }
    if has_hi {
        let pu = (BOUND_PUSH * hi.abs().max(1.0)).min(BOUND_PUSH * width);
        x = x.min(hi - pu);
    }
    x
}

fn warm_push(x: f64, lo: f64, hi: f64, has_lo: bool, has_hi: bool, eps: f64) -> f64 {
    let mut x = x;
    let width = if has_lo && has_hi {
        hi - lo
    } else {
        f64::INFINITY
    };
    if has_lo {
        x = x.max(lo + (eps * lo.abs().max(1.0)).min(0.5 * width));
    }
    if has_hi {
        x = x.min(hi - (eps * hi.abs().max(1.0)).min(0.5 * width));
    }
    x
}

struct Direction {
    dx: Vec<f64>,
    dy: Vec<f64>,
    ds: Vec<f64>,
    dv: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
    a_pri: f64,
    a_dual: f64,
}

struct Residuals {
    /// Largest `-c_I(x)` over inequality rows.
    ineq_violation: f64,
    dual: f64,
    primal: f64,
    compl: f64,
    s_d: f64,
    s_c: f64,
}

pub fn solve_stage(
    p: &NlpProblem,
    delta: f64,
    opts: &IpmOptions,
    warm: Option<IpmState>,
) -> IpmOutput {
    let lay = Layout::new(p);
    let (n, m, nf) = (lay.n, lay.m, lay.nf());
    let (xl, _) = p.bounds();

    let mut st = match warm {
        Some(mut w) => {
            for i in 0..n {
                if lay.col[i].is_none() {
                    w.x[i] = xl[i];
                } else {
                    w.x[i] = warm_push(
                        w.x[i],
                        lay.lo[i],
                        lay.hi[i],
                        lay.has_lo[i],
                        lay.has_hi[i],
                        opts.mu_init.min(1e-4),
                    );
                }
            }
            let pt = eval(p, &w.x, delta);
            for r in 0..m {
                if lay.ineq[r] {
                    w.s[r] = pt.c[r].max(opts.mu_init.min(1e-4));
                    w.v[r] = w.v[r].max(opts.mu_init * 1e-2);
                }
            }
            for i in 0..n {
                if lay.has_lo[i] {
                    w.z_l[i] = w.z_l[i].max(opts.mu_init * 1e-2);
                }
                if lay.has_hi[i] {
                    w.z_u[i] = w.z_u[i].max(opts.mu_init * 1e-2);
                }
            }
            w
        }
        None => {
            let x0 = p.initial_point();
            let x: Vec<f64> = (0..n)
                .map(|i| {
                    if lay.col[i].is_none() {
                        xl[i]
                    } else {
                        push_into(x0[i], lay.lo[i], lay.hi[i], lay.has_lo[i], lay.has_hi[i])
                    }
                })
                .collect();
            let pt = eval(p, &x, delta);
            let s: Vec<f64> = (0..m)
                .map(|r| {
                    if lay.ineq[r] {
                        pt.c[r].max(BOUND_PUSH)
                    } else {
                        0.0
                    }
                })
                .collect();
            let one = |flags: &[bool]| {
                flags
                    .iter()
                    .map(|&b| if b { 1.0 } else { 0.0 })
                    .collect::<Vec<_>>()
            };
            IpmState {
                x,
                s,
                y: one(&lay.ineq),
                z_l: one(&lay.has_lo),
                z_u: one(&lay.has_hi),
                v: one(&lay.ineq),
            }
        }
    };

    let mut mu = opts.mu_init;
    let mu_min = (opts.tol.min(opts.compl_tol) / 10.0).max(1e-12);
    let mut last_dw = 0.0;
    // raised after a failed line search so the next direction leans toward descent
    let mut dw_floor = 0.0f64;
    let mut ls_failures = 0usize;
    let mut nu = 1.0f64;
    let jac_struct = p.jacobian_structure();

    let residuals = |st: &IpmState, pt: &Point, mu: f64| -> Residuals {
        let mut gl = pt.grad[..n].to_vec();
        for (k, &(r, c)) in jac_struct.iter().enumerate() {
            gl[c] -= pt.jac[k] * st.y[r];
        }
        let mut dual = 0.0f64;
        let mut primal = 0.0f64;
        let mut compl = 0.0f64;
        let mut ineq_violation = 0.0f64;
        let (mut ysum, mut zsum, mut cnt) = (0.0, 0.0, 0usize);
        for &i in &lay.free {
            let g = gl[i] - st.z_l[i] + st.z_u[i];
            dual = dual.max(g.abs());
            if lay.has_lo[i] {
                compl = compl.max(((st.x[i] - lay.lo[i]) * st.z_l[i] - mu).abs());
                zsum += st.z_l[i].abs();
                cnt += 1;
            }
            if lay.has_hi[i] {
                compl = compl.max(((lay.hi[i] - st.x[i]) * st.z_u[i] - mu).abs());
                zsum += st.z_u[i].abs();
                cnt += 1;
            }
        }
        for r in 0..m {
            ysum += st.y[r].abs();
            if lay.ineq[r] {
                dual = dual.max((st.y[r] - st.v[r]).abs());
                primal = primal.max((pt.c[r] - st.s[r]).abs());
                ineq_violation = ineq_violation.max(-pt.c[r]);
                compl = compl.max((st.s[r] * st.v[r] - mu).abs());
                zsum += st.v[r].abs();
                cnt += 1;
            } else {
                primal = primal.max(pt.c[r].abs());
            }
        }
        let s_d = ((ysum + zsum) / ((m + cnt).max(1) as f64)).max(DUAL_SCALE_MAX) / DUAL_SCALE_MAX;
        let s_c = (zsum / (cnt.max(1) as f64)).max(DUAL_SCALE_MAX) / DUAL_SCALE_MAX;
        Residuals {
            ineq_violation,
            dual,
            primal,
            compl,
            s_d,
            s_c,
        }
    };

    let barrier = |st_x: &[f64], st_s: &[f64], f: f64, mu: f64| -> f64 {
        let mut phi = f;
        for &i in &lay.free {
            if lay.has_lo[i] {
                phi -= mu * (st_x[i] - lay.lo[i]).ln();
            }
            if lay.has_hi[i] {
                phi -= mu * (lay.hi[i] - st_x[i]).ln();
            }
        }
        for r in 0..m {
            if lay.ineq[r] {
                phi -= mu * st_s[r].ln();
            }
        }
        phi
    };
    let infeas_l1 = |c: &[f64], s: &[f64]| -> f64 {
        (0..m)
            .map(|r| {
                if lay.ineq[r] {
                    (c[r] - s[r]).abs()
                } else {
                    c[r].abs()
                }
            })
            .sum()
    };

    let mut pt = eval(p, &st.x, delta);
    let mut iter = 0;
    let status;
    let mut res;

    loop {
        res = residuals(&st, &pt, 0.0);
        if opts.verbose {
            log::trace!(
                "it {iter:4} f={:.6e} dual={:.2e} primal={:.2e} compl={:.2e} mu={:.1e} dw={:.1e}",
                pt.f,
                res.dual,
                res.primal,
                res.compl,
                mu,
                last_dw
            );
        }
        if res.dual / res.s_d <= opts.tol
            && res.primal <= opts.constr_tol
            && res.compl / res.s_c <= opts.compl_tol
            && res.ineq_violation <= opts.ineq_tol
        {
            status = SolveStatus::Converged;
            break;
        }
        if iter >= opts.max_iter {
            status = SolveStatus::MaxIter;
            break;
        }
        // barrier update
        loop {
            let r_mu = residuals(&st, &pt, mu);
            let e_mu = (r_mu.dual / r_mu.s_d)
                .max(r_mu.primal)
                .max(r_mu.compl / r_mu.s_c);
            if mu > mu_min && e_mu <= 10.0 * mu {
                mu = (0.2 * mu).min(mu.powf(1.5)).max(mu_min);
            } else {
                break;
            }
        }

        // KKT values
        let lambda: Vec<f64> = st.y.iter().map(|y| -y).collect();
        let hess = p.hessian(&st.x, 1.0, &lambda);
        let mut vals = Vec::with_capacity(lay.triplets.len());
        vals.extend(lay.hess_keep.iter().map(|&k| hess[k]));
        vals.extend(lay.jac_keep.iter().map(|&k| pt.jac[k]));

        let mut sigma_x = vec![0.0; nf];
        let mut rhs = vec![0.0; nf + m];
        let mut gl = pt.grad.clone();
        for (k, &(r, c)) in jac_struct.iter().enumerate() {
            gl[c] -= pt.jac[k] * st.y[r];
        }
        for (a, &i) in lay.free.iter().enumerate() {
            let mut g = gl[i];
            if lay.has_lo[i] {
                let d = st.x[i] - lay.lo[i];
                sigma_x[a] += st.z_l[i] / d;
                g -= mu / d;
            }
            if lay.has_hi[i] {
                let d = lay.hi[i] - st.x[i];
                sigma_x[a] += st.z_u[i] / d;
                g += mu / d;
            }
            rhs[a] = -g;
        }
        let mut sigma_s_inv = vec![0.0; m];
        for r in 0..m {
            if lay.ineq[r] {
                let sig = st.v[r] / st.s[r];
                sigma_s_inv[r] = 1.0 / sig;
                rhs[nf + r] = -(pt.c[r] - st.s[r]) + (mu / st.s[r] - st.y[r]) / sig;
            } else {
                rhs[nf + r] = -pt.c[r];
            }
        }

        // inertia correction
        let mut dw: f64 = dw_floor;
        let mut factor = None;
        let mut shift = vec![0.0; nf + m];
        for attempt in 0..60 {
            for a in 0..nf {
                shift[a] = sigma_x[a] + dw;
            }
            for r in 0..m {
                shift[nf + r] = -sigma_s_inv[r] - DELTA_C;
            }
            if let Some(f) = lay.symbolic.factor(&vals, &shift) {
                let inertia = f.inertia();
                if inertia.positive == nf && inertia.negative == m {
                    factor = Some(f);
                    break;
                }
            }
            dw = if dw == 0.0 {
                if last_dw == 0.0 {
                    1e-4
                } else {
                    (last_dw / 3.0f64).max(1e-20)
                }
            } else if last_dw == 0.0 && attempt < 3 {
                dw * 100.0
            } else {
                dw * 8.0
            };
            if dw > 1e40 {
                break;
            }
        }
        let Some(factor) = factor else {
            status = SolveStatus::Singular;
            break;
        };
        if dw > 0.0 {
            last_dw = dw;
        }

        // solve with iterative refinement against the system without δc
        let mut true_shift = shift.clone();
        for r in 0..m {
            true_shift[nf + r] = -sigma_s_inv[r];
        }
        let solve_rhs = |rhs: &[f64]| -> Vec<f64> {
            let mut sol = rhs.to_vec();
            factor.solve(&mut sol);
            let bn = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            for _ in 0..3 {
                let k_sol = sym_matvec(nf + m, &lay.triplets, &vals, &true_shift, &sol);
                let mut r: Vec<f64> = rhs.iter().zip(&k_sol).map(|(b, k)| b - k).collect();
                let rn = r.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                if rn <= 1e-14 * bn.max(1.0) {
                    break;
                }
                factor.solve(&mut r);
                for (s, d) in sol.iter_mut().zip(&r) {
                    *s += d;
                }
            }
            sol
        };
        let expand = |sol: &[f64]| -> Direction {
            let mut d = Direction {
                dx: vec![0.0; n],
                dy: (0..m).map(|r| -sol[nf + r]).collect(),
                ds: vec![0.0; m],
                dv: vec![0.0; m],
                dzl: vec![0.0; n],
                dzu: vec![0.0; n],
                a_pri: 1.0,
                a_dual: 1.0,
            };
            for (a, &i) in lay.free.iter().enumerate() {
                d.dx[i] = sol[a];
            }
            for r in 0..m {
                if lay.ineq[r] {
                    let sig = st.v[r] / st.s[r];
                    d.ds[r] = (mu / st.s[r] - st.y[r] - d.dy[r]) / sig;
                    d.dv[r] = mu / st.s[r] - st.v[r] - sig * d.ds[r];
                }
            }
            for &i in &lay.free {
                if lay.has_lo[i] {
                    let g = st.x[i] - lay.lo[i];
                    d.dzl[i] = mu / g - st.z_l[i] - st.z_l[i] / g * d.dx[i];
                }
                if lay.has_hi[i] {
                    let g = lay.hi[i] - st.x[i];
                    d.dzu[i] = mu / g - st.z_u[i] + st.z_u[i] / g * d.dx[i];
                }
            }
            // fraction to boundary
            let tau = (1.0 - mu).max(0.99);
            for &i in &lay.free {
                if lay.has_lo[i] && d.dx[i] < 0.0 {
                    d.a_pri = d.a_pri.min(-tau * (st.x[i] - lay.lo[i]) / d.dx[i]);
                }
                if lay.has_hi[i] && d.dx[i] > 0.0 {
                    d.a_pri = d.a_pri.min(tau * (lay.hi[i] - st.x[i]) / d.dx[i]);
                }
                if lay.has_lo[i] && d.dzl[i] < 0.0 {
                    d.a_dual = d.a_dual.min(-tau * st.z_l[i] / d.dzl[i]);
                }
                if lay.has_hi[i] && d.dzu[i] < 0.0 {
                    d.a_dual = d.a_dual.min(-tau * st.z_u[i] / d.dzu[i]);
                }
            }
            for r in 0..m {
                if lay.ineq[r] {
                    if d.ds[r] < 0.0 {
                        d.a_pri = d.a_pri.min(-tau * st.s[r] / d.ds[r]);
                    }
                    if d.dv[r] < 0.0 {
                        d.a_dual = d.a_dual.min(-tau * st.v[r] / d.dv[r]);
                    }
                }
            }
            d
        };
        let dir = expand(&solve_rhs(&rhs));
        let (dx, ds, a_pri) = (&dir.dx, &dir.ds, dir.a_pri);

        // merit line search
        let phi0_b = barrier(&st.x, &st.s, pt.f, mu);
        let c_l1 = infeas_l1(&pt.c, &st.s);
        let mut dphi_b = 0.0;
        for &i in &lay.free {
            let mut g = pt.grad[i];
            if lay.has_lo[i] {
                g -= mu / (st.x[i] - lay.lo[i]);
            }
            if lay.has_hi[i] {
                g += mu / (lay.hi[i] - st.x[i]);
            }
            dphi_b += g * dx[i];
        }
        let mut curv = 0.0;
        for (a, &i) in lay.free.iter().enumerate() {
            curv += (sigma_x[a] + dw) * dx[i] * dx[i];
        }
        {
            // Δxᵀ W Δx from the Hessian triplets
            for (t, &(ri, ci)) in lay.triplets[..lay.hess_keep.len()].iter().enumerate() {
                let (xi, xj) = (dx[lay.free[ri]], dx[lay.free[ci]]);
                curv += if ri == ci {
                    vals[t] * xi * xi
                } else {
                    2.0 * vals[t] * xi * xj
                };
            }
        }
        for r in 0..m {
            if lay.ineq[r] {
                dphi_b -= mu / st.s[r] * ds[r];
                curv += st.v[r] / st.s[r] * ds[r] * ds[r];
            }
        }
        // the ratio update is meaningless once the violation is at rounding level
        let y_max = st.y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if c_l1 > NU_UPDATE_FLOOR * (m.max(1) as f64) {
            let need = (dphi_b + 0.5 * curv.max(0.0)) / (0.9 * c_l1);
            if nu < need {
                nu = (need + 1.0).min(NU_MAX_FACTOR * (1.0 + y_max));
            }
        }
        let phi0 = phi0_b + nu * c_l1;
        let dphi = dphi_b - nu * c_l1;

        let max_rel_step = lay
            .free
            .iter()
            .map(|&i| dx[i].abs() / (1.0 + st.x[i].abs()))
            .fold(0.0f64, f64::max);
        let tiny = max_rel_step < 10.0 * f64::EPSILON;

        let trial = |d: &Direction, alpha: f64| {
            let xt: Vec<f64> = (0..n).map(|i| st.x[i] + alpha * d.dx[i]).collect();
            let stt: Vec<f64> = (0..m).map(|r| st.s[r] + alpha * d.ds[r]).collect();
            let ptt = eval(p, &xt, delta);
            let phit = barrier(&xt, &stt, ptt.f, mu) + nu * infeas_l1(&ptt.c, &stt);
            (xt, stt, ptt, phit)
        };
        let mut alpha = a_pri;
        let mut accepted = None;
        let mut used = None;
        for attempt in 0..MAX_BACKTRACK {
            let (xt, stt, ptt, phit) = trial(&dir, alpha);
            if phit.is_finite() && (phit <= phi0 + ARMIJO * alpha * dphi || tiny) {
                accepted = Some((xt, stt, ptt));
                break;
            }
            if attempt == 0 && phit.is_finite() {
                // second-order correction against the curvature of c
                let theta0 = infeas_l1(&ptt.c, &stt);
                let mut c_soc: Vec<f64> = (0..m)
                    .map(|r| {
                        let cur = if lay.ineq[r] {
                            pt.c[r] - st.s[r]
                        } else {
                            pt.c[r]
                        };
                        let new = if lay.ineq[r] {
                            ptt.c[r] - stt[r]
                        } else {
                            ptt.c[r]
                        };
                        alpha * cur + new
                    })
                    .collect();
                let mut theta_prev = theta0;
                for _ in 0..MAX_SOC {
                    let mut rhs_soc = rhs.clone();
                    for r in 0..m {
                        rhs_soc[nf + r] = if lay.ineq[r] {
                            -c_soc[r] + (mu / st.s[r] - st.y[r]) * sigma_s_inv[r]
                        } else {
                            -c_soc[r]
                        };
                    }
                    let d_soc = expand(&solve_rhs(&rhs_soc));
                    let a_soc = d_soc.a_pri;
                    let (xs, ss, ps, phis) = trial(&d_soc, a_soc);
                    if phis.is_finite() && phis <= phi0 + ARMIJO * alpha * dphi {
                        accepted = Some((xs, ss, ps));
                        used = Some((d_soc, a_soc));
                        break;
                    }
                    let theta_soc = infeas_l1(&ps.c, &ss);
                    if !phis.is_finite() || theta_soc > 0.99 * theta_prev {
                        break;
                    }
                    theta_prev = theta_soc;
                    for r in 0..m {
                        let new = if lay.ineq[r] {
                            ps.c[r] - ss[r]
                        } else {
                            ps.c[r]
                        };
                        c_soc[r] = a_soc * c_soc[r] + new;
                    }
                }
                if accepted.is_some() {
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((xt, stt, ptt)) = accepted else {
            if ls_failures < MAX_LS_RECOVERY {
                ls_failures += 1;
                dw_floor = (dw.max(1e-4) * 10.0).min(1e10);
                iter += 1;
                continue;
            }
            // no progress possible along this direction
            status = if res.primal > opts.constr_tol {
                SolveStatus::Infeasible
            } else {
                SolveStatus::MaxIter
            };
            break;
        };
        ls_failures = 0;
        dw_floor = 0.0;
        let (dir, alpha) = match used {
            Some((d, a)) => (d, a),
            None => (dir, alpha),
        };
        let Direction {
            dy,
            dv,
            dzl,
            dzu,
            a_dual,
            ..
        } = dir;

        if opts.verbose {
            log::trace!(
                "  step a_pri={a_pri:.2e} alpha={alpha:.2e} a_dual={a_dual:.2e} nu={nu:.1e}"
            );
        }
        st.x = xt;
        st.s = stt;
        pt = ptt;
        for r in 0..m {
            st.y[r] += alpha * dy[r];
            if lay.ineq[r] {
                st.v[r] += a_dual * dv[r];
                let lo = mu / (KAPPA_SIGMA * st.s[r]);
                let hi = KAPPA_SIGMA * mu / st.s[r];
                st.v[r] = st.v[r].clamp(lo, hi);
            }
        }
        for &i in &lay.free {
            if lay.has_lo[i] {
                st.z_l[i] += a_dual * dzl[i];
                let d = st.x[i] - lay.lo[i];
                st.z_l[i] = st.z_l[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
            if lay.has_hi[i] {
                st.z_u[i] += a_dual * dzu[i];
                let d = lay.hi[i] - st.x[i];
                st.z_u[i] = st.z_u[i].clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
            }
        }
        iter += 1;
    }

    IpmOutput {
        status,
        iterations: iter,
        stationarity: res.dual / res.s_d,
        feasibility: res.primal,
        complementarity: res.compl / res.s_c,
        state: st,
    }
}
