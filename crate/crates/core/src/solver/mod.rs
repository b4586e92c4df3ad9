//! Generic sparse nonlinear programming backend.
//!
//! Problems are assembled as a [`NlpProblem`]: box-bounded variables, linear
//! rows, nonlinear rows produced by small blocks evaluated with forward-mode
//! jets, a separable quadratic objective plus optional nonlinear objective
//! blocks, and a list of complementarity pairs between nonnegative variables.
//! [`solve`] runs an interior-point method over a relaxation homotopy in which
//! each pair `(a, b)` contributes the smooth row `delta - a * b >= 0`.

pub mod derivcheck;
pub mod ipm;
pub mod sparse;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ad::{Jet, JET_DIM};
use crate::error::{Error, Result};

pub use derivcheck::{check_derivatives, DerivativeReport};
pub use ipm::IpmOptions;

pub type BlockFn = dyn Fn(&[Jet]) -> Vec<Jet> + Send + Sync;
pub type ObjBlockFn = dyn Fn(&[Jet]) -> Jet + Send + Sync;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowKind {
    /// `c(x) = 0`
    Eq,
    /// `c(x) >= 0`
    Ineq,
}

#[derive(Clone, Debug)]
enum RowDef {
    Linear {
        terms: Vec<(usize, f64)>,
        constant: f64,
    },
    Block {
        block: usize,
        output: usize,
    },
    Relax {
        a: usize,
        b: usize,
    },
}

#[derive(Clone, Debug)]
struct Row {
    kind: RowKind,
    def: RowDef,
    name: String,
}

#[derive(Clone)]
struct Block {
    vars: Vec<usize>,
    eval: Arc<BlockFn>,
    n_out: usize,
}

#[derive(Clone)]
struct ObjBlock {
    vars: Vec<usize>,
    eval: Arc<ObjBlockFn>,
}

/// A smooth constrained program with complementarity pairs.
#[derive(Clone, Default)]
pub struct NlpProblem {
    x_l: Vec<f64>,
    x_u: Vec<f64>,
    x0: Vec<f64>,
    names: Vec<String>,
    rows: Vec<Row>,
    blocks: Vec<Block>,
    quad: Vec<(usize, f64, f64)>,
    lin: Vec<(usize, f64)>,
    obj_blocks: Vec<ObjBlock>,
    pairs: Vec<(usize, usize)>,
    relax_rows: Vec<usize>,
}

/// One full evaluation of residuals and first derivatives.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Values matching [`NlpProblem::jacobian_structure`].
    pub jacobian: Vec<f64>,
}

impl NlpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable and returns its index.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, init: f64) -> usize {
        self.x_l.push(lower);
        self.x_u.push(upper);
        self.x0.push(init);
        self.names.push(name.into());
        self.x_l.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.x_l.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn var_name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn row_name(&self, r: usize) -> &str {
        &self.rows[r].name
    }

    pub fn row_kind(&self, r: usize) -> RowKind {
        self.rows[r].kind
    }

    pub fn bounds(&self) -> (&[f64], &[f64]) {
        (&self.x_l, &self.x_u)
    }

    pub fn set_bounds(&mut self, i: usize, lower: f64, upper: f64) {
        self.x_l[i] = lower;
        self.x_u[i] = upper;
    }

    pub fn initial_point(&self) -> &[f64] {
        &self.x0
    }

    pub fn set_initial(&mut self, i: usize, v: f64) {
        self.x0[i] = v;
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Adds the row `sum(coef * x) + constant` of the given kind.
    pub fn add_linear(
        &mut self,
        name: impl Into<String>,
        kind: RowKind,
        terms: Vec<(usize, f64)>,
        constant: f64,
    ) -> usize {
        self.rows.push(Row {
            kind,
            def: RowDef::Linear { terms, constant },
            name: name.into(),
        });
        self.rows.len() - 1
    }

    /// Adds a nonlinear block over at most [`JET_DIM`] variables producing one
    /// row per entry of `kinds`. Returns the row indices.
    pub fn add_block(
        &mut self,
        name: &str,
        vars: Vec<usize>,
        kinds: &[RowKind],
        eval: Arc<BlockFn>,
    ) -> Result<Vec<usize>> {
        if vars.len() > JET_DIM {
            return Err(Error::Build(format!(
                "block `{name}` uses {} variables, at most {JET_DIM} supported",
                vars.len()
            )));
        }
        if let Some(&v) = vars.iter().find(|&&v| v >= self.n_vars()) {
            return Err(Error::Build(format!(
                "block `{name}` references unknown variable {v}"
            )));
        }
        let block = self.blocks.len();
        self.blocks.push(Block {
            vars,
            eval,
            n_out: kinds.len(),
        });
        let mut out = Vec::with_capacity(kinds.len());
        for (output, &kind) in kinds.iter().enumerate() {
            self.rows.push(Row {
                kind,
                def: RowDef::Block { block, output },
                name: format!("{name}[{output}]"),
            });
            out.push(self.rows.len() - 1);
        }
        Ok(out)
    }

    /// Adds `weight * (x_i - target)^2` to the objective.
    pub fn add_quadratic(&mut self, i: usize, weight: f64, target: f64) {
        self.quad.push((i, weight, target));
    }

    /// Adds `coef * x_i` to the objective.
    pub fn add_linear_cost(&mut self, i: usize, coef: f64) {
        self.lin.push((i, coef));
    }

    pub fn add_objective_block(&mut self, vars: Vec<usize>, eval: Arc<ObjBlockFn>) -> Result<()> {
        if vars.len() > JET_DIM {
            return Err(Error::Build(format!(
                "objective block uses {} variables",
                vars.len()
            )));
        }
        self.obj_blocks.push(ObjBlock { vars, eval });
        Ok(())
    }

    /// Declares `x_a ⊥ x_b`; both variables must have lower bound 0.
    pub fn add_complementarity(&mut self, a: usize, b: usize) -> Result<()> {
        for v in [a, b] {
            if v >= self.n_vars() || self.x_l[v] != 0.0 {
                return Err(Error::Build(format!(
                    "complementarity variable {v} must exist and have lower bound 0"
                )));
            }
        }
        self.pairs.push((a, b));
        self.rows.push(Row {
            kind: RowKind::Ineq,
            def: RowDef::Relax { a, b },
            name: format!("comp({},{})", self.names[a], self.names[b]),
        });
        self.relax_rows.push(self.rows.len() - 1);
        Ok(())
    }

    /// Checks dimensions, bound ordering and the initial point.
    pub fn validate(&self) -> Result<()> {
        for i in 0..self.n_vars() {
            if !(self.x_l[i] <= self.x_u[i]) {
                return Err(Error::Build(format!(
                    "variable `{}` has empty bounds [{}, {}]",
                    self.names[i], self.x_l[i], self.x_u[i]
                )));
            }
            if !self.x0[i].is_finite() {
                return Err(Error::Build(format!(
                    "variable `{}` has a non-finite start",
                    self.names[i]
                )));
            }
        }
        for r in &self.rows {
            if let RowDef::Linear { terms, .. } = &r.def {
                if terms
                    .iter()
                    .any(|&(v, c)| v >= self.n_vars() || !c.is_finite())
                {
                    return Err(Error::Build(format!("row `{}` is malformed", r.name)));
                }
            }
        }
        Ok(())
    }

    /// `(row, col)` of every Jacobian entry, in evaluation order.
    pub fn jacobian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (r, row) in self.rows.iter().enumerate() {
            match &row.def {
                RowDef::Linear { terms, .. } => out.extend(terms.iter().map(|&(c, _)| (r, c))),
                RowDef::Block { block, .. } => {
                    out.extend(self.blocks[*block].vars.iter().map(|&c| (r, c)))
                }
                RowDef::Relax { a, b } => out.extend([(r, *a), (r, *b)]),
            }
        }
        out
    }

    /// `(i, j)` with `i >= j` of every Hessian-of-Lagrangian entry.
    pub fn hessian_structure(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &(i, _, _) in &self.quad {
            out.push((i, i));
        }
        let tri = |vars: &[usize], out: &mut Vec<(usize, usize)>| {
            for p in 0..vars.len() {
                for q in 0..=p {
                    let (i, j) = (vars[p], vars[q]);
                    out.push((i.max(j), i.min(j)));
                }
            }
        };
        for b in &self.obj_blocks {
            tri(&b.vars, &mut out);
        }
        for b in &self.blocks {
            tri(&b.vars, &mut out);
        }
        for &(a, b) in &self.pairs {
            out.push((a.max(b), a.min(b)));
        }
        out
    }

    fn seed(vars: &[usize], x: &[f64]) -> Vec<Jet> {
        vars.iter()
            .enumerate()
            .map(|(k, &v)| Jet::var(x[v], k))
            .collect()
    }

    fn eval_blocks(&self, x: &[f64]) -> Vec<Vec<Jet>> {
        self.blocks
            .iter()
            .map(|b| {
                let out = (b.eval)(&Self::seed(&b.vars, x));
                debug_assert_eq!(out.len(), b.n_out);
                out
            })
            .collect()
    }

    /// Objective value at `x` (no derivatives).
    pub fn objective(&self, x: &[f64]) -> f64 {
        let mut f = 0.0;
        for &(i, w, t) in &self.quad {
            f += w * (x[i] - t) * (x[i] - t);
        }
        for &(i, c) in &self.lin {
            f += c * x[i];
        }
        for b in &self.obj_blocks {
            f += (b.eval)(&Self::seed(&b.vars, x)).v;
        }
        f
    }

    /// Residuals, Jacobian values, objective and gradient at `x` for relaxation `delta`.
    pub fn evaluate(&self, x: &[f64], delta: f64) -> Evaluation {
        let n = self.n_vars();
        let mut gradient = vec![0.0; n];
        let mut objective = 0.0;
        for &(i, w, t) in &self.quad {
            objective += w * (x[i] - t) * (x[i] - t);
            gradient[i] += 2.0 * w * (x[i] - t);
        }
        for &(i, c) in &self.lin {
            objective += c * x[i];
            gradient[i] += c;
        }
        for b in &self.obj_blocks {
            let j = (b.eval)(&Self::seed(&b.vars, x));
            objective += j.v;
            for (k, &v) in b.vars.iter().enumerate() {
                gradient[v] += j.g[k];
            }
        }
        let blocks = self.eval_blocks(x);
        let mut residuals = Vec::with_capacity(self.rows.len());
        let mut jacobian = Vec::new();
        for row in &self.rows {
            match &row.def {
                RowDef::Linear { terms, constant } => {
                    residuals.push(terms.iter().map(|&(c, a)| a * x[c]).sum::<f64>() + constant);
                    jacobian.extend(terms.iter().map(|&(_, a)| a));
                }
                RowDef::Block { block, output } => {
                    let j = &blocks[*block][*output];
                    residuals.push(j.v);
                    jacobian.extend_from_slice(&j.g[..self.blocks[*block].vars.len()]);
                }
                RowDef::Relax { a, b } => {
                    residuals.push(delta - x[*a] * x[*b]);
                    jacobian.extend([-x[*b], -x[*a]]);
                }
            }
        }
        Evaluation {
            objective,
            gradient,
            residuals,
            jacobian,
        }
    }

    /// Hessian of `sigma * f + sum(lambda_r * c_r)` matching [`Self::hessian_structure`].
    pub fn hessian(&self, x: &[f64], sigma: f64, lambda: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        for &(_, w, _) in &self.quad {
            out.push(2.0 * w * sigma);
        }
        let push_tri = |j: &Jet, scale: f64, k: usize, out: &mut Vec<f64>| {
            for p in 0..k {
                for q in 0..=p {
                    out.push(scale * j.hess(p, q));
                }
            }
        };
        for b in &self.obj_blocks {
            let j = (b.eval)(&Self::seed(&b.vars, x));
            push_tri(&j, sigma, b.vars.len(), &mut out);
        }
        let mut block_lambda: Vec<Vec<f64>> =
            self.blocks.iter().map(|b| vec![0.0; b.n_out]).collect();
        for (r, row) in self.rows.iter().enumerate() {
            if let RowDef::Block { block, output } = row.def {
                block_lambda[block][output] = lambda[r];
            }
        }
        let blocks = self.eval_blocks(x);
        for (bi, b) in self.blocks.iter().enumerate() {
            let k = b.vars.len();
            for p in 0..k {
                for q in 0..=p {
                    let mut h = 0.0;
                    for (o, j) in blocks[bi].iter().enumerate() {
                        h += block_lambda[bi][o] * j.hess(p, q);
                    }
                    out.push(h);
                }
            }
        }
        for (pi, &(a, b)) in self.pairs.iter().enumerate() {
            let r = self.relax_rows[pi];
            // d²(-x_a x_b) has a single off-diagonal entry (doubled on the diagonal when a == b)
            out.push(if a == b { -2.0 * lambda[r] } else { -lambda[r] });
        }
        out
    }

    /// Largest complementarity product `x_a * x_b` over all pairs.
    pub fn max_complementarity(&self, x: &[f64]) -> f64 {
        self.pairs
            .iter()
            .map(|&(a, b)| x[a] * x[b])
            .fold(0.0, f64::max)
    }

    /// Residuals of equality rows (`c`) and violations of inequality rows
    /// (`max(0, -c)`) with relaxation rows excluded.
    pub fn constraint_violation(&self, x: &[f64]) -> f64 {
        let ev = self.evaluate(x, 0.0);
        let mut worst = 0.0f64;
        for (r, row) in self.rows.iter().enumerate() {
            let v = match (&row.def, row.kind) {
                (RowDef::Relax { .. }, _) => continue,
                (_, RowKind::Eq) => ev.residuals[r].abs(),
                (_, RowKind::Ineq) => (-ev.residuals[r]).max(0.0),
            };
            worst = worst.max(v);
        }
        worst
    }

    /// Largest equality residual, ignoring inequality rows.
    pub fn equality_residual(&self, x: &[f64]) -> f64 {
        let ev = self.evaluate(x, 0.0);
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.kind == RowKind::Eq)
            .map(|(i, _)| ev.residuals[i].abs())
            .fold(0.0, f64::max)
    }

    /// Largest bound violation of `x`.
    pub fn bound_violation(&self, x: &[f64]) -> f64 {
        (0..self.n_vars())
            .map(|i| (self.x_l[i] - x[i]).max(x[i] - self.x_u[i]).max(0.0))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Converged,
    MaxIter,
    Infeasible,
    Singular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub delta: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    pub objective: f64,
    pub max_complementarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub stages: Vec<StageReport>,
    pub final_delta: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub objective: f64,
    /// Index of the homotopy stage that failed, if any.
    pub failed_stage: Option<usize>,
    pub x: Vec<f64>,
}

impl SolveReport {
    pub fn converged(&self) -> bool {
        self.status == SolveStatus::Converged
    }

    pub fn total_iterations(&self) -> usize {
        self.stages.iter().map(|s| s.iterations).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Relaxation schedule; the last entry is the final `delta`.
    pub homotopy: Vec<f64>,
    pub stationarity_tol: f64,
    pub feasibility_tol: f64,
    pub complementarity_tol: f64,
    /// Tolerance scale applied to intermediate homotopy stages.
    pub stage_tol_factor: f64,
    pub max_iter: usize,
    /// Barrier parameter used when re-entering after a warm start.
    pub warm_mu: f64,
    pub verbose: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            homotopy: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8],
            stationarity_tol: 1e-6,
            feasibility_tol: 1e-8,
            complementarity_tol: 1e-6,
            stage_tol_factor: 100.0,
            max_iter: 1000,
            warm_mu: 1e-4,
            verbose: false,
        }
    }
}

impl SolverOptions {
    pub fn from_json(s: &str) -> Result<Self> {
        let o: SolverOptions = serde_json::from_str(s)?;
        o.validate()?;
        Ok(o)
    }

    pub fn validate(&self) -> Result<()> {
        if self.homotopy.is_empty() || self.homotopy.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::Config(
                "homotopy schedule must be nonempty and positive".into(),
            ));
        }
        if self.homotopy.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::Config(
                "homotopy schedule must be nonincreasing".into(),
            ));
        }
        for (name, v) in [
            ("stationarity_tol", self.stationarity_tol),
            ("feasibility_tol", self.feasibility_tol),
            ("complementarity_tol", self.complementarity_tol),
            ("stage_tol_factor", self.stage_tol_factor),
            ("warm_mu", self.warm_mu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be positive".into()));
        }
        Ok(())
    }
}

const RELAX_ROW_TOL: f64 = 1e-6;

/// Solves `problem` over the relaxation homotopy, warm-starting each stage.
///
/// Problems without complementarity pairs are solved once at the final tolerance.
pub fn solve(problem: &NlpProblem, opts: &SolverOptions) -> Result<SolveReport> {
    problem.validate()?;
    opts.validate()?;
    let schedule: Vec<f64> = if problem.pairs.is_empty() {
        vec![*opts.homotopy.last().unwrap()]
    } else {
        opts.homotopy.clone()
    };
    let mut state: Option<ipm::IpmState> = None;
    let mut stages = Vec::new();
    let mut last = None;
    for (si, &delta) in schedule.iter().enumerate() {
        let final_stage = si + 1 == schedule.len();
        let scale = if final_stage {
            1.0
        } else {
            opts.stage_tol_factor
        };
        let constr_tol = opts.feasibility_tol * scale;
        let ipm_opts = IpmOptions {
            tol: opts.stationarity_tol * scale,
            constr_tol,
            // relaxation rows must hold to a fraction of delta, not of the stage tolerance
            ineq_tol: if problem.pairs.is_empty() {
                constr_tol
            } else {
                constr_tol.min(RELAX_ROW_TOL * delta)
            },
            compl_tol: opts.complementarity_tol * scale,
            max_iter: opts.max_iter,
            // a barrier above delta would hold relaxation slacks away from their active value
            mu_init: if state.is_some() { opts.warm_mu } else { 0.1 }.min(
                if problem.pairs.is_empty() {
                    f64::INFINITY
                } else {
                    delta
                },
            ),
            verbose: opts.verbose,
        };
        let out = ipm::solve_stage(problem, delta, &ipm_opts, state.take());
        let x = &out.state.x;
        let stage = StageReport {
            delta,
            iterations: out.iterations,
            status: out.status,
            objective: problem.objective(x),
            max_complementarity: problem.max_complementarity(x),
        };
        log::debug!(
            "stage {si} delta={delta:e} status={:?} iters={} obj={:.8e} comp={:.2e}",
            stage.status,
            stage.iterations,
            stage.objective,
            stage.max_complementarity
        );
        stages.push(stage);
        let failed = out.status != SolveStatus::Converged;
        state = Some(out.state.clone());
        last = Some(out);
        if failed {
            let out = last.unwrap();
            return Ok(SolveReport {
                status: out.status,
                stages,
                final_delta: delta,
                stationarity: out.stationarity,
                feasibility: out.feasibility,
                complementarity: out.complementarity,
                objective: problem.objective(&out.state.x),
                failed_stage: Some(si),
                x: out.state.x,
            });
        }
    }
    let mut out = last.expect("at least one stage");
    // the interior point works on slightly relaxed bounds; hand back a point inside the real ones
    let (xl, xu) = problem.bounds();
    for (i, v) in out.state.x.iter_mut().enumerate() {
        *v = v.clamp(xl[i], xu[i]);
    }
    let final_delta = *schedule.last().unwrap();
    let feasibility = out
        .feasibility
        .max(problem.constraint_violation(&out.state.x))
        .max((problem.max_complementarity(&out.state.x) - final_delta).max(0.0));
    Ok(SolveReport {
        status: SolveStatus::Converged,
        final_delta,
        stationarity: out.stationarity,
        feasibility,
        complementarity: out.complementarity,
        objective: problem.objective(&out.state.x),
        failed_stage: None,
        stages,
        x: out.state.x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Scalar;

    fn opts() -> SolverOptions {
        SolverOptions::default()
    }

    #[test]
    fn bounded_scalar_quadratic() {
        let mut p = NlpProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, 5.0);
        p.add_quadratic(x, 1.0, 1.0);
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 1.0).abs() < 1e-7, "{}", r.x[0]);
    }

    #[test]
    fn active_bound() {
        let mut p = NlpProblem::new();
        let x = p.add_var("x", 0.0, f64::INFINITY, 5.0);
        p.add_quadratic(x, 1.0, -1.0);
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged());
        assert!(r.x[0].abs() < 1e-7);
    }

    #[test]
    fn equality_constrained_least_squares() {
        // min x² + y² s.t. x + y = 1
        let mut p = NlpProblem::new();
        let x = p.add_var("x", f64::NEG_INFINITY, f64::INFINITY, 3.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, -2.0);
        p.add_quadratic(x, 1.0, 0.0);
        p.add_quadratic(y, 1.0, 0.0);
        p.add_linear("sum", RowKind::Eq, vec![(x, 1.0), (y, 1.0)], -1.0);
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged());
        assert!((r.x[0] - 0.5).abs() < 1e-8 && (r.x[1] - 0.5).abs() < 1e-8);
    }

    fn hs071() -> NlpProblem {
        let mut p = NlpProblem::new();
        let init = [1.0, 5.0, 5.0, 1.0];
        let v: Vec<usize> = (0..4)
            .map(|i| p.add_var(format!("x{i}"), 1.0, 5.0, init[i]))
            .collect();
        p.add_objective_block(
            v.clone(),
            Arc::new(|x: &[Jet]| x[0] * x[3] * (x[0] + x[1] + x[2]) + x[2]),
        )
        .unwrap();
        p.add_block(
            "prod",
            v.clone(),
            &[RowKind::Ineq],
            Arc::new(|x: &[Jet]| vec![x[0] * x[1] * x[2] * x[3] - 25.0]),
        )
        .unwrap();
        p.add_block(
            "sq",
            v,
            &[RowKind::Eq],
            Arc::new(|x: &[Jet]| {
                vec![x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] - 40.0]
            }),
        )
        .unwrap();
        p
    }

    #[test]
    fn hs071_reference_solution() {
        let p = hs071();
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged(), "{:?}", r.status);
        let expect = [1.0, 4.742_999_64, 3.821_149_98, 1.379_408_29];
        for i in 0..4 {
            assert!((r.x[i] - expect[i]).abs() < 1e-6, "x{i} = {}", r.x[i]);
        }
        assert!((r.objective - 17.014_017_29).abs() < 1e-6);
    }

    #[test]
    fn complementarity_toy_reaches_a_corner() {
        let mut p = NlpProblem::new();
        let a = p.add_var("a", 0.0, f64::INFINITY, 0.9);
        let b = p.add_var("b", 0.0, f64::INFINITY, 0.2);
        p.add_quadratic(a, 1.0, 1.0);
        p.add_quadratic(b, 1.0, 1.0);
        p.add_complementarity(a, b).unwrap();
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged(), "{:?}", r);
        assert!((r.objective - 1.0).abs() < 1e-6, "{}", r.objective);
        assert!(r.x[0] * r.x[1] <= 1e-8 + 1e-12);
        let big = r.x[0].max(r.x[1]);
        assert!((big - 1.0).abs() < 1e-6);
        assert_eq!(r.stages.len(), 7);
        for s in &r.stages {
            assert!(
                s.max_complementarity <= s.delta * (1.0 + 1e-6),
                "{:?}",
                r.stages
            );
        }
    }

    #[test]
    fn solves_are_deterministic() {
        let p = hs071();
        let a = solve(&p, &opts()).unwrap();
        let b = solve(&p, &opts()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fixed_variables_are_held() {
        let mut p = NlpProblem::new();
        let x = p.add_var("x", 2.0, 2.0, 0.0);
        let y = p.add_var("y", f64::NEG_INFINITY, f64::INFINITY, 0.0);
        p.add_quadratic(y, 1.0, 0.0);
        p.add_linear("link", RowKind::Eq, vec![(x, 1.0), (y, -1.0)], 0.0);
        let r = solve(&p, &opts()).unwrap();
        assert!(r.converged());
        assert_eq!(r.x[0], 2.0);
        assert!((r.x[1] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_problem_is_not_converged() {
        let mut p = NlpProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 0.5);
        p.add_quadratic(x, 1.0, 0.0);
        p.add_linear("impossible", RowKind::Eq, vec![(x, 1.0)], -3.0);
        let r = solve(
            &p,
            &SolverOptions {
                max_iter: 100,
                ..opts()
            },
        )
        .unwrap();
        assert!(!r.converged());
        assert!(r.failed_stage.is_some());
    }

    #[test]
    fn linear_rows_have_exact_derivatives() {
        let mut p = NlpProblem::new();
        let x = p.add_var("x", 0.0, 1.0, 0.3);
        let y = p.add_var("y", 0.0, 1.0, 0.6);
        p.add_linear("l1", RowKind::Eq, vec![(x, 2.0), (y, -1.0)], 0.5);
        p.add_linear("l2", RowKind::Ineq, vec![(y, 3.0)], 0.0);
        let rep = check_derivatives(&p, &[0.3, 0.6], 1e-2);
        assert!(rep.max_error() < 1e-10, "{rep:?}");
    }

    #[test]
    fn injected_jacobian_error_is_detected() {
        let p = hs071();
        let x = [1.2, 4.1, 3.3, 1.7];
        let ev = p.evaluate(&x, 1e-2);
        let clean = derivcheck::check_supplied(&p, &x, 1e-2, &ev.gradient, &ev.jacobian);
        assert!(clean.max_error() < 1e-5, "{clean:?}");
        let mut jac = ev.jacobian.clone();
        jac[2] = -jac[2];
        let bad = derivcheck::check_supplied(&p, &x, 1e-2, &ev.gradient, &jac);
        assert!(bad.max_rel_error > 1e-2);
        assert_eq!(bad.worst, Some((Some(0), 2)));
    }

    #[test]
    fn trig_block_derivatives() {
        let mut p = NlpProblem::new();
        let t = p.add_var("t", 0.0, 2.0, 0.4);
        let r = p.add_var("r", 0.0, 2.0, 1.3);
        p.add_block(
            "polar",
            vec![t, r],
            &[RowKind::Eq, RowKind::Ineq],
            Arc::new(|v: &[Jet]| vec![v[1] * v[0].cos() - 1.0, v[1] * v[0].sin() / (v[1] + 1.0)]),
        )
        .unwrap();
        p.add_complementarity(t, r).unwrap();
        let rep = check_derivatives(&p, &[0.4, 1.3], 1e-3);
        assert!(rep.max_error() < 1e-7, "{rep:?}");
    }

    #[test]
    fn options_validation() {
        assert!(SolverOptions::from_json(r#"{"homotopy":[1e-3,1e-2]}"#).is_err());
        assert!(SolverOptions::from_json(r#"{"max_iter":0}"#).is_err());
        assert!(SolverOptions::from_json(r#"{"bogus":1}"#).is_err());
        let o = SolverOptions::from_json(r#"{"homotopy":[1e-2,1e-4]}"#).unwrap();
        assert_eq!(o.homotopy, vec![1e-2, 1e-4]);
        assert_eq!(o.max_iter, SolverOptions::default().max_iter);
    }

    #[test]
    fn scalar_helpers_behave() {
        assert_eq!(<f64 as Scalar>::cst(2.0), 2.0);
    }
}
