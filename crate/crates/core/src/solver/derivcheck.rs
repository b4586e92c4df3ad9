//! Finite-difference verification of supplied derivatives.

use super::NlpProblem;

/// Step of the fourth-order central stencil.
pub const FD_STEP: f64 = 1e-3;

/// Fourth-order central difference of `f` along coordinate `i`, applied
/// entrywise to the vector it returns.
fn stencil<F: FnMut(&[f64]) -> Vec<f64>>(xp: &mut [f64], i: usize, mut f: F) -> Vec<f64> {
    let xi = xp[i];
    let mut at = |t: f64| {
        xp[i] = xi + t * FD_STEP;
        f(xp)
    };
    let (p1, m1, p2, m2) = (at(1.0), at(-1.0), at(2.0), at(-2.0));
    xp[i] = xi;
    (0..p1.len())
        .map(|r| (8.0 * (p1[r] - m1[r]) - (p2[r] - m2[r])) / (12.0 * FD_STEP))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivativeReport {
    /// Largest error over the objective gradient and all Jacobian entries,
    /// relative to `max(1, |finite difference|)`.
    pub max_rel_error: f64,
    /// Largest error of the Lagrangian Hessian against differences of the
    /// Lagrangian gradient.
    pub hessian_rel_error: f64,
    /// `(row, column)` of the worst Jacobian entry; row `None` is the objective.
    pub worst: Option<(Option<usize>, usize)>,
}

impl DerivativeReport {
    pub fn max_error(&self) -> f64 {
        self.max_rel_error.max(self.hessian_rel_error)
    }
}

fn rel(a: f64, fd: f64) -> f64 {
    (a - fd).abs() / fd.abs().max(1.0)
}

/// Compares the problem's own gradient, Jacobian and Hessian at `x`.
pub fn check_derivatives(problem: &NlpProblem, x: &[f64], delta: f64) -> DerivativeReport {
    let ev = problem.evaluate(x, delta);
    check_supplied(problem, x, delta, &ev.gradient, &ev.jacobian)
}

/// Compares externally supplied gradient and Jacobian values (in
/// [`NlpProblem::jacobian_structure`] order) against finite differences.
pub fn check_supplied(
    problem: &NlpProblem,
    x: &[f64],
    delta: f64,
    gradient: &[f64],
    jacobian: &[f64],
) -> DerivativeReport {
    let n = problem.n_vars();
    let m = problem.n_rows();
    let mut fd_grad = vec![0.0; n];
    // column-wise differences of every row
    let mut fd_cols: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut xp = x.to_vec();
    for i in 0..n {
        // the objective rides along as the last entry
        let mut d = stencil(&mut xp, i, |x| {
            let ev = problem.evaluate(x, delta);
            let mut v = ev.residuals;
            v.push(ev.objective);
            v
        });
        fd_grad[i] = d.pop().unwrap_or(0.0);
        fd_cols.push(d);
    }
    let mut worst_err = 0.0f64;
    let mut worst = None;
    for i in 0..n {
        let e = rel(gradient[i], fd_grad[i]);
        if e > worst_err {
            worst_err = e;
            worst = Some((None, i));
        }
    }
    // sum duplicate structure entries before comparing
    let mut dense: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for (k, (r, c)) in problem.jacobian_structure().into_iter().enumerate() {
        *dense.entry((r, c)).or_default() += jacobian[k];
    }
    for (&(r, c), &a) in &dense {
        let e = rel(a, fd_cols[c][r]);
        if e > worst_err {
            worst_err = e;
            worst = Some((Some(r), c));
        }
    }
    // entries outside the structure must be zero
    for c in 0..n {
        for r in 0..m {
            if !dense.contains_key(&(r, c)) {
                let e = fd_cols[c][r].abs() / 1.0;
                if e > worst_err {
                    worst_err = e;
                    worst = Some((Some(r), c));
                }
            }
        }
    }

    // Hessian of the Lagrangian with fixed alternating multipliers
    let lambda: Vec<f64> = (0..m)
        .map(|r| if r % 2 == 0 { 1.0 } else { -0.5 })
        .collect();
    let grad_lag = |x: &[f64]| -> Vec<f64> {
        let ev = problem.evaluate(x, delta);
        let mut g = ev.gradient;
        for (k, (r, c)) in problem.jacobian_structure().into_iter().enumerate() {
            g[c] += lambda[r] * ev.jacobian[k];
        }
        g
    };
    let hv = problem.hessian(x, 1.0, &lambda);
    let mut hdense: std::collections::BTreeMap<(usize, usize), f64> = Default::default();
    for (k, (i, j)) in problem.hessian_structure().into_iter().enumerate() {
        *hdense.entry((i, j)).or_default() += hv[k];
    }
    let mut hess_err = 0.0f64;
    for j in 0..n {
        let d = stencil(&mut xp, j, &grad_lag);
        for i in j..n {
            let fd = d[i];
            let a = hdense.get(&(i, j)).copied().unwrap_or(0.0);
            hess_err = hess_err.max(rel(a, fd));
        }
    }

    DerivativeReport {
        max_rel_error: worst_err,
        hessian_rel_error: hess_err,
        worst,
    }
}
