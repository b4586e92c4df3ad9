//! Second-order forward-mode automatic differentiation.
//!
//! The mechanics and margin formulas are written once against [`Scalar`] and
//! evaluated either with plain `f64` or with [`Jet`], which carries the value,
//! gradient and (packed lower-triangular) Hessian with respect to up to
//! [`JET_DIM`] local variables. Transcribed problems use jets to produce exact
//! Jacobian and Hessian blocks for every nonlinear constraint row.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum number of local variables a single jet can differentiate against.
pub const JET_DIM: usize = 8;
const HESS_LEN: usize = JET_DIM * (JET_DIM + 1) / 2;

#[inline]
fn tri(i: usize, j: usize) -> usize {
    // i >= j
    i * (i + 1) / 2 + j
}

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn recip(self) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(&self) -> f64 {
        *self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn recip(self) -> Self {
        1.0 / self
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub g: [f64; JET_DIM],
    pub h: [f64; HESS_LEN],
}

impl Jet {
    pub fn constant(v: f64) -> Self {
        Jet {
            v,
            g: [0.0; JET_DIM],
            h: [0.0; HESS_LEN],
        }
    }

    /// Independent variable number `idx`.
    pub fn var(v: f64, idx: usize) -> Self {
        assert!(idx < JET_DIM, "jet variable index {idx} out of range");
        let mut j = Jet::constant(v);
        j.g[idx] = 1.0;
        j
    }

    /// Seeds a slice of local values as independent variables.
    pub fn seed<const K: usize>(vals: [f64; K]) -> [Jet; K] {
        let mut out = [Jet::constant(0.0); K];
        for (i, v) in vals.into_iter().enumerate() {
            out[i] = Jet::var(v, i);
        }
        out
    }

    pub fn hess(&self, i: usize, j: usize) -> f64 {
        if i >= j {
            self.h[tri(i, j)]
        } else {
            self.h[tri(j, i)]
        }
    }

    /// Applies a scalar function with first derivative `d1` and second derivative `d2`.
    #[inline]
    fn chain(&self, f: f64, d1: f64, d2: f64) -> Jet {
        let mut out = Jet::constant(f);
        for i in 0..JET_DIM {
            out.g[i] = d1 * self.g[i];
        }
        for i in 0..JET_DIM {
            for j in 0..=i {
                let k = tri(i, j);
                out.h[k] = d1 * self.h[k] + d2 * self.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Add for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, o: Jet) -> Jet {
        self.v += o.v;
        for i in 0..JET_DIM {
            self.g[i] += o.g[i];
        }
        for k in 0..HESS_LEN {
            self.h[k] += o.h[k];
        }
        self
    }
}

impl Sub for Jet {
    type Output = Jet;
    #[inline]
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    #[inline]
    fn neg(mut self) -> Jet {
        self.v = -self.v;
        for g in &mut self.g {
            *g = -*g;
        }
        for h in &mut self.h {
            *h = -*h;
        }
        self
    }
}

impl Mul for Jet {
    type Output = Jet;
    #[inline]
    fn mul(self, o: Jet) -> Jet {
        let mut out = Jet::constant(self.v * o.v);
        for i in 0..JET_DIM {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
        }
        for i in 0..JET_DIM {
            for j in 0..=i {
                let k = tri(i, j);
                out.h[k] =
                    self.v * o.h[k] + o.v * self.h[k] + self.g[i] * o.g[j] + o.g[i] * self.g[j];
            }
        }
        out
    }
}

impl Div for Jet {
    type Output = Jet;
    #[inline]
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn add(mut self, c: f64) -> Jet {
        self.v += c;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn sub(mut self, c: f64) -> Jet {
        self.v -= c;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn mul(mut self, c: f64) -> Jet {
        self.v *= c;
        for g in &mut self.g {
            *g *= c;
        }
        for h in &mut self.h {
            *h *= c;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    #[inline]
    fn div(self, c: f64) -> Jet {
        self * (1.0 / c)
    }
}

impl Scalar for Jet {
    fn cst(v: f64) -> Self {
        Jet::constant(v)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sin(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.v.sin_cos();
        self.chain(c, -s, -c)
    }
    fn recip(self) -> Self {
        let r = 1.0 / self.v;
        self.chain(r, -r * r, 2.0 * r * r * r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(f: impl Fn(&[f64; 3]) -> f64, jf: impl Fn([Jet; 3]) -> Jet, x: [f64; 3]) {
        let j = jf(Jet::seed(x));
        assert!((j.v - f(&x)).abs() < 1e-14);
        let h = 1e-5;
        for i in 0..3 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let d = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((d - j.g[i]).abs() < 1e-7, "grad {i}: {d} vs {}", j.g[i]);
            for k in 0..3 {
                let gp = jf(Jet::seed(xp)).g[k];
                let gm = jf(Jet::seed(xm)).g[k];
                let d2 = (gp - gm) / (2.0 * h);
                assert!(
                    (d2 - j.hess(i, k)).abs() < 1e-6,
                    "hess {i},{k}: {d2} vs {}",
                    j.hess(i, k)
                );
            }
        }
    }

    #[test]
    fn products_and_trig_match_finite_differences() {
        fd_check(
            |x| x[0] * x[1].sin() - x[2] * x[0].cos() / (2.0 + x[1]),
            |x| x[0] * x[1].sin() - x[2] * x[0].cos() / (x[1] + 2.0),
            [0.3, -0.7, 1.9],
        );
    }

    #[test]
    fn constants_have_no_derivatives() {
        let c = Jet::constant(3.0) * Jet::constant(2.0) + 1.0;
        assert_eq!(c.v, 7.0);
        assert!(c.g.iter().all(|&g| g == 0.0));
        assert!(c.h.iter().all(|&h| h == 0.0));
    }
}
