//! Quasi-static mechanics of two-contact pivoting.
//!
//! Contacts `A` (wall) and `B` (floor) slip during pivoting, so their friction
//! forces sit on the cone edge: `f_tA = mu_A f_nA` and `f_tB = -mu_B f_nB`.
//! Gravity acts downward with magnitude `m_eff * g_mag` at horizontal position
//! `C_x + r`. The manipulator force at `P` is expressed in the contact frame of
//! the far face: `f_nP >= 0` pushes along the inward normal `-(cos, sin)` and
//! `f_tP` acts along the direction of increasing `p_y`.

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::object::{ContactGeometry, ObjectParams, Points};

/// Denominators `mu_A A_x - A_y` smaller than this are rejected.
pub const SINGULAR_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ContactForces {
    pub f_na: f64,
    pub f_ta: f64,
    pub f_nb: f64,
    pub f_tb: f64,
    pub f_np: f64,
    pub f_tp: f64,
    /// World-frame manipulator force.
    pub f_x: f64,
    pub f_y: f64,
}

/// Per-step slip displacements (unit time step), all nonnegative. A `plus`
/// slip is the object moving against the positive tangent relative to the
/// contact partner, so friction saturates at `f_t = +mu f_n`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SlipSlacks {
    pub pdot_a_plus: f64,
    pub pdot_a_minus: f64,
    pub pdot_b_plus: f64,
    pub pdot_b_minus: f64,
    pub pdot_y_plus: f64,
    pub pdot_y_minus: f64,
}

/// World-frame manipulator force from contact-frame components.
#[inline]
pub fn manipulator_force<T: Scalar>(sin: T, cos: T, f_np: T, f_tp: T) -> [T; 2] {
    [-(cos * f_np) - sin * f_tp, cos * f_tp - sin * f_np]
}

/// Raw force-x, force-y and moment-about-B residuals.
#[allow(clippy::too_many_arguments)]
#[inline]
pub fn equilibrium_terms<T: Scalar>(
    pts: &Points<T>,
    f_na: T,
    f_ta: T,
    f_nb: T,
    f_tb: T,
    f_xy: [T; 2],
    weight: T,
    r: T,
) -> [T; 3] {
    let [fx, fy] = f_xy;
    [
        f_na + f_tb + fx,
        f_ta + f_nb - weight + fy,
        pts.a[0] * f_ta - pts.a[1] * f_na - (pts.c[0] + r) * weight + pts.p[0] * fy - pts.p[1] * fx,
    ]
}

/// Normal forces at `A` and `B` implied by the moment and vertical balances
/// with both external contacts slipping.
#[inline]
pub fn normal_forces<T: Scalar>(
    pts: &Points<T>,
    mu_a: f64,
    f_xy: [T; 2],
    weight: T,
    r: T,
) -> (T, T) {
    let [fx, fy] = f_xy;
    let denom = pts.a[0] * mu_a - pts.a[1];
    let f_na = ((pts.c[0] + r) * weight + pts.p[1] * fx - pts.p[0] * fy) / denom;
    let f_nb = weight - fy - f_na * mu_a;
    (f_na, f_nb)
}

fn geometry_points(geom: &ContactGeometry) -> Points<f64> {
    Points {
        a: geom.a,
        p: geom.p,
        c: geom.c,
        sin: geom.rot[1][0],
        cos: geom.rot[0][0],
    }
}

/// Residuals of the static equilibrium under effective mass `m_eff` and
/// horizontal CoM shift `r`.
pub fn equilibrium_residual(
    geom: &ContactGeometry,
    f: &ContactForces,
    g_mag: f64,
    m_eff: f64,
    r: f64,
) -> [f64; 3] {
    let pts = geometry_points(geom);
    equilibrium_terms(
        &pts,
        f.f_na,
        f.f_ta,
        f.f_nb,
        f.f_tb,
        [f.f_x, f.f_y],
        m_eff * g_mag,
        r,
    )
}

/// Cone slacks `mu_A f_nA - |f_tA|`, `mu_B f_nB - |f_tB|`, `mu_P f_nP - |f_tP|`,
/// `f_nA`, `f_nB`; all nonnegative for an admissible force set.
pub fn friction_cone_residuals(f: &ContactForces, mu: [f64; 3]) -> [f64; 5] {
    [
        mu[0] * f.f_na - f.f_ta.abs(),
        mu[1] * f.f_nb - f.f_tb.abs(),
        mu[2] * f.f_np - f.f_tp.abs(),
        f.f_na,
        f.f_nb,
    ]
}

/// Slipping-contact equalities at `A` and `B`.
pub fn slip_equalities(f: &ContactForces, mu: [f64; 3]) -> [f64; 2] {
    [f.f_ta - mu[0] * f.f_na, f.f_tb + mu[1] * f.f_nb]
}

/// Complementarity pairs `(slip, cone slack)` for `A+`, `A-`, `B+`, `B-`, `P+`, `P-`.
pub fn slip_complementarity_residuals(
    f: &ContactForces,
    s: &SlipSlacks,
    mu: [f64; 3],
) -> [(f64, f64); 6] {
    [
        (s.pdot_a_plus, mu[0] * f.f_na - f.f_ta),
        (s.pdot_a_minus, mu[0] * f.f_na + f.f_ta),
        (s.pdot_b_plus, mu[1] * f.f_nb - f.f_tb),
        (s.pdot_b_minus, mu[1] * f.f_nb + f.f_tb),
        (s.pdot_y_plus, mu[2] * f.f_np - f.f_tp),
        (s.pdot_y_minus, mu[2] * f.f_np + f.f_tp),
    ]
}

/// Closed-form contact forces for manipulator input `u = (f_nP, f_tP)`.
///
/// `f_nA` comes from the moment balance about `B` with `f_tA = mu_A f_nA`,
/// `f_nB` from the vertical balance and `f_tB` from the horizontal balance, so
/// the equilibrium residual vanishes for every input. `f_tB` equals
/// `-mu_B f_nB` exactly when `u` is quasi-statically admissible for the given
/// mass and CoM shift.
pub fn solve_contact_forces(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
    m_eff: f64,
    r: f64,
) -> Result<ContactForces> {
    let pts = geometry_points(geom);
    let denom = obj.mu_a * pts.a[0] - pts.a[1];
    if denom.abs() < SINGULAR_TOL {
        return Err(Error::SingularConfiguration { denominator: denom });
    }
    let (f_np, f_tp) = u;
    let f_xy = manipulator_force(pts.sin, pts.cos, f_np, f_tp);
    let weight = m_eff * obj.g_mag;
    let (f_na, f_nb) = normal_forces(&pts, obj.mu_a, f_xy, weight, r);
    Ok(ContactForces {
        f_na,
        f_ta: obj.mu_a * f_na,
        f_nb,
        f_tb: -f_na - f_xy[0],
        f_np,
        f_tp,
        f_x: f_xy[0],
        f_y: f_xy[1],
    })
}

/// Manipulator inputs on the quasi-static manifold at a pose: every admissible
/// `(f_nP, f_tP)` with both external contacts slipping satisfies
/// `f_tP = offset + slope * f_nP`, and the normal forces are affine in `f_nP`
/// along this line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleLine {
    pub tp_offset: f64,
    pub tp_slope: f64,
}

impl AdmissibleLine {
    pub fn f_tp(&self, f_np: f64) -> f64 {
        self.tp_offset + self.tp_slope * f_np
    }
}

/// Line of inputs for which the horizontal balance also holds with
/// `f_tB = -mu_B f_nB`. Returns `None` when `f_tP` has no leverage on it.
pub fn admissible_line(
    geom: &ContactGeometry,
    obj: &ObjectParams,
    m_eff: f64,
    r: f64,
) -> Result<Option<AdmissibleLine>> {
    let gap = |f_np: f64, f_tp: f64| -> Result<f64> {
        let f = solve_contact_forces(geom, (f_np, f_tp), obj, m_eff, r)?;
        Ok(f.f_tb + obj.mu_b * f.f_nb)
    };
    // the gap is affine in (f_nP, f_tP)
    let g00 = gap(0.0, 0.0)?;
    let g10 = gap(1.0, 0.0)? - g00;
    let g01 = gap(0.0, 1.0)? - g00;
    if g01.abs() < 1e-12 {
        return Ok(None);
    }
    Ok(Some(AdmissibleLine {
        tp_offset: -g00 / g01,
        tp_slope: -g10 / g01,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::object::{contact_geometry, PoseState, Profile};
    use std::f64::consts::FRAC_PI_4;

    fn gear1() -> ObjectParams {
        ObjectParams::new(
            "gear 1",
            0.140,
            Profile::Rect { l: 0.084, w: 0.020 },
            [0.3, 0.3, 0.8],
            5.0,
        )
        .unwrap()
    }

    fn norm_inf(v: &[f64]) -> f64 {
        v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    #[test]
    fn empty_system_is_balanced() {
        let obj = gear1();
        let g = contact_geometry(&obj, PoseState::new(0.3, 0.01)).unwrap();
        let r = equilibrium_residual(&g, &ContactForces::default(), obj.g_mag, 0.0, 0.0);
        assert_eq!(r, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn closed_form_round_trip_at_quarter_turn() {
        let obj = gear1();
        let g = contact_geometry(&obj, PoseState::new(FRAC_PI_4, 0.005)).unwrap();
        let f = solve_contact_forces(&g, (0.76, 0.6), &obj, obj.m, 0.0).unwrap();
        let res = equilibrium_residual(&g, &f, obj.g_mag, obj.m, 0.0);
        assert!(norm_inf(&res) < 1e-12, "{res:?}");
        assert!((f.f_ta - 0.3 * f.f_na).abs() < 1e-15);
    }

    #[test]
    fn admissible_inputs_slip_at_both_contacts() {
        let obj = gear1();
        let g = contact_geometry(&obj, PoseState::new(FRAC_PI_4, 0.005)).unwrap();
        let line = admissible_line(&g, &obj, obj.m, 0.0).unwrap().unwrap();
        let u = (0.76, line.f_tp(0.76));
        let f = solve_contact_forces(&g, u, &obj, obj.m, 0.0).unwrap();
        let slip = slip_equalities(&f, obj.mu());
        assert!(norm_inf(&slip) < 1e-12, "{slip:?}");
        assert!(norm_inf(&equilibrium_residual(&g, &f, obj.g_mag, obj.m, 0.0)) < 1e-12);
    }

    #[test]
    fn loss_of_contact_boundary() {
        let obj = gear1();
        let g = contact_geometry(&obj, PoseState::new(0.5, 0.004)).unwrap();
        let (f_np, f_tp) = (1.0, 0.4);
        let fx = -(0.5f64.cos()) * f_np - 0.5f64.sin() * f_tp;
        let fy = 0.5f64.cos() * f_tp - 0.5f64.sin() * f_np;
        // numerator C_x W + P_y f_x - P_x f_y = 0
        let weight = (g.p[0] * fy - g.p[1] * fx) / g.c[0];
        let f = solve_contact_forces(&g, (f_np, f_tp), &obj, weight / obj.g_mag, 0.0).unwrap();
        assert!(f.f_na.abs() < 1e-14, "{}", f.f_na);
    }

    #[test]
    fn mass_sensitivity_matches_finite_difference() {
        let obj = gear1();
        let g = contact_geometry(&obj, PoseState::new(0.9, 0.01)).unwrap();
        let u = (0.8, 0.2);
        let base = solve_contact_forces(&g, u, &obj, obj.m, 0.0).unwrap();
        let eps = 0.05; // N of added weight
        let bumped = solve_contact_forces(&g, u, &obj, obj.m + eps / obj.g_mag, 0.0).unwrap();
        let denom = obj.mu_a * g.a[0] - g.a[1];
        let slope = g.c[0] / denom;
        assert!(((bumped.f_na - base.f_na) / eps - slope).abs() < 1e-10);
    }

    #[test]
    fn singular_configuration_is_rejected() {
        let obj = gear1();
        let mut g = contact_geometry(&obj, PoseState::new(0.2, 0.0)).unwrap();
        g.a = [0.0, 0.0];
        assert!(matches!(
            solve_contact_forces(&g, (1.0, 0.0), &obj, obj.m, 0.0),
            Err(Error::SingularConfiguration { .. })
        ));
    }

    #[test]
    fn cone_and_slip_residuals() {
        let zero = ContactForces::default();
        assert_eq!(friction_cone_residuals(&zero, [0.3, 0.3, 0.8]), [0.0; 5]);
        let f = ContactForces {
            f_na: 1.0,
            f_ta: 0.3,
            ..Default::default()
        };
        assert_eq!(friction_cone_residuals(&f, [0.3, 0.3, 0.8])[0], 0.0);
        let f = ContactForces {
            f_na: 1.0,
            f_ta: 0.45,
            ..Default::default()
        };
        assert!(friction_cone_residuals(&f, [0.3, 0.3, 0.8])[0] < 0.0);

        let f = ContactForces {
            f_na: 2.0,
            f_ta: 0.6,
            f_nb: 1.0,
            f_tb: -0.3,
            ..Default::default()
        };
        assert_eq!(slip_equalities(&f, [0.3, 0.3, 0.8]), [0.0, 0.0]);
        let f = ContactForces {
            f_na: 2.0,
            f_ta: 0.5,
            f_nb: 1.0,
            f_tb: 0.3,
            ..Default::default()
        };
        let s = slip_equalities(&f, [0.3, 0.3, 0.8]);
        assert!((s[0] + 0.1).abs() < 1e-15 && (s[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn complementarity_pairs() {
        let mu = [0.3, 0.3, 0.8];
        let sticking = ContactForces {
            f_np: 1.0,
            f_tp: 0.2,
            ..Default::default()
        };
        let pairs = slip_complementarity_residuals(&sticking, &SlipSlacks::default(), mu);
        assert!(pairs.iter().all(|(a, b)| a * b == 0.0));
        let slipping = ContactForces {
            f_np: 1.0,
            f_tp: 0.8,
            ..Default::default()
        };
        let s = SlipSlacks {
            pdot_y_plus: 0.01,
            ..Default::default()
        };
        let pairs = slip_complementarity_residuals(&slipping, &s, mu);
        assert_eq!(pairs[4], (0.01, 0.0));
        assert!(pairs[5].1 > 0.0);
    }
}
