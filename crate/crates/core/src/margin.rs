//! Frictional stability margins under mass or CoM uncertainty.
//!
//! For a fixed pose and manipulator input, each external normal force is an
//! affine function of the scalar uncertainty `xi`:
//!
//! * mass: `xi` is the weight removed from the object in N (positive means the
//!   true object is lighter than planned, negative means heavier);
//! * com: `xi` is the horizontal shift `r` of the CoM in m (positive towards +x).
//!
//! Requiring `f_nA >= 0` and `f_nB >= 0` gives one linear row `a * xi <= b` per
//! contact. The margin in a direction is the largest `xi >= 0` (or `-xi`) that
//! keeps every row satisfied, a scalar LP solved here in closed form.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};
use crate::mechanics::{manipulator_force, solve_contact_forces};
use crate::object::{contact_geometry, ContactGeometry, ObjectParams, Points};

/// `|C_x|` below this makes the contact-A mass row vanish.
pub const COM_ZERO_TOL: f64 = 1e-10;
/// Absolute tolerance of the bisection oracle.
pub const ORACLE_TOL: f64 = 1e-9;
/// Normal forces above `-FEASIBILITY_TOL` count as nonnegative; matches the
/// default solver feasibility tolerance so planned trajectories touching a
/// zero normal force are not flagged.
pub const FEASIBILITY_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertaintyKind {
    Mass,
    Com,
}

impl UncertaintyKind {
    pub fn unit(&self) -> &'static str {
        match self {
            UncertaintyKind::Mass => "N",
            UncertaintyKind::Com => "m",
        }
    }

    /// Default LP cap: ten times the weight, or ten object lengths.
    pub fn default_cap(&self, obj: &ObjectParams) -> f64 {
        match self {
            UncertaintyKind::Mass => 10.0 * obj.weight(),
            UncertaintyKind::Com => 10.0 * obj.profile.length(),
        }
    }

    /// Effective `(m_eff, r)` when the uncertainty takes the signed value `xi`.
    pub fn shifted(&self, obj: &ObjectParams, xi: f64) -> (f64, f64) {
        match self {
            UncertaintyKind::Mass => (obj.m - xi / obj.g_mag, 0.0),
            UncertaintyKind::Com => (obj.m, xi),
        }
    }
}

impl fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UncertaintyKind::Mass => "mass",
            UncertaintyKind::Com => "com",
        })
    }
}

impl std::str::FromStr for UncertaintyKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mass" => Ok(UncertaintyKind::Mass),
            "com" => Ok(UncertaintyKind::Com),
            other => Err(Error::Config(format!("unknown uncertainty kind `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// Increasing `xi`: lighter object, or CoM shifted towards +x.
    Plus,
    /// Decreasing `xi`: heavier object, or CoM shifted towards -x.
    Minus,
}

impl Direction {
    pub fn sign(&self) -> f64 {
        match self {
            Direction::Plus => 1.0,
            Direction::Minus => -1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Contact {
    A,
    B,
}

/// One constraint `a * xi <= b` keeping a normal force nonnegative. `b` is the
/// normal force at `xi = 0` and `-a` its sensitivity to `xi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginRow {
    pub a: f64,
    pub b: f64,
    pub source: Contact,
}

impl MarginRow {
    /// Signed uncertainty at which this contact's normal force reaches zero.
    pub fn crossing(&self) -> Option<f64> {
        (self.a.abs() > 0.0).then(|| self.b / self.a)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginBounds {
    pub kind: UncertaintyKind,
    pub rows: Vec<MarginRow>,
}

impl MarginBounds {
    pub fn row(&self, c: Contact) -> Option<&MarginRow> {
        self.rows.iter().find(|r| r.source == c)
    }
}

/// Row data `[(a_A, b_A), (a_B, b_B)]` over any scalar type.
///
/// With `D = mu_A A_x - A_y` and `tau = P_y f_x - P_x f_y`, the moment balance
/// gives `f_nA = ((C_x + r) W + tau) / D` and the vertical balance gives
/// `f_nB = W - f_y - mu_A f_nA`.
pub fn margin_rows<T: Scalar>(
    pts: &Points<T>,
    obj: &ObjectParams,
    f_xy: [T; 2],
    kind: UncertaintyKind,
) -> [(T, T); 2] {
    let [fx, fy] = f_xy;
    let mu_a = obj.mu_a;
    let weight = obj.weight();
    let denom = pts.a[0] * mu_a - pts.a[1];
    let tau = pts.p[1] * fx - pts.p[0] * fy;
    let f_na0 = (pts.c[0] * weight + tau) / denom;
    let f_nb0 = -fy - f_na0 * mu_a + weight;
    let [a_a, a_b] = margin_coefficients(pts, obj, kind);
    [(a_a, f_na0), (a_b, f_nb0)]
}

/// Sensitivities `[a_A, a_B]` of the two normal forces to the uncertain
/// quantity; they depend on the pose only.
pub fn margin_coefficients<T: Scalar>(
    pts: &Points<T>,
    obj: &ObjectParams,
    kind: UncertaintyKind,
) -> [T; 2] {
    let mu_a = obj.mu_a;
    let denom = pts.a[0] * mu_a - pts.a[1];
    match kind {
        UncertaintyKind::Mass => {
            // W = mg - xi
            let a_a = pts.c[0] / denom;
            [a_a, -(a_a * mu_a) + 1.0]
        }
        UncertaintyKind::Com => {
            let weight = obj.weight();
            [-(denom.recip() * weight), denom.recip() * (mu_a * weight)]
        }
    }
}

/// Contact points of a float geometry.
pub fn points_of(geom: &ContactGeometry) -> Points<f64> {
    Points {
        a: geom.a,
        p: geom.p,
        c: geom.c,
        sin: geom.rot[1][0],
        cos: geom.rot[0][0],
    }
}

fn check_nonsingular(geom: &ContactGeometry, obj: &ObjectParams) -> Result<()> {
    let denom = obj.mu_a * geom.a[0] - geom.a[1];
    if denom.abs() < crate::mechanics::SINGULAR_TOL {
        return Err(Error::SingularConfiguration { denominator: denom });
    }
    Ok(())
}

fn bounds(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
    kind: UncertaintyKind,
) -> Result<MarginBounds> {
    check_nonsingular(geom, obj)?;
    let pts = points_of(geom);
    let f_xy = manipulator_force(pts.sin, pts.cos, u.0, u.1);
    let [(a_a, b_a), (a_b, b_b)] = margin_rows(&pts, obj, f_xy, kind);
    let mut rows = Vec::with_capacity(2);
    // an unloaded moment arm leaves contact A insensitive to the weight
    if kind == UncertaintyKind::Com || geom.c[0].abs() >= COM_ZERO_TOL {
        rows.push(MarginRow {
            a: a_a,
            b: b_a,
            source: Contact::A,
        });
    }
    rows.push(MarginRow {
        a: a_b,
        b: b_b,
        source: Contact::B,
    });
    Ok(MarginBounds { kind, rows })
}

pub fn mass_margin_bounds(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
) -> Result<MarginBounds> {
    bounds(geom, u, obj, UncertaintyKind::Mass)
}

pub fn com_margin_bounds(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
) -> Result<MarginBounds> {
    bounds(geom, u, obj, UncertaintyKind::Com)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActiveRow {
    ContactA,
    ContactB,
    Cap,
}

/// Solution of `max xi s.t. sign * a_j * xi <= b_j, 0 <= xi <= cap`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LpMargin {
    pub xi: f64,
    pub active: ActiveRow,
    /// Multipliers for the rows `[contact A, contact B, xi >= 0, xi <= cap]`.
    pub multipliers: [f64; 4],
    /// The nominal point already violates a contact (`b_j < 0`).
    pub infeasible: bool,
}

pub fn lp_margin(bounds: &MarginBounds, direction: Direction, cap: f64) -> Result<LpMargin> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(Error::Domain(format!(
            "margin cap must be positive, got {cap}"
        )));
    }
    let sign = direction.sign();
    if bounds.rows.iter().any(|r| r.b < -FEASIBILITY_TOL) {
        return Ok(LpMargin {
            xi: 0.0,
            active: ActiveRow::Cap,
            multipliers: [0.0; 4],
            infeasible: true,
        });
    }
    let mut best = cap;
    let mut active = ActiveRow::Cap;
    let mut coeff = 1.0;
    // contact A is listed first, so ties resolve to it
    for row in &bounds.rows {
        let a = sign * row.a;
        if a > 0.0 {
            let ratio = row.b.max(0.0) / a;
            if ratio < best || (ratio == best && active == ActiveRow::Cap) {
                best = ratio;
                coeff = a;
                active = match row.source {
                    Contact::A => ActiveRow::ContactA,
                    Contact::B => ActiveRow::ContactB,
                };
            }
        }
    }
    let mut multipliers = [0.0; 4];
    match active {
        ActiveRow::ContactA => multipliers[0] = 1.0 / coeff,
        ActiveRow::ContactB => multipliers[1] = 1.0 / coeff,
        ActiveRow::Cap => multipliers[3] = 1.0,
    }
    Ok(LpMargin {
        xi: best.max(0.0),
        active,
        multipliers,
        infeasible: false,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OracleMargin {
    pub xi: f64,
    pub infeasible: bool,
}

/// Largest `xi` in `[0, cap]` for which the closed-form contact forces keep
/// both normal forces nonnegative, found by bisection.
pub fn margin_oracle(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
    kind: UncertaintyKind,
    direction: Direction,
    cap: f64,
) -> Result<OracleMargin> {
    check_nonsingular(geom, obj)?;
    let feasible = |xi: f64| -> Result<bool> {
        let (m_eff, r) = kind.shifted(obj, direction.sign() * xi);
        let f = solve_contact_forces(geom, u, obj, m_eff, r)?;
        Ok(f.f_na >= 0.0 && f.f_nb >= 0.0)
    };
    let nominal = {
        let (m_eff, r) = kind.shifted(obj, 0.0);
        solve_contact_forces(geom, u, obj, m_eff, r)?
    };
    if nominal.f_na < -FEASIBILITY_TOL || nominal.f_nb < -FEASIBILITY_TOL {
        return Ok(OracleMargin {
            xi: 0.0,
            infeasible: true,
        });
    }
    if feasible(cap)? {
        return Ok(OracleMargin {
            xi: cap,
            infeasible: false,
        });
    }
    let (mut lo, mut hi) = (0.0, cap);
    while hi - lo > ORACLE_TOL {
        let mid = 0.5 * (lo + hi);
        if feasible(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(OracleMargin {
        xi: lo,
        infeasible: false,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginStep {
    pub bounds: MarginBounds,
    pub plus: LpMargin,
    pub minus: LpMargin,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginProfile {
    pub kind: UncertaintyKind,
    pub cap: f64,
    pub steps: Vec<MarginStep>,
    pub worst_plus: f64,
    pub worst_minus: f64,
}

impl MarginProfile {
    /// Builds a profile from per-step `(pose, input)` pairs.
    pub fn from_steps(
        obj: &ObjectParams,
        kind: UncertaintyKind,
        cap: f64,
        steps: impl IntoIterator<Item = (crate::object::PoseState, (f64, f64))>,
    ) -> Result<Self> {
        let mut out = Vec::new();
        for (pose, u) in steps {
            let geom = contact_geometry(obj, pose)?;
            let bounds = bounds(&geom, u, obj, kind)?;
            let plus = lp_margin(&bounds, Direction::Plus, cap)?;
            let minus = lp_margin(&bounds, Direction::Minus, cap)?;
            out.push(MarginStep {
                bounds,
                plus,
                minus,
            });
        }
        let worst = |f: fn(&MarginStep) -> f64| out.iter().map(f).fold(f64::INFINITY, f64::min);
        let (worst_plus, worst_minus) = if out.is_empty() {
            (0.0, 0.0)
        } else {
            (worst(|s| s.plus.xi), worst(|s| s.minus.xi))
        };
        Ok(MarginProfile {
            kind,
            cap,
            steps: out,
            worst_plus,
            worst_minus,
        })
    }

    pub fn any_infeasible(&self) -> bool {
        self.steps
            .iter()
            .any(|s| s.plus.infeasible || s.minus.infeasible)
    }

    /// CSV with columns `k, bound_A, bound_B, xi_plus, xi_minus`; unit suffixes
    /// in the header, empty cells for absent rows.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let unit = self.kind.unit();
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "k".to_string(),
            format!("bound_A_{unit}"),
            format!("bound_B_{unit}"),
            format!("xi_plus_{unit}"),
            format!("xi_minus_{unit}"),
        ])?;
        let cell = |v: Option<f64>| v.map(|x| format!("{x:.12e}")).unwrap_or_default();
        for (k, s) in self.steps.iter().enumerate() {
            let crossing = |c| s.bounds.row(c).and_then(MarginRow::crossing);
            wtr.write_record([
                k.to_string(),
                cell(crossing(Contact::A)),
                cell(crossing(Contact::B)),
                cell(Some(s.plus.xi)),
                cell(Some(s.minus.xi)),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// One row of an exported margin CSV.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MarginCsvRow {
    pub k: usize,
    pub bound_a: Option<f64>,
    pub bound_b: Option<f64>,
    pub xi_plus: f64,
    pub xi_minus: f64,
}

/// Reads a margin CSV written by [`MarginProfile::write_csv`]; returns the unit
/// suffix and rows.
pub fn read_margin_csv<R: std::io::Read>(r: R) -> Result<(String, Vec<MarginCsvRow>)> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let unit = header
        .get(3)
        .and_then(|h| h.strip_prefix("xi_plus_"))
        .ok_or_else(|| Error::Config("not a margin CSV (missing xi_plus column)".into()))?
        .to_string();
    let parse = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            s.parse::<f64>()
                .map(Some)
                .map_err(|e| Error::Config(format!("bad number `{s}`: {e}")))
        }
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != 5 {
            return Err(Error::Config(format!(
                "expected 5 columns, got {}",
                rec.len()
            )));
        }
        let k = rec[0]
            .parse()
            .map_err(|e| Error::Config(format!("bad step index: {e}")))?;
        rows.push(MarginCsvRow {
            k,
            bound_a: parse(&rec[1])?,
            bound_b: parse(&rec[2])?,
            xi_plus: parse(&rec[3])?.unwrap_or(0.0),
            xi_minus: parse(&rec[4])?.unwrap_or(0.0),
        });
    }
    Ok((unit, rows))
}
