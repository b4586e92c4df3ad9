//! Static feasibility of planned trajectories under perturbed mass or CoM.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanics::solve_contact_forces;
use crate::object::{contact_geometry, ContactGeometry, ObjectParams};
use crate::trajectory::Trajectory;

/// Default normal-force tolerance in N.
pub const STATIC_TOL: f64 = 1e-9;

/// True iff both environmental normal forces stay above `-tol` when `eps`
/// newtons of weight are added and the CoM is shifted by `r` metres.
pub fn static_feasible(
    geom: &ContactGeometry,
    u: (f64, f64),
    obj: &ObjectParams,
    eps: f64,
    r: f64,
    tol: f64,
) -> Result<bool> {
    let m_eff = obj.m + eps / obj.g_mag;
    let f = solve_contact_forces(geom, u, obj, m_eff, r)?;
    Ok(f.f_na >= -tol && f.f_nb >= -tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Perturbation {
    /// Added weight in N.
    Mass,
    /// World-frame CoM shift in m.
    Com,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub pass: bool,
    pub first_failing_step: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: Perturbation,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.pass).count()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let unit = match self.kind {
            Perturbation::Mass => "eps_N",
            Perturbation::Com => "r_m",
        };
        out.write_record([unit, "pass", "first_failing_step"])?;
        for row in &self.rows {
            out.write_record([
                format!("{}", row.value),
                row.pass.to_string(),
                row.first_failing_step
                    .map(|k| k.to_string())
                    .unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        format!(
            "{}/{} perturbations feasible",
            self.passed(),
            self.rows.len()
        )
    }
}

/// Checks the open-loop trajectory at every step for each perturbation.
pub fn perturb_sweep(traj: &Trajectory, kind: Perturbation, values: &[f64]) -> Result<SweepReport> {
    traj.check_shape()?;
    let obj = &traj.object;
    let steps = traj
        .step_pairs()
        .map(|(x, u)| Ok((contact_geometry(obj, x)?, u)))
        .collect::<Result<Vec<_>>>()?;
    let rows = values
        .iter()
        .map(|&value| {
            let (eps, r) = match kind {
                Perturbation::Mass => (value, 0.0),
                Perturbation::Com => (0.0, value),
            };
            let mut first = None;
            for (k, (geom, u)) in steps.iter().enumerate() {
                if !static_feasible(geom, *u, obj, eps, r, STATIC_TOL)? {
                    first = Some(k);
                    break;
                }
            }
            Ok(SweepRow {
                value,
                pass: first.is_none(),
                first_failing_step: first,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { kind, rows })
}

/// Perturbations `(m_true - m_assumed) g` for true masses given in grams.
pub fn mass_perturbations(obj: &ObjectParams, true_mass_g: &[f64]) -> Result<Vec<f64>> {
    true_mass_g
        .iter()
        .map(|&g| {
            if !(g.is_finite() && g > 0.0) {
                return Err(Error::Domain(format!(
                    "true mass must be positive, got {g} g"
                )));
            }
            Ok((g * 1e-3 - obj.m) * obj.g_mag)
        })
        .collect()
}
