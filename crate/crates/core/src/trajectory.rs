//! Planned pivoting trajectories and their JSON file format.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::margin::{MarginProfile, UncertaintyKind};
use crate::mechanics::{ContactForces, SlipSlacks};
use crate::object::{ObjectConfig, ObjectParams, PoseState};

pub const FORMAT: &str = "pivotal-trajectory/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Nominal,
    RobustMass,
    RobustCom,
}

impl Mode {
    pub fn robust_kind(&self) -> Option<UncertaintyKind> {
        match self {
            Mode::Nominal => None,
            Mode::RobustMass => Some(UncertaintyKind::Mass),
            Mode::RobustCom => Some(UncertaintyKind::Com),
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Nominal => "nominal",
            Mode::RobustMass => "robust-mass",
            Mode::RobustCom => "robust-com",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nominal" => Ok(Mode::Nominal),
            "robust-mass" => Ok(Mode::RobustMass),
            "robust-com" => Ok(Mode::RobustCom),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    pub status: crate::solver::SolveStatus,
    pub iterations: Vec<usize>,
    pub final_delta: f64,
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
    pub objective: f64,
}

impl From<&crate::solver::SolveReport> for SolverSummary {
    fn from(r: &crate::solver::SolveReport) -> Self {
        SolverSummary {
            status: r.status,
            iterations: r.stages.iter().map(|s| s.iterations).collect(),
            final_delta: r.final_delta,
            stationarity: r.stationarity,
            feasibility: r.feasibility,
            complementarity: r.complementarity,
            objective: r.objective,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginSummary {
    pub kind: UncertaintyKind,
    pub unit: String,
    pub worst_plus: f64,
    pub worst_minus: f64,
    pub cap: f64,
}

impl From<&MarginProfile> for MarginSummary {
    fn from(p: &MarginProfile) -> Self {
        MarginSummary {
            kind: p.kind,
            unit: p.kind.unit().to_string(),
            worst_plus: p.worst_plus,
            worst_minus: p.worst_minus,
            cap: p.cap,
        }
    }
}

/// Lower-level optima embedded in a robust solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustSummary {
    pub kind: UncertaintyKind,
    pub alpha: f64,
    pub cap: f64,
    pub t_plus: f64,
    pub t_minus: f64,
    pub eps_plus: Vec<f64>,
    pub eps_minus: Vec<f64>,
    /// Some lower-level LP ended on its cap rather than a contact row.
    pub cap_active: bool,
    /// Input regularization weight of the accepted solve.
    #[serde(default)]
    pub u_reg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecSummary {
    #[serde(rename = "N")]
    pub n: usize,
    pub q: [f64; 2],
    pub r: [f64; 2],
    pub theta_rate_max: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<SpecSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSummary>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub margins: Vec<MarginSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robust: Option<RobustSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_unix: Option<u64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub object: ObjectParams,
    pub mode: Mode,
    pub states: Vec<PoseState>,
    pub controls: Vec<(f64, f64)>,
    pub forces: Vec<ContactForces>,
    pub slips: Vec<SlipSlacks>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Number of control steps `N`.
    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    /// `(pose, input)` for every control step.
    pub fn step_pairs(&self) -> impl Iterator<Item = (PoseState, (f64, f64))> + '_ {
        self.states
            .iter()
            .copied()
            .zip(self.controls.iter().copied())
    }

    pub fn check_shape(&self) -> Result<()> {
        let n = self.controls.len();
        if n == 0 {
            return Err(Error::Config("trajectory has no steps".into()));
        }
        if self.states.len() != n + 1 || self.forces.len() != n || self.slips.len() != n {
            return Err(Error::Config(format!(
                "inconsistent trajectory lengths: {} states, {} controls, {} forces, {} slips",
                self.states.len(),
                n,
                self.forces.len(),
                self.slips.len()
            )));
        }
        Ok(())
    }

    pub fn margin_profile(&self, kind: UncertaintyKind, cap: Option<f64>) -> Result<MarginProfile> {
        self.check_shape()?;
        let cap = cap.unwrap_or_else(|| kind.default_cap(&self.object));
        MarginProfile::from_steps(&self.object, kind, cap, self.step_pairs())
    }

    pub fn to_file(&self) -> TrajectoryFile {
        let col = |f: fn(&ContactForces) -> f64| self.forces.iter().map(f).collect::<Vec<_>>();
        let slip = |f: fn(&SlipSlacks) -> f64| self.slips.iter().map(f).collect::<Vec<_>>();
        TrajectoryFile {
            format: FORMAT.to_string(),
            object: self.object.to_config(),
            mode: self.mode,
            n: self.steps(),
            theta: self.states.iter().map(|s| s.theta).collect(),
            p_y: self.states.iter().map(|s| s.p_y).collect(),
            f_np: col(|f| f.f_np),
            f_tp: col(|f| f.f_tp),
            f_na: col(|f| f.f_na),
            f_ta: col(|f| f.f_ta),
            f_nb: col(|f| f.f_nb),
            f_tb: col(|f| f.f_tb),
            f_x: col(|f| f.f_x),
            f_y: col(|f| f.f_y),
            pdot_y_plus: slip(|s| s.pdot_y_plus),
            pdot_y_minus: slip(|s| s.pdot_y_minus),
            pdot_a_plus: slip(|s| s.pdot_a_plus),
            pdot_a_minus: slip(|s| s.pdot_a_minus),
            pdot_b_plus: slip(|s| s.pdot_b_plus),
            pdot_b_minus: slip(|s| s.pdot_b_minus),
            metadata: self.meta.clone(),
        }
    }

    pub fn from_file(f: TrajectoryFile) -> Result<Self> {
        if f.format != FORMAT {
            return Err(Error::Config(format!(
                "unsupported trajectory format `{}`",
                f.format
            )));
        }
        let object = ObjectParams::from_config(&f.object)?;
        let n = f.n;
        let lens = [
            f.f_np.len(),
            f.f_tp.len(),
            f.f_na.len(),
            f.f_ta.len(),
            f.f_nb.len(),
            f.f_tb.len(),
            f.f_x.len(),
            f.f_y.len(),
            f.pdot_y_plus.len(),
            f.pdot_y_minus.len(),
            f.pdot_a_plus.len(),
            f.pdot_a_minus.len(),
            f.pdot_b_plus.len(),
            f.pdot_b_minus.len(),
        ];
        if f.theta.len() != n + 1 || f.p_y.len() != n + 1 || lens.iter().any(|&l| l != n) {
            return Err(Error::Config(format!(
                "trajectory arrays do not match N = {n}"
            )));
        }
        let states = f
            .theta
            .iter()
            .zip(&f.p_y)
            .map(|(&t, &p)| PoseState::new(t, p))
            .collect();
        let forces = (0..n)
            .map(|k| ContactForces {
                f_na: f.f_na[k],
                f_ta: f.f_ta[k],
                f_nb: f.f_nb[k],
                f_tb: f.f_tb[k],
                f_np: f.f_np[k],
                f_tp: f.f_tp[k],
                f_x: f.f_x[k],
                f_y: f.f_y[k],
            })
            .collect();
        let slips = (0..n)
            .map(|k| SlipSlacks {
                pdot_a_plus: f.pdot_a_plus[k],
                pdot_a_minus: f.pdot_a_minus[k],
                pdot_b_plus: f.pdot_b_plus[k],
                pdot_b_minus: f.pdot_b_minus[k],
                pdot_y_plus: f.pdot_y_plus[k],
                pdot_y_minus: f.pdot_y_minus[k],
            })
            .collect();
        let controls = (0..n).map(|k| (f.f_np[k], f.f_tp[k])).collect();
        Ok(Trajectory {
            object,
            mode: f.mode,
            states,
            controls,
            forces,
            slips,
            meta: f.metadata,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: TrajectoryFile = serde_json::from_str(s)?;
        Self::from_file(f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// On-disk trajectory: one array per quantity, SI units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryFile {
    pub format: String,
    pub object: ObjectConfig,
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    pub theta: Vec<f64>,
    pub p_y: Vec<f64>,
    #[serde(rename = "f_nP")]
    pub f_np: Vec<f64>,
    #[serde(rename = "f_tP")]
    pub f_tp: Vec<f64>,
    #[serde(rename = "f_nA")]
    pub f_na: Vec<f64>,
    #[serde(rename = "f_tA")]
    pub f_ta: Vec<f64>,
    #[serde(rename = "f_nB")]
    pub f_nb: Vec<f64>,
    #[serde(rename = "f_tB")]
    pub f_tb: Vec<f64>,
    pub f_x: Vec<f64>,
    pub f_y: Vec<f64>,
    pub pdot_y_plus: Vec<f64>,
    pub pdot_y_minus: Vec<f64>,
    pub pdot_a_plus: Vec<f64>,
    pub pdot_a_minus: Vec<f64>,
    pub pdot_b_plus: Vec<f64>,
    pub pdot_b_minus: Vec<f64>,
    #[serde(default)]
    pub metadata: TrajectoryMeta,
}
