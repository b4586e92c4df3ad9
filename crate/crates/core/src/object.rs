//! Object parameters and forward kinematics of the pivoting pose.
//!
//! World frame: origin at the floor contact `B`, x along the floor away from the
//! wall, y up. The wall lies to the left of `B`. The body frame is attached at
//! `B` with its x-axis along the object's length; `theta` is the angle of that
//! axis with the floor. Contact `A` is the upper corner of the near end face
//! (touching the wall), and `P` sits on the far end face at coordinate `p_y`.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::ad::Scalar;
use crate::error::{Error, Result};

/// Tolerance used when checking pose bounds.
const POSE_TOL: f64 = 1e-9;

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Planar profile of the object, all lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Profile {
    Rect {
        l: f64,
        w: f64,
    },
    /// Two axis-aligned rectangles sharing the floor-side edge: segment 1
    /// (`l1` x `w1`) holds the wall-side end face, segment 2 (`l2` x `w2`)
    /// holds the far end face where the manipulator pushes.
    Stepped {
        l1: f64,
        w1: f64,
        l2: f64,
        w2: f64,
    },
}

impl Profile {
    /// Width of the near end face, i.e. the distance from `B` to `A`.
    pub fn near_width(&self) -> f64 {
        match *self {
            Profile::Rect { w, .. } => w,
            Profile::Stepped { w1, .. } => w1,
        }
    }

    /// Extent of the far end face carrying `P`.
    pub fn far_width(&self) -> f64 {
        match *self {
            Profile::Rect { w, .. } => w,
            Profile::Stepped { w2, .. } => w2,
        }
    }

    /// Distance from the near end face to the far end face.
    pub fn length(&self) -> f64 {
        match *self {
            Profile::Rect { l, .. } => l,
            Profile::Stepped { l1, l2, .. } => l1 + l2,
        }
    }

    /// Center of mass in the body frame (uniform density).
    pub fn com_body(&self) -> [f64; 2] {
        match *self {
            Profile::Rect { l, w } => [0.5 * l, 0.5 * w],
            Profile::Stepped { l1, w1, l2, w2 } => {
                let a1 = l1 * w1;
                let a2 = l2 * w2;
                let cx = (a1 * 0.5 * l1 + a2 * (l1 + 0.5 * l2)) / (a1 + a2);
                let cy = (a1 * 0.5 * w1 + a2 * 0.5 * w2) / (a1 + a2);
                [cx, cy]
            }
        }
    }

    /// Counter-clockwise outline in the body frame.
    pub fn outline(&self) -> Vec<[f64; 2]> {
        match *self {
            Profile::Rect { l, w } => vec![[0.0, 0.0], [l, 0.0], [l, w], [0.0, w]],
            Profile::Stepped { l1, w1, l2, w2 } => vec![
                [0.0, 0.0],
                [l1 + l2, 0.0],
                [l1 + l2, w2],
                [l1, w2],
                [l1, w1],
                [0.0, w1],
            ],
        }
    }

    fn dims(&self) -> Vec<f64> {
        match *self {
            Profile::Rect { l, w } => vec![l, w],
            Profile::Stepped { l1, w1, l2, w2 } => vec![l1, w1, l2, w2],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectParams {
    pub name: String,
    /// Mass in kg.
    pub m: f64,
    /// Gravitational acceleration magnitude in m/s^2.
    pub g_mag: f64,
    pub profile: Profile,
    pub mu_a: f64,
    pub mu_b: f64,
    pub mu_p: f64,
    /// Upper bound on every normal force, N.
    pub f_u: f64,
}

impl ObjectParams {
    pub fn new(
        name: impl Into<String>,
        m: f64,
        profile: Profile,
        mu: [f64; 3],
        f_u: f64,
    ) -> Result<Self> {
        let obj = ObjectParams {
            name: name.into(),
            m,
            g_mag: DEFAULT_GRAVITY,
            profile,
            mu_a: mu[0],
            mu_b: mu[1],
            mu_p: mu[2],
            f_u,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.m) {
            return Err(Error::Config(format!(
                "mass must be positive, got {}",
                self.m
            )));
        }
        if !positive(self.g_mag) {
            return Err(Error::Config(format!(
                "gravity must be positive, got {}",
                self.g_mag
            )));
        }
        if !positive(self.f_u) {
            return Err(Error::Config(format!(
                "force bound must be positive, got {}",
                self.f_u
            )));
        }
        for (name, mu) in [
            ("mu_A", self.mu_a),
            ("mu_B", self.mu_b),
            ("mu_P", self.mu_p),
        ] {
            if !(mu.is_finite() && mu >= 0.0) {
                return Err(Error::Config(format!(
                    "{name} must be nonnegative, got {mu}"
                )));
            }
        }
        if let Some(d) = self.profile.dims().into_iter().find(|&d| !positive(d)) {
            return Err(Error::Config(format!(
                "profile dimensions must be positive, got {d}"
            )));
        }
        Ok(())
    }

    /// Nominal weight `m * g_mag` in N.
    pub fn weight(&self) -> f64 {
        self.m * self.g_mag
    }

    pub fn mu(&self) -> [f64; 3] {
        [self.mu_a, self.mu_b, self.mu_p]
    }

    pub fn from_config(cfg: &ObjectConfig) -> Result<Self> {
        let mm = 1e3;
        let profile = match cfg.profile {
            ProfileConfig::Rect { l_mm, w_mm } => Profile::Rect {
                l: l_mm / mm,
                w: w_mm / mm,
            },
            ProfileConfig::Stepped {
                l1_mm,
                w1_mm,
                l2_mm,
                w2_mm,
            } => Profile::Stepped {
                l1: l1_mm / mm,
                w1: w1_mm / mm,
                l2: l2_mm / mm,
                w2: w2_mm / mm,
            },
        };
        let obj = ObjectParams {
            name: cfg.name.clone(),
            m: cfg.mass_g / 1e3,
            g_mag: cfg.g.unwrap_or(DEFAULT_GRAVITY),
            profile,
            mu_a: cfg.mu[0],
            mu_b: cfg.mu[1],
            mu_p: cfg.mu[2],
            f_u: cfg.f_u_n,
        };
        obj.validate()?;
        Ok(obj)
    }

    pub fn to_config(&self) -> ObjectConfig {
        let mm = |x: f64| rescale(x, 1e3);
        let profile = match self.profile {
            Profile::Rect { l, w } => ProfileConfig::Rect {
                l_mm: mm(l),
                w_mm: mm(w),
            },
            Profile::Stepped { l1, w1, l2, w2 } => ProfileConfig::Stepped {
                l1_mm: mm(l1),
                w1_mm: mm(w1),
                l2_mm: mm(l2),
                w2_mm: mm(w2),
            },
        };
        ObjectConfig {
            name: self.name.clone(),
            mass_g: rescale(self.m, 1e3),
            profile,
            mu: self.mu(),
            f_u_n: self.f_u,
            g: (self.g_mag != DEFAULT_GRAVITY).then_some(self.g_mag),
        }
    }

    /// Same object with a different mass (kg).
    pub fn with_mass(&self, m: f64) -> Result<Self> {
        let mut o = self.clone();
        o.m = m;
        o.validate()?;
        Ok(o)
    }
}

/// `x * scale`, rounded to the fewest decimals that still divide back to `x`
/// exactly, so configs survive a load/save cycle bit for bit.
fn rescale(x: f64, scale: f64) -> f64 {
    let y = x * scale;
    for digits in 0..15 {
        let p = 10f64.powi(digits);
        let c = (y * p).round() / p;
        if c / scale == x {
            return c;
        }
    }
    let mut c = y;
    for _ in 0..4 {
        if c / scale == x {
            return c;
        }
        c = if c / scale < x {
            c.next_up()
        } else {
            c.next_down()
        };
    }
    y
}

/// On-disk object description; lengths in mm and mass in g.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectConfig {
    pub name: String,
    pub mass_g: f64,
    pub profile: ProfileConfig,
    pub mu: [f64; 3],
    #[serde(rename = "f_u_N")]
    pub f_u_n: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ProfileConfig {
    Rect {
        l_mm: f64,
        w_mm: f64,
    },
    Stepped {
        l1_mm: f64,
        w1_mm: f64,
        l2_mm: f64,
        w2_mm: f64,
    },
}

impl ObjectConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseState {
    pub theta: f64,
    pub p_y: f64,
}

impl PoseState {
    pub fn new(theta: f64, p_y: f64) -> Self {
        PoseState { theta, p_y }
    }

    pub fn validate(&self, obj: &ObjectParams) -> Result<()> {
        let face = obj.profile.far_width();
        if !(self.theta.is_finite() && self.p_y.is_finite()) {
            return Err(Error::Domain("pose must be finite".into()));
        }
        if self.theta < -POSE_TOL || self.theta > FRAC_PI_2 + POSE_TOL {
            return Err(Error::Domain(format!(
                "theta {} outside [0, pi/2]",
                self.theta
            )));
        }
        if self.p_y < -POSE_TOL || self.p_y > face + POSE_TOL {
            return Err(Error::Domain(format!(
                "p_y {} outside [0, {face}]",
                self.p_y
            )));
        }
        Ok(())
    }
}

/// World-frame contact points at a pose; moments are taken about `B`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactGeometry {
    pub a: [f64; 2],
    pub b: [f64; 2],
    pub p: [f64; 2],
    pub c: [f64; 2],
    /// Body-to-world rotation.
    pub rot: [[f64; 2]; 2],
}

impl ContactGeometry {
    pub fn theta(&self) -> f64 {
        self.rot[1][0].atan2(self.rot[0][0])
    }
}

/// Contact points as generic scalars, used by the transcribed problems.
#[derive(Clone, Copy, Debug)]
pub struct Points<T> {
    pub a: [T; 2],
    pub p: [T; 2],
    pub c: [T; 2],
    pub sin: T,
    pub cos: T,
}

/// Forward kinematics over any scalar type.
pub fn points<T: Scalar>(profile: &Profile, theta: T, p_y: T) -> Points<T> {
    let s = theta.sin();
    let c = theta.cos();
    let wn = profile.near_width();
    let len = profile.length();
    let [cbx, cby] = profile.com_body();
    let rotate = |x: T, y: T| [c * x - s * y, s * x + c * y];
    let zero = T::cst(0.0);
    Points {
        a: rotate(zero, T::cst(wn)),
        p: rotate(T::cst(len), p_y),
        c: rotate(T::cst(cbx), T::cst(cby)),
        sin: s,
        cos: c,
    }
}

pub fn contact_geometry(obj: &ObjectParams, x: PoseState) -> Result<ContactGeometry> {
    x.validate(obj)?;
    let pts = points(&obj.profile, x.theta, x.p_y);
    let (s, c) = (pts.sin, pts.cos);
    Ok(ContactGeometry {
        a: pts.a,
        b: [0.0, 0.0],
        p: pts.p,
        c: pts.c,
        rot: [[c, -s], [s, c]],
    })
}

/// Horizontal world-frame component `r` of a body-frame CoM offset `(dx, dy)`.
pub fn com_offset_world(dx: f64, dy: f64, theta: f64) -> f64 {
    let d = dx.hypot(dy);
    let theta_d = dy.atan2(dx);
    let dx_w = d * (theta + theta_d).cos();
    // The vertical component does not enter the moment balance.
    let _dy_w = d * (theta + theta_d).sin();
    dx_w
}
