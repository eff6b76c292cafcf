//! Kinematic emulation of the camera arm.
//!
//! A base servo yaws the whole arm about +y. In the resulting vertical plane a
//! bottom servo sets the lower link angle, a top servo the upper link angle
//! relative to it, and a linear actuator extends the upper link. The camera
//! sits at the actuator tip on a bracket with a fixed pitch offset; tilt is
//! modelled as an extra virtual pitch joint.

pub mod protocol;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{CameraCommand, Pan, Tilt, Zoom};
use crate::geometry::{build_pose, CameraPose, GeometryError};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArmError {
    #[error("{joint} = {value} outside limits [{lo}, {hi}]")]
    LimitViolation {
        joint: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("target ({}, {}, {}) is unreachable", .0.x, .0.y, .0.z)]
    Unreachable(Vec3),
    #[error("invalid arm parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JointLimits {
    pub base_deg: [f64; 2],
    pub bottom_deg: [f64; 2],
    pub top_deg: [f64; 2],
    pub pitch_offset_deg: [f64; 2],
}

impl Default for JointLimits {
    fn default() -> Self {
        Self {
            base_deg: [-90.0, 90.0],
            bottom_deg: [0.0, 180.0],
            top_deg: [-170.0, 170.0],
            pitch_offset_deg: [-60.0, 60.0],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmParams {
    /// Lower link, bottom servo to top servo.
    pub l1_mm: f64,
    /// Fixed part of the upper link, top servo to actuator base.
    pub l2_mm: f64,
    pub ext_range_mm: [f64; 2],
    pub base_height_mm: f64,
    pub bracket_pitch_deg: f64,
    pub limits: JointLimits,
    pub pan_step_deg: f64,
    pub tilt_step_deg: f64,
    pub zoom_step_mm: f64,
    /// Bottom servo increment used by the inverse kinematics search.
    pub sweep_step_deg: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            l1_mm: 200.0,
            l2_mm: 150.0,
            ext_range_mm: [0.0, 100.0],
            base_height_mm: 0.0,
            bracket_pitch_deg: -30.0,
            limits: JointLimits::default(),
            pan_step_deg: 2.0,
            tilt_step_deg: 2.0,
            zoom_step_mm: 10.0,
            sweep_step_deg: 0.25,
        }
    }
}

impl ArmParams {
    pub fn validate(&self) -> Result<(), ArmError> {
        let bad = |m: &str| Err(ArmError::InvalidParams(m.to_string()));
        if !(self.l1_mm > 0.0 && self.l2_mm > 0.0) {
            return bad("link lengths must be positive");
        }
        if !(self.ext_range_mm[0] >= 0.0 && self.ext_range_mm[0] < self.ext_range_mm[1]) {
            return bad("ext_range_mm must be a non-degenerate, non-negative range");
        }
        let l = &self.limits;
        for r in [l.base_deg, l.bottom_deg, l.top_deg, l.pitch_offset_deg] {
            if !(r[0] <= r[1]) {
                return bad("joint limit ranges must be ordered");
            }
        }
        if !(self.pan_step_deg > 0.0
            && self.tilt_step_deg > 0.0
            && self.zoom_step_mm > 0.0
            && self.sweep_step_deg > 0.0)
        {
            return bad("step sizes must be positive");
        }
        if !self.base_height_mm.is_finite() || !self.bracket_pitch_deg.is_finite() {
            return bad("base_height_mm and bracket_pitch_deg must be finite");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmState {
    pub theta_base_deg: f64,
    pub theta_bottom_deg: f64,
    pub theta_top_deg: f64,
    pub extension_mm: f64,
    /// Accumulated tilt on top of the bracket pitch.
    pub pitch_offset_deg: f64,
}

impl Default for ArmState {
    fn default() -> Self {
        Self {
            theta_base_deg: 0.0,
            theta_bottom_deg: 90.0,
            theta_top_deg: -90.0,
            extension_mm: 50.0,
            pitch_offset_deg: 0.0,
        }
    }
}

fn check(joint: &'static str, value: f64, [lo, hi]: [f64; 2]) -> Result<(), ArmError> {
    if lo <= value && value <= hi {
        Ok(())
    } else {
        Err(ArmError::LimitViolation { joint, value, lo, hi })
    }
}

impl ArmState {
    pub fn validate(&self, params: &ArmParams) -> Result<(), ArmError> {
        let l = &params.limits;
        check("theta_base_deg", self.theta_base_deg, l.base_deg)?;
        check("theta_bottom_deg", self.theta_bottom_deg, l.bottom_deg)?;
        check("theta_top_deg", self.theta_top_deg, l.top_deg)?;
        check("extension_mm", self.extension_mm, params.ext_range_mm)?;
        check("pitch_offset_deg", self.pitch_offset_deg, l.pitch_offset_deg)
    }

    /// Camera pitch before the virtual tilt joint is added.
    fn structural_pitch_deg(&self, params: &ArmParams) -> f64 {
        self.theta_bottom_deg + self.theta_top_deg + params.bracket_pitch_deg
    }

    pub fn camera_pitch_deg(&self, params: &ArmParams) -> f64 {
        self.structural_pitch_deg(params) + self.pitch_offset_deg
    }
}

/// `(radial, height)` of the camera in the arm's vertical plane, relative to
/// the bottom servo.
fn planar_tip(state: &ArmState, params: &ArmParams) -> (f64, f64) {
    let (s1, c1) = state.theta_bottom_deg.to_radians().sin_cos();
    let (s12, c12) = (state.theta_bottom_deg + state.theta_top_deg).to_radians().sin_cos();
    let reach = params.l2_mm + state.extension_mm;
    (params.l1_mm * c1 + reach * c12, params.l1_mm * s1 + reach * s12)
}

/// Camera position alone. Defined even where the camera orientation is not.
pub fn camera_position(state: &ArmState, params: &ArmParams) -> Result<Vec3, ArmError> {
    state.validate(params)?;
    let (radial, height) = planar_tip(state, params);
    let (sb, cb) = state.theta_base_deg.to_radians().sin_cos();
    Ok(Vec3::new(radial * cb, height + params.base_height_mm, radial * sb))
}

pub fn forward_kinematics(state: &ArmState, params: &ArmParams) -> Result<CameraPose, ArmError> {
    let position = camera_position(state, params)?;
    Ok(build_pose(
        position,
        state.theta_base_deg,
        state.camera_pitch_deg(params),
    )?)
}

/// Wraps an angle in degrees to (-180, 180].
fn wrap_deg(a: f64) -> f64 {
    let w = (a + 180.0).rem_euclid(360.0) - 180.0;
    if w == -180.0 {
        180.0
    } else {
        w
    }
}

const EXT_SLACK_MM: f64 = 1e-9;

/// Solves for joints placing the camera at `target`.
///
/// The base angle follows from the target bearing. The bottom servo is then
/// searched starting at its current angle and moving outward in
/// `sweep_step_deg` increments (`+k` before `-k`); for each candidate the top
/// servo and actuator extension follow in closed form, and the first candidate
/// within every limit whose camera pitch stays inside (-90, 90) wins. The
/// virtual pitch offset is carried over unchanged.
pub fn inverse_kinematics(
    target: &Vec3,
    current: &ArmState,
    params: &ArmParams,
) -> Result<ArmState, ArmError> {
    let radial = target.x.hypot(target.z);
    let height = target.y - params.base_height_mm;
    let theta_base = if radial < 1e-9 {
        current.theta_base_deg
    } else {
        target.z.atan2(target.x).to_degrees()
    };
    let limits = &params.limits;
    if check("theta_base_deg", theta_base, limits.base_deg).is_err() {
        return Err(ArmError::Unreachable(*target));
    }

    let [lo, hi] = limits.bottom_deg;
    let start = current.theta_bottom_deg.clamp(lo, hi);
    let [ext_lo, ext_hi] = params.ext_range_mm;

    let solve = |theta_bottom: f64| -> Option<ArmState> {
        let (s1, c1) = theta_bottom.to_radians().sin_cos();
        let dx = radial - params.l1_mm * c1;
        let dy = height - params.l1_mm * s1;
        let ext = dx.hypot(dy) - params.l2_mm;
        if ext < ext_lo - EXT_SLACK_MM || ext > ext_hi + EXT_SLACK_MM {
            return None;
        }
        let theta_top = wrap_deg(dy.atan2(dx).to_degrees() - theta_bottom);
        check("theta_top_deg", theta_top, limits.top_deg).ok()?;
        let s = ArmState {
            theta_base_deg: theta_base,
            theta_bottom_deg: theta_bottom,
            theta_top_deg: theta_top,
            extension_mm: ext.clamp(ext_lo, ext_hi),
            pitch_offset_deg: current.pitch_offset_deg,
        };
        (s.camera_pitch_deg(params).abs() < 90.0).then_some(s)
    };

    for k in 0u32.. {
        let delta = f64::from(k) * params.sweep_step_deg;
        let up = start + delta;
        let down = start - delta;
        let up_ok = up <= hi;
        let down_ok = down >= lo;
        if !up_ok && !down_ok {
            break;
        }
        if up_ok {
            if let Some(s) = solve(up) {
                return Ok(s);
            }
        }
        if k > 0 && down_ok {
            if let Some(s) = solve(down) {
                return Ok(s);
            }
        }
    }
    Err(ArmError::Unreachable(*target))
}

/// Result of applying one command. When the zoom target cannot be reached the
/// zoom is skipped, `unreachable` is set, and the pan and tilt parts still
/// apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    pub state: ArmState,
    pub unreachable: bool,
}

/// Applies pan, then tilt, then zoom along the resulting optical axis.
///
/// Zoom is a dolly move: after re-solving the joints the virtual pitch offset
/// absorbs the change in structural pitch so the viewing direction is kept
/// (up to the pitch offset limits).
pub fn apply_command(
    state: &ArmState,
    cmd: &CameraCommand,
    params: &ArmParams,
) -> Result<Applied, ArmError> {
    state.validate(params)?;
    let limits = &params.limits;
    let mut next = *state;

    let pan = match cmd.pan {
        Pan::Right => params.pan_step_deg,
        Pan::Left => -params.pan_step_deg,
        Pan::None => 0.0,
    };
    if pan != 0.0 {
        let [lo, hi] = limits.base_deg;
        next.theta_base_deg = (next.theta_base_deg + pan).clamp(lo, hi);
    }

    let tilt = match cmd.tilt {
        Tilt::Up => params.tilt_step_deg,
        Tilt::Down => -params.tilt_step_deg,
        Tilt::None => 0.0,
    };
    if tilt != 0.0 {
        let [lo, hi] = limits.pitch_offset_deg;
        let candidate = ArmState {
            pitch_offset_deg: (next.pitch_offset_deg + tilt).clamp(lo, hi),
            ..next
        };
        // hold the tilt if it would point the camera straight up or down
        if candidate.camera_pitch_deg(params).abs() < 90.0 {
            next = candidate;
        }
    }

    let dolly = match cmd.zoom {
        Zoom::In => params.zoom_step_mm,
        Zoom::Out => -params.zoom_step_mm,
        Zoom::None => 0.0,
    };
    let mut unreachable = false;
    if dolly != 0.0 {
        let pose = forward_kinematics(&next, params)?;
        let target = pose.position + dolly * pose.normal;
        match inverse_kinematics(&target, &next, params) {
            Ok(mut solved) => {
                let [lo, hi] = limits.pitch_offset_deg;
                let pitch = next.camera_pitch_deg(params);
                solved.pitch_offset_deg =
                    (pitch - solved.structural_pitch_deg(params)).clamp(lo, hi);
                if solved.camera_pitch_deg(params).abs() < 90.0 {
                    next = solved;
                } else {
                    unreachable = true;
                }
            }
            Err(ArmError::Unreachable(_)) => unreachable = true,
            Err(e) => return Err(e),
        }
    }

    Ok(Applied {
        state: next,
        unreachable,
    })
}
