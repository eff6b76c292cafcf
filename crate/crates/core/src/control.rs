//! Rule-based camera commands from the image-plane picture.
//!
//! Zoom compares the mean object radius with a desired ring at
//! `ring_center_frac` of the visible half-height, with a dead band of
//! `ring_halfwidth_frac` either side. Pan and tilt fire when the centroid
//! leaves a square of half-width `recenter_frac` of the visible half-height
//! around the view center. All comparisons are strict, so a value exactly on a
//! threshold produces no motion on that axis.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, CameraPose, GeometryError, ObjectEstimate, PlaneReport, StereoRig};
use crate::matching::ObjectLabel;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("empty object list")]
    EmptyObjectList,
    #[error("total object weight is zero")]
    ZeroTotalWeight,
    #[error("degenerate image plane: visible half-height {0} mm")]
    DegeneratePlane(f64),
    #[error("invalid control parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Zoom {
    In,
    Out,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Tilt {
    Up,
    Down,
    #[default]
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Pan {
    Left,
    Right,
    #[default]
    None,
}

macro_rules! axis_names {
    ($ty:ident, $axis:literal, $($var:ident => $name:literal),+) => {
        impl $ty {
            pub const ALL: [$ty; 3] = [$($ty::$var),+];
            pub fn as_str(self) -> &'static str {
                match self { $($ty::$var => $name),+ }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $ty {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($ty::$var),)+
                    _ => Err(format!("invalid {} value {:?}", $axis, s)),
                }
            }
        }
    };
}

axis_names!(Zoom, "zoom", In => "in", None => "none", Out => "out");
axis_names!(Tilt, "tilt", Up => "up", None => "none", Down => "down");
axis_names!(Pan, "pan", Left => "left", None => "none", Right => "right");

/// Direction-only camera command. `CameraCommand::default()` is the all-none
/// fixed point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct CameraCommand {
    pub zoom: Zoom,
    pub tilt: Tilt,
    pub pan: Pan,
}

impl CameraCommand {
    pub fn new(zoom: Zoom, tilt: Tilt, pan: Pan) -> Self {
        Self { zoom, tilt, pan }
    }

    pub fn is_none(&self) -> bool {
        *self == Self::default()
    }
}

impl fmt::Display for CameraCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "zoom={} tilt={} pan={}", self.zoom, self.tilt, self.pan)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControlParams {
    pub ring_center_frac: f64,
    pub ring_halfwidth_frac: f64,
    pub recenter_frac: f64,
    /// Per-label centroid weights; labels not listed weigh 1.
    pub weights: BTreeMap<ObjectLabel, f64>,
}

impl Default for ControlParams {
    fn default() -> Self {
        Self {
            ring_center_frac: 0.5,
            ring_halfwidth_frac: 0.1,
            recenter_frac: 0.3,
            weights: BTreeMap::new(),
        }
    }
}

impl ControlParams {
    pub fn weight(&self, label: ObjectLabel) -> f64 {
        self.weights.get(&label).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let bad = |m: String| Err(ControlError::InvalidParams(m));
        if !(self.ring_center_frac > 0.0 && self.ring_center_frac < 1.0) {
            return bad(format!("ring_center_frac {} not in (0, 1)", self.ring_center_frac));
        }
        if !(self.ring_halfwidth_frac >= 0.0 && self.ring_halfwidth_frac < self.ring_center_frac) {
            return bad(format!(
                "ring_halfwidth_frac {} not in [0, ring_center_frac)",
                self.ring_halfwidth_frac
            ));
        }
        if !(self.recenter_frac > 0.0 && self.recenter_frac < 1.0) {
            return bad(format!("recenter_frac {} not in (0, 1)", self.recenter_frac));
        }
        if let Some((l, w)) = self.weights.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return bad(format!("weight for {l} must be a non-negative number, got {w}"));
        }
        if !ObjectLabel::ALL.iter().any(|&l| self.weight(l) > 0.0) {
            return bad("at least one label weight must be positive".into());
        }
        Ok(())
    }
}

/// Weighted mean position.
///
/// Weights are rescaled by their maximum before summing, so equal weights
/// reproduce the unweighted mean bit for bit.
pub fn centroid(estimates: &[ObjectEstimate], params: &ControlParams) -> Result<Vec3, ControlError> {
    if estimates.is_empty() {
        return Err(ControlError::EmptyObjectList);
    }
    let raw: Vec<f64> = estimates.iter().map(|e| params.weight(e.label)).collect();
    let max = raw.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(ControlError::ZeroTotalWeight);
    }
    let mut sum = Vec3::zeros();
    let mut total = 0.0;
    for (e, w) in estimates.iter().zip(&raw) {
        let w = w / max;
        sum += w * e.position;
        total += w;
    }
    Ok(sum / total)
}

pub fn decide_zoom(mean_radius: f64, h_visible: f64, params: &ControlParams) -> Result<Zoom, ControlError> {
    if !(h_visible > 0.0) {
        return Err(ControlError::DegeneratePlane(h_visible));
    }
    let ratio = mean_radius / h_visible;
    Ok(if ratio > params.ring_center_frac + params.ring_halfwidth_frac {
        Zoom::Out
    } else if ratio < params.ring_center_frac - params.ring_halfwidth_frac {
        Zoom::In
    } else {
        Zoom::None
    })
}

pub fn decide_pan_tilt(
    centroid_uv: [f64; 2],
    h_visible: f64,
    params: &ControlParams,
) -> Result<(Tilt, Pan), ControlError> {
    if !(h_visible > 0.0) {
        return Err(ControlError::DegeneratePlane(h_visible));
    }
    let t = params.recenter_frac * h_visible;
    let [u, v] = centroid_uv;
    let tilt = if v > t {
        Tilt::Up
    } else if v < -t {
        Tilt::Down
    } else {
        Tilt::None
    };
    let pan = if u > t {
        Pan::Right
    } else if u < -t {
        Pan::Left
    } else {
        Pan::None
    };
    Ok((tilt, pan))
}

/// Centroid, projection and the three axis rules in one pass.
pub fn plan_command(
    estimates: &[ObjectEstimate],
    pose: &CameraPose,
    rig: &StereoRig,
    params: &ControlParams,
) -> Result<(CameraCommand, PlaneReport), ControlError> {
    let c = centroid(estimates, params)?;
    let report = geometry::project_about(estimates, &c, pose, rig)?;
    let zoom = decide_zoom(report.mean_radius_mm, report.h_visible_mm, params)?;
    let (tilt, pan) = decide_pan_tilt(report.centroid_uv, report.h_visible_mm, params)?;
    Ok((CameraCommand { zoom, tilt, pan }, report))
}
