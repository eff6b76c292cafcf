//! Detection types and left/right pairing.
//!
//! Same-label detections are ordered by bounding-box center x in each eye and
//! paired by rank. Horizontal order is preserved between rectified views, so
//! the i-th leftmost red block on the left pairs with the i-th leftmost red
//! block on the right. Pairs violating the vertical tolerance or with
//! non-positive disparity are dropped, as is any surplus in either eye.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::StereoRig;

/// Default vertical tolerance between paired centers, in pixels.
pub const DEFAULT_PAIRING_TOLERANCE_PX: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatchError {
    #[error("detections from different frames: {0:?} and {1:?}")]
    MixedFrame(String, String),
    #[error("unknown object label {0:?}")]
    UnknownLabel(String),
    #[error("unknown eye {0:?} (expected left or right)")]
    UnknownEye(String),
    #[error("invalid bounding box ({x1}, {y1}, {x2}, {y2}): {reason}")]
    InvalidBox {
        x1: f64,
        y1: f64,
        x2: f64,
        y2: f64,
        reason: &'static str,
    },
    #[error("score {0} outside [0, 1]")]
    InvalidScore(f64),
    #[error("pairing tolerance must be non-negative, got {0}")]
    InvalidTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ObjectLabel {
    LeftGrasper,
    RightGrasper,
    RedBlock,
    GreenBlock,
}

impl ObjectLabel {
    pub const ALL: [ObjectLabel; 4] = [
        ObjectLabel::LeftGrasper,
        ObjectLabel::RightGrasper,
        ObjectLabel::RedBlock,
        ObjectLabel::GreenBlock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectLabel::LeftGrasper => "LeftGrasper",
            ObjectLabel::RightGrasper => "RightGrasper",
            ObjectLabel::RedBlock => "RedBlock",
            ObjectLabel::GreenBlock => "GreenBlock",
        }
    }
}

impl fmt::Display for ObjectLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ObjectLabel {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ObjectLabel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| MatchError::UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Eye {
    Left,
    Right,
}

impl Eye {
    pub fn as_str(self) -> &'static str {
        match self {
            Eye::Left => "left",
            Eye::Right => "right",
        }
    }
}

impl fmt::Display for Eye {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Eye {
    type Err = MatchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "left" => Ok(Eye::Left),
            "right" => Ok(Eye::Right),
            _ => Err(MatchError::UnknownEye(s.to_string())),
        }
    }
}

/// Axis-aligned box `(x1, y1)` upper-left to `(x2, y2)` lower-right, pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BBox {
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        Self { x1, y1, x2, y2 }
    }

    pub fn center(&self) -> [f64; 2] {
        [(self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0]
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.x1 <= p[0] && p[0] <= self.x2 && self.y1 <= p[1] && p[1] <= self.y2
    }

    /// Checks ordering and that the box lies inside a `width` x `height` image.
    pub fn validate(&self, width: f64, height: f64) -> Result<(), MatchError> {
        let err = |reason| MatchError::InvalidBox {
            x1: self.x1,
            y1: self.y1,
            x2: self.x2,
            y2: self.y2,
            reason,
        };
        if !(self.x1 < self.x2 && self.y1 < self.y2) {
            return Err(err("corners out of order"));
        }
        if !(self.x1 >= 0.0 && self.y1 >= 0.0 && self.x2 <= width && self.y2 <= height) {
            return Err(err("outside image bounds"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_id: String,
    pub eye: Eye,
    pub label: ObjectLabel,
    pub bbox: BBox,
    /// Detector confidence. Not used by pairing.
    pub score: f64,
}

impl Detection {
    pub fn validate(&self, rig: &StereoRig) -> Result<(), MatchError> {
        self.bbox
            .validate(f64::from(rig.image_width), f64::from(rig.image_height))?;
        if !(0.0..=1.0).contains(&self.score) {
            return Err(MatchError::InvalidScore(self.score));
        }
        Ok(())
    }
}

/// Midpoint of a detection's bounding box.
pub fn bbox_center(det: &Detection) -> [f64; 2] {
    det.bbox.center()
}

/// Matched left/right centers of one object.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairedObservation {
    pub label: ObjectLabel,
    pub left_center: [f64; 2],
    pub right_center: [f64; 2],
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Pairing {
    pub pairs: Vec<PairedObservation>,
    pub discarded: Vec<Detection>,
}

fn center_order(a: &Detection, b: &Detection) -> Ordering {
    let (ca, cb) = (a.bbox.center(), b.bbox.center());
    ca[0]
        .total_cmp(&cb[0])
        .then(ca[1].total_cmp(&cb[1]))
        .then(a.bbox.x1.total_cmp(&b.bbox.x1))
        .then(a.bbox.y1.total_cmp(&b.bbox.y1))
        .then(a.score.total_cmp(&b.score))
}

/// Pairs left and right detections of one frame.
///
/// Every input detection ends up either in exactly one pair or in
/// `discarded`. Discarded detections are returned grouped by label, left eye
/// first, each group in center-x order.
pub fn pair_detections(
    left: &[Detection],
    right: &[Detection],
    tol_px: f64,
) -> Result<Pairing, MatchError> {
    if !(tol_px >= 0.0) {
        return Err(MatchError::InvalidTolerance(tol_px));
    }
    if let Some(first) = left.iter().chain(right).next() {
        if let Some(other) = left.iter().chain(right).find(|d| d.frame_id != first.frame_id) {
            return Err(MatchError::MixedFrame(
                first.frame_id.clone(),
                other.frame_id.clone(),
            ));
        }
    }

    let mut groups: BTreeMap<ObjectLabel, (Vec<&Detection>, Vec<&Detection>)> = BTreeMap::new();
    for d in left {
        groups.entry(d.label).or_default().0.push(d);
    }
    for d in right {
        groups.entry(d.label).or_default().1.push(d);
    }

    let mut out = Pairing::default();
    for (label, (mut ls, mut rs)) in groups {
        ls.sort_by(|a, b| center_order(a, b));
        rs.sort_by(|a, b| center_order(a, b));
        let mut rejected_left = Vec::new();
        let mut rejected_right = Vec::new();
        for (l, r) in ls.iter().zip(&rs) {
            let (lc, rc) = (l.bbox.center(), r.bbox.center());
            if (lc[1] - rc[1]).abs() <= tol_px && lc[0] - rc[0] > 0.0 {
                out.pairs.push(PairedObservation {
                    label,
                    left_center: lc,
                    right_center: rc,
                });
            } else {
                rejected_left.push(*l);
                rejected_right.push(*r);
            }
        }
        let n = ls.len().min(rs.len());
        rejected_left.extend_from_slice(&ls[n..]);
        rejected_right.extend_from_slice(&rs[n..]);
        out.discarded
            .extend(rejected_left.into_iter().chain(rejected_right).cloned());
    }
    Ok(out)
}
