//! Stereo triangulation, camera frame construction and image-plane projection.
//!
//! The rig is an ideal rectified pair: the right camera sits at `-S/2` along
//! the horizontal axis of the camera frame and the left one at `+S/2`, both
//! looking along the normal `n`. Depth comes from disparity, the in-plane
//! offsets from the right image.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matching::{ObjectLabel, PairedObservation};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("zero or negative disparity (left x {left_x} <= right x {right_x})")]
    ZeroOrNegativeDisparity { left_x: f64, right_x: f64 },
    #[error("pitch {0} deg is at or beyond +/-90 deg, horizontal axis undefined")]
    GimbalDegenerate(f64),
    #[error("negative plane distance {0} mm")]
    NegativeDistance(f64),
    #[error("empty object list")]
    EmptyObjectList,
    #[error("degenerate image plane: camera-to-plane distance {0} mm is not positive")]
    DegeneratePlane(f64),
    #[error("invalid stereo rig: {0}")]
    InvalidRig(String),
}

/// Intrinsics of an ideal rectified stereo pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StereoRig {
    pub focal_px: f64,
    pub baseline_mm: f64,
    pub image_width: u32,
    pub image_height: u32,
    /// Half of the vertical field of view used for the visible plane height.
    pub half_fov_v_deg: f64,
}

impl Default for StereoRig {
    fn default() -> Self {
        Self {
            focal_px: 700.0,
            baseline_mm: 63.0,
            image_width: 1280,
            image_height: 720,
            half_fov_v_deg: 30.0,
        }
    }
}

impl StereoRig {
    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |m: &str| Err(GeometryError::InvalidRig(m.to_string()));
        if !(self.focal_px > 0.0 && self.focal_px.is_finite()) {
            return bad("focal_px must be positive");
        }
        if !(self.baseline_mm > 0.0 && self.baseline_mm.is_finite()) {
            return bad("baseline_mm must be positive");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image size must be positive");
        }
        if self.image_width % 2 != 0 || self.image_height % 2 != 0 {
            return bad("image width and height must be even");
        }
        if !(self.half_fov_v_deg > 0.0 && self.half_fov_v_deg < 90.0) {
            return bad("half_fov_v_deg must lie in (0, 90)");
        }
        Ok(())
    }

    pub fn cx(&self) -> f64 {
        f64::from(self.image_width) / 2.0
    }

    pub fn cy(&self) -> f64 {
        f64::from(self.image_height) / 2.0
    }
}

/// Camera position and orthonormal frame in arm coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub position: Vec3,
    /// Optical axis.
    pub normal: Vec3,
    /// Image-right.
    pub horizontal: Vec3,
    /// Image-up, `horizontal x normal`.
    pub vertical: Vec3,
}

impl CameraPose {
    /// Level pose looking along +x with image-right +z and image-up +y.
    pub fn level(position: Vec3) -> Self {
        Self {
            position,
            normal: Vec3::x(),
            horizontal: Vec3::z(),
            vertical: Vec3::y(),
        }
    }

    /// Largest deviation from orthonormality over norms and pairwise dots.
    pub fn orthonormality_error(&self) -> f64 {
        let (n, h, v) = (&self.normal, &self.horizontal, &self.vertical);
        [
            (n.norm() - 1.0).abs(),
            (h.norm() - 1.0).abs(),
            (v.norm() - 1.0).abs(),
            n.dot(h).abs(),
            n.dot(v).abs(),
            h.dot(v).abs(),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Triangulated object in arm coordinates with its camera-relative offsets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectEstimate {
    pub label: ObjectLabel,
    pub position: Vec3,
    pub depth_mm: f64,
    pub horiz_mm: f64,
    pub vert_mm: f64,
}

/// Objects projected onto the plane through their centroid, normal to the
/// optical axis. In-plane coordinates are relative to the point where the
/// optical axis pierces the plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlaneReport {
    pub d_cam_mm: f64,
    /// Visible half-height of the plane.
    pub h_visible_mm: f64,
    pub centroid_uv: [f64; 2],
    pub object_uv: Vec<(ObjectLabel, [f64; 2])>,
    pub mean_radius_mm: f64,
}

fn disparity(left_x: f64, right_x: f64) -> Result<f64, GeometryError> {
    let disp = left_x - right_x;
    // `!(disp > 0)` also rejects NaN
    if !(disp > 0.0) {
        return Err(GeometryError::ZeroOrNegativeDisparity { left_x, right_x });
    }
    Ok(disp)
}

/// Depth along the optical axis, `f * S / (left_x - right_x)`.
pub fn object_distance(left_x: f64, right_x: f64, rig: &StereoRig) -> Result<f64, GeometryError> {
    let disp = disparity(left_x, right_x)?;
    Ok(rig.focal_px * rig.baseline_mm / disp)
}

/// Offset along the horizontal unit vector from the rig center. The right
/// camera is `S/2` left of center, hence the `1/2` term.
pub fn horizontal_offset(left_x: f64, right_x: f64, rig: &StereoRig) -> Result<f64, GeometryError> {
    let disp = disparity(left_x, right_x)?;
    Ok(rig.baseline_mm * (0.5 + (right_x - rig.cx()) / disp))
}

/// Offset along the vertical unit vector; image rows grow downward.
pub fn vertical_offset(
    right_y: f64,
    left_x: f64,
    right_x: f64,
    rig: &StereoRig,
) -> Result<f64, GeometryError> {
    let disp = disparity(left_x, right_x)?;
    Ok(rig.baseline_mm * (rig.cy() - right_y) / disp)
}

pub fn triangulate(
    obs: &PairedObservation,
    pose: &CameraPose,
    rig: &StereoRig,
) -> Result<ObjectEstimate, GeometryError> {
    let [lx, _] = obs.left_center;
    let [rx, ry] = obs.right_center;
    let depth = object_distance(lx, rx, rig)?;
    let horiz = horizontal_offset(lx, rx, rig)?;
    let vert = vertical_offset(ry, lx, rx, rig)?;
    let position =
        pose.position + depth * pose.normal + horiz * pose.horizontal + vert * pose.vertical;
    Ok(ObjectEstimate {
        label: obs.label,
        position,
        depth_mm: depth,
        horiz_mm: horiz,
        vert_mm: vert,
    })
}

/// Builds a horizontal-roll camera frame from yaw about +y (toward +z) and
/// pitch above the horizontal plane.
pub fn build_pose(position: Vec3, yaw_deg: f64, pitch_deg: f64) -> Result<CameraPose, GeometryError> {
    if !(pitch_deg.abs() < 90.0) {
        return Err(GeometryError::GimbalDegenerate(pitch_deg));
    }
    let (sy, cy) = yaw_deg.to_radians().sin_cos();
    let (sp, cp) = pitch_deg.to_radians().sin_cos();
    let normal = Vec3::new(cp * cy, sp, cp * sy);
    let horizontal = Vec3::new(-sy, 0.0, cy);
    let vertical = horizontal.cross(&normal);
    Ok(CameraPose {
        position,
        normal,
        horizontal,
        vertical,
    })
}

/// Signed distance from the camera to the plane through `centroid` normal to
/// the optical axis.
pub fn plane_distance(pose: &CameraPose, centroid: &Vec3) -> f64 {
    pose.normal.dot(centroid) - pose.normal.dot(&pose.position)
}

pub fn visible_half_height(d_cam: f64, rig: &StereoRig) -> Result<f64, GeometryError> {
    if d_cam < 0.0 {
        return Err(GeometryError::NegativeDistance(d_cam));
    }
    Ok(d_cam * rig.half_fov_v_deg.to_radians().tan())
}

/// Projects estimates onto the plane through their plain mean.
pub fn project_to_plane(
    estimates: &[ObjectEstimate],
    pose: &CameraPose,
    rig: &StereoRig,
) -> Result<PlaneReport, GeometryError> {
    if estimates.is_empty() {
        return Err(GeometryError::EmptyObjectList);
    }
    let sum = estimates.iter().fold(Vec3::zeros(), |acc, e| acc + e.position);
    let centroid = sum / estimates.len() as f64;
    project_about(estimates, &centroid, pose, rig)
}

/// Projects estimates onto the plane through an arbitrary `centroid` (for
/// example a weighted one). The mean radius is the plain mean in-plane
/// distance from the centroid.
pub fn project_about(
    estimates: &[ObjectEstimate],
    centroid: &Vec3,
    pose: &CameraPose,
    rig: &StereoRig,
) -> Result<PlaneReport, GeometryError> {
    if estimates.is_empty() {
        return Err(GeometryError::EmptyObjectList);
    }
    let d_cam = plane_distance(pose, centroid);
    if !(d_cam > 0.0) {
        return Err(GeometryError::DegeneratePlane(d_cam));
    }
    let h_visible = visible_half_height(d_cam, rig)?;
    let origin = pose.position + d_cam * pose.normal;
    let to_uv = |p: &Vec3| {
        let rel = p - origin;
        [pose.horizontal.dot(&rel), pose.vertical.dot(&rel)]
    };
    let centroid_uv = to_uv(centroid);
    let object_uv: Vec<_> = estimates
        .iter()
        .map(|e| (e.label, to_uv(&e.position)))
        .collect();
    let mean_radius = object_uv
        .iter()
        .map(|(_, uv)| (uv[0] - centroid_uv[0]).hypot(uv[1] - centroid_uv[1]))
        .sum::<f64>()
        / object_uv.len() as f64;
    Ok(PlaneReport {
        d_cam_mm: d_cam,
        h_visible_mm: h_visible,
        centroid_uv,
        object_uv,
        mean_radius_mm: mean_radius,
    })
}
