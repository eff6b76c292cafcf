//! Pinhole renderer and closed-loop harness.
//!
//! [`pinhole_project`] is written straight from the camera model and serves
//! as the independent counterpart of [`crate::geometry::triangulate`]. The
//! loop runs forward kinematics, rendering, pairing, triangulation, planning
//! and command application until the planner emits the all-none command.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arm::{apply_command, forward_kinematics, ArmError, ArmParams, ArmState};
use crate::control::{plan_command, CameraCommand, ControlError, ControlParams, Zoom};
use crate::geometry::{triangulate, CameraPose, GeometryError, PlaneReport, StereoRig};
use crate::matching::{pair_detections, BBox, Detection, Eye, MatchError, ObjectLabel};
use crate::Vec3;

pub const DEFAULT_BBOX_HALFSIZE_PX: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("point is behind the camera (depth {0} mm)")]
    BehindCamera(f64),
    #[error("projection ({left_x:.2}, {y:.2}) / ({right_x:.2}, {y:.2}) falls outside the image")]
    OutOfView { left_x: f64, right_x: f64, y: f64 },
    #[error("no paired objects visible at step {step}")]
    NoObjectsVisible { step: usize },
    #[error("object at ({}, {}, {}) outside workspace bounds", .0.x, .0.y, .0.z)]
    OutsideWorkspace(Vec3),
    #[error("max_steps must be at least 1")]
    NoSteps,
    #[error("step {step}: {source}")]
    Arm { step: usize, source: ArmError },
    #[error("step {step}: {source}")]
    Control { step: usize, source: ControlError },
    #[error("step {step}: {source}")]
    Geometry { step: usize, source: GeometryError },
    #[error("step {step}: {source}")]
    Matching { step: usize, source: MatchError },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneObject {
    pub label: ObjectLabel,
    pub position: Vec3,
    pub bbox_halfsize_px: f64,
}

impl SceneObject {
    pub fn new(label: ObjectLabel, position: Vec3) -> Self {
        Self {
            label,
            position,
            bbox_halfsize_px: DEFAULT_BBOX_HALFSIZE_PX,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceBounds {
    pub x_mm: [f64; 2],
    pub y_mm: [f64; 2],
    pub z_mm: [f64; 2],
}

impl Default for WorkspaceBounds {
    fn default() -> Self {
        Self {
            x_mm: [100.0, 600.0],
            y_mm: [-100.0, 300.0],
            z_mm: [-300.0, 300.0],
        }
    }
}

impl WorkspaceBounds {
    pub fn contains(&self, p: &Vec3) -> bool {
        let inside = |v: f64, [lo, hi]: [f64; 2]| lo <= v && v <= hi;
        inside(p.x, self.x_mm) && inside(p.y, self.y_mm) && inside(p.z, self.z_mm)
    }

    pub fn check(&self, scene: &[SceneObject]) -> Result<(), SimError> {
        match scene.iter().find(|o| !self.contains(&o.position)) {
            Some(o) => Err(SimError::OutsideWorkspace(o.position)),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimParams {
    pub max_steps: usize,
    /// Half-width of the uniform pixel jitter added to each rendered box
    /// center; 0 disables it.
    pub jitter_px: f64,
    pub seed: u64,
    /// Strip the zoom axis from every planned command.
    pub disable_zoom: bool,
    pub workspace: WorkspaceBounds,
    pub initial_state: ArmState,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            max_steps: 200,
            jitter_px: 0.0,
            seed: 0,
            disable_zoom: false,
            workspace: WorkspaceBounds::default(),
            initial_state: ArmState::default(),
        }
    }
}

/// Everything the loop needs besides the scene.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoopConfig {
    pub rig: StereoRig,
    pub control: ControlParams,
    pub arm: ArmParams,
    pub pairing_tol_px: f64,
    pub sim: SimParams,
}

impl LoopConfig {
    pub fn with_defaults() -> Self {
        Self {
            pairing_tol_px: crate::matching::DEFAULT_PAIRING_TOLERANCE_PX,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopStep {
    pub state: ArmState,
    pub command: CameraCommand,
    pub report: PlaneReport,
    /// The zoom part of this step's command could not be reached.
    pub unreachable: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopResult {
    pub steps: usize,
    pub converged: bool,
    pub trajectory: Vec<LoopStep>,
    pub final_state: ArmState,
}

/// Camera-frame `(depth, horizontal, vertical)` of a point.
fn camera_coords(point: &Vec3, pose: &CameraPose) -> (f64, f64, f64) {
    let rel = point - pose.position;
    (pose.normal.dot(&rel), pose.horizontal.dot(&rel), pose.vertical.dot(&rel))
}

/// Left and right pixel coordinates without any bounds check.
pub fn project_unbounded(
    point: &Vec3,
    pose: &CameraPose,
    rig: &StereoRig,
) -> Result<([f64; 2], [f64; 2]), SimError> {
    let (d, h, v) = camera_coords(point, pose);
    if !(d > 0.0) {
        return Err(SimError::BehindCamera(d));
    }
    let f = rig.focal_px;
    let half_base = rig.baseline_mm / 2.0;
    let y = rig.cy() - f * v / d;
    let left_x = rig.cx() + f * (h + half_base) / d;
    let right_x = rig.cx() + f * (h - half_base) / d;
    Ok(([left_x, y], [right_x, y]))
}

fn in_image(p: [f64; 2], rig: &StereoRig) -> bool {
    (0.0..=f64::from(rig.image_width)).contains(&p[0])
        && (0.0..=f64::from(rig.image_height)).contains(&p[1])
}

/// Projects a point into both rectified images.
pub fn pinhole_project(
    point: &Vec3,
    pose: &CameraPose,
    rig: &StereoRig,
) -> Result<([f64; 2], [f64; 2]), SimError> {
    let (l, r) = project_unbounded(point, pose, rig)?;
    if !(in_image(l, rig) && in_image(r, rig)) {
        return Err(SimError::OutOfView {
            left_x: l[0],
            right_x: r[0],
            y: l[1],
        });
    }
    Ok((l, r))
}

/// Box of half-size `half` around `c`, clipped to the image. `None` when the
/// center is off-image or nothing is left after clipping.
fn boxed(c: [f64; 2], half: f64, rig: &StereoRig) -> Option<BBox> {
    if !in_image(c, rig) {
        return None;
    }
    let (w, h) = (f64::from(rig.image_width), f64::from(rig.image_height));
    let b = BBox::new(
        (c[0] - half).max(0.0),
        (c[1] - half).max(0.0),
        (c[0] + half).min(w),
        (c[1] + half).min(h),
    );
    (b.x1 < b.x2 && b.y1 < b.y2).then_some(b)
}

/// Uniform pixel jitter applied to rendered box centers.
#[derive(Debug, Clone)]
pub struct Jitter {
    rng: ChaCha8Rng,
    half_width: f64,
}

impl Jitter {
    pub fn new(half_width: f64, seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            half_width,
        }
    }

    fn offset(&mut self) -> [f64; 2] {
        if self.half_width > 0.0 {
            let w = self.half_width;
            [self.rng.random_range(-w..=w), self.rng.random_range(-w..=w)]
        } else {
            [0.0, 0.0]
        }
    }
}

/// Renders each object as an axis-aligned square detection per eye. Objects
/// behind the camera or with an off-image center in an eye are omitted from
/// that eye; boxes crossing the border are clipped.
pub fn render_scene(
    scene: &[SceneObject],
    pose: &CameraPose,
    rig: &StereoRig,
    frame_id: &str,
    mut jitter: Option<&mut Jitter>,
) -> (Vec<Detection>, Vec<Detection>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for obj in scene {
        let Ok((l, r)) = project_unbounded(&obj.position, pose, rig) else {
            continue;
        };
        for (eye, c, out) in [(Eye::Left, l, &mut left), (Eye::Right, r, &mut right)] {
            let c = match jitter.as_deref_mut() {
                Some(j) => {
                    let [dx, dy] = j.offset();
                    [c[0] + dx, c[1] + dy]
                }
                None => c,
            };
            if let Some(bbox) = boxed(c, obj.bbox_halfsize_px, rig) {
                out.push(Detection {
                    frame_id: frame_id.to_string(),
                    eye,
                    label: obj.label,
                    bbox,
                    score: 1.0,
                });
            }
        }
    }
    (left, right)
}

/// Runs the perception/control/arm loop on a static scene.
pub fn run_closed_loop(
    scene: &[SceneObject],
    initial: &ArmState,
    max_steps: usize,
    cfg: &LoopConfig,
) -> Result<LoopResult, SimError> {
    if max_steps == 0 {
        return Err(SimError::NoSteps);
    }
    let mut jitter = (cfg.sim.jitter_px > 0.0).then(|| Jitter::new(cfg.sim.jitter_px, cfg.sim.seed));
    let mut state = *initial;
    let mut trajectory = Vec::new();
    for step in 1..=max_steps {
        let pose = forward_kinematics(&state, &cfg.arm).map_err(|source| SimError::Arm { step, source })?;
        let frame = format!("step{step}");
        let (left, right) = render_scene(scene, &pose, &cfg.rig, &frame, jitter.as_mut());
        let pairing = pair_detections(&left, &right, cfg.pairing_tol_px)
            .map_err(|source| SimError::Matching { step, source })?;
        if pairing.pairs.is_empty() {
            return Err(SimError::NoObjectsVisible { step });
        }
        let estimates = pairing
            .pairs
            .iter()
            .map(|p| triangulate(p, &pose, &cfg.rig))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|source| SimError::Geometry { step, source })?;
        let (mut command, report) = plan_command(&estimates, &pose, &cfg.rig, &cfg.control)
            .map_err(|source| SimError::Control { step, source })?;
        if cfg.sim.disable_zoom {
            command.zoom = Zoom::None;
        }
        if command.is_none() {
            trajectory.push(LoopStep {
                state,
                command,
                report,
                unreachable: false,
            });
            return Ok(LoopResult {
                steps: step,
                converged: true,
                trajectory,
                final_state: state,
            });
        }
        let applied =
            apply_command(&state, &command, &cfg.arm).map_err(|source| SimError::Arm { step, source })?;
        trajectory.push(LoopStep {
            state,
            command,
            report,
            unreachable: applied.unreachable,
        });
        state = applied.state;
    }
    Ok(LoopResult {
        steps: max_steps,
        converged: false,
        trajectory,
        final_state: state,
    })
}

/// Seeded random cluster of 3 to 6 objects in front of `view`.
///
/// The cluster center sits 280 to 380 mm along the optical axis, near its
/// middle. Objects spread 70 to 120 mm across the view but only 30% of that
/// in depth, so the camera can frame them without the nearest ones leaving
/// the stereo overlap. Positions are clamped to `bounds`.
pub fn random_scene(seed: u64, view: &CameraPose, bounds: &WorkspaceBounds) -> Vec<SceneObject> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(3..=6);
    let depth = rng.random_range(280.0..=380.0);
    let ch = rng.random_range(-80.0..=80.0);
    let cv = rng.random_range(-60.0..=60.0);
    let spread = rng.random_range(70.0..=120.0);
    (0..n)
        .map(|_| {
            let d = depth + rng.random_range(-0.3 * spread..=0.3 * spread);
            let h = ch + rng.random_range(-spread..=spread);
            let v = cv + rng.random_range(-spread..=spread);
            let p = view.position + d * view.normal + h * view.horizontal + v * view.vertical;
            let position = Vec3::new(
                p.x.clamp(bounds.x_mm[0], bounds.x_mm[1]),
                p.y.clamp(bounds.y_mm[0], bounds.y_mm[1]),
                p.z.clamp(bounds.z_mm[0], bounds.z_mm[1]),
            );
            SceneObject::new(ObjectLabel::ALL[rng.random_range(0..4)], position)
        })
        .collect()
}
