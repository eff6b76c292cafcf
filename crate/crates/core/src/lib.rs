//! Autonomous stereo camera positioning.
//!
//! The pipeline runs left/right bounding-box detections through stereo
//! triangulation, projects the resulting 3D estimates onto an image plane
//! through their centroid, and turns that picture into a discrete
//! zoom/tilt/pan command for a three-servo camera arm with a linear actuator.
//!
//! - [`matching`]: detection records, bounding-box centers, left/right pairing.
//! - [`geometry`]: stereo rig, camera frame, triangulation, image-plane projection.
//! - [`control`]: centroid and dead-band rules producing a [`control::CameraCommand`].
//! - [`arm`]: forward/inverse kinematics, command application, serial line protocol.
//! - [`sim`]: pinhole renderer and closed-loop harness.
//! - [`eval`]: localization accuracy, RMS center error, majority vote, confusion matrices.
//! - [`records`]: line-delimited record files shared with external tools.
//!
//! Lengths are millimeters, angles at interfaces are degrees and pixel
//! coordinates are real-valued.

pub mod arm;
pub mod control;
pub mod eval;
pub mod geometry;
pub mod matching;
pub mod records;
pub mod sim;

pub use nalgebra::Vector3;

/// 3-vector in the arm frame: +x into the operating space, +y up, +z right.
pub type Vec3 = Vector3<f64>;
