//! Line-delimited record files.
//!
//! Every format is UTF-8, one record per line, comma-separated fields in a
//! fixed order. Blank lines and lines starting with `#` are skipped, and
//! whitespace around each field is ignored. Fields may be double-quoted.
//! Errors carry the 1-based line number.
//!
//! | file | fields |
//! |------|--------|
//! | detections | `frame_id,eye,label,x1,y1,x2,y2,score` |
//! | ground truth | `frame_id,eye,label,x,y` |
//! | survey | `frame_id,respondent,zoom,tilt,pan` |
//! | proposed commands | `frame_id,zoom,tilt,pan` |
//! | scene | `label,x,y,z,halfsize` |
//!
//! Output formats are described on their writer functions.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use thiserror::Error;

use crate::control::CameraCommand;
use crate::eval::{AxisConfusion, GroundTruthObject, GroupAccuracy, SurveyResponse};
use crate::geometry::{ObjectEstimate, PlaneReport};
use crate::matching::{BBox, Detection};
use crate::sim::{LoopStep, SceneObject};
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RecordError {
    #[error("line {line}: expected {expected} fields, found {found}")]
    FieldCount {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, field {field} ({name}): {reason}")]
    Field {
        line: usize,
        field: usize,
        name: &'static str,
        reason: String,
    },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: duplicate frame {frame_id:?}")]
    DuplicateFrame { line: usize, frame_id: String },
}

impl RecordError {
    pub fn line(&self) -> usize {
        match self {
            Self::FieldCount { line, .. }
            | Self::Field { line, .. }
            | Self::Syntax { line, .. }
            | Self::DuplicateFrame { line, .. } => *line,
        }
    }
}

pub const DETECTION_FIELDS: [&str; 8] = ["frame_id", "eye", "label", "x1", "y1", "x2", "y2", "score"];
pub const GROUND_TRUTH_FIELDS: [&str; 5] = ["frame_id", "eye", "label", "x", "y"];
pub const SURVEY_FIELDS: [&str; 5] = ["frame_id", "respondent", "zoom", "tilt", "pan"];
pub const COMMAND_FIELDS: [&str; 4] = ["frame_id", "zoom", "tilt", "pan"];
pub const SCENE_FIELDS: [&str; 5] = ["label", "x", "y", "z", "halfsize"];
pub const ESTIMATE_FIELDS: [&str; 8] = ["frame_id", "label", "x", "y", "z", "depth", "horiz", "vert"];
pub const PLANE_FIELDS: [&str; 9] = [
    "frame_id", "zoom", "tilt", "pan", "d_cam", "h_visible", "centroid_u", "centroid_v", "mean_radius",
];
pub const TRAJECTORY_FIELDS: [&str; 15] = [
    "step", "theta_base", "theta_bottom", "theta_top", "extension", "pitch_offset", "zoom", "tilt", "pan",
    "d_cam", "h_visible", "centroid_u", "centroid_v", "mean_radius", "unreachable",
];

/// `# a,b,c` header line for a field list.
pub fn header(fields: &[&str]) -> String {
    format!("# {}\n", fields.join(","))
}

struct Row {
    line: usize,
    fields: csv::StringRecord,
    names: &'static [&'static str],
}

impl Row {
    fn str(&self, i: usize) -> Result<&str, RecordError> {
        let s = &self.fields[i];
        if s.is_empty() {
            return Err(self.err(i, "empty".into()));
        }
        Ok(s)
    }

    fn parse<T: FromStr>(&self, i: usize) -> Result<T, RecordError>
    where
        T::Err: Display,
    {
        self.str(i)?.parse().map_err(|e: T::Err| self.err(i, e.to_string()))
    }

    fn num(&self, i: usize) -> Result<f64, RecordError> {
        let v: f64 = self.parse(i)?;
        if !v.is_finite() {
            return Err(self.err(i, "not a finite number".into()));
        }
        Ok(v)
    }

    fn err(&self, i: usize, reason: String) -> RecordError {
        RecordError::Field {
            line: self.line,
            field: i + 1,
            name: self.names[i],
            reason,
        }
    }

    fn command(&self, first: usize) -> Result<CameraCommand, RecordError> {
        Ok(CameraCommand {
            zoom: self.parse(first)?,
            tilt: self.parse(first + 1)?,
            pan: self.parse(first + 2)?,
        })
    }
}

fn split_line(raw: &str) -> Result<csv::StringRecord, csv::Error> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(raw.as_bytes());
    let mut record = csv::StringRecord::new();
    reader.read_record(&mut record)?;
    Ok(record)
}

fn rows<'a>(
    text: &'a str,
    names: &'static [&'static str],
) -> impl Iterator<Item = Result<Row, RecordError>> + 'a {
    text.lines().enumerate().filter_map(move |(i, raw)| {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            return None;
        }
        let fields = match split_line(trimmed) {
            Ok(f) => f,
            Err(e) => {
                return Some(Err(RecordError::Syntax {
                    line,
                    reason: e.to_string(),
                }))
            }
        };
        if fields.len() != names.len() {
            return Some(Err(RecordError::FieldCount {
                line,
                expected: names.len(),
                found: fields.len(),
            }));
        }
        Some(Ok(Row { line, fields, names }))
    })
}

pub fn parse_detections(text: &str) -> Result<Vec<Detection>, RecordError> {
    rows(text, &DETECTION_FIELDS)
        .map(|r| {
            let r = r?;
            Ok(Detection {
                frame_id: r.str(0)?.to_string(),
                eye: r.parse(1)?,
                label: r.parse(2)?,
                bbox: BBox::new(r.num(3)?, r.num(4)?, r.num(5)?, r.num(6)?),
                score: r.num(7)?,
            })
        })
        .collect()
}

/// Detection record line. Numbers use the shortest representation that
/// parses back to the same value.
pub fn format_detection(d: &Detection) -> String {
    let b = &d.bbox;
    format!(
        "{},{},{},{},{},{},{},{}\n",
        d.frame_id, d.eye, d.label, b.x1, b.y1, b.x2, b.y2, d.score
    )
}

pub fn parse_ground_truth(text: &str) -> Result<Vec<GroundTruthObject>, RecordError> {
    rows(text, &GROUND_TRUTH_FIELDS)
        .map(|r| {
            let r = r?;
            Ok(GroundTruthObject {
                frame_id: r.str(0)?.to_string(),
                eye: r.parse(1)?,
                label: r.parse(2)?,
                center: [r.num(3)?, r.num(4)?],
            })
        })
        .collect()
}

pub fn parse_survey(text: &str) -> Result<Vec<SurveyResponse>, RecordError> {
    rows(text, &SURVEY_FIELDS)
        .map(|r| {
            let r = r?;
            Ok(SurveyResponse {
                frame_id: r.str(0)?.to_string(),
                respondent: r.str(1)?.to_string(),
                command: r.command(2)?,
            })
        })
        .collect()
}

pub fn parse_commands(text: &str) -> Result<BTreeMap<String, CameraCommand>, RecordError> {
    let mut out = BTreeMap::new();
    for r in rows(text, &COMMAND_FIELDS) {
        let r = r?;
        let frame = r.str(0)?.to_string();
        if out.contains_key(&frame) {
            return Err(RecordError::DuplicateFrame {
                line: r.line,
                frame_id: frame,
            });
        }
        out.insert(frame, r.command(1)?);
    }
    Ok(out)
}

pub fn format_command(frame_id: &str, cmd: &CameraCommand) -> String {
    format!("{frame_id},{},{},{}\n", cmd.zoom, cmd.tilt, cmd.pan)
}

pub fn parse_scene(text: &str) -> Result<Vec<SceneObject>, RecordError> {
    rows(text, &SCENE_FIELDS)
        .map(|r| {
            let r = r?;
            let halfsize = r.num(4)?;
            if halfsize <= 0.0 {
                return Err(r.err(4, "must be positive".into()));
            }
            Ok(SceneObject {
                label: r.parse(0)?,
                position: Vec3::new(r.num(1)?, r.num(2)?, r.num(3)?),
                bbox_halfsize_px: halfsize,
            })
        })
        .collect()
}

pub fn format_scene_object(o: &SceneObject) -> String {
    let p = o.position;
    format!("{},{},{},{},{}\n", o.label, p.x, p.y, p.z, o.bbox_halfsize_px)
}

/// `frame_id,label,x,y,z,depth,horiz,vert`, millimeters to 6 decimals.
pub fn format_estimate(frame_id: &str, e: &ObjectEstimate) -> String {
    let p = e.position;
    format!(
        "{frame_id},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        e.label, p.x, p.y, p.z, e.depth_mm, e.horiz_mm, e.vert_mm
    )
}

/// `frame_id,zoom,tilt,pan,d_cam,h_visible,centroid_u,centroid_v,mean_radius`.
pub fn format_plane_record(frame_id: &str, cmd: &CameraCommand, r: &PlaneReport) -> String {
    format!(
        "{frame_id},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
        cmd.zoom, cmd.tilt, cmd.pan, r.d_cam_mm, r.h_visible_mm, r.centroid_uv[0], r.centroid_uv[1], r.mean_radius_mm
    )
}

/// One trajectory line. `step` is 1-based; the state is the one the command
/// was planned from.
pub fn format_trajectory_step(step: usize, s: &LoopStep) -> String {
    let a = &s.state;
    let r = &s.report;
    format!(
        "{step},{:.6},{:.6},{:.6},{:.6},{:.6},{},{},{},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
        a.theta_base_deg,
        a.theta_bottom_deg,
        a.theta_top_deg,
        a.extension_mm,
        a.pitch_offset_deg,
        s.command.zoom,
        s.command.tilt,
        s.command.pan,
        r.d_cam_mm,
        r.h_visible_mm,
        r.centroid_uv[0],
        r.centroid_uv[1],
        r.mean_radius_mm,
        s.unreachable
    )
}

/// `accuracy,<group>,<correct>,<total>,<percent>`.
pub fn format_accuracy(row: &GroupAccuracy) -> String {
    format!("accuracy,{},{},{},{}\n", row.group, row.correct, row.total, row.percent_string())
}

/// `rms,<horizontal>,<vertical>,<matches>`.
pub fn format_rms(h: f64, v: f64, n: usize) -> String {
    format!("rms,{h:.6},{v:.6},{n}\n")
}

/// `confusion,<axis>,<desired>,<proposed>,<count>`, one line per cell.
pub fn format_confusion(m: &AxisConfusion) -> String {
    let mut s = String::new();
    for (i, want) in m.values.iter().enumerate() {
        for (j, got) in m.values.iter().enumerate() {
            s += &format!("confusion,{},{want},{got},{}\n", m.axis, m.counts[i][j]);
        }
    }
    s
}
