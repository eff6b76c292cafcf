//! Perception and control evaluation.
//!
//! A ground-truth object is localized when its annotated center lies inside
//! a predicted box (borders included) and correct when that prediction also
//! carries a label of the same group. Predictions are assigned to ground
//! truth greedily by center distance, each used at most once.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::control::{CameraCommand, Pan, Tilt, Zoom};
use crate::matching::{Detection, Eye, ObjectLabel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("ground truth ({0}) and prediction ({1}) come from different frames or eyes")]
    FrameMismatch(String, String),
    #[error("no matched pairs")]
    EmptyMatchSet,
    #[error("frame sets differ: only proposed {only_proposed:?}, only desired {only_desired:?}")]
    FrameSetMismatch {
        only_proposed: Vec<String>,
        only_desired: Vec<String>,
    },
    #[error("respondent {respondent:?} answered frame {frame_id:?} more than once")]
    DuplicateResponse { frame_id: String, respondent: String },
    #[error("invalid label grouping: {0}")]
    InvalidGrouping(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthObject {
    pub frame_id: String,
    pub eye: Eye,
    pub label: ObjectLabel,
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyResponse {
    pub frame_id: String,
    pub respondent: String,
    pub command: CameraCommand,
}

pub fn localization_hit(gt: &GroundTruthObject, pred: &Detection) -> Result<bool, EvalError> {
    if gt.frame_id != pred.frame_id || gt.eye != pred.eye {
        return Err(EvalError::FrameMismatch(
            format!("{}/{}", gt.frame_id, gt.eye),
            format!("{}/{}", pred.frame_id, pred.eye),
        ));
    }
    Ok(pred.bbox.contains(gt.center))
}

/// Partition of the labels into named groups.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelGrouping {
    groups: Vec<(String, Vec<ObjectLabel>)>,
}

impl Default for LabelGrouping {
    /// Graspers and blocks, merging left/right and red/green.
    fn default() -> Self {
        Self {
            groups: vec![
                (
                    "Graspers".into(),
                    vec![ObjectLabel::LeftGrasper, ObjectLabel::RightGrasper],
                ),
                (
                    "Blocks".into(),
                    vec![ObjectLabel::RedBlock, ObjectLabel::GreenBlock],
                ),
            ],
        }
    }
}

impl LabelGrouping {
    pub fn new(groups: Vec<(String, Vec<ObjectLabel>)>) -> Result<Self, EvalError> {
        let mut seen = BTreeSet::new();
        for (name, labels) in &groups {
            if name == ALL_GROUP {
                return Err(EvalError::InvalidGrouping(format!("{ALL_GROUP:?} is reserved")));
            }
            for l in labels {
                if !seen.insert(*l) {
                    return Err(EvalError::InvalidGrouping(format!("{l} appears in two groups")));
                }
            }
        }
        if let Some(l) = ObjectLabel::ALL.iter().find(|l| !seen.contains(l)) {
            return Err(EvalError::InvalidGrouping(format!("{l} is in no group")));
        }
        Ok(Self { groups })
    }

    /// One group per label.
    pub fn per_label() -> Self {
        Self {
            groups: ObjectLabel::ALL
                .iter()
                .map(|l| (l.to_string(), vec![*l]))
                .collect(),
        }
    }

    pub fn group_of(&self, label: ObjectLabel) -> usize {
        self.groups
            .iter()
            .position(|(_, ls)| ls.contains(&label))
            .expect("grouping covers every label")
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.groups.iter().map(|(n, _)| n.as_str())
    }
}

pub const ALL_GROUP: &str = "All objects";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAccuracy {
    pub group: String,
    pub correct: usize,
    pub total: usize,
}

impl GroupAccuracy {
    /// `100 * correct / total` in hundredths of a percent, rounded half-up.
    pub fn percent_hundredths(&self) -> Option<u64> {
        if self.total == 0 {
            return None;
        }
        let (c, t) = (self.correct as u64, self.total as u64);
        Some((20_000 * c + t) / (2 * t))
    }

    pub fn percent_string(&self) -> String {
        match self.percent_hundredths() {
            Some(h) => format!("{}.{:02}", h / 100, h % 100),
            None => "n/a".into(),
        }
    }
}

/// Greedy one-to-one assignment of predictions to ground truth within each
/// frame and eye. A candidate pair needs a localization hit and, when
/// `grouping` is given, labels in the same group. Returns `(gt, pred)` index
/// pairs.
pub fn match_objects(
    preds: &[Detection],
    gts: &[GroundTruthObject],
    grouping: Option<&LabelGrouping>,
) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (gi, g) in gts.iter().enumerate() {
        for (pi, p) in preds.iter().enumerate() {
            if p.frame_id != g.frame_id || p.eye != g.eye || !p.bbox.contains(g.center) {
                continue;
            }
            if let Some(gr) = grouping {
                if gr.group_of(p.label) != gr.group_of(g.label) {
                    continue;
                }
            }
            let c = p.bbox.center();
            let dist2 = (c[0] - g.center[0]).powi(2) + (c[1] - g.center[1]).powi(2);
            candidates.push((dist2, gi, pi));
        }
    }
    candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut gt_used = vec![false; gts.len()];
    let mut pred_used = vec![false; preds.len()];
    let mut out = Vec::new();
    for (_, gi, pi) in candidates {
        if !gt_used[gi] && !pred_used[pi] {
            gt_used[gi] = true;
            pred_used[pi] = true;
            out.push((gi, pi));
        }
    }
    out.sort_unstable();
    out
}

/// Per-group accuracy followed by the overall row.
pub fn accuracy_table(
    preds: &[Detection],
    gts: &[GroundTruthObject],
    grouping: &LabelGrouping,
) -> Vec<GroupAccuracy> {
    let mut rows: Vec<GroupAccuracy> = grouping
        .names()
        .map(|n| GroupAccuracy {
            group: n.to_string(),
            correct: 0,
            total: 0,
        })
        .collect();
    for g in gts {
        rows[grouping.group_of(g.label)].total += 1;
    }
    for (gi, _) in match_objects(preds, gts, Some(grouping)) {
        rows[grouping.group_of(gts[gi].label)].correct += 1;
    }
    let all = GroupAccuracy {
        group: ALL_GROUP.into(),
        correct: rows.iter().map(|r| r.correct).sum(),
        total: rows.iter().map(|r| r.total).sum(),
    };
    rows.push(all);
    rows
}

pub fn format_accuracy_table(rows: &[GroupAccuracy]) -> String {
    let mut s = format!("{:<14}{:>10}{:>8}{:>15}\n", "Class", "Correct", "Total", "Accuracy (%)");
    for r in rows {
        s += &format!(
            "{:<14}{:>10}{:>8}{:>15}\n",
            r.group,
            r.correct,
            r.total,
            r.percent_string()
        );
    }
    s
}

/// Root-mean-square horizontal and vertical difference between predicted and
/// ground-truth centers, given as `(predicted, truth)` pairs.
pub fn rms_center_error(pairs: &[([f64; 2], [f64; 2])]) -> Result<(f64, f64), EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyMatchSet);
    }
    let n = pairs.len() as f64;
    let (sx, sy) = pairs.iter().fold((0.0, 0.0), |(sx, sy), (p, t)| {
        (sx + (p[0] - t[0]).powi(2), sy + (p[1] - t[1]).powi(2))
    });
    Ok(((sx / n).sqrt(), (sy / n).sqrt()))
}

fn plurality<T: Copy + Ord + Default>(votes: impl Iterator<Item = T>) -> T {
    let mut counts: BTreeMap<T, usize> = BTreeMap::new();
    for v in votes {
        *counts.entry(v).or_default() += 1;
    }
    let Some(&best) = counts.values().max() else {
        return T::default();
    };
    let mut leaders = counts.iter().filter(|(_, &c)| c == best);
    match (leaders.next(), leaders.next()) {
        (Some((&v, _)), None) => v,
        _ => T::default(),
    }
}

/// Per-axis plurality; a tie for first place on an axis resolves to none.
pub fn majority_vote(responses: &[CameraCommand]) -> CameraCommand {
    CameraCommand {
        zoom: plurality(responses.iter().map(|c| c.zoom)),
        tilt: plurality(responses.iter().map(|c| c.tilt)),
        pan: plurality(responses.iter().map(|c| c.pan)),
    }
}

/// Majority-vote desired command per frame.
pub fn desired_commands(
    responses: &[SurveyResponse],
) -> Result<BTreeMap<String, CameraCommand>, EvalError> {
    let mut by_frame: BTreeMap<&str, BTreeMap<&str, CameraCommand>> = BTreeMap::new();
    for r in responses {
        let frame = by_frame.entry(&r.frame_id).or_default();
        if frame.insert(&r.respondent, r.command).is_some() {
            return Err(EvalError::DuplicateResponse {
                frame_id: r.frame_id.clone(),
                respondent: r.respondent.clone(),
            });
        }
    }
    Ok(by_frame
        .into_iter()
        .map(|(f, rs)| (f.to_string(), majority_vote(&rs.into_values().collect::<Vec<_>>())))
        .collect())
}

/// Counts indexed `[desired][proposed]` over one axis' three values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AxisConfusion {
    pub axis: &'static str,
    pub values: [&'static str; 3],
    pub counts: [[usize; 3]; 3],
}

impl AxisConfusion {
    fn new(axis: &'static str, values: [&'static str; 3]) -> Self {
        Self {
            axis,
            values,
            counts: [[0; 3]; 3],
        }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, desired: usize) -> usize {
        self.counts[desired].iter().sum()
    }
}

impl fmt::Display for AxisConfusion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} (rows desired, columns proposed)", self.axis)?;
        write!(f, "{:>8}", "")?;
        for v in self.values {
            write!(f, "{v:>8}")?;
        }
        writeln!(f)?;
        for (v, row) in self.values.iter().zip(&self.counts) {
            write!(f, "{v:>8}")?;
            for c in row {
                write!(f, "{c:>8}")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Confusion {
    pub zoom: AxisConfusion,
    pub tilt: AxisConfusion,
    pub pan: AxisConfusion,
}

fn zoom_index(z: Zoom) -> usize {
    Zoom::ALL.iter().position(|&v| v == z).unwrap()
}

fn tilt_index(t: Tilt) -> usize {
    Tilt::ALL.iter().position(|&v| v == t).unwrap()
}

fn pan_index(p: Pan) -> usize {
    Pan::ALL.iter().position(|&v| v == p).unwrap()
}

pub fn confusion_matrices(
    proposed: &BTreeMap<String, CameraCommand>,
    desired: &BTreeMap<String, CameraCommand>,
) -> Result<Confusion, EvalError> {
    let only_proposed: Vec<_> = proposed.keys().filter(|k| !desired.contains_key(*k)).cloned().collect();
    let only_desired: Vec<_> = desired.keys().filter(|k| !proposed.contains_key(*k)).cloned().collect();
    if !only_proposed.is_empty() || !only_desired.is_empty() {
        return Err(EvalError::FrameSetMismatch {
            only_proposed,
            only_desired,
        });
    }
    let names = |all: [&'static str; 3]| all;
    let mut c = Confusion {
        zoom: AxisConfusion::new("zoom", names(Zoom::ALL.map(Zoom::as_str))),
        tilt: AxisConfusion::new("tilt", names(Tilt::ALL.map(Tilt::as_str))),
        pan: AxisConfusion::new("pan", names(Pan::ALL.map(Pan::as_str))),
    };
    for (frame, want) in desired {
        let got = proposed[frame];
        c.zoom.counts[zoom_index(want.zoom)][zoom_index(got.zoom)] += 1;
        c.tilt.counts[tilt_index(want.tilt)][tilt_index(got.tilt)] += 1;
        c.pan.counts[pan_index(want.pan)][pan_index(got.pan)] += 1;
    }
    Ok(c)
}
