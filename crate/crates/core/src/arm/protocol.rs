//! ASCII line protocol between the arm controller and the host.
//!
//! Reports, one per applied command:
//!
//! ```text
//! POS,<theta_base>,<theta_bottom>,<theta_top>,<extension>,<cam_x>,<cam_y>,<cam_z>\n
//! ```
//!
//! every number with exactly two decimals (`-?D+.DD`, no leading zeros, never
//! `-0.00`). Commands:
//!
//! ```text
//! MOV <zoom> <tilt> <pan>\n
//! ```
//!
//! with tokens `+` (in / up / right), `-` (out / down / left) or `0` (none),
//! separated by single spaces. The trailing newline is optional when parsing.

use std::fmt::Write as _;

use thiserror::Error;

use crate::arm::{camera_position, ArmError, ArmParams, ArmState};
use crate::control::{CameraCommand, Pan, Tilt, Zoom};
use crate::geometry::CameraPose;

pub const BAUD_RATE: u32 = 9600;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed line at byte {offset} (token {token}): {reason}")]
pub struct MalformedLine {
    pub offset: usize,
    pub token: usize,
    pub reason: &'static str,
}

/// Decoded `POS` line. Values are quantized to two decimals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmReport {
    pub theta_base_deg: f64,
    pub theta_bottom_deg: f64,
    pub theta_top_deg: f64,
    pub extension_mm: f64,
    pub camera_mm: [f64; 3],
}

impl ArmReport {
    pub fn new(state: &ArmState, pose: &CameraPose) -> Self {
        Self {
            theta_base_deg: state.theta_base_deg,
            theta_bottom_deg: state.theta_bottom_deg,
            theta_top_deg: state.theta_top_deg,
            extension_mm: state.extension_mm,
            camera_mm: [pose.position.x, pose.position.y, pose.position.z],
        }
    }

    /// Report for a state whose camera may point straight up or down.
    pub fn from_state(state: &ArmState, params: &ArmParams) -> Result<Self, ArmError> {
        let p = camera_position(state, params)?;
        Ok(Self {
            theta_base_deg: state.theta_base_deg,
            theta_bottom_deg: state.theta_bottom_deg,
            theta_top_deg: state.theta_top_deg,
            extension_mm: state.extension_mm,
            camera_mm: [p.x, p.y, p.z],
        })
    }

    fn fields(&self) -> [f64; 7] {
        let [x, y, z] = self.camera_mm;
        [
            self.theta_base_deg,
            self.theta_bottom_deg,
            self.theta_top_deg,
            self.extension_mm,
            x,
            y,
            z,
        ]
    }

    pub fn encode(&self) -> String {
        let mut line = String::from("POS");
        for v in self.fields() {
            line.push(',');
            push_fixed2(&mut line, v);
        }
        line.push('\n');
        line
    }
}

fn push_fixed2(out: &mut String, v: f64) {
    let start = out.len();
    write!(out, "{v:.2}").unwrap();
    if &out[start..] == "-0.00" {
        out.replace_range(start.., "0.00");
    }
}

pub fn encode_report(state: &ArmState, pose: &CameraPose) -> String {
    ArmReport::new(state, pose).encode()
}

/// Splits on single spaces or commas, returning `(byte offset, token)`.
fn tokens(body: &str, sep: u8) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, b) in body.bytes().enumerate() {
        if b == sep {
            out.push((start, &body[start..i]));
            start = i + 1;
        }
    }
    out.push((start, &body[start..]));
    out
}

fn strip_newline(line: &str) -> &str {
    line.strip_suffix('\n').unwrap_or(line)
}

fn parse_fixed2(tok: &str) -> Option<f64> {
    let b = tok.as_bytes();
    let digits = b.strip_prefix(b"-").unwrap_or(b);
    let dot = digits.iter().position(|&c| c == b'.')?;
    let (int, frac) = (&digits[..dot], &digits[dot + 1..]);
    let ok = !int.is_empty()
        && int.iter().all(u8::is_ascii_digit)
        && (int.len() == 1 || int[0] != b'0')
        && frac.len() == 2
        && frac.iter().all(u8::is_ascii_digit);
    if !ok || tok == "-0.00" {
        return None;
    }
    tok.parse().ok()
}

pub fn parse_report(line: &str) -> Result<ArmReport, MalformedLine> {
    let body = strip_newline(line);
    let toks = tokens(body, b',');
    let err = |i: usize, reason| MalformedLine {
        offset: toks.get(i).map_or(body.len(), |t| t.0),
        token: i,
        reason,
    };
    if toks[0].1 != "POS" {
        return Err(err(0, "expected POS"));
    }
    let mut v = [0.0; 7];
    for (i, (_, tok)) in toks.iter().enumerate().skip(1).take(7) {
        v[i - 1] = parse_fixed2(tok).ok_or_else(|| err(i, "expected fixed two-decimal number"))?;
    }
    if toks.len() != 8 {
        return Err(err(toks.len().min(8), "expected 7 numeric fields"));
    }
    Ok(ArmReport {
        theta_base_deg: v[0],
        theta_bottom_deg: v[1],
        theta_top_deg: v[2],
        extension_mm: v[3],
        camera_mm: [v[4], v[5], v[6]],
    })
}

pub fn encode_command(cmd: &CameraCommand) -> String {
    let z = match cmd.zoom {
        Zoom::In => '+',
        Zoom::Out => '-',
        Zoom::None => '0',
    };
    let t = match cmd.tilt {
        Tilt::Up => '+',
        Tilt::Down => '-',
        Tilt::None => '0',
    };
    let p = match cmd.pan {
        Pan::Right => '+',
        Pan::Left => '-',
        Pan::None => '0',
    };
    format!("MOV {z} {t} {p}\n")
}

pub fn parse_command(line: &str) -> Result<CameraCommand, MalformedLine> {
    let body = strip_newline(line);
    let toks = tokens(body, b' ');
    let err = |i: usize, reason| MalformedLine {
        offset: toks.get(i).map_or(body.len(), |t| t.0),
        token: i,
        reason,
    };
    if toks[0].1 != "MOV" {
        return Err(err(0, "expected MOV"));
    }
    let mut dirs = [0i8; 3];
    for (i, (_, tok)) in toks.iter().enumerate().skip(1).take(3) {
        dirs[i - 1] = match *tok {
            "+" => 1,
            "-" => -1,
            "0" => 0,
            _ => return Err(err(i, "expected +, - or 0")),
        };
    }
    if toks.len() != 4 {
        return Err(err(toks.len().min(4), "expected 3 direction tokens"));
    }
    let [z, t, p] = dirs;
    Ok(CameraCommand {
        zoom: [Zoom::Out, Zoom::None, Zoom::In][(z + 1) as usize],
        tilt: [Tilt::Down, Tilt::None, Tilt::Up][(t + 1) as usize],
        pan: [Pan::Left, Pan::None, Pan::Right][(p + 1) as usize],
    })
}

/// Transmission time of `bytes` at 8N1 framing (10 bits per byte).
pub fn line_duration(bytes: usize, baud: u32) -> std::time::Duration {
    std::time::Duration::from_secs_f64(bytes as f64 * 10.0 / f64::from(baud))
}
