//! Keypoint trace files: one JSON object per line.
//!
//! ```text
//! {"frame":0,"kps":[[-0.3,0.1],[0.2,0.4]],"phi":0.05}
//! {"frame":1,"kps":[[-0.29,0.1],[0.21,0.41]],"phi":0.07}
//! ```
//!
//! `phi` is present in the rotation modes, `shear` (`[[lambda, mu], ...]`) in
//! the shear mode and `jacobians` (`[[a, b, c, d], ...]`, row-major) in the
//! full-Jacobian mode. Blank lines and lines starting with `#` are ignored.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transforms::{KeypointFrame, Mat2, MotionParams, Point, Shear, TransformMode};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },

    #[error("trace is empty")]
    Empty,

    #[error("trace fields describe mode {found}, requested mode is {requested}")]
    ModeMismatch {
        found: TransformMode,
        requested: TransformMode,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub frame: u32,
    pub kps: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shear: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jacobians: Option<Vec<[f64; 4]>>,
}

impl TraceRecord {
    /// Mode implied by which fields are present, or `None` for an
    /// inconsistent combination.
    pub fn field_mode(&self) -> Option<TransformMode> {
        match (
            self.phi.is_some(),
            self.shear.is_some(),
            self.jacobians.is_some(),
        ) {
            (false, false, false) => Some(TransformMode::NoJacobian),
            (true, false, false) => Some(TransformMode::RotScale),
            (true, true, false) => Some(TransformMode::RotScaleShear),
            (false, false, true) => Some(TransformMode::FullJacobian),
            _ => None,
        }
    }

    pub fn from_motion(frame: u32, params: &MotionParams) -> Self {
        TraceRecord {
            frame,
            kps: params
                .keypoints()
                .points()
                .iter()
                .map(|p| [p.x, p.y])
                .collect(),
            phi: params.phi(),
            shear: params
                .shear()
                .map(|s| s.iter().map(|s| [s.lambda, s.mu]).collect()),
            jacobians: params
                .jacobians()
                .map(|j| j.iter().map(Mat2::entries).collect()),
        }
    }

    fn to_motion(&self, mode: TransformMode) -> Result<MotionParams, String> {
        let kps = KeypointFrame::new(self.kps.iter().map(|&[x, y]| Point::new(x, y)).collect())
            .map_err(|e| e.to_string())?;
        let shear = self
            .shear
            .as_ref()
            .map(|s| s.iter().map(|&[l, m]| Shear::new(l, m)).collect());
        let jacobians = self
            .jacobians
            .as_ref()
            .map(|j| {
                j.iter()
                    .map(|&e| Mat2::from_entries(e))
                    .collect::<Result<Vec<_>, _>>()
            })
            .transpose()
            .map_err(|e| e.to_string())?;
        MotionParams::new(mode, kps, self.phi, shear, jacobians).map_err(|e| e.to_string())
    }
}

/// Parses and validates a trace: frame indices strictly increase from 0 and
/// every record has the same keypoint count and field set.
pub fn parse_trace(text: &str) -> Result<Vec<TraceRecord>, TraceError> {
    let mut records: Vec<(usize, TraceRecord)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let rec: TraceRecord =
            serde_json::from_str(trimmed).map_err(|e| TraceError::Malformed {
                line: line_no,
                msg: e.to_string(),
            })?;
        let bad = |msg: String| TraceError::Malformed { line: line_no, msg };
        if rec.field_mode().is_none() {
            return Err(bad(
                "inconsistent field set (shear needs phi; jacobians exclude phi and shear)".into(),
            ));
        }
        match records.last() {
            None if rec.frame != 0 => {
                return Err(bad(format!(
                    "first frame index must be 0, got {}",
                    rec.frame
                )))
            }
            Some((_, prev)) => {
                if rec.frame <= prev.frame {
                    return Err(bad(format!(
                        "frame index {} does not increase (previous {})",
                        rec.frame, prev.frame
                    )));
                }
                if rec.kps.len() != prev.kps.len() {
                    return Err(bad(format!(
                        "record has {} keypoints, earlier records have {}",
                        rec.kps.len(),
                        prev.kps.len()
                    )));
                }
                if rec.field_mode() != prev.field_mode() {
                    return Err(bad("field set differs from earlier records".into()));
                }
            }
            None => {}
        }
        records.push((line_no, rec));
    }
    if records.is_empty() {
        return Err(TraceError::Empty);
    }
    // payload sanity (ranges, lengths) reported against the source line
    let mode = records[0].1.field_mode().expect("checked above");
    for (line, rec) in &records {
        rec.to_motion(mode)
            .map_err(|msg| TraceError::Malformed { line: *line, msg })?;
    }
    Ok(records.into_iter().map(|(_, r)| r).collect())
}

/// Converts parsed records to motion parameters for `mode`.
pub fn records_to_motion(
    records: &[TraceRecord],
    mode: TransformMode,
) -> Result<Vec<MotionParams>, TraceError> {
    let first = records.first().ok_or(TraceError::Empty)?;
    let found = first.field_mode().ok_or_else(|| TraceError::Malformed {
        line: 1,
        msg: "inconsistent field set".into(),
    })?;
    if found != mode {
        return Err(TraceError::ModeMismatch {
            found,
            requested: mode,
        });
    }
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.to_motion(mode)
                .map_err(|msg| TraceError::Malformed { line: i + 1, msg })
        })
        .collect()
}

pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
        out.push('\n');
    }
    out
}

/// Trace text for a sequence of frames numbered from 0.
pub fn motion_to_trace(frames: &[MotionParams]) -> String {
    let records: Vec<_> = frames
        .iter()
        .enumerate()
        .map(|(i, f)| TraceRecord::from_motion(i as u32, f))
        .collect();
    write_trace(&records)
}
