//! MOT CSV files, appearance sidecars, the zone log, configuration and
//! synthetic sequences.
//!
//! MOT rows are `frame,id,left,top,width,height,conf,x,y,z` with `id = -1`
//! for detections. The world coordinates may be omitted and then read as
//! `-1`. Sidecar rows are `frame,det_index,bin_0,...,bin_{3B-1}` where
//! `det_index` is the position of the detection among the rows of its frame
//! in the detection file. A ground-truth sidecar has the same layout with the
//! target id in the second column.

pub mod config;
pub mod model;
pub mod synth;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{Annotation, BBox, Detection, Histogram, ModelError, SceneBounds, Sequence};
use crate::track::{FrameReport, TrackOutput};

pub use config::Config;
pub use model::ModelFile;
pub use synth::{synth_sequence, Crossing, SynthSpec, Synthetic};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },
    #[error("file has no data rows")]
    EmptyFile,
    #[error("line {line}: expected {expected} values, found {got}")]
    DimensionMismatch { line: usize, expected: usize, got: usize },
    #[error("sidecar row for frame {frame}, detection {index} has no matching detection")]
    UnknownDetection { frame: u64, index: usize },
    #[error("sidecar row for frame {frame}, target {id} has no matching annotation")]
    UnknownTarget { frame: u64, id: u64 },
    #[error("frame {frame}: ground-truth id {id} is negative")]
    NegativeId { frame: u64, id: i64 },
    #[error("frame {frame}: {source}")]
    Invalid { frame: u64, source: ModelError },
    #[error("model file version {found} is not supported (expected {expected})")]
    IncompatibleModel { found: String, expected: u32 },
}

impl IoError {
    /// True for malformed content as opposed to an unreadable file.
    pub fn is_parse(&self) -> bool {
        !matches!(self, IoError::Io { .. })
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::Io { path: path.to_owned(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|source| IoError::Io { path: path.to_owned(), source })
}

/// One line of a MOT file.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRow {
    pub frame: u64,
    pub id: i64,
    pub bbox: BBox,
    pub confidence: f64,
    pub world: [f64; 3],
}

impl MotRow {
    pub fn detection(&self, bounds: &SceneBounds) -> Result<Detection, IoError> {
        Detection::from_bbox(self.frame, self.bbox, self.confidence, bounds).map_err(|source| IoError::Invalid { frame: self.frame, source })
    }
}

/// Data rows of a comma-separated file: `(line number, trimmed fields)`.
fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, l)| (n, l.split(',').map(str::trim).collect()))
}

fn parse_f64(field: &str, line: usize, column: usize) -> Result<f64, IoError> {
    let v: f64 = field.parse().map_err(|_| IoError::Parse {
        line,
        column,
        reason: format!("`{field}` is not a number"),
    })?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(IoError::Parse { line, column, reason: format!("`{field}` is not finite") })
    }
}

fn parse_int(field: &str, line: usize, column: usize) -> Result<i64, IoError> {
    if let Ok(v) = field.parse::<i64>() {
        return Ok(v);
    }
    let v = parse_f64(field, line, column)?;
    if v.fract() == 0.0 && v.abs() < 9.0e15 {
        Ok(v as i64)
    } else {
        Err(IoError::Parse { line, column, reason: format!("`{field}` is not an integer") })
    }
}

/// Parses MOT rows and sorts them by frame, keeping file order within a frame.
pub fn parse_mot(text: &str) -> Result<Vec<MotRow>, IoError> {
    let mut rows = Vec::new();
    for (line, fields) in data_rows(text) {
        if !(7..=10).contains(&fields.len()) {
            return Err(IoError::DimensionMismatch { line, expected: 10, got: fields.len() });
        }
        let frame = parse_int(fields[0], line, 1)?;
        if frame < 0 {
            return Err(IoError::Parse { line, column: 1, reason: "negative frame".into() });
        }
        let id = parse_int(fields[1], line, 2)?;
        let mut v = [0.0; 5];
        for (k, slot) in v.iter_mut().enumerate() {
            *slot = parse_f64(fields[k + 2], line, k + 3)?;
        }
        for (column, size) in [(5, v[2]), (6, v[3])] {
            if size <= 0.0 {
                return Err(IoError::Parse { line, column, reason: "box size must be positive".into() });
            }
        }
        let mut world = [-1.0; 3];
        for (k, slot) in world.iter_mut().enumerate().take(fields.len() - 7) {
            *slot = parse_f64(fields[k + 7], line, k + 8)?;
        }
        rows.push(MotRow {
            frame: frame as u64,
            id,
            bbox: BBox::new(v[0], v[1], v[2], v[3]),
            confidence: v[4],
            world,
        });
    }
    if rows.is_empty() {
        return Err(IoError::EmptyFile);
    }
    rows.sort_by_key(|r| r.frame);
    Ok(rows)
}

pub fn read_mot(path: &Path) -> Result<Vec<MotRow>, IoError> {
    parse_mot(&read_text(path)?)
}

pub fn format_mot(rows: &[MotRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let b = &r.bbox;
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame, r.id, b.left, b.top, b.width, b.height, r.confidence, r.world[0], r.world[1], r.world[2]
        )
        .unwrap();
    }
    s
}

pub fn write_mot(path: &Path, rows: &[MotRow]) -> Result<(), IoError> {
    write_text(path, &format_mot(rows))
}

/// Scene extent from the data: the origin to the farthest box corner.
pub fn infer_bounds(rows: &[MotRow]) -> SceneBounds {
    let x_max = rows.iter().map(|r| r.bbox.left + r.bbox.width).fold(0.0, f64::max);
    let y_max = rows.iter().map(|r| r.bbox.top + r.bbox.height).fold(0.0, f64::max);
    SceneBounds::new(0.0, 0.0, x_max, y_max).unwrap_or_default()
}

/// Detections per frame, in file order within each frame.
pub fn detections_by_frame(rows: &[MotRow], bounds: &SceneBounds) -> Result<BTreeMap<u64, Vec<Detection>>, IoError> {
    let mut frames: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for r in rows {
        frames.entry(r.frame).or_default().push(r.detection(bounds)?);
    }
    Ok(frames)
}

/// Ground-truth sequence. Rows with a negative id are rejected.
pub fn sequence_from_rows(rows: &[MotRow], bounds: SceneBounds) -> Result<Sequence, IoError> {
    let mut annotations = Vec::with_capacity(rows.len());
    for r in rows {
        if r.id < 0 {
            return Err(IoError::NegativeId { frame: r.frame, id: r.id });
        }
        annotations.push(Annotation {
            frame: r.frame,
            id: r.id as u64,
            bbox: r.bbox,
            confidence: r.confidence,
            appearance: None,
        });
    }
    Ok(Sequence::new(bounds, annotations))
}

pub fn sequence_rows(seq: &Sequence) -> Vec<MotRow> {
    seq.annotations
        .iter()
        .map(|a| MotRow {
            frame: a.frame,
            id: a.id as i64,
            bbox: a.bbox,
            confidence: a.confidence,
            world: [-1.0; 3],
        })
        .collect()
}

pub fn detection_rows(frames: &BTreeMap<u64, Vec<Detection>>) -> Vec<MotRow> {
    frames
        .values()
        .flatten()
        .map(|d| MotRow {
            frame: d.frame,
            id: -1,
            bbox: d.bbox,
            confidence: d.confidence,
            world: [-1.0; 3],
        })
        .collect()
}

pub fn track_rows(outputs: &[TrackOutput]) -> Vec<MotRow> {
    let mut rows: Vec<MotRow> = outputs
        .iter()
        .map(|o| MotRow {
            frame: o.frame,
            id: o.id as i64,
            bbox: o.bbox,
            confidence: 1.0,
            world: [-1.0; 3],
        })
        .collect();
    rows.sort_by_key(|r| (r.frame, r.id));
    rows
}

/// Appearance histograms keyed by `(frame, detection index)`.
pub type Sidecar = BTreeMap<(u64, usize), Histogram>;

/// Sidecar path next to a detection file: `dets.txt` → `dets_appearance.csv`.
pub fn sidecar_path(detections: &Path) -> PathBuf {
    let stem = detections.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    detections.with_file_name(format!("{stem}_appearance.csv"))
}

/// Parses a sidecar. `bins` is the per-channel bin count; `None` infers it
/// from the first row.
pub fn parse_sidecar(text: &str, bins: Option<usize>) -> Result<Sidecar, IoError> {
    let mut out = Sidecar::new();
    let mut per_channel = bins;
    for (line, fields) in data_rows(text) {
        let b = match per_channel {
            Some(b) => b,
            None => {
                let n = fields.len().saturating_sub(2);
                if n == 0 || n % Histogram::CHANNELS != 0 {
                    return Err(IoError::DimensionMismatch {
                        line,
                        expected: 2 + Histogram::CHANNELS * (n / Histogram::CHANNELS).max(1),
                        got: fields.len(),
                    });
                }
                *per_channel.insert(n / Histogram::CHANNELS)
            }
        };
        let expected = 2 + Histogram::CHANNELS * b;
        if fields.len() != expected {
            return Err(IoError::DimensionMismatch { line, expected, got: fields.len() });
        }
        let frame = parse_int(fields[0], line, 1)?;
        let index = parse_int(fields[1], line, 2)?;
        if frame < 0 || index < 0 {
            let column = if frame < 0 { 1 } else { 2 };
            return Err(IoError::Parse { line, column, reason: "negative key".into() });
        }
        let raw = fields[2..].iter().enumerate().map(|(k, f)| parse_f64(f, line, k + 3)).collect::<Result<Vec<f64>, _>>()?;
        if let Some(k) = raw.iter().position(|&v| v < 0.0) {
            return Err(IoError::Parse { line, column: k + 3, reason: "negative bin value".into() });
        }
        let h = Histogram::new(&raw, b).map_err(|e| IoError::Parse { line, column: 3, reason: e.to_string() })?;
        if out.insert((frame as u64, index as usize), h).is_some() {
            return Err(IoError::Parse { line, column: 1, reason: format!("duplicate row for frame {frame}, detection {index}") });
        }
    }
    if out.is_empty() {
        return Err(IoError::EmptyFile);
    }
    Ok(out)
}

pub fn read_appearance_sidecar(path: &Path, bins: Option<usize>) -> Result<Sidecar, IoError> {
    parse_sidecar(&read_text(path)?, bins)
}

pub fn format_sidecar(frames: &BTreeMap<u64, Vec<Detection>>) -> String {
    let mut s = String::new();
    for (frame, dets) in frames {
        for (i, d) in dets.iter().enumerate() {
            if let Some(h) = &d.appearance {
                write!(s, "{frame},{i}").unwrap();
                for v in h.bins() {
                    write!(s, ",{v}").unwrap();
                }
                s.push('\n');
            }
        }
    }
    s
}

pub fn attach_appearance(frames: &mut BTreeMap<u64, Vec<Detection>>, sidecar: &Sidecar) -> Result<(), IoError> {
    for (&(frame, index), h) in sidecar {
        let d = frames.get_mut(&frame).and_then(|v| v.get_mut(index)).ok_or(IoError::UnknownDetection { frame, index })?;
        d.appearance = Some(h.clone());
    }
    Ok(())
}

/// Ground-truth sidecar, keyed by frame and target id.
pub fn format_gt_sidecar(seq: &Sequence) -> String {
    let mut s = String::new();
    for a in &seq.annotations {
        if let Some(h) = &a.appearance {
            write!(s, "{},{}", a.frame, a.id).unwrap();
            for v in h.bins() {
                write!(s, ",{v}").unwrap();
            }
            s.push('\n');
        }
    }
    s
}

pub fn attach_gt_appearance(seq: &mut Sequence, sidecar: &Sidecar) -> Result<(), IoError> {
    let index: BTreeMap<(u64, u64), usize> = seq.annotations.iter().enumerate().map(|(i, a)| ((a.frame, a.id), i)).collect();
    for (&(frame, id), h) in sidecar {
        let i = *index.get(&(frame, id as u64)).ok_or(IoError::UnknownTarget { frame, id: id as u64 })?;
        seq.annotations[i].appearance = Some(h.clone());
    }
    Ok(())
}

/// Per-frame zone membership as CSV:
/// `frame,zone,kind,member,index,track_id` where `member` is `track` or
/// `detection` and `track_id` is -1 for detections.
pub fn format_zone_log(reports: &[FrameReport]) -> String {
    let mut s = String::from("frame,zone,kind,member,index,track_id\n");
    for r in reports {
        for (z, zone) in r.solution.partition.zones.iter().enumerate() {
            for &t in &zone.tracks {
                writeln!(s, "{},{z},{},track,{t},{}", r.frame, zone.kind, r.active_ids[t]).unwrap();
            }
            for &d in &zone.detections {
                writeln!(s, "{},{z},{},detection,{d},-1", r.frame, zone.kind).unwrap();
            }
        }
    }
    s
}

#[cfg(test)]
mod tests;
