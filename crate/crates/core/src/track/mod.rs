//! Online per-frame inference: divide, conquer, update.

pub mod kalman;

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{self, AssignError};
use crate::cluster::{self, ClusterConfig};
use crate::featcost::{self, FeatureConfig, FrameFeatures, MaskPolicy};
use crate::model::{AssignmentInstance, BBox, Detection, SceneBounds, FrameSolution, Point, Slot, Track, TrackStatus, WeightVector, ZoneKind, ZonePartition};

use kalman::{KalmanParams, KalmanState};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TrackError {
    #[error("frame {got} out of order, expected {expected}")]
    FrameOrder { expected: u64, got: u64 },
    #[error("detection of frame {got} passed with frame {expected}")]
    MixedFrames { expected: u64, got: u64 },
    #[error(transparent)]
    Assign(#[from] AssignError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerConfig {
    pub kalman: KalmanParams<f64>,
    pub features: FeatureConfig,
    pub cluster: ClusterConfig,
    pub policy: MaskPolicy,
    /// A track missed for more than this many consecutive frames is terminated.
    pub occlusion_horizon: u32,
    /// Number of appearance instances kept per track.
    pub appearance_window: usize,
    pub birth_position_var: f64,
    pub birth_velocity_var: f64,
    /// Report occluded tracks at their predicted position.
    pub report_occluded: bool,
    /// Observations a track needs before it is reported while occluded.
    pub confirm_hits: usize,
    /// Maps predicted positions back to pixels for reported boxes.
    pub bounds: SceneBounds,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            kalman: KalmanParams::default(),
            features: FeatureConfig::default(),
            cluster: ClusterConfig::default(),
            policy: MaskPolicy::Selective,
            occlusion_horizon: 15,
            appearance_window: 10,
            birth_position_var: 1e-4,
            birth_velocity_var: 1e-2,
            report_occluded: true,
            confirm_hits: 3,
            bounds: SceneBounds::default(),
        }
    }
}

/// One output box of the tracker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackOutput {
    pub frame: u64,
    pub id: u64,
    pub bbox: BBox,
    pub pos: Point,
    /// False for an occluded track reported at its prediction.
    pub observed: bool,
}

/// What happened to each row of the frame's assignment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrameOutcome {
    /// `(detection, track id)` for continued or re-activated tracks.
    pub continued: Vec<(usize, u64)>,
    /// `(detection, new track id)`.
    pub born: Vec<(usize, u64)>,
    /// Ids that became or stayed occluded.
    pub occluded: Vec<u64>,
    /// Ids terminated in this frame.
    pub terminated: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameReport {
    pub frame: u64,
    pub solution: FrameSolution,
    pub outcome: FrameOutcome,
    /// Ids of the active tracks, indexed like the partition's tracks.
    pub active_ids: Vec<u64>,
    pub n_active: usize,
    pub n_occluded: usize,
    pub n_detections: usize,
    pub missing_appearance: usize,
    pub divide_time: Duration,
    pub build_time: Duration,
    pub solve_time: Duration,
}

impl FrameReport {
    pub fn complex_zones(&self) -> usize {
        self.solution.partition.zones.iter().filter(|z| z.kind == ZoneKind::Complex).count()
    }
}

/// A frame after prediction and division, before the matching is applied.
#[derive(Debug, Clone)]
pub struct PreparedFrame {
    pub frame: u64,
    pub detections: Vec<Detection>,
    /// Indices into [`Tracker::tracks`].
    pub active: Vec<usize>,
    pub occluded: Vec<usize>,
    pub features: FrameFeatures,
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub config: TrackerConfig,
    pub weights: WeightVector,
    /// Every track ever created, terminated ones included.
    pub tracks: Vec<Track>,
    pub outputs: Vec<TrackOutput>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(weights: WeightVector, config: TrackerConfig) -> Self {
        Self {
            config,
            weights,
            tracks: Vec::new(),
            outputs: Vec::new(),
            next_id: 1,
            last_frame: None,
        }
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.last_frame
    }

    pub fn live_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_live())
    }

    pub fn track_by_id(&self, id: u64) -> Option<&Track> {
        self.tracks.iter().find(|t| t.id == id)
    }

    /// Checks frame order, predicts every live track and computes pair
    /// features.
    pub fn prepare(&mut self, frame: u64, detections: &[Detection]) -> Result<PreparedFrame, TrackError> {
        if let Some(last) = self.last_frame {
            if frame != last + 1 {
                return Err(TrackError::FrameOrder { expected: last + 1, got: frame });
            }
        }
        if let Some(d) = detections.iter().find(|d| d.frame != frame) {
            return Err(TrackError::MixedFrames { expected: frame, got: d.frame });
        }
        self.last_frame = Some(frame);
        let mut active = Vec::new();
        let mut occluded = Vec::new();
        for (i, t) in self.tracks.iter_mut().enumerate() {
            match t.status {
                TrackStatus::Active => active.push(i),
                TrackStatus::Occluded => occluded.push(i),
                TrackStatus::Terminated => continue,
            }
            t.kalman = t.kalman.predict(&self.config.kalman);
        }
        let a: Vec<&Track> = active.iter().map(|&i| &self.tracks[i]).collect();
        let o: Vec<&Track> = occluded.iter().map(|&i| &self.tracks[i]).collect();
        let features = FrameFeatures::compute(&a, &o, detections, &self.config.features);
        Ok(PreparedFrame {
            frame,
            detections: detections.to_vec(),
            active,
            occluded,
            features,
        })
    }

    /// Divide step under the current weights.
    pub fn divide(&self, prepared: &PreparedFrame) -> ZonePartition {
        cluster::divide(
            &prepared.features.active_positions,
            &prepared.features.detection_positions,
            &self.weights,
            &self.config.cluster,
        )
    }

    pub fn instance(&self, prepared: &PreparedFrame, partition: &ZonePartition) -> AssignmentInstance {
        featcost::assemble(&prepared.features, partition, &self.weights, self.config.policy)
    }

    /// Applies a permutation of the frame's augmented instance.
    pub fn commit(&mut self, prepared: &PreparedFrame, instance: &AssignmentInstance, y: &[usize]) -> FrameOutcome {
        let pairs: Vec<(Slot, Slot)> = y.iter().enumerate().map(|(r, &c)| (instance.rows[r], instance.cols[c])).collect();
        self.commit_pairs(prepared, &pairs)
    }

    /// Applies `(row, column)` slot pairs covering every row of the frame.
    pub fn commit_pairs(&mut self, prepared: &PreparedFrame, pairs: &[(Slot, Slot)]) -> FrameOutcome {
        let mut outcome = FrameOutcome::default();
        let frame = prepared.frame;
        for &(row, col) in pairs {
            let track_index = match row {
                Slot::ActiveTrack(t) => Some(prepared.active[t]),
                Slot::OccludedTrack(o) => Some(prepared.occluded[o]),
                _ => None,
            };
            match (track_index, col) {
                (Some(ti), Slot::Detection(d)) => {
                    let det = &prepared.detections[d];
                    let window = self.config.appearance_window;
                    let t = &mut self.tracks[ti];
                    t.kalman = t.kalman.correct(det.pos.x, det.pos.y, &self.config.kalman);
                    t.trajectory.push((frame, det.pos));
                    if let Some(h) = &det.appearance {
                        t.appearance_history.push(h.clone());
                        if t.appearance_history.len() > window {
                            let excess = t.appearance_history.len() - window;
                            t.appearance_history.drain(..excess);
                        }
                    }
                    t.frames_occluded = 0;
                    t.status = TrackStatus::Active;
                    t.last_bbox = det.bbox;
                    outcome.continued.push((d, t.id));
                    self.outputs.push(TrackOutput { frame, id: t.id, bbox: det.bbox, pos: det.pos, observed: true });
                }
                (Some(ti), _) => {
                    let horizon = self.config.occlusion_horizon;
                    let t = &mut self.tracks[ti];
                    t.frames_occluded += 1;
                    if t.frames_occluded > horizon {
                        t.status = TrackStatus::Terminated;
                        outcome.terminated.push(t.id);
                    } else {
                        t.status = TrackStatus::Occluded;
                        outcome.occluded.push(t.id);
                        if self.config.report_occluded && t.trajectory.len() >= self.config.confirm_hits {
                            let p = t.position();
                            let pos = Point::new(p.x.clamp(0.0, 1.0), p.y.clamp(0.0, 1.0));
                            let (px, py) = self.config.bounds.denormalize(pos);
                            let bbox = t.last_bbox.recentered(px, py);
                            self.outputs.push(TrackOutput { frame, id: t.id, bbox, pos, observed: false });
                        }
                    }
                }
                (None, Slot::Detection(d)) => {
                    let det = &prepared.detections[d];
                    let id = self.next_id;
                    self.next_id += 1;
                    let k = KalmanState::at_rest(det.pos.x, det.pos.y, self.config.birth_position_var, self.config.birth_velocity_var);
                    self.tracks.push(Track::new(id, det, k));
                    outcome.born.push((d, id));
                    self.outputs.push(TrackOutput { frame, id, bbox: det.bbox, pos: det.pos, observed: true });
                }
                (None, _) => {}
            }
        }
        outcome
    }

    /// One online step on the detections of `frame`.
    pub fn step(&mut self, frame: u64, detections: &[Detection]) -> Result<FrameReport, TrackError> {
        let prepared = self.prepare(frame, detections)?;
        let t0 = Instant::now();
        let partition = self.divide(&prepared);
        let t1 = Instant::now();
        let instance = self.instance(&prepared, &partition);
        let t2 = Instant::now();
        let result = if instance.size() == 0 {
            assign::MatchResult { y: Vec::new(), total_cost: 0.0 }
        } else {
            assign::solve(&instance.costs)?
        };
        let t3 = Instant::now();
        let active_ids = prepared.active.iter().map(|&i| self.tracks[i].id).collect();
        let outcome = self.commit(&prepared, &instance, &result.y);
        Ok(FrameReport {
            frame,
            solution: FrameSolution {
                y: result.y,
                partition,
                cost: result.total_cost,
            },
            outcome,
            active_ids,
            n_active: prepared.active.len(),
            n_occluded: prepared.occluded.len(),
            n_detections: detections.len(),
            missing_appearance: prepared.features.missing_appearance,
            divide_time: t1 - t0,
            build_time: t2 - t1,
            solve_time: t3 - t2,
        })
    }

    /// Runs every frame from the first to the last detection frame, feeding
    /// empty frames where nothing was detected.
    pub fn run(&mut self, detections: &[Detection]) -> Result<Vec<FrameReport>, TrackError> {
        self.run_frames(group_by_frame(detections), None)
    }

    /// Like [`run`](Self::run) over an explicit frame range.
    pub fn run_frames(&mut self, frames: BTreeMap<u64, Vec<Detection>>, range: Option<(u64, u64)>) -> Result<Vec<FrameReport>, TrackError> {
        let (first, last) = match range {
            Some(r) => r,
            None => match (frames.keys().next(), frames.keys().next_back()) {
                (Some(&a), Some(&b)) => (a, b),
                _ => return Ok(Vec::new()),
            },
        };
        let mut reports = Vec::with_capacity((last + 1 - first) as usize);
        for f in first..=last {
            let dets = frames.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            reports.push(self.step(f, dets)?);
        }
        Ok(reports)
    }
}

pub fn group_by_frame(detections: &[Detection]) -> BTreeMap<u64, Vec<Detection>> {
    let mut frames: BTreeMap<u64, Vec<Detection>> = BTreeMap::new();
    for d in detections {
        frames.entry(d.frame).or_default().push(d.clone());
    }
    frames
}
