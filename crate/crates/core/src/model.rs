//! Domain types shared by the divide, conquer and learning stages.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{Cost, CostMatrix};
use crate::track::kalman::KalmanState;

/// Length of the pair feature vector and of the weight vector.
pub const FEATURE_DIM: usize = 9;

/// Slot layout shared by [`FeatureVec`], [`MaskVec`] and [`WeightVector`].
pub mod slot {
    pub const BIAS: usize = 0;
    pub const DIST_X: usize = 1;
    pub const DIST_Y: usize = 2;
    pub const SIM_X: usize = 3;
    pub const SIM_Y: usize = 4;
    pub const COMPLEX_DIST_X: usize = 5;
    pub const COMPLEX_DIST_Y: usize = 6;
    pub const G1: usize = 7;
    pub const G2: usize = 8;

    /// Names used by the model file, in slot order.
    pub const NAMES: [&str; super::FEATURE_DIM] = [
        "xi",
        "dist_x",
        "dist_y",
        "sim_x",
        "sim_y",
        "complex_dist_x",
        "complex_dist_y",
        "g1_appearance",
        "g2_motion",
    ];
}

pub type FeatureVec = [f64; FEATURE_DIM];

/// One entry of a feature mask: 0, 1 or ∞.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MaskSlot {
    Off,
    On,
    Infinite,
}

pub type MaskVec = [MaskSlot; FEATURE_DIM];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("histogram has {got} bins, expected 3 × {per_channel}")]
    HistogramLength { got: usize, per_channel: usize },
    #[error("histogram bin {index} is negative or not finite ({value})")]
    HistogramBin { index: usize, value: f64 },
    #[error("position ({x}, {y}) lies outside the unit square")]
    Position { x: f64, y: f64 },
    #[error("bounding box must have positive width and height")]
    BoxSize,
    #[error("scene bounds must have positive extent")]
    Bounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Pixel bounding box, `(left, top, width, height)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub left: f64,
    pub top: f64,
    pub width: f64,
    pub height: f64,
}

impl BBox {
    pub fn new(left: f64, top: f64, width: f64, height: f64) -> Self {
        Self {
            left,
            top,
            width,
            height,
        }
    }

    pub fn center(&self) -> (f64, f64) {
        (self.left + self.width / 2.0, self.top + self.height / 2.0)
    }

    /// Same size, centered on `(cx, cy)`.
    pub fn recentered(&self, cx: f64, cy: f64) -> Self {
        Self::new(cx - self.width / 2.0, cy - self.height / 2.0, self.width, self.height)
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        let x0 = self.left.max(other.left);
        let y0 = self.top.max(other.top);
        let x1 = (self.left + self.width).min(other.left + other.width);
        let y1 = (self.top + self.height).min(other.top + other.height);
        let inter = (x1 - x0).max(0.0) * (y1 - y0).max(0.0);
        let union = self.width * self.height + other.width * other.height - inter;
        if union <= 0.0 {
            0.0
        } else {
            inter / union
        }
    }
}

/// Pixel extent of the scene used to map box centers into `[0, 1]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Default for SceneBounds {
    fn default() -> Self {
        Self {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 1920.0,
            y_max: 1080.0,
        }
    }
}

impl SceneBounds {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, ModelError> {
        if !(x_max > x_min && y_max > y_min) {
            return Err(ModelError::Bounds);
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Pixel coordinates to normalized coordinates, clamped to the unit square.
    pub fn normalize(&self, px: f64, py: f64) -> Point {
        Point::new(
            ((px - self.x_min) / self.width()).clamp(0.0, 1.0),
            ((py - self.y_min) / self.height()).clamp(0.0, 1.0),
        )
    }

    pub fn denormalize(&self, p: Point) -> (f64, f64) {
        (self.x_min + p.x * self.width(), self.y_min + p.y * self.height())
    }
}

/// Per-channel normalized RGB histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    bins: Vec<f64>,
    per_channel: usize,
}

impl Histogram {
    pub const CHANNELS: usize = 3;
    /// Additive smoothing applied to every bin before normalization.
    pub const EPSILON: f64 = 1e-6;

    /// Validates raw non-negative bin values, smooths and normalizes each channel.
    pub fn new(raw: &[f64], per_channel: usize) -> Result<Self, ModelError> {
        if per_channel == 0 || raw.len() != Self::CHANNELS * per_channel {
            return Err(ModelError::HistogramLength {
                got: raw.len(),
                per_channel,
            });
        }
        if let Some((index, &value)) = raw
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(ModelError::HistogramBin { index, value });
        }
        let mut bins = Vec::with_capacity(raw.len());
        for channel in raw.chunks(per_channel) {
            let sum: f64 = channel.iter().sum();
            let denom = 1.0 + per_channel as f64 * Self::EPSILON;
            for &v in channel {
                let p = if sum > 0.0 {
                    v / sum
                } else {
                    1.0 / per_channel as f64
                };
                bins.push((p + Self::EPSILON) / denom);
            }
        }
        Ok(Self { bins, per_channel })
    }

    pub fn uniform(per_channel: usize) -> Self {
        Self::new(&vec![1.0; Self::CHANNELS * per_channel], per_channel).expect("valid shape")
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn per_channel(&self) -> usize {
        self.per_channel
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.bins.chunks(self.per_channel)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame: u64,
    /// Box center in normalized scene coordinates.
    pub pos: Point,
    pub bbox: BBox,
    pub confidence: f64,
    pub appearance: Option<Histogram>,
}

impl Detection {
    pub fn new(frame: u64, pos: Point, bbox: BBox, confidence: f64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&pos.x) || !(0.0..=1.0).contains(&pos.y) {
            return Err(ModelError::Position { x: pos.x, y: pos.y });
        }
        if !(bbox.width > 0.0 && bbox.height > 0.0) {
            return Err(ModelError::BoxSize);
        }
        Ok(Self {
            frame,
            pos,
            bbox,
            confidence,
            appearance: None,
        })
    }

    /// Detection whose normalized position is derived from the box center.
    pub fn from_bbox(frame: u64, bbox: BBox, confidence: f64, bounds: &SceneBounds) -> Result<Self, ModelError> {
        let (cx, cy) = bbox.center();
        Self::new(frame, bounds.normalize(cx, cy), bbox, confidence)
    }

    pub fn with_appearance(mut self, appearance: Histogram) -> Self {
        self.appearance = Some(appearance);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrackStatus {
    Active,
    Occluded,
    Terminated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Track {
    pub id: u64,
    pub status: TrackStatus,
    /// Observed positions, strictly increasing in frame.
    pub trajectory: Vec<(u64, Point)>,
    pub appearance_history: Vec<Histogram>,
    pub kalman: KalmanState<f64>,
    pub frames_occluded: u32,
    /// Size of the last associated box, used when writing results.
    pub last_bbox: BBox,
}

impl Track {
    pub fn new(id: u64, detection: &Detection, kalman: KalmanState<f64>) -> Self {
        Self {
            id,
            status: TrackStatus::Active,
            trajectory: vec![(detection.frame, detection.pos)],
            appearance_history: detection.appearance.iter().cloned().collect(),
            kalman,
            frames_occluded: 0,
            last_bbox: detection.bbox,
        }
    }

    /// Kalman position estimate (the predicted position once the frame's
    /// prediction has been applied).
    pub fn position(&self) -> Point {
        let (x, y) = self.kalman.position();
        Point::new(x, y)
    }

    pub fn last_frame(&self) -> u64 {
        self.trajectory.last().map(|(f, _)| *f).unwrap_or(0)
    }

    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Terminated
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ZoneKind {
    Simple,
    Complex,
}

impl fmt::Display for ZoneKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ZoneKind::Simple => "simple",
            ZoneKind::Complex => "complex",
        })
    }
}

/// Indices refer to the frame's active tracks and detections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Zone {
    pub tracks: BTreeSet<usize>,
    pub detections: BTreeSet<usize>,
    pub kind: ZoneKind,
}

impl Zone {
    pub fn new(tracks: BTreeSet<usize>, detections: BTreeSet<usize>) -> Self {
        let kind = if tracks.len() == detections.len() {
            ZoneKind::Simple
        } else {
            ZoneKind::Complex
        };
        Self {
            tracks,
            detections,
            kind,
        }
    }

    pub fn len(&self) -> usize {
        self.tracks.len() + self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Disjoint zones covering every active track and detection of a frame.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ZonePartition {
    pub zones: Vec<Zone>,
    track_zone: Vec<usize>,
    detection_zone: Vec<usize>,
}

impl ZonePartition {
    /// Builds the lookup tables; panics if the zones overlap or leave gaps.
    pub fn new(zones: Vec<Zone>, n_tracks: usize, n_detections: usize) -> Self {
        let mut track_zone = vec![usize::MAX; n_tracks];
        let mut detection_zone = vec![usize::MAX; n_detections];
        for (z, zone) in zones.iter().enumerate() {
            for &t in &zone.tracks {
                assert_eq!(track_zone[t], usize::MAX, "track {t} in two zones");
                track_zone[t] = z;
            }
            for &d in &zone.detections {
                assert_eq!(detection_zone[d], usize::MAX, "detection {d} in two zones");
                detection_zone[d] = z;
            }
        }
        assert!(
            track_zone.iter().chain(&detection_zone).all(|&z| z != usize::MAX),
            "zones must cover all elements"
        );
        Self {
            zones,
            track_zone,
            detection_zone,
        }
    }

    pub fn n_tracks(&self) -> usize {
        self.track_zone.len()
    }

    pub fn n_detections(&self) -> usize {
        self.detection_zone.len()
    }

    pub fn zone_of_track(&self, t: usize) -> usize {
        self.track_zone[t]
    }

    pub fn zone_of_detection(&self, d: usize) -> usize {
        self.detection_zone[d]
    }

    pub fn track_kind(&self, t: usize) -> ZoneKind {
        self.zones[self.track_zone[t]].kind
    }

    pub fn detection_kind(&self, d: usize) -> ZoneKind {
        self.zones[self.detection_zone[d]].kind
    }

    /// Fraction of zones that are complex, 0 for an empty frame.
    pub fn complex_fraction(&self) -> f64 {
        if self.zones.is_empty() {
            return 0.0;
        }
        let complex = self.zones.iter().filter(|z| z.kind == ZoneKind::Complex).count();
        complex as f64 / self.zones.len() as f64
    }
}

/// Linear model over [`FeatureVec`]; slot 0 is the birth/death bias ξ.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeightVector(pub [f64; FEATURE_DIM]);

impl WeightVector {
    pub fn zeros() -> Self {
        Self([0.0; FEATURE_DIM])
    }

    pub fn as_array(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }

    pub fn xi(&self) -> f64 {
        self.0[slot::BIAS]
    }

    /// Divide-step parameters (distance and similarity weights).
    pub fn theta(&self) -> [f64; 4] {
        [
            self.0[slot::DIST_X],
            self.0[slot::DIST_Y],
            self.0[slot::SIM_X],
            self.0[slot::SIM_Y],
        ]
    }

    pub fn dot(&self, v: &FeatureVec) -> f64 {
        self.0.iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(&self.0)
    }

    /// `⟨w, π ∘ f⟩`, the sentinel when the mask forbids the cell.
    pub fn masked_cost(&self, mask: &MaskVec, features: &FeatureVec) -> Cost<f64> {
        let mut total = 0.0;
        for ((w, m), f) in self.0.iter().zip(mask).zip(features) {
            match m {
                MaskSlot::Infinite => return Cost::Infinite,
                MaskSlot::On => total += w * f,
                MaskSlot::Off => {}
            }
        }
        Cost::Finite(total)
    }
}

/// Row/column role in the augmented matrix.
///
/// Rows: `ActiveTrack`, `OccludedTrack`, `DummyIn` (one per detection).
/// Columns: `Detection`, `OccludedTrack` (stay occluded), `DummyOut` (one per active track).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Slot {
    ActiveTrack(usize),
    OccludedTrack(usize),
    DummyOut(usize),
    DummyIn(usize),
    Detection(usize),
}

/// Augmented association problem for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentInstance {
    pub costs: CostMatrix<f64>,
    pub features: Vec<FeatureVec>,
    pub masks: Vec<MaskVec>,
    pub rows: Vec<Slot>,
    pub cols: Vec<Slot>,
    pub n_active: usize,
    pub n_occluded: usize,
    pub n_detections: usize,
}

impl AssignmentInstance {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn feature(&self, row: usize, col: usize) -> &FeatureVec {
        &self.features[row * self.size() + col]
    }

    pub fn mask(&self, row: usize, col: usize) -> &MaskVec {
        &self.masks[row * self.size() + col]
    }

    /// Column index of each block start: detections, occluded slots, dummy-out slots.
    pub fn col_of_detection(&self, d: usize) -> usize {
        d
    }

    pub fn col_of_occluded(&self, o: usize) -> usize {
        self.n_detections + o
    }

    pub fn col_of_dummy_out(&self, t: usize) -> usize {
        self.n_detections + self.n_occluded + t
    }

    pub fn row_of_active(&self, t: usize) -> usize {
        t
    }

    pub fn row_of_occluded(&self, o: usize) -> usize {
        self.n_active + o
    }

    pub fn row_of_dummy_in(&self, d: usize) -> usize {
        self.n_active + self.n_occluded + d
    }

    /// `Σ π ∘ f` over the cells selected by `y`; `None` if a cell is forbidden.
    pub fn masked_feature_sum(&self, y: &[usize]) -> Option<FeatureVec> {
        let mut acc = [0.0; FEATURE_DIM];
        for (row, &col) in y.iter().enumerate() {
            if self.costs.get(row, col).is_infinite() {
                return None;
            }
            let f = self.feature(row, col);
            for (k, m) in self.mask(row, col).iter().enumerate() {
                if *m == MaskSlot::On {
                    acc[k] += f[k];
                }
            }
        }
        Some(acc)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    /// Column chosen for each row of the augmented matrix (0-based).
    pub y: Vec<usize>,
    pub partition: ZonePartition,
    pub cost: f64,
}

/// One labelled box of a ground-truth or hypothesis sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub frame: u64,
    pub id: u64,
    pub bbox: BBox,
    pub confidence: f64,
    pub appearance: Option<Histogram>,
}

/// Annotated sequence with the bounds used to normalize positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sequence {
    pub bounds: SceneBounds,
    pub annotations: Vec<Annotation>,
}

impl Sequence {
    pub fn new(bounds: SceneBounds, mut annotations: Vec<Annotation>) -> Self {
        annotations.sort_by_key(|a| (a.frame, a.id));
        Self { bounds, annotations }
    }

    /// Inclusive frame range, `None` when empty.
    pub fn frame_range(&self) -> Option<(u64, u64)> {
        Some((self.annotations.first()?.frame, self.annotations.last()?.frame))
    }

    pub fn frames(&self) -> std::collections::BTreeMap<u64, Vec<&Annotation>> {
        let mut out: std::collections::BTreeMap<u64, Vec<&Annotation>> = std::collections::BTreeMap::new();
        for a in &self.annotations {
            out.entry(a.frame).or_default().push(a);
        }
        out
    }

    pub fn ids(&self) -> BTreeSet<u64> {
        self.annotations.iter().map(|a| a.id).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn histogram_channels_sum_to_one() {
        let h = Histogram::new(&[1.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0], 3).unwrap();
        for channel in h.channels() {
            let s: f64 = channel.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(channel.iter().all(|&b| b > 0.0));
        }
        // A zero channel falls back to uniform.
        assert!((h.bins()[3] - h.bins()[4]).abs() < 1e-15);
    }

    #[test]
    fn histogram_rejects_bad_input() {
        assert!(matches!(
            Histogram::new(&[1.0; 8], 3),
            Err(ModelError::HistogramLength { .. })
        ));
        assert!(matches!(
            Histogram::new(&[1.0, -1.0, 1.0], 1),
            Err(ModelError::HistogramBin { index: 1, .. })
        ));
    }

    #[test]
    fn detection_invariants() {
        let b = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert!(Detection::new(0, Point::new(1.2, 0.5), b, 1.0).is_err());
        assert!(Detection::new(0, Point::new(0.5, 0.5), BBox::new(0.0, 0.0, 0.0, 1.0), 1.0).is_err());
        assert!(Detection::new(0, Point::new(0.5, 0.5), b, 1.0).is_ok());
    }

    #[test]
    fn iou_basics() {
        let a = BBox::new(0.0, 0.0, 10.0, 10.0);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(20.0, 0.0, 10.0, 10.0)), 0.0);
        let half = BBox::new(5.0, 0.0, 10.0, 10.0);
        assert!((a.iou(&half) - 50.0 / 150.0).abs() < 1e-12);
    }

    #[test]
    fn masked_cost_respects_sentinel() {
        let w = WeightVector([2.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let f = [1.0, 0.25, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut mask = [MaskSlot::Off; FEATURE_DIM];
        mask[1] = MaskSlot::On;
        mask[2] = MaskSlot::On;
        assert_eq!(w.masked_cost(&mask, &f), Cost::Finite(0.75));
        mask[0] = MaskSlot::Infinite;
        assert_eq!(w.masked_cost(&mask, &f), Cost::Infinite);
    }

    #[test]
    #[should_panic(expected = "two zones")]
    fn overlapping_zones_panic() {
        let z = |t: &[usize], d: &[usize]| Zone::new(t.iter().copied().collect(), d.iter().copied().collect());
        ZonePartition::new(vec![z(&[0], &[0]), z(&[0], &[])], 1, 1);
    }

    proptest! {
        #[test]
        fn normalization_round_trips(px in 0.0f64..1920.0, py in 0.0f64..1080.0) {
            let b = SceneBounds::default();
            let (x, y) = b.denormalize(b.normalize(px, py));
            prop_assert!((x - px).abs() < 1e-6 && (y - py).abs() < 1e-6);
        }

        #[test]
        fn serde_round_trip(x in 0.0f64..1.0, y in 0.0f64..1.0, raw in proptest::collection::vec(0.0f64..5.0, 6)) {
            let det = Detection::new(3, Point::new(x, y), BBox::new(1.0, 2.0, 3.0, 4.0), 0.5)
                .unwrap()
                .with_appearance(Histogram::new(&raw, 2).unwrap());
            let text = serde_json::to_string(&det).unwrap();
            let back: Detection = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(back, det);
        }
    }
}
