//! Pair features, zone masks and the augmented cost matrix.
//!
//! Row blocks are active tracks, occluded tracks and one birth row per
//! detection; column blocks are detections, one "stay occluded" column per
//! occluded track and one "leave" column per active track:
//!
//! ```text
//!             detections   occluded    leave
//! active    [    Â      |    +∞     |  T_out ]
//! occluded  [    H      |   H_occ   |   +∞   ]
//! birth     [   D_in    |    Ξ      |   Ξ    ]
//! ```
//!
//! `T_out`, `H_occ` and `D_in` carry ξ on the diagonal and +∞ elsewhere, `Ξ`
//! is ξ everywhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{self, AssignError, Cost, CostMatrix, MatchResult};
use crate::model::{
    slot, AssignmentInstance, Detection, FeatureVec, Histogram, MaskSlot, MaskVec, Point, Slot, Track, WeightVector,
    ZoneKind, ZonePartition, FEATURE_DIM,
};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureError {
    #[error("appearance histogram missing on the track or the detection")]
    MissingAppearance,
    #[error("histogram bin layout differs between track and detection")]
    HistogramShape,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// KL values are clipped here and divided by it.
    pub kl_cap: f64,
    /// g1 used when a histogram is missing.
    pub g1_neutral: f64,
    /// Neighbourhood radius for the motion-coherence feature.
    pub g2_radius: f64,
    /// Curvature values are clipped here and divided by it.
    pub g2_cap: f64,
    /// Minimum distance between consecutive trajectory points used for g2.
    pub g2_spacing: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            kl_cap: 10.0,
            g1_neutral: 0.5,
            g2_radius: 0.1,
            g2_cap: 50.0,
            g2_spacing: 0.02,
        }
    }
}

/// Which features the association cells may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum MaskPolicy {
    /// Spatial features in simple zones, rich features in complex zones.
    #[default]
    Selective,
    /// Spatial features everywhere.
    SimpleOnly,
    /// Rich features everywhere.
    AllFeatures,
}

impl MaskPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            MaskPolicy::Selective => "selective",
            MaskPolicy::SimpleOnly => "simple_only",
            MaskPolicy::AllFeatures => "all_features",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "selective" => Some(MaskPolicy::Selective),
            "simple_only" => Some(MaskPolicy::SimpleOnly),
            "all_features" => Some(MaskPolicy::AllFeatures),
            _ => None,
        }
    }
}

pub fn simple_mask() -> MaskVec {
    let mut m = [MaskSlot::Off; FEATURE_DIM];
    m[slot::DIST_X] = MaskSlot::On;
    m[slot::DIST_Y] = MaskSlot::On;
    m
}

pub fn complex_mask() -> MaskVec {
    let mut m = [MaskSlot::Off; FEATURE_DIM];
    for s in [slot::COMPLEX_DIST_X, slot::COMPLEX_DIST_Y, slot::G1, slot::G2] {
        m[s] = MaskSlot::On;
    }
    m
}

pub fn bias_mask() -> MaskVec {
    let mut m = [MaskSlot::Off; FEATURE_DIM];
    m[slot::BIAS] = MaskSlot::On;
    m
}

pub fn forbidden_mask() -> MaskVec {
    let mut m = [MaskSlot::Off; FEATURE_DIM];
    m[slot::BIAS] = MaskSlot::Infinite;
    m
}

fn bias_features() -> FeatureVec {
    let mut f = [0.0; FEATURE_DIM];
    f[slot::BIAS] = 1.0;
    f
}

fn infinite_features() -> FeatureVec {
    let mut f = [0.0; FEATURE_DIM];
    f[slot::BIAS] = f64::INFINITY;
    f
}

/// `KL(p‖q)` summed over channels.
pub fn kl_divergence(p: &Histogram, q: &Histogram) -> Result<f64, FeatureError> {
    if p.bins().len() != q.bins().len() || p.per_channel() != q.per_channel() {
        return Err(FeatureError::HistogramShape);
    }
    Ok(p.bins()
        .iter()
        .zip(q.bins())
        .filter(|(a, _)| **a > 0.0)
        .map(|(a, b)| a * (a / b).ln())
        .sum())
}

/// Mean KL of the detection histogram from the track's stored instances,
/// clipped at `kl_cap` and rescaled to `[0, 1]`.
pub fn appearance_distance_g1(detection: &Detection, track: &Track, config: &FeatureConfig) -> Result<f64, FeatureError> {
    let det = detection.appearance.as_ref().ok_or(FeatureError::MissingAppearance)?;
    if track.appearance_history.is_empty() {
        return Err(FeatureError::MissingAppearance);
    }
    let mut total = 0.0;
    for instance in &track.appearance_history {
        total += kl_divergence(det, instance)?;
    }
    let mean = total / track.appearance_history.len() as f64;
    Ok(mean.min(config.kl_cap) / config.kl_cap)
}

/// Inverse circumradius of a triangle, 0 when two vertices coincide.
pub fn menger_curvature(a: Point, b: Point, c: Point) -> f64 {
    let (ab, bc, ca) = (a.distance(&b), b.distance(&c), c.distance(&a));
    let denom = ab * bc * ca;
    if denom <= f64::EPSILON * f64::EPSILON {
        return 0.0;
    }
    let cross = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
    2.0 * cross.abs() / denom
}

/// Mean curvature over consecutive triples; 0 for fewer than three points.
pub fn mean_menger_curvature(points: &[Point]) -> f64 {
    if points.len() < 3 {
        return 0.0;
    }
    let sum: f64 = points.windows(3).map(|w| menger_curvature(w[0], w[1], w[2])).sum();
    sum / (points.len() - 2) as f64
}

/// Raw motion-coherence value: mean curvature of the trajectory points near
/// the detection followed by the detection itself. Walking back from the
/// detection, points closer than `spacing` to the previously kept one are
/// skipped so that jitter on short steps does not dominate.
pub fn motion_curvature(detection: &Detection, track: &Track, radius: f64, spacing: f64) -> f64 {
    if track.trajectory.len() < 2 {
        return 0.0;
    }
    let mut points = vec![detection.pos];
    for (_, p) in track.trajectory.iter().rev() {
        if p.distance(&detection.pos) <= radius && p.distance(points.last().expect("non-empty")) >= spacing {
            points.push(*p);
        }
    }
    points.reverse();
    mean_menger_curvature(&points)
}

/// Motion coherence rescaled to `[0, 1]` by `g2_cap`.
pub fn motion_coherence_g2(detection: &Detection, track: &Track, config: &FeatureConfig) -> f64 {
    motion_curvature(detection, track, config.g2_radius, config.g2_spacing).min(config.g2_cap) / config.g2_cap
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairFeatures {
    pub f: FeatureVec,
    /// g1 fell back to the neutral value.
    pub missing_appearance: bool,
}

/// `(1, |Δx|, |Δy|, 1−|Δx|, 1−|Δy|, |Δx|, |Δy|, g1, g2)` against the track's
/// current position estimate.
pub fn feature_vector(track: &Track, detection: &Detection, config: &FeatureConfig) -> PairFeatures {
    let t = track.position();
    let dx = (t.x - detection.pos.x).abs().min(1.0);
    let dy = (t.y - detection.pos.y).abs().min(1.0);
    let (g1, missing_appearance) = match appearance_distance_g1(detection, track, config) {
        Ok(v) => (v, false),
        Err(_) => (config.g1_neutral, true),
    };
    PairFeatures {
        f: [1.0, dx, dy, 1.0 - dx, 1.0 - dy, dx, dy, g1, motion_coherence_g2(detection, track, config)],
        missing_appearance,
    }
}

/// Feature vectors of every (track, detection) pair of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures {
    pub n_active: usize,
    pub n_occluded: usize,
    pub n_detections: usize,
    /// Row-major `n_active × n_detections`.
    pub active: Vec<FeatureVec>,
    /// Row-major `n_occluded × n_detections`.
    pub occluded: Vec<FeatureVec>,
    pub active_positions: Vec<Point>,
    pub detection_positions: Vec<Point>,
    pub missing_appearance: usize,
}

impl FrameFeatures {
    pub fn compute(active: &[&Track], occluded: &[&Track], detections: &[Detection], config: &FeatureConfig) -> Self {
        let mut missing = 0;
        let mut table = |tracks: &[&Track]| -> Vec<FeatureVec> {
            let mut out = Vec::with_capacity(tracks.len() * detections.len());
            for t in tracks {
                for d in detections {
                    let pf = feature_vector(t, d, config);
                    missing += usize::from(pf.missing_appearance);
                    out.push(pf.f);
                }
            }
            out
        };
        let active_table = table(active);
        let occluded_table = table(occluded);
        Self {
            n_active: active.len(),
            n_occluded: occluded.len(),
            n_detections: detections.len(),
            active: active_table,
            occluded: occluded_table,
            active_positions: active.iter().map(|t| t.position()).collect(),
            detection_positions: detections.iter().map(|d| d.pos).collect(),
            missing_appearance: missing,
        }
    }

    pub fn active_pair(&self, t: usize, d: usize) -> &FeatureVec {
        &self.active[t * self.n_detections + d]
    }

    pub fn occluded_pair(&self, o: usize, d: usize) -> &FeatureVec {
        &self.occluded[o * self.n_detections + d]
    }
}

/// Feature mask of an augmented-matrix cell.
pub fn mask_vector(row: Slot, col: Slot, partition: &ZonePartition, policy: MaskPolicy) -> MaskVec {
    let simple = || match policy {
        MaskPolicy::AllFeatures => complex_mask(),
        _ => simple_mask(),
    };
    let complex = || match policy {
        MaskPolicy::SimpleOnly => simple_mask(),
        _ => complex_mask(),
    };
    match (row, col) {
        (Slot::ActiveTrack(t), Slot::Detection(d)) => {
            let (zt, zd) = (partition.zone_of_track(t), partition.zone_of_detection(d));
            match (partition.zones[zt].kind, partition.zones[zd].kind) {
                (ZoneKind::Simple, _) if zt == zd => simple(),
                (ZoneKind::Complex, ZoneKind::Complex) => complex(),
                _ => forbidden_mask(),
            }
        }
        (Slot::OccludedTrack(_), Slot::Detection(d)) => match partition.detection_kind(d) {
            ZoneKind::Complex => complex(),
            ZoneKind::Simple => forbidden_mask(),
        },
        (Slot::ActiveTrack(t), Slot::DummyOut(u)) if t == u => bias_mask(),
        (Slot::OccludedTrack(o), Slot::OccludedTrack(p)) if o == p => bias_mask(),
        (Slot::DummyIn(d), Slot::Detection(e)) if d == e => bias_mask(),
        (Slot::DummyIn(_), Slot::OccludedTrack(_) | Slot::DummyOut(_)) => bias_mask(),
        _ => forbidden_mask(),
    }
}

/// Row and column labels of the augmented layout.
pub fn layout(n_active: usize, n_occluded: usize, n_detections: usize) -> (Vec<Slot>, Vec<Slot>) {
    let rows = (0..n_active)
        .map(Slot::ActiveTrack)
        .chain((0..n_occluded).map(Slot::OccludedTrack))
        .chain((0..n_detections).map(Slot::DummyIn))
        .collect();
    let cols = (0..n_detections)
        .map(Slot::Detection)
        .chain((0..n_occluded).map(Slot::OccludedTrack))
        .chain((0..n_active).map(Slot::DummyOut))
        .collect();
    (rows, cols)
}

/// Assembles the augmented instance for a fixed partition.
pub fn assemble(features: &FrameFeatures, partition: &ZonePartition, w: &WeightVector, policy: MaskPolicy) -> AssignmentInstance {
    let (na, no, nd) = (features.n_active, features.n_occluded, features.n_detections);
    assert_eq!(partition.n_tracks(), na, "partition does not match the active tracks");
    assert_eq!(partition.n_detections(), nd, "partition does not match the detections");
    let (rows, cols) = layout(na, no, nd);
    let n = rows.len();
    let mut costs = CostMatrix::forbidden(n);
    let mut feats = Vec::with_capacity(n * n);
    let mut masks = Vec::with_capacity(n * n);
    for (r, &row) in rows.iter().enumerate() {
        for (c, &col) in cols.iter().enumerate() {
            let mask = mask_vector(row, col, partition, policy);
            let f = match (row, col) {
                (Slot::ActiveTrack(t), Slot::Detection(d)) => *features.active_pair(t, d),
                (Slot::OccludedTrack(o), Slot::Detection(d)) => *features.occluded_pair(o, d),
                _ if mask[slot::BIAS] == MaskSlot::Infinite => infinite_features(),
                _ => bias_features(),
            };
            costs.set(r, c, w.masked_cost(&mask, &f));
            feats.push(f);
            masks.push(mask);
        }
    }
    AssignmentInstance {
        costs,
        features: feats,
        masks,
        rows,
        cols,
        n_active: na,
        n_occluded: no,
        n_detections: nd,
    }
}

pub fn build_instance(
    active: &[&Track],
    occluded: &[&Track],
    detections: &[Detection],
    partition: &ZonePartition,
    w: &WeightVector,
    config: &FeatureConfig,
    policy: MaskPolicy,
) -> AssignmentInstance {
    assemble(&FrameFeatures::compute(active, occluded, detections, config), partition, w, policy)
}

/// Rows and columns of one independent sub-problem.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubProblem {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

/// Splits the instance into one block per simple zone plus one block holding
/// every complex zone and all occluded tracks.
pub fn subproblems(instance: &AssignmentInstance, partition: &ZonePartition) -> Vec<SubProblem> {
    let mut out = Vec::new();
    let mut complex = SubProblem {
        rows: Vec::new(),
        cols: Vec::new(),
    };
    for zone in &partition.zones {
        let target = match zone.kind {
            ZoneKind::Simple => {
                out.push(SubProblem {
                    rows: Vec::new(),
                    cols: Vec::new(),
                });
                out.last_mut().expect("just pushed")
            }
            ZoneKind::Complex => &mut complex,
        };
        for &t in &zone.tracks {
            target.rows.push(instance.row_of_active(t));
            target.cols.push(instance.col_of_dummy_out(t));
        }
        for &d in &zone.detections {
            target.rows.push(instance.row_of_dummy_in(d));
            target.cols.push(instance.col_of_detection(d));
        }
    }
    for o in 0..instance.n_occluded {
        complex.rows.push(instance.row_of_occluded(o));
        complex.cols.push(instance.col_of_occluded(o));
    }
    if !complex.rows.is_empty() {
        out.push(complex);
    }
    out
}

/// Solves every sub-problem independently and stitches the permutation.
pub fn solve_partitioned(instance: &AssignmentInstance, partition: &ZonePartition) -> Result<MatchResult<f64>, AssignError> {
    let n = instance.size();
    if n == 0 {
        return Err(AssignError::Empty);
    }
    let mut y = vec![usize::MAX; n];
    for sub in subproblems(instance, partition) {
        let local = assign::solve(&instance.costs.submatrix(&sub.rows, &sub.cols)?)?;
        for (i, &c) in local.y.iter().enumerate() {
            y[sub.rows[i]] = sub.cols[c];
        }
    }
    debug_assert!(y.iter().all(|&c| c != usize::MAX));
    let total_cost = instance.costs.assignment_cost(&y).ok_or(AssignError::Infeasible)?;
    Ok(MatchResult { y, total_cost })
}

/// Whether every finite cell equals `⟨w, π ∘ f⟩`.
pub fn check_costs(instance: &AssignmentInstance, w: &WeightVector) -> bool {
    let n = instance.size();
    (0..n).all(|r| {
        (0..n).all(|c| {
            let expected = w.masked_cost(instance.mask(r, c), instance.feature(r, c));
            match (expected, instance.costs.get(r, c)) {
                (Cost::Infinite, Cost::Infinite) => true,
                (Cost::Finite(a), Cost::Finite(b)) => a == b,
                _ => false,
            }
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{BBox, Zone};
    use crate::track::kalman::KalmanState;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeSet;

    fn det_at(x: f64, y: f64) -> Detection {
        Detection::new(1, Point::new(x, y), BBox::new(0.0, 0.0, 10.0, 20.0), 1.0).unwrap()
    }

    fn track_with(history: &[(f64, f64)]) -> Track {
        let first = det_at(history[0].0, history[0].1);
        let last = history.last().unwrap();
        let mut t = Track::new(1, &first, KalmanState::at_rest(last.0, last.1, 1e-4, 1e-2));
        t.trajectory = history
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| (k as u64, Point::new(x, y)))
            .collect();
        t
    }

    fn hist(raw: &[f64]) -> Histogram {
        Histogram::new(raw, raw.len() / 3).unwrap()
    }

    fn zones(parts: &[(&[usize], &[usize])], nt: usize, nd: usize) -> ZonePartition {
        ZonePartition::new(
            parts
                .iter()
                .map(|(t, d)| Zone::new(t.iter().copied().collect::<BTreeSet<_>>(), d.iter().copied().collect()))
                .collect(),
            nt,
            nd,
        )
    }

    #[test]
    fn identical_pair_features() {
        let h = hist(&[1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 5.0, 0.0, 1.0]);
        let mut t = track_with(&[(0.1, 0.1), (0.2, 0.2), (0.3, 0.3)]);
        t.appearance_history = vec![h.clone()];
        let d = det_at(0.3, 0.3).with_appearance(h);
        let pf = feature_vector(&t, &d, &FeatureConfig::default());
        assert!(!pf.missing_appearance);
        assert_eq!(&pf.f[..8], &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        // Straight history plus a coincident point: zero curvature.
        assert_eq!(pf.f[8], 0.0);
    }

    #[test]
    fn unit_box_corner_features() {
        let t = track_with(&[(0.0, 0.0)]);
        let pf = feature_vector(&t, &det_at(1.0, 1.0), &FeatureConfig::default());
        assert_eq!(&pf.f[..7], &[1.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
        assert!(pf.missing_appearance);
        assert_eq!(pf.f[slot::G1], FeatureConfig::default().g1_neutral);
    }

    #[test]
    fn distance_slots_are_duplicated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let t = track_with(&[(rng.random(), rng.random())]);
            let f = feature_vector(&t, &det_at(rng.random(), rng.random()), &FeatureConfig::default()).f;
            assert_eq!(f[1], f[5]);
            assert_eq!(f[2], f[6]);
            assert!(f.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn g1_closed_form_kl() {
        let uniform = Histogram::uniform(8);
        let mut raw = vec![0.0; 24];
        raw[0] = 1.0;
        raw[8] = 1.0;
        raw[16] = 1.0;
        let peaked = Histogram::new(&raw, 8).unwrap();
        // Independent evaluation of Σ p log(p/q) with the same smoothing.
        let eps = 1e-6_f64;
        let denom = 1.0 + 8.0 * eps;
        let p = (1.0 / 8.0 + eps) / denom;
        let q_hot = (1.0 + eps) / denom;
        let q_cold = eps / denom;
        let per_channel = p * (p / q_hot).ln() + 7.0 * p * (p / q_cold).ln();
        let expected = 3.0 * per_channel;
        let direct = kl_divergence(&uniform, &peaked).unwrap();
        assert!((direct - expected).abs() < 1e-9, "{direct} vs {expected}");

        let cfg = FeatureConfig { kl_cap: 100.0, ..FeatureConfig::default() };
        let mut t = track_with(&[(0.5, 0.5)]);
        t.appearance_history = vec![peaked];
        let d = det_at(0.5, 0.5).with_appearance(uniform);
        let g1 = appearance_distance_g1(&d, &t, &cfg).unwrap();
        assert!((g1 - expected / 100.0).abs() < 1e-12);
        // The default cap saturates.
        assert_eq!(appearance_distance_g1(&d, &t, &FeatureConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn g1_is_mean_over_instances() {
        let cfg = FeatureConfig { kl_cap: 1e6, ..FeatureConfig::default() };
        let a = hist(&[1.0, 2.0, 1.0, 2.0, 1.0, 1.0]);
        let b = hist(&[3.0, 1.0, 1.0, 1.0, 1.0, 4.0]);
        let c = hist(&[1.0, 1.0, 1.0, 9.0, 1.0, 1.0]);
        let det = hist(&[2.0, 2.0, 1.0, 3.0, 2.0, 1.0]);
        let mut t = track_with(&[(0.5, 0.5)]);
        t.appearance_history = vec![a.clone(), b.clone(), c.clone()];
        let d = det_at(0.5, 0.5).with_appearance(det.clone());
        let mean = (kl_divergence(&det, &a).unwrap() + kl_divergence(&det, &b).unwrap() + kl_divergence(&det, &c).unwrap()) / 3.0;
        let g1 = appearance_distance_g1(&d, &t, &cfg).unwrap() * cfg.kl_cap;
        assert!((g1 - mean).abs() < 1e-9);
        assert!(mean > 0.0);
    }

    #[test]
    fn g1_missing_appearance() {
        let t = track_with(&[(0.5, 0.5)]);
        let d = det_at(0.5, 0.5).with_appearance(Histogram::uniform(2));
        assert_eq!(
            appearance_distance_g1(&d, &t, &FeatureConfig::default()),
            Err(FeatureError::MissingAppearance)
        );
    }

    #[test]
    fn curvature_on_circle_is_inverse_radius() {
        let r = 0.05;
        let c = (0.5, 0.5);
        let pts: Vec<(f64, f64)> = (0..6)
            .map(|k| {
                let a = 0.3 * k as f64;
                (c.0 + r * a.cos(), c.1 + r * a.sin())
            })
            .collect();
        let t = track_with(&pts[..5]);
        let d = det_at(pts[5].0, pts[5].1);
        let k = motion_curvature(&d, &t, 1.0, 0.0);
        assert!((k - 1.0 / r).abs() < 1e-9, "{k}");
        let g2 = motion_coherence_g2(&d, &t, &FeatureConfig { g2_radius: 1.0, g2_spacing: 0.0, ..FeatureConfig::default() });
        assert!((g2 - 20.0 / 50.0).abs() < 1e-9);
    }

    #[test]
    fn spacing_suppresses_step_jitter() {
        // Short steps along x with alternating 1e-3 offsets.
        let pts: Vec<(f64, f64)> = (0..30).map(|k| (0.2 + 0.004 * k as f64, 0.5 + if k % 2 == 0 { 1e-3 } else { -1e-3 })).collect();
        let t = track_with(&pts);
        let d = det_at(0.2 + 0.004 * 30.0, 0.501);
        let raw = motion_curvature(&d, &t, 0.1, 0.0);
        let thinned = motion_curvature(&d, &t, 0.1, 0.02);
        assert!(raw > 100.0, "{raw}");
        assert!(thinned < 20.0, "{thinned}");
    }

    #[test]
    fn curvature_fallbacks() {
        let straight = track_with(&[(0.1, 0.1), (0.2, 0.15), (0.3, 0.2)]);
        assert!(motion_curvature(&det_at(0.4, 0.25), &straight, 1.0, 0.02) < 1e-9);
        let single = track_with(&[(0.1, 0.1)]);
        assert_eq!(motion_curvature(&det_at(0.3, 0.9), &single, 1.0, 0.02), 0.0);
    }

    #[test]
    fn mask_cases() {
        // t0,d0 simple zone; t1 with d1,d2 complex; d3 alone complex.
        let p = zones(&[(&[0], &[0]), (&[1], &[1, 2]), (&[], &[3])], 2, 4);
        let pol = MaskPolicy::Selective;
        assert_eq!(mask_vector(Slot::ActiveTrack(0), Slot::Detection(0), &p, pol), simple_mask());
        assert_eq!(mask_vector(Slot::ActiveTrack(1), Slot::Detection(3), &p, pol), complex_mask());
        assert_eq!(mask_vector(Slot::ActiveTrack(0), Slot::Detection(1), &p, pol), forbidden_mask());
        assert_eq!(mask_vector(Slot::ActiveTrack(1), Slot::Detection(0), &p, pol), forbidden_mask());
        assert_eq!(mask_vector(Slot::OccludedTrack(0), Slot::Detection(2), &p, pol), complex_mask());
        assert_eq!(mask_vector(Slot::OccludedTrack(0), Slot::Detection(0), &p, pol), forbidden_mask());
        assert_eq!(mask_vector(Slot::DummyIn(2), Slot::DummyOut(0), &p, pol), bias_mask());
        assert_eq!(mask_vector(Slot::DummyIn(2), Slot::Detection(1), &p, pol), forbidden_mask());
        assert_eq!(
            mask_vector(Slot::ActiveTrack(1), Slot::Detection(3), &p, MaskPolicy::SimpleOnly),
            simple_mask()
        );
        assert_eq!(
            mask_vector(Slot::ActiveTrack(0), Slot::Detection(0), &p, MaskPolicy::AllFeatures),
            complex_mask()
        );
    }

    #[test]
    fn hand_assembled_single_pair() {
        let t = track_with(&[(0.2, 0.3)]);
        let d = det_at(0.5, 0.1);
        let p = zones(&[(&[0], &[0])], 1, 1);
        let mut w = WeightVector::zeros();
        w.0[slot::BIAS] = 0.5;
        w.0[slot::DIST_X] = 1.0;
        w.0[slot::DIST_Y] = 1.0;
        let inst = build_instance(&[&t], &[], &[d], &p, &w, &FeatureConfig::default(), MaskPolicy::Selective);
        assert_eq!(inst.size(), 2);
        let a = (0.2f64 - 0.5).abs() + (0.3f64 - 0.1).abs();
        // rows: active, birth ; cols: detection, leave
        assert_eq!(inst.costs.get(0, 0), Cost::Finite(a));
        assert_eq!(inst.costs.get(0, 1), Cost::Finite(0.5));
        assert_eq!(inst.costs.get(1, 0), Cost::Finite(0.5));
        assert_eq!(inst.costs.get(1, 1), Cost::Finite(0.5));
        assert!(check_costs(&inst, &w));
    }

    #[test]
    fn forced_birth_and_forced_occlusion() {
        let mut w = WeightVector::zeros();
        w.0[slot::BIAS] = 0.7;
        let d = det_at(0.5, 0.5);
        let p = zones(&[(&[], &[0])], 0, 1);
        let inst = build_instance(&[], &[], std::slice::from_ref(&d), &p, &w, &FeatureConfig::default(), MaskPolicy::Selective);
        let r = assign::solve(&inst.costs).unwrap();
        assert_eq!(inst.cols[r.y[0]], Slot::Detection(0));
        assert_eq!(r.total_cost, 0.7);

        let occ = track_with(&[(0.5, 0.5)]);
        let inst = build_instance(&[], &[&occ], &[], &ZonePartition::default(), &w, &FeatureConfig::default(), MaskPolicy::Selective);
        let r = assign::solve(&inst.costs).unwrap();
        assert_eq!(inst.cols[r.y[0]], Slot::OccludedTrack(0));
        assert_eq!(r.total_cost, 0.7);
    }

    fn random_frame(rng: &mut ChaCha8Rng, na: usize, no: usize, nd: usize) -> (Vec<Track>, Vec<Track>, Vec<Detection>) {
        let mk = |rng: &mut ChaCha8Rng| track_with(&[(rng.random(), rng.random())]);
        let active = (0..na).map(|_| mk(rng)).collect();
        let occluded = (0..no).map(|_| mk(rng)).collect();
        let dets = (0..nd).map(|_| det_at(rng.random(), rng.random())).collect();
        (active, occluded, dets)
    }

    #[test]
    fn partitioned_solve_matches_single_call() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let mut w = WeightVector::zeros();
        w.0 = [0.3, 1.0, 1.2, 2.0, 2.0, 0.8, 0.9, 0.5, 0.2];
        for _ in 0..50 {
            let (na, no, nd) = (rng.random_range(0..6), rng.random_range(0..3), rng.random_range(0..6));
            if na + no + nd == 0 {
                continue;
            }
            let (a, o, d) = random_frame(&mut rng, na, no, nd);
            let ar: Vec<&Track> = a.iter().collect();
            let or: Vec<&Track> = o.iter().collect();
            let pos: Vec<Point> = ar.iter().map(|t| t.position()).collect();
            let dpos: Vec<Point> = d.iter().map(|d| d.pos).collect();
            let part = crate::cluster::divide(&pos, &dpos, &w, &Default::default());
            let part = if na + nd == 0 { ZonePartition::new(vec![], 0, 0) } else { part };
            let inst = build_instance(&ar, &or, &d, &part, &w, &FeatureConfig::default(), MaskPolicy::Selective);
            assert!(check_costs(&inst, &w));
            let whole = assign::solve(&inst.costs).unwrap();
            let split = solve_partitioned(&inst, &part).unwrap();
            assert!((whole.total_cost - split.total_cost).abs() < 1e-9);
            // No active track reaches a detection of another zone.
            for (row, &col) in whole.y.iter().enumerate() {
                if let (Slot::ActiveTrack(t), Slot::Detection(j)) = (inst.rows[row], inst.cols[col]) {
                    assert_eq!(part.zone_of_track(t), part.zone_of_detection(j));
                }
            }
        }
    }
}
