use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{LearnError, TrainingSample};
use crate::model::{Annotation, BBox, Detection, Histogram, Point, SceneBounds, Sequence};
use crate::track::{Tracker, TrackerConfig};
use crate::WeightVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// Probability of dropping each ground-truth box.
    pub miss_rate: f64,
    /// Mean number of uniform false detections per frame.
    pub false_rate: f64,
    /// Standard deviation of the position jitter, normalized units.
    pub jitter: f64,
}

impl NoiseConfig {
    pub const NONE: NoiseConfig = NoiseConfig {
        miss_rate: 0.0,
        false_rate: 0.0,
        jitter: 0.0,
    };
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            miss_rate: 0.05,
            false_rate: 0.05,
            jitter: 0.002,
        }
    }
}

/// A detection with the ground-truth identity it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyDetection {
    pub detection: Detection,
    pub source: Option<u64>,
}

const FALLBACK_BOX: (f64, f64) = (40.0, 80.0);

/// Drops, jitters and pollutes one frame of annotations.
pub fn corrupt_frame(frame: u64, boxes: &[&Annotation], bounds: &SceneBounds, noise: &NoiseConfig, bins: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<NoisyDetection> {
    let mut out = Vec::with_capacity(boxes.len() + 1);
    let jitter = (noise.jitter > 0.0).then(|| Normal::new(0.0, noise.jitter).expect("finite jitter"));
    for a in boxes {
        if noise.miss_rate > 0.0 && rng.random::<f64>() < noise.miss_rate {
            continue;
        }
        let (cx, cy) = a.bbox.center();
        let mut pos = bounds.normalize(cx, cy);
        if let Some(n) = &jitter {
            pos = Point::new((pos.x + n.sample(rng)).clamp(0.0, 1.0), (pos.y + n.sample(rng)).clamp(0.0, 1.0));
        }
        let (px, py) = bounds.denormalize(pos);
        let mut d = Detection::new(frame, pos, a.bbox.recentered(px, py), a.confidence).expect("normalized position");
        d.appearance = a.appearance.clone();
        out.push(NoisyDetection { detection: d, source: Some(a.id) });
    }
    let n_false = if noise.false_rate > 0.0 {
        Poisson::new(noise.false_rate).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    let (w, h) = if boxes.is_empty() {
        FALLBACK_BOX
    } else {
        let n = boxes.len() as f64;
        (boxes.iter().map(|a| a.bbox.width).sum::<f64>() / n, boxes.iter().map(|a| a.bbox.height).sum::<f64>() / n)
    };
    for _ in 0..n_false {
        let pos = Point::new(rng.random(), rng.random());
        let (px, py) = bounds.denormalize(pos);
        let mut d = Detection::new(frame, pos, BBox::new(px - w / 2.0, py - h / 2.0, w, h), 0.5).expect("unit square");
        if let Some(b) = bins {
            let raw: Vec<f64> = (0..3 * b).map(|_| rng.random::<f64>()).collect();
            d.appearance = Some(Histogram::new(&raw, b).expect("positive bins"));
        }
        out.push(NoisyDetection { detection: d, source: None });
    }
    out.shuffle(rng);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    pub samples: Vec<TrainingSample>,
    pub boxes_total: usize,
    pub boxes_dropped: usize,
    pub false_added: usize,
}

/// Replays each sequence through the tracker with ground-truth associations,
/// recording one sample per frame that has tracks or detections.
pub fn make_training_set(sequences: &[Sequence], noise: &NoiseConfig, tracker: &TrackerConfig, seed: u64) -> Result<TrainingSet, LearnError> {
    if !(0.0..=1.0).contains(&noise.miss_rate) || !(noise.false_rate >= 0.0) || !(noise.jitter >= 0.0) {
        return Err(LearnError::BadSample(format!("invalid noise {noise:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = TrainingSet {
        samples: Vec::new(),
        boxes_total: 0,
        boxes_dropped: 0,
        false_added: 0,
    };
    for seq in sequences {
        let Some((first, last)) = seq.frame_range() else { continue };
        let bins = seq.annotations.iter().find_map(|a| a.appearance.as_ref().map(Histogram::per_channel));
        let frames = seq.frames();
        let mut replay = Tracker::new(WeightVector::zeros(), *tracker);
        // Tracker id → ground-truth id (None for clutter-born tracks).
        let mut source_of: HashMap<u64, Option<u64>> = HashMap::new();
        for f in first..=last {
            let boxes = frames.get(&f).map(Vec::as_slice).unwrap_or(&[]);
            let noisy = corrupt_frame(f, boxes, &seq.bounds, noise, bins, &mut rng);
            let kept = noisy.iter().filter(|d| d.source.is_some()).count();
            set.boxes_total += boxes.len();
            set.boxes_dropped += boxes.len() - kept;
            set.false_added += noisy.len() - kept;
            let dets: Vec<Detection> = noisy.iter().map(|d| d.detection.clone()).collect();
            let prepared = replay.prepare(f, &dets).expect("consecutive frames");
            let det_of = |track: usize| {
                let src = source_of[&replay.tracks[track].id];
                src.and_then(|g| noisy.iter().position(|d| d.source == Some(g)))
            };
            let active_gt: Vec<Option<usize>> = prepared.active.iter().map(|&t| det_of(t)).collect();
            let occluded_gt: Vec<Option<usize>> = prepared.occluded.iter().map(|&t| det_of(t)).collect();
            let sample = TrainingSample::new(f, prepared.features.clone(), active_gt, occluded_gt)?;
            let pairs = sample.gt_pairs();
            let outcome = replay.commit_pairs(&prepared, &pairs);
            for (d, id) in outcome.born {
                source_of.insert(id, noisy[d].source);
            }
            if sample.size() > 0 {
                set.samples.push(sample);
            }
        }
    }
    Ok(set)
}

/// Layout check shared by tests.
#[cfg(test)]
pub(crate) fn pairs_match_layout(sample: &TrainingSample) -> bool {
    use crate::featcost;
    use crate::model::Slot;
    let (rows, cols) = featcost::layout(sample.features.n_active, sample.features.n_occluded, sample.features.n_detections);
    let y = sample.gt_permutation();
    let mut seen = vec![false; y.len()];
    y.iter().all(|&c| !std::mem::replace(&mut seen[c], true))
        && sample.gt_pairs().iter().zip(&rows).all(|((r, _), row)| r == row)
        && sample.gt_pairs().iter().all(|(r, c)| match (r, c) {
            (Slot::DummyIn(d), Slot::Detection(e)) => d == e,
            _ => cols.contains(c),
        })
}
