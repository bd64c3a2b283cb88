//! Partitioned versus global assignment on generated frames.
//!
//! A frame with `n` active tracks has `K = n / (1 + β)` zones. A fraction β
//! of them are complex and hold two tracks and one detection; the others are
//! simple with one of each. `occluded_ratio · n` occluded tracks sit at
//! random positions. Zone centers lie on a grid so that cross-zone cells are
//! forbidden, which makes both solvers optimal for the same instance.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::assign::{self, AssignError};
use crate::featcost::{assemble, solve_partitioned, FeatureConfig, FrameFeatures, MaskPolicy};
use crate::model::{AssignmentInstance, BBox, Detection, Histogram, Point, Track, WeightVector, Zone, ZonePartition};
use crate::track::kalman::KalmanState;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub occluded_ratio: f64,
    /// Timed runs per solver; the median is reported.
    pub repeats: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            occluded_ratio: 0.3,
            repeats: 3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchFrame {
    pub instance: AssignmentInstance,
    pub partition: ZonePartition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub beta: f64,
    pub n_occluded: usize,
    pub matrix_side: usize,
    /// Side of the shared complex block.
    pub complex_side: usize,
    pub partitioned: Duration,
    pub global: Duration,
}

impl BenchRow {
    pub fn speedup(&self) -> f64 {
        self.global.as_secs_f64() / self.partitioned.as_secs_f64().max(1e-12)
    }
}

pub const BENCH_WEIGHTS: WeightVector = WeightVector([1.0, 10.0, 10.0, 0.0, 0.0, 5.0, 5.0, 5.0, 1.0]);

fn histogram(rng: &mut ChaCha8Rng) -> Histogram {
    let raw: Vec<f64> = (0..24).map(|_| rng.random::<f64>()).collect();
    Histogram::new(&raw, 8).expect("positive bins")
}

fn track_at(id: u64, p: Point, rng: &mut ChaCha8Rng) -> Track {
    let mut d = Detection::new(0, p, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0).expect("point inside the scene");
    d.appearance = Some(histogram(rng));
    Track::new(id, &d, KalmanState::at_rest(p.x, p.y, 1e-4, 1e-4))
}

/// Builds one frame. Panics unless `0 <= beta <= 1` and `n >= 1`.
pub fn bench_frame(n: usize, beta: f64, config: &BenchConfig) -> BenchFrame {
    assert!(n >= 1 && (0.0..=1.0).contains(&beta), "bench needs n >= 1 and beta in [0, 1]");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ (n as u64).rotate_left(20) ^ beta.to_bits());
    let n_complex = ((beta * n as f64) / (1.0 + beta)).round() as usize;
    let n_complex = n_complex.min(n / 2);
    let n_simple = n - 2 * n_complex;
    let k = n_simple + n_complex;
    let side = (k as f64).sqrt().ceil() as usize;
    let cell = 1.0 / side as f64;
    let mut tracks = Vec::with_capacity(n);
    let mut detections = Vec::with_capacity(k);
    let mut zones = Vec::with_capacity(k);
    let jitter = |rng: &mut ChaCha8Rng, c: f64| c + cell * rng.random_range(-0.05..0.05);
    for z in 0..k {
        let center = Point::new(cell * (z % side) as f64 + cell / 2.0, cell * (z / side) as f64 + cell / 2.0);
        let members = if z < n_complex { 2 } else { 1 };
        let mut ts = BTreeSet::new();
        for _ in 0..members {
            let p = Point::new(jitter(&mut rng, center.x), jitter(&mut rng, center.y));
            ts.insert(tracks.len());
            tracks.push(track_at(tracks.len() as u64, p, &mut rng));
        }
        let p = Point::new(jitter(&mut rng, center.x), jitter(&mut rng, center.y));
        let mut d = Detection::new(1, p, BBox::new(0.0, 0.0, 1.0, 1.0), 1.0).expect("point inside the scene");
        d.appearance = Some(histogram(&mut rng));
        zones.push(Zone::new(ts, BTreeSet::from([detections.len()])));
        detections.push(d);
    }
    let n_occluded = (config.occluded_ratio * n as f64).round() as usize;
    let occluded: Vec<Track> = (0..n_occluded)
        .map(|i| {
            let p = Point::new(rng.random::<f64>(), rng.random::<f64>());
            track_at((n + i) as u64, p, &mut rng)
        })
        .collect();
    let partition = ZonePartition::new(zones, tracks.len(), detections.len());
    let active: Vec<&Track> = tracks.iter().collect();
    let occ: Vec<&Track> = occluded.iter().collect();
    let features = FrameFeatures::compute(&active, &occ, &detections, &FeatureConfig::default());
    let instance = assemble(&features, &partition, &BENCH_WEIGHTS, MaskPolicy::Selective);
    BenchFrame { instance, partition }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

/// Times both solvers on one frame and checks that their costs agree.
pub fn bench_one(n: usize, beta: f64, config: &BenchConfig) -> Result<BenchRow, AssignError> {
    let frame = bench_frame(n, beta, config);
    let repeats = config.repeats.max(1);
    let mut part_times = Vec::with_capacity(repeats);
    let mut global_times = Vec::with_capacity(repeats);
    let mut costs = (0.0, 0.0);
    for _ in 0..repeats {
        let t = Instant::now();
        let p = solve_partitioned(&frame.instance, &frame.partition)?;
        part_times.push(t.elapsed());
        let t = Instant::now();
        let g = assign::solve(&frame.instance.costs)?;
        global_times.push(t.elapsed());
        costs = (p.total_cost, g.total_cost);
    }
    assert!((costs.0 - costs.1).abs() <= 1e-6 * (1.0 + costs.1.abs()), "partitioned cost {} differs from global {}", costs.0, costs.1);
    let complex_side = frame.partition.zones.iter().filter(|z| z.kind == crate::model::ZoneKind::Complex).map(|z| z.tracks.len() + z.detections.len()).sum::<usize>()
        + frame.instance.n_occluded;
    Ok(BenchRow {
        n,
        beta,
        n_occluded: frame.instance.n_occluded,
        matrix_side: frame.instance.size(),
        complex_side,
        partitioned: median(part_times),
        global: median(global_times),
    })
}

pub fn bench(sizes: &[usize], betas: &[f64], config: &BenchConfig) -> Result<Vec<BenchRow>, AssignError> {
    let mut rows = Vec::new();
    for &n in sizes {
        for &beta in betas {
            rows.push(bench_one(n, beta, config)?);
        }
    }
    Ok(rows)
}

pub fn format_report(rows: &[BenchRow]) -> String {
    let mut s = String::from("n,beta,n_occluded,matrix_side,complex_side,partitioned_ms,global_ms,speedup\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{:.3},{:.3},{:.2}\n",
            r.n,
            r.beta,
            r.n_occluded,
            r.matrix_side,
            r.complex_side,
            r.partitioned.as_secs_f64() * 1e3,
            r.global.as_secs_f64() * 1e3,
            r.speedup()
        ));
    }
    s
}
