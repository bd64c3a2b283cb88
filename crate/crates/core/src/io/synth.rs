//! Seeded synthetic sequences: walkers reflecting off the scene borders,
//! crossings and per-target color histograms.
//!
//! A walker is defined by an anchor (a frame and a position) and one velocity
//! per frame step; with `turn_rate = 0` all steps are equal. Its position at
//! frame `t` is the anchor moved by the summed steps between `t_anchor` and
//! `t`, folded back into the scene. The first crossing of a walker becomes
//! its anchor; each later one spreads a constant correction over the steps
//! since the previous crossing so the path passes through both points.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{detection_rows, format_gt_sidecar, format_mot, format_sidecar, read_text, sequence_rows, write_text, IoError};
use crate::learn::{corrupt_frame, NoiseConfig};
use crate::model::{Annotation, BBox, Detection, Histogram, Point, SceneBounds, Sequence};

/// Two targets pass through `point` (normalized) at `frame`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing {
    pub a: usize,
    pub b: usize,
    pub frame: u64,
    pub point: Point,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_targets: usize,
    /// Frames are numbered `1..=n_frames`.
    pub n_frames: u64,
    pub bounds: SceneBounds,
    /// Speed range in normalized units per frame.
    pub speed: (f64, f64),
    /// Per-frame probability that a walker draws a new heading and speed.
    pub turn_rate: f64,
    /// Mean box size in pixels; each target varies it by up to ±20%.
    pub box_size: (f64, f64),
    /// Walkers reflect inside `[margin, 1 − margin]²`.
    pub margin: f64,
    pub crossings: Vec<Crossing>,
    /// Extra crossings at random frames, each between the two closest
    /// targets that have not crossed within `crossing_gap` frames.
    pub random_crossings: usize,
    pub crossing_gap: u64,
    /// Both walkers leave every crossing on freshly drawn headings.
    pub turn_at_crossing: bool,
    /// Bins per color channel; 0 disables appearance.
    pub bins: usize,
    /// Mass of the dominant bin in each channel.
    pub peak: f64,
    /// Uniform per-frame perturbation added to every raw bin.
    pub appearance_noise: f64,
    pub noise: NoiseConfig,
    /// Two targets closer than this (normalized) hide the one farther from
    /// the camera, i.e. with the smaller y. Hidden targets stay in the
    /// ground truth but get no detection. 0 disables.
    pub occlusion_radius: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_targets: 10,
            n_frames: 100,
            bounds: SceneBounds::default(),
            speed: (0.002, 0.006),
            turn_rate: 0.0,
            box_size: (40.0, 80.0),
            margin: 0.02,
            crossings: Vec::new(),
            random_crossings: 0,
            crossing_gap: 30,
            turn_at_crossing: false,
            bins: 8,
            peak: 0.6,
            appearance_noise: 0.05,
            noise: NoiseConfig::default(),
            occlusion_radius: 0.0,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_frames == 0 {
            return Err("n_frames must be positive".into());
        }
        if !(self.speed.0 >= 0.0 && self.speed.1 >= self.speed.0) {
            return Err("speed range must satisfy 0 <= min <= max".into());
        }
        if !(self.box_size.0 > 0.0 && self.box_size.1 > 0.0) {
            return Err("box size must be positive".into());
        }
        if !(0.0..0.5).contains(&self.margin) {
            return Err("margin must lie in [0, 0.5)".into());
        }
        if !(0.0..=1.0).contains(&self.turn_rate) {
            return Err("turn_rate must lie in [0, 1]".into());
        }
        if !(self.occlusion_radius >= 0.0) {
            return Err("occlusion_radius must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&self.peak) || !(self.appearance_noise >= 0.0) {
            return Err("peak must lie in [0, 1] and appearance_noise must be non-negative".into());
        }
        if self.bins > 0 && self.n_targets > self.bins.pow(3) {
            return Err(format!("{} bins cannot give {} distinct palettes", self.bins, self.n_targets));
        }
        let mut used = std::collections::BTreeSet::new();
        for c in &self.crossings {
            if c.a == c.b || c.a >= self.n_targets || c.b >= self.n_targets {
                return Err(format!("crossing {} × {} names invalid targets", c.a, c.b));
            }
            if !used.insert((c.a, c.frame)) || !used.insert((c.b, c.frame)) {
                return Err(format!("target crosses twice at frame {}", c.frame));
            }
            if !(1..=self.n_frames).contains(&c.frame) {
                return Err(format!("crossing frame {} is outside the sequence", c.frame));
            }
            let inside = |v: f64| (self.margin..=1.0 - self.margin).contains(&v);
            if !inside(c.point.x) || !inside(c.point.y) {
                return Err("crossing point must lie inside the margins".into());
            }
        }
        if self.crossing_gap == 0 {
            return Err("crossing_gap must be at least 1".into());
        }
        if self.random_crossings > 0 && self.n_targets < 2 {
            return Err("random crossings need at least two targets".into());
        }
        Ok(())
    }

    /// Parses `key = value` lines. `crossing = a b frame x y` may repeat.
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let mut s = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let bad = |column: usize, reason: String| IoError::Parse { line, column, reason };
            let (key, value) = content.split_once('=').ok_or_else(|| bad(1, format!("expected `key = value`, found `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let nums = || -> Result<Vec<f64>, IoError> {
                value
                    .split_whitespace()
                    .map(|v| v.parse::<f64>().map_err(|_| bad(2, format!("bad number `{v}` for `{key}`"))))
                    .collect()
            };
            let one = || -> Result<f64, IoError> {
                match nums()?.as_slice() {
                    [v] => Ok(*v),
                    _ => Err(bad(2, format!("`{key}` takes one value"))),
                }
            };
            let count = || -> Result<u64, IoError> { value.parse().map_err(|_| bad(2, format!("`{key}` needs a non-negative integer"))) };
            match key {
                "n_targets" => s.n_targets = count()? as usize,
                "n_frames" => s.n_frames = count()?,
                "scene_bounds" => match nums()?.as_slice() {
                    &[a, b, c, d] => s.bounds = SceneBounds::new(a, b, c, d).map_err(|e| bad(2, e.to_string()))?,
                    _ => return Err(bad(2, "scene_bounds needs four numbers".into())),
                },
                "speed_min" => s.speed.0 = one()?,
                "speed_max" => s.speed.1 = one()?,
                "turn_rate" => s.turn_rate = one()?,
                "box_width" => s.box_size.0 = one()?,
                "box_height" => s.box_size.1 = one()?,
                "margin" => s.margin = one()?,
                "random_crossings" => s.random_crossings = count()? as usize,
                "crossing_gap" => s.crossing_gap = count()?,
                "turn_at_crossing" => {
                    s.turn_at_crossing = match value {
                        "true" | "1" => true,
                        "false" | "0" => false,
                        _ => return Err(bad(2, "turn_at_crossing takes true or false".into())),
                    }
                }
                "crossing" => match nums()?.as_slice() {
                    &[a, b, f, x, y] if [a, b, f].iter().all(|v| *v >= 0.0 && v.fract() == 0.0) => s.crossings.push(Crossing {
                        a: a as usize,
                        b: b as usize,
                        frame: f as u64,
                        point: Point::new(x, y),
                    }),
                    _ => return Err(bad(2, "crossing needs `a b frame x y`".into())),
                },
                "bins" => s.bins = count()? as usize,
                "peak" => s.peak = one()?,
                "appearance_noise" => s.appearance_noise = one()?,
                "miss_rate" => s.noise.miss_rate = one()?,
                "false_rate" => s.noise.false_rate = one()?,
                "jitter" => s.noise.jitter = one()?,
                "occlusion_radius" => s.occlusion_radius = one()?,
                "seed" => s.seed = count()?,
                _ => return Err(bad(1, format!("unknown key `{key}`"))),
            }
        }
        s.validate().map_err(|reason| IoError::Parse { line: 0, column: 0, reason })?;
        Ok(s)
    }

    pub fn read(path: &Path) -> Result<Self, IoError> {
        Self::parse(&read_text(path)?)
    }
}

/// Folds `x` into `[lo, hi]` by reflection.
fn reflect(x: f64, lo: f64, hi: f64) -> f64 {
    let len = hi - lo;
    if len <= 0.0 {
        return lo;
    }
    let u = (x - lo).rem_euclid(2.0 * len);
    lo + if u > len { 2.0 * len - u } else { u }
}

#[derive(Debug, Clone)]
struct Walker {
    anchor_frame: u64,
    anchor: Point,
    /// `steps[k]` moves the walker from frame `k + 1` to `k + 2`.
    steps: Vec<(f64, f64)>,
    size: (f64, f64),
    /// Frames of the crossings applied so far, increasing.
    pins: Vec<u64>,
}

/// The unfolded coordinate closest to `u` that folds to `p`.
fn nearest_image(u: f64, p: f64, lo: f64, hi: f64) -> f64 {
    let period = 2.0 * (hi - lo);
    if period <= 0.0 {
        return u;
    }
    [p - lo, lo - p]
        .into_iter()
        .map(|base| {
            let k = ((u - lo - base) / period).round();
            lo + base + k * period
        })
        .min_by(|a, b| (a - u).abs().total_cmp(&(b - u).abs()))
        .unwrap()
}

impl Walker {
    /// Unfolded displacement from frame 1.
    fn offset(&self, frame: u64) -> (f64, f64) {
        self.steps[..frame as usize - 1].iter().fold((0.0, 0.0), |(x, y), s| (x + s.0, y + s.1))
    }

    fn unfolded(&self, frame: u64) -> (f64, f64) {
        let (a, b) = (self.offset(self.anchor_frame), self.offset(frame));
        (self.anchor.x + b.0 - a.0, self.anchor.y + b.1 - a.1)
    }

    fn position(&self, frame: u64, margin: f64) -> Point {
        let (x, y) = self.unfolded(frame);
        Point::new(reflect(x, margin, 1.0 - margin), reflect(y, margin, 1.0 - margin))
    }

    /// Makes the walker pass through `p` at `frame`, which must come after
    /// every earlier pin.
    fn pin(&mut self, frame: u64, p: Point, margin: f64) {
        match self.pins.last() {
            None => {
                self.anchor_frame = frame;
                self.anchor = p;
            }
            Some(&f0) => {
                let (ux, uy) = self.unfolded(frame);
                let n = (frame - f0) as f64;
                let dx = (nearest_image(ux, p.x, margin, 1.0 - margin) - ux) / n;
                let dy = (nearest_image(uy, p.y, margin, 1.0 - margin) - uy) / n;
                for s in &mut self.steps[f0 as usize - 1..frame as usize - 1] {
                    *s = (s.0 + dx, s.1 + dy);
                }
            }
        }
        self.pins.push(frame);
    }

    /// Index range of the constant-velocity run starting at the step out of
    /// `frame`.
    fn run_from(&self, frame: u64) -> std::ops::Range<usize> {
        let start = (frame as usize - 1).min(self.steps.len() - 1);
        let v = self.steps[start];
        let len = self.steps[start..].iter().take_while(|s| **s == v).count();
        start..start + len
    }
}

fn cosine(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 * b.0 + a.1 * b.1) / (a.0.hypot(a.1) * b.0.hypot(b.1)).max(1e-300)
}

fn rotate(steps: &mut [(f64, f64)]) {
    for s in steps {
        *s = (-s.1, s.0);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Synthetic {
    pub gt: Sequence,
    pub detections: BTreeMap<u64, Vec<Detection>>,
    /// Source target of each detection, `None` for clutter.
    pub sources: BTreeMap<u64, Vec<Option<u64>>>,
    /// Every crossing that took place, scripted ones first in frame order.
    pub crossings: Vec<Crossing>,
}

impl Synthetic {
    pub fn gt_text(&self) -> String {
        format_mot(&sequence_rows(&self.gt))
    }

    pub fn detection_text(&self) -> String {
        format_mot(&detection_rows(&self.detections))
    }

    pub fn sidecar_text(&self) -> String {
        format_sidecar(&self.detections)
    }

    /// Writes `gt.txt`, `det.txt`, the two appearance sidecars
    /// `gt_appearance.csv` and `det_appearance.csv`, `crossings.txt` and a
    /// `scene.cfg` holding the scene bounds into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), IoError> {
        std::fs::create_dir_all(dir).map_err(|source| IoError::Io { path: dir.to_owned(), source })?;
        write_text(&dir.join("gt.txt"), &self.gt_text())?;
        write_text(&dir.join("det.txt"), &self.detection_text())?;
        let sidecar = self.sidecar_text();
        if !sidecar.is_empty() {
            write_text(&dir.join("det_appearance.csv"), &sidecar)?;
            write_text(&dir.join("gt_appearance.csv"), &format_gt_sidecar(&self.gt))?;
        }
        let mut info = String::new();
        for c in &self.crossings {
            writeln!(info, "crossing = {} {} {} {:?} {:?}", c.a, c.b, c.frame, c.point.x, c.point.y).unwrap();
        }
        write_text(&dir.join("crossings.txt"), &info)?;
        let b = &self.gt.bounds;
        write_text(&dir.join("scene.cfg"), &format!("scene_bounds = {:?} {:?} {:?} {:?}\n", b.x_min, b.y_min, b.x_max, b.y_max))
    }
}

/// Raw (unnormalized) dominant-bin palettes, one per target.
fn palettes(n: usize, bins: usize, peak: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    if bins == 0 {
        return Vec::new();
    }
    let rest = if bins > 1 { (1.0 - peak) / (bins - 1) as f64 } else { 0.0 };
    index::sample(rng, bins.pow(3), n)
        .into_iter()
        .map(|code| {
            let mut raw = vec![rest; 3 * bins];
            for c in 0..3 {
                let peak_bin = code / bins.pow(c as u32) % bins;
                raw[c * bins + peak_bin] = if bins > 1 { peak } else { 1.0 };
            }
            raw
        })
        .collect()
}

/// Generates a sequence. Panics if `spec` fails [`SynthSpec::validate`].
pub fn synth_sequence(spec: &SynthSpec) -> Synthetic {
    if let Err(e) = spec.validate() {
        panic!("invalid synthetic spec: {e}");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let m = spec.margin;
    let heading = |rng: &mut ChaCha8Rng| {
        let angle = rng.random::<f64>() * std::f64::consts::TAU;
        let speed = rng.random_range(spec.speed.0..=spec.speed.1);
        (speed * angle.cos(), speed * angle.sin())
    };
    let mut walkers: Vec<Walker> = (0..spec.n_targets)
        .map(|_| {
            let mut v = heading(&mut rng);
            let mut steps = vec![v];
            for _ in 1..spec.n_frames.max(2) - 1 {
                if spec.turn_rate > 0.0 && rng.random::<f64>() < spec.turn_rate {
                    v = heading(&mut rng);
                }
                steps.push(v);
            }
            let scale = rng.random_range(0.8..=1.2);
            Walker {
                anchor_frame: 1,
                anchor: Point::new(rng.random_range(m..=1.0 - m), rng.random_range(m..=1.0 - m)),
                steps,
                size: (spec.box_size.0 * scale, spec.box_size.1 * scale),
                pins: Vec::new(),
            }
        })
        .collect();

    // Scripted crossings come first at equal frames; `None` is a random one.
    let mut events: Vec<(u64, Option<Crossing>)> = spec.crossings.iter().map(|c| (c.frame, Some(*c))).collect();
    let lo = 1 + spec.n_frames / 10;
    let hi = (spec.n_frames * 9 / 10).max(lo);
    events.extend((0..spec.random_crossings).map(|_| (rng.random_range(lo..=hi), None)));
    events.sort_by_key(|(f, c)| (*f, c.is_none()));
    let mut crossings = Vec::new();
    for (f, event) in events {
        let c = match event {
            Some(c) => c,
            None => {
                let near = |g: u64| g.abs_diff(f) < spec.crossing_gap;
                let busy = |t: usize, walkers: &[Walker]| {
                    walkers[t].pins.iter().any(|&g| near(g)) || spec.crossings.iter().any(|c| (c.a == t || c.b == t) && near(c.frame))
                };
                let eligible: Vec<usize> = (0..walkers.len()).filter(|&t| !busy(t, &walkers)).collect();
                let pos: Vec<Point> = eligible.iter().map(|&t| walkers[t].position(f, m)).collect();
                let mut best: Option<(f64, usize, usize)> = None;
                for i in 0..eligible.len() {
                    for j in i + 1..eligible.len() {
                        let d = pos[i].distance(&pos[j]);
                        if best.is_none_or(|(bd, _, _)| d < bd) {
                            best = Some((d, i, j));
                        }
                    }
                }
                let Some((_, i, j)) = best else { continue };
                let point = Point::new((pos[i].x + pos[j].x) / 2.0, (pos[i].y + pos[j].y) / 2.0);
                Crossing { a: eligible[i], b: eligible[j], frame: f, point }
            }
        };
        let fresh = (walkers[c.a].pins.is_empty(), walkers[c.b].pins.is_empty());
        walkers[c.a].pin(f, c.point, m);
        walkers[c.b].pin(f, c.point, m);
        if spec.turn_at_crossing {
            for t in [c.a, c.b] {
                let v = heading(&mut rng);
                let run = walkers[t].run_from(f);
                walkers[t].steps[run].fill(v);
            }
        }
        // Keep the pair from moving in parallel on either side of the point.
        let (a, b) = (&walkers[c.a], &walkers[c.b]);
        let out = cosine(a.steps[a.run_from(f).start], b.steps[b.run_from(f).start]) > 0.5;
        let into = f > 1 && cosine(a.steps[f as usize - 2], b.steps[f as usize - 2]) > 0.5;
        if out {
            let run = walkers[c.b].run_from(f);
            rotate(&mut walkers[c.b].steps[run]);
        }
        if into {
            match fresh {
                (_, true) => rotate(&mut walkers[c.b].steps[..f as usize - 1]),
                (true, false) => rotate(&mut walkers[c.a].steps[..f as usize - 1]),
                _ => {}
            }
        }
        crossings.push(c);
    }

    let palette = palettes(spec.n_targets, spec.bins, spec.peak, &mut rng);
    let mut annotations = Vec::with_capacity(spec.n_targets * spec.n_frames as usize);
    let mut detections = BTreeMap::new();
    let mut sources = BTreeMap::new();
    for f in 1..=spec.n_frames {
        let start = annotations.len();
        let positions: Vec<Point> = walkers.iter().map(|w| w.position(f, m)).collect();
        for (id, w) in walkers.iter().enumerate() {
            let (px, py) = spec.bounds.denormalize(positions[id]);
            let appearance = palette.get(id).map(|base| {
                let raw: Vec<f64> = base.iter().map(|v| v + spec.appearance_noise * rng.random::<f64>()).collect();
                Histogram::new(&raw, spec.bins).expect("non-negative bins")
            });
            annotations.push(Annotation {
                frame: f,
                id: id as u64,
                bbox: BBox::new(px - w.size.0 / 2.0, py - w.size.1 / 2.0, w.size.0, w.size.1),
                confidence: 1.0,
                appearance,
            });
        }
        let hidden = |i: usize| {
            positions
                .iter()
                .enumerate()
                .any(|(j, p)| j != i && p.distance(&positions[i]) < spec.occlusion_radius && (p.y, j) > (positions[i].y, i))
        };
        let boxes: Vec<&Annotation> = annotations[start..].iter().enumerate().filter(|(i, _)| !hidden(*i)).map(|(_, a)| a).collect();
        let bins = (spec.bins > 0).then_some(spec.bins);
        let noisy = corrupt_frame(f, &boxes, &spec.bounds, &spec.noise, bins, &mut rng);
        sources.insert(f, noisy.iter().map(|d| d.source).collect());
        detections.insert(f, noisy.into_iter().map(|d| d.detection).collect());
    }
    Synthetic {
        gt: Sequence::new(spec.bounds, annotations),
        detections,
        sources,
        crossings,
    }
}
