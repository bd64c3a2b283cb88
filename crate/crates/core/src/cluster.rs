//! Correlation clustering of the track–detection affinity graph.
//!
//! The divide step builds a symmetric signed affinity over active tracks and
//! detections (zero within each type) and partitions it so that the sum of
//! intra-cluster affinities is as large as possible. The approximate solver
//! runs several random-pivot passes on the positive edges, greedily merges
//! clusters while the objective strictly grows, then moves single nodes
//! between clusters until no move helps, and keeps the best candidate.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{slot, Point, WeightVector, Zone, ZonePartition, FEATURE_DIM};
use crate::scalar::Scalar;

/// Largest graph accepted by [`cluster_exact`].
pub const EXACT_MAX: usize = 10;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error("frame has neither tracks nor detections")]
    EmptyFrame,
    #[error("graph with {n} nodes exceeds the exact-enumeration limit {max}")]
    SizeExceeded { n: usize, max: usize },
}

/// Symmetric signed weights; missing edges weigh zero.
pub trait SignedGraph<T: Scalar> {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn weight(&self, i: usize, j: usize) -> T;

    /// Calls `f(j, w)` for every non-zero edge `(i, j)`, `j ≠ i`.
    fn for_each_edge(&self, i: usize, f: &mut dyn FnMut(usize, T));
}

/// Dense symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffinity<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseAffinity<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    /// Panics unless `rows` is square and symmetric.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, row) in rows.iter().enumerate() {
            assert_eq!(row.len(), n, "affinity must be square");
            for (j, &v) in row.iter().enumerate() {
                assert!(v == rows[j][i], "affinity must be symmetric");
                m.data[i * n + j] = v;
            }
        }
        m
    }

    pub fn set(&mut self, i: usize, j: usize, w: T) {
        self.data[i * self.n + j] = w;
        self.data[j * self.n + i] = w;
    }

    /// Same graph with nodes relabeled: node `i` of the result is node
    /// `order[i]` of `self`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out.data[i * self.n + j] = self.data[order[i] * self.n + order[j]];
            }
        }
        out
    }
}

impl<T: Scalar> SignedGraph<T> for DenseAffinity<T> {
    fn len(&self) -> usize {
        self.n
    }

    fn weight(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    fn for_each_edge(&self, i: usize, f: &mut dyn FnMut(usize, T)) {
        let row = &self.data[i * self.n..(i + 1) * self.n];
        for (j, &w) in row.iter().enumerate() {
            if j != i && w != T::zero() {
                f(j, w);
            }
        }
    }
}

/// Adjacency-list graph for large instances.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseAffinity<T> {
    adjacency: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> SparseAffinity<T> {
    pub fn new(n: usize) -> Self {
        Self {
            adjacency: vec![Vec::new(); n],
        }
    }

    /// Adds an undirected edge; callers must not add the same pair twice.
    pub fn add_edge(&mut self, i: usize, j: usize, w: T) {
        if i != j && w != T::zero() {
            self.adjacency[i].push((j, w));
            self.adjacency[j].push((i, w));
        }
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }
}

impl<T: Scalar> SignedGraph<T> for SparseAffinity<T> {
    fn len(&self) -> usize {
        self.adjacency.len()
    }

    fn weight(&self, i: usize, j: usize) -> T {
        self.adjacency[i]
            .iter()
            .find(|(k, _)| *k == j)
            .map(|(_, w)| *w)
            .unwrap_or_else(T::zero)
    }

    fn for_each_edge(&self, i: usize, f: &mut dyn FnMut(usize, T)) {
        for &(j, w) in &self.adjacency[i] {
            f(j, w);
        }
    }
}

/// Cluster label per node; labels are `0..k` in order of first appearance.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Clustering {
    labels: Vec<usize>,
}

impl Clustering {
    pub fn from_labels(raw: &[usize]) -> Self {
        let mut remap = BTreeMap::new();
        let labels = raw
            .iter()
            .map(|l| {
                let next = remap.len();
                *remap.entry(*l).or_insert(next)
            })
            .collect();
        Self { labels }
    }

    pub fn singletons(n: usize) -> Self {
        Self {
            labels: (0..n).collect(),
        }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn cluster_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.cluster_count()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }

    /// Canonical form as a set of sorted member lists, for comparisons that
    /// ignore label order.
    pub fn as_sets(&self) -> BTreeSet<Vec<usize>> {
        self.clusters().into_iter().collect()
    }
}

/// `Σ_{i<j, same cluster} w(i, j)`.
pub fn objective<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G, clustering: &Clustering) -> T {
    let labels = clustering.labels();
    let mut total = T::zero();
    for i in 0..graph.len() {
        graph.for_each_edge(i, &mut |j, w| {
            if j > i && labels[i] == labels[j] {
                total += w;
            }
        });
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterConfig {
    /// Number of pivot orderings tried (the first is deterministic).
    pub candidates: usize,
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            candidates: 5,
            seed: 0,
        }
    }
}

/// Approximate maximum-objective partition.
///
/// Candidate 0 visits pivots by decreasing positive strength (ties by index);
/// the rest use seeded random orders. Each candidate is refined by greedy
/// merging and node moves; the best (first on ties) is returned.
pub fn correlation_cluster<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G, config: &ClusterConfig) -> Clustering {
    let n = graph.len();
    if n == 0 {
        return Clustering { labels: Vec::new() };
    }
    let mut best: Option<(T, Clustering)> = None;
    for candidate in 0..config.candidates.max(1) {
        let order = if candidate == 0 {
            strength_order(graph)
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(candidate as u64));
            order.shuffle(&mut rng);
            order
        };
        let mut clustering = greedy_merge(graph, pivot(graph, &order));
        while let Some(moved) = move_nodes(graph, &clustering, &order) {
            clustering = greedy_merge(graph, moved.labels);
        }
        let score = objective(graph, &clustering);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, clustering));
        }
    }
    best.expect("at least one candidate").1
}

fn strength_order<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G) -> Vec<usize> {
    let strength: Vec<T> = (0..graph.len())
        .map(|i| {
            let mut s = T::zero();
            graph.for_each_edge(i, &mut |_, w| {
                if w > T::zero() {
                    s += w;
                }
            });
            s
        })
        .collect();
    let mut order: Vec<usize> = (0..graph.len()).collect();
    order.sort_by(|&a, &b| {
        strength[b]
            .partial_cmp(&strength[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Sweeps over the nodes in `order`, moving each to the neighbouring cluster (or a new
/// singleton) with the largest strict gain. `None` when nothing moved.
fn move_nodes<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G, clustering: &Clustering, order: &[usize]) -> Option<Clustering> {
    const MAX_SWEEPS: usize = 100;
    let mut labels = clustering.labels.clone();
    let mut size = vec![0usize; labels.iter().max().map_or(0, |m| m + 1)];
    for &l in &labels {
        size[l] += 1;
    }
    let mut moved_any = false;
    for _ in 0..MAX_SWEEPS {
        let mut moved = false;
        for &i in order {
            let own = labels[i];
            let mut links: BTreeMap<usize, T> = BTreeMap::new();
            graph.for_each_edge(i, &mut |j, w| *links.entry(labels[j]).or_insert_with(T::zero) += w);
            let stay = links.get(&own).copied().unwrap_or_else(T::zero);
            // Leaving for a singleton gains `−stay`; joining `c` gains `w(i, c) − stay`.
            let mut best: Option<(usize, T)> = (size[own] > 1 && stay < T::zero()).then_some((usize::MAX, T::zero()));
            for (&c, &w) in &links {
                if c != own && w > stay && best.is_none_or(|(_, b)| w > b) {
                    best = Some((c, w));
                }
            }
            if let Some((target, _)) = best {
                let target = if target == usize::MAX {
                    size.push(0);
                    size.len() - 1
                } else {
                    target
                };
                size[own] -= 1;
                size[target] += 1;
                labels[i] = target;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    moved_any.then(|| Clustering::from_labels(&labels))
}

/// KwikCluster pass: each unclustered pivot absorbs its unclustered positive
/// neighbours.
fn pivot<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G, order: &[usize]) -> Vec<usize> {
    let mut labels = vec![usize::MAX; graph.len()];
    let mut next = 0;
    for &p in order {
        if labels[p] != usize::MAX {
            continue;
        }
        labels[p] = next;
        graph.for_each_edge(p, &mut |j, w| {
            if w > T::zero() && labels[j] == usize::MAX {
                labels[j] = next;
            }
        });
        next += 1;
    }
    labels
}

struct MergeCandidate<T> {
    gain: T,
    a: usize,
    b: usize,
}

impl<T: PartialOrd> PartialEq for MergeCandidate<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: PartialOrd> Eq for MergeCandidate<T> {}

impl<T: PartialOrd> PartialOrd for MergeCandidate<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: PartialOrd> Ord for MergeCandidate<T> {
    // Max-heap on gain; ties prefer the lowest cluster pair.
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain
            .partial_cmp(&other.gain)
            .unwrap_or(Ordering::Equal)
            .then_with(|| (other.a, other.b).cmp(&(self.a, self.b)))
    }
}

/// Merges the pair of clusters with the largest positive cross weight until
/// no merge strictly increases the objective.
fn greedy_merge<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G, labels: Vec<usize>) -> Clustering {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut cross: Vec<BTreeMap<usize, T>> = vec![BTreeMap::new(); k];
    for i in 0..graph.len() {
        graph.for_each_edge(i, &mut |j, w| {
            let (a, b) = (labels[i], labels[j]);
            if j > i && a != b {
                *cross[a].entry(b).or_insert_with(T::zero) += w;
                *cross[b].entry(a).or_insert_with(T::zero) += w;
            }
        });
    }
    let mut heap = BinaryHeap::new();
    for (a, row) in cross.iter().enumerate() {
        for (&b, &gain) in row.range(a + 1..) {
            if gain > T::zero() {
                heap.push(MergeCandidate { gain, a, b });
            }
        }
    }
    let mut parent: Vec<usize> = (0..k).collect();
    let mut size = vec![0usize; k];
    for &l in &labels {
        size[l] += 1;
    }
    while let Some(MergeCandidate { gain, a, b }) = heap.pop() {
        if parent[a] != a || parent[b] != b || cross[a].get(&b) != Some(&gain) {
            continue;
        }
        let (keep, gone) = if size[a] >= size[b] { (a, b) } else { (b, a) };
        parent[gone] = keep;
        size[keep] += size[gone];
        let moved = std::mem::take(&mut cross[gone]);
        cross[keep].remove(&gone);
        for (c, w) in moved {
            if c == keep {
                continue;
            }
            cross[c].remove(&gone);
            let entry = cross[keep].entry(c).or_insert_with(T::zero);
            *entry += w;
            let total = *entry;
            cross[c].insert(keep, total);
            if total > T::zero() {
                let (a, b) = if keep < c { (keep, c) } else { (c, keep) };
                heap.push(MergeCandidate { gain: total, a, b });
            }
        }
    }
    let root = |mut c: usize| {
        while parent[c] != c {
            c = parent[c];
        }
        c
    };
    Clustering::from_labels(&labels.iter().map(|&l| root(l)).collect::<Vec<_>>())
}

/// Globally optimal partition by enumerating all set partitions (`n ≤ 10`).
///
/// Ties prefer more clusters, then the first partition in restricted-growth
/// order.
pub fn cluster_exact<T: Scalar, G: SignedGraph<T> + ?Sized>(graph: &G) -> Result<Clustering, ClusterError> {
    let n = graph.len();
    if n > EXACT_MAX {
        return Err(ClusterError::SizeExceeded { n, max: EXACT_MAX });
    }
    let w: Vec<Vec<T>> = (0..n).map(|i| (0..n).map(|j| graph.weight(i, j)).collect()).collect();

    struct Enumeration<T> {
        w: Vec<Vec<T>>,
        labels: Vec<usize>,
        best: Option<(T, usize, Vec<usize>)>,
    }

    impl<T: Scalar> Enumeration<T> {
        fn visit(&mut self, i: usize, clusters: usize, score: T) {
            let n = self.w.len();
            if i == n {
                let better = match &self.best {
                    None => true,
                    Some((s, k, _)) => score > *s || (score == *s && clusters > *k),
                };
                if better {
                    self.best = Some((score, clusters, self.labels.clone()));
                }
                return;
            }
            for label in 0..=clusters {
                let mut gain = T::zero();
                for m in 0..i {
                    if self.labels[m] == label {
                        gain += self.w[i][m];
                    }
                }
                self.labels[i] = label;
                let next = if label == clusters { clusters + 1 } else { clusters };
                self.visit(i + 1, next, score + gain);
            }
        }
    }

    let mut e = Enumeration {
        w,
        labels: vec![0; n],
        best: None,
    };
    e.visit(0, 0, T::zero());
    Ok(e.best.map_or(Clustering { labels: Vec::new() }, |(_, _, l)| Clustering { labels: l }))
}

/// Sign pattern applied to the weights when scoring a track–detection pair in
/// the divide step. Distances enter as costs (negated) and similarities as
/// gains, so a positive weight on either makes nearby pairs more attractive.
pub const AFFINITY_SIGNS: [f64; FEATURE_DIM] = [0.0, -1.0, -1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0];

/// Divide-step features of one pair: `(|Δx|, |Δy|, 1−|Δx|, 1−|Δy|)` in their slots.
pub fn pair_affinity_features(track: Point, detection: Point) -> [f64; FEATURE_DIM] {
    let dx = (track.x - detection.x).abs();
    let dy = (track.y - detection.y).abs();
    let mut f = [0.0; FEATURE_DIM];
    f[slot::DIST_X] = dx;
    f[slot::DIST_Y] = dy;
    f[slot::SIM_X] = 1.0 - dx;
    f[slot::SIM_Y] = 1.0 - dy;
    f
}

/// Signed contribution of a pair to the clustering term of the feature map.
pub fn signed_affinity_features(track: Point, detection: Point) -> [f64; FEATURE_DIM] {
    let mut f = pair_affinity_features(track, detection);
    for (v, s) in f.iter_mut().zip(AFFINITY_SIGNS) {
        *v *= s;
    }
    f
}

pub fn pair_affinity(track: Point, detection: Point, w: &WeightVector) -> f64 {
    w.dot(&signed_affinity_features(track, detection))
}

/// Symmetric `(|T|+|D|)²` affinity with zero track–track and detection–detection
/// blocks. Nodes `0..|T|` are tracks, the rest detections.
pub fn build_affinity(tracks: &[Point], detections: &[Point], w: &WeightVector) -> Result<DenseAffinity<f64>, ClusterError> {
    if tracks.is_empty() && detections.is_empty() {
        return Err(ClusterError::EmptyFrame);
    }
    let nt = tracks.len();
    let mut m = DenseAffinity::zeros(nt + detections.len());
    for (i, t) in tracks.iter().enumerate() {
        for (j, d) in detections.iter().enumerate() {
            m.set(i, nt + j, pair_affinity(*t, *d, w));
        }
    }
    Ok(m)
}

/// Maps a clustering of `n_tracks + n_detections` nodes to zones and tags
/// each zone simple (equal counts) or complex.
pub fn classify_zones(clustering: &Clustering, n_tracks: usize, n_detections: usize) -> ZonePartition {
    assert_eq!(clustering.len(), n_tracks + n_detections, "clustering must cover all elements");
    let zones = clustering
        .clusters()
        .into_iter()
        .map(|members| {
            let tracks = members.iter().copied().filter(|&m| m < n_tracks).collect();
            let detections = members.iter().filter(|&&m| m >= n_tracks).map(|&m| m - n_tracks).collect();
            Zone::new(tracks, detections)
        })
        .collect();
    ZonePartition::new(zones, n_tracks, n_detections)
}

/// The whole divide step: affinity, clustering, zone classification.
pub fn divide(tracks: &[Point], detections: &[Point], w: &WeightVector, config: &ClusterConfig) -> ZonePartition {
    match build_affinity(tracks, detections, w) {
        Ok(a) => classify_zones(&correlation_cluster(&a, config), tracks.len(), detections.len()),
        Err(ClusterError::EmptyFrame) => ZonePartition::new(Vec::new(), 0, 0),
        Err(e) => unreachable!("{e}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ZoneKind;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn w_theta(dx: f64, dy: f64, sx: f64, sy: f64) -> WeightVector {
        let mut w = WeightVector::zeros();
        w.0[slot::DIST_X] = dx;
        w.0[slot::DIST_Y] = dy;
        w.0[slot::SIM_X] = sx;
        w.0[slot::SIM_Y] = sy;
        w
    }

    #[test]
    fn coincident_and_far_pairs() {
        let w = w_theta(1.0, 1.0, 1.0, 1.0);
        let a = build_affinity(&[Point::new(0.5, 0.5)], &[Point::new(0.5, 0.5)], &w).unwrap();
        assert_eq!(a.weight(0, 1), 2.0);
        let b = build_affinity(&[Point::new(0.0, 0.0)], &[Point::new(1.0, 1.0)], &w).unwrap();
        assert_eq!(b.weight(0, 1), -2.0);
    }

    #[test]
    fn unit_square_corners() {
        let w = w_theta(0.5, 2.0, 1.5, 0.25);
        let tracks = [Point::new(0.0, 0.0), Point::new(1.0, 0.0)];
        let dets = [Point::new(0.0, 1.0), Point::new(1.0, 1.0)];
        let a = build_affinity(&tracks, &dets, &w).unwrap();
        let direct = |t: Point, d: Point| {
            let (dx, dy) = ((t.x - d.x).abs(), (t.y - d.y).abs());
            -0.5 * dx - 2.0 * dy + 1.5 * (1.0 - dx) + 0.25 * (1.0 - dy)
        };
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i < 2, j < 2) {
                    (true, false) => direct(tracks[i], dets[j - 2]),
                    (false, true) => direct(tracks[j], dets[i - 2]),
                    _ => 0.0,
                };
                assert_eq!(a.weight(i, j), expected, "cell ({i},{j})");
            }
        }
        assert!(matches!(build_affinity(&[], &[], &w), Err(ClusterError::EmptyFrame)));
    }

    fn two_pairs() -> DenseAffinity<f64> {
        // t1, t2, d1, d2: intra-pair +2, cross −2.
        DenseAffinity::from_rows(vec![
            vec![0.0, 0.0, 2.0, -2.0],
            vec![0.0, 0.0, -2.0, 2.0],
            vec![2.0, -2.0, 0.0, 0.0],
            vec![-2.0, 2.0, 0.0, 0.0],
        ])
    }

    #[test]
    fn negative_graph_gives_singletons() {
        let a = DenseAffinity::from_rows(vec![vec![0.0, -1.0, -0.5], vec![-1.0, 0.0, -2.0], vec![-0.5, -2.0, 0.0]]);
        let c = correlation_cluster(&a, &ClusterConfig::default());
        assert_eq!(c.cluster_count(), 3);
        assert_eq!(objective(&a, &c), 0.0);
        assert_eq!(cluster_exact(&a).unwrap().cluster_count(), 3);
    }

    #[test]
    fn separated_pairs_form_two_clusters() {
        let a = two_pairs();
        let expected: BTreeSet<Vec<usize>> = [vec![0, 2], vec![1, 3]].into_iter().collect();
        assert_eq!(cluster_exact(&a).unwrap().as_sets(), expected);
        assert_eq!(correlation_cluster(&a, &ClusterConfig::default()).as_sets(), expected);
        let z = classify_zones(&cluster_exact(&a).unwrap(), 2, 2);
        assert!(z.zones.iter().all(|z| z.kind == ZoneKind::Simple));
    }

    #[test]
    fn exact_small_cases() {
        let one = DenseAffinity::<f64>::zeros(1);
        assert_eq!(cluster_exact(&one).unwrap().cluster_count(), 1);
        let two = DenseAffinity::from_rows(vec![vec![0.0, 0.3], vec![0.3, 0.0]]);
        assert_eq!(cluster_exact(&two).unwrap().cluster_count(), 1);
        assert!(matches!(
            cluster_exact(&DenseAffinity::<f64>::zeros(11)),
            Err(ClusterError::SizeExceeded { n: 11, max: 10 })
        ));
        assert!(correlation_cluster(&DenseAffinity::<f64>::zeros(0), &ClusterConfig::default()).is_empty());
    }

    #[test]
    fn zone_kinds() {
        let c = Clustering::from_labels(&[0, 1, 1, 0, 2, 1]);
        // tracks 0,1,2 ; detections 0,1,2 (nodes 3,4,5)
        let z = classify_zones(&c, 3, 3);
        assert_eq!(z.zones[0].kind, ZoneKind::Simple); // {t0, d0}
        assert_eq!(z.zones[1].kind, ZoneKind::Complex); // {t1, t2, d2}
        assert_eq!(z.zones[2].kind, ZoneKind::Complex); // {d1}
        assert_eq!(z.zone_of_detection(1), 2);
    }

    fn random_bipartite(rng: &mut ChaCha8Rng, nt: usize, nd: usize) -> DenseAffinity<f64> {
        let mut a = DenseAffinity::zeros(nt + nd);
        for i in 0..nt {
            for j in 0..nd {
                a.set(i, nt + j, rng.random_range(-1.0..1.0));
            }
        }
        a
    }

    #[test]
    fn exact_matches_independent_scan_on_six() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let a = random_bipartite(&mut rng, 3, 3);
            let exact = objective(&a, &cluster_exact(&a).unwrap());
            // Scan every labeling in {0..5}^6 (a superset of all partitions).
            let mut best = f64::NEG_INFINITY;
            for code in 0..6usize.pow(6) {
                let labels: Vec<usize> = (0..6).map(|i| code / 6usize.pow(i) % 6).collect();
                best = best.max(objective(&a, &Clustering::from_labels(&labels)));
            }
            assert!((exact - best).abs() < 1e-12);
        }
    }

    #[test]
    fn mixed_composition_with_negative_cross_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let mut a = DenseAffinity::zeros(7);
            for i in 0..3 {
                for j in 3..7 {
                    a.set(i, j, -rng.random_range(0.01..1.0));
                }
            }
            assert_eq!(cluster_exact(&a).unwrap().cluster_count(), 7);
        }
    }

    #[test]
    fn sparse_and_dense_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let dense = random_bipartite(&mut rng, 5, 5);
        let mut sparse = SparseAffinity::new(10);
        for i in 0..10 {
            for j in (i + 1)..10 {
                sparse.add_edge(i, j, dense.weight(i, j));
            }
        }
        let cfg = ClusterConfig::default();
        assert_eq!(correlation_cluster(&dense, &cfg), correlation_cluster(&sparse, &cfg));
    }

    /// One track and one detection per grid cell, linked to the detections
    /// of the 3x3 neighbourhood; affinity falls with distance.
    fn grid_graph(rng: &mut ChaCha8Rng, side: usize) -> SparseAffinity<f64> {
        let n = side * side;
        let mut g = SparseAffinity::new(2 * n);
        let jitter = |rng: &mut ChaCha8Rng| rng.random_range(-0.3..0.3);
        let tracks: Vec<(f64, f64)> = (0..n).map(|c| ((c % side) as f64 + jitter(rng), (c / side) as f64 + jitter(rng))).collect();
        let dets: Vec<(f64, f64)> = tracks.iter().map(|&(x, y)| (x + jitter(rng), y + jitter(rng))).collect();
        for c in 0..n {
            let (cx, cy) = ((c % side) as i64, (c / side) as i64);
            for (dx, dy) in (-1..=1).flat_map(|dx| (-1..=1).map(move |dy| (dx, dy))) {
                let (x, y) = (cx + dx, cy + dy);
                if (0..side as i64).contains(&x) && (0..side as i64).contains(&y) {
                    let d = (y as usize) * side + x as usize;
                    let dist = ((tracks[c].0 - dets[d].0).powi(2) + (tracks[c].1 - dets[d].1).powi(2)).sqrt();
                    g.add_edge(c, n + d, 0.8 - dist);
                }
            }
        }
        g
    }

    #[test]
    fn divide_step_scales_near_linearly() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let time = |g: &SparseAffinity<f64>| {
            let mut t: Vec<f64> = (0..3)
                .map(|_| {
                    let t0 = std::time::Instant::now();
                    std::hint::black_box(correlation_cluster(g, &ClusterConfig::default()));
                    t0.elapsed().as_secs_f64()
                })
                .collect();
            t.sort_by(f64::total_cmp);
            t[1]
        };
        // 10², 10³ and 10⁴ tracks (plus as many detections).
        let sizes = [10, 32, 100];
        let t: Vec<f64> = sizes.iter().map(|&s| time(&grid_graph(&mut rng, s))).collect();
        let n: Vec<f64> = sizes.iter().map(|&s| (2 * s * s) as f64).collect();
        let nlogn = |i: usize| n[i] * n[i].ln();
        let growth = t[2] / t[1];
        // n log n growth with a factor 3 allowance for timer noise.
        assert!(growth <= 3.0 * nlogn(2) / nlogn(1), "{t:?}");
    }

    proptest! {
        #[test]
        fn greedy_never_beats_exact_and_clusters_are_mixed(seed in 0u64..10_000, nt in 1usize..5, nd in 1usize..5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_bipartite(&mut rng, nt, nd);
            let greedy = correlation_cluster(&a, &ClusterConfig { candidates: 5, seed });
            let exact = cluster_exact(&a).unwrap();
            prop_assert!(objective(&a, &exact) >= objective(&a, &greedy) - 1e-12);
            for c in greedy.clusters().iter().chain(exact.clusters().iter()) {
                if c.len() > 1 {
                    prop_assert!(c.iter().any(|&m| m < nt) && c.iter().any(|&m| m >= nt));
                }
            }
        }

        #[test]
        fn permutation_equivariance(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_bipartite(&mut rng, 3, 4);
            let mut order: Vec<usize> = (0..7).collect();
            order.shuffle(&mut rng);
            let relabeled = a.permuted(&order);
            let map = |c: &Clustering| -> BTreeSet<Vec<usize>> {
                c.clusters().into_iter().map(|m| {
                    let mut v: Vec<usize> = m.into_iter().map(|i| order[i]).collect();
                    v.sort();
                    v
                }).collect()
            };
            prop_assert_eq!(map(&cluster_exact(&relabeled).unwrap()), cluster_exact(&a).unwrap().as_sets());
            let deterministic = ClusterConfig { candidates: 1, seed: 0 };
            prop_assert_eq!(
                map(&correlation_cluster(&relabeled, &deterministic)),
                correlation_cluster(&a, &deterministic).as_sets()
            );
        }
    }
}
