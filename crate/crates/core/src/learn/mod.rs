//! Latent structural SVM trained by block-coordinate Frank-Wolfe.
//!
//! For sample `k` with ground truth `y_k` the structured hinge is
//! `H_k = max_(y, Z) Δ_k(y) − ⟨w, Φ(y_k, Z_k) − Φ(y, Z)⟩`, where `Z_k` is the
//! latent completion of the ground truth and
//! `Φ(y, Z) = −Σ π∘f(cells of y) + Σ_zones Σ_pairs signed affinity features`.

mod dataset;

pub use dataset::{corrupt_frame, make_training_set, NoiseConfig, NoisyDetection, TrainingSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{self, AssignError, Cost, CostMatrix};
use crate::cluster::{self, ClusterConfig, Clustering, DenseAffinity};
use crate::featcost::{self, FrameFeatures, MaskPolicy};
use crate::model::{AssignmentInstance, FeatureVec, Slot, WeightVector, Zone, ZoneKind, ZonePartition, FEATURE_DIM};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LearnError {
    #[error("training set is empty")]
    Empty,
    #[error("malformed sample: {0}")]
    BadSample(String),
    #[error("ground truth infeasible under its latent completion")]
    GroundTruthInfeasible,
    #[error(transparent)]
    Assign(#[from] AssignError),
}

/// One frame of supervision: tracker state, detections and the ground-truth
/// association.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub frame: u64,
    pub features: FrameFeatures,
    /// Detection matched to each active track, `None` when it leaves or
    /// becomes occluded.
    pub active_gt: Vec<Option<usize>>,
    /// Detection matched to each occluded track, `None` when it stays occluded.
    pub occluded_gt: Vec<Option<usize>>,
}

impl TrainingSample {
    pub fn new(frame: u64, features: FrameFeatures, active_gt: Vec<Option<usize>>, occluded_gt: Vec<Option<usize>>) -> Result<Self, LearnError> {
        if active_gt.len() != features.n_active || occluded_gt.len() != features.n_occluded {
            return Err(LearnError::BadSample("ground truth does not cover every track".into()));
        }
        let mut claimed = vec![false; features.n_detections];
        for &d in active_gt.iter().chain(&occluded_gt).flatten() {
            if d >= features.n_detections {
                return Err(LearnError::BadSample(format!("detection {d} out of range")));
            }
            if std::mem::replace(&mut claimed[d], true) {
                return Err(LearnError::BadSample(format!("detection {d} matched twice")));
            }
        }
        Ok(Self {
            frame,
            features,
            active_gt,
            occluded_gt,
        })
    }

    pub fn size(&self) -> usize {
        self.features.n_active + self.features.n_occluded + self.features.n_detections
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.features.n_active, self.features.n_occluded, self.features.n_detections)
    }

    /// Whether each detection is claimed by a track in the ground truth.
    pub fn claimed(&self) -> Vec<bool> {
        let mut claimed = vec![false; self.features.n_detections];
        for &d in self.active_gt.iter().chain(&self.occluded_gt).flatten() {
            claimed[d] = true;
        }
        claimed
    }

    /// Ground truth as a permutation of the augmented layout. Idle birth rows
    /// take the free columns in increasing order.
    pub fn gt_permutation(&self) -> Vec<usize> {
        let (na, no, nd) = self.dims();
        let mut y = Vec::with_capacity(na + no + nd);
        let mut free = Vec::new();
        for (t, m) in self.active_gt.iter().enumerate() {
            match m {
                Some(d) => {
                    y.push(*d);
                    free.push(nd + no + t);
                }
                None => y.push(nd + no + t),
            }
        }
        for (o, m) in self.occluded_gt.iter().enumerate() {
            match m {
                Some(d) => {
                    y.push(*d);
                    free.push(nd + o);
                }
                None => y.push(nd + o),
            }
        }
        free.sort_unstable();
        let mut free = free.into_iter();
        for (d, c) in self.claimed().into_iter().enumerate() {
            y.push(if c { free.next().expect("one free column per claimed detection") } else { d });
        }
        y
    }

    /// Ground truth as `(row, column)` slot pairs.
    pub fn gt_pairs(&self) -> Vec<(Slot, Slot)> {
        let (na, no, nd) = self.dims();
        let (rows, cols) = featcost::layout(na, no, nd);
        self.gt_permutation().iter().enumerate().map(|(r, &c)| (rows[r], cols[c])).collect()
    }

    /// Row-major `n × n` Hamming loss. Track rows and birth rows of unclaimed
    /// detections pay for any column other than their ground truth; idle
    /// birth rows pay only for a spurious birth on their own detection.
    pub fn loss_matrix(&self) -> Vec<f64> {
        let (na, no, _) = self.dims();
        let n = self.size();
        let y = self.gt_permutation();
        let claimed = self.claimed();
        let mut l = vec![0.0; n * n];
        for r in 0..n {
            let idle_birth = r >= na + no && claimed[r - na - no];
            for c in 0..n {
                l[r * n + c] = if idle_birth {
                    f64::from(c == r - na - no)
                } else {
                    f64::from(c != y[r])
                };
            }
        }
        l
    }

    pub fn hamming(&self, y: &[usize]) -> f64 {
        let n = self.size();
        let l = self.loss_matrix();
        y.iter().enumerate().map(|(r, &c)| l[r * n + c]).sum()
    }
}

/// Clustering term of the feature map.
pub fn clustering_features(features: &FrameFeatures, partition: &ZonePartition) -> FeatureVec {
    let mut acc = [0.0; FEATURE_DIM];
    for zone in &partition.zones {
        for &t in &zone.tracks {
            for &d in &zone.detections {
                let f = cluster::signed_affinity_features(features.active_positions[t], features.detection_positions[d]);
                for (a, v) in acc.iter_mut().zip(f) {
                    *a += v;
                }
            }
        }
    }
    acc
}

/// `Φ(y, Z)`; `None` when `y` selects a forbidden cell.
pub fn joint_features(features: &FrameFeatures, instance: &AssignmentInstance, partition: &ZonePartition, y: &[usize]) -> Option<FeatureVec> {
    let cost = instance.masked_feature_sum(y)?;
    let mut phi = clustering_features(features, partition);
    for (p, c) in phi.iter_mut().zip(cost) {
        *p -= c;
    }
    Some(phi)
}

/// Ground-truth-consistent zones: matched (track, detection) pairs are
/// contracted before clustering, and detections claimed by occluded tracks
/// are moved out of simple zones.
pub fn latent_complete(sample: &TrainingSample, w: &WeightVector, config: &ClusterConfig) -> ZonePartition {
    let (na, _, nd) = sample.dims();
    if na + nd == 0 {
        return ZonePartition::new(Vec::new(), 0, 0);
    }
    let fw = &sample.features;
    let affinity = cluster::build_affinity(&fw.active_positions, &fw.detection_positions, w).expect("non-empty frame");

    // Contract every ground-truth pair into one node.
    let mut group = vec![usize::MAX; na + nd];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (t, m) in sample.active_gt.iter().enumerate() {
        if let Some(d) = m {
            group[t] = groups.len();
            group[na + d] = groups.len();
            groups.push(vec![t, na + d]);
        }
    }
    for (node, g) in group.iter_mut().enumerate() {
        if *g == usize::MAX {
            *g = groups.len();
            groups.push(vec![node]);
        }
    }
    let mut contracted = DenseAffinity::zeros(groups.len());
    for a in 0..groups.len() {
        for b in (a + 1)..groups.len() {
            let s: f64 = groups[a]
                .iter()
                .flat_map(|&i| groups[b].iter().map(move |&j| (i, j)))
                .map(|(i, j)| cluster::SignedGraph::weight(&affinity, i, j))
                .sum();
            if s != 0.0 {
                contracted.set(a, b, s);
            }
        }
    }
    let coarse = cluster::correlation_cluster(&contracted, config);
    let labels: Vec<usize> = group.iter().map(|&g| coarse.labels()[g]).collect();
    let partition = cluster::classify_zones(&Clustering::from_labels(&labels), na, nd);

    // Occluded re-associations need a complex detection.
    let mut moved = Vec::new();
    for &d in sample.occluded_gt.iter().flatten() {
        if partition.detection_kind(d) == ZoneKind::Simple {
            moved.push(d);
        }
    }
    if moved.is_empty() {
        return partition;
    }
    let mut zones: Vec<Zone> = partition
        .zones
        .into_iter()
        .filter_map(|z| {
            let dets: std::collections::BTreeSet<usize> = z.detections.iter().copied().filter(|d| !moved.contains(d)).collect();
            (!z.tracks.is_empty() || !dets.is_empty()).then(|| Zone::new(z.tracks, dets))
        })
        .collect();
    zones.extend(moved.iter().map(|&d| Zone::new(Default::default(), [d].into())));
    ZonePartition::new(zones, na, nd)
}

/// Unconstrained divide step for the sample under `w`.
pub fn free_partition(sample: &TrainingSample, w: &WeightVector, config: &ClusterConfig) -> ZonePartition {
    cluster::divide(&sample.features.active_positions, &sample.features.detection_positions, w, config)
}

/// Loss, joint-feature difference and hinge value of one `(y, Z̄)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub y: Vec<usize>,
    pub partition: ZonePartition,
    pub loss: f64,
    /// `Φ(y_k, Z_k) − Φ(y, Z̄)`.
    pub psi: FeatureVec,
    /// `Δ − ⟨w, ψ⟩`.
    pub value: f64,
}

/// Evaluates `H_k(y, Z̄; w)`; `None` when `y` is infeasible under `Z̄`.
pub fn evaluate(
    sample: &TrainingSample,
    z_k: &ZonePartition,
    z_bar: &ZonePartition,
    y: &[usize],
    w: &WeightVector,
    policy: MaskPolicy,
) -> Result<Option<Violation>, LearnError> {
    let gt = sample.gt_permutation();
    let inst_k = featcost::assemble(&sample.features, z_k, w, policy);
    let phi_gt = joint_features(&sample.features, &inst_k, z_k, &gt).ok_or(LearnError::GroundTruthInfeasible)?;
    let inst = featcost::assemble(&sample.features, z_bar, w, policy);
    let Some(phi) = joint_features(&sample.features, &inst, z_bar, y) else {
        return Ok(None);
    };
    let mut psi = [0.0; FEATURE_DIM];
    for i in 0..FEATURE_DIM {
        psi[i] = phi_gt[i] - phi[i];
    }
    let loss = sample.hamming(y);
    Ok(Some(Violation {
        y: y.to_vec(),
        partition: z_bar.clone(),
        loss,
        psi,
        value: loss - w.dot(&psi),
    }))
}

/// Most violated assignment for each candidate partition, one Hungarian call
/// each on `C − L`; returns the largest hinge (first on ties).
pub fn max_oracle(
    sample: &TrainingSample,
    z_k: &ZonePartition,
    candidates: &[ZonePartition],
    w: &WeightVector,
    policy: MaskPolicy,
) -> Result<Violation, LearnError> {
    let n = sample.size();
    let loss = sample.loss_matrix();
    let mut best: Option<Violation> = None;
    for z_bar in candidates {
        let inst = featcost::assemble(&sample.features, z_bar, w, policy);
        let mut augmented = CostMatrix::forbidden(n);
        for r in 0..n {
            for c in 0..n {
                if let Cost::Finite(v) = inst.costs.get(r, c) {
                    augmented.set(r, c, Cost::Finite(v - loss[r * n + c]));
                }
            }
        }
        let y = assign::solve(&augmented)?.y;
        let v = evaluate(sample, z_k, z_bar, &y, w, policy)?.expect("oracle output is feasible");
        if best.as_ref().is_none_or(|b| v.value > b.value) {
            best = Some(v);
        }
    }
    best.ok_or(LearnError::Empty)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    pub lambda: f64,
    pub passes: usize,
    pub policy: MaskPolicy,
    pub cluster: ClusterConfig,
    /// Divisor of the per-block loss; `None` uses the number of samples.
    pub loss_normalizer: Option<f64>,
    /// Also search the unconstrained partition in the oracle.
    pub free_candidate: bool,
    /// Evaluate the primal objective after every pass.
    pub track_primal: bool,
    /// Shuffle the block order of every pass; `None` visits samples in order.
    pub shuffle_seed: Option<u64>,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            passes: 10,
            policy: MaskPolicy::Selective,
            cluster: ClusterConfig::default(),
            loss_normalizer: None,
            free_candidate: true,
            track_primal: true,
            shuffle_seed: None,
        }
    }
}

/// Primal-dual iterate: `w = Σ_k w_k`, `l = Σ_k l_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainerState {
    pub w: WeightVector,
    pub l: f64,
    pub w_blocks: Vec<FeatureVec>,
    pub l_blocks: Vec<f64>,
    pub lambda: f64,
    pub pass: usize,
}

impl TrainerState {
    pub fn new(k: usize, lambda: f64) -> Self {
        assert!(lambda > 0.0, "lambda must be positive");
        Self {
            w: WeightVector::zeros(),
            l: 0.0,
            w_blocks: vec![[0.0; FEATURE_DIM]; k],
            l_blocks: vec![0.0; k],
            lambda,
            pass: 0,
        }
    }

    /// `−λ/2 ‖w‖² + l`.
    pub fn dual(&self) -> f64 {
        -0.5 * self.lambda * self.w.norm_sq() + self.l
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub gamma: f64,
    pub hinge: f64,
    /// Frank-Wolfe gap of the block before the step.
    pub block_gap: f64,
    pub dual_before: f64,
    pub dual_after: f64,
}

/// Oracle candidates of a sample at `w`: its latent completion first.
pub fn candidates(sample: &TrainingSample, w: &WeightVector, config: &TrainerConfig) -> (ZonePartition, Vec<ZonePartition>) {
    let z_k = latent_complete(sample, w, &config.cluster);
    let mut c = vec![z_k.clone()];
    if config.free_candidate {
        let free = free_partition(sample, w, &config.cluster);
        if free != z_k {
            c.push(free);
        }
    }
    (z_k, c)
}

/// Structured hinge of one sample at `w`.
pub fn hinge(sample: &TrainingSample, w: &WeightVector, config: &TrainerConfig) -> Result<f64, LearnError> {
    let (z_k, c) = candidates(sample, w, config);
    Ok(max_oracle(sample, &z_k, &c, w, config.policy)?.value)
}

/// `λ/2 ‖w‖² + (1/K) Σ_k H_k(w)`.
pub fn primal(samples: &[TrainingSample], w: &WeightVector, config: &TrainerConfig) -> Result<f64, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::Empty);
    }
    let mut total = 0.0;
    for s in samples {
        total += hinge(s, w, config)?;
    }
    Ok(0.5 * config.lambda * w.norm_sq() + total / samples.len() as f64)
}

/// One block update with exact line search.
pub fn bcfw_step(state: &mut TrainerState, k: usize, sample: &TrainingSample, config: &TrainerConfig) -> Result<StepInfo, LearnError> {
    let blocks = state.w_blocks.len();
    let (z_k, c) = candidates(sample, &state.w, config);
    let v = max_oracle(sample, &z_k, &c, &state.w, config.policy)?;
    let lambda = state.lambda;
    let scale = 1.0 / (lambda * blocks as f64);
    let w_s: FeatureVec = v.psi.map(|p| p * scale);
    let l_s = v.loss / config.loss_normalizer.unwrap_or(blocks as f64);

    let w_k = state.w_blocks[k];
    let diff: FeatureVec = std::array::from_fn(|i| w_k[i] - w_s[i]);
    let gap = lambda * WeightVector(diff).dot(&state.w.0) - state.l_blocks[k] + l_s;
    let denom = lambda * WeightVector(diff).norm_sq();
    let gamma = if denom > 0.0 { (gap / denom).clamp(0.0, 1.0) } else { 0.0 };
    let dual_before = state.dual();

    let new_w_k: FeatureVec = std::array::from_fn(|i| (1.0 - gamma) * w_k[i] + gamma * w_s[i]);
    let new_l_k = (1.0 - gamma) * state.l_blocks[k] + gamma * l_s;
    for (i, x) in state.w.0.iter_mut().enumerate() {
        *x += new_w_k[i] - w_k[i];
    }
    state.l += new_l_k - state.l_blocks[k];
    state.w_blocks[k] = new_w_k;
    state.l_blocks[k] = new_l_k;
    Ok(StepInfo {
        gamma,
        hinge: v.value,
        block_gap: gap,
        dual_before,
        dual_after: state.dual(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassStats {
    pub pass: usize,
    pub dual: f64,
    /// `NaN` when primal tracking is off.
    pub primal: f64,
    /// Mean hinge seen by the oracle during the pass.
    pub mean_hinge: f64,
    pub max_hinge: f64,
    /// Sum of block gaps during the pass.
    pub gap_sum: f64,
    pub mean_gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub w: WeightVector,
    pub state: TrainerState,
    pub history: Vec<PassStats>,
}

/// Runs `passes × K` block steps.
pub fn train(samples: &[TrainingSample], config: &TrainerConfig) -> Result<TrainOutput, LearnError> {
    train_from(samples, config, TrainerState::new(samples.len(), config.lambda))
}

pub fn train_from(samples: &[TrainingSample], config: &TrainerConfig, mut state: TrainerState) -> Result<TrainOutput, LearnError> {
    if samples.is_empty() {
        return Err(LearnError::Empty);
    }
    assert_eq!(state.w_blocks.len(), samples.len(), "state built for another training set");
    let mut history = Vec::with_capacity(config.passes);
    let mut rng = config.shuffle_seed.map(ChaCha8Rng::seed_from_u64);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    for _ in 0..config.passes {
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let (mut hinge_sum, mut hinge_max, mut gap_sum, mut gamma_sum) = (0.0, 0.0f64, 0.0, 0.0);
        for &k in &order {
            let info = bcfw_step(&mut state, k, &samples[k], config)?;
            hinge_sum += info.hinge;
            hinge_max = hinge_max.max(info.hinge);
            gap_sum += info.block_gap;
            gamma_sum += info.gamma;
        }
        state.pass += 1;
        let primal_value = if config.track_primal { primal(samples, &state.w, config)? } else { f64::NAN };
        let stats = PassStats {
            pass: state.pass,
            dual: state.dual(),
            primal: primal_value,
            mean_hinge: hinge_sum / samples.len() as f64,
            max_hinge: hinge_max,
            gap_sum,
            mean_gamma: gamma_sum / samples.len() as f64,
        };
        log::info!(
            "pass {}: primal {:.6} dual {:.6} mean hinge {:.4} max hinge {:.4}",
            stats.pass,
            stats.primal,
            stats.dual,
            stats.mean_hinge,
            stats.max_hinge
        );
        history.push(stats);
    }
    Ok(TrainOutput {
        w: state.w,
        state,
        history,
    })
}
