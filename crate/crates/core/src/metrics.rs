//! CLEAR MOT, trajectory-based counts and track-length curves.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assign::{self, Cost, CostMatrix};
use crate::model::Annotation;
use crate::track::TrackOutput;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("ground truth has no boxes")]
    EmptyGt,
    #[error("IoU threshold must lie in (0, 1]")]
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotConfig {
    pub iou_threshold: f64,
    /// Coverage at or above which a trajectory is mostly tracked.
    pub mostly_tracked: f64,
    /// Coverage below which a trajectory is mostly lost.
    pub mostly_lost: f64,
}

impl Default for MotConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.5,
            mostly_tracked: 0.8,
            mostly_lost: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotResult {
    pub mota: f64,
    /// Mean IoU of matched pairs; 0 without matches.
    pub motp: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub ids: usize,
    pub frg: usize,
    pub mt: usize,
    pub ml: usize,
    pub gt_tracks: usize,
    pub gt_boxes: usize,
    pub matches: usize,
    /// Per ground-truth id: frames present, frames matched.
    pub coverage: BTreeMap<u64, (usize, usize)>,
}

impl MotResult {
    pub fn recall(&self) -> f64 {
        self.matches as f64 / self.gt_boxes as f64
    }

    pub fn precision(&self) -> f64 {
        let hyp = self.matches + self.fp;
        if hyp == 0 {
            0.0
        } else {
            self.matches as f64 / hyp as f64
        }
    }
}

/// Per-frame matches of one evaluation: `(frame, gt id, hyp id, IoU)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchLog {
    pub matches: Vec<(u64, u64, u64, f64)>,
}

fn by_frame(boxes: &[Annotation]) -> BTreeMap<u64, Vec<&Annotation>> {
    let mut m: BTreeMap<u64, Vec<&Annotation>> = BTreeMap::new();
    for b in boxes {
        m.entry(b.frame).or_default().push(b);
    }
    m
}

/// Frame-by-frame correspondence: previous matches are kept while their IoU
/// stays above threshold, the rest are matched by Hungarian on `1 − IoU`.
pub fn match_sequences(gt: &[Annotation], hyp: &[Annotation], config: &MotConfig) -> Result<MatchLog, MetricsError> {
    if !(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0) {
        return Err(MetricsError::Threshold);
    }
    if gt.is_empty() {
        return Err(MetricsError::EmptyGt);
    }
    let gt_frames = by_frame(gt);
    let hyp_frames = by_frame(hyp);
    let mut previous: HashMap<u64, u64> = HashMap::new();
    let mut log = MatchLog::default();
    let frames: BTreeSet<u64> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    for f in frames {
        let g = gt_frames.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        let h = hyp_frames.get(&f).map(Vec::as_slice).unwrap_or(&[]);
        let mut g_used = vec![false; g.len()];
        let mut h_used = vec![false; h.len()];
        for (gi, gb) in g.iter().enumerate() {
            let Some(&hid) = previous.get(&gb.id) else { continue };
            if let Some(hi) = h.iter().position(|hb| hb.id == hid) {
                let iou = gb.bbox.iou(&h[hi].bbox);
                if !h_used[hi] && iou >= config.iou_threshold {
                    g_used[gi] = true;
                    h_used[hi] = true;
                    log.matches.push((f, gb.id, hid, iou));
                }
            }
        }
        let gs: Vec<usize> = (0..g.len()).filter(|&i| !g_used[i]).collect();
        let hs: Vec<usize> = (0..h.len()).filter(|&i| !h_used[i]).collect();
        if !gs.is_empty() && !hs.is_empty() {
            // Unmatched rows and columns cost 1 each, a valid pair at most
            // 1 − threshold, so maximal valid matchings always win.
            let n = gs.len() + hs.len();
            let mut c = CostMatrix::forbidden(n);
            for (r, &gi) in gs.iter().enumerate() {
                for (k, &hi) in hs.iter().enumerate() {
                    let iou = g[gi].bbox.iou(&h[hi].bbox);
                    if iou >= config.iou_threshold {
                        c.set(r, k, Cost::Finite(1.0 - iou));
                    }
                }
                c.set(r, hs.len() + r, Cost::Finite(1.0));
            }
            for k in 0..hs.len() {
                c.set(gs.len() + k, k, Cost::Finite(1.0));
                for r in 0..gs.len() {
                    c.set(gs.len() + k, hs.len() + r, Cost::Finite(0.0));
                }
            }
            let y = assign::solve(&c).expect("padded matrix is feasible").y;
            for (r, &gi) in gs.iter().enumerate() {
                if y[r] < hs.len() {
                    let hi = hs[y[r]];
                    log.matches.push((f, g[gi].id, h[hi].id, g[gi].bbox.iou(&h[hi].bbox)));
                }
            }
        }
        for &(mf, gid, hid, _) in log.matches.iter().rev().take_while(|m| m.0 == f) {
            debug_assert_eq!(mf, f);
            previous.insert(gid, hid);
        }
    }
    Ok(log)
}

pub fn clear_mot(gt: &[Annotation], hyp: &[Annotation], config: &MotConfig) -> Result<MotResult, MetricsError> {
    let log = match_sequences(gt, hyp, config)?;
    let mut coverage: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for a in gt {
        coverage.entry(a.id).or_default().0 += 1;
    }
    let mut last: HashMap<u64, u64> = HashMap::new();
    let mut ids = 0;
    let mut iou_sum = 0.0;
    let mut matched_frames: HashMap<u64, BTreeSet<u64>> = HashMap::new();
    for &(f, gid, hid, iou) in &log.matches {
        if last.insert(gid, hid).is_some_and(|prev| prev != hid) {
            ids += 1;
        }
        iou_sum += iou;
        coverage.get_mut(&gid).expect("matched id is in ground truth").1 += 1;
        matched_frames.entry(gid).or_default().insert(f);
    }
    // Fragmentations: interruptions between matched runs over the frames
    // where the target is present.
    let mut frg = 0;
    for (gid, frames) in gt_frames_by_id(gt) {
        let matched = matched_frames.get(&gid);
        let flags: Vec<bool> = frames.iter().map(|f| matched.is_some_and(|m| m.contains(f))).collect();
        let runs = flags.iter().enumerate().filter(|&(i, &on)| on && (i == 0 || !flags[i - 1])).count();
        frg += runs.saturating_sub(1);
    }
    let gt_boxes = gt.len();
    let matches = log.matches.len();
    let fn_ = gt_boxes - matches;
    let fp = hyp.len() - matches;
    let mt = coverage.values().filter(|(n, m)| *m as f64 >= config.mostly_tracked * *n as f64).count();
    let ml = coverage.values().filter(|(n, m)| (*m as f64) < config.mostly_lost * *n as f64).count();
    Ok(MotResult {
        mota: 1.0 - (fn_ + fp + ids) as f64 / gt_boxes as f64,
        motp: if matches == 0 { 0.0 } else { iou_sum / matches as f64 },
        fp,
        fn_,
        ids,
        frg,
        mt,
        ml,
        gt_tracks: coverage.len(),
        gt_boxes,
        matches,
        coverage,
    })
}

fn gt_frames_by_id(gt: &[Annotation]) -> BTreeMap<u64, Vec<u64>> {
    let mut m: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for a in gt {
        m.entry(a.id).or_default().push(a.frame);
    }
    for v in m.values_mut() {
        v.sort_unstable();
        v.dedup();
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TlCurve {
    /// Longest correctly tracked run per ground-truth identity, descending.
    pub lengths: Vec<usize>,
    /// `Σ lengths / Σ ground-truth lengths`.
    pub auc: f64,
}

/// Track-length curve: for each ground-truth identity the longest run of
/// consecutive presence frames matched to one hypothesis.
pub fn tl_curve(gt: &[Annotation], hyp: &[Annotation], config: &MotConfig) -> Result<TlCurve, MetricsError> {
    let log = match_sequences(gt, hyp, config)?;
    let matched: HashMap<(u64, u64), u64> = log.matches.iter().map(|&(f, g, h, _)| ((g, f), h)).collect();
    let mut lengths = Vec::new();
    let mut total = 0usize;
    for (gid, frames) in gt_frames_by_id(gt) {
        total += frames.len();
        let (mut best, mut run, mut current): (usize, usize, Option<u64>) = (0, 0, None);
        for (i, f) in frames.iter().enumerate() {
            let h = matched.get(&(gid, *f)).copied();
            let contiguous = i > 0 && frames[i - 1] + 1 == *f;
            run = match (h, current) {
                (Some(h), Some(c)) if h == c && contiguous => run + 1,
                (Some(_), _) => 1,
                (None, _) => 0,
            };
            current = h;
            best = best.max(run);
        }
        lengths.push(best);
    }
    lengths.sort_unstable_by(|a, b| b.cmp(a));
    let auc = lengths.iter().sum::<usize>() as f64 / total as f64;
    Ok(TlCurve { lengths, auc })
}

/// Tracker outputs as hypothesis annotations.
pub fn hypotheses(outputs: &[TrackOutput]) -> Vec<Annotation> {
    outputs
        .iter()
        .map(|o| Annotation {
            frame: o.frame,
            id: o.id,
            bbox: o.bbox,
            confidence: 1.0,
            appearance: None,
        })
        .collect()
}

/// Named rows of results in a fixed column layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResultsTable {
    pub rows: Vec<(String, MotResult)>,
}

const COLUMNS: [&str; 9] = ["MOTA", "MOTP", "MT", "ML", "FP", "FN", "IDS", "FRG", "GT"];

impl ResultsTable {
    pub fn push(&mut self, name: impl Into<String>, result: MotResult) {
        self.rows.push((name.into(), result));
    }

    fn cells(r: &MotResult) -> [String; 9] {
        [
            format!("{:.1}", 100.0 * r.mota),
            format!("{:.1}", 100.0 * r.motp),
            r.mt.to_string(),
            r.ml.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
            r.ids.to_string(),
            r.frg.to_string(),
            r.gt_tracks.to_string(),
        ]
    }

    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max("Method".len());
        let mut s = String::new();
        write!(s, "{:<name_w$}", "Method").unwrap();
        for c in COLUMNS {
            write!(s, " {c:>7}").unwrap();
        }
        s.push('\n');
        for (name, r) in &self.rows {
            write!(s, "{name:<name_w$}").unwrap();
            for c in Self::cells(r) {
                write!(s, " {c:>7}").unwrap();
            }
            s.push('\n');
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("method,{}\n", COLUMNS.join(",").to_lowercase());
        for (name, r) in &self.rows {
            writeln!(
                s,
                "{name},{:.6},{:.6},{},{},{},{},{},{},{}",
                r.mota, r.motp, r.mt, r.ml, r.fp, r.fn_, r.ids, r.frg, r.gt_tracks
            )
            .unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BBox;
    use proptest::prelude::*;

    fn ann(frame: u64, id: u64, left: f64) -> Annotation {
        Annotation {
            frame,
            id,
            bbox: BBox::new(left, 0.0, 10.0, 10.0),
            confidence: 1.0,
            appearance: None,
        }
    }

    fn two_targets(frames: u64) -> Vec<Annotation> {
        (1..=frames).flat_map(|f| [ann(f, 1, 0.0), ann(f, 2, 100.0)]).collect()
    }

    #[test]
    fn perfect_tracking() {
        let gt = two_targets(5);
        let r = clear_mot(&gt, &gt, &MotConfig::default()).unwrap();
        assert_eq!((r.mota, r.motp, r.fp, r.fn_, r.ids, r.frg, r.mt, r.ml), (1.0, 1.0, 0, 0, 0, 0, 2, 0));
    }

    #[test]
    fn null_tracker() {
        let gt = two_targets(5);
        let r = clear_mot(&gt, &[], &MotConfig::default()).unwrap();
        assert_eq!((r.mota, r.fn_, r.fp, r.ml, r.mt), (0.0, 10, 0, 2, 0));
        let tl = tl_curve(&gt, &[], &MotConfig::default()).unwrap();
        assert_eq!(tl.lengths, vec![0, 0]);
        assert_eq!(tl.auc, 0.0);
    }

    #[test]
    fn one_identity_switch() {
        // g1 followed by h1 then h3; g2 by h2 throughout.
        let gt = two_targets(3);
        let hyp = vec![ann(1, 1, 0.0), ann(2, 1, 0.0), ann(3, 3, 0.0), ann(1, 2, 100.0), ann(2, 2, 100.0), ann(3, 2, 100.0)];
        let r = clear_mot(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!(r.ids, 1);
        assert_eq!((r.fp, r.fn_, r.frg), (0, 0, 0));
        assert!((r.mota - (1.0 - 1.0 / 6.0)).abs() < 1e-12);
        let tl = tl_curve(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!(tl.lengths, vec![3, 2]);
    }

    #[test]
    fn fragmentation_and_coverage() {
        // 10-frame target: matched 1–3, missed 4–5, matched 6–7, missed 8–10.
        let gt: Vec<Annotation> = (1..=10).map(|f| ann(f, 1, 0.0)).collect();
        let hyp: Vec<Annotation> = [1, 2, 3, 6, 7].iter().map(|&f| ann(f, 9, 0.0)).collect();
        let r = clear_mot(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!((r.fn_, r.fp, r.ids, r.frg), (5, 0, 0, 1));
        assert_eq!((r.mt, r.ml), (0, 0));
        assert!((r.mota - 0.5).abs() < 1e-12);
        let low: Vec<Annotation> = vec![ann(1, 9, 0.0)];
        let r = clear_mot(&gt, &low, &MotConfig::default()).unwrap();
        assert_eq!(r.ml, 1);
    }

    #[test]
    fn previous_correspondence_kept_over_better_iou() {
        // h1 drifts but stays valid; h2 appears exactly on g1.
        let gt: Vec<Annotation> = (1..=2).map(|f| ann(f, 1, 0.0)).collect();
        let mut hyp = vec![ann(1, 1, 0.0), ann(2, 1, 2.0), ann(2, 2, 0.0)];
        hyp.sort_by_key(|a| a.id);
        let r = clear_mot(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!((r.ids, r.fp), (0, 1));
    }

    #[test]
    fn below_threshold_is_miss_and_false_positive() {
        let gt = vec![ann(1, 1, 0.0)];
        let hyp = vec![ann(1, 1, 6.0)];
        let r = clear_mot(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!((r.fn_, r.fp, r.matches), (1, 1, 0));
        assert_eq!(r.mota, -1.0);
    }

    #[test]
    fn half_covered_tl() {
        let gt: Vec<Annotation> = (1..=8).flat_map(|f| [ann(f, 1, 0.0), ann(f, 2, 100.0)]).collect();
        let mut hyp: Vec<Annotation> = (1..=8).map(|f| ann(f, 1, 0.0)).collect();
        hyp.extend((5..=8).map(|f| ann(f, 2, 100.0)));
        let tl = tl_curve(&gt, &hyp, &MotConfig::default()).unwrap();
        assert_eq!(tl.lengths, vec![8, 4]);
        assert!((tl.auc - 12.0 / 16.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert_eq!(clear_mot(&[], &[], &MotConfig::default()), Err(MetricsError::EmptyGt));
        let cfg = MotConfig { iou_threshold: 0.0, ..MotConfig::default() };
        assert_eq!(clear_mot(&two_targets(1), &[], &cfg), Err(MetricsError::Threshold));
    }

    #[test]
    fn table_layout() {
        let gt = two_targets(2);
        let mut t = ResultsTable::default();
        t.push("full", clear_mot(&gt, &gt, &MotConfig::default()).unwrap());
        assert!(t.to_text().lines().nth(1).unwrap().starts_with("full"));
        assert_eq!(t.to_csv().lines().next().unwrap(), "method,mota,motp,mt,ml,fp,fn,ids,frg,gt");
        assert!(t.to_csv().contains("full,1.000000,1.000000,2,0,0,0,0,0,2"));
    }

    fn arb_boxes() -> impl Strategy<Value = Vec<Annotation>> {
        proptest::collection::vec((1u64..6, 1u64..5, 0u32..8), 1..25).prop_map(|v| {
            let mut seen = BTreeSet::new();
            v.into_iter()
                .filter(|(f, id, _)| seen.insert((*f, *id)))
                .map(|(f, id, x)| ann(f, id, 12.0 * x as f64))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn mota_bounded_and_relabel_invariant(gt in arb_boxes(), hyp in arb_boxes(), shift in 1u64..50) {
            let cfg = MotConfig::default();
            let r = clear_mot(&gt, &hyp, &cfg).unwrap();
            prop_assert!(r.mota <= 1.0);
            prop_assert_eq!(r.fn_ + r.matches, r.gt_boxes);
            let relabeled: Vec<Annotation> = hyp.iter().map(|a| Annotation { id: a.id * 7 + shift, ..a.clone() }).collect();
            let s = clear_mot(&gt, &relabeled, &cfg).unwrap();
            prop_assert_eq!((r.mota, r.ids, r.fp, r.fn_, r.frg), (s.mota, s.ids, s.fp, s.fn_, s.frg));
        }

        #[test]
        fn disjoint_injections_do_not_interact(gt in arb_boxes(), extra in 1usize..5) {
            let cfg = MotConfig::default();
            let base = clear_mot(&gt, &gt, &cfg).unwrap();
            // False positives far away from every ground-truth box.
            let mut hyp = gt.clone();
            hyp.extend((0..extra).map(|k| Annotation { frame: 1, id: 1000 + k as u64, bbox: BBox::new(1e4 + 50.0 * k as f64, 1e4, 10.0, 10.0), confidence: 1.0, appearance: None }));
            let r = clear_mot(&gt, &hyp, &cfg).unwrap();
            prop_assert_eq!(r.fn_, base.fn_);
            prop_assert_eq!(r.fp, base.fp + extra);
        }
    }
}
