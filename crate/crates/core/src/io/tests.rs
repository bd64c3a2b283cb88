use super::*;
use crate::learn::NoiseConfig;
use crate::model::Point;
use proptest::prelude::*;

#[test]
fn parses_detection_line() {
    let rows = parse_mot("1,-1,10,20,30,60,0.9,-1,-1,-1\n").unwrap();
    assert_eq!(
        rows,
        vec![MotRow {
            frame: 1,
            id: -1,
            bbox: BBox::new(10.0, 20.0, 30.0, 60.0),
            confidence: 0.9,
            world: [-1.0; 3],
        }]
    );
    let d = rows[0].detection(&SceneBounds::new(0.0, 0.0, 100.0, 100.0).unwrap()).unwrap();
    assert_eq!((d.frame, d.confidence), (1, 0.9));
    assert_eq!(d.pos, Point::new(0.25, 0.5));
}

#[test]
fn output_is_frame_sorted_and_stable() {
    let text = "3,-1,0,0,1,1,1\n1,-1,5,0,1,1,1\n3,-1,9,0,1,1,1\n2,-1,0,0,1,1,1\n1,-1,7,0,1,1,1\n";
    let rows = parse_mot(text).unwrap();
    let keys: Vec<(u64, f64)> = rows.iter().map(|r| (r.frame, r.bbox.left)).collect();
    assert_eq!(keys, vec![(1, 5.0), (1, 7.0), (2, 0.0), (3, 0.0), (3, 9.0)]);
}

#[test]
fn malformed_lines_report_position() {
    let err = parse_mot("1,-1,10,20,30,60,0.9,-1,-1,-1\n2,-1,10,abc,30,60,0.9,-1,-1,-1\n").unwrap_err();
    assert!(matches!(err, IoError::Parse { line: 2, column: 4, .. }), "{err}");
    assert!(matches!(parse_mot("\n\n1,2,3\n"), Err(IoError::DimensionMismatch { line: 3, got: 3, .. })));
    assert!(matches!(parse_mot("1,-1,0,0,0,5,1\n"), Err(IoError::Parse { line: 1, column: 5, .. })));
    assert!(matches!(parse_mot("-1,-1,0,0,5,5,1\n"), Err(IoError::Parse { column: 1, .. })));
    assert!(matches!(parse_mot("# only a comment\n\n"), Err(IoError::EmptyFile)));
}

#[test]
fn integral_floats_accepted_for_ids() {
    let rows = parse_mot("4.0,7.0,0,0,1,1,1\n").unwrap();
    assert_eq!((rows[0].frame, rows[0].id), (4, 7));
    assert!(parse_mot("4.5,7,0,0,1,1,1\n").is_err());
}

#[test]
fn ground_truth_rejects_negative_ids() {
    let rows = parse_mot("1,-1,0,0,1,1,1\n").unwrap();
    assert!(matches!(sequence_from_rows(&rows, SceneBounds::default()), Err(IoError::NegativeId { frame: 1, id: -1 })));
}

#[test]
fn inferred_bounds_cover_boxes() {
    let rows = parse_mot("1,-1,10,20,30,60,1\n2,-1,100,5,50,10,1\n").unwrap();
    assert_eq!(infer_bounds(&rows), SceneBounds::new(0.0, 0.0, 150.0, 80.0).unwrap());
}

#[test]
fn synthetic_sequences_round_trip() {
    let spec = SynthSpec {
        n_targets: 5,
        n_frames: 30,
        random_crossings: 1,
        seed: 11,
        ..SynthSpec::default()
    };
    let s = synth_sequence(&spec);
    let gt = sequence_from_rows(&parse_mot(&s.gt_text()).unwrap(), s.gt.bounds).unwrap();
    assert_eq!(sequence_rows(&gt), sequence_rows(&s.gt));
    let rows = parse_mot(&s.detection_text()).unwrap();
    assert_eq!(rows, detection_rows(&s.detections));
    let mut frames = detections_by_frame(&rows, &s.gt.bounds).unwrap();
    attach_appearance(&mut frames, &parse_sidecar(&s.sidecar_text(), Some(spec.bins)).unwrap()).unwrap();
    for (f, dets) in &frames {
        let orig = &s.detections[f];
        assert_eq!(dets.len(), orig.len());
        for (a, b) in dets.iter().zip(orig) {
            assert_eq!(a.bbox, b.bbox);
            assert!(a.pos.distance(&b.pos) < 1e-9);
            // Reading smooths the already smoothed bins once more.
            let (ha, hb) = (a.appearance.as_ref().unwrap(), b.appearance.as_ref().unwrap());
            assert!(ha.bins().iter().zip(hb.bins()).all(|(x, y)| (x - y).abs() < 1e-5));
        }
    }
}

#[test]
fn ground_truth_sidecar_round_trip() {
    let s = synth_sequence(&SynthSpec { n_targets: 4, n_frames: 6, seed: 3, ..SynthSpec::default() });
    let mut gt = sequence_from_rows(&parse_mot(&s.gt_text()).unwrap(), s.gt.bounds).unwrap();
    attach_gt_appearance(&mut gt, &parse_sidecar(&format_gt_sidecar(&s.gt), Some(8)).unwrap()).unwrap();
    for (a, b) in gt.annotations.iter().zip(&s.gt.annotations) {
        let (ha, hb) = (a.appearance.as_ref().unwrap(), b.appearance.as_ref().unwrap());
        assert!(ha.bins().iter().zip(hb.bins()).all(|(x, y)| (x - y).abs() < 1e-5));
    }
    let stray = parse_sidecar("2,99,1,1,1,1,1,1\n", None).unwrap();
    assert!(matches!(attach_gt_appearance(&mut gt, &stray), Err(IoError::UnknownTarget { frame: 2, id: 99 })));
}

#[test]
fn uniform_sidecar_row() {
    let s = parse_sidecar("1,0,1,1,1,1,1,1\n", None).unwrap();
    assert_eq!(s[&(1, 0)], Histogram::uniform(2));
}

#[test]
fn sidecar_errors() {
    let e = parse_sidecar("1,0,1,1,-1,1,1,1\n", None).unwrap_err();
    assert!(matches!(e, IoError::Parse { line: 1, column: 5, .. }), "{e}");
    assert!(matches!(parse_sidecar("1,0,1,1,1,1,1,1\n1,1,1,1,1\n", None), Err(IoError::DimensionMismatch { line: 2, expected: 8, got: 5 })));
    assert!(matches!(parse_sidecar("1,0,1,1,1,1\n", Some(2)), Err(IoError::DimensionMismatch { line: 1, .. })));
    assert!(matches!(parse_sidecar("1,0,1,1\n", None), Err(IoError::DimensionMismatch { .. })));
    assert!(matches!(parse_sidecar("1,0,1,1,1\n1,0,1,1,1\n", None), Err(IoError::Parse { line: 2, .. })));
}

#[test]
fn permuted_sidecar_rows_give_same_mapping() {
    let rows = ["1,0,1,0,0", "1,1,0,1,0", "2,0,0,0,1", "3,2,5,5,5"];
    let forward = parse_sidecar(&rows.join("\n"), None).unwrap();
    let mut shuffled = rows;
    shuffled.reverse();
    shuffled.swap(0, 2);
    assert_eq!(parse_sidecar(&shuffled.join("\n"), None).unwrap(), forward);
}

#[test]
fn sidecar_for_missing_detection() {
    let mut frames = detections_by_frame(&parse_mot("1,-1,0,0,1,1,1\n").unwrap(), &SceneBounds::default()).unwrap();
    let s = parse_sidecar("1,1,1,1,1\n", None).unwrap();
    assert!(matches!(attach_appearance(&mut frames, &s), Err(IoError::UnknownDetection { frame: 1, index: 1 })));
}

#[test]
fn sidecar_path_is_a_sibling() {
    assert_eq!(sidecar_path(Path::new("/data/seq/det.txt")), PathBuf::from("/data/seq/det_appearance.csv"));
}

#[test]
fn zone_log_lists_every_member() {
    use crate::track::{Tracker, TrackerConfig};
    let spec = SynthSpec {
        n_targets: 3,
        n_frames: 5,
        noise: NoiseConfig::NONE,
        ..SynthSpec::default()
    };
    let s = synth_sequence(&spec);
    let mut w = crate::WeightVector::zeros();
    w.0[0] = 0.5;
    w.0[1] = -1.0;
    w.0[2] = -1.0;
    w.0[3] = 1.0;
    w.0[4] = 1.0;
    let mut tracker = Tracker::new(w, TrackerConfig::default());
    let reports = tracker.run_frames(s.detections.clone(), None).unwrap();
    let log = format_zone_log(&reports);
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines[0], "frame,zone,kind,member,index,track_id");
    let members: usize = reports.iter().map(|r| r.n_active + r.n_detections).sum();
    assert_eq!(lines.len() - 1, members);
    assert!(lines.iter().any(|l| l.starts_with("2,") && l.contains(",track,")));
    assert!(lines[1..].iter().all(|l| l.contains(",simple,") || l.contains(",complex,")));
}

fn arb_row() -> impl Strategy<Value = MotRow> {
    (0u64..10_000, -1i64..1000, -1e4f64..1e4, -1e4f64..1e4, 1e-3f64..1e3, 1e-3f64..1e3, -1.0f64..1.0, proptest::array::uniform3(-1e3f64..1e3)).prop_map(
        |(frame, id, left, top, width, height, confidence, world)| MotRow {
            frame,
            id,
            bbox: BBox::new(left, top, width, height),
            confidence,
            world,
        },
    )
}

proptest! {
    #[test]
    fn writer_output_parses_back(mut rows in proptest::collection::vec(arb_row(), 1..40)) {
        rows.sort_by_key(|r| r.frame);
        prop_assert_eq!(parse_mot(&format_mot(&rows)).unwrap(), rows);
    }

    #[test]
    fn normalization_inverts(x0 in -1e3f64..1e3, y0 in -1e3f64..1e3, w in 1.0f64..5e3, h in 1.0f64..5e3, u in 0.0f64..=1.0, v in 0.0f64..=1.0) {
        let b = SceneBounds::new(x0, y0, x0 + w, y0 + h).unwrap();
        let (px, py) = (x0 + u * w, y0 + v * h);
        let (qx, qy) = b.denormalize(b.normalize(px, py));
        prop_assert!((px - qx).abs() < 1e-6 && (py - qy).abs() < 1e-6);
    }
}
