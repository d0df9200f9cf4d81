use giteval::dataset::{ResultTrack, SequenceRecord};
use giteval::geometry::{BoundingBox, FrameSize};
use giteval::metrics::*;
use proptest::prelude::*;

fn naive_fraction(values: &[f64], keep: impl Fn(f64) -> bool) -> f64 {
    values.iter().filter(|&&v| keep(v)).count() as f64 / values.len() as f64
}

fn naive_trapezoid(y: &[f64]) -> f64 {
    let n = y.len() - 1;
    (0..n).map(|i| (y[i] + y[i + 1]) / 2.0).sum::<f64>() / n as f64
}

fn record(n: usize) -> SequenceRecord {
    let gt = (0..n)
        .map(|k| Some(BoundingBox::new(50.0 + 3.0 * k as f64, 60.0, 40.0, 30.0)))
        .collect();
    SequenceRecord::from_track("s", gt, FrameSize::new(640, 480).unwrap())
}

fn session(id: usize, rho: f64, points: usize, used: usize) -> RobustnessInput {
    RobustnessInput {
        sequence_id: format!("v{id}"),
        rho,
        restart_points: points,
        restarts_used: used,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn success_curve_matches_counting(scores in proptest::collection::vec(0.0f64..=1.0, 1..200)) {
        let c = success_curve(MetricKind::SrIou, &scores, (0.0, 1.0)).unwrap();
        prop_assert_eq!(c.values.len(), 101);
        for (t, v) in c.thresholds.iter().zip(&c.values) {
            prop_assert!((v - naive_fraction(&scores, |s| s >= *t)).abs() < 1e-12);
        }
        prop_assert!((c.auc - naive_trapezoid(&c.values)).abs() < 1e-12);
        prop_assert!(c.values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!((0.0..=1.0).contains(&c.auc));
    }

    #[test]
    fn precision_curve_matches_counting(d in proptest::collection::vec(prop_oneof![0.0f64..100.0, Just(f64::INFINITY)], 1..200)) {
        let c = precision_curve(&d).unwrap();
        prop_assert_eq!(c.values.len(), 51);
        for (t, v) in c.thresholds.iter().zip(&c.values) {
            prop_assert!((v - naive_fraction(&d, |x| x <= *t)).abs() < 1e-12);
        }
        prop_assert!(c.values.windows(2).all(|w| w[0] <= w[1]));
        prop_assert!((c.rank_score - naive_fraction(&d, |x| x <= 20.0)).abs() < 1e-12);
    }

    #[test]
    fn curves_ignore_frame_order(mut s in proptest::collection::vec(-1.0f64..=1.0, 1..100), seed in any::<u64>()) {
        let a = success_curve(MetricKind::SrGiou, &s, (-1.0, 1.0)).unwrap();
        let len = s.len();
        s.rotate_left((seed as usize) % len);
        s.reverse();
        let b = success_curve(MetricKind::SrGiou, &s, (-1.0, 1.0)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn robustness_drops_with_each_restart(rho in 0.01f64..1.0, points in 1usize..20) {
        let mut last = f64::INFINITY;
        for used in 0..=points {
            let r = robustness(&[session(0, rho, points, used)], Weighting::Logistic).unwrap().r;
            prop_assert!(r < last);
            prop_assert!((0.0..=1.0).contains(&r));
            last = r;
        }
        prop_assert_eq!(last, 0.0);
    }

    #[test]
    fn robustness_is_order_independent(
        raw in proptest::collection::vec((0.01f64..1.0, 1usize..10, 0usize..10), 1..12),
        seed in any::<u64>(),
    ) {
        let sessions: Vec<_> = raw
            .iter()
            .enumerate()
            .map(|(i, &(rho, p, u))| session(i, rho, p, u.min(p)))
            .collect();
        let mut shuffled = sessions.clone();
        let len = shuffled.len();
        shuffled.rotate_left((seed as usize) % len);
        shuffled.reverse();
        for w in [Weighting::Logistic, Weighting::Tanh] {
            let a = robustness(&sessions, w).unwrap().r;
            let b = robustness(&shuffled, w).unwrap().r;
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pooled_curves_equal_concatenated_frames(lens in proptest::collection::vec(3usize..30, 1..5), offset in 0.0f64..60.0) {
        let evals: Vec<SequenceEvaluation> = lens
            .iter()
            .map(|&n| {
                let r = record(n);
                let preds = r.gt.iter().enumerate().map(|(k, b)| {
                    b.map(|b| BoundingBox::new(b.x + offset * (k % 3) as f64, b.y, b.w, b.h))
                }).collect();
                evaluate_ope(&r, &ResultTrack::from_boxes("s", preds)).unwrap()
            })
            .collect();
        let agg = aggregate(&evals).unwrap();
        let all: Vec<FrameScores> = evals.iter().flat_map(|e| e.scores.clone()).collect();
        let direct = curves_for(&all).unwrap();
        prop_assert_eq!(&agg.curves, &direct);
        prop_assert_eq!(agg.frames, all.len());
    }
}

#[test]
fn perfect_tracker_scores_one_everywhere() {
    let r = record(40);
    let e = evaluate_ope(&r, &ResultTrack::from_boxes("s", r.gt.clone())).unwrap();
    for m in MetricKind::ALL {
        assert_eq!(e.curve(m).auc, 1.0, "{m:?}");
    }
    assert_eq!(e.curve(MetricKind::Pre).rank_score, 1.0);
}

#[test]
fn silent_tracker_scores_misses() {
    let r = record(40);
    let e = evaluate_ope(&r, &ResultTrack::from_boxes("s", vec![None; 40])).unwrap();
    assert_eq!(e.curve(MetricKind::Pre).auc, 0.0);
    assert_eq!(e.curve(MetricKind::Npre).values[100], 1.0);
    // every score sits at the bottom of its range, which counts only at the first threshold
    for m in [MetricKind::SrIou, MetricKind::SrGiou, MetricKind::SrDiou] {
        let c = e.curve(m);
        assert_eq!(c.values[0], 1.0);
        assert!(c.values[1..].iter().all(|&v| v == 0.0));
        assert!((c.auc - 0.005).abs() < 1e-12);
    }
}

#[test]
fn result_length_must_match() {
    let r = record(10);
    assert!(evaluate_ope(&r, &ResultTrack::from_boxes("s", vec![None; 9])).is_err());
}

#[test]
fn logistic_weight_of_full_correlation() {
    assert!((Weighting::Logistic.apply(1.0) - 0.731059).abs() < 1e-6);
    let r = robustness(&[session(0, 1.0, 2, 0)], Weighting::Logistic).unwrap();
    assert!((r.r - 0.731059).abs() < 1e-6);
}
