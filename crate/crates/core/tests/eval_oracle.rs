mod common;

use common::{brute_force_ap, monte_carlo_iou_bev, random_box, random_frame, rng};
use emiff::eval::*;

#[test]
fn ap_matches_exhaustive_assignment() {
    let mut r = rng(5);
    let buckets = default_buckets();
    for _ in 0..100 {
        let f = random_frame(&mut r);
        for metric in [IouMetric::ThreeD, IouMetric::Bev] {
            let got: Vec<_> = ap_compute(&f.dets, &f.gts, metric, 0.5, &buckets).into_iter().map(|b| b.ap).collect();
            let want = brute_force_ap(std::slice::from_ref(&f), metric, 0.5, &buckets);
            assert_eq!(got.len(), want.len());
            for (a, b) in got.iter().zip(&want) {
                match (a, b) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "{a} vs {b}"),
                    (None, None) => {}
                    _ => panic!("{got:?} vs {want:?}"),
                }
            }
        }
    }
}

#[test]
fn multi_frame_ap_matches_exhaustive_assignment() {
    let mut r = rng(6);
    let buckets = default_buckets();
    for _ in 0..20 {
        let frames: Vec<Frame> = (0..4).map(|_| random_frame(&mut r)).collect();
        let got: Vec<_> = ap_compute_frames(&frames, IouMetric::Bev, 0.5, &buckets).into_iter().map(|b| b.ap).collect();
        let want = brute_force_ap(&frames, IouMetric::Bev, 0.5, &buckets);
        for (a, b) in got.iter().zip(&want) {
            assert!(a.zip(*b).is_none_or(|(a, b)| (a - b).abs() < 1e-12) && a.is_some() == b.is_some());
        }
    }
}

#[test]
fn rotated_iou_matches_monte_carlo() {
    let mut r = rng(7);
    for k in 0..10 {
        let a = random_box(&mut r, None);
        let b = random_box(&mut r, Some(&a));
        let mc = monte_carlo_iou_bev(&a, &b, 200_000, k);
        assert!((iou_bev(&a, &b) - mc).abs() < 5e-3);
    }
}

#[test]
fn iou_is_symmetric_and_bounded() {
    let mut r = rng(8);
    for _ in 0..500 {
        let a = random_box(&mut r, None);
        let b = random_box(&mut r, Some(&a));
        let (x, y) = (iou_bev(&a, &b), iou_bev(&b, &a));
        assert!((x - y).abs() < 1e-12 && (0.0..=1.0 + 1e-12).contains(&x));
        assert!(iou_3d(&a, &b) <= x + 1e-12);
        assert!((iou_bev(&a, &a) - 1.0).abs() < 1e-12);
    }
}

#[test]
fn iou_invariant_under_shared_rigid_motion() {
    let mut r = rng(9);
    use rand::Rng;
    for _ in 0..300 {
        let a = random_box(&mut r, None);
        let b = random_box(&mut r, Some(&a));
        let (th, tx, ty) = (r.random_range(-3.0..3.0), r.random_range(-5.0..5.0), r.random_range(-5.0..5.0));
        let (s, c) = f64::sin_cos(th);
        let mv = |x: &Box3D| {
            Box3D::new(
                [c * x.center[0] - s * x.center[1] + tx, s * x.center[0] + c * x.center[1] + ty, x.center[2]],
                x.size,
                x.yaw + th,
            )
        };
        assert!((iou_bev(&a, &b) - iou_bev(&mv(&a), &mv(&b))).abs() < 1e-9);
        assert!((iou_3d(&a, &b) - iou_3d(&mv(&a), &mv(&b))).abs() < 1e-9);
    }
}

#[test]
fn top_scored_true_positive_never_lowers_ap() {
    let mut r = rng(10);
    let buckets = default_buckets();
    for _ in 0..200 {
        let mut f = random_frame(&mut r);
        if f.gts.is_empty() {
            continue;
        }
        let before = ap_compute(&f.dets, &f.gts, IouMetric::Bev, 0.5, &buckets)[0].ap.unwrap();
        // an exact copy of a GT nobody has matched yet
        let matched = greedy_match(&f.dets, &f.gts, IouMetric::Bev, 0.5);
        let Some(free) = (0..f.gts.len()).find(|j| !matched.contains(&Some(*j))) else { continue };
        f.dets.push(Detection {
            bbox: f.gts[free],
            score: 2.0,
            class_id: 0,
        });
        let after = ap_compute(&f.dets, &f.gts, IouMetric::Bev, 0.5, &buckets)[0].ap.unwrap();
        assert!(after >= before - 1e-12, "{before} -> {after}");
    }
}
