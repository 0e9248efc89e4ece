mod common;

use common::{median, noiseless_scene, random_viewpoint};
use contact_core::perception::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn solve_from_homography(
    corrs: &[Correspondence],
    k: &CameraIntrinsics,
) -> Result<PnpSolution, PerceptionError> {
    let guess = planar_pose_guess(corrs, k).expect("planar guess");
    solve_pnp(corrs, k, &guess)
}

#[test]
fn noiseless_round_trip_is_exact() {
    let k = CameraIntrinsics::default();
    let geometry = TargetGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let range = rng.random_range(0.5..3.0);
        let truth = random_viewpoint(&mut rng, 30.0, range);
        let sol = solve_from_homography(&noiseless_scene(&truth, &k, &geometry), &k).unwrap();
        assert!(
            sol.camera_from_target
                .orientation
                .angle_to(&truth.orientation)
                < 1e-6
        );
        assert!((sol.camera_from_target.position - truth.position).norm() < 1e-6);
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn homography_guess_is_exact_without_noise() {
    let k = CameraIntrinsics::default();
    let geometry = TargetGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for _ in 0..100 {
        let range = rng.random_range(0.5..3.0);
        let truth = random_viewpoint(&mut rng, 45.0, range);
        let guess = planar_pose_guess(&noiseless_scene(&truth, &k, &geometry), &k).unwrap();
        assert!(guess.orientation.angle_to(&truth.orientation) < 1e-8);
        assert!((guess.position - truth.position).norm() < 1e-8);
    }
}

#[test]
fn homography_guess_needs_coplanar_points() {
    let k = CameraIntrinsics::default();
    let truth = random_viewpoint(&mut ChaCha8Rng::seed_from_u64(16), 10.0, 1.5);
    let mut points = TargetGeometry::default().keypoints;
    points[0].x += 0.05;
    let corrs: Vec<Correspondence> = points
        .iter()
        .map(|p| Correspondence {
            point_target: *p,
            pixel: project(&k, &truth, p).unwrap(),
        })
        .collect();
    assert_eq!(planar_pose_guess(&corrs, &k), None);
    assert_eq!(planar_pose_guess(&corrs[..3], &k), None);
}

#[test]
fn result_does_not_depend_on_correspondence_order() {
    let k = CameraIntrinsics::default();
    let geometry = TargetGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let truth = random_viewpoint(&mut rng, 20.0, 1.5);
    let noise = FailureModel {
        dropout_prob: 0.0,
        jitter_px: 0.5,
    };
    let det = synthetic_detect(&truth, &k, &geometry, &noise, &mut rng, 0.0).unwrap();
    let corrs = detection_to_correspondences(&det, &geometry).unwrap();
    let guess = planar_pose_guess(&corrs, &k).unwrap();
    let reference = solve_pnp(&corrs, &k, &guess).unwrap().camera_from_target;
    for _ in 0..10 {
        let mut shuffled = corrs.clone();
        shuffled.shuffle(&mut rng);
        let pose = solve_pnp(&shuffled, &k, &guess).unwrap().camera_from_target;
        assert!(pose.orientation.angle_to(&reference.orientation) < 1e-9);
        assert!((pose.position - reference.position).norm() < 1e-9);
    }
}

#[test]
fn jittered_keypoints_stay_within_five_sigma() {
    let k = CameraIntrinsics::default();
    let geometry = TargetGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let sigma = 1.0;
    let failure = FailureModel {
        dropout_prob: 0.0,
        jitter_px: sigma,
    };
    for _ in 0..200 {
        let range = rng.random_range(0.8..3.0);
        let truth = random_viewpoint(&mut rng, 20.0, range);
        let det = synthetic_detect(&truth, &k, &geometry, &failure, &mut rng, 0.0).unwrap();
        for (i, px) in det.keypoints {
            let exact = project(&k, &truth, &geometry.keypoints[i]).unwrap();
            assert!(
                (px[0] - exact[0]).abs() <= 5.0 * sigma && (px[1] - exact[1]).abs() <= 5.0 * sigma
            );
        }
    }
}

#[test]
fn noisy_pixels_at_two_metres() {
    let k = CameraIntrinsics::default();
    let geometry = TargetGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let failure = FailureModel {
        dropout_prob: 0.0,
        jitter_px: 0.5,
    };
    let errors: Vec<f64> = (0..100)
        .map(|_| {
            let truth = random_viewpoint(&mut rng, 30.0, 2.0);
            let det = synthetic_detect(&truth, &k, &geometry, &failure, &mut rng, 0.0).unwrap();
            let corrs = detection_to_correspondences(&det, &geometry).unwrap();
            let sol = solve_from_homography(&corrs, &k).unwrap();
            (sol.camera_from_target.position - truth.position).norm()
        })
        .collect();
    assert!(median(errors) <= 0.02);
}

#[test]
fn centred_marker_at_one_metre_is_best() {
    let k = CameraIntrinsics::default();
    let pose = contact_core::geometry::Pose {
        position: contact_core::geometry::Vec3::new(0.0, 0.0, 1.0),
        orientation: facing_rotation(),
    };
    let det = synthetic_detect(
        &pose,
        &k,
        &TargetGeometry::default(),
        &FailureModel::default(),
        &mut ChaCha8Rng::seed_from_u64(0),
        0.0,
    )
    .unwrap();
    assert_eq!(det.level, DetectionLevel::Best);
}
