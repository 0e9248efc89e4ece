//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use contact_core::geometry::{Pose, RotationMatrix, Vec3};
use contact_core::perception::{
    facing_rotation, project, CameraIntrinsics, Correspondence, TargetGeometry,
};
use rand::Rng;

/// Camera-from-target pose looking at the marker face from `range` metres,
/// tilted by a random rotation of at most `max_angle_deg`, with the marker
/// centre within a few degrees of the optical axis.
pub fn random_viewpoint<R: Rng>(rng: &mut R, max_angle_deg: f64, range: f64) -> Pose {
    let axis = loop {
        let v = Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0));
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            break v / n;
        }
    };
    let angle = rng.random_range(0.0..=max_angle_deg).to_radians();
    let tilt = RotationMatrix::from_axis_angle(&(axis * angle));
    let off_axis = 4f64.to_radians();
    let direction = Vec3::new(
        rng.random_range(-off_axis..off_axis).tan(),
        rng.random_range(-off_axis..off_axis).tan(),
        1.0,
    )
    .normalize();
    Pose {
        position: direction * range,
        orientation: tilt.compose(&facing_rotation()),
    }
}

pub fn noiseless_scene(
    pose: &Pose,
    intrinsics: &CameraIntrinsics,
    geometry: &TargetGeometry,
) -> Vec<Correspondence> {
    geometry
        .keypoints
        .iter()
        .map(|p| Correspondence {
            point_target: *p,
            pixel: project(intrinsics, pose, p).expect("keypoint in front of camera"),
        })
        .collect()
}

/// Erlang(2) CDF: probability that the sum of two independent exponential
/// delays of mean `mean` is at most `tau`.
pub fn erlang2_cdf(tau: f64, mean: f64) -> f64 {
    let r = tau / mean;
    1.0 - (-r).exp() * (1.0 + r)
}

/// Mean of each exponential delay for which the round trip meets `tau` with
/// probability `p`, by bisection on the CDF (decreasing in the mean).
pub fn mean_for_acceptance(tau: f64, p: f64) -> f64 {
    let (mut lo, mut hi) = (1e-6 * tau, 10.0 * tau);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if erlang2_cdf(tau, mid) > p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

pub fn workspace_root() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

pub fn bundled_scenarios() -> Vec<std::path::PathBuf> {
    let mut paths: Vec<_> = std::fs::read_dir(workspace_root().join("scenarios"))
        .expect("scenarios directory")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    paths.sort();
    paths
}
