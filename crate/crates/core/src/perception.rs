//! Pinhole projection, PnP pose estimation and a synthetic marker detector.
//!
//! The detector stands in for a learned object detector: it projects a known
//! planar marker through the true camera pose, drops or jitters the result
//! according to a failure model, and grades the detection by apparent size.

use crate::geometry::{Pose, RotationMatrix, Vec3};
use nalgebra::{Matrix3, SMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Minimum depth for a point to be considered in front of the camera, m.
pub const MIN_DEPTH: f64 = 1e-6;

const PNP_MAX_ITERATIONS: usize = 100;
const PNP_STEP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PerceptionError {
    #[error("point is behind the camera (depth {0:e} m)")]
    BehindCamera(f64),
    #[error("need at least 4 correspondences, got {0}")]
    TooFewCorrespondences(usize),
    #[error("degenerate point configuration (normal equations are rank deficient)")]
    Degenerate,
    #[error("pose estimate did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("invalid camera intrinsics")]
    InvalidIntrinsics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Image size in pixels; pixels outside `[0, width) × [0, height)` are not observed.
    pub width: f64,
    pub height: f64,
}

impl Default for CameraIntrinsics {
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<(), PerceptionError> {
        let ok = self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0.0
            && self.height > 0.0
            && [self.fx, self.fy, self.cx, self.cy, self.width, self.height]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(PerceptionError::InvalidIntrinsics)
        }
    }

    pub fn contains(&self, pixel: &[f64; 2]) -> bool {
        (0.0..self.width).contains(&pixel[0]) && (0.0..self.height).contains(&pixel[1])
    }

    /// Pixel of a point already expressed in the camera frame.
    pub fn project_camera_point(&self, p: &Vec3) -> Result<[f64; 2], PerceptionError> {
        if !(p.z > MIN_DEPTH) {
            return Err(PerceptionError::BehindCamera(p.z));
        }
        Ok([self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy])
    }
}

/// A known 3D marker point (target frame) and where it was observed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub point_target: Vec3,
    pub pixel: [f64; 2],
}

/// Pinhole projection of a target-frame point.
pub fn project(
    intrinsics: &CameraIntrinsics,
    camera_from_target: &Pose,
    point_target: &Vec3,
) -> Result<[f64; 2], PerceptionError> {
    intrinsics.project_camera_point(&camera_from_target.transform_point(point_target))
}

/// Result of [`solve_pnp`].
#[derive(Debug, Clone, PartialEq)]
pub struct PnpSolution {
    pub camera_from_target: Pose,
    /// Root-mean-square reprojection error, pixels.
    pub rms_px: f64,
    pub iterations: usize,
    /// Sum of squared reprojection errors after each accepted step, starting
    /// with the initial guess.
    pub cost_history: Vec<f64>,
}

fn reprojection_cost(
    correspondences: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    pose: &Pose,
) -> Option<f64> {
    let mut cost = 0.0;
    for c in correspondences {
        let [u, v] = project(intrinsics, pose, &c.point_target).ok()?;
        cost += (u - c.pixel[0]).powi(2) + (v - c.pixel[1]).powi(2);
    }
    Some(cost)
}

/// Camera-from-target pose minimizing the squared reprojection error, by
/// Levenberg-damped Gauss-Newton from `initial_guess`.
///
/// The rotation is updated on the left by an axis-angle increment, so every
/// iterate stays a proper rotation. Steps that do not lower the cost are
/// rejected and the damping raised, which makes the cost history
/// non-increasing.
pub fn solve_pnp(
    correspondences: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    initial_guess: &Pose,
) -> Result<PnpSolution, PerceptionError> {
    intrinsics.validate()?;
    if correspondences.len() < 4 {
        return Err(PerceptionError::TooFewCorrespondences(
            correspondences.len(),
        ));
    }

    let mut pose = *initial_guess;
    let mut cost = reprojection_cost(correspondences, intrinsics, &pose)
        .ok_or(PerceptionError::BehindCamera(0.0))?;
    let mut history = vec![cost];
    let mut damping = 1e-3;

    for iteration in 1..=PNP_MAX_ITERATIONS {
        let mut jtj = SMatrix::<f64, 6, 6>::zeros();
        let mut jtr = SVector::<f64, 6>::zeros();
        for c in correspondences {
            let rotated = pose.orientation.rotate(&c.point_target);
            let pc = rotated + pose.position;
            let [u, v] = intrinsics.project_camera_point(&pc)?;
            let residual = [u - c.pixel[0], v - c.pixel[1]];
            let inv_z = 1.0 / pc.z;
            let d_proj = SMatrix::<f64, 2, 3>::new(
                intrinsics.fx * inv_z,
                0.0,
                -intrinsics.fx * pc.x * inv_z * inv_z,
                0.0,
                intrinsics.fy * inv_z,
                -intrinsics.fy * pc.y * inv_z * inv_z,
            );
            // d(exp(δ) R P + t)/dδ = -[R P]×, d/dt = I
            let mut d_point = SMatrix::<f64, 3, 6>::zeros();
            d_point
                .fixed_view_mut::<3, 3>(0, 0)
                .copy_from(&(-crate::geometry::skew(&rotated)));
            d_point
                .fixed_view_mut::<3, 3>(0, 3)
                .copy_from(&Matrix3::identity());
            let j = d_proj * d_point;
            let r = SVector::<f64, 2>::new(residual[0], residual[1]);
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }

        let eig = jtj.symmetric_eigenvalues();
        let (min_eig, max_eig) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &e| {
            (lo.min(e), hi.max(e))
        });
        if !(max_eig > 0.0) || min_eig <= 1e-12 * max_eig {
            return Err(PerceptionError::Degenerate);
        }

        loop {
            let mut system = jtj;
            for i in 0..6 {
                system[(i, i)] += damping * jtj[(i, i)];
            }
            let step = system
                .cholesky()
                .ok_or(PerceptionError::Degenerate)?
                .solve(&-jtr);
            let step_norm = step.norm();
            let candidate = Pose {
                position: pose.position + Vec3::new(step[3], step[4], step[5]),
                orientation: RotationMatrix::orthonormalized(
                    *RotationMatrix::from_axis_angle(&Vec3::new(step[0], step[1], step[2]))
                        .matrix()
                        * pose.orientation.matrix(),
                ),
            };
            match reprojection_cost(correspondences, intrinsics, &candidate) {
                Some(c) if c < cost => {
                    pose = candidate;
                    cost = c;
                    history.push(cost);
                    damping = (damping / 10.0).max(1e-12);
                    if step_norm < PNP_STEP_TOL {
                        return Ok(solution(
                            pose,
                            cost,
                            correspondences.len(),
                            iteration,
                            history,
                        ));
                    }
                    break;
                }
                _ => {
                    damping *= 10.0;
                    // no descent direction left at machine precision
                    if step_norm < PNP_STEP_TOL || damping > 1e12 {
                        return Ok(solution(
                            pose,
                            cost,
                            correspondences.len(),
                            iteration,
                            history,
                        ));
                    }
                }
            }
        }
    }
    Err(PerceptionError::NonConvergence(PNP_MAX_ITERATIONS))
}

fn solution(
    pose: Pose,
    cost: f64,
    n: usize,
    iterations: usize,
    cost_history: Vec<f64>,
) -> PnpSolution {
    PnpSolution {
        camera_from_target: pose,
        rms_px: (cost / n as f64).sqrt(),
        iterations,
        cost_history,
    }
}

/// Coarse camera-from-target guess for a planar marker seen roughly head-on:
/// the rotation is supplied, the depth comes from the ratio of metric to
/// pixel spread, and the lateral offset from the pixel centroid.
pub fn coarse_pose_guess(
    correspondences: &[Correspondence],
    intrinsics: &CameraIntrinsics,
    rotation: RotationMatrix,
) -> Option<Pose> {
    if correspondences.len() < 2 {
        return None;
    }
    let n = correspondences.len() as f64;
    let centroid_3d = correspondences.iter().map(|c| c.point_target).sum::<Vec3>() / n;
    let cu = correspondences.iter().map(|c| c.pixel[0]).sum::<f64>() / n;
    let cv = correspondences.iter().map(|c| c.pixel[1]).sum::<f64>() / n;
    let spread_3d = correspondences
        .iter()
        .map(|c| (c.point_target - centroid_3d).norm_squared())
        .sum::<f64>()
        .sqrt();
    let spread_px = correspondences
        .iter()
        .map(|c| {
            ((c.pixel[0] - cu) / intrinsics.fx).powi(2)
                + ((c.pixel[1] - cv) / intrinsics.fy).powi(2)
        })
        .sum::<f64>()
        .sqrt();
    if !(spread_px > 0.0 && spread_3d > 0.0) {
        return None;
    }
    let depth = spread_3d / spread_px;
    let ray = Vec3::new(
        (cu - intrinsics.cx) / intrinsics.fx,
        (cv - intrinsics.cy) / intrinsics.fy,
        1.0,
    );
    let position = ray * depth - rotation.rotate(&centroid_3d);
    Some(Pose {
        position,
        orientation: rotation,
    })
}

fn min_eigenvector(m: SMatrix<f64, 9, 9>) -> SVector<f64, 9> {
    let eig = m.symmetric_eigen();
    let i = eig.eigenvalues.imin();
    eig.eigenvectors.column(i).into_owned()
}

/// Pose guess for a planar keypoint set from the plane-to-image homography
/// (normalized DLT). Exact for noiseless pixels and free of the mirror
/// ambiguity that traps local refinement started from a fixed rotation.
/// `None` when the points are not coplanar or the fit is degenerate.
pub fn planar_pose_guess(
    correspondences: &[Correspondence],
    intrinsics: &CameraIntrinsics,
) -> Option<Pose> {
    let n = correspondences.len();
    if n < 4 {
        return None;
    }
    let centroid = correspondences.iter().map(|c| c.point_target).sum::<Vec3>() / n as f64;
    let scatter: Matrix3<f64> = correspondences
        .iter()
        .map(|c| (c.point_target - centroid) * (c.point_target - centroid).transpose())
        .sum();
    let eig = scatter.symmetric_eigen();
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (largest, smallest) = (eig.eigenvalues[order[0]], eig.eigenvalues[order[2]]);
    if !(largest > 0.0) || smallest > 1e-10 * largest || eig.eigenvalues[order[1]] < 1e-10 * largest
    {
        return None;
    }
    let e1: Vec3 = eig.eigenvectors.column(order[0]).into_owned();
    let e2: Vec3 = eig.eigenvectors.column(order[1]).into_owned();
    let basis = Matrix3::from_columns(&[e1, e2, e1.cross(&e2)]);

    let plane: Vec<[f64; 2]> = correspondences
        .iter()
        .map(|c| {
            [
                (c.point_target - centroid).dot(&e1),
                (c.point_target - centroid).dot(&e2),
            ]
        })
        .collect();
    let image: Vec<[f64; 2]> = correspondences
        .iter()
        .map(|c| {
            [
                (c.pixel[0] - intrinsics.cx) / intrinsics.fx,
                (c.pixel[1] - intrinsics.cy) / intrinsics.fy,
            ]
        })
        .collect();
    let rms = |pts: &[[f64; 2]], m: [f64; 2]| {
        (pts.iter()
            .map(|p| (p[0] - m[0]).powi(2) + (p[1] - m[1]).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
    };
    let image_mean = image.iter().fold([0.0, 0.0], |acc, p| {
        [acc[0] + p[0] / n as f64, acc[1] + p[1] / n as f64]
    });
    let (plane_rms, image_rms) = (rms(&plane, [0.0, 0.0]), rms(&image, image_mean));
    if !(plane_rms > 0.0 && image_rms > 0.0) {
        return None;
    }
    let (sp, si) = (
        std::f64::consts::SQRT_2 / plane_rms,
        std::f64::consts::SQRT_2 / image_rms,
    );

    let mut normal = SMatrix::<f64, 9, 9>::zeros();
    for (p, q) in plane.iter().zip(&image) {
        let (x, y) = (sp * p[0], sp * p[1]);
        let (u, v) = (si * (q[0] - image_mean[0]), si * (q[1] - image_mean[1]));
        let rows = [
            SVector::<f64, 9>::from_column_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, -u]),
            SVector::<f64, 9>::from_column_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, -v]),
        ];
        for r in rows {
            normal += r * r.transpose();
        }
    }
    let h = min_eigenvector(normal);
    let h_norm = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let plane_scale = Matrix3::new(sp, 0.0, 0.0, 0.0, sp, 0.0, 0.0, 0.0, 1.0);
    let image_unscale = Matrix3::new(
        1.0 / si,
        0.0,
        image_mean[0],
        0.0,
        1.0 / si,
        image_mean[1],
        0.0,
        0.0,
        1.0,
    );
    let homography = image_unscale * h_norm * plane_scale;

    let (h1, h2, h3) = (
        homography.column(0).into_owned(),
        homography.column(1).into_owned(),
        homography.column(2).into_owned(),
    );
    let mut lambda = 2.0 / (h1.norm() + h2.norm());
    if h3.z * lambda < 0.0 {
        lambda = -lambda;
    }
    let (r1, r2) = (h1 * lambda, h2 * lambda);
    let in_plane = RotationMatrix::orthonormalized(Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]));
    let orientation = RotationMatrix::orthonormalized(in_plane.matrix() * basis.transpose());
    let position = h3 * lambda - orientation.rotate(&centroid);
    position.iter().all(|v| v.is_finite()).then_some(Pose {
        position,
        orientation,
    })
}

/// Concentric marker levels, from the coarse outline to the inner circle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionLevel {
    Good,
    Better,
    Best,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub u_min: f64,
    pub v_min: f64,
    pub u_max: f64,
    pub v_max: f64,
}

impl BoundingBox {
    fn around(pixels: &[[f64; 2]]) -> Self {
        let mut b = BoundingBox {
            u_min: f64::INFINITY,
            v_min: f64::INFINITY,
            u_max: f64::NEG_INFINITY,
            v_max: f64::NEG_INFINITY,
        };
        for p in pixels {
            b.u_min = b.u_min.min(p[0]);
            b.v_min = b.v_min.min(p[1]);
            b.u_max = b.u_max.max(p[0]);
            b.v_max = b.v_max.max(p[1]);
        }
        b
    }

    fn clipped(&self, intrinsics: &CameraIntrinsics) -> Option<Self> {
        let b = BoundingBox {
            u_min: self.u_min.max(0.0),
            v_min: self.v_min.max(0.0),
            u_max: self.u_max.min(intrinsics.width),
            v_max: self.v_max.min(intrinsics.height),
        };
        (b.u_min < b.u_max && b.v_min < b.v_max).then_some(b)
    }

    pub fn area(&self) -> f64 {
        (self.u_max - self.u_min) * (self.v_max - self.v_min)
    }
}

/// Planar marker in the target's `x = 0` plane: an outer square, a middle
/// square and an inner circle, all centred on the contact point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetGeometry {
    /// Known 3D keypoints, target frame, m.
    pub keypoints: Vec<Vec3>,
    pub outer_half_size: f64,
    pub middle_half_size: f64,
    pub inner_radius: f64,
    /// Projected inner-circle area at or above which a detection is graded best, px².
    pub best_min_area_px2: f64,
    /// Projected middle-square area at or above which a detection is graded better, px².
    pub better_min_area_px2: f64,
}

impl Default for TargetGeometry {
    fn default() -> Self {
        Self::concentric(0.15, 0.08, 0.04, 1200.0, 1500.0)
    }
}

impl TargetGeometry {
    /// Outer-square corners plus the four extremes of the inner circle.
    pub fn concentric(
        outer: f64,
        middle: f64,
        inner: f64,
        best_min_area_px2: f64,
        better_min_area_px2: f64,
    ) -> Self {
        let mut keypoints = Vec::with_capacity(8);
        for (y, z) in [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)] {
            keypoints.push(Vec3::new(0.0, y * outer, z * outer));
        }
        for (y, z) in [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)] {
            keypoints.push(Vec3::new(0.0, y * inner, z * inner));
        }
        Self {
            keypoints,
            outer_half_size: outer,
            middle_half_size: middle,
            inner_radius: inner,
            best_min_area_px2,
            better_min_area_px2,
        }
    }

    fn square(half: f64) -> [Vec3; 4] {
        [
            Vec3::new(0.0, half, half),
            Vec3::new(0.0, -half, half),
            Vec3::new(0.0, -half, -half),
            Vec3::new(0.0, half, -half),
        ]
    }

    fn projected_area(
        points: &[Vec3],
        intrinsics: &CameraIntrinsics,
        camera_from_target: &Pose,
    ) -> Result<f64, PerceptionError> {
        let pixels = points
            .iter()
            .map(|p| project(intrinsics, camera_from_target, p))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(BoundingBox::around(&pixels).area())
    }

    /// Level by apparent size of the inner circle, then the middle square.
    pub fn grade(
        &self,
        intrinsics: &CameraIntrinsics,
        camera_from_target: &Pose,
    ) -> Result<DetectionLevel, PerceptionError> {
        let r = self.inner_radius;
        let circle = [
            Vec3::new(0.0, r, 0.0),
            Vec3::new(0.0, 0.0, r),
            Vec3::new(0.0, -r, 0.0),
            Vec3::new(0.0, 0.0, -r),
        ];
        // ellipse inscribed in the bounding box of the extremes
        let inner_area = std::f64::consts::FRAC_PI_4
            * Self::projected_area(&circle, intrinsics, camera_from_target)?;
        if inner_area >= self.best_min_area_px2 {
            return Ok(DetectionLevel::Best);
        }
        let middle_area = Self::projected_area(
            &Self::square(self.middle_half_size),
            intrinsics,
            camera_from_target,
        )?;
        if middle_area >= self.better_min_area_px2 {
            return Ok(DetectionLevel::Better);
        }
        Ok(DetectionLevel::Good)
    }
}

/// Stochastic failure modes of the detector.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FailureModel {
    /// Probability of a false negative (glare, low light).
    pub dropout_prob: f64,
    /// Standard deviation of the per-keypoint pixel noise.
    pub jitter_px: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub level: DetectionLevel,
    pub timestamp: f64,
    /// Visible keypoints as `(index into TargetGeometry::keypoints, pixel)`.
    pub keypoints: Vec<(usize, [f64; 2])>,
}

/// Simulated detector output for the true camera pose, or `None` when the
/// marker is behind the camera, outside the image, or dropped.
pub fn synthetic_detect<R: Rng + ?Sized>(
    camera_from_target: &Pose,
    intrinsics: &CameraIntrinsics,
    geometry: &TargetGeometry,
    failure: &FailureModel,
    rng: &mut R,
    timestamp: f64,
) -> Option<Detection> {
    // draw the dropout first so the random stream does not depend on geometry
    let dropped = failure.dropout_prob > 0.0 && rng.random::<f64>() < failure.dropout_prob;
    let outline = TargetGeometry::square(geometry.outer_half_size)
        .iter()
        .map(|p| project(intrinsics, camera_from_target, p))
        .collect::<Result<Vec<_>, _>>()
        .ok()?;
    let bbox = BoundingBox::around(&outline).clipped(intrinsics)?;
    let level = geometry.grade(intrinsics, camera_from_target).ok()?;
    let noise = Normal::new(0.0, failure.jitter_px.max(0.0)).ok()?;
    let mut keypoints = Vec::with_capacity(geometry.keypoints.len());
    for (index, point) in geometry.keypoints.iter().enumerate() {
        let Ok(pixel) = project(intrinsics, camera_from_target, point) else {
            continue;
        };
        if !intrinsics.contains(&pixel) {
            continue;
        }
        let jittered = if failure.jitter_px > 0.0 {
            [pixel[0] + noise.sample(rng), pixel[1] + noise.sample(rng)]
        } else {
            pixel
        };
        keypoints.push((index, jittered));
    }
    if dropped {
        return None;
    }
    Some(Detection {
        bbox,
        level,
        timestamp,
        keypoints,
    })
}

/// Pairs the visible keypoints of a detection with their known 3D positions.
pub fn detection_to_correspondences(
    detection: &Detection,
    geometry: &TargetGeometry,
) -> Result<Vec<Correspondence>, PerceptionError> {
    let correspondences: Vec<Correspondence> = detection
        .keypoints
        .iter()
        .filter_map(|&(index, pixel)| {
            geometry
                .keypoints
                .get(index)
                .map(|&point_target| Correspondence {
                    point_target,
                    pixel,
                })
        })
        .collect();
    if correspondences.len() < 4 {
        return Err(PerceptionError::TooFewCorrespondences(
            correspondences.len(),
        ));
    }
    Ok(correspondences)
}

/// Rotation taking target coordinates into an optical camera frame
/// (z forward, x right, y down) that looks straight at the marker face.
pub fn facing_rotation() -> RotationMatrix {
    // camera z = -target x, camera x = target y, camera y = -target z
    RotationMatrix::from_matrix(Matrix3::new(0.0, 1.0, 0.0, 0.0, 0.0, -1.0, -1.0, 0.0, 0.0))
        .expect("constant rotation")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pinhole_100() -> CameraIntrinsics {
        CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 0.0,
            cy: 0.0,
            width: 640.0,
            height: 480.0,
        }
    }

    fn facing_at(depth: f64) -> Pose {
        Pose {
            position: Vec3::new(0.0, 0.0, depth),
            orientation: facing_rotation(),
        }
    }

    #[test]
    fn projection_examples() {
        let k = CameraIntrinsics::default();
        assert_eq!(
            project(&k, &Pose::identity(), &Vec3::new(0.0, 0.0, 2.0)).unwrap(),
            [k.cx, k.cy]
        );
        assert_eq!(
            project(&pinhole_100(), &Pose::identity(), &Vec3::new(1.0, 0.0, 2.0)).unwrap(),
            [50.0, 0.0]
        );
        assert!(matches!(
            project(&k, &Pose::identity(), &Vec3::new(1.0, 0.0, 0.0)),
            Err(PerceptionError::BehindCamera(_))
        ));
    }

    #[test]
    fn facing_rotation_looks_at_marker() {
        let pose = facing_at(1.0);
        let k = CameraIntrinsics::default();
        // facing the marker, its +y axis points to the viewer's right
        let [u, _] = project(&k, &pose, &Vec3::new(0.0, 0.1, 0.0)).unwrap();
        assert!(u > k.cx);
        // +z (up) appears above centre
        let [_, v] = project(&k, &pose, &Vec3::new(0.0, 0.0, 0.1)).unwrap();
        assert!(v < k.cy);
    }

    fn scene(pose: &Pose, k: &CameraIntrinsics) -> Vec<Correspondence> {
        TargetGeometry::default()
            .keypoints
            .iter()
            .map(|p| Correspondence {
                point_target: *p,
                pixel: project(k, pose, p).unwrap(),
            })
            .collect()
    }

    #[test]
    fn pnp_fixed_point_at_identity_like_pose() {
        // camera 1.5 m in front of a marker rotated to face it
        let k = CameraIntrinsics::default();
        let pose = facing_at(1.5);
        let sol = solve_pnp(&scene(&pose, &k), &k, &pose).unwrap();
        assert!((sol.camera_from_target.position - pose.position).norm() < 1e-9);
        assert!(
            sol.camera_from_target
                .orientation
                .angle_to(&pose.orientation)
                < 1e-9
        );
    }

    #[test]
    fn pnp_identity_pose() {
        // marker points in front of an identity-pose camera
        let k = CameraIntrinsics::default();
        let pts: Vec<Correspondence> = [
            (0.1, 0.1, 2.0),
            (-0.1, 0.1, 2.0),
            (-0.1, -0.1, 2.0),
            (0.1, -0.1, 2.0),
            (0.0, 0.05, 2.0),
        ]
        .iter()
        .map(|&(x, y, z)| {
            let p = Vec3::new(x, y, z);
            Correspondence {
                point_target: p,
                pixel: project(&k, &Pose::identity(), &p).unwrap(),
            }
        })
        .collect();
        let sol = solve_pnp(&pts, &k, &Pose::identity()).unwrap();
        assert!(sol.camera_from_target.position.norm() < 1e-9);
        assert!(sol.camera_from_target.orientation.angle() < 1e-9);
        assert_eq!(sol.cost_history.len(), 1);
    }

    #[test]
    fn pnp_cost_is_non_increasing() {
        let k = CameraIntrinsics::default();
        let truth = Pose {
            position: Vec3::new(0.2, -0.1, 2.0),
            orientation: RotationMatrix::from_axis_angle(&Vec3::new(0.1, 0.3, -0.2))
                .compose(&facing_rotation()),
        };
        let sol = solve_pnp(&scene(&truth, &k), &k, &facing_at(1.0)).unwrap();
        assert!(sol.cost_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.rms_px < 1e-6);
    }

    #[test]
    fn pnp_rejects_degenerate_input() {
        let k = CameraIntrinsics::default();
        let pose = facing_at(2.0);
        let all = scene(&pose, &k);
        assert_eq!(
            solve_pnp(&all[..3], &k, &pose),
            Err(PerceptionError::TooFewCorrespondences(3))
        );
        // four collinear points
        let line: Vec<Correspondence> = (0..4)
            .map(|i| {
                let p = Vec3::new(0.0, 0.05 * i as f64, 0.0);
                Correspondence {
                    point_target: p,
                    pixel: project(&k, &pose, &p).unwrap(),
                }
            })
            .collect();
        assert_eq!(
            solve_pnp(&line, &k, &pose),
            Err(PerceptionError::Degenerate)
        );
    }

    #[test]
    fn coarse_guess_gets_depth_roughly() {
        let k = CameraIntrinsics::default();
        let pose = facing_at(2.0);
        let guess = coarse_pose_guess(&scene(&pose, &k), &k, facing_rotation()).unwrap();
        assert!((guess.position - pose.position).norm() < 1e-9);
    }

    #[test]
    fn detector_levels_and_failures() {
        let k = CameraIntrinsics::default();
        let g = TargetGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let det = synthetic_detect(
            &facing_at(1.0),
            &k,
            &g,
            &FailureModel::default(),
            &mut rng,
            0.5,
        )
        .unwrap();
        assert_eq!(det.level, DetectionLevel::Best);
        assert_eq!(det.timestamp, 0.5);
        assert_eq!(det.keypoints.len(), 8);
        assert!(det.bbox.u_min < det.bbox.u_max && det.bbox.v_min < det.bbox.v_max);

        let behind = Pose {
            position: Vec3::new(0.0, 0.0, -1.0),
            orientation: facing_rotation(),
        };
        assert!(
            synthetic_detect(&behind, &k, &g, &FailureModel::default(), &mut rng, 0.0).is_none()
        );

        let always_drop = FailureModel {
            dropout_prob: 1.0,
            jitter_px: 0.0,
        };
        for _ in 0..50 {
            assert!(
                synthetic_detect(&facing_at(1.0), &k, &g, &always_drop, &mut rng, 0.0).is_none()
            );
        }
    }

    #[test]
    fn levels_are_ordered_by_distance() {
        let k = CameraIntrinsics::default();
        let g = TargetGeometry::default();
        let mut previous = DetectionLevel::Best;
        for i in 0..200 {
            let depth = 0.3 + 0.02 * i as f64;
            let level = g.grade(&k, &facing_at(depth)).unwrap();
            assert!(
                level <= previous,
                "level rose from {previous:?} to {level:?} at {depth} m"
            );
            previous = level;
        }
        assert_eq!(previous, DetectionLevel::Good);
    }

    #[test]
    fn correspondences_from_detection() {
        let k = CameraIntrinsics::default();
        let g = TargetGeometry::default();
        let pose = facing_at(1.2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let det = synthetic_detect(&pose, &k, &g, &FailureModel::default(), &mut rng, 0.0).unwrap();
        for c in detection_to_correspondences(&det, &g).unwrap() {
            assert_eq!(c.pixel, project(&k, &pose, &c.point_target).unwrap());
        }

        let sigma = 1.0;
        let noisy = FailureModel {
            dropout_prob: 0.0,
            jitter_px: sigma,
        };
        for _ in 0..100 {
            let det = synthetic_detect(&pose, &k, &g, &noisy, &mut rng, 0.0).unwrap();
            for c in detection_to_correspondences(&det, &g).unwrap() {
                let exact = project(&k, &pose, &c.point_target).unwrap();
                assert!((c.pixel[0] - exact[0]).abs() <= 5.0 * sigma);
                assert!((c.pixel[1] - exact[1]).abs() <= 5.0 * sigma);
            }
        }

        let sparse = Detection {
            keypoints: det.keypoints[..3].to_vec(),
            ..det
        };
        assert_eq!(
            detection_to_correspondences(&sparse, &g),
            Err(PerceptionError::TooFewCorrespondences(3))
        );
    }
}
