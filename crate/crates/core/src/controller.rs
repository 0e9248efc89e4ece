//! Outer-loop contact-approach law.
//!
//! Position error → pseudo-velocity → target frame → barrier filter → world
//! frame → saturation. Yaw is regulated independently by a proportional law.
//! The controlled point is whatever `uav_pose` describes; the simulator passes
//! the end-effector tip so that the funnel apex coincides with the contact
//! point.

use crate::cbf::{self, BarrierParams};
use crate::geometry::{
    from_target_frame, to_target_frame, wrap_angle, Pose, RelativePosition, Vec3,
};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("position gain must be symmetric positive definite")]
    GainNotPositiveDefinite,
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerGains {
    /// Position gain, 1/s, world frame.
    pub kp: Matrix3<f64>,
    /// Yaw gain, 1/s.
    pub k_psi: f64,
    /// Speed limit on the linear command, m/s.
    pub v_max: f64,
    /// Limit on the yaw-rate command, rad/s.
    pub yaw_rate_max: f64,
}

impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: Matrix3::identity(),
            k_psi: 1.0,
            v_max: 1.0,
            yaw_rate_max: 1.0,
        }
    }
}

impl ControllerGains {
    pub fn new(
        kp: Matrix3<f64>,
        k_psi: f64,
        v_max: f64,
        yaw_rate_max: f64,
    ) -> Result<Self, ControllerError> {
        let g = Self {
            kp,
            k_psi,
            v_max,
            yaw_rate_max,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        let asym = (self.kp - self.kp.transpose()).abs().max();
        if !self.kp.iter().all(|v| v.is_finite()) || asym > 1e-12 * (1.0 + self.kp.abs().max()) {
            return Err(ControllerError::GainNotPositiveDefinite);
        }
        if self.kp.symmetric_eigenvalues().iter().any(|&e| e <= 0.0) {
            return Err(ControllerError::GainNotPositiveDefinite);
        }
        for (name, v) in [
            ("k_psi", self.k_psi),
            ("v_max", self.v_max),
            ("yaw_rate_max", self.yaw_rate_max),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ControllerError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Linear velocity (world frame) and yaw rate sent to the flight stack.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear_world: Vec3,
    pub yaw_rate: f64,
}

impl VelocityCommand {
    pub fn zero() -> Self {
        Self::default()
    }
}

/// Everything one controller tick computed, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    pub command: VelocityCommand,
    pub rel: RelativePosition,
    pub h: f64,
    pub on_axis: bool,
    /// True when the barrier filter changed the nominal command.
    pub filter_active: bool,
}

/// `u_W = K_p (p_d - p)`.
pub fn nominal_velocity(p_desired: &Vec3, p: &Vec3, gains: &ControllerGains) -> Vec3 {
    gains.kp * (p_desired - p)
}

/// `ψ̇_d = K_ψ · wrap(ψ_d - ψ)`, taking the shortest way around.
pub fn yaw_rate(psi_desired: f64, psi: f64, gains: &ControllerGains) -> f64 {
    gains.k_psi * wrap_angle(psi_desired - psi)
}

/// Scales `v` down to norm `limit`, keeping its direction.
pub fn saturate(v: &Vec3, limit: f64) -> Vec3 {
    let n = v.norm();
    if n > limit {
        v * (limit / n)
    } else {
        *v
    }
}

/// Yaw that points body +x against the target's +x axis, projected onto the
/// horizontal plane.
pub fn facing_yaw(world_from_target: &Pose) -> f64 {
    let axis = world_from_target.orientation.matrix().column(0);
    (-axis[1]).atan2(-axis[0])
}

/// Contact-approach controller. `setpoint_depth` places the position setpoint
/// that far behind the contact point along the target's -x axis so the
/// approach arrives with a small, nonzero closing speed; zero puts it exactly
/// on the contact point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub gains: ControllerGains,
    pub barrier: BarrierParams,
    pub setpoint_depth: f64,
}

impl Controller {
    pub fn new(gains: ControllerGains, barrier: BarrierParams) -> Self {
        Self {
            gains,
            barrier,
            setpoint_depth: 0.0,
        }
    }

    pub fn with_setpoint_depth(mut self, depth: f64) -> Self {
        self.setpoint_depth = depth;
        self
    }

    pub fn step(&self, uav_pose: &Pose, target_pose: &Pose, psi_desired: f64) -> ControlOutput {
        let rel = RelativePosition::of_point(&uav_pose.position, target_pose);
        let setpoint = target_pose.transform_point(&Vec3::new(-self.setpoint_depth, 0.0, 0.0));
        let u_world = nominal_velocity(&setpoint, &uav_pose.position, &self.gains);
        let u_target = to_target_frame(&u_world, target_pose);

        let eval = cbf::evaluate(&rel, &self.barrier);
        let filtered = if eval.on_axis {
            u_target
        } else {
            cbf::project_onto_constraint(&u_target, &eval.gradient, eval.h, self.barrier.gamma)
        };
        let linear_world = saturate(&from_target_frame(&filtered, target_pose), self.gains.v_max);
        let yaw = yaw_rate(psi_desired, uav_pose.orientation.yaw(), &self.gains)
            .clamp(-self.gains.yaw_rate_max, self.gains.yaw_rate_max);

        ControlOutput {
            command: VelocityCommand {
                linear_world,
                yaw_rate: yaw,
            },
            rel,
            h: eval.h,
            on_axis: eval.on_axis,
            filter_active: filtered != u_target,
        }
    }
}

/// One controller tick with the setpoint on the contact point (the target
/// frame origin) and the approach along the target +x axis.
pub fn control_step(
    uav_pose: &Pose,
    target_pose: &Pose,
    psi_desired: f64,
    gains: &ControllerGains,
    barrier: &BarrierParams,
) -> VelocityCommand {
    Controller::new(*gains, *barrier)
        .step(uav_pose, target_pose, psi_desired)
        .command
}
