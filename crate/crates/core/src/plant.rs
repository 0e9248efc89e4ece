//! Simulated vehicle and compliant-arm contact model.
//!
//! Two translational plants share one state type:
//!
//! - kinematic: `ṗ = u`, the velocity command is tracked perfectly;
//! - dynamic: `m p̈ + m G = F_p + F_ext`, where `F_p` comes from a per-axis
//!   velocity PID with gravity feed-forward and a force envelope, standing in
//!   for the flight stack's inner velocity loop.
//!
//! Attitude is reduced to yaw. The arm tip sits at a fixed offset along body
//! +x; when it crosses the contact surface the arm deflects and the spring
//! damper `K_A x_A + D_A ẋ_A` reacts on the vehicle (quasi-static, the arm
//! inertia is not integrated).

use crate::controller::VelocityCommand;
use crate::geometry::{wrap_angle, Pose, RelativePosition, Vec3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STANDARD_GRAVITY: f64 = 9.81;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("invalid plant parameter: {0}")]
    InvalidParams(&'static str),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("plant diverged at t = {time:.3} s (speed {speed:.3} m/s exceeds {limit:.3} m/s); check the velocity-loop gains")]
    Instability { time: f64, speed: f64, limit: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmParams {
    /// Arm inertia, kg. Carried for completeness; the contact model is quasi-static.
    pub m_a: f64,
    /// Damping, N·s/m.
    pub d_a: f64,
    /// Stiffness, N/m.
    pub k_a: f64,
}

impl Default for ArmParams {
    fn default() -> Self {
        Self {
            m_a: 0.1,
            d_a: 5.0,
            k_a: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    pub mass: f64,
    pub g: f64,
    pub pid_velocity: PidGains,
    /// Per-axis bound on the maneuvering force (PID output), N.
    pub f_max: f64,
    pub arm: ArmParams,
    pub dt: f64,
    /// Arm tip offset along body +x, m.
    pub end_effector_offset: f64,
    /// Speed above which the dynamic plant is declared unstable, m/s.
    pub divergence_speed: f64,
}

impl Default for PlantParams {
    fn default() -> Self {
        Self {
            mass: 2.5,
            g: STANDARD_GRAVITY,
            pid_velocity: PidGains {
                kp: 10.0,
                ki: 2.0,
                kd: 0.0,
            },
            f_max: 20.0,
            arm: ArmParams::default(),
            dt: 1e-3,
            end_effector_offset: 0.3,
            divergence_speed: 10.0,
        }
    }
}

impl PlantParams {
    pub fn validate(&self) -> Result<(), PlantError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !positive(self.mass) {
            return Err(PlantError::InvalidParams("mass must be positive"));
        }
        if !positive(self.dt) {
            return Err(PlantError::InvalidParams("dt must be positive"));
        }
        if !positive(self.f_max) {
            return Err(PlantError::InvalidParams("f_max must be positive"));
        }
        if !positive(self.arm.k_a) {
            return Err(PlantError::InvalidParams("arm stiffness must be positive"));
        }
        if !nonneg(self.arm.d_a) || !nonneg(self.arm.m_a) {
            return Err(PlantError::InvalidParams(
                "arm damping and mass must be non-negative",
            ));
        }
        if !nonneg(self.g) || !nonneg(self.end_effector_offset) || !positive(self.divergence_speed)
        {
            return Err(PlantError::InvalidParams(
                "gravity, tip offset and divergence speed",
            ));
        }
        let pid = self.pid_velocity;
        if !nonneg(pid.kp) || !nonneg(pid.ki) || !nonneg(pid.kd) {
            return Err(PlantError::InvalidParams(
                "velocity PID gains must be non-negative",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PlantState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub yaw: f64,
    /// Arm penetration into the contact surface, m (zero when free).
    pub arm_deflection: f64,
    pub arm_deflection_rate: f64,
    pub contact_force: f64,
    pub time: f64,
}

impl PlantState {
    pub fn at_rest(position: Vec3, yaw: f64) -> Self {
        Self {
            position,
            yaw: wrap_angle(yaw),
            ..Self::default()
        }
    }

    pub fn body_pose(&self) -> Pose {
        Pose::from_position_yaw(self.position, self.yaw)
    }

    /// World pose of the arm tip.
    pub fn tip_pose(&self, end_effector_offset: f64) -> Pose {
        self.body_pose().compose(&Pose::from_translation(Vec3::new(
            end_effector_offset,
            0.0,
            0.0,
        )))
    }
}

/// Spring-damper reaction of the arm, floored at zero (no adhesion).
pub fn contact_force(penetration: f64, penetration_rate: f64, arm: &ArmParams) -> f64 {
    if penetration <= 0.0 {
        return 0.0;
    }
    (arm.k_a * penetration + arm.d_a * penetration_rate).max(0.0)
}

/// Kinematic plant `ṗ = u`: one explicit Euler step.
pub fn step_kinematic(
    state: &PlantState,
    cmd: &VelocityCommand,
    dt: f64,
) -> Result<PlantState, PlantError> {
    if !(dt > 0.0) {
        return Err(PlantError::InvalidTimeStep(dt));
    }
    Ok(PlantState {
        position: state.position + cmd.linear_world * dt,
        velocity: cmd.linear_world,
        yaw: wrap_angle(state.yaw + cmd.yaw_rate * dt),
        time: state.time + dt,
        ..*state
    })
}

/// Per-axis velocity PID with conditional-integration anti-windup.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VelocityPid {
    integral: Vec3,
    previous_error: Option<Vec3>,
}

impl VelocityPid {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the clamped maneuvering force (gravity feed-forward excluded).
    pub fn update(&mut self, error: &Vec3, gains: &PidGains, f_max: f64, dt: f64) -> Vec3 {
        let derivative = match self.previous_error {
            Some(prev) => (error - prev) / dt,
            None => Vec3::zeros(),
        };
        self.previous_error = Some(*error);
        let mut force = Vec3::zeros();
        for axis in 0..3 {
            let candidate_integral = self.integral[axis] + error[axis] * dt;
            let unclamped = gains.kp * error[axis]
                + gains.ki * candidate_integral
                + gains.kd * derivative[axis];
            if unclamped.abs() <= f_max {
                self.integral[axis] = candidate_integral;
                force[axis] = unclamped;
            } else {
                force[axis] = unclamped.clamp(-f_max, f_max);
            }
        }
        force
    }
}

/// Dynamic plant: mass with PID velocity loop. Owns the PID memory.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicPlant {
    pub params: PlantParams,
    pid: VelocityPid,
}

impl DynamicPlant {
    pub fn new(params: PlantParams) -> Result<Self, PlantError> {
        params.validate()?;
        Ok(Self {
            params,
            pid: VelocityPid::new(),
        })
    }

    /// One semi-implicit Euler step. `external_force` is the world-frame
    /// reaction from the arm (zero when not in contact).
    pub fn step(
        &mut self,
        state: &PlantState,
        cmd: &VelocityCommand,
        external_force: &Vec3,
        dt: f64,
    ) -> Result<PlantState, PlantError> {
        if !(dt > 0.0) {
            return Err(PlantError::InvalidTimeStep(dt));
        }
        let p = &self.params;
        let error = cmd.linear_world - state.velocity;
        let maneuver = self.pid.update(&error, &p.pid_velocity, p.f_max, dt);
        let weight = p.mass * p.g;
        // F_p = maneuver + m g ẑ; the feed-forward cancels gravity exactly
        let thrust = maneuver + Vec3::new(0.0, 0.0, weight);
        let net = Vec3::new(
            thrust.x + external_force.x,
            thrust.y + external_force.y,
            (thrust.z - weight) + external_force.z,
        );
        let velocity = state.velocity + net / p.mass * dt;
        let speed = velocity.norm();
        if !(speed <= p.divergence_speed) {
            return Err(PlantError::Instability {
                time: state.time + dt,
                speed,
                limit: p.divergence_speed,
            });
        }
        Ok(PlantState {
            position: state.position + velocity * dt,
            velocity,
            yaw: wrap_angle(state.yaw + cmd.yaw_rate * dt),
            time: state.time + dt,
            ..*state
        })
    }
}

/// Kinematic or dynamic plant plus the contact surface the arm can touch.
#[derive(Debug, Clone, PartialEq)]
pub enum PlantModel {
    Kinematic(PlantParams),
    Dynamic(DynamicPlant),
}

impl PlantModel {
    pub fn params(&self) -> &PlantParams {
        match self {
            Self::Kinematic(p) => p,
            Self::Dynamic(d) => &d.params,
        }
    }

    /// Advances one plant step and refreshes the arm contact state against
    /// the plane `x = 0` of `world_from_surface`.
    pub fn step(
        &mut self,
        state: &PlantState,
        cmd: &VelocityCommand,
        world_from_surface: &Pose,
    ) -> Result<PlantState, PlantError> {
        let dt = self.params().dt;
        let mut next = match self {
            Self::Kinematic(_) => step_kinematic(state, cmd, dt)?,
            Self::Dynamic(plant) => {
                // reaction pushes the vehicle back out along the surface normal
                let normal = world_from_surface
                    .orientation
                    .matrix()
                    .column(0)
                    .into_owned();
                let f_ext = normal * state.contact_force;
                plant.step(state, cmd, &f_ext, dt)?
            }
        };
        let params = *self.params();
        update_contact(&mut next, state, &params, world_from_surface);
        Ok(next)
    }
}

fn update_contact(
    next: &mut PlantState,
    prev: &PlantState,
    params: &PlantParams,
    world_from_surface: &Pose,
) {
    let tip = next.tip_pose(params.end_effector_offset);
    let rel = RelativePosition::of_point(&tip.position, world_from_surface);
    let penetration = (-rel.x).max(0.0);
    let dt = next.time - prev.time;
    next.arm_deflection = penetration;
    next.arm_deflection_rate = if dt > 0.0 {
        (penetration - prev.arm_deflection) / dt
    } else {
        0.0
    };
    next.contact_force = contact_force(penetration, next.arm_deflection_rate, &params.arm);
}
