//! Scenario files: every tunable of a run, with units spelled out in the keys.

use crate::cbf::BarrierParams;
use crate::controller::ControllerGains;
use crate::edge_link::{DelayModel, LinkDelays};
use crate::geometry::{Pose, RotationMatrix, Vec3};
use crate::perception::{CameraIntrinsics, FailureModel, TargetGeometry};
use crate::plant::{ArmParams, PidGains, PlantParams, STANDARD_GRAVITY};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use std::path::Path;

use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantVariant {
    Kinematic,
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerceptionMode {
    /// The controller sees the true target pose.
    GroundTruth,
    /// Target pose from the synthetic detector and PnP, through the edge link.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub duration_s: f64,
    pub control_rate_hz: f64,
    pub perception_rate_hz: f64,
    pub plant_variant: PlantVariant,
    pub perception_mode: PerceptionMode,
    /// Position setpoint depth behind the contact point, m.
    pub setpoint_depth_m: f64,
    /// Standard deviation of additive noise on the odometry position, m.
    pub odometry_noise_m: f64,
    pub plant: PlantSection,
    pub controller: ControllerSection,
    pub barrier: BarrierSection,
    pub initial: InitialSection,
    pub target: TargetSection,
    pub camera: CameraSection,
    pub marker: MarkerSection,
    pub detector: DetectorSection,
    pub link: LinkSection,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "scenario".into(),
            seed: 0,
            duration_s: 30.0,
            control_rate_hz: 100.0,
            perception_rate_hz: 10.0,
            plant_variant: PlantVariant::Kinematic,
            perception_mode: PerceptionMode::GroundTruth,
            setpoint_depth_m: 0.02,
            odometry_noise_m: 0.0,
            plant: PlantSection::default(),
            controller: ControllerSection::default(),
            barrier: BarrierSection::default(),
            initial: InitialSection::default(),
            target: TargetSection::default(),
            camera: CameraSection::default(),
            marker: MarkerSection::default(),
            detector: DetectorSection::default(),
            link: LinkSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantSection {
    pub mass_kg: f64,
    pub gravity_mps2: f64,
    pub dt_s: f64,
    pub f_max_n: f64,
    pub end_effector_offset_m: f64,
    pub divergence_speed_mps: f64,
    pub velocity_pid: PidSection,
    pub arm: ArmSection,
}

impl Default for PlantSection {
    fn default() -> Self {
        let p = PlantParams::default();
        Self {
            mass_kg: p.mass,
            gravity_mps2: STANDARD_GRAVITY,
            dt_s: p.dt,
            f_max_n: p.f_max,
            end_effector_offset_m: p.end_effector_offset,
            divergence_speed_mps: p.divergence_speed,
            velocity_pid: PidSection::default(),
            arm: ArmSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PidSection {
    pub kp_n_s_per_m: f64,
    pub ki_n_per_m: f64,
    pub kd_n_s2_per_m: f64,
}

impl Default for PidSection {
    fn default() -> Self {
        let g = PlantParams::default().pid_velocity;
        Self {
            kp_n_s_per_m: g.kp,
            ki_n_per_m: g.ki,
            kd_n_s2_per_m: g.kd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmSection {
    pub mass_kg: f64,
    pub damping_n_s_per_m: f64,
    pub stiffness_n_per_m: f64,
}

impl Default for ArmSection {
    fn default() -> Self {
        let a = ArmParams::default();
        Self {
            mass_kg: a.m_a,
            damping_n_s_per_m: a.d_a,
            stiffness_n_per_m: a.k_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerSection {
    /// Row-major 3×3 position gain, world frame.
    pub kp_per_s: [[f64; 3]; 3],
    pub k_psi_per_s: f64,
    pub v_max_mps: f64,
    pub yaw_rate_max_radps: f64,
    /// Desired yaw; when absent the vehicle faces the target surface.
    pub desired_yaw_rad: Option<f64>,
}

impl Default for ControllerSection {
    fn default() -> Self {
        Self {
            kp_per_s: [[0.5, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.0, 0.5]],
            k_psi_per_s: 1.0,
            v_max_mps: 1.0,
            yaw_rate_max_radps: 0.5,
            desired_yaw_rad: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BarrierSection {
    pub a_sqrt_m: f64,
    pub gamma_per_s: f64,
    pub l_eps_m: f64,
}

impl Default for BarrierSection {
    fn default() -> Self {
        let b = BarrierParams::default();
        Self {
            a_sqrt_m: b.a,
            gamma_per_s: b.gamma,
            l_eps_m: b.l_eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialSection {
    /// Body origin, world frame.
    pub position_m: [f64; 3],
    pub yaw_rad: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            position_m: [-3.3, 0.0, 1.5],
            yaw_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    /// Contact point, world frame.
    pub position_m: [f64; 3],
    /// Orientation of the target frame; its +x axis is the outward surface normal.
    pub yaw_rad: f64,
    pub pitch_rad: f64,
    pub roll_rad: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            position_m: [0.0, 0.0, 1.5],
            yaw_rad: std::f64::consts::PI,
            pitch_rad: 0.0,
            roll_rad: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CameraSection {
    pub fx_px: f64,
    pub fy_px: f64,
    pub cx_px: f64,
    pub cy_px: f64,
    pub width_px: f64,
    pub height_px: f64,
    /// Optical centre in the body frame. The optical axis is body +x.
    pub mount_position_m: [f64; 3],
}

impl Default for CameraSection {
    fn default() -> Self {
        let k = CameraIntrinsics::default();
        Self {
            fx_px: k.fx,
            fy_px: k.fy,
            cx_px: k.cx,
            cy_px: k.cy,
            width_px: k.width,
            height_px: k.height,
            mount_position_m: [0.1, 0.0, 0.02],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkerSection {
    pub outer_half_size_m: f64,
    pub middle_half_size_m: f64,
    pub inner_radius_m: f64,
    pub best_min_area_px2: f64,
    pub better_min_area_px2: f64,
    /// Explicit keypoints, target frame; defaults to outer corners plus
    /// inner-circle extremes.
    pub keypoints_m: Option<Vec<[f64; 3]>>,
}

impl Default for MarkerSection {
    fn default() -> Self {
        let g = TargetGeometry::default();
        Self {
            outer_half_size_m: g.outer_half_size,
            middle_half_size_m: g.middle_half_size,
            inner_radius_m: g.inner_radius,
            best_min_area_px2: g.best_min_area_px2,
            better_min_area_px2: g.better_min_area_px2,
            keypoints_m: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub dropout_prob: f64,
    pub jitter_px: f64,
    /// Edge compute time per request, s.
    pub processing_time_s: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            dropout_prob: 0.0,
            jitter_px: 0.0,
            processing_time_s: 0.03,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkSection {
    pub tau_max_s: f64,
    pub loss_prob: f64,
    pub uplink: DelayModel,
    pub downlink: DelayModel,
}

impl Default for LinkSection {
    fn default() -> Self {
        Self {
            tau_max_s: 0.1,
            loss_prob: 0.0,
            uplink: DelayModel::Constant { delay_s: 0.01 },
            downlink: DelayModel::Constant { delay_s: 0.01 },
        }
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidConfig(msg.into())
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let config: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn plant_params(&self) -> PlantParams {
        let p = &self.plant;
        PlantParams {
            mass: p.mass_kg,
            g: p.gravity_mps2,
            pid_velocity: PidGains {
                kp: p.velocity_pid.kp_n_s_per_m,
                ki: p.velocity_pid.ki_n_per_m,
                kd: p.velocity_pid.kd_n_s2_per_m,
            },
            f_max: p.f_max_n,
            arm: ArmParams {
                m_a: p.arm.mass_kg,
                d_a: p.arm.damping_n_s_per_m,
                k_a: p.arm.stiffness_n_per_m,
            },
            dt: p.dt_s,
            end_effector_offset: p.end_effector_offset_m,
            divergence_speed: p.divergence_speed_mps,
        }
    }

    pub fn gains(&self) -> ControllerGains {
        let c = &self.controller;
        ControllerGains {
            kp: Matrix3::from_fn(|i, j| c.kp_per_s[i][j]),
            k_psi: c.k_psi_per_s,
            v_max: c.v_max_mps,
            yaw_rate_max: c.yaw_rate_max_radps,
        }
    }

    pub fn barrier_params(&self) -> BarrierParams {
        BarrierParams {
            a: self.barrier.a_sqrt_m,
            gamma: self.barrier.gamma_per_s,
            l_eps: self.barrier.l_eps_m,
        }
    }

    pub fn target_pose(&self) -> Pose {
        let t = &self.target;
        Pose {
            position: Vec3::from(t.position_m),
            orientation: RotationMatrix::from_yaw_pitch_roll(t.yaw_rad, t.pitch_rad, t.roll_rad),
        }
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        let c = &self.camera;
        CameraIntrinsics {
            fx: c.fx_px,
            fy: c.fy_px,
            cx: c.cx_px,
            cy: c.cy_px,
            width: c.width_px,
            height: c.height_px,
        }
    }

    /// Optical frame (z forward, x right, y down) mounted looking along body +x.
    pub fn body_from_camera(&self) -> Pose {
        let optical = RotationMatrix::from_matrix(Matrix3::new(
            0.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, -1.0, 0.0,
        ))
        .expect("constant rotation");
        Pose {
            position: Vec3::from(self.camera.mount_position_m),
            orientation: optical,
        }
    }

    pub fn target_geometry(&self) -> TargetGeometry {
        let m = &self.marker;
        let mut g = TargetGeometry::concentric(
            m.outer_half_size_m,
            m.middle_half_size_m,
            m.inner_radius_m,
            m.best_min_area_px2,
            m.better_min_area_px2,
        );
        if let Some(points) = &m.keypoints_m {
            g.keypoints = points.iter().map(|p| Vec3::from(*p)).collect();
        }
        g
    }

    pub fn failure_model(&self) -> FailureModel {
        FailureModel {
            dropout_prob: self.detector.dropout_prob,
            jitter_px: self.detector.jitter_px,
        }
    }

    /// Link model; its seed is derived from the scenario seed so one override
    /// reseeds every random stream.
    pub fn link_delays(&self) -> LinkDelays {
        LinkDelays {
            uplink: self.link.uplink,
            downlink: self.link.downlink,
            loss_prob: self.link.loss_prob,
            seed: self.seed ^ 0x9e37_79b9_7f4a_7c15,
        }
    }

    /// Plant steps per control period.
    pub fn substeps(&self) -> Result<u64, ScenarioError> {
        let ratio = 1.0 / (self.control_rate_hz * self.plant.dt_s);
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-6 {
            return Err(invalid(format!(
                "control period {} s is not a whole number of plant steps of {} s",
                1.0 / self.control_rate_hz,
                self.plant.dt_s
            )));
        }
        Ok(n as u64)
    }

    /// Control ticks per perception request.
    pub fn perception_divider(&self) -> u64 {
        (self.control_rate_hz / self.perception_rate_hz)
            .round()
            .max(1.0) as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.duration_s) {
            return Err(invalid("duration_s must be positive"));
        }
        if !positive(self.control_rate_hz) || !positive(self.perception_rate_hz) {
            return Err(invalid("rates must be positive"));
        }
        if !(self.setpoint_depth_m >= 0.0 && self.setpoint_depth_m.is_finite()) {
            return Err(invalid("setpoint_depth_m must be non-negative"));
        }
        if !(self.odometry_noise_m >= 0.0 && self.odometry_noise_m.is_finite()) {
            return Err(invalid("odometry_noise_m must be non-negative"));
        }
        self.plant_params()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.substeps()?;
        self.gains()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.barrier_params()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.intrinsics()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        self.link_delays()
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !positive(self.link.tau_max_s) {
            return Err(invalid("tau_max_s must be positive"));
        }
        if !(0.0..=1.0).contains(&self.detector.dropout_prob) {
            return Err(invalid("dropout_prob must be in [0, 1]"));
        }
        if !(self.detector.jitter_px >= 0.0) || !(self.detector.processing_time_s >= 0.0) {
            return Err(invalid(
                "jitter_px and processing_time_s must be non-negative",
            ));
        }
        let m = &self.marker;
        if !(positive(m.outer_half_size_m)
            && positive(m.middle_half_size_m)
            && positive(m.inner_radius_m))
        {
            return Err(invalid("marker sizes must be positive"));
        }
        if self.target_geometry().keypoints.len() < 4 {
            return Err(invalid("marker needs at least 4 keypoints"));
        }
        let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        if !finite3(&self.initial.position_m)
            || !finite3(&self.target.position_m)
            || !self.initial.yaw_rad.is_finite()
        {
            return Err(invalid("initial and target poses must be finite"));
        }
        Ok(())
    }
}
