//! Closed-loop scenario runner.
//!
//! Wires perception → edge link → controller → plant on one simulation clock
//! and records a time series of what happened. Runs are fully determined by
//! the scenario file and its seed.

mod metrics;
mod output;
mod scenario;
pub mod svg;

pub use metrics::{compute_metrics, MetricsError, RunSummary, ALIGNMENT_TOLERANCE_M};
pub use output::{emit_outputs, read_run_csv, write_run_csv, CSV_HEADER};
pub use scenario::*;

use crate::cbf::{barrier_value, BarrierParams};
use crate::controller::{facing_yaw, Controller, VelocityCommand};
use crate::edge_link::{latest_valid_estimate, DeliveryLog, DeliveryRecord, EdgeChannel, Outcome};
use crate::geometry::{wrap_angle, Pose, RelativePosition, Vec3};
use crate::perception::{
    coarse_pose_guess, detection_to_correspondences, facing_rotation, planar_pose_guess, solve_pnp,
    synthetic_detect,
};
use crate::plant::{DynamicPlant, PlantError, PlantModel, PlantState};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("could not parse scenario: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("{source}")]
    Instability {
        source: PlantError,
        /// Everything logged up to the failure.
        partial: Box<RunReport>,
    },
    #[error(transparent)]
    Plant(PlantError),
}

/// What the perception pipeline reported during one logged sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PerceptionEvent {
    Accepted,
    IgnoredStale,
    Lost,
    NoDetection,
}

impl PerceptionEvent {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Accepted => "accepted",
            Self::IgnoredStale => "ignored_stale",
            Self::Lost => "lost",
            Self::NoDetection => "no_detection",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "accepted" => Self::Accepted,
            "ignored_stale" => Self::IgnoredStale,
            "lost" => Self::Lost,
            "no_detection" => Self::NoDetection,
            _ => return None,
        })
    }
}

impl From<Outcome> for PerceptionEvent {
    fn from(o: Outcome) -> Self {
        match o {
            Outcome::Accepted => Self::Accepted,
            Outcome::IgnoredStale => Self::IgnoredStale,
            Outcome::Lost => Self::Lost,
        }
    }
}

/// Perception column of one sample: `ground_truth`, `idle`, or the events
/// in order joined by `|`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PerceptionOutcome {
    GroundTruth,
    #[default]
    Idle,
    Events(Vec<PerceptionEvent>),
}

impl PerceptionOutcome {
    pub fn events(&self) -> &[PerceptionEvent] {
        match self {
            Self::Events(e) => e,
            _ => &[],
        }
    }

    fn push(&mut self, event: PerceptionEvent) {
        match self {
            Self::Events(e) => e.push(event),
            _ => *self = Self::Events(vec![event]),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ground_truth" => Some(Self::GroundTruth),
            "idle" => Some(Self::Idle),
            _ => s
                .split('|')
                .map(PerceptionEvent::parse)
                .collect::<Option<Vec<_>>>()
                .map(Self::Events),
        }
    }
}

impl fmt::Display for PerceptionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::GroundTruth => f.write_str("ground_truth"),
            Self::Idle => f.write_str("idle"),
            Self::Events(events) => {
                for (i, e) in events.iter().enumerate() {
                    if i > 0 {
                        f.write_str("|")?;
                    }
                    f.write_str(e.as_str())?;
                }
                Ok(())
            }
        }
    }
}

/// One logged instant. Errors `e` are the arm tip's position in the true
/// target frame; `h` is the true barrier value there.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sample {
    pub t: f64,
    pub p: Vec3,
    pub v: Vec3,
    pub h: f64,
    pub e: Vec3,
    pub e_psi: f64,
    pub u: Vec3,
    pub yaw_rate: f64,
    pub contact_force: f64,
    pub perception: PerceptionOutcome,
}

impl Sample {
    /// Rounds every number to the 9 significant digits written to `run.csv`,
    /// so metrics computed in memory and from the file agree exactly.
    fn quantized(mut self) -> Self {
        let q = |x: f64| -> f64 { format!("{x:.8e}").parse().unwrap_or(x) };
        let qv = |v: Vec3| Vec3::new(q(v.x), q(v.y), q(v.z));
        self.t = q(self.t);
        self.p = qv(self.p);
        self.v = qv(self.v);
        self.h = q(self.h);
        self.e = qv(self.e);
        self.e_psi = q(self.e_psi);
        self.u = qv(self.u);
        self.yaw_rate = q(self.yaw_rate);
        self.contact_force = q(self.contact_force);
        self
    }

    /// The arm tip has reached the target plane.
    pub fn in_contact(&self) -> bool {
        self.e.x <= 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub barrier: BarrierParams,
    pub series: Vec<Sample>,
    pub summary: RunSummary,
}

impl RunReport {
    fn from_series(config: &ScenarioConfig, series: Vec<Sample>) -> Self {
        let summary = compute_metrics(&series).unwrap_or_default();
        Self {
            scenario: config.name.clone(),
            barrier: config.barrier_params(),
            series,
            summary,
        }
    }
}

/// Independent random streams, all derived from the scenario seed.
struct Streams {
    detector: ChaCha8Rng,
    odometry: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            detector: stream(1),
            odometry: stream(2),
        }
    }
}

/// Estimated-perception pipeline: detector on the robot, PnP on the edge,
/// replies through the link, hold-last-accepted on the robot.
struct PerceptionPipeline {
    channel: EdgeChannel,
    in_flight: Vec<DeliveryRecord<Pose>>,
    log: DeliveryLog<Pose>,
}

impl PerceptionPipeline {
    fn new(config: &ScenarioConfig) -> Result<Self, ScenarioError> {
        let channel = EdgeChannel::new(config.link_delays(), config.link.tau_max_s)
            .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            channel,
            in_flight: Vec::new(),
            log: DeliveryLog::default(),
        })
    }

    /// Captures a frame at `t` and sends the localization request.
    fn capture(
        &mut self,
        config: &ScenarioConfig,
        t: f64,
        true_body: &Pose,
        odometry_body: &Pose,
        rng: &mut ChaCha8Rng,
        outcome: &mut PerceptionOutcome,
    ) {
        let intrinsics = config.intrinsics();
        let geometry = config.target_geometry();
        let body_from_camera = config.body_from_camera();
        let camera_from_target = true_body
            .compose(&body_from_camera)
            .inverse()
            .compose(&config.target_pose());
        let Some(detection) = synthetic_detect(
            &camera_from_target,
            &intrinsics,
            &geometry,
            &config.failure_model(),
            rng,
            t,
        ) else {
            outcome.push(PerceptionEvent::NoDetection);
            return;
        };
        let Ok(correspondences) = detection_to_correspondences(&detection, &geometry) else {
            outcome.push(PerceptionEvent::NoDetection);
            return;
        };
        let guess = planar_pose_guess(&correspondences, &intrinsics)
            .or_else(|| coarse_pose_guess(&correspondences, &intrinsics, facing_rotation()));
        let Some(solution) = guess.and_then(|g| solve_pnp(&correspondences, &intrinsics, &g).ok())
        else {
            outcome.push(PerceptionEvent::NoDetection);
            return;
        };
        let estimate = odometry_body
            .compose(&body_from_camera)
            .compose(&solution.camera_from_target);
        let record = self
            .channel
            .transmit(t, estimate, config.detector.processing_time_s);
        if record.outcome == Outcome::Lost {
            outcome.push(PerceptionEvent::Lost);
            self.log.insert(record);
        } else {
            self.in_flight.push(record);
        }
    }

    /// Hands every reply that has arrived by `now` to the robot, in arrival order.
    fn deliver(&mut self, now: f64, outcome: &mut PerceptionOutcome) {
        let (mut arrived, waiting): (Vec<_>, Vec<_>) = self
            .in_flight
            .drain(..)
            .partition(|r| r.message.received_at <= now);
        self.in_flight = waiting;
        arrived.sort_by(|a, b| {
            a.message
                .received_at
                .total_cmp(&b.message.received_at)
                .then(a.message.id.cmp(&b.message.id))
        });
        for record in arrived {
            outcome.push(record.outcome.into());
            self.log.insert(record);
        }
    }

    fn current_estimate(&self, now: f64) -> Option<Pose> {
        latest_valid_estimate(&self.log, now).copied()
    }
}

/// Deterministic closed-loop rollout. Stops at contact (arm tip reaches the
/// target plane) or when `duration_s` has elapsed.
pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, ScenarioError> {
    config.validate()?;
    let params = config.plant_params();
    let substeps = config.substeps()?;
    let divider = config.perception_divider();
    let dt = params.dt;
    let target_true = config.target_pose();
    let controller = Controller::new(config.gains(), config.barrier_params())
        .with_setpoint_depth(config.setpoint_depth_m);
    let barrier = config.barrier_params();
    let psi_desired_true = config
        .controller
        .desired_yaw_rad
        .unwrap_or_else(|| facing_yaw(&target_true));

    let mut plant = match config.plant_variant {
        PlantVariant::Kinematic => PlantModel::Kinematic(params),
        PlantVariant::Dynamic => {
            PlantModel::Dynamic(DynamicPlant::new(params).map_err(ScenarioError::Plant)?)
        }
    };
    let mut streams = Streams::new(config.seed);
    let odometry_noise = Normal::new(0.0, config.odometry_noise_m)
        .map_err(|e| ScenarioError::InvalidConfig(e.to_string()))?;
    let mut pipeline = match config.perception_mode {
        PerceptionMode::Estimated => Some(PerceptionPipeline::new(config)?),
        PerceptionMode::GroundTruth => None,
    };

    let mut state = PlantState::at_rest(
        Vec3::from(config.initial.position_m),
        config.initial.yaw_rad,
    );
    let mut series: Vec<Sample> = Vec::new();
    let mut step_index: u64 = 0;
    let mut tick: u64 = 0;

    let record =
        |state: &PlantState, cmd: &VelocityCommand, perception: PerceptionOutcome| -> Sample {
            let tip = state.tip_pose(params.end_effector_offset);
            let rel = RelativePosition::of_point(&tip.position, &target_true);
            Sample {
                t: state.time,
                p: state.position,
                v: state.velocity,
                h: barrier_value(&rel, &barrier),
                e: rel.to_vec(),
                e_psi: wrap_angle(psi_desired_true - state.yaw),
                u: cmd.linear_world,
                yaw_rate: cmd.yaw_rate,
                contact_force: state.contact_force,
                perception,
            }
            .quantized()
        };

    loop {
        let t = state.time;
        let odometry_body = if config.odometry_noise_m > 0.0 {
            let n = Vec3::from_fn(|_, _| odometry_noise.sample(&mut streams.odometry));
            Pose::from_position_yaw(state.position + n, state.yaw)
        } else {
            state.body_pose()
        };

        let mut perception = PerceptionOutcome::Idle;
        let target_for_control = match pipeline.as_mut() {
            None => {
                perception = PerceptionOutcome::GroundTruth;
                Some(target_true)
            }
            Some(pipe) => {
                if tick.is_multiple_of(divider) {
                    pipe.capture(
                        config,
                        t,
                        &state.body_pose(),
                        &odometry_body,
                        &mut streams.detector,
                        &mut perception,
                    );
                }
                pipe.deliver(t, &mut perception);
                pipe.current_estimate(t)
            }
        };

        let cmd = match target_for_control {
            Some(target) => {
                let psi_d = config
                    .controller
                    .desired_yaw_rad
                    .unwrap_or_else(|| facing_yaw(&target));
                let tip = odometry_body.compose(&Pose::from_translation(Vec3::new(
                    params.end_effector_offset,
                    0.0,
                    0.0,
                )));
                controller.step(&tip, &target, psi_d).command
            }
            // nothing localized yet: hold position
            None => VelocityCommand::zero(),
        };

        let sample = record(&state, &cmd, perception);
        let contact = sample.in_contact();
        series.push(sample);
        if contact || t >= config.duration_s {
            break;
        }

        for _ in 0..substeps {
            match plant.step(&state, &cmd, &target_true) {
                Ok(next) => state = next,
                Err(source) => {
                    return Err(ScenarioError::Instability {
                        source,
                        partial: Box::new(RunReport::from_series(config, series)),
                    })
                }
            }
            step_index += 1;
            // integer clock: no drift, strictly increasing
            state.time = step_index as f64 * dt;
            let tip = state.tip_pose(params.end_effector_offset);
            if RelativePosition::of_point(&tip.position, &target_true).x <= 0.0 {
                series.push(record(&state, &cmd, PerceptionOutcome::Idle));
                return Ok(RunReport::from_series(config, series));
            }
        }
        tick += 1;
    }
    Ok(RunReport::from_series(config, series))
}
