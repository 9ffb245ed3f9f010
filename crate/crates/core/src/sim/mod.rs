//! Simulated devices and plant.
//!
//! The plant holds two arms and two hands. Arms integrate velocity commands;
//! hand joints move toward their targets at a bounded rate and never leave
//! their limits.

mod demo;
mod rig;
mod run;
mod track;

use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::arm_control::{integrate, VelocityCommand};
use crate::hand_model::{HandKinematicModel, JointVector, Pose};

pub use demo::{
    read_demo, write_demo, DemoError, DemoHeader, DemoReader, DemoWriter, DemonstrationFrame, Recorder,
    ACTION_DIM, DEMO_MAGIC, DEMO_SCHEMA_VERSION, PROPRIO_DIM,
};
pub use rig::{home_poses, HandChannel, Rig, RigError, TYPE_SWITCH_RAMP_S};
pub use run::{simulate, SimConfig, SimOutput};
pub use track::{GloveTrack, Keyframe, TrackError, TrackFrame};

pub const CONTROL_HZ: u32 = 25;
pub const RECORD_HZ: u32 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    /// Maximum hand joint speed, rad/s.
    pub hand_rate_limit: f64,
    /// Standard deviation of position noise added to each arm step, meters.
    pub arm_noise_std: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self { hand_rate_limit: 2.0, arm_noise_std: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub arms: [Pose; 2],
    pub hands: [JointVector; 2],
    pub holding: [bool; 2],
}

impl PlantState {
    /// Both hands at rest (all joints zero, clamped into the limits), arms at `arms`.
    pub fn new(model: &HandKinematicModel, arms: [Pose; 2]) -> Self {
        let q = rest_configuration(model);
        Self { arms, hands: [q.clone(), q], holding: [false; 2] }
    }

    /// Arm poses as position and rotation vector, then both hands' joints.
    pub fn proprioception(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(PROPRIO_DIM);
        for arm in &self.arms {
            p.extend(arm.position.iter());
            p.extend(arm.rotation_vector().iter());
        }
        for hand in &self.hands {
            p.extend(hand.iter());
        }
        p
    }
}

/// All joints at zero, moved into the limits where zero is outside them.
pub fn rest_configuration(model: &HandKinematicModel) -> JointVector {
    let mut q = vec![0.0; model.dof()];
    model.clamp(&mut q);
    JointVector::new(q)
}

/// Moves every joint of `current` toward `target` by at most `max_step`, then
/// clamps to the joint limits.
pub fn rate_limited(current: &[f64], target: &[f64], max_step: f64, model: &HandKinematicModel) -> JointVector {
    let mut q: Vec<f64> = current
        .iter()
        .zip(target)
        .map(|(c, t)| c + (t - c).clamp(-max_step, max_step))
        .collect();
    model.clamp(&mut q);
    JointVector::new(q)
}

/// Advances the plant by `dt`.
pub fn step_plant<R: Rng + ?Sized>(
    plant: &PlantState,
    arm_commands: &[VelocityCommand; 2],
    hand_targets: &[JointVector; 2],
    dt: f64,
    config: &PlantConfig,
    model: &HandKinematicModel,
    rng: &mut R,
) -> PlantState {
    let mut next = plant.clone();
    for i in 0..2 {
        let mut arm = integrate(&plant.arms[i], &arm_commands[i].linear, &arm_commands[i].angular, dt);
        if config.arm_noise_std > 0.0 {
            let normal = Normal::new(0.0, config.arm_noise_std).expect("finite noise std");
            arm.position += Vector3::from_fn(|_, _| normal.sample(rng));
        }
        next.arms[i] = arm;
        next.hands[i] = rate_limited(&plant.hands[i], &hand_targets[i], config.hand_rate_limit * dt, model);
    }
    next
}
