//! The teleoperation pipeline over the simulated plant.
//!
//! Each control tick takes the latest glove frame per hand, maps it through
//! the hand's active type into joint targets, drives the arm toward the wrist
//! pose with the velocity controller, and steps the plant. Only the newest
//! glove frame is kept; producers never wait on the loop.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{rest_configuration, step_plant, PlantConfig, PlantState, Side};
use crate::arm_control::{control_step, ControlState, ControllerConfig, VelocityCommand};
use crate::hand_model::{adjust_type, FingerSelector, HandKinematicModel, IkOptions, JointVector, KinematicsError, Pose};
use crate::mapping::{frame_ratios, map_ratios, CalibrationPair, HumanHandFrame, MappingAssignment, MappingError};
use crate::teach::{AdmittanceParams, ForceGains, MotorReading, TeachController, TeachError, TeachRecording};
use crate::type_library::{Library, ManipulationType};

/// Duration of the blend from the current joints to a newly selected type.
pub const TYPE_SWITCH_RAMP_S: f64 = 0.5;

/// Closure ratio above which a hand counts as holding an object.
const HOLD_RATIO: f64 = 0.8;

/// Motor current per radian of deviation synthesized while teaching.
const TEACH_AMPS_PER_RAD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RigError {
    #[error("unknown type {0:?}")]
    UnknownType(String),
    #[error("no active type on the {0:?} hand")]
    NoActiveType(Side),
    #[error("no chain named {0:?}")]
    UnknownChain(String),
    #[error("the {0:?} hand is already teaching")]
    AlreadyTeaching(Side),
    #[error("the {0:?} hand is not teaching")]
    NotTeaching(Side),
    #[error(transparent)]
    Mapping(#[from] MappingError),
    #[error(transparent)]
    Kinematics(#[from] KinematicsError),
    #[error(transparent)]
    Teach(#[from] TeachError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Ramp {
    from: JointVector,
    start_tick: u64,
}

/// Per-hand teleoperation state.
#[derive(Debug, Clone, PartialEq)]
pub struct HandChannel {
    /// The active type, possibly adjusted away from its library entry.
    pub active: Option<ManipulationType>,
    pub assignment: Option<MappingAssignment>,
    pub calibration: CalibrationPair,
    pub latest_frame: Option<HumanHandFrame>,
    pub ratios: Vec<f64>,
    pub target: JointVector,
    /// Type the current target was interpolated from.
    pub target_source: Option<String>,
    pub teach: Option<TeachController>,
    ramp: Option<Ramp>,
}

/// Two arms and two hands under teleoperation.
#[derive(Debug, Clone, PartialEq)]
pub struct Rig {
    model: Arc<HandKinematicModel>,
    library: Arc<Library>,
    pub controller: ControllerConfig,
    pub plant_config: PlantConfig,
    pub admittance: AdmittanceParams,
    pub force_gains: ForceGains,
    pub plant: PlantState,
    pub control: [ControlState; 2],
    pub hands: [HandChannel; 2],
    pub last_commands: [VelocityCommand; 2],
    tick: u64,
    rng: ChaCha8Rng,
}

/// Starting wrist poses of the left and right arm.
pub fn home_poses() -> [Pose; 2] {
    use nalgebra::Vector3;
    [
        Pose::from_translation(Vector3::new(0.35, 0.25, 0.30)),
        Pose::from_translation(Vector3::new(0.35, -0.25, 0.30)),
    ]
}

impl Rig {
    pub fn new(
        model: Arc<HandKinematicModel>,
        library: Arc<Library>,
        controller: ControllerConfig,
        plant_config: PlantConfig,
        seed: u64,
    ) -> Self {
        let arms = home_poses();
        let plant = PlantState::new(&model, arms);
        let rest = rest_configuration(&model);
        let channel = HandChannel {
            active: None,
            assignment: None,
            calibration: CalibrationPair::nominal(),
            latest_frame: None,
            ratios: vec![0.0; 5],
            target: rest,
            target_source: None,
            teach: None,
            ramp: None,
        };
        let still = VelocityCommand { linear: Default::default(), angular: Default::default(), tick: 0 };
        Self {
            control: arms.map(|p| ControlState::at_rest(p, &controller)),
            hands: [channel.clone(), channel],
            last_commands: [still, still],
            model,
            library,
            controller,
            plant_config,
            admittance: AdmittanceParams { dt: 1.0 / controller.loop_hz, ..Default::default() },
            force_gains: ForceGains::default(),
            plant,
            tick: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn model(&self) -> &HandKinematicModel {
        &self.model
    }

    pub fn library(&self) -> &Arc<Library> {
        &self.library
    }

    pub fn set_library(&mut self, library: Arc<Library>) {
        self.library = library;
    }

    /// Number of ticks run so far.
    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn hand(&self, side: Side) -> &HandChannel {
        &self.hands[side.index()]
    }

    /// Makes `id` the active type of `side`. The hand target blends from the
    /// hand's current joints to the new type over [`TYPE_SWITCH_RAMP_S`].
    pub fn select_type(&mut self, side: Side, id: &str) -> Result<(), RigError> {
        let ty = self.library.get(id).ok_or_else(|| RigError::UnknownType(id.into()))?.clone();
        let assignment = MappingAssignment::default_for(&self.model, &ty.id);
        let from = self.plant.hands[side.index()].clone();
        let h = &mut self.hands[side.index()];
        h.active = Some(ty);
        h.assignment = Some(assignment);
        h.ramp = Some(Ramp { from, start_tick: self.tick });
        Ok(())
    }

    pub fn clear_type(&mut self, side: Side) {
        let h = &mut self.hands[side.index()];
        h.active = None;
        h.assignment = None;
        h.ramp = None;
    }

    pub fn set_calibration(&mut self, side: Side, calibration: CalibrationPair) -> Result<(), RigError> {
        calibration.validate()?;
        self.hands[side.index()].calibration = calibration;
        Ok(())
    }

    /// Stores the newest glove frame for `side`, replacing any older one.
    pub fn set_glove(&mut self, side: Side, frame: HumanHandFrame) {
        self.hands[side.index()].latest_frame = Some(frame);
    }

    /// Applies a fingertip transform to both postures of the active type.
    pub fn adjust_fingertip(&mut self, side: Side, chain: &str, t_delta: &Pose) -> Result<(), RigError> {
        let chain_idx = self.model.chain_index(chain).ok_or_else(|| RigError::UnknownChain(chain.into()))?;
        let ty = self.hands[side.index()].active.as_ref().ok_or(RigError::NoActiveType(side))?;
        let options = IkOptions::default();
        let stretch = adjust_type(&self.model, &ty.stretch_posture, FingerSelector::One(chain_idx), t_delta, &options)?;
        let contract = adjust_type(&self.model, &ty.contract_posture, FingerSelector::One(chain_idx), t_delta, &options)?;
        let ty = self.hands[side.index()].active.as_mut().expect("checked above");
        ty.stretch_posture = stretch;
        ty.contract_posture = contract;
        Ok(())
    }

    /// Starts admittance teaching on `side` from the hand's current joints.
    pub fn start_teach(&mut self, side: Side) -> Result<(), RigError> {
        let anchor = self.plant.hands[side.index()].clone();
        let h = &mut self.hands[side.index()];
        if h.teach.is_some() {
            return Err(RigError::AlreadyTeaching(side));
        }
        h.teach = Some(TeachController::new(anchor, self.admittance, self.force_gains)?);
        Ok(())
    }

    pub fn mark_teach_frame(&mut self, side: Side, contract: bool) -> Result<(), RigError> {
        let teach = self.hands[side.index()].teach.as_mut().ok_or(RigError::NotTeaching(side))?;
        if contract {
            teach.recording.mark_contract();
        } else {
            teach.recording.mark_stretch();
        }
        Ok(())
    }

    /// Ends teaching on `side` and returns what was recorded. The hand holds
    /// its last taught posture.
    pub fn stop_teach(&mut self, side: Side) -> Result<TeachRecording, RigError> {
        let h = &mut self.hands[side.index()];
        let teach = h.teach.take().ok_or(RigError::NotTeaching(side))?;
        h.ramp = Some(Ramp { from: self.plant.hands[side.index()].clone(), start_tick: self.tick });
        Ok(teach.recording)
    }

    fn mapped(&self, side: Side) -> Result<Option<(JointVector, Vec<f64>)>, RigError> {
        let h = &self.hands[side.index()];
        let (Some(ty), Some(assignment)) = (&h.active, &h.assignment) else {
            return Ok(None);
        };
        let ratios = match &h.latest_frame {
            Some(frame) => frame_ratios(frame, &h.calibration)?,
            None => vec![0.0; h.calibration.fingers.len()],
        };
        Ok(Some((map_ratios(&ratios, ty, assignment, &self.model)?, ratios)))
    }

    fn hand_target(&mut self, side: Side) -> Result<(), RigError> {
        let i = side.index();
        let mapped = self.mapped(side)?;
        let dt = self.controller.dt();
        let tick = self.tick;
        let model = self.model.clone();
        let h = &mut self.hands[i];
        if let Some(teach) = &mut h.teach {
            let commanded = teach.commanded(&model);
            let measured = mapped.as_ref().map_or_else(|| commanded.to_vec(), |(q, _)| q.to_vec());
            let reading = MotorReading {
                current_magnitude: measured.iter().zip(commanded.iter()).map(|(m, c)| TEACH_AMPS_PER_RAD * (m - c).abs()).collect(),
                q_commanded: commanded.to_vec(),
                q_measured: measured,
                q_dot_measured: vec![0.0; commanded.len()],
            };
            h.target = teach.step(&reading, &model)?;
            h.target_source = None;
            if let Some((_, ratios)) = mapped {
                h.ratios = ratios;
            }
            return Ok(());
        }
        let Some((q, ratios)) = mapped else {
            return Ok(());
        };
        let target = match &h.ramp {
            Some(ramp) => {
                let s = ((tick - ramp.start_tick) as f64 * dt / TYPE_SWITCH_RAMP_S).min(1.0);
                if s >= 1.0 {
                    h.ramp = None;
                    q
                } else {
                    let blended: Vec<f64> = ramp.from.iter().zip(q.iter()).map(|(a, b)| a + (b - a) * s).collect();
                    JointVector::new(blended)
                }
            }
            None => q,
        };
        h.target = target;
        h.target_source = h.active.as_ref().map(|t| t.id.clone());
        h.ratios = ratios;
        Ok(())
    }

    /// Runs one control tick and returns the command sent to each arm.
    pub fn step(&mut self) -> Result<[VelocityCommand; 2], RigError> {
        for side in Side::BOTH {
            self.hand_target(side)?;
            let i = side.index();
            if let Some(frame) = &self.hands[i].latest_frame {
                self.control[i].target = frame.wrist;
            }
        }
        let mut commands = self.last_commands;
        for i in 0..2 {
            let (state, mut cmd) = control_step(&self.control[i], &self.controller);
            cmd.tick = self.tick;
            self.control[i] = state;
            commands[i] = cmd;
        }
        let targets = [self.hands[0].target.clone(), self.hands[1].target.clone()];
        let mut plant = step_plant(
            &self.plant,
            &commands,
            &targets,
            self.controller.dt(),
            &self.plant_config,
            &self.model,
            &mut self.rng,
        );
        for i in 0..2 {
            let h = &self.hands[i];
            plant.holding[i] = h.active.is_some() && !h.ratios.is_empty() && h.ratios.iter().sum::<f64>() / h.ratios.len() as f64 >= HOLD_RATIO;
            self.control[i].current = plant.arms[i];
        }
        self.plant = plant;
        self.last_commands = commands;
        self.tick += 1;
        Ok(commands)
    }

    /// Commanded arm poses (position and rotation vector) and hand joint
    /// targets, in the proprioception layout.
    pub fn action(&self) -> Vec<f64> {
        let mut a = Vec::with_capacity(super::ACTION_DIM);
        for c in &self.control {
            a.extend(c.target.position.iter());
            a.extend(c.target.rotation_vector().iter());
        }
        for h in &self.hands {
            a.extend(h.target.iter());
        }
        a
    }

    /// Joint origins and fingertip of every chain of `side`, for display.
    pub fn skeleton(&self, side: Side) -> Vec<Vec<[f64; 3]>> {
        let q = &self.plant.hands[side.index()];
        (0..self.model.chains().len())
            .map(|c| {
                self.model
                    .chain_frames(c, q)
                    .map(|frames| frames.iter().map(|f| [f.position.x, f.position.y, f.position.z]).collect())
                    .unwrap_or_default()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rig() -> Rig {
        let model = Arc::new(HandKinematicModel::reference());
        let library = Arc::new(Library::bundled(&model).unwrap());
        Rig::new(model, library, ControllerConfig::default(), PlantConfig::default(), 1)
    }

    #[test]
    fn contracted_glove_reaches_contract_posture() {
        let mut rig = rig();
        rig.select_type(Side::Right, "cyl-thick").unwrap();
        let cal = rig.hand(Side::Right).calibration.clone();
        let mut frame = cal.frame_at(&[1.0; 5], 0.0);
        frame.wrist = home_poses()[1];
        rig.set_glove(Side::Right, frame);
        for _ in 0..60 {
            rig.step().unwrap();
        }
        let contract = &rig.library().get("cyl-thick").unwrap().contract_posture;
        assert_eq!(&rig.hand(Side::Right).target, contract);
        assert!(rig.plant.hands[1].max_abs_diff(contract) < 1e-12);
        assert!(rig.plant.holding[1]);
    }

    #[test]
    fn switch_ramps_over_half_a_second() {
        let mut rig = rig();
        rig.select_type(Side::Right, "cyl-thick").unwrap();
        for _ in 0..40 {
            rig.step().unwrap();
        }
        rig.select_type(Side::Right, "index-poke").unwrap();
        let from = rig.plant.hands[1].clone();
        rig.step().unwrap();
        assert_eq!(rig.hand(Side::Right).target, from);
        let ticks = (TYPE_SWITCH_RAMP_S * rig.controller.loop_hz).ceil() as usize;
        for _ in 0..ticks {
            rig.step().unwrap();
        }
        let stretch = &rig.library().get("index-poke").unwrap().stretch_posture;
        assert_eq!(&rig.hand(Side::Right).target, stretch);
    }

    #[test]
    fn identity_adjustment_keeps_postures() {
        let mut rig = rig();
        rig.select_type(Side::Left, "tripod").unwrap();
        let before = rig.hand(Side::Left).active.clone();
        rig.adjust_fingertip(Side::Left, "index", &Pose::identity()).unwrap();
        assert_eq!(rig.hand(Side::Left).active, before);
        assert!(matches!(
            rig.adjust_fingertip(Side::Right, "index", &Pose::identity()),
            Err(RigError::NoActiveType(Side::Right))
        ));
    }

    #[test]
    fn one_command_per_arm_per_tick() {
        let mut rig = rig();
        for t in 0..10 {
            let cmds = rig.step().unwrap();
            assert!(cmds.iter().all(|c| c.tick == t));
        }
        assert_eq!(rig.tick(), 10);
    }

    #[test]
    fn action_and_skeleton_shapes() {
        let rig = rig();
        assert_eq!(rig.action().len(), 44);
        let sk = rig.skeleton(Side::Left);
        assert_eq!(sk.len(), 4);
        assert!(sk.iter().all(|c| c.len() == 5));
    }
}
