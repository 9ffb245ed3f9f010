//! Operator session state machine.
//!
//! ```text
//! idle --select_type--> teleoperate --teach_control start--> teach
//!  ^                        |                                  |
//!  +--------- reset --------+---- teach_control stop ----------+
//! ```
//!
//! `reset` returns to idle from every mode, including replay. Every handler
//! checks the whole request before touching state, so a rejected message
//! leaves the session exactly as it was.

use std::sync::Arc;

use base64::Engine as _;
use dextype_core::arm_control::{ControllerConfig, VelocityCommand};
use dextype_core::hand_model::{HandKinematicModel, Pose};
use dextype_core::mapping::{CalibrationPair, HumanHandFrame};
use dextype_core::retrieval::{ManipulationPlan, RetrievalError, TaskRequest};
use dextype_core::sim::{DemonstrationFrame, PlantConfig, Rig, RigError, Side, CONTROL_HZ, RECORD_HZ};
use dextype_core::teach::{record_type, TypeMetadata};
use dextype_core::type_library::Library;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::protocol::{
    AdjustFingertip, Calibrate, ClientMessage, CommandText, ErrorCode, GloveFrame, HandSnapshot, Mode, PlanNotice,
    ProtocolError, SelectType, ServerMessage, Snapshot, TeachAction, TeachControl, WirePose,
};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    /// Make the first step of a retrieved plan active without waiting for
    /// the operator.
    pub auto_apply: bool,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
}

/// Work the session asks its owner to do outside the state machine.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Retrieve { request_id: u64, request: TaskRequest },
    LibraryChanged,
}

#[derive(Debug, Clone, PartialEq)]
struct Replay {
    frames: Vec<DemonstrationFrame>,
    start_tick: u64,
    speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    mode: Mode,
    rig: Rig,
    plan: Option<ManipulationPlan>,
    pending: Option<(u64, String)>,
    next_request: u64,
    teach_hand: Option<Side>,
    replay: Option<Replay>,
    pub clients: usize,
    pub config: SessionConfig,
}

fn illegal(kind: &str, mode: Mode) -> ProtocolError {
    ProtocolError::at(ErrorCode::IllegalTransition, "kind", format!("{kind} is not allowed in {mode:?} mode"))
}

fn finite(values: &[[f64; 3]], field: &str) -> Result<(), ProtocolError> {
    match values.iter().flatten().position(|v| !v.is_finite()) {
        Some(i) => Err(ProtocolError::at(ErrorCode::Schema, format!("{field}[{}]", i / 3), "values must be finite")),
        None => Ok(()),
    }
}

fn to_points(values: &[[f64; 3]]) -> Vec<Vector3<f64>> {
    values.iter().map(|p| Vector3::from(*p)).collect()
}

fn rejected(field: &str, err: impl std::fmt::Display) -> ProtocolError {
    ProtocolError::at(ErrorCode::Rejected, field, err.to_string())
}

/// Checks a glove frame against the calibration finger count.
pub fn validate_glove(frame: &GloveFrame, fingers: usize) -> Result<(), ProtocolError> {
    if frame.fingertips.len() != fingers {
        return Err(ProtocolError::at(
            ErrorCode::Schema,
            "payload.fingertips",
            format!("expected {fingers} fingertips, got {}", frame.fingertips.len()),
        ));
    }
    finite(&frame.fingertips, "payload.fingertips")?;
    if let Some(w) = &frame.wrist {
        finite(&[w.position, w.rotvec], "payload.wrist")?;
    }
    if !frame.timestamp.is_finite() {
        return Err(ProtocolError::at(ErrorCode::Schema, "payload.timestamp", "must be finite"));
    }
    Ok(())
}

impl Session {
    pub fn new(model: Arc<HandKinematicModel>, library: Arc<Library>, config: SessionConfig) -> Self {
        Self {
            mode: Mode::Idle,
            rig: Rig::new(model, library, config.controller, config.plant, config.seed),
            plan: None,
            pending: None,
            next_request: 1,
            teach_hand: None,
            replay: None,
            clients: 0,
            config,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn library(&self) -> &Arc<Library> {
        self.rig.library()
    }

    pub fn plan(&self) -> Option<&ManipulationPlan> {
        self.plan.as_ref()
    }

    pub fn pending_request(&self) -> Option<u64> {
        self.pending.as_ref().map(|(id, _)| *id)
    }

    /// Applies one client message. On error nothing changed.
    pub fn apply(&mut self, message: &ClientMessage) -> Result<Vec<Effect>, ProtocolError> {
        match message {
            ClientMessage::SelectType(m) => self.select_type(m),
            ClientMessage::AdjustFingertip(m) => self.adjust(m),
            ClientMessage::CommandText(m) => self.command(m),
            ClientMessage::Calibrate(m) => self.calibrate(m),
            ClientMessage::TeachControl(m) => self.teach(m),
            ClientMessage::GloveFrame(m) => self.glove(m),
            ClientMessage::Reset => {
                self.reset();
                Ok(Vec::new())
            }
        }
    }

    fn select_type(&mut self, m: &SelectType) -> Result<Vec<Effect>, ProtocolError> {
        if !matches!(self.mode, Mode::Idle | Mode::Teleoperate) {
            return Err(illegal("select_type", self.mode));
        }
        if self.library().get(&m.type_id).is_none() {
            return Err(ProtocolError::at(ErrorCode::NotFound, "payload.type_id", format!("no type with id {:?}", m.type_id)));
        }
        self.rig.select_type(m.hand, &m.type_id).map_err(|e| rejected("payload.type_id", e))?;
        self.mode = Mode::Teleoperate;
        Ok(Vec::new())
    }

    fn adjust(&mut self, m: &AdjustFingertip) -> Result<Vec<Effect>, ProtocolError> {
        if self.mode != Mode::Teleoperate {
            return Err(illegal("adjust_fingertip", self.mode));
        }
        finite(&[m.translation, m.rotation], "payload")?;
        let delta = Pose::from_position_rotvec(Vector3::from(m.translation), Vector3::from(m.rotation));
        self.rig.adjust_fingertip(m.hand, &m.chain, &delta).map_err(|e| match e {
            RigError::UnknownChain(_) => ProtocolError::at(ErrorCode::NotFound, "payload.chain", e.to_string()),
            RigError::NoActiveType(_) => rejected("payload.hand", e),
            other => rejected("payload.translation", other),
        })?;
        Ok(Vec::new())
    }

    fn command(&mut self, m: &CommandText) -> Result<Vec<Effect>, ProtocolError> {
        if self.mode == Mode::Replay {
            return Err(illegal("command_text", self.mode));
        }
        if m.text.trim().is_empty() {
            return Err(ProtocolError::at(ErrorCode::Schema, "payload.text", "must not be empty"));
        }
        let image = match &m.image {
            Some(b64) => Some(
                base64::engine::general_purpose::STANDARD
                    .decode(b64)
                    .map_err(|e| ProtocolError::at(ErrorCode::Schema, "payload.image", e.to_string()))?,
            ),
            None => None,
        };
        let request_id = self.next_request;
        self.next_request += 1;
        self.pending = Some((request_id, m.text.clone()));
        let request = TaskRequest { command_text: m.text.clone(), scene_image: image, hands: m.hands };
        Ok(vec![Effect::Retrieve { request_id, request }])
    }

    fn calibrate(&mut self, m: &Calibrate) -> Result<Vec<Effect>, ProtocolError> {
        if !matches!(self.mode, Mode::Idle | Mode::Teleoperate) {
            return Err(illegal("calibrate", self.mode));
        }
        let fingers = CalibrationPair::nominal().fingers.len();
        for (field, points) in [("payload.stretched", &m.stretched), ("payload.contracted", &m.contracted)] {
            if points.len() != fingers {
                return Err(ProtocolError::at(
                    ErrorCode::Schema,
                    field,
                    format!("expected {fingers} fingertips, got {}", points.len()),
                ));
            }
            finite(points, field)?;
        }
        let frame = |points: &[[f64; 3]]| HumanHandFrame { fingertips: to_points(points), wrist: Pose::identity(), timestamp: 0.0 };
        let pair = CalibrationPair::from_frames(&frame(&m.stretched), &frame(&m.contracted))
            .map_err(|e| rejected("payload.contracted", e))?;
        self.rig.set_calibration(m.hand, pair).map_err(|e| rejected("payload.contracted", e))?;
        Ok(Vec::new())
    }

    fn teach(&mut self, m: &TeachControl) -> Result<Vec<Effect>, ProtocolError> {
        let kind = "teach_control";
        match m.action {
            TeachAction::Start => {
                if self.mode != Mode::Teleoperate {
                    return Err(illegal(kind, self.mode));
                }
                self.rig.start_teach(m.hand).map_err(|e| rejected("payload.hand", e))?;
                self.mode = Mode::Teach;
                self.teach_hand = Some(m.hand);
                Ok(Vec::new())
            }
            TeachAction::MarkStretch | TeachAction::MarkContract | TeachAction::Stop => {
                if self.mode != Mode::Teach {
                    return Err(illegal(kind, self.mode));
                }
                if self.teach_hand != Some(m.hand) {
                    return Err(ProtocolError::at(ErrorCode::Rejected, "payload.hand", "that hand is not teaching"));
                }
                match m.action {
                    TeachAction::MarkStretch => self.rig.mark_teach_frame(m.hand, false),
                    TeachAction::MarkContract => self.rig.mark_teach_frame(m.hand, true),
                    _ => return self.stop_teach(m),
                }
                .map_err(|e| rejected("payload.hand", e))?;
                Ok(Vec::new())
            }
        }
    }

    fn stop_teach(&mut self, m: &TeachControl) -> Result<Vec<Effect>, ProtocolError> {
        let grown = match &m.save {
            Some(new) => {
                let recording = &self.rig.hand(m.hand).teach.as_ref().expect("teaching hand has a controller").recording;
                let metadata = TypeMetadata {
                    id: new.id.clone(),
                    name: new.name.clone(),
                    category: new.category,
                    handedness: new.handedness,
                    attributes: new.attributes.clone(),
                };
                Some(record_type(recording, metadata, self.library(), self.rig.model()).map_err(|e| rejected("payload.save", e))?)
            }
            None => None,
        };
        self.rig.stop_teach(m.hand).map_err(|e| rejected("payload.hand", e))?;
        self.teach_hand = None;
        self.mode = Mode::Idle;
        for side in Side::BOTH {
            self.rig.clear_type(side);
        }
        Ok(match grown {
            Some(library) => {
                self.rig.set_library(Arc::new(library));
                vec![Effect::LibraryChanged]
            }
            None => Vec::new(),
        })
    }

    fn glove(&mut self, m: &GloveFrame) -> Result<Vec<Effect>, ProtocolError> {
        validate_glove(m, self.rig.hand(m.hand).calibration.fingers.len())?;
        if self.mode == Mode::Replay {
            return Ok(Vec::new());
        }
        let wrist = match m.wrist {
            Some(w) => w.to_pose(),
            None => match &self.rig.hand(m.hand).latest_frame {
                Some(f) => f.wrist,
                None => self.rig.control[m.hand.index()].target,
            },
        };
        self.rig.set_glove(m.hand, HumanHandFrame { fingertips: to_points(&m.fingertips), wrist, timestamp: m.timestamp });
        Ok(Vec::new())
    }

    /// Returns to idle from any mode. Calibration and the library are kept.
    pub fn reset(&mut self) {
        for side in Side::BOTH {
            self.rig.clear_type(side);
            if self.rig.hand(side).teach.is_some() {
                let _ = self.rig.stop_teach(side);
            }
        }
        self.mode = Mode::Idle;
        self.plan = None;
        self.pending = None;
        self.teach_hand = None;
        self.replay = None;
    }

    /// Plays back recorded frames in place of the teleoperation pipeline.
    pub fn start_replay(&mut self, frames: Vec<DemonstrationFrame>, speed: f64) -> Result<(), ProtocolError> {
        if self.mode != Mode::Idle {
            return Err(illegal("replay", self.mode));
        }
        if !(speed > 0.0 && speed.is_finite()) {
            return Err(ProtocolError::at(ErrorCode::Schema, "speed", "must be positive"));
        }
        self.replay = Some(Replay { frames, start_tick: self.rig.tick(), speed });
        self.mode = Mode::Replay;
        Ok(())
    }

    /// Delivers the outcome of a retrieval. Results of superseded requests
    /// are dropped.
    pub fn retrieval_done(&mut self, request_id: u64, result: Result<ManipulationPlan, RetrievalError>) -> Option<ServerMessage> {
        let (pending, command) = self.pending.clone()?;
        if pending != request_id {
            return None;
        }
        self.pending = None;
        let notice = match result {
            Ok(plan) => {
                let mut applied = false;
                if self.config.auto_apply && matches!(self.mode, Mode::Idle | Mode::Teleoperate) {
                    let step = &plan.steps[0];
                    for (side, id) in [(Side::Left, &step.left_type), (Side::Right, &step.right_type)] {
                        if let Some(id) = id {
                            applied |= self.rig.select_type(side, id).is_ok();
                        }
                    }
                    if applied {
                        self.mode = Mode::Teleoperate;
                    }
                }
                self.plan = Some(plan.clone());
                PlanNotice { request_id, command, plan: Some(plan), error: None, applied }
            }
            Err(e) => PlanNotice { request_id, command, plan: None, error: Some(e.to_string()), applied: false },
        };
        Some(ServerMessage::PlanNotice(notice))
    }

    /// Advances the session by one control tick.
    pub fn tick(&mut self) -> [VelocityCommand; 2] {
        if let Some(replay) = &self.replay {
            let elapsed = (self.rig.tick() - replay.start_tick) as f64 * replay.speed;
            let index = ((elapsed * RECORD_HZ as f64 / CONTROL_HZ as f64).floor() as usize).min(replay.frames.len().saturating_sub(1));
            if let Some(frame) = replay.frames.get(index) {
                let p = &frame.proprioception;
                let dof = self.rig.model().dof();
                for i in 0..2 {
                    let arm = &p[i * 6..i * 6 + 6];
                    let pose = Pose::from_position_rotvec(Vector3::new(arm[0], arm[1], arm[2]), Vector3::new(arm[3], arm[4], arm[5]));
                    self.rig.plant.arms[i] = pose;
                    self.rig.control[i].current = pose;
                    self.rig.control[i].target = pose;
                    let start = 12 + i * dof;
                    self.rig.plant.hands[i] = dextype_core::hand_model::JointVector::new(p[start..start + dof].to_vec());
                    self.rig.hands[i].target = self.rig.plant.hands[i].clone();
                }
            }
        }
        match self.rig.step() {
            Ok(commands) => commands,
            Err(e) => {
                log::error!("control step failed: {e}");
                self.rig.last_commands
            }
        }
    }

    pub fn snapshot(&self) -> Snapshot {
        let rig = &self.rig;
        let hands = Side::BOTH
            .iter()
            .map(|&side| {
                let h = rig.hand(side);
                let i = side.index();
                HandSnapshot {
                    hand: side,
                    active_type: h.active.as_ref().map(|t| t.id.clone()),
                    joints: h.target.to_vec(),
                    measured: rig.plant.hands[i].to_vec(),
                    ratios: h.ratios.clone(),
                    arm: WirePose::from(&rig.plant.arms[i]),
                    arm_target: WirePose::from(&rig.control[i].target),
                    holding: rig.plant.holding[i],
                    teaching: h.teach.is_some(),
                    skeleton: rig.skeleton(side),
                    calibration: h
                        .calibration
                        .fingers
                        .iter()
                        .map(|e| [e.p_stretch.into(), e.p_contract.into()])
                        .collect(),
                }
            })
            .collect();
        Snapshot {
            tick: rig.tick(),
            mode: self.mode,
            clients: self.clients,
            hands,
            plan: self.plan.clone(),
            retrieval_pending: self.pending.is_some(),
        }
    }
}

/// Pure form of [`Session::apply`]: the next session and the messages for
/// the sender. A rejected message yields an unchanged session and one error.
pub fn handle_message(session: &Session, seq: Option<u64>, message: &ClientMessage) -> (Session, Vec<ServerMessage>, Vec<Effect>) {
    let mut next = session.clone();
    match next.apply(message) {
        Ok(effects) => (next, Vec::new(), effects),
        Err(e) => (session.clone(), vec![ServerMessage::error(e, seq)], Vec::new()),
    }
}
