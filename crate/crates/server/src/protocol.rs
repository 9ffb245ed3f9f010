//! Wire protocol between the session server and operator consoles.
//!
//! Every WebSocket text frame carries one JSON envelope:
//!
//! ```json
//! {"v": 1, "seq": 7, "kind": "select_type", "payload": {"hand": "right", "type_id": "curved-handle"}}
//! ```
//!
//! `seq` must strictly increase per direction on a connection. Payloads are
//! checked field by field and a reject names the offending field path.
//!
//! Client to server: `select_type`, `adjust_fingertip`, `command_text`,
//! `calibrate`, `teach_control`, `glove_frame`, `reset`.
//! Server to client: `snapshot`, `plan_notice`, `error`, `library`.

use dextype_core::hand_model::Pose;
use dextype_core::retrieval::{Hands, ManipulationPlan};
use dextype_core::sim::Side;
use dextype_core::type_library::{Handedness, Library, SubCategoryGroup, TaxonomyPath, TypeAttributes};
use nalgebra::Vector3;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Not a JSON envelope.
    Malformed,
    Version,
    UnknownKind,
    /// Payload does not match the schema of its kind.
    Schema,
    Sequence,
    IllegalTransition,
    NotFound,
    /// Well-formed request the engine could not carry out.
    Rejected,
    Retrieval,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{code:?}{}: {message}", field.as_ref().map(|f| format!(" at {f}")).unwrap_or_default())]
pub struct ProtocolError {
    pub code: ErrorCode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, field: None, message: message.into() }
    }

    pub fn at(code: ErrorCode, field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { code, field: Some(field.into()), message: message.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope {
    pub v: u32,
    pub seq: u64,
    pub kind: String,
    #[serde(default)]
    pub payload: Value,
}

/// Pose on the wire: position in meters and a rotation vector in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WirePose {
    pub position: [f64; 3],
    #[serde(default)]
    pub rotvec: [f64; 3],
}

impl WirePose {
    pub fn to_pose(self) -> Pose {
        Pose::from_position_rotvec(Vector3::from(self.position), Vector3::from(self.rotvec))
    }
}

impl From<&Pose> for WirePose {
    fn from(p: &Pose) -> Self {
        let r = p.rotation_vector();
        Self { position: [p.position.x, p.position.y, p.position.z], rotvec: [r.x, r.y, r.z] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectType {
    pub hand: Side,
    pub type_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdjustFingertip {
    pub hand: Side,
    pub chain: String,
    /// Offset in the fingertip frame, meters.
    pub translation: [f64; 3],
    /// Rotation vector in the fingertip frame, radians.
    #[serde(default)]
    pub rotation: [f64; 3],
}

fn both_hands() -> Hands {
    Hands::Both
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandText {
    pub text: String,
    #[serde(default = "both_hands")]
    pub hands: Hands,
    /// Base64-encoded scene image.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Calibrate {
    pub hand: Side,
    /// Fingertips of the fully stretched hand, thumb first.
    pub stretched: Vec<[f64; 3]>,
    /// Fingertips of the fully contracted hand, thumb first.
    pub contracted: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TeachAction {
    Start,
    MarkStretch,
    MarkContract,
    Stop,
}

/// Description of a type authored in teach mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NewType {
    pub id: String,
    pub name: String,
    pub category: TaxonomyPath,
    pub handedness: Handedness,
    pub attributes: TypeAttributes,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeachControl {
    pub hand: Side,
    pub action: TeachAction,
    /// With `stop`, adds the marked postures to the library as a new type.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save: Option<NewType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GloveFrame {
    pub hand: Side,
    /// Human fingertip positions, thumb first.
    pub fingertips: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wrist: Option<WirePose>,
    #[serde(default)]
    pub timestamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClientMessage {
    SelectType(SelectType),
    AdjustFingertip(AdjustFingertip),
    CommandText(CommandText),
    Calibrate(Calibrate),
    TeachControl(TeachControl),
    GloveFrame(GloveFrame),
    Reset,
}

impl ClientMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::SelectType(_) => "select_type",
            ClientMessage::AdjustFingertip(_) => "adjust_fingertip",
            ClientMessage::CommandText(_) => "command_text",
            ClientMessage::Calibrate(_) => "calibrate",
            ClientMessage::TeachControl(_) => "teach_control",
            ClientMessage::GloveFrame(_) => "glove_frame",
            ClientMessage::Reset => "reset",
        }
    }

    fn payload(&self) -> Value {
        let v = match self {
            ClientMessage::SelectType(p) => serde_json::to_value(p),
            ClientMessage::AdjustFingertip(p) => serde_json::to_value(p),
            ClientMessage::CommandText(p) => serde_json::to_value(p),
            ClientMessage::Calibrate(p) => serde_json::to_value(p),
            ClientMessage::TeachControl(p) => serde_json::to_value(p),
            ClientMessage::GloveFrame(p) => serde_json::to_value(p),
            ClientMessage::Reset => Ok(Value::Object(Default::default())),
        };
        v.expect("payloads serialize")
    }

    fn from_parts(kind: &str, payload: Value) -> Result<Self, ProtocolError> {
        Ok(match kind {
            "select_type" => ClientMessage::SelectType(payload_as(payload)?),
            "adjust_fingertip" => ClientMessage::AdjustFingertip(payload_as(payload)?),
            "command_text" => ClientMessage::CommandText(payload_as(payload)?),
            "calibrate" => ClientMessage::Calibrate(payload_as(payload)?),
            "teach_control" => ClientMessage::TeachControl(payload_as(payload)?),
            "glove_frame" => ClientMessage::GloveFrame(payload_as(payload)?),
            "reset" => match payload {
                Value::Null => ClientMessage::Reset,
                Value::Object(m) if m.is_empty() => ClientMessage::Reset,
                _ => return Err(ProtocolError::at(ErrorCode::Schema, "payload", "reset takes no payload")),
            },
            "snapshot" | "plan_notice" | "error" | "library" => {
                return Err(ProtocolError::at(ErrorCode::UnknownKind, "kind", format!("{kind} is sent by the server only")))
            }
            other => return Err(ProtocolError::at(ErrorCode::UnknownKind, "kind", format!("unknown kind {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Idle,
    Teleoperate,
    Teach,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandSnapshot {
    pub hand: Side,
    pub active_type: Option<String>,
    /// Commanded joint angles.
    pub joints: Vec<f64>,
    /// Joint angles of the simulated hand.
    pub measured: Vec<f64>,
    /// Closure ratio per human finger, thumb first.
    pub ratios: Vec<f64>,
    pub arm: WirePose,
    pub arm_target: WirePose,
    pub holding: bool,
    pub teaching: bool,
    /// Joint origins and fingertip per robot finger chain, palm frame.
    pub skeleton: Vec<Vec<[f64; 3]>>,
    /// Stretched and contracted fingertip per human finger.
    pub calibration: Vec<[[f64; 3]; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub tick: u64,
    pub mode: Mode,
    pub clients: usize,
    pub hands: Vec<HandSnapshot>,
    pub plan: Option<ManipulationPlan>,
    pub retrieval_pending: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanNotice {
    pub request_id: u64,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<ManipulationPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// The first step's types were made active.
    pub applied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    #[serde(flatten)]
    pub error: ProtocolError,
    /// `seq` of the client message that caused the error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_reply_to: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub id: String,
    pub name: String,
    pub category: TaxonomyPath,
    pub group: SubCategoryGroup,
    pub handedness: Handedness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LibraryListing {
    pub protocol_version: u32,
    pub hand_model_id: String,
    pub hash: String,
    pub chains: Vec<String>,
    pub types: Vec<TypeSummary>,
}

impl LibraryListing {
    pub fn new(library: &Library, chains: Vec<String>) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION,
            hand_model_id: library.hand_model_id().to_string(),
            hash: library.content_hash(),
            chains,
            types: library
                .types()
                .iter()
                .map(|t| TypeSummary {
                    id: t.id.clone(),
                    name: t.name.clone(),
                    category: t.category,
                    group: t.category.sub.group(),
                    handedness: t.handedness,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ServerMessage {
    Snapshot(Box<Snapshot>),
    PlanNotice(PlanNotice),
    Error(ErrorPayload),
    Library(LibraryListing),
}

impl ServerMessage {
    pub fn error(error: ProtocolError, in_reply_to: Option<u64>) -> Self {
        ServerMessage::Error(ErrorPayload { error, in_reply_to })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ServerMessage::Snapshot(_) => "snapshot",
            ServerMessage::PlanNotice(_) => "plan_notice",
            ServerMessage::Error(_) => "error",
            ServerMessage::Library(_) => "library",
        }
    }

    fn payload(&self) -> Value {
        let v = match self {
            ServerMessage::Snapshot(p) => serde_json::to_value(p),
            ServerMessage::PlanNotice(p) => serde_json::to_value(p),
            ServerMessage::Error(p) => serde_json::to_value(p),
            ServerMessage::Library(p) => serde_json::to_value(p),
        };
        v.expect("payloads serialize")
    }

    fn from_parts(kind: &str, payload: Value) -> Result<Self, ProtocolError> {
        Ok(match kind {
            "snapshot" => ServerMessage::Snapshot(payload_as(payload)?),
            "plan_notice" => ServerMessage::PlanNotice(payload_as(payload)?),
            "error" => ServerMessage::Error(payload_as(payload)?),
            "library" => ServerMessage::Library(payload_as(payload)?),
            other => return Err(ProtocolError::at(ErrorCode::UnknownKind, "kind", format!("unknown kind {other:?}"))),
        })
    }
}

fn payload_as<T: DeserializeOwned>(payload: Value) -> Result<T, ProtocolError> {
    serde_path_to_error::deserialize(payload).map_err(|e| {
        let path = e.path().to_string();
        let field = if path == "." { "payload".to_string() } else { format!("payload.{path}") };
        ProtocolError::at(ErrorCode::Schema, field, e.into_inner().to_string())
    })
}

fn envelope(bytes: &[u8]) -> Result<Envelope, ProtocolError> {
    let text = std::str::from_utf8(bytes).map_err(|e| ProtocolError::new(ErrorCode::Malformed, e.to_string()))?;
    let value: Value = serde_json::from_str(text).map_err(|e| ProtocolError::new(ErrorCode::Malformed, e.to_string()))?;
    let Value::Object(map) = &value else {
        return Err(ProtocolError::new(ErrorCode::Malformed, "message must be a JSON object"));
    };
    if let Some(v) = map.get("v") {
        if v.as_u64() != Some(PROTOCOL_VERSION as u64) {
            return Err(ProtocolError::at(
                ErrorCode::Version,
                "v",
                format!("protocol version {v} is not supported, expected {PROTOCOL_VERSION}"),
            ));
        }
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ProtocolError::at(ErrorCode::Schema, path, e.into_inner().to_string())
    })
}

/// Parses a client frame into its sequence number and message.
pub fn decode_client(bytes: &[u8]) -> Result<(u64, ClientMessage), ProtocolError> {
    let env = envelope(bytes)?;
    Ok((env.seq, ClientMessage::from_parts(&env.kind, env.payload)?))
}

/// Parses a server frame into its sequence number and message.
pub fn decode_server(bytes: &[u8]) -> Result<(u64, ServerMessage), ProtocolError> {
    let env = envelope(bytes)?;
    Ok((env.seq, ServerMessage::from_parts(&env.kind, env.payload)?))
}

fn encode(seq: u64, kind: &str, payload: Value) -> String {
    serde_json::to_string(&Envelope { v: PROTOCOL_VERSION, seq, kind: kind.into(), payload }).expect("envelope serializes")
}

pub fn encode_client(seq: u64, message: &ClientMessage) -> String {
    encode(seq, message.kind(), message.payload())
}

pub fn encode_server(seq: u64, message: &ServerMessage) -> String {
    encode(seq, message.kind(), message.payload())
}

/// Checks that sequence numbers strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SequenceCheck {
    last: Option<u64>,
}

impl SequenceCheck {
    pub fn accept(&mut self, seq: u64) -> Result<(), ProtocolError> {
        match self.last {
            Some(last) if seq <= last => Err(ProtocolError::at(
                ErrorCode::Sequence,
                "seq",
                format!("seq {seq} does not follow {last}"),
            )),
            _ => {
                self.last = Some(seq);
                Ok(())
            }
        }
    }
}

/// Numbers outgoing frames for one connection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Outbox {
    next: u64,
}

impl Outbox {
    pub fn encode(&mut self, message: &ServerMessage) -> String {
        self.next += 1;
        encode_server(self.next, message)
    }
}
