//! Kinesthetic teaching with per-joint admittance.
//!
//! The external force on each hand joint is estimated from motor current and
//! the gap between measured and commanded angle, low-pass filtered, then fed
//! into a virtual mass-damper-spring. The resulting displacement is added to
//! the anchor posture the teach session started from.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{HandKinematicModel, JointVector};
use crate::type_library::{
    Handedness, Library, LibraryError, ManipulationType, TaxonomyPath, TypeAttributes,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TeachError {
    #[error("invalid admittance parameters: {0}")]
    InvalidParams(String),
    #[error("{field} has {got} values, expected {expected}")]
    LengthMismatch { field: &'static str, expected: usize, got: usize },
    #[error("recording is empty")]
    EmptyRecording,
    #[error("{0} frame is not marked")]
    Unmarked(&'static str),
    #[error("marked frame {index} is outside a recording of {len} frames")]
    MarkOutOfRange { index: usize, len: usize },
    #[error(transparent)]
    Library(#[from] LibraryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmittanceParams {
    pub mass: f64,
    pub damping: f64,
    pub stiffness: f64,
    pub dt: f64,
}

impl Default for AdmittanceParams {
    fn default() -> Self {
        Self { mass: 1.0, damping: 20.0, stiffness: 100.0, dt: 0.04 }
    }
}

impl AdmittanceParams {
    pub fn validate(&self) -> Result<(), TeachError> {
        let ok = self.mass > 0.0
            && self.damping >= 0.0
            && self.stiffness > 0.0
            && self.dt > 0.0
            && [self.mass, self.damping, self.stiffness, self.dt].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(TeachError::InvalidParams(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForceGains {
    pub k_current: f64,
    pub k_deviation: f64,
    /// Weight of the newest estimate in the force low-pass filter.
    pub smoothing: f64,
}

impl Default for ForceGains {
    fn default() -> Self {
        Self { k_current: 2.0, k_deviation: 10.0, smoothing: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotorReading {
    pub current_magnitude: Vec<f64>,
    pub q_commanded: Vec<f64>,
    pub q_measured: Vec<f64>,
    pub q_dot_measured: Vec<f64>,
}

impl MotorReading {
    fn check(&self) -> Result<(), TeachError> {
        let n = self.q_commanded.len();
        for (field, len) in [
            ("current_magnitude", self.current_magnitude.len()),
            ("q_measured", self.q_measured.len()),
            ("q_dot_measured", self.q_dot_measured.len()),
        ] {
            if len != n {
                return Err(TeachError::LengthMismatch { field, expected: n, got: len });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeachState {
    pub x: Vec<f64>,
    pub x_dot: Vec<f64>,
    pub f_ext: Vec<f64>,
}

impl TeachState {
    pub fn at_rest(dof: usize) -> Self {
        Self { x: vec![0.0; dof], x_dot: vec![0.0; dof], f_ext: vec![0.0; dof] }
    }

    /// ½Kx² + ½Mẋ² summed over joints.
    pub fn energy(&self, params: &AdmittanceParams) -> f64 {
        self.x
            .iter()
            .zip(&self.x_dot)
            .map(|(x, v)| 0.5 * params.stiffness * x * x + 0.5 * params.mass * v * v)
            .sum()
    }
}

/// Per-joint force estimate from motor current and positional deviation.
pub fn estimate_external_force(reading: &MotorReading, gains: &ForceGains) -> Result<Vec<f64>, TeachError> {
    reading.check()?;
    Ok(reading
        .current_magnitude
        .iter()
        .zip(reading.q_measured.iter().zip(&reading.q_commanded))
        .map(|(i, (m, c))| {
            let dev = m - c;
            let sign = if dev > 0.0 {
                1.0
            } else if dev < 0.0 {
                -1.0
            } else {
                0.0
            };
            gains.k_current * i * sign + gains.k_deviation * dev
        })
        .collect())
}

/// Semi-implicit Euler step of `M ẍ + B ẋ + K x = f_ext` for every joint.
pub fn admittance_step(state: &TeachState, params: &AdmittanceParams, f_ext: &[f64]) -> TeachState {
    let mut next = state.clone();
    for j in 0..state.x.len() {
        let f = f_ext.get(j).copied().unwrap_or(0.0);
        let acc = (f - params.damping * state.x_dot[j] - params.stiffness * state.x[j]) / params.mass;
        next.x_dot[j] = state.x_dot[j] + acc * params.dt;
        next.x[j] = state.x[j] + next.x_dot[j] * params.dt;
        next.f_ext[j] = f;
    }
    next
}

/// Teach loop for one hand: turns motor readings into commanded joint
/// targets and keeps the commanded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TeachController {
    pub params: AdmittanceParams,
    pub gains: ForceGains,
    pub anchor: JointVector,
    pub state: TeachState,
    pub recording: TeachRecording,
}

impl TeachController {
    pub fn new(anchor: JointVector, params: AdmittanceParams, gains: ForceGains) -> Result<Self, TeachError> {
        params.validate()?;
        let dof = anchor.len();
        Ok(Self {
            params,
            gains,
            recording: TeachRecording::new(vec![anchor.clone()]),
            anchor,
            state: TeachState::at_rest(dof),
        })
    }

    pub fn commanded(&self, model: &HandKinematicModel) -> JointVector {
        let mut q: Vec<f64> = self.anchor.iter().zip(&self.state.x).map(|(a, x)| a + x).collect();
        model.clamp(&mut q);
        JointVector::new(q)
    }

    pub fn step(&mut self, reading: &MotorReading, model: &HandKinematicModel) -> Result<JointVector, TeachError> {
        let raw = estimate_external_force(reading, &self.gains)?;
        if raw.len() != self.anchor.len() {
            return Err(TeachError::LengthMismatch { field: "q_commanded", expected: self.anchor.len(), got: raw.len() });
        }
        let alpha = self.gains.smoothing;
        let filtered: Vec<f64> = raw
            .iter()
            .zip(&self.state.f_ext)
            .map(|(f, prev)| alpha * f + (1.0 - alpha) * prev)
            .collect();
        self.state = admittance_step(&self.state, &self.params, &filtered);
        let q = self.commanded(model);
        self.recording.frames.push(q.clone());
        Ok(q)
    }
}

/// Commanded postures captured during teaching, with the two frames the
/// operator marked as the new type's extremes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TeachRecording {
    pub frames: Vec<JointVector>,
    pub stretch_mark: Option<usize>,
    pub contract_mark: Option<usize>,
}

impl TeachRecording {
    pub fn new(frames: Vec<JointVector>) -> Self {
        Self { frames, stretch_mark: None, contract_mark: None }
    }

    pub fn mark_stretch(&mut self) {
        self.stretch_mark = self.frames.len().checked_sub(1);
    }

    pub fn mark_contract(&mut self) {
        self.contract_mark = self.frames.len().checked_sub(1);
    }

    fn frame(&self, mark: Option<usize>, which: &'static str) -> Result<&JointVector, TeachError> {
        let index = mark.ok_or(TeachError::Unmarked(which))?;
        self.frames.get(index).ok_or(TeachError::MarkOutOfRange { index, len: self.frames.len() })
    }
}

/// Everything a new type needs besides its two postures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeMetadata {
    pub id: String,
    pub name: String,
    pub category: TaxonomyPath,
    pub handedness: Handedness,
    pub attributes: TypeAttributes,
}

/// Returns a new library with a type built from the marked frames of `recording`.
pub fn record_type(
    recording: &TeachRecording,
    metadata: TypeMetadata,
    library: &Library,
    model: &HandKinematicModel,
) -> Result<Library, TeachError> {
    if recording.frames.is_empty() {
        return Err(TeachError::EmptyRecording);
    }
    let stretch = recording.frame(recording.stretch_mark, "stretch")?.clone();
    let contract = recording.frame(recording.contract_mark, "contract")?.clone();
    let ty = ManipulationType {
        id: metadata.id,
        name: metadata.name,
        category: metadata.category,
        handedness: metadata.handedness,
        stretch_posture: stretch,
        contract_posture: contract,
        attributes: metadata.attributes,
    };
    Ok(library.with_type(ty, model)?)
}
