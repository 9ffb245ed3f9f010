//! Kinematic model of a multi-fingered hand.
//!
//! A hand is a set of independent serial chains (one per finger) rooted at the
//! palm frame. Every joint is revolute. Each joint frame is placed relative to
//! its parent by a fixed offset and rotation, then rotated about the joint
//! axis by the joint angle. The fingertip frame sits at a fixed offset from
//! the last joint.

mod file;
mod ik;

use std::ops::{Deref, DerefMut};

use nalgebra::{Unit, UnitQuaternion, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use file::{HandModelFile, JointSpec, ChainSpec};
pub use ik::{adjust_type, inverse_kinematics, FingerSelector, FingerTarget, IkOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("joint vector has {got} values, model has {expected} degrees of freedom")]
    DofMismatch { expected: usize, got: usize },
    #[error("joint {joint} value {value} outside limits [{min}, {max}]")]
    OutOfLimits {
        joint: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("no finger chain with index {0}")]
    UnknownChain(usize),
    #[error(
        "inverse kinematics did not converge after {iterations} iterations \
         (position residual {position_residual:.3e} m, orientation residual {orientation_residual:.3e} rad)"
    )]
    NoConvergence {
        iterations: usize,
        position_residual: f64,
        orientation_residual: f64,
    },
    #[error("invalid hand model: {0}")]
    InvalidModel(String),
    #[error("failed to parse hand model: {0}")]
    Parse(String),
}

/// Joint angles in radians, one per degree of freedom, ordered chain by chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct JointVector(Vec<f64>);

impl JointVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(dof: usize) -> Self {
        Self(vec![0.0; dof])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Largest absolute per-joint difference.
    pub fn max_abs_diff(&self, other: &JointVector) -> f64 {
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl From<Vec<f64>> for JointVector {
    fn from(values: Vec<f64>) -> Self {
        Self(values)
    }
}

impl Deref for JointVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for JointVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Rigid transform: a position in meters and a unit rotation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation: renormalized(orientation),
        }
    }

    pub fn from_translation(position: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::identity())
    }

    pub fn from_rotation(orientation: UnitQuaternion<f64>) -> Self {
        Self::new(Vector3::zeros(), orientation)
    }

    /// Builds a pose from a position and a rotation vector (axis times angle).
    pub fn from_position_rotvec(position: Vector3<f64>, rotvec: Vector3<f64>) -> Self {
        Self::new(position, UnitQuaternion::from_scaled_axis(rotvec))
    }

    /// `self * other`: `other` expressed in the frame of `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose::new(
            self.position + self.orientation * other.position,
            self.orientation * other.orientation,
        )
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.orientation.inverse();
        Pose::new(-(inv * self.position), inv)
    }

    /// Orientation as a rotation vector (axis times angle, angle in [0, pi]).
    pub fn rotation_vector(&self) -> Vector3<f64> {
        self.orientation.scaled_axis()
    }

    /// Translational distance and rotation-vector norm of the relative
    /// rotation between two poses.
    pub fn residual_to(&self, other: &Pose) -> (f64, f64) {
        let dp = (other.position - self.position).norm();
        let dr = orientation_error(&self.orientation, &other.orientation).norm();
        (dp, dr)
    }
}

/// Rotation vector taking `current` to `target`, expressed in the base frame.
pub fn orientation_error(
    current: &UnitQuaternion<f64>,
    target: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    (target * current.inverse()).scaled_axis()
}

fn renormalized(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::new_normalize(q.into_inner())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointLimits {
    pub min: f64,
    pub max: f64,
}

impl JointLimits {
    pub fn contains(&self, value: f64) -> bool {
        value >= self.min && value <= self.max
    }

    pub fn clamp(&self, value: f64) -> f64 {
        value.clamp(self.min, self.max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub axis: Unit<Vector3<f64>>,
    pub origin_offset: Vector3<f64>,
    pub origin_rotation: UnitQuaternion<f64>,
    pub limits: JointLimits,
}

impl Joint {
    fn origin(&self) -> Pose {
        Pose::new(self.origin_offset, self.origin_rotation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FingerChain {
    pub name: String,
    pub joints: Vec<Joint>,
    pub fingertip_offset: Vector3<f64>,
}

/// One fingertip pose per chain, in the palm frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FingertipSet(pub Vec<Pose>);

impl Deref for FingertipSet {
    type Target = [Pose];

    fn deref(&self) -> &[Pose] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HandKinematicModel {
    id: String,
    chains: Vec<FingerChain>,
    // first joint index of each chain in the flat joint vector
    offsets: Vec<usize>,
    dof: usize,
}

impl HandKinematicModel {
    pub fn new(id: impl Into<String>, chains: Vec<FingerChain>) -> Result<Self, KinematicsError> {
        let id = id.into();
        if chains.is_empty() {
            return Err(KinematicsError::InvalidModel(format!("model {id} has no chains")));
        }
        let mut offsets = Vec::with_capacity(chains.len());
        let mut dof = 0;
        for chain in &chains {
            if chain.joints.is_empty() {
                return Err(KinematicsError::InvalidModel(format!(
                    "chain {} has no joints",
                    chain.name
                )));
            }
            for joint in &chain.joints {
                let JointLimits { min, max } = joint.limits;
                if !(min.is_finite() && max.is_finite() && min < max) {
                    return Err(KinematicsError::InvalidModel(format!(
                        "joint {} has limits [{min}, {max}]",
                        joint.name
                    )));
                }
            }
            offsets.push(dof);
            dof += chain.joints.len();
        }
        Ok(Self {
            id,
            chains,
            offsets,
            dof,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn chains(&self) -> &[FingerChain] {
        &self.chains
    }

    pub fn chain_index(&self, name: &str) -> Option<usize> {
        self.chains.iter().position(|c| c.name == name)
    }

    /// Range of the flat joint vector occupied by chain `chain`.
    pub fn chain_range(&self, chain: usize) -> std::ops::Range<usize> {
        let start = self.offsets[chain];
        start..start + self.chains[chain].joints.len()
    }

    pub fn joints(&self) -> impl Iterator<Item = &Joint> {
        self.chains.iter().flat_map(|c| c.joints.iter())
    }

    pub fn limits(&self) -> Vec<JointLimits> {
        self.joints().map(|j| j.limits).collect()
    }

    pub fn check_dof(&self, q: &[f64]) -> Result<(), KinematicsError> {
        if q.len() != self.dof {
            return Err(KinematicsError::DofMismatch {
                expected: self.dof,
                got: q.len(),
            });
        }
        Ok(())
    }

    pub fn check_limits(&self, q: &[f64]) -> Result<(), KinematicsError> {
        self.check_dof(q)?;
        for (i, (joint, &value)) in self.joints().zip(q).enumerate() {
            if !joint.limits.contains(value) {
                return Err(KinematicsError::OutOfLimits {
                    joint: i,
                    value,
                    min: joint.limits.min,
                    max: joint.limits.max,
                });
            }
        }
        Ok(())
    }

    pub fn clamp(&self, q: &mut [f64]) {
        for (joint, value) in self.joints().zip(q.iter_mut()) {
            *value = joint.limits.clamp(*value);
        }
    }

    /// Uniform sample inside the joint limits.
    pub fn random_configuration<R: Rng + ?Sized>(&self, rng: &mut R) -> JointVector {
        self.joints()
            .map(|j| rng.random_range(j.limits.min..=j.limits.max))
            .collect::<Vec<_>>()
            .into()
    }

    /// Midpoint of every joint range.
    pub fn neutral_configuration(&self) -> JointVector {
        self.joints()
            .map(|j| 0.5 * (j.limits.min + j.limits.max))
            .collect::<Vec<_>>()
            .into()
    }

    /// Frames of every joint of one chain (after the fixed origin transform,
    /// before the joint rotation) followed by the fingertip frame.
    pub fn chain_frames(&self, chain: usize, q: &[f64]) -> Result<Vec<Pose>, KinematicsError> {
        self.check_dof(q)?;
        if chain >= self.chains.len() {
            return Err(KinematicsError::UnknownChain(chain));
        }
        Ok(self.frames_for(chain, &q[self.chain_range(chain)]))
    }

    /// Same as [`chain_frames`](Self::chain_frames) given only the chain's own angles.
    pub(crate) fn frames_for(&self, chain: usize, angles: &[f64]) -> Vec<Pose> {
        let finger = &self.chains[chain];
        let mut frames = Vec::with_capacity(finger.joints.len() + 1);
        let mut pose = Pose::identity();
        for (joint, &angle) in finger.joints.iter().zip(angles) {
            pose = pose.compose(&joint.origin());
            frames.push(pose);
            pose = pose.compose(&Pose::from_rotation(UnitQuaternion::from_axis_angle(
                &joint.axis,
                angle,
            )));
        }
        frames.push(pose.compose(&Pose::from_translation(finger.fingertip_offset)));
        frames
    }
}

/// Fingertip pose of every chain for joint angles `q`.
pub fn forward_kinematics(
    model: &HandKinematicModel,
    q: &[f64],
) -> Result<FingertipSet, KinematicsError> {
    model.check_dof(q)?;
    Ok(FingertipSet(
        (0..model.chains.len())
            .map(|c| *model.frames_for(c, &q[model.chain_range(c)]).last().unwrap())
            .collect(),
    ))
}
