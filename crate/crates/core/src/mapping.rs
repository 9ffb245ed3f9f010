//! Interpolation mapping from human fingertip positions to robot joints.
//!
//! Each human finger is calibrated with a stretched and a contracted
//! fingertip position. The current fingertip is projected onto that segment
//! to get a ratio in `[0, 1]`, and every robot joint driven by the finger is
//! interpolated between the active type's stretch and contract angles.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{HandKinematicModel, JointVector, Pose};
use crate::type_library::{Library, ManipulationType};

/// Minimum stretch-to-contract distance for a usable calibration entry, in meters.
pub const EPS_CAL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MappingError {
    #[error("degenerate calibration for {finger:?}: segment length {length:.6} m")]
    DegeneratePair { finger: HumanFinger, length: f64 },
    #[error("unknown type {0:?}")]
    UnknownType(String),
    #[error("frame has {got} fingertips, calibration has {expected}")]
    FingerCountMismatch { expected: usize, got: usize },
    #[error("assignment covers {got} joints, hand has {expected}")]
    DofMismatch { expected: usize, got: usize },
    #[error("no chain named {0:?}")]
    UnknownChain(String),
    #[error("calibration profile: {0}")]
    Profile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HumanFinger {
    Thumb,
    Index,
    Middle,
    Ring,
    Pinky,
}

impl HumanFinger {
    pub const ALL: [HumanFinger; 5] = [
        HumanFinger::Thumb,
        HumanFinger::Index,
        HumanFinger::Middle,
        HumanFinger::Ring,
        HumanFinger::Pinky,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Matches a robot chain name such as `"index"` or `"thumb_chain"`.
    pub fn from_chain_name(name: &str) -> Option<Self> {
        let name = name.to_ascii_lowercase();
        [
            ("thumb", HumanFinger::Thumb),
            ("index", HumanFinger::Index),
            ("middle", HumanFinger::Middle),
            ("ring", HumanFinger::Ring),
            ("pinky", HumanFinger::Pinky),
            ("little", HumanFinger::Pinky),
        ]
        .into_iter()
        .find(|(key, _)| name.contains(key))
        .map(|(_, f)| f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationEntry {
    pub p_stretch: Vector3<f64>,
    pub p_contract: Vector3<f64>,
}

impl CalibrationEntry {
    pub fn new(p_stretch: Vector3<f64>, p_contract: Vector3<f64>) -> Self {
        Self { p_stretch, p_contract }
    }

    pub fn length(&self) -> f64 {
        (self.p_contract - self.p_stretch).norm()
    }

    /// The point at `ratio` along the stretch-to-contract segment.
    pub fn point_at(&self, ratio: f64) -> Vector3<f64> {
        self.p_stretch + (self.p_contract - self.p_stretch) * ratio
    }
}

/// Stretch and contract fingertip positions for every human finger, in
/// [`HumanFinger::ALL`] order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPair {
    pub fingers: Vec<CalibrationEntry>,
}

impl CalibrationPair {
    pub fn new(fingers: Vec<CalibrationEntry>) -> Result<Self, MappingError> {
        let pair = Self { fingers };
        pair.validate()?;
        Ok(pair)
    }

    /// Builds a calibration from two captured frames: one with the hand fully
    /// open and one with it fully closed.
    pub fn from_frames(stretched: &HumanHandFrame, contracted: &HumanHandFrame) -> Result<Self, MappingError> {
        if stretched.fingertips.len() != contracted.fingertips.len() {
            return Err(MappingError::FingerCountMismatch {
                expected: stretched.fingertips.len(),
                got: contracted.fingertips.len(),
            });
        }
        Self::new(
            stretched
                .fingertips
                .iter()
                .zip(&contracted.fingertips)
                .map(|(s, c)| CalibrationEntry::new(*s, *c))
                .collect(),
        )
    }

    /// A plausible adult right-hand calibration in the wrist frame.
    pub fn nominal() -> Self {
        let open = [
            Vector3::new(0.09, 0.08, 0.0),
            Vector3::new(0.18, 0.03, 0.0),
            Vector3::new(0.19, 0.0, 0.0),
            Vector3::new(0.18, -0.025, 0.0),
            Vector3::new(0.155, -0.05, 0.0),
        ];
        let closed = [
            Vector3::new(0.08, 0.01, -0.04),
            Vector3::new(0.09, 0.025, -0.05),
            Vector3::new(0.095, 0.0, -0.055),
            Vector3::new(0.09, -0.02, -0.05),
            Vector3::new(0.085, -0.04, -0.045),
        ];
        Self {
            fingers: open.iter().zip(closed.iter()).map(|(s, c)| CalibrationEntry::new(*s, *c)).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), MappingError> {
        for (i, e) in self.fingers.iter().enumerate() {
            let finger = HumanFinger::ALL.get(i).copied().unwrap_or(HumanFinger::Pinky);
            if !(e.length() > EPS_CAL) {
                return Err(MappingError::DegeneratePair { finger, length: e.length() });
            }
        }
        Ok(())
    }

    pub fn entry(&self, finger: HumanFinger) -> Option<&CalibrationEntry> {
        self.fingers.get(finger.index())
    }

    /// A frame whose fingertips sit at the given per-finger ratios.
    pub fn frame_at(&self, ratios: &[f64], timestamp: f64) -> HumanHandFrame {
        HumanHandFrame {
            fingertips: self.fingers.iter().zip(ratios).map(|(e, r)| e.point_at(*r)).collect(),
            wrist: Pose::identity(),
            timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanHandFrame {
    pub fingertips: Vec<Vector3<f64>>,
    pub wrist: Pose,
    pub timestamp: f64,
}

/// Which human finger drives each robot joint, for one active type.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingAssignment {
    pub type_id: String,
    /// One entry per robot joint; `None` holds the joint at the stretch angle.
    pub drivers: Vec<Option<HumanFinger>>,
}

impl MappingAssignment {
    /// Links each chain to the human finger of the same name. Chains with no
    /// matching name are held at the stretch posture.
    pub fn default_for(model: &HandKinematicModel, type_id: impl Into<String>) -> Self {
        let drivers = model
            .chains()
            .iter()
            .flat_map(|c| {
                let finger = HumanFinger::from_chain_name(&c.name);
                std::iter::repeat_n(finger, c.joints.len())
            })
            .collect();
        Self { type_id: type_id.into(), drivers }
    }

    /// Reassigns every joint of `chain` to `finger`.
    pub fn with_chain_driver(
        mut self,
        model: &HandKinematicModel,
        chain: &str,
        finger: Option<HumanFinger>,
    ) -> Result<Self, MappingError> {
        let idx = model.chain_index(chain).ok_or_else(|| MappingError::UnknownChain(chain.into()))?;
        for d in &mut self.drivers[model.chain_range(idx)] {
            *d = finger;
        }
        Ok(self)
    }
}

/// Normalized projection of `p_current` onto the calibration segment.
pub fn compute_ratio(p_current: &Vector3<f64>, entry: &CalibrationEntry) -> Result<f64, MappingError> {
    let b = entry.p_contract - entry.p_stretch;
    let denom = b.norm_squared();
    if !(denom.sqrt() > EPS_CAL) {
        return Err(MappingError::DegeneratePair { finger: HumanFinger::Thumb, length: denom.sqrt() });
    }
    let ratio = (p_current - entry.p_stretch).dot(&b) / denom;
    Ok(ratio.clamp(0.0, 1.0))
}

/// Linear interpolation between one joint's stretch and contract angles.
pub fn interpolate_joint(ratio: f64, stretch: f64, contract: f64) -> f64 {
    (1.0 - ratio) * stretch + ratio * contract
}

/// Interpolated angles for the joints in `joints` of `ty`.
pub fn interpolate_joints(ratio: f64, ty: &ManipulationType, joints: std::ops::Range<usize>) -> Vec<f64> {
    joints
        .map(|j| interpolate_joint(ratio, ty.stretch_posture[j], ty.contract_posture[j]))
        .collect()
}

/// Per-finger ratios for `frame`, in [`HumanFinger::ALL`] order.
pub fn frame_ratios(frame: &HumanHandFrame, calibration: &CalibrationPair) -> Result<Vec<f64>, MappingError> {
    if frame.fingertips.len() != calibration.fingers.len() {
        return Err(MappingError::FingerCountMismatch {
            expected: calibration.fingers.len(),
            got: frame.fingertips.len(),
        });
    }
    frame
        .fingertips
        .iter()
        .zip(&calibration.fingers)
        .enumerate()
        .map(|(i, (p, e))| {
            compute_ratio(p, e).map_err(|_| MappingError::DegeneratePair {
                finger: HumanFinger::ALL.get(i).copied().unwrap_or(HumanFinger::Pinky),
                length: e.length(),
            })
        })
        .collect()
}

/// Joint targets for `ty` given per-finger ratios.
pub fn map_ratios(
    ratios: &[f64],
    ty: &ManipulationType,
    assignment: &MappingAssignment,
    model: &HandKinematicModel,
) -> Result<JointVector, MappingError> {
    if assignment.drivers.len() != model.dof() {
        return Err(MappingError::DofMismatch { expected: model.dof(), got: assignment.drivers.len() });
    }
    let values = assignment
        .drivers
        .iter()
        .zip(model.joints())
        .enumerate()
        .map(|(j, (driver, joint))| {
            let (s, c) = (ty.stretch_posture[j], ty.contract_posture[j]);
            let theta = match driver.and_then(|f| ratios.get(f.index())) {
                Some(r) => interpolate_joint(*r, s, c),
                None => s,
            };
            joint.limits.clamp(theta)
        })
        .collect();
    Ok(JointVector::new(values))
}

/// Robot joint targets for one human hand frame.
pub fn map_frame(
    frame: &HumanHandFrame,
    assignment: &MappingAssignment,
    calibration: &CalibrationPair,
    library: &Library,
    model: &HandKinematicModel,
) -> Result<JointVector, MappingError> {
    let ty = library
        .get(&assignment.type_id)
        .ok_or_else(|| MappingError::UnknownType(assignment.type_id.clone()))?;
    let ratios = frame_ratios(frame, calibration)?;
    map_ratios(&ratios, ty, assignment, model)
}

/// Per-operator calibration, stored as TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    pub operator: String,
    pub hand_model_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub left: Option<CalibrationPair>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub right: Option<CalibrationPair>,
}

impl CalibrationProfile {
    pub fn from_toml_str(text: &str) -> Result<Self, MappingError> {
        let profile: Self = toml::from_str(text).map_err(|e| MappingError::Profile(e.to_string()))?;
        for pair in [&profile.left, &profile.right].into_iter().flatten() {
            pair.validate()?;
        }
        Ok(profile)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("profile serializes to TOML")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MappingError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| MappingError::Profile(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), MappingError> {
        std::fs::write(path.as_ref(), self.to_toml_string()).map_err(|e| MappingError::Profile(e.to_string()))
    }
}
