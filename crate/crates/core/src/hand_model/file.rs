//! Hand model description file.
//!
//! ```toml
//! schema_version = "1"
//! id = "leap-16"
//!
//! [[chains]]
//! name = "index"
//! fingertip_offset = [0.035, 0.0, 0.0]
//!
//! [[chains.joints]]
//! name = "index_abd"
//! axis = [0.0, 0.0, 1.0]
//! origin_offset = [0.09, 0.04, 0.0]
//! origin_rpy = [0.0, 0.0, 0.0]
//! limits = [-0.35, 0.35]
//! ```

use std::path::Path;

use nalgebra::{Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{FingerChain, HandKinematicModel, Joint, JointLimits, KinematicsError};

pub const HAND_MODEL_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HandModelFile {
    pub schema_version: String,
    pub id: String,
    pub chains: Vec<ChainSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub name: String,
    pub fingertip_offset: [f64; 3],
    pub joints: Vec<JointSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub name: String,
    pub axis: [f64; 3],
    pub origin_offset: [f64; 3],
    /// Fixed rotation of the joint frame as roll, pitch, yaw in radians.
    #[serde(default)]
    pub origin_rpy: [f64; 3],
    pub limits: [f64; 2],
}

impl HandModelFile {
    pub fn parse(text: &str) -> Result<Self, KinematicsError> {
        toml::from_str(text).map_err(|e| KinematicsError::Parse(e.to_string()))
    }

    pub fn into_model(self) -> Result<HandKinematicModel, KinematicsError> {
        if self.schema_version != HAND_MODEL_SCHEMA_VERSION {
            return Err(KinematicsError::InvalidModel(format!(
                "unsupported schema_version {:?}",
                self.schema_version
            )));
        }
        let chains = self
            .chains
            .into_iter()
            .map(|c| {
                let joints = c
                    .joints
                    .into_iter()
                    .map(|j| {
                        let axis = Vector3::from(j.axis);
                        if axis.norm() < 1e-9 {
                            return Err(KinematicsError::InvalidModel(format!(
                                "joint {} has a zero axis",
                                j.name
                            )));
                        }
                        let [roll, pitch, yaw] = j.origin_rpy;
                        Ok(Joint {
                            axis: Unit::new_normalize(axis),
                            origin_offset: Vector3::from(j.origin_offset),
                            origin_rotation: UnitQuaternion::from_euler_angles(roll, pitch, yaw),
                            limits: JointLimits {
                                min: j.limits[0],
                                max: j.limits[1],
                            },
                            name: j.name,
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(FingerChain {
                    name: c.name,
                    joints,
                    fingertip_offset: Vector3::from(c.fingertip_offset),
                })
            })
            .collect::<Result<Vec<_>, KinematicsError>>()?;
        HandKinematicModel::new(self.id, chains)
    }
}

impl HandKinematicModel {
    pub fn from_toml_str(text: &str) -> Result<Self, KinematicsError> {
        HandModelFile::parse(text)?.into_model()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KinematicsError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| KinematicsError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The bundled 16-DOF reference hand (four chains of four joints).
    pub fn reference() -> Self {
        Self::from_toml_str(crate::bundled::LEAP_HAND).expect("bundled hand model is valid")
    }

    /// The bundled alternative 16-DOF hand used to check the model is data-driven.
    pub fn alternate() -> Self {
        Self::from_toml_str(crate::bundled::ALLEGRO_HAND).expect("bundled hand model is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_models_have_sixteen_dof() {
        for model in [HandKinematicModel::reference(), HandKinematicModel::alternate()] {
            assert_eq!(model.dof(), 16, "{}", model.id());
            assert_eq!(model.chains().len(), 4);
        }
    }

    #[test]
    fn unknown_field_is_a_parse_error() {
        let text = r#"
schema_version = "1"
id = "x"
colour = "red"
chains = []
"#;
        assert!(matches!(
            HandKinematicModel::from_toml_str(text),
            Err(KinematicsError::Parse(_))
        ));
    }

    #[test]
    fn empty_chain_list_is_invalid() {
        let text = "schema_version = \"1\"\nid = \"x\"\nchains = []\n";
        assert!(matches!(
            HandKinematicModel::from_toml_str(text),
            Err(KinematicsError::InvalidModel(_))
        ));
    }
}
