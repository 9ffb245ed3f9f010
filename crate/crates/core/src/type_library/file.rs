//! On-disk library format.
//!
//! Every per-type field is optional at the parse layer so that a missing
//! field is reported against the id of the type that lacks it.

use serde::{Deserialize, Serialize};

use super::{
    Handedness, Library, LibraryError, ManipulationType, TaxonomyPath, TypeAttributes,
};
use crate::hand_model::{HandKinematicModel, JointVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LibraryFile {
    pub schema_version: String,
    pub hand_model_id: String,
    #[serde(default)]
    pub types: Vec<TypeRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct TypeRecord {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<TaxonomyPath>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub handedness: Option<Handedness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stretch_posture: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contract_posture: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub attributes: Option<TypeAttributes>,
}

impl LibraryFile {
    pub fn parse(text: &str) -> Result<Self, LibraryError> {
        toml::from_str(text).map_err(|e| LibraryError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("library serializes to TOML")
    }

    pub fn from_library(library: &Library) -> Self {
        Self {
            schema_version: library.schema_version().to_string(),
            hand_model_id: library.hand_model_id().to_string(),
            types: library.types().iter().map(TypeRecord::from_type).collect(),
        }
    }

    pub fn into_library(self, model: &HandKinematicModel) -> Result<Library, LibraryError> {
        let types = self
            .types
            .into_iter()
            .enumerate()
            .map(|(i, r)| r.into_type(i))
            .collect::<Result<Vec<_>, _>>()?;
        Library::new(self.schema_version, self.hand_model_id, types, model)
    }
}

impl TypeRecord {
    pub fn from_type(ty: &ManipulationType) -> Self {
        Self {
            id: Some(ty.id.clone()),
            name: Some(ty.name.clone()),
            category: Some(ty.category),
            handedness: Some(ty.handedness),
            stretch_posture: Some(ty.stretch_posture.to_vec()),
            contract_posture: Some(ty.contract_posture.to_vec()),
            attributes: Some(ty.attributes.clone()),
        }
    }

    fn into_type(self, position: usize) -> Result<ManipulationType, LibraryError> {
        let id = self.id.ok_or_else(|| LibraryError::Validation {
            type_id: format!("#{position}"),
            field: "id".into(),
            reason: "missing".into(),
        })?;
        let missing = |field: &str| LibraryError::Validation {
            type_id: id.clone(),
            field: field.into(),
            reason: "missing".into(),
        };
        Ok(ManipulationType {
            name: self.name.ok_or_else(|| missing("name"))?,
            category: self.category.ok_or_else(|| missing("category"))?,
            handedness: self.handedness.ok_or_else(|| missing("handedness"))?,
            stretch_posture: JointVector::new(
                self.stretch_posture.ok_or_else(|| missing("stretch_posture"))?,
            ),
            contract_posture: JointVector::new(
                self.contract_posture.ok_or_else(|| missing("contract_posture"))?,
            ),
            attributes: self.attributes.ok_or_else(|| missing("attributes"))?,
            id,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let model = HandKinematicModel::reference();
        let lib = Library::bundled(&model).unwrap();
        let again = Library::from_toml_str(&lib.to_toml_string(), &model).unwrap();
        assert_eq!(again, lib);
    }

    #[test]
    fn malformed_text_is_a_parse_error() {
        let model = HandKinematicModel::reference();
        assert!(matches!(
            Library::from_toml_str("schema_version = [", &model),
            Err(LibraryError::Parse(_))
        ));
    }
}
