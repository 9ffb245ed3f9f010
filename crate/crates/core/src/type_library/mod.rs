//! The hierarchical library of dexterous manipulation types.
//!
//! Every type pairs a stretch posture and a contract posture of the robot hand
//! with attribute annotations used for retrieval. The library is immutable
//! once loaded; adding a type produces a new [`Library`].

mod file;
mod query;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::{HandKinematicModel, JointVector};

pub use file::{LibraryFile, TypeRecord};
pub use query::{query_by_attributes, rank, AttributeQuery, AttributeWeights, TypeMatch};

pub const LIBRARY_SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LibraryError {
    #[error("failed to read library: {0}")]
    Io(String),
    #[error("failed to parse library: {0}")]
    Parse(String),
    #[error("type {type_id:?}: field {field}: {reason}")]
    Validation {
        type_id: String,
        field: String,
        reason: String,
    },
    #[error("type {type_id:?}: {field} has {got} values, hand model has {expected} degrees of freedom")]
    DofMismatch {
        type_id: String,
        field: String,
        expected: usize,
        got: usize,
    },
    #[error("duplicate type id {0:?}")]
    DuplicateId(String),
    #[error("library targets hand model {library:?} but {model:?} was supplied")]
    HandModelMismatch { library: String, model: String },
    #[error("library contains no types")]
    Empty,
    #[error("unsupported schema_version {0:?}")]
    SchemaVersion(String),
    #[error("no type with id {0:?}")]
    NotFound(String),
    #[error("attribute query has no non-empty field")]
    EmptyQuery,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TopCategory {
    SingleHand,
    Bimanual,
}

/// Leaf of the taxonomy. The two grasp leaves share one sub-category, so the
/// taxonomy has four sub-categories: grasp, non-grasp, symmetric and
/// asymmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubCategory {
    RobotExclusiveGrasp,
    GeneralGrasp,
    NonGrasp,
    Symmetric,
    Asymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubCategoryGroup {
    Grasp,
    NonGrasp,
    Symmetric,
    Asymmetric,
}

impl SubCategory {
    pub fn group(self) -> SubCategoryGroup {
        match self {
            SubCategory::RobotExclusiveGrasp | SubCategory::GeneralGrasp => SubCategoryGroup::Grasp,
            SubCategory::NonGrasp => SubCategoryGroup::NonGrasp,
            SubCategory::Symmetric => SubCategoryGroup::Symmetric,
            SubCategory::Asymmetric => SubCategoryGroup::Asymmetric,
        }
    }

    pub fn top(self) -> TopCategory {
        match self {
            SubCategory::Symmetric | SubCategory::Asymmetric => TopCategory::Bimanual,
            _ => TopCategory::SingleHand,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaxonomyPath {
    pub top: TopCategory,
    pub sub: SubCategory,
}

impl TaxonomyPath {
    pub fn is_consistent(&self) -> bool {
        self.sub.top() == self.top
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Handedness {
    Left,
    Right,
    Either,
    BimanualRole,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeAttributes {
    pub hand_posture: String,
    pub object_categories: Vec<String>,
    pub contact_parts: Vec<String>,
    pub part_geometry: Vec<String>,
    pub grasp_direction: String,
    pub purpose: String,
}

impl TypeAttributes {
    fn first_empty_field(&self) -> Option<&'static str> {
        let blank = |s: &str| s.trim().is_empty();
        let blank_list = |v: &[String]| v.is_empty() || v.iter().all(|s| blank(s));
        if blank(&self.hand_posture) {
            Some("attributes.hand_posture")
        } else if blank_list(&self.object_categories) {
            Some("attributes.object_categories")
        } else if blank_list(&self.contact_parts) {
            Some("attributes.contact_parts")
        } else if blank_list(&self.part_geometry) {
            Some("attributes.part_geometry")
        } else if blank(&self.grasp_direction) {
            Some("attributes.grasp_direction")
        } else if blank(&self.purpose) {
            Some("attributes.purpose")
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManipulationType {
    pub id: String,
    pub name: String,
    pub category: TaxonomyPath,
    pub handedness: Handedness,
    pub stretch_posture: JointVector,
    pub contract_posture: JointVector,
    pub attributes: TypeAttributes,
}

impl ManipulationType {
    /// Checks the type against the hand model: posture length, joint limits,
    /// taxonomy consistency and non-empty annotations.
    pub fn validate(&self, model: &HandKinematicModel) -> Result<(), LibraryError> {
        let invalid = |field: &str, reason: String| LibraryError::Validation {
            type_id: self.id.clone(),
            field: field.to_string(),
            reason,
        };
        if self.id.trim().is_empty() {
            return Err(invalid("id", "must not be empty".into()));
        }
        if self.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty".into()));
        }
        if !self.category.is_consistent() {
            return Err(invalid(
                "category.sub",
                format!("{:?} is not a sub-category of {:?}", self.category.sub, self.category.top),
            ));
        }
        for (field, posture) in [
            ("stretch_posture", &self.stretch_posture),
            ("contract_posture", &self.contract_posture),
        ] {
            if posture.len() != model.dof() {
                return Err(LibraryError::DofMismatch {
                    type_id: self.id.clone(),
                    field: field.into(),
                    expected: model.dof(),
                    got: posture.len(),
                });
            }
            for (i, (joint, &value)) in model.joints().zip(posture.iter()).enumerate() {
                if !value.is_finite() || !joint.limits.contains(value) {
                    return Err(invalid(
                        field,
                        format!(
                            "joint {i} ({}) value {value} outside [{}, {}]",
                            joint.name, joint.limits.min, joint.limits.max
                        ),
                    ));
                }
            }
        }
        if let Some(field) = self.attributes.first_empty_field() {
            return Err(invalid(field, "must not be empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Library {
    schema_version: String,
    hand_model_id: String,
    types: Vec<ManipulationType>,
    index: HashMap<String, usize>,
}

impl Library {
    /// Validates every type and builds the id index.
    pub fn new(
        schema_version: impl Into<String>,
        hand_model_id: impl Into<String>,
        types: Vec<ManipulationType>,
        model: &HandKinematicModel,
    ) -> Result<Self, LibraryError> {
        let schema_version = schema_version.into();
        let hand_model_id = hand_model_id.into();
        if schema_version != LIBRARY_SCHEMA_VERSION {
            return Err(LibraryError::SchemaVersion(schema_version));
        }
        if hand_model_id != model.id() {
            return Err(LibraryError::HandModelMismatch {
                library: hand_model_id,
                model: model.id().to_string(),
            });
        }
        if types.is_empty() {
            return Err(LibraryError::Empty);
        }
        let mut index = HashMap::with_capacity(types.len());
        for (i, ty) in types.iter().enumerate() {
            if index.insert(ty.id.clone(), i).is_some() {
                return Err(LibraryError::DuplicateId(ty.id.clone()));
            }
            ty.validate(model)?;
        }
        Ok(Self {
            schema_version,
            hand_model_id,
            types,
            index,
        })
    }

    pub fn schema_version(&self) -> &str {
        &self.schema_version
    }

    pub fn hand_model_id(&self) -> &str {
        &self.hand_model_id
    }

    pub fn types(&self) -> &[ManipulationType] {
        &self.types
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ManipulationType> {
        self.index.get(id).map(|&i| &self.types[i])
    }

    /// Case-insensitive lookup by display name.
    pub fn find_by_name(&self, name: &str) -> Option<&ManipulationType> {
        let wanted = name.trim().to_lowercase();
        self.types.iter().find(|t| t.name.to_lowercase() == wanted)
    }

    pub fn sub_categories(&self) -> BTreeSet<SubCategoryGroup> {
        self.types.iter().map(|t| t.category.sub.group()).collect()
    }

    /// A new library with `ty` appended. `self` is left untouched.
    pub fn with_type(
        &self,
        ty: ManipulationType,
        model: &HandKinematicModel,
    ) -> Result<Library, LibraryError> {
        let mut types = self.types.clone();
        types.push(ty);
        Library::new(self.schema_version.clone(), self.hand_model_id.clone(), types, model)
    }

    /// A new library holding the types of `self` followed by those of `other`.
    pub fn merged(&self, other: &Library, model: &HandKinematicModel) -> Result<Library, LibraryError> {
        let mut types = self.types.clone();
        types.extend(other.types.iter().cloned());
        Library::new(self.schema_version.clone(), self.hand_model_id.clone(), types, model)
    }

    /// Hex SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn from_toml_str(text: &str, model: &HandKinematicModel) -> Result<Self, LibraryError> {
        LibraryFile::parse(text)?.into_library(model)
    }

    pub fn to_toml_string(&self) -> String {
        LibraryFile::from_library(self).to_toml_string()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LibraryError> {
        std::fs::write(path.as_ref(), self.to_toml_string())
            .map_err(|e| LibraryError::Io(format!("{}: {e}", path.as_ref().display())))
    }

    /// The bundled library for the reference hand.
    pub fn bundled(model: &HandKinematicModel) -> Result<Self, LibraryError> {
        Self::from_toml_str(crate::bundled::TYPE_LIBRARY, model)
    }
}

/// Reads, parses and validates a library file against `model`.
pub fn load_library(path: impl AsRef<Path>, model: &HandKinematicModel) -> Result<Library, LibraryError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| LibraryError::Io(format!("{}: {e}", path.display())))?;
    Library::from_toml_str(&text, model)
}

pub fn get_type<'a>(library: &'a Library, id: &str) -> Result<&'a ManipulationType, LibraryError> {
    library.get(id).ok_or_else(|| LibraryError::NotFound(id.to_string()))
}
