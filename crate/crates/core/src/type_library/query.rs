//! Deterministic attribute matching.
//!
//! Each query field is tokenized and compared with the tokens of the
//! corresponding attribute field of every type. The score is the weighted
//! count of shared tokens. Ranking is by score, then by the weighted
//! fraction of the type's attribute tokens that were matched, then by id.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{Library, LibraryError, ManipulationType, TypeAttributes};
use crate::text::token_set;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttributeWeights {
    pub hand_posture: f64,
    pub object_categories: f64,
    pub contact_parts: f64,
    pub part_geometry: f64,
    pub grasp_direction: f64,
    pub purpose: f64,
}

impl Default for AttributeWeights {
    fn default() -> Self {
        Self {
            object_categories: 3.0,
            part_geometry: 2.0,
            purpose: 2.0,
            contact_parts: 1.0,
            grasp_direction: 1.0,
            hand_posture: 1.0,
        }
    }
}

/// Free-text query per attribute field. Empty strings are ignored.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeQuery {
    pub hand_posture: String,
    pub object_categories: String,
    pub contact_parts: String,
    pub part_geometry: String,
    pub grasp_direction: String,
    pub purpose: String,
}

impl AttributeQuery {
    /// The same text applied to every field.
    pub fn from_text(text: &str) -> Self {
        Self {
            hand_posture: text.into(),
            object_categories: text.into(),
            contact_parts: text.into(),
            part_geometry: text.into(),
            grasp_direction: text.into(),
            purpose: text.into(),
        }
    }

    pub fn from_attributes(attributes: &TypeAttributes) -> Self {
        Self {
            hand_posture: attributes.hand_posture.clone(),
            object_categories: attributes.object_categories.join(", "),
            contact_parts: attributes.contact_parts.join(", "),
            part_geometry: attributes.part_geometry.join(", "),
            grasp_direction: attributes.grasp_direction.clone(),
            purpose: attributes.purpose.clone(),
        }
    }

    fn fields(&self) -> [&str; 6] {
        [
            &self.hand_posture,
            &self.object_categories,
            &self.contact_parts,
            &self.part_geometry,
            &self.grasp_direction,
            &self.purpose,
        ]
    }

    pub fn is_empty(&self) -> bool {
        self.fields().iter().all(|f| token_set(f).is_empty())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TypeMatch<'a> {
    pub ty: &'a ManipulationType,
    pub score: f64,
    pub coverage: f64,
}

fn attribute_fields(a: &TypeAttributes) -> [String; 6] {
    [
        a.hand_posture.clone(),
        a.object_categories.join(" "),
        a.contact_parts.join(" "),
        a.part_geometry.join(" "),
        a.grasp_direction.clone(),
        a.purpose.clone(),
    ]
}

fn weights_array(w: &AttributeWeights) -> [f64; 6] {
    [
        w.hand_posture,
        w.object_categories,
        w.contact_parts,
        w.part_geometry,
        w.grasp_direction,
        w.purpose,
    ]
}

/// Ranks `candidates` (or every type when `None`) against `query`.
pub fn rank<'a>(
    candidates: impl IntoIterator<Item = &'a ManipulationType>,
    query: &AttributeQuery,
    weights: &AttributeWeights,
) -> Result<Vec<TypeMatch<'a>>, LibraryError> {
    let query_sets: Vec<BTreeSet<String>> = query.fields().iter().map(|f| token_set(f)).collect();
    if query_sets.iter().all(BTreeSet::is_empty) {
        return Err(LibraryError::EmptyQuery);
    }
    let w = weights_array(weights);
    let mut out: Vec<TypeMatch<'a>> = candidates
        .into_iter()
        .map(|ty| {
            let mut score = 0.0;
            let mut coverage = 0.0;
            for (i, text) in attribute_fields(&ty.attributes).iter().enumerate() {
                let attr = token_set(text);
                let shared = attr.intersection(&query_sets[i]).count() as f64;
                score += w[i] * shared;
                if !attr.is_empty() {
                    coverage += w[i] * shared / attr.len() as f64;
                }
            }
            TypeMatch { ty, score, coverage }
        })
        .collect();
    out.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(b.coverage.total_cmp(&a.coverage))
            .then_with(|| a.ty.id.cmp(&b.ty.id))
    });
    Ok(out)
}

/// Every type of `library` ranked against `query` with the default weights.
pub fn query_by_attributes<'a>(
    library: &'a Library,
    query: &AttributeQuery,
) -> Result<Vec<TypeMatch<'a>>, LibraryError> {
    rank(library.types(), query, &AttributeWeights::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::HandKinematicModel;

    fn lib() -> Library {
        Library::bundled(&HandKinematicModel::reference()).unwrap()
    }

    #[test]
    fn exact_attributes_rank_first_for_every_type() {
        let lib = lib();
        for ty in lib.types() {
            let ranked = query_by_attributes(&lib, &AttributeQuery::from_attributes(&ty.attributes)).unwrap();
            assert_eq!(ranked[0].ty.id, ty.id);
            let max = ranked.iter().map(|m| m.score).fold(0.0, f64::max);
            assert_eq!(ranked[0].score, max);
        }
    }

    #[test]
    fn no_overlap_orders_by_id() {
        let lib = lib();
        let ranked = query_by_attributes(&lib, &AttributeQuery::from_text("zyzzyva quokka")).unwrap();
        assert!(ranked.iter().all(|m| m.score == 0.0));
        let ids: Vec<_> = ranked.iter().map(|m| m.ty.id.clone()).collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn empty_query_rejected() {
        let lib = lib();
        assert_eq!(
            query_by_attributes(&lib, &AttributeQuery::default()).unwrap_err(),
            LibraryError::EmptyQuery
        );
        assert_eq!(
            query_by_attributes(&lib, &AttributeQuery::from_text("the of and")).unwrap_err(),
            LibraryError::EmptyQuery
        );
    }

    #[test]
    fn thin_handle_pour_wrap() {
        // hand label: pouring from a pan held by its thin handle
        let lib = lib();
        let ranked = query_by_attributes(&lib, &AttributeQuery::from_text("thin handle, pour, wrap")).unwrap();
        assert_eq!(ranked[0].ty.id, "three-finger-load-bearing-wrap");
    }

    #[test]
    fn ranking_is_deterministic() {
        let lib = lib();
        let q = AttributeQuery::from_text("hold the bottle and squeeze");
        let a: Vec<_> = query_by_attributes(&lib, &q).unwrap().iter().map(|m| (m.ty.id.clone(), m.score)).collect();
        let b: Vec<_> = query_by_attributes(&lib, &q).unwrap().iter().map(|m| (m.ty.id.clone(), m.score)).collect();
        assert_eq!(a, b);
    }
}
