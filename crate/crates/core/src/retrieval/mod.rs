//! Picking manipulation types for a task.
//!
//! Two backends produce a [`ManipulationPlan`]: an external multimodal model
//! reached over HTTP, which is prompted with the library and asked for a
//! step-by-step plan in a fixed text format, and a local attribute matcher
//! that returns a single step holding the best-scoring type.

mod bench;
mod client;
mod fixture;
mod plan;
mod prompt;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::type_library::{rank, AttributeQuery, AttributeWeights, Library, LibraryError, TopCategory};

pub use bench::{run_benchmark, BenchCase, BenchKind, BenchReport, BenchStep, Benchmark, CaseResult};
pub use client::{call_model, ExternalConfig, ModelRequest, ModelResponse};
pub use fixture::FixtureServer;
pub use plan::{parse_plan, render_plan};
pub use prompt::{build_prompt, build_prompt_for_types};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RetrievalError {
    #[error("command text is empty")]
    EmptyCommand,
    #[error("model output is not a plan: {0}")]
    Format(String),
    #[error("unknown type names: {}", .0.join(", "))]
    UnknownTypes(Vec<String>),
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("model endpoint not configured: {0}")]
    NotConfigured(String),
    #[error("model endpoint timed out after {0:?}")]
    Timeout(Duration),
    #[error("model endpoint: {0}")]
    Endpoint(String),
    #[error("benchmark file: {0}")]
    Benchmark(String),
    #[error(transparent)]
    Library(#[from] LibraryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Hands {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRequest {
    pub command_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_image: Option<Vec<u8>>,
    pub hands: Hands,
}

impl TaskRequest {
    pub fn new(command_text: impl Into<String>, hands: Hands) -> Self {
        Self { command_text: command_text.into(), scene_image: None, hands }
    }

    pub fn validate(&self) -> Result<(), RetrievalError> {
        if self.command_text.trim().is_empty() {
            Err(RetrievalError::EmptyCommand)
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanStep {
    pub description: String,
    pub left_type: Option<String>,
    pub right_type: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManipulationPlan {
    pub steps: Vec<PlanStep>,
}

impl ManipulationPlan {
    pub fn validate(&self, library: &Library) -> Result<(), RetrievalError> {
        if self.steps.is_empty() {
            return Err(RetrievalError::InvalidPlan("plan has no steps".into()));
        }
        let mut unknown = Vec::new();
        for (i, step) in self.steps.iter().enumerate() {
            if step.left_type.is_none() && step.right_type.is_none() {
                return Err(RetrievalError::InvalidPlan(format!("step {} assigns no hand", i + 1)));
            }
            for id in [&step.left_type, &step.right_type].into_iter().flatten() {
                if library.get(id).is_none() && !unknown.contains(id) {
                    unknown.push(id.clone());
                }
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(RetrievalError::UnknownTypes(unknown))
        }
    }

    /// Number of hand-to-type assignments across all steps.
    pub fn assignment_count(&self) -> usize {
        self.steps
            .iter()
            .map(|s| s.left_type.is_some() as usize + s.right_type.is_some() as usize)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RetrievalBackend {
    DeterministicMatcher,
    External(ExternalConfig),
}

/// Best library type for `command` among those usable with `hands`.
pub fn match_command(library: &Library, command: &str, hands: Hands) -> Result<String, RetrievalError> {
    let query = AttributeQuery::from_text(command);
    let candidates = library
        .types()
        .iter()
        .filter(|t| hands == Hands::Both || t.category.top == TopCategory::SingleHand);
    let ranked = rank(candidates, &query, &AttributeWeights::default())?;
    ranked
        .first()
        .map(|m| m.ty.id.clone())
        .ok_or_else(|| RetrievalError::InvalidPlan("library has no candidate types".into()))
}

fn deterministic_plan(request: &TaskRequest, library: &Library) -> Result<ManipulationPlan, RetrievalError> {
    let id = match_command(library, &request.command_text, request.hands)?;
    let (left_type, right_type) = match request.hands {
        Hands::Left => (Some(id), None),
        Hands::Right => (None, Some(id)),
        Hands::Both => (Some(id.clone()), Some(id)),
    };
    Ok(ManipulationPlan {
        steps: vec![PlanStep { description: request.command_text.trim().to_string(), left_type, right_type }],
    })
}

/// Produces a plan for `request` with the chosen backend.
pub fn retrieve(
    request: &TaskRequest,
    backend: &RetrievalBackend,
    library: &Library,
) -> Result<ManipulationPlan, RetrievalError> {
    request.validate()?;
    match backend {
        RetrievalBackend::DeterministicMatcher => deterministic_plan(request, library),
        RetrievalBackend::External(config) => {
            let prompt = build_prompt(library, request);
            let mut attempt = 0;
            loop {
                let output = call_model(config, &prompt, request.scene_image.as_deref())?;
                match parse_plan(&output, library) {
                    Err(RetrievalError::Format(msg)) if attempt == 0 => {
                        log::warn!("model output rejected ({msg}), retrying once");
                        attempt += 1;
                    }
                    other => return other,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hand_model::HandKinematicModel;

    fn lib() -> Library {
        Library::bundled(&HandKinematicModel::reference()).unwrap()
    }

    #[test]
    fn deterministic_single_step() {
        let lib = lib();
        let plan = retrieve(
            &TaskRequest::new("use the scissors to cut the paper", Hands::Left),
            &RetrievalBackend::DeterministicMatcher,
            &lib,
        )
        .unwrap();
        assert_eq!(plan.steps.len(), 1);
        assert_eq!(plan.steps[0].left_type.as_deref(), Some("scissor-grasp"));
        assert_eq!(plan.steps[0].right_type, None);
    }

    #[test]
    fn exact_category_and_purpose_wins() {
        let lib = lib();
        for ty in lib.types() {
            let command = format!("{} {}", ty.attributes.object_categories.join(" "), ty.attributes.purpose);
            let hands = if ty.category.top == TopCategory::Bimanual { Hands::Both } else { Hands::Right };
            let plan = retrieve(&TaskRequest::new(command, hands), &RetrievalBackend::DeterministicMatcher, &lib)
                .unwrap();
            let got = plan.steps[0].right_type.as_deref();
            assert_eq!(got, Some(ty.id.as_str()));
        }
    }

    #[test]
    fn single_hand_requests_skip_bimanual_types() {
        let lib = lib();
        let id = match_command(&lib, "lift the big box with both hands", Hands::Right).unwrap();
        assert_eq!(lib.get(&id).unwrap().category.top, TopCategory::SingleHand);
    }

    #[test]
    fn empty_command_rejected() {
        let lib = lib();
        let err = retrieve(&TaskRequest::new("  ", Hands::Both), &RetrievalBackend::DeterministicMatcher, &lib);
        assert_eq!(err.unwrap_err(), RetrievalError::EmptyCommand);
    }

    #[test]
    fn plan_validation() {
        let lib = lib();
        let empty = ManipulationPlan { steps: vec![] };
        assert!(matches!(empty.validate(&lib), Err(RetrievalError::InvalidPlan(_))));
        let unassigned = ManipulationPlan {
            steps: vec![PlanStep { description: "x".into(), left_type: None, right_type: None }],
        };
        assert!(matches!(unassigned.validate(&lib), Err(RetrievalError::InvalidPlan(_))));
    }

    #[test]
    fn external_retries_once_on_format_error() {
        let lib = lib();
        let good = "The task is divided into 1 steps:\nStep 1: poke\nThe types in each step are:\n\
                    Step 1: Left type: None Right type: Index Poke\n";
        let server = FixtureServer::sequence(vec!["sorry, I cannot help".into(), good.into()]).unwrap();
        let mut config = ExternalConfig::new(server.url());
        config.api_key = Some("k123".into());
        let plan = retrieve(&TaskRequest::new("press the button", Hands::Right), &RetrievalBackend::External(config), &lib)
            .unwrap();
        assert_eq!(plan.steps[0].right_type.as_deref(), Some("index-poke"));
        assert_eq!(server.request_count(), 2);
        assert_eq!(server.last_authorization().as_deref(), Some("Bearer k123"));
    }

    #[test]
    fn external_gives_up_after_second_format_error() {
        let lib = lib();
        let server = FixtureServer::fixed("no plan here", Duration::ZERO).unwrap();
        let err = retrieve(
            &TaskRequest::new("press the button", Hands::Right),
            &RetrievalBackend::External(ExternalConfig::new(server.url())),
            &lib,
        )
        .unwrap_err();
        assert!(matches!(err, RetrievalError::Format(_)));
        assert_eq!(server.request_count(), 2);
    }

    #[test]
    fn image_is_sent_as_base64() {
        let lib = lib();
        let server = FixtureServer::fixed("", Duration::ZERO).unwrap();
        let mut req = TaskRequest::new("pour", Hands::Right);
        req.scene_image = Some(b"PNG".to_vec());
        let _ = retrieve(&req, &RetrievalBackend::External(ExternalConfig::new(server.url())), &lib);
        assert_eq!(server.last_request().unwrap().image.as_deref(), Some("UE5H"));
    }

    #[test]
    fn slow_endpoint_times_out() {
        let lib = lib();
        let server = FixtureServer::fixed("", Duration::from_millis(800)).unwrap();
        let mut config = ExternalConfig::new(server.url());
        config.timeout = Duration::from_millis(100);
        let err = retrieve(&TaskRequest::new("pour", Hands::Right), &RetrievalBackend::External(config), &lib)
            .unwrap_err();
        assert!(matches!(err, RetrievalError::Timeout(_)), "{err:?}");
    }

    #[test]
    fn unreachable_endpoint_is_an_endpoint_error() {
        let lib = lib();
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/", listener.local_addr().unwrap());
        drop(listener);
        let err = retrieve(&TaskRequest::new("pour", Hands::Right), &RetrievalBackend::External(ExternalConfig::new(url)), &lib)
            .unwrap_err();
        assert!(matches!(err, RetrievalError::Endpoint(_)), "{err:?}");
    }
}
