//! Labeled retrieval cases and their scoring.
//!
//! Single-object cases run through the attribute matcher; the case passes
//! when the type chosen for the requested hand is one of the accepted ids.
//! Multi-object cases replay a canned model transcript through a local
//! fixture endpoint and the full external pipeline; the case passes when the
//! step count matches and every hand of every step is either accepted or,
//! when the accepted list is empty, left unassigned.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    match_command, retrieve, ExternalConfig, FixtureServer, Hands, ManipulationPlan, RetrievalBackend,
    RetrievalError, TaskRequest,
};
use crate::type_library::Library;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BenchKind {
    SingleObject,
    MultiObject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchStep {
    #[serde(default)]
    pub left: Vec<String>,
    #[serde(default)]
    pub right: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchCase {
    pub id: String,
    pub kind: BenchKind,
    pub command: String,
    pub hands: Hands,
    #[serde(default)]
    pub accept: Vec<String>,
    #[serde(default)]
    pub transcript: Option<String>,
    #[serde(default)]
    pub steps: Vec<BenchStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Benchmark {
    pub schema_version: String,
    pub cases: Vec<BenchCase>,
}

impl Benchmark {
    pub fn from_toml_str(text: &str) -> Result<Self, RetrievalError> {
        let bench: Self = toml::from_str(text).map_err(|e| RetrievalError::Benchmark(e.to_string()))?;
        for case in &bench.cases {
            match case.kind {
                BenchKind::SingleObject if case.accept.is_empty() => {
                    return Err(RetrievalError::Benchmark(format!("{}: no accepted types", case.id)));
                }
                BenchKind::MultiObject if case.transcript.is_none() || case.steps.is_empty() => {
                    return Err(RetrievalError::Benchmark(format!("{}: needs a transcript and steps", case.id)));
                }
                _ => {}
            }
        }
        Ok(bench)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| RetrievalError::Benchmark(e.to_string()))?;
        Self::from_toml_str(&text)
    }

    pub fn bundled() -> Self {
        Self::from_toml_str(crate::bundled::RETRIEVAL_BENCH).expect("bundled benchmark is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub id: String,
    pub kind: BenchKind,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub cases: Vec<CaseResult>,
    pub passed: usize,
    pub total: usize,
}

fn step_matches(plan: &ManipulationPlan, expected: &[BenchStep]) -> Result<(), String> {
    if plan.steps.len() != expected.len() {
        return Err(format!("{} steps, expected {}", plan.steps.len(), expected.len()));
    }
    for (i, (got, want)) in plan.steps.iter().zip(expected).enumerate() {
        for (hand, got, want) in [("left", &got.left_type, &want.left), ("right", &got.right_type, &want.right)] {
            let ok = match got {
                None => want.is_empty(),
                Some(id) => want.contains(id),
            };
            if !ok {
                return Err(format!("step {} {hand}: got {got:?}, accepted {want:?}", i + 1));
            }
        }
    }
    Ok(())
}

fn single_case(case: &BenchCase, library: &Library) -> (bool, String) {
    match match_command(library, &case.command, case.hands) {
        Ok(id) => (case.accept.contains(&id), id),
        Err(e) => (false, e.to_string()),
    }
}

/// Scores every case of `bench` against `library`.
pub fn run_benchmark(bench: &Benchmark, library: &Library) -> Result<BenchReport, RetrievalError> {
    let pairs = bench
        .cases
        .iter()
        .filter_map(|c| c.transcript.clone().map(|t| (c.command.clone(), t)))
        .collect();
    let server = FixtureServer::transcripts(pairs).map_err(|e| RetrievalError::Endpoint(e.to_string()))?;
    let backend = RetrievalBackend::External(ExternalConfig::new(server.url()));

    let cases: Vec<CaseResult> = bench
        .cases
        .iter()
        .map(|case| {
            let (passed, detail) = match case.kind {
                BenchKind::SingleObject => single_case(case, library),
                BenchKind::MultiObject => {
                    match retrieve(&TaskRequest::new(&case.command, case.hands), &backend, library) {
                        Ok(plan) => match step_matches(&plan, &case.steps) {
                            Ok(()) => (true, format!("{} steps", plan.steps.len())),
                            Err(why) => (false, why),
                        },
                        Err(e) => (false, e.to_string()),
                    }
                }
            };
            CaseResult { id: case.id.clone(), kind: case.kind, passed, detail }
        })
        .collect();
    let passed = cases.iter().filter(|c| c.passed).count();
    Ok(BenchReport { total: cases.len(), passed, cases })
}
