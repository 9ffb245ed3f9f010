//! Text format of a plan returned by the external model.
//!
//! ```text
//! The task is divided into 2 steps:
//! Step 1: pick up the cup
//! Step 2: pour
//! The types in each step are:
//! Step 1:
//! Left type: None
//! Right type: Thick Cylinder Grasp (for the cup)
//! Step 2: Left type: None Right type: Thick Cylinder Grasp
//! ```

use std::fmt::Write;
use std::sync::LazyLock;

use regex::Regex;

use super::{ManipulationPlan, PlanStep, RetrievalError};
use crate::type_library::Library;

static COUNT: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the\s+task\s+is\s+divided\s+into\s+(\d+)\s+steps?\s*:?").unwrap());
static TYPES_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)the\s+types\s+(?:in|for)\s+each\s+step\s+are\s*:?").unwrap());
static STEP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\bstep\s+(\d+)\s*:").unwrap());
static HAND: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(left|right)\s+type\s*:").unwrap());
static PAREN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\([^)]*\)?").unwrap());

const NONE_WORDS: &[&str] = &["none", "n/a", "na", "-", "null", "no type", "not used", "unused", "idle"];

/// Splits `text` at every `Step k:` marker into `(k, body)` pairs.
fn step_sections(text: &str) -> Vec<(usize, &str)> {
    let marks: Vec<_> = STEP.captures_iter(text).collect();
    marks
        .iter()
        .enumerate()
        .map(|(i, caps)| {
            let whole = caps.get(0).unwrap();
            let end = marks.get(i + 1).map_or(text.len(), |n| n.get(0).unwrap().start());
            let k = caps[1].parse().unwrap_or(0);
            (k, &text[whole.end()..end])
        })
        .collect()
}

fn clean_name(raw: &str) -> String {
    let no_paren = PAREN.replace_all(raw, "");
    no_paren
        .trim()
        .trim_matches(|c: char| c == '[' || c == ']' || c == '*' || c == '"' || c == '\'' || c == '`')
        .trim_end_matches(['.', ',', ';'])
        .trim()
        .to_string()
}

fn resolve(name: &str, library: &Library, unknown: &mut Vec<String>) -> Option<String> {
    if NONE_WORDS.contains(&name.to_ascii_lowercase().as_str()) || name.is_empty() {
        return None;
    }
    match library.find_by_name(name).or_else(|| library.get(name)) {
        Some(ty) => Some(ty.id.clone()),
        None => {
            if !unknown.iter().any(|u| u == name) {
                unknown.push(name.to_string());
            }
            None
        }
    }
}

/// Parses model output into a plan whose type ids all exist in `library`.
pub fn parse_plan(model_output: &str, library: &Library) -> Result<ManipulationPlan, RetrievalError> {
    let count_caps = COUNT
        .captures(model_output)
        .ok_or_else(|| RetrievalError::Format("missing \"The task is divided into N steps\"".into()))?;
    let n: usize = count_caps[1]
        .parse()
        .map_err(|_| RetrievalError::Format("step count is not a number".into()))?;
    if n == 0 {
        return Err(RetrievalError::Format("step count is zero".into()));
    }
    let header = TYPES_HEADER
        .find(model_output)
        .ok_or_else(|| RetrievalError::Format("missing \"The types in each step are\"".into()))?;
    let descriptions_text = &model_output[count_caps.get(0).unwrap().end()..header.start()];
    let types_text = &model_output[header.end()..];

    let descriptions = step_sections(descriptions_text);
    let assignments = step_sections(types_text);
    let expected: Vec<usize> = (1..=n).collect();
    if descriptions.iter().map(|(k, _)| *k).collect::<Vec<_>>() != expected {
        return Err(RetrievalError::Format(format!(
            "expected step descriptions 1..={n}, found {}",
            descriptions.len()
        )));
    }
    if assignments.iter().map(|(k, _)| *k).collect::<Vec<_>>() != expected {
        return Err(RetrievalError::Format(format!(
            "expected type assignments for steps 1..={n}, found {}",
            assignments.len()
        )));
    }

    let mut unknown = Vec::new();
    let mut steps = Vec::with_capacity(n);
    for ((_, description), (k, body)) in descriptions.iter().zip(&assignments) {
        let marks: Vec<_> = HAND.captures_iter(body).collect();
        if marks.is_empty() {
            return Err(RetrievalError::Format(format!("step {k} has no \"Left type:\" or \"Right type:\"")));
        }
        let mut left = None;
        let mut right = None;
        for (i, caps) in marks.iter().enumerate() {
            let start = caps.get(0).unwrap().end();
            let end = marks.get(i + 1).map_or(body.len(), |m| m.get(0).unwrap().start());
            let value = body[start..end].lines().next().unwrap_or("");
            let id = resolve(&clean_name(value), library, &mut unknown);
            if caps[1].eq_ignore_ascii_case("left") {
                left = id;
            } else {
                right = id;
            }
        }
        steps.push(PlanStep {
            description: description.split_whitespace().collect::<Vec<_>>().join(" "),
            left_type: left,
            right_type: right,
        });
    }
    if !unknown.is_empty() {
        return Err(RetrievalError::UnknownTypes(unknown));
    }
    let plan = ManipulationPlan { steps };
    plan.validate(library)?;
    Ok(plan)
}

/// Writes `plan` in the format accepted by [`parse_plan`].
pub fn render_plan(plan: &ManipulationPlan, library: &Library) -> String {
    let name = |id: &Option<String>| match id {
        Some(id) => library.get(id).map_or_else(|| id.clone(), |t| t.name.clone()),
        None => "None".to_string(),
    };
    let mut out = String::new();
    let _ = writeln!(out, "The task is divided into {} steps:", plan.steps.len());
    for (i, step) in plan.steps.iter().enumerate() {
        let _ = writeln!(out, "Step {}: {}", i + 1, step.description);
    }
    out.push_str("The types in each step are:\n");
    for (i, step) in plan.steps.iter().enumerate() {
        let _ = writeln!(out, "Step {}:", i + 1);
        let _ = writeln!(out, "Left type: {}", name(&step.left_type));
        let _ = writeln!(out, "Right type: {}", name(&step.right_type));
    }
    out
}
