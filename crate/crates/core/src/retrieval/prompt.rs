use std::fmt::Write;

use super::{Hands, TaskRequest};
use crate::type_library::{Library, ManipulationType, SubCategory, TopCategory};

fn category_label(top: TopCategory, sub: SubCategory) -> String {
    let top = match top {
        TopCategory::SingleHand => "single-hand",
        TopCategory::Bimanual => "bimanual",
    };
    let sub = serde_json::to_value(sub)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default();
    format!("{top} / {sub}")
}

/// System prompt for the external model: role, the three-part instruction,
/// the output template the plan parser expects, the type library and the
/// operator's command.
pub fn build_prompt(library: &Library, request: &TaskRequest) -> String {
    build_prompt_for_types(library.types(), request)
}

/// [`build_prompt`] over an explicit list of types.
pub fn build_prompt_for_types(types: &[ManipulationType], request: &TaskRequest) -> String {
    let mut p = String::new();
    p.push_str("You are an expert in robotic manipulation with dexterous hands. ");
    p.push_str("You receive an operator's goal, possibly with a picture of the objects involved. Please:\n");
    p.push_str("(1) Decompose the task into a short ordered list of manipulation steps.\n");
    p.push_str("(2) Assign a manipulation type from the type library below to each hand (left/right) in every step. ");
    p.push_str("Write None for a hand that is not used.\n");
    p.push_str("(3) Format your answer exactly as follows:\n");
    p.push_str("The task is divided into N steps:\n");
    p.push_str("Step 1: [subtask description]\n");
    p.push_str("Step 2: [subtask description]\n");
    p.push_str("...\n");
    p.push_str("The types in each step are:\n");
    p.push_str("Step 1: Left type: [type name] Right type: [type name]\n");
    p.push_str("Step 2: Left type: [type name] Right type: [type name]\n");
    p.push_str("...\n\n");

    p.push_str("Type library:\n");
    for ty in types {
        let a = &ty.attributes;
        let _ = writeln!(p, "- {} [{}]", ty.name, category_label(ty.category.top, ty.category.sub));
        let _ = writeln!(p, "  hand posture: {}", a.hand_posture);
        let _ = writeln!(p, "  object categories: {}", a.object_categories.join(", "));
        let _ = writeln!(p, "  contact parts: {}", a.contact_parts.join(", "));
        let _ = writeln!(p, "  part geometry: {}", a.part_geometry.join(", "));
        let _ = writeln!(p, "  grasp direction: {}", a.grasp_direction);
        let _ = writeln!(p, "  purpose: {}", a.purpose);
    }
    p.push('\n');

    let hands = match request.hands {
        Hands::Left => "Only the left hand is available.",
        Hands::Right => "Only the right hand is available.",
        Hands::Both => "Both hands are available.",
    };
    p.push_str(hands);
    p.push('\n');
    if request.scene_image.is_some() {
        p.push_str("An image of the scene is attached.\n");
    } else {
        p.push_str("No image is attached.\n");
    }
    let command = request.command_text.trim();
    let command = command.strip_prefix("I want to ").unwrap_or(command);
    let _ = writeln!(p, "User Command: I want to {}", command.trim_end_matches('.'));
    p
}
