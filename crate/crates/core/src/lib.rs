//! Core library for type-guided dexterous teleoperation.

pub mod arm_control;
pub mod bundled;
pub mod hand_model;
pub mod mapping;
pub mod retrieval;
pub mod sim;
pub mod teach;
pub mod text;
pub mod type_library;
