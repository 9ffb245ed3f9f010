//! Session server for type-guided dexterous teleoperation.

pub mod engine;
pub mod protocol;
pub mod session;
pub mod ws;

pub use engine::{Engine, LatestValue, Submitted, TickOutput};
pub use session::{handle_message, Effect, Session, SessionConfig};
