//! Offline runs of the rig against a scripted glove track.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{DemoHeader, DemonstrationFrame, GloveTrack, PlantConfig, PlantState, Recorder, Rig, RigError, Side, CONTROL_HZ, RECORD_HZ};
use crate::arm_control::ControllerConfig;
use crate::hand_model::HandKinematicModel;
use crate::type_library::Library;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub track: GloveTrack,
    /// Active type per hand, left then right.
    pub types: [Option<String>; 2],
    pub seed: u64,
    /// Seconds to run. Defaults to the track duration.
    pub duration: Option<f64>,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
}

impl SimConfig {
    pub fn new(track: GloveTrack, types: [Option<String>; 2], seed: u64) -> Self {
        Self {
            track,
            types,
            seed,
            duration: None,
            controller: ControllerConfig { loop_hz: CONTROL_HZ as f64, ..Default::default() },
            plant: PlantConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutput {
    pub header: DemoHeader,
    pub frames: Vec<DemonstrationFrame>,
    /// Plant state after every control tick.
    pub trajectory: Vec<PlantState>,
}

/// Runs the track through the rig at the control rate and records
/// demonstration frames at the recording rate.
pub fn simulate(model: Arc<HandKinematicModel>, library: Arc<Library>, config: &SimConfig) -> Result<SimOutput, RigError> {
    let duration = config.duration.unwrap_or_else(|| config.track.duration());
    let mut rig = Rig::new(model.clone(), library.clone(), config.controller, config.plant, config.seed);
    for side in Side::BOTH {
        rig.set_calibration(side, config.track.calibration())?;
        if let Some(id) = &config.types[side.index()] {
            rig.select_type(side, id)?;
        }
    }
    let glove = config.track.frames(config.seed);
    let header = DemoHeader::new(model.id(), &library.content_hash(), config.seed, config.types.clone());
    let ticks = (duration * config.controller.loop_hz).round() as u64;
    let mut recorder = Recorder::new(CONTROL_HZ, RECORD_HZ).with_limit((duration * RECORD_HZ as f64).round() as u64);
    let mut trajectory = Vec::with_capacity(ticks as usize);
    let mut next_glove = 0;
    for m in 0..ticks {
        let now = m as f64 * config.controller.dt();
        while next_glove < glove.len() && glove[next_glove].timestamp <= now + 1e-9 {
            let frame = &glove[next_glove];
            if let Some(f) = &frame.left {
                rig.set_glove(Side::Left, f.clone());
            }
            if let Some(f) = &frame.right {
                rig.set_glove(Side::Right, f.clone());
            }
            next_glove += 1;
        }
        let proprioception = rig.plant.proprioception();
        rig.step()?;
        recorder.observe(m, &proprioception, &rig.action());
        trajectory.push(rig.plant.clone());
    }
    Ok(SimOutput { header, frames: recorder.into_frames(), trajectory })
}
