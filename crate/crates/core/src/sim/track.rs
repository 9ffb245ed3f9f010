//! Scripted glove tracks.
//!
//! A track lists keyframes per hand: a time, one closure ratio per human
//! finger and a wrist pose. Frames are produced at `rate_hz` by linear
//! interpolation between keyframes, placing each fingertip on its
//! calibration segment, with optional seeded fingertip noise.
//!
//! ```toml
//! schema_version = "1"
//! rate_hz = 25.0
//! duration = 4.0
//!
//! [[right]]
//! t = 0.0
//! ratios = [0.0, 0.0, 0.0, 0.0, 0.0]
//! wrist_position = [0.4, -0.2, 0.3]
//! wrist_rotvec = [0.0, 0.0, 0.0]
//! ```

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hand_model::Pose;
use crate::mapping::{CalibrationPair, HumanHandFrame};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrackError {
    #[error("track file: {0}")]
    Parse(String),
    #[error("invalid track: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Keyframe {
    pub t: f64,
    pub ratios: Vec<f64>,
    pub wrist_position: [f64; 3],
    #[serde(default)]
    pub wrist_rotvec: [f64; 3],
}

impl Keyframe {
    fn wrist(&self) -> Pose {
        Pose::from_position_rotvec(Vector3::from(self.wrist_position), Vector3::from(self.wrist_rotvec))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GloveTrack {
    pub schema_version: String,
    pub rate_hz: f64,
    /// Seconds of frames to produce. Defaults to the last keyframe time.
    #[serde(default)]
    pub duration: Option<f64>,
    /// Restart from the first keyframe after the last one.
    #[serde(default, rename = "loop")]
    pub looped: bool,
    /// Fingertip noise standard deviation, meters.
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub calibration: Option<CalibrationPair>,
    #[serde(default)]
    pub left: Vec<Keyframe>,
    #[serde(default)]
    pub right: Vec<Keyframe>,
}

/// Glove frames for both hands at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackFrame {
    pub index: u64,
    pub timestamp: f64,
    pub left: Option<HumanHandFrame>,
    pub right: Option<HumanHandFrame>,
}

impl GloveTrack {
    pub fn from_toml_str(text: &str) -> Result<Self, TrackError> {
        let track: Self = toml::from_str(text).map_err(|e| TrackError::Parse(e.to_string()))?;
        track.validate()?;
        Ok(track)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TrackError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TrackError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    /// The bundled pouring demonstration track.
    pub fn bundled_pour() -> Self {
        Self::from_toml_str(crate::bundled::POUR_TRACK).expect("bundled track is valid")
    }

    pub fn validate(&self) -> Result<(), TrackError> {
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(TrackError::Invalid(format!("rate_hz must be positive, got {}", self.rate_hz)));
        }
        if self.left.is_empty() && self.right.is_empty() {
            return Err(TrackError::Invalid("no keyframes".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(TrackError::Invalid("noise_std must be non-negative".into()));
        }
        let fingers = self.calibration().fingers.len();
        for (hand, keys) in [("left", &self.left), ("right", &self.right)] {
            for pair in keys.windows(2) {
                if !(pair[1].t > pair[0].t) {
                    return Err(TrackError::Invalid(format!("{hand} keyframe times must increase")));
                }
            }
            for k in keys {
                if k.ratios.len() != fingers {
                    return Err(TrackError::Invalid(format!(
                        "{hand} keyframe at t={} has {} ratios, expected {fingers}",
                        k.t,
                        k.ratios.len()
                    )));
                }
            }
        }
        if let Some(c) = &self.calibration {
            c.validate().map_err(|e| TrackError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn calibration(&self) -> CalibrationPair {
        self.calibration.clone().unwrap_or_else(CalibrationPair::nominal)
    }

    pub fn duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| {
            self.left.iter().chain(&self.right).map(|k| k.t).fold(0.0, f64::max)
        })
    }

    /// Number of frames covering `duration` seconds.
    pub fn frame_count(&self) -> u64 {
        (self.duration() * self.rate_hz).round() as u64
    }

    fn sample(keys: &[Keyframe], t: f64, looped: bool) -> Option<(Vec<f64>, Pose)> {
        let first = keys.first()?;
        let last = keys.last()?;
        let t = if looped && last.t > first.t {
            first.t + (t - first.t).rem_euclid(last.t - first.t)
        } else {
            t
        };
        if t <= first.t {
            return Some((first.ratios.clone(), first.wrist()));
        }
        if t >= last.t {
            return Some((last.ratios.clone(), last.wrist()));
        }
        let i = keys.partition_point(|k| k.t <= t) - 1;
        let (a, b) = (&keys[i], &keys[i + 1]);
        let s = (t - a.t) / (b.t - a.t);
        let ratios = a.ratios.iter().zip(&b.ratios).map(|(x, y)| x + (y - x) * s).collect();
        let (wa, wb) = (a.wrist(), b.wrist());
        let wrist = Pose::new(wa.position.lerp(&wb.position, s), wa.orientation.slerp(&wb.orientation, s));
        Some((ratios, wrist))
    }

    /// Every frame of the track. Identical seeds give identical frames.
    pub fn frames(&self, seed: u64) -> Vec<TrackFrame> {
        let calibration = self.calibration();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = (self.noise_std > 0.0).then(|| Normal::new(0.0, self.noise_std).expect("valid std"));
        (0..self.frame_count())
            .map(|index| {
                let timestamp = index as f64 / self.rate_hz;
                let mut hand = |keys: &[Keyframe]| {
                    Self::sample(keys, timestamp, self.looped).map(|(ratios, wrist)| {
                        let mut frame = calibration.frame_at(&ratios, timestamp);
                        frame.wrist = wrist;
                        if let Some(n) = &normal {
                            for tip in &mut frame.fingertips {
                                *tip += Vector3::from_fn(|_, _| n.sample(&mut rng));
                            }
                        }
                        frame
                    })
                };
                let left = hand(&self.left);
                let right = hand(&self.right);
                TrackFrame { index, timestamp, left, right }
            })
            .collect()
    }
}
