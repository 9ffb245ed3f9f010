//! Command-line front end: argument parsing, configuration and one function
//! per subcommand.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use dextype_core::arm_control::ControllerConfig;
use dextype_core::hand_model::{HandKinematicModel, KinematicsError};
use dextype_core::retrieval::{run_benchmark, Benchmark, ExternalConfig, RetrievalBackend, RetrievalError};
use dextype_core::sim::{
    read_demo, simulate, write_demo, DemoError, GloveTrack, PlantConfig, RigError, SimConfig, TrackError, CONTROL_HZ,
    RECORD_HZ,
};
use dextype_core::type_library::{load_library, Library, LibraryError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {reason}")]
    Config { path: PathBuf, reason: String },
    #[error("hand model: {0}")]
    Kinematics(#[from] KinematicsError),
    #[error("library: {0}")]
    Library(#[from] LibraryError),
    #[error("{0}")]
    Track(#[from] TrackError),
    #[error("simulation: {0}")]
    Sim(#[from] RigError),
    #[error("demonstration file: {0}")]
    Demo(#[from] DemoError),
    #[error("retrieval: {0}")]
    Retrieval(#[from] RetrievalError),
    #[error("{0}")]
    Invalid(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Parser)]
#[command(name = "dextype", version, about = "Type-guided dexterous teleoperation tools")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML file with defaults for the flags below and controller settings.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print a machine-readable report.
    #[arg(long, global = true)]
    pub json: bool,
    /// Type library file. Defaults to the bundled library.
    #[arg(long, global = true)]
    pub library: Option<PathBuf>,
    /// Hand model file, or `leap-16` / `allegro-16` for a bundled one.
    #[arg(long, global = true)]
    pub hand_model: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load a type library and report its size.
    Validate {
        /// Library file. Overrides --library.
        library: Option<PathBuf>,
    },
    /// Drive a glove track through the simulated rig and record a demonstration.
    Simulate {
        /// Glove track file. Defaults to the bundled pouring track.
        #[arg(long)]
        track: Option<PathBuf>,
        /// Active type for both hands.
        #[arg(long = "type")]
        type_id: Option<String>,
        #[arg(long)]
        left_type: Option<String>,
        #[arg(long)]
        right_type: Option<String>,
        /// Seconds to record. Defaults to the track length.
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Play back a recorded demonstration.
    Replay {
        file: PathBuf,
        /// Playback speed relative to the recording rate.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
    },
    /// Score the retrieval benchmark.
    BenchRetrieval {
        /// Benchmark file. Defaults to the bundled 50 cases.
        #[arg(long)]
        cases: Option<PathBuf>,
        /// Exit with an error when fewer cases pass.
        #[arg(long)]
        min_pass: Option<usize>,
    },
    /// Run the session server.
    Serve {
        #[arg(long, env = "LISTEN_ADDR")]
        listen: Option<String>,
        /// Make the first step of a retrieved plan active immediately.
        #[arg(long)]
        auto_apply: bool,
        /// Start in replay mode with this demonstration.
        #[arg(long)]
        replay: Option<PathBuf>,
        #[arg(long, default_value_t = 1.0)]
        replay_speed: f64,
    },
}

/// Contents of the `--config` file. Command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub library: Option<PathBuf>,
    pub hand_model: Option<String>,
    pub listen_addr: Option<String>,
    pub auto_apply: bool,
    pub controller: ControllerConfig,
    pub plant: PlantConfig,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let err = |reason: String| CliError::Config { path: path.to_path_buf(), reason };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let config: Self = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        config.controller.validate().map_err(err)?;
        if config.controller.loop_hz != CONTROL_HZ as f64 {
            return Err(err(format!("controller.loop_hz must be {CONTROL_HZ}")));
        }
        if !(config.plant.hand_rate_limit > 0.0 && config.plant.arm_noise_std >= 0.0) {
            return Err(err("plant.hand_rate_limit must be positive and plant.arm_noise_std non-negative".into()));
        }
        Ok(config)
    }
}

/// Flags merged over the config file.
#[derive(Debug, Clone)]
pub struct Settings {
    pub seed: u64,
    pub json: bool,
    pub library: Option<PathBuf>,
    pub hand_model: Option<String>,
    pub file: FileConfig,
}

impl Settings {
    pub fn resolve(global: &GlobalArgs) -> Result<Self, CliError> {
        let file = match &global.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Ok(Self {
            seed: global.seed.or(file.seed).unwrap_or(0),
            json: global.json,
            library: global.library.clone().or_else(|| file.library.clone()),
            hand_model: global.hand_model.clone().or_else(|| file.hand_model.clone()),
            file,
        })
    }

    pub fn hand_model(&self) -> Result<Arc<HandKinematicModel>, CliError> {
        let model = match self.hand_model.as_deref() {
            None | Some("leap-16") => HandKinematicModel::reference(),
            Some("allegro-16") => HandKinematicModel::alternate(),
            Some(path) => HandKinematicModel::load(path)?,
        };
        Ok(Arc::new(model))
    }

    pub fn library(&self, model: &HandKinematicModel, path: Option<&Path>) -> Result<Arc<Library>, CliError> {
        let library = match path.or(self.library.as_deref()) {
            Some(path) => load_library(path, model)?,
            None => Library::bundled(model)?,
        };
        Ok(Arc::new(library))
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let settings = Settings::resolve(&cli.global)?;
    match cli.command {
        Command::Validate { library } => validate(&settings, library.as_deref(), out),
        Command::Simulate { track, type_id, left_type, right_type, duration, out: path } => {
            let types = [left_type.or_else(|| type_id.clone()), right_type.or(type_id)];
            simulate_cmd(&settings, track.as_deref(), types, duration, &path, out)
        }
        Command::Replay { file, speed } => replay(&settings, &file, speed, out),
        Command::BenchRetrieval { cases, min_pass } => bench(&settings, cases.as_deref(), min_pass, out),
        Command::Serve { listen, auto_apply, replay, replay_speed } => {
            serve(&settings, listen, auto_apply, replay.as_deref(), replay_speed)
        }
    }
}

fn validate(settings: &Settings, path: Option<&Path>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = settings.hand_model()?;
    let library = settings.library(&model, path)?;
    let groups = library.sub_categories().len();
    if settings.json {
        let report = json!({
            "types": library.len(),
            "sub_categories": groups,
            "hand_model": library.hand_model_id(),
            "hash": library.content_hash(),
        });
        writeln!(out, "{report}")?;
    } else {
        writeln!(out, "{} types, {groups} sub-categories", library.len())?;
    }
    Ok(())
}

fn simulate_cmd(
    settings: &Settings,
    track: Option<&Path>,
    types: [Option<String>; 2],
    duration: Option<f64>,
    path: &Path,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let model = settings.hand_model()?;
    let library = settings.library(&model, None)?;
    let track = match track {
        Some(p) => GloveTrack::load(p)?,
        None => GloveTrack::bundled_pour(),
    };
    if let Some(d) = duration {
        if !(d > 0.0 && d.is_finite()) {
            return Err(CliError::Invalid(format!("--duration must be positive, got {d}")));
        }
    }
    let mut config = SimConfig::new(track, types, settings.seed);
    config.duration = duration;
    config.controller = settings.file.controller;
    config.plant = settings.file.plant;
    let output = simulate(model, library, &config)?;
    write_demo(path, &output.header, &output.frames)?;
    let bytes = std::fs::metadata(path)?.len();
    let seconds = output.frames.len() as f64 / RECORD_HZ as f64;
    if settings.json {
        let report = json!({
            "out": path,
            "frames": output.frames.len(),
            "seconds": seconds,
            "bytes": bytes,
            "seed": settings.seed,
            "active_types": output.header.active_types,
        });
        writeln!(out, "{report}")?;
    } else {
        writeln!(out, "wrote {} frames ({seconds:.2} s, {bytes} bytes) to {}", output.frames.len(), path.display())?;
    }
    Ok(())
}

fn replay(settings: &Settings, path: &Path, speed: f64, out: &mut dyn Write) -> Result<(), CliError> {
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(CliError::Invalid(format!("--speed must be positive, got {speed}")));
    }
    let (header, frames) = read_demo(path)?;
    let model = settings.hand_model()?;
    if header.hand_model_id != model.id() {
        return Err(CliError::Invalid(format!(
            "recorded with hand model {:?}, loaded {:?}",
            header.hand_model_id,
            model.id()
        )));
    }
    if settings.json {
        writeln!(out, "{}", json!({ "header": header, "frames": frames.len() }))?;
    } else {
        writeln!(
            out,
            "{}: {} frames at {} Hz, seed {}, types {:?}",
            path.display(),
            frames.len(),
            header.record_hz,
            header.seed,
            header.active_types
        )?;
    }
    let period = Duration::from_secs_f64(1.0 / header.record_hz as f64 / speed);
    let start = std::time::Instant::now();
    for (k, frame) in frames.iter().enumerate() {
        let due = period * k as u32;
        if let Some(wait) = due.checked_sub(start.elapsed()) {
            std::thread::sleep(wait);
        }
        let p = &frame.proprioception;
        if settings.json {
            writeln!(out, "{}", json!({ "index": frame.index, "timestamp": frame.timestamp, "proprioception": p }))?;
        } else {
            writeln!(
                out,
                "{:>5} {:>8.3}s  left [{:+.4} {:+.4} {:+.4}]  right [{:+.4} {:+.4} {:+.4}]",
                frame.index, frame.timestamp, p[0], p[1], p[2], p[6], p[7], p[8]
            )?;
        }
    }
    Ok(())
}

fn bench(settings: &Settings, cases: Option<&Path>, min_pass: Option<usize>, out: &mut dyn Write) -> Result<(), CliError> {
    let model = settings.hand_model()?;
    let library = settings.library(&model, None)?;
    let bench = match cases {
        Some(p) => Benchmark::load(p)?,
        None => Benchmark::bundled(),
    };
    let report = run_benchmark(&bench, &library)?;
    if settings.json {
        writeln!(out, "{}", serde_json::to_string(&report).expect("report serializes"))?;
    } else {
        for case in &report.cases {
            let verdict = if case.passed { "PASS" } else { "FAIL" };
            writeln!(out, "{verdict}  {:<12} {}", case.id, case.detail)?;
        }
        writeln!(out, "{}/{} passed", report.passed, report.total)?;
    }
    match min_pass {
        Some(n) if report.passed < n => {
            Err(CliError::Invalid(format!("{}/{} passed, below the required {n}", report.passed, report.total)))
        }
        _ => Ok(()),
    }
}

fn serve(
    settings: &Settings,
    listen: Option<String>,
    auto_apply: bool,
    replay: Option<&Path>,
    replay_speed: f64,
) -> Result<(), CliError> {
    use dextype_server::{ws, Engine, Session, SessionConfig};

    let model = settings.hand_model()?;
    let library = settings.library(&model, None)?;
    let config = SessionConfig {
        auto_apply: auto_apply || settings.file.auto_apply,
        seed: settings.seed,
        controller: settings.file.controller,
        plant: settings.file.plant,
    };
    let mut session = Session::new(model.clone(), library, config);
    if let Some(path) = replay {
        let (header, frames) = read_demo(path)?;
        if header.hand_model_id != model.id() {
            return Err(CliError::Invalid(format!("{} was recorded with hand model {:?}", path.display(), header.hand_model_id)));
        }
        session.start_replay(frames, replay_speed).map_err(|e| CliError::Invalid(e.message))?;
    }
    let backend = match ExternalConfig::from_env() {
        Ok(config) => {
            log::info!("retrieval through {}", config.endpoint);
            RetrievalBackend::External(config)
        }
        Err(_) => {
            log::info!("MODEL_ENDPOINT not set, using the deterministic matcher");
            RetrievalBackend::DeterministicMatcher
        }
    };
    let addr = listen
        .or_else(|| settings.file.listen_addr.clone())
        .unwrap_or_else(|| ws::DEFAULT_LISTEN_ADDR.to_string());
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let handle = ws::start(Engine::new(session, backend), &addr).await?;
        eprintln!("listening on ws://{}/ws", handle.local_addr);
        tokio::signal::ctrl_c().await?;
        handle.shutdown();
        Ok(())
    })
}
