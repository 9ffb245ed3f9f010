//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use dextype_core::arm_control::{control_step, kalman_smooth, ControlState, ControllerConfig, KalmanConfig, ScalarKalman};
use dextype_core::hand_model::{
    adjust_type, forward_kinematics, inverse_kinematics, FingerSelector, FingerTarget, HandKinematicModel, IkOptions,
    JointVector, Pose,
};
use dextype_core::mapping::{compute_ratio, map_frame, CalibrationEntry, CalibrationPair, MappingAssignment};
use dextype_core::retrieval::{
    parse_plan, render_plan, run_benchmark, Benchmark, BenchKind, ExternalConfig, FixtureServer, Hands, ManipulationPlan,
    PlanStep, RetrievalBackend,
};
use dextype_core::sim::{read_demo, simulate, write_demo, GloveTrack, SimConfig};
use dextype_core::teach::{admittance_step, AdmittanceParams, TeachState};
use dextype_core::type_library::{load_library, Library, LibraryError, SubCategoryGroup};
use dextype_server::protocol::{ClientMessage, CommandText, ServerMessage};
use dextype_server::{Engine, Session, SessionConfig};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn reference() -> (Arc<HandKinematicModel>, Arc<Library>) {
    let model = Arc::new(HandKinematicModel::reference());
    let library = Arc::new(Library::bundled(&model).unwrap());
    (model, library)
}

fn mapping_endpoints() -> Check {
    let (model, lib) = reference();
    let cal = CalibrationPair::nominal();
    let mut worst: f64 = 0.0;
    for ty in lib.types() {
        let assignment = MappingAssignment::default_for(&model, &ty.id);
        let open = map_frame(&cal.frame_at(&[0.0; 5], 0.0), &assignment, &cal, &lib, &model).map_err(|e| e.to_string())?;
        let closed = map_frame(&cal.frame_at(&[1.0; 5], 0.0), &assignment, &cal, &lib, &model).map_err(|e| e.to_string())?;
        let err = open.max_abs_diff(&ty.stretch_posture).max(closed.max_abs_diff(&ty.contract_posture));
        ensure!(err <= 1e-9, "{}: endpoint error {err:e} rad", ty.id);
        worst = worst.max(err);
    }
    Ok(format!("{} types, worst {worst:.1e} rad", lib.len()))
}

/// Projection ratio from the dot-product definition.
fn ratio_oracle(p: Vector3<f64>, s: Vector3<f64>, c: Vector3<f64>) -> f64 {
    let a = p - s;
    let b = c - s;
    (a.dot(&b) / b.dot(&b)).clamp(0.0, 1.0)
}

fn ratio_properties() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(20240610);
    let point = |rng: &mut ChaCha8Rng| Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3));
    let mut checked = 0;
    let mut worst_shift: f64 = 0.0;
    while checked < 10_000 {
        let (p, s, c, t) = (point(&mut rng), point(&mut rng), point(&mut rng), point(&mut rng));
        if (c - s).norm() <= 0.01 {
            continue;
        }
        let entry = CalibrationEntry::new(s, c);
        let r = compute_ratio(&p, &entry).map_err(|e| e.to_string())?;
        ensure!((0.0..=1.0).contains(&r), "ratio {r} outside [0, 1]");
        ensure!((r - ratio_oracle(p, s, c)).abs() <= 1e-12, "ratio {r} differs from the projection");
        let shifted = compute_ratio(&(p + t), &CalibrationEntry::new(s + t, c + t)).map_err(|e| e.to_string())?;
        worst_shift = worst_shift.max((r - shifted).abs());
        ensure!((r - shifted).abs() <= 1e-9, "translation changed the ratio by {:e}", (r - shifted).abs());
        let dir = (c - s).normalize();
        let off = (p - s) - dir * dir.dot(&(p - s));
        let mut last = f64::NEG_INFINITY;
        for i in -2..=22 {
            let along = s + (c - s) * (i as f64 / 20.0) + off;
            let ri = compute_ratio(&along, &entry).map_err(|e| e.to_string())?;
            ensure!(ri >= last, "ratio decreased along the segment");
            last = ri;
        }
        checked += 1;
    }
    Ok(format!("{checked} triples, worst translation drift {worst_shift:.1e}"))
}

fn all_targets(model: &HandKinematicModel, q: &[f64]) -> Vec<FingerTarget> {
    forward_kinematics(model, q)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(chain, pose)| FingerTarget { chain, pose: *pose })
        .collect()
}

/// A fingertip transform that some in-limit joint change realizes: a random
/// joint-space direction scaled until the tip has moved `distance`.
fn reachable_offset(model: &HandKinematicModel, q: &JointVector, chain: usize, distance: f64, rng: &mut ChaCha8Rng) -> Option<Pose> {
    let range = model.chain_range(chain);
    let dir: Vec<f64> = range.clone().map(|_| rng.random_range(-1.0..1.0)).collect();
    let tip = forward_kinematics(model, q).unwrap()[chain];
    let moved = |s: f64| {
        let mut p = q.to_vec();
        for (j, d) in range.clone().zip(&dir) {
            p[j] += s * d;
        }
        p
    };
    let travel = |s: f64| (forward_kinematics(model, &moved(s)).unwrap()[chain].position - tip.position).norm();
    let (mut lo, mut hi) = (0.0, 1.0);
    if travel(hi) < distance {
        return None;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if travel(mid) < distance {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let target = moved(hi);
    model.check_limits(&target).ok()?;
    Some(tip.inverse().compose(&forward_kinematics(model, &target).unwrap()[chain]))
}

fn ik_round_trip() -> Check {
    let mut report = Vec::new();
    for model in [HandKinematicModel::reference(), HandKinematicModel::alternate()] {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let q = model.random_configuration(&mut rng);
            let out = inverse_kinematics(&model, &all_targets(&model, &q), &q, &IkOptions::default()).map_err(|e| e.to_string())?;
            worst = worst.max(out.max_abs_diff(&q));
            let same = adjust_type(&model, &q, FingerSelector::All, &Pose::identity(), &IkOptions::default()).map_err(|e| e.to_string())?;
            ensure!(same == q, "{}: identity adjustment moved the posture", model.id());
        }
        ensure!(worst <= 1e-6, "{}: round trip error {worst:e} rad", model.id());

        let (mut reachable, mut achieved) = (0usize, 0usize);
        while reachable < 200 {
            let q = model.random_configuration(&mut rng);
            let chain = rng.random_range(0..model.chains().len());
            let Some(delta) = reachable_offset(&model, &q, chain, 0.005, &mut rng) else { continue };
            reachable += 1;
            let want = forward_kinematics(&model, &q).unwrap()[chain].compose(&delta);
            if let Ok(out) = adjust_type(&model, &q, FingerSelector::One(chain), &delta, &IkOptions::default()) {
                if forward_kinematics(&model, &out).unwrap()[chain].residual_to(&want).0 <= 1e-4 {
                    achieved += 1;
                }
            }
        }
        ensure!(achieved * 100 >= reachable * 95, "{}: 5 mm offsets {achieved}/{reachable}", model.id());
        report.push(format!("{}: worst {worst:.1e} rad, 5 mm {achieved}/{reachable}", model.id()));
    }
    Ok(report.join("; "))
}

fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
    let p = Vector3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6));
    let r = Vector3::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    Pose::from_position_rotvec(p, r)
}

fn controller_safety() -> Check {
    let config = ControllerConfig::default();
    let dt = config.dt();
    let speed_cap = 0.2;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut commands = 0usize;
    let mut fastest: f64 = 0.0;
    for _ in 0..1000 {
        let mut state = ControlState::at_rest(random_pose(&mut rng), &config);
        let mut previous = Vector3::zeros();
        for _ in 0..rng.random_range(1..6) {
            state.target = random_pose(&mut rng);
            for _ in 0..rng.random_range(1..30) {
                let (next, cmd) = control_step(&state, &config);
                ensure!(cmd.linear.norm() <= speed_cap + 1e-12, "linear speed {} m/s", cmd.linear.norm());
                ensure!(
                    (cmd.linear - previous).norm() <= config.a_trans * dt + 1e-9,
                    "acceleration step {:e}",
                    (cmd.linear - previous).norm()
                );
                fastest = fastest.max(cmd.linear.norm());
                previous = cmd.linear;
                state = next;
                commands += 1;
            }
        }
    }
    let mut slowest = 0.0f64;
    for _ in 0..100 {
        let start = random_pose(&mut rng);
        let target = random_pose(&mut rng);
        let (distance, angle) = start.residual_to(&target);
        let bound = config.translation_tick_bound(distance).max(config.rotation_tick_bound(angle, 1e-3));
        let mut state = ControlState::at_rest(start, &config);
        state.target = target;
        let mut done = None;
        for tick in 0..bound {
            state = control_step(&state, &config).0;
            let (dp, dr) = state.current.residual_to(&target);
            if dp < 1e-3 && dr < 1e-3 {
                done = Some(tick + 1);
                break;
            }
        }
        let Some(ticks) = done else { return Err(format!("not converged within {bound} ticks")) };
        slowest = slowest.max(ticks as f64 / bound as f64);
    }
    Ok(format!("{commands} commands, peak {fastest:.4} m/s, convergence used at most {:.0}% of the bound", slowest * 100.0))
}

fn kalman_oracle() -> Check {
    let config = KalmanConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut state = ScalarKalman::new(config.initial_var);
    let (mut x, mut p) = (0.0, config.initial_var);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let z: f64 = rng.random_range(-1.0..1.0);
        let (next, out) = kalman_smooth(state, z, &config);
        state = next;
        let prior = p + config.process_var;
        let gain = prior / (prior + config.measurement_var);
        x = (1.0 - gain) * x + gain * z;
        p = prior * config.measurement_var / (prior + config.measurement_var);
        worst = worst.max((out - x).abs()).max((state.covariance - p).abs());
    }
    ensure!(worst <= 1e-12, "reference mismatch {worst:e}");

    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut state = ScalarKalman::new(config.initial_var);
    let (mut raw, mut smooth) = (0.0, 0.0);
    let velocity = 0.1;
    for k in 0..1000 {
        let truth = velocity * k as f64 * 0.04;
        let z = truth + noise.sample(&mut rng);
        let (next, out) = kalman_smooth(state, z, &config);
        state = next;
        raw += (z - truth).powi(2);
        smooth += (out - truth).powi(2);
    }
    let (raw, smooth) = ((raw / 1000.0).sqrt(), (smooth / 1000.0).sqrt());
    ensure!(smooth < raw, "smoothed RMSE {smooth} not below raw {raw}");
    Ok(format!("worst {worst:.1e}; RMSE raw {raw:.4}, smoothed {smooth:.4}"))
}

fn admittance() -> Check {
    let p = AdmittanceParams { mass: 1.0, damping: 20.0, stiffness: 100.0, dt: 0.01 };
    let force = 3.0;
    let mut s = TeachState::at_rest(1);
    for _ in 0..5000 {
        s = admittance_step(&s, &p, &[force]);
    }
    let expected = force / p.stiffness;
    let rel = (s.x[0] - expected).abs() / expected;
    ensure!(rel <= 1e-3, "steady state off by {:.3}%", rel * 100.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let mut s = TeachState { x: vec![rng.random_range(-1.0..1.0)], x_dot: vec![rng.random_range(-5.0..5.0)], f_ext: vec![0.0] };
        let mut energy = s.energy(&p);
        for _ in 0..1000 {
            s = admittance_step(&s, &p, &[0.0]);
            let e = s.energy(&p);
            ensure!(e <= energy + 1e-9, "energy rose from {energy} to {e}");
            energy = e;
        }
    }

    let horizon = 3.0;
    let dt = 0.001;
    let mut counts = Vec::new();
    for (mass, damping, stiffness) in [(1.0, 4.0, 100.0), (1.0, 60.0, 100.0), (0.5, 10.0, 20.0)] {
        let p = AdmittanceParams { mass, damping, stiffness, dt };
        let mut s = TeachState { x: vec![1.0], x_dot: vec![0.0], f_ext: vec![0.0] };
        let mut xs = Vec::new();
        for _ in 0..(horizon / dt) as usize {
            s = admittance_step(&s, &p, &[0.0]);
            xs.push(s.x[0]);
        }
        let simulated = xs.windows(2).filter(|w| w[0].signum() != w[1].signum() && w[1] != 0.0).count();
        let disc = damping * damping - 4.0 * mass * stiffness;
        let expected = if disc >= 0.0 {
            0
        } else {
            let decay = damping / (2.0 * mass);
            let wd = (stiffness / mass - decay * decay).sqrt();
            let phase = (decay / wd).atan();
            (0..).take_while(|k| (std::f64::consts::FRAC_PI_2 + *k as f64 * std::f64::consts::PI + phase) / wd <= horizon).count()
        };
        ensure!(simulated.abs_diff(expected) <= 1, "({mass}, {damping}, {stiffness}): {simulated} crossings, expected {expected}");
        ensure!((simulated > 0) == (disc < 0.0), "({mass}, {damping}, {stiffness}): wrong regime");
        counts.push(format!("{simulated}/{expected}"));
    }
    Ok(format!("steady state {:.4}%, crossings {}", rel * 100.0, counts.join(" ")))
}

fn library_fidelity() -> Check {
    let model = HandKinematicModel::reference();
    let lib = Library::bundled(&model).map_err(|e| e.to_string())?;
    ensure!(lib.len() == 30, "{} types", lib.len());
    let groups: Vec<_> = lib.sub_categories().into_iter().collect();
    ensure!(
        groups == [SubCategoryGroup::Grasp, SubCategoryGroup::NonGrasp, SubCategoryGroup::Symmetric, SubCategoryGroup::Asymmetric],
        "sub-categories {groups:?}"
    );
    let text = lib.to_toml_string();
    let again = Library::from_toml_str(&text, &model).map_err(|e| e.to_string())?;
    ensure!(again == lib && again.to_toml_string() == text, "round trip changed the library");

    let is_validation = |e: &LibraryError, id: Option<&str>, f: &str| {
        matches!(e, LibraryError::Validation { type_id, field, .. } if field == f && id.is_none_or(|id| id == type_id))
    };
    let expected: [(&str, &dyn Fn(&LibraryError) -> bool); 13] = [
        ("malformed.toml", &|e| matches!(e, LibraryError::Parse(_))),
        ("unknown_field.toml", &|e| matches!(e, LibraryError::Parse(_))),
        ("unknown_handedness.toml", &|e| matches!(e, LibraryError::Parse(_))),
        ("missing_contract_posture.toml", &|e| is_validation(e, Some("cyl-thick"), "contract_posture")),
        ("missing_id.toml", &|e| is_validation(e, Some("#0"), "id")),
        ("duplicate_id.toml", &|e| *e == LibraryError::DuplicateId("cyl-thick".into())),
        ("dof_mismatch.toml", &|e| matches!(e, LibraryError::DofMismatch { expected: 16, got: 3, .. })),
        ("out_of_limits.toml", &|e| is_validation(e, Some("cyl-thick"), "contract_posture")),
        ("inconsistent_taxonomy.toml", &|e| is_validation(e, None, "category.sub")),
        ("empty_attribute.toml", &|e| is_validation(e, None, "attributes.object_categories")),
        ("wrong_hand_model.toml", &|e| matches!(e, LibraryError::HandModelMismatch { .. })),
        ("unsupported_schema.toml", &|e| *e == LibraryError::SchemaVersion("9".into())),
        ("no_types.toml", &|e| *e == LibraryError::Empty),
    ];
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/libraries");
    let on_disk = std::fs::read_dir(&dir).map_err(|e| e.to_string())?.count();
    ensure!(on_disk == expected.len(), "{on_disk} fixture files, {} expectations", expected.len());
    for (name, check) in expected {
        match load_library(dir.join(name), &model) {
            Ok(_) => return Err(format!("{name} was accepted")),
            Err(e) => ensure!(check(&e), "{name}: unexpected error {e:?}"),
        }
    }
    Ok(format!("30 types, 4 sub-categories, {} invalid fixtures rejected", expected.len()))
}

fn retrieval() -> Check {
    let (_, lib) = reference();
    let bench = Benchmark::bundled();
    let transcript = bench
        .cases
        .iter()
        .find(|c| c.id == "multi-01")
        .and_then(|c| c.transcript.clone())
        .ok_or("pancake transcript missing")?;
    let plan = parse_plan(&transcript, &lib).map_err(|e| e.to_string())?;
    ensure!(plan.steps.len() == 3, "{} steps", plan.steps.len());
    ensure!(plan.assignment_count() == 6, "{} assignments", plan.assignment_count());
    let printed = [
        ("Thick Cylinder Grasp", "Three-Finger Load-Bearing Wrap Grasp"),
        ("Three-Finger Wrap Grasp", "Three-Finger Load-Bearing Wrap Grasp"),
        ("Curved Handle Grasp", "Thick Cylinder Grasp"),
    ];
    for (step, (left, right)) in plan.steps.iter().zip(printed) {
        let name = |id: &Option<String>| id.as_deref().and_then(|id| lib.get(id)).map(|t| t.name.as_str());
        ensure!(name(&step.left_type) == Some(left) && name(&step.right_type) == Some(right), "step {step:?}");
    }
    let single = bench.cases.iter().filter(|c| c.kind == BenchKind::SingleObject).count();
    let multi = bench.cases.iter().filter(|c| c.kind == BenchKind::MultiObject).count();
    ensure!((single, multi) == (40, 10), "benchmark split {single}+{multi}");
    let report = run_benchmark(&bench, &lib).map_err(|e| e.to_string())?;
    ensure!(report.passed >= 45, "benchmark {}/{}", report.passed, report.total);
    Ok(format!("pancake 3 steps / 6 assignments, benchmark {}/{}", report.passed, report.total))
}

fn recorder() -> Check {
    let (model, lib) = reference();
    let config = || {
        let mut track = GloveTrack::bundled_pour();
        track.noise_std = 0.001;
        let mut c = SimConfig::new(track, [Some("palm-support".into()), Some("curved-handle".into())], 99);
        c.duration = Some(10.0);
        c
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut files = Vec::new();
    for name in ["a.demo", "b.demo"] {
        let out = simulate(model.clone(), lib.clone(), &config()).map_err(|e| e.to_string())?;
        ensure!(out.frames.len() == 150, "{} frames", out.frames.len());
        for f in &out.frames {
            ensure!(f.proprioception.len() == 44, "frame {} has {} proprioception values", f.index, f.proprioception.len());
        }
        let path = dir.path().join(name);
        write_demo(&path, &out.header, &out.frames).map_err(|e| e.to_string())?;
        files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
    }
    ensure!(files[0] == files[1], "same seed gave different files");
    let (header, frames) = read_demo(dir.path().join("a.demo")).map_err(|e| e.to_string())?;
    let replayed = dir.path().join("replayed.demo");
    write_demo(&replayed, &header, &frames).map_err(|e| e.to_string())?;
    ensure!(std::fs::read(&replayed).map_err(|e| e.to_string())? == files[0], "replay changed the bytes");
    Ok(format!("150 frames x 44 values, {} bytes identical across runs and replay", files[0].len()))
}

fn loop_isolation() -> Check {
    let (model, lib) = reference();
    let plan = ManipulationPlan {
        steps: vec![PlanStep { description: "Pour".into(), left_type: None, right_type: Some("curved-handle".into()) }],
    };
    let delay = Duration::from_secs(5);
    let server = FixtureServer::fixed(render_plan(&plan, &lib), delay).map_err(|e| e.to_string())?;
    let session = Session::new(model, lib, SessionConfig::default());
    let mut engine = Engine::new(session, RetrievalBackend::External(ExternalConfig::new(server.url())));
    let out = engine.submit(Some(1), ClientMessage::CommandText(CommandText { text: "pour the tea".into(), hands: Hands::Right, image: None }));
    ensure!(out.reply.is_empty(), "command rejected: {:?}", out.reply);

    let period = Duration::from_secs_f64(ControllerConfig::default().dt());
    let started = Instant::now();
    let mut deadline = started;
    let (mut ticks, mut in_flight, mut missed) = (0u64, 0u64, 0u64);
    loop {
        ensure!(started.elapsed() < delay * 3, "retrieval never finished");
        let pending = engine.retrievals_in_flight() > 0;
        let t = engine.tick();
        ensure!(t.tick == ticks, "tick {} after {ticks}", t.tick);
        ensure!(t.commands.iter().all(|c| c.tick == ticks), "command ticks {:?} on tick {ticks}", t.commands.map(|c| c.tick));
        ticks += 1;
        in_flight += pending as u64;
        let notice = t.broadcast.iter().any(|m| matches!(m, ServerMessage::PlanNotice(_)));
        deadline += period;
        let now = Instant::now();
        if now > deadline {
            missed += 1;
            deadline = now;
        } else {
            std::thread::sleep(deadline - now);
        }
        if notice {
            break;
        }
    }
    ensure!(missed == 0, "{missed} ticks missed their deadline");
    ensure!(in_flight as f64 >= delay.as_secs_f64() * 25.0 - 2.0, "only {in_flight} ticks overlapped the retrieval");
    ensure!(engine.session().plan() == Some(&plan), "plan not delivered");
    Ok(format!("{ticks} ticks, {in_flight} with the retrieval in flight, 2 commands each, 0 missed"))
}

fn main() {
    let criteria: [(&str, Option<f64>, fn() -> Check); 10] = [
        ("mapping endpoint exactness", Some(1.0), mapping_endpoints),
        ("ratio properties", Some(5.0), ratio_properties),
        ("IK round trip", Some(30.0), ik_round_trip),
        ("controller safety", Some(10.0), controller_safety),
        ("Kalman oracle equivalence", None, kalman_oracle),
        ("admittance", None, admittance),
        ("library fidelity", None, library_fidelity),
        ("retrieval", Some(10.0), retrieval),
        ("recorder", None, recorder),
        ("loop isolation", None, loop_isolation),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, limit, check) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|panic| {
            let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(limit)) if secs >= limit => Err(format!("took {secs:.2} s, limit {limit} s")),
            (other, _) => other,
        };
        let budget = limit.map_or(String::new(), |l| format!(" / {l} s"));
        match outcome {
            Ok(detail) => println!("PASS  {name:<28} {secs:>7.2} s{budget:<8}  {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name:<28} {secs:>7.2} s{budget:<8}  {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
