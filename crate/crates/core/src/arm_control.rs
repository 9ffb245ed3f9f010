//! Cartesian velocity control for one arm.
//!
//! Translation follows a trapezoidal profile: accelerate at `a_trans` up to
//! `v_max_trans`, cruise, then brake so the arm stops on the target. The
//! braking speed is computed for the discrete loop, so a command sequence that
//! decelerates by `a_trans * dt` per tick lands exactly on the target.
//! Rotation speed is proportional to the orientation error and clamped.
//! Desired velocities pass through a per-axis Kalman filter before the
//! safety caps and the acceleration limit are applied.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::hand_model::{orientation_error, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KalmanConfig {
    pub process_var: f64,
    pub measurement_var: f64,
    pub initial_var: f64,
}

impl Default for KalmanConfig {
    fn default() -> Self {
        Self { process_var: 1e-2, measurement_var: 1e-2, initial_var: 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    /// m/s
    pub v_max_trans: f64,
    /// m/s²
    pub a_trans: f64,
    /// 1/s
    pub k_rot: f64,
    /// rad/s
    pub w_max_rot: f64,
    pub loop_hz: f64,
    pub kalman: KalmanConfig,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            v_max_trans: 0.2,
            a_trans: 0.5,
            k_rot: 1.0,
            w_max_rot: 0.5,
            loop_hz: 25.0,
            kalman: KalmanConfig::default(),
        }
    }
}

impl ControllerConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.loop_hz
    }

    pub fn validate(&self) -> Result<(), String> {
        let k = &self.kalman;
        let fields = [
            ("v_max_trans", self.v_max_trans),
            ("a_trans", self.a_trans),
            ("k_rot", self.k_rot),
            ("w_max_rot", self.w_max_rot),
            ("loop_hz", self.loop_hz),
            ("kalman.process_var", k.process_var),
            ("kalman.measurement_var", k.measurement_var),
            ("kalman.initial_var", k.initial_var),
        ];
        match fields.iter().find(|(_, v)| !(v.is_finite() && *v > 0.0)) {
            Some((name, v)) => Err(format!("{name} must be positive, got {v}")),
            None => Ok(()),
        }
    }

    /// Ticks needed to reach a target `distance` meters away from rest, with
    /// a few ticks of slack for filter lag.
    pub fn translation_tick_bound(&self, distance: f64) -> u64 {
        let dt = self.dt();
        let t = distance / self.v_max_trans + self.v_max_trans / self.a_trans;
        (t / dt).ceil() as u64 + 3 + (self.v_max_trans / (self.a_trans * dt)).ceil() as u64
    }

    /// Ticks needed to bring an orientation error `err` below `tol`.
    pub fn rotation_tick_bound(&self, err: f64, tol: f64) -> u64 {
        let dt = self.dt();
        let knee = self.w_max_rot / self.k_rot;
        let clamped = ((err - knee).max(0.0) / self.w_max_rot / dt).ceil();
        let decay = 1.0 - self.k_rot * dt;
        let proportional = if decay <= 0.0 { 1.0 } else { ((tol / knee.min(err)).ln() / decay.ln()).ceil().max(0.0) };
        (clamped + proportional) as u64 + 10
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalarKalman {
    pub estimate: f64,
    pub covariance: f64,
}

impl ScalarKalman {
    pub fn new(initial_var: f64) -> Self {
        Self { estimate: 0.0, covariance: initial_var }
    }
}

/// One random-walk predict/update step. Returns the new state and the
/// filtered value.
pub fn kalman_smooth(state: ScalarKalman, sample: f64, config: &KalmanConfig) -> (ScalarKalman, f64) {
    let p = state.covariance + config.process_var;
    let k = p / (p + config.measurement_var);
    let estimate = state.estimate + k * (sample - state.estimate);
    let covariance = (1.0 - k) * p;
    (ScalarKalman { estimate, covariance }, estimate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub linear: Vector3<f64>,
    pub angular: Vector3<f64>,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlState {
    pub current: Pose,
    pub target: Pose,
    /// Smoothed linear then angular velocity.
    pub velocity_estimate: [f64; 6],
    pub kalman: [ScalarKalman; 6],
    pub last_linear: Vector3<f64>,
    pub last_angular: Vector3<f64>,
    pub tick: u64,
}

impl ControlState {
    pub fn at_rest(pose: Pose, config: &ControllerConfig) -> Self {
        Self {
            current: pose,
            target: pose,
            velocity_estimate: [0.0; 6],
            kalman: [ScalarKalman::new(config.kalman.initial_var); 6],
            last_linear: Vector3::zeros(),
            last_angular: Vector3::zeros(),
            tick: 0,
        }
    }
}

/// Highest speed from which the discrete loop can still stop within
/// `distance` while decelerating by `a_trans * dt` per tick.
pub fn braking_speed(distance: f64, config: &ControllerConfig) -> f64 {
    let dt = config.dt();
    let step = config.a_trans * dt;
    let k = (-1.0 + (1.0 + 8.0 * distance / (dt * step)).sqrt()) / 2.0;
    k * step
}

fn speed_bound(distance: f64, config: &ControllerConfig) -> f64 {
    config
        .v_max_trans
        .min(braking_speed(distance, config))
        .min(distance / config.dt())
}

fn clamp_norm(v: Vector3<f64>, max: f64) -> Vector3<f64> {
    let n = v.norm();
    if n > max {
        v * (max / n)
    } else {
        v
    }
}

/// Desired linear velocity ignoring the acceleration limit.
pub fn profile_velocity(current: &Pose, target: &Pose, config: &ControllerConfig) -> Vector3<f64> {
    let error = target.position - current.position;
    let d = error.norm();
    if d == 0.0 {
        return Vector3::zeros();
    }
    error * (speed_bound(d, config) / d)
}

/// Trapezoidal linear velocity for the next tick.
pub fn plan_translation(state: &ControlState, config: &ControllerConfig) -> Vector3<f64> {
    let desired = profile_velocity(&state.current, &state.target, config);
    state.last_linear + clamp_norm(desired - state.last_linear, config.a_trans * config.dt())
}

/// Angular velocity proportional to the orientation error, clamped.
pub fn plan_rotation(state: &ControlState, config: &ControllerConfig) -> Vector3<f64> {
    let err = orientation_error(&state.current.orientation, &state.target.orientation);
    let e = err.norm();
    if e == 0.0 {
        return Vector3::zeros();
    }
    err * ((config.k_rot * e).min(config.w_max_rot) / e)
}

/// One loop tick: plan, smooth, apply safety limits, integrate the pose.
pub fn control_step(state: &ControlState, config: &ControllerConfig) -> (ControlState, VelocityCommand) {
    let dt = config.dt();
    let raw_linear = profile_velocity(&state.current, &state.target, config);
    let raw_angular = plan_rotation(state, config);
    let raw = [raw_linear.x, raw_linear.y, raw_linear.z, raw_angular.x, raw_angular.y, raw_angular.z];

    let mut kalman = state.kalman;
    let mut smoothed = [0.0; 6];
    for i in 0..6 {
        let (k, v) = kalman_smooth(kalman[i], raw[i], &config.kalman);
        kalman[i] = k;
        smoothed[i] = v;
    }

    let distance = (state.target.position - state.current.position).norm();
    let linear = clamp_norm(Vector3::new(smoothed[0], smoothed[1], smoothed[2]), speed_bound(distance, config));
    let linear = state.last_linear + clamp_norm(linear - state.last_linear, config.a_trans * dt);
    let linear = clamp_norm(linear, config.v_max_trans);

    let rot_err = orientation_error(&state.current.orientation, &state.target.orientation).norm();
    let angular = clamp_norm(
        Vector3::new(smoothed[3], smoothed[4], smoothed[5]),
        config.w_max_rot.min(rot_err / dt),
    );

    let current = integrate(&state.current, &linear, &angular, dt);
    let command = VelocityCommand { linear, angular, tick: state.tick };
    let next = ControlState {
        current,
        target: state.target,
        velocity_estimate: smoothed,
        kalman,
        last_linear: linear,
        last_angular: angular,
        tick: state.tick + 1,
    };
    (next, command)
}

/// Applies a world-frame twist for `dt` seconds.
pub fn integrate(pose: &Pose, linear: &Vector3<f64>, angular: &Vector3<f64>, dt: f64) -> Pose {
    Pose::new(
        pose.position + linear * dt,
        UnitQuaternion::from_scaled_axis(angular * dt) * pose.orientation,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn state_towards(target: Pose) -> (ControlState, ControllerConfig) {
        let config = ControllerConfig::default();
        let mut s = ControlState::at_rest(Pose::identity(), &config);
        s.target = target;
        (s, config)
    }

    #[test]
    fn zero_error_gives_zero_command() {
        let (s, c) = state_towards(Pose::identity());
        assert_eq!(plan_translation(&s, &c), Vector3::zeros());
        assert_eq!(plan_rotation(&s, &c), Vector3::zeros());
        let (next, cmd) = control_step(&s, &c);
        assert_eq!(cmd.linear, Vector3::zeros());
        assert_eq!(cmd.angular, Vector3::zeros());
        assert_eq!(next.current, s.current);
    }

    #[test]
    fn cruise_at_max_speed() {
        let (mut s, c) = state_towards(Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)));
        let mut speeds = Vec::new();
        for _ in 0..30 {
            let (n, cmd) = control_step(&s, &c);
            speeds.push(cmd.linear.norm());
            s = n;
        }
        assert!((speeds[29] - 0.2).abs() < 1e-12, "{}", speeds[29]);
    }

    #[test]
    fn short_move_peaks_near_triangle_apex() {
        let (mut s, c) = state_towards(Pose::from_translation(Vector3::new(0.01, 0.0, 0.0)));
        let mut peak: f64 = 0.0;
        for _ in 0..100 {
            s.last_linear = plan_translation(&s, &c);
            peak = peak.max(s.last_linear.norm());
            s.current = integrate(&s.current, &s.last_linear, &Vector3::zeros(), c.dt());
        }
        let apex = (c.a_trans * 0.01_f64).sqrt();
        assert!((peak - apex).abs() <= c.a_trans * c.dt(), "peak {peak} apex {apex}");
        assert!((s.current.position.x - 0.01).abs() < 1e-12);
    }

    #[test]
    fn rotation_speed_is_proportional_then_clamped() {
        let (s, c) = state_towards(Pose::from_rotation(UnitQuaternion::from_euler_angles(0.0, 0.0, FRAC_PI_2)));
        assert!((plan_rotation(&s, &c).norm() - 0.5).abs() < 1e-12);
        let (s, c) = state_towards(Pose::from_rotation(UnitQuaternion::from_euler_angles(0.1, 0.0, 0.0)));
        let w = plan_rotation(&s, &c);
        assert!((w.norm() - 0.1).abs() < 1e-12);
        assert!((w.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn first_kalman_sample_dominates() {
        let cfg = KalmanConfig::default();
        let (_, out) = kalman_smooth(ScalarKalman::new(cfg.initial_var), 0.37, &cfg);
        assert!((out - 0.37).abs() < 1e-4);
    }

    #[test]
    fn kalman_steady_state_on_constant_input() {
        let cfg = KalmanConfig::default();
        let mut k = ScalarKalman::new(cfg.initial_var);
        let mut out = 0.0;
        for _ in 0..200 {
            (k, out) = kalman_smooth(k, 0.15, &cfg);
            assert!(k.covariance > 0.0);
        }
        assert!((out - 0.15).abs() < 1e-6);
    }

    #[test]
    fn braking_profile_is_discretely_consistent() {
        let c = ControllerConfig::default();
        let step = c.a_trans * c.dt();
        for d in [0.001, 0.01, 0.05, 0.3] {
            let v = braking_speed(d, &c);
            let rest = d - v * c.dt();
            assert!((braking_speed(rest, &c) - (v - step)).abs() < 1e-12);
        }
    }

    #[test]
    fn converges_without_overshoot() {
        let (mut s, c) = state_towards(Pose::from_translation(Vector3::new(1.0, 0.0, 0.0)));
        let bound = c.translation_tick_bound(1.0);
        let mut max_x: f64 = 0.0;
        for _ in 0..bound {
            s = control_step(&s, &c).0;
            max_x = max_x.max(s.current.position.x);
        }
        assert!((s.current.position.x - 1.0).abs() < 1e-3);
        assert!(max_x <= 1.0 + 1e-3);
    }

    #[test]
    fn ticks_are_consecutive() {
        let (mut s, c) = state_towards(Pose::from_translation(Vector3::new(0.2, 0.1, 0.0)));
        for expected in 0..50 {
            let (n, cmd) = control_step(&s, &c);
            assert_eq!(cmd.tick, expected);
            s = n;
        }
    }

    #[test]
    fn invalid_config_rejected() {
        let c = ControllerConfig { a_trans: 0.0, ..Default::default() };
        assert!(c.validate().unwrap_err().contains("a_trans"));
    }
}
