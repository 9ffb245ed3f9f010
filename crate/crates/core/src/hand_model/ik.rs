//! Damped least-squares inverse kinematics and fingertip type adjustment.

use nalgebra::{DMatrix, DVector, Vector3};

use super::{
    forward_kinematics, orientation_error, HandKinematicModel, JointVector, KinematicsError, Pose,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IkOptions {
    /// Position tolerance in meters.
    pub tol_position: f64,
    /// Orientation tolerance in radians (rotation-vector norm).
    pub tol_orientation: f64,
    pub max_iters: usize,
    pub damping: f64,
}

impl Default for IkOptions {
    fn default() -> Self {
        Self {
            tol_position: 1e-4,
            tol_orientation: 1e-3,
            max_iters: 200,
            damping: 1e-3,
        }
    }
}

/// Desired fingertip pose for one chain, in the palm frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FingerTarget {
    pub chain: usize,
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FingerSelector {
    One(usize),
    All,
}

/// Solves for joint angles that place every targeted fingertip at its target
/// pose, starting from `warm_start`.
///
/// Chains are independent, so each targeted chain is solved on its own and
/// the joints of untargeted chains are returned exactly as given. Every
/// iterate is clamped to the joint limits.
pub fn inverse_kinematics(
    model: &HandKinematicModel,
    targets: &[FingerTarget],
    warm_start: &[f64],
    options: &IkOptions,
) -> Result<JointVector, KinematicsError> {
    model.check_limits(warm_start)?;
    let mut q = JointVector::new(warm_start.to_vec());
    let mut worst = (0usize, 0.0f64, 0.0f64);
    let mut failed = false;
    for target in targets {
        if target.chain >= model.chains().len() {
            return Err(KinematicsError::UnknownChain(target.chain));
        }
        let range = model.chain_range(target.chain);
        let outcome = solve_chain(model, target, &q[range.clone()], options);
        match outcome {
            Ok(angles) => q[range].copy_from_slice(&angles),
            Err((iters, dp, dr)) => {
                failed = true;
                if dp > worst.1 || dr > worst.2 {
                    worst = (iters, dp.max(worst.1), dr.max(worst.2));
                }
            }
        }
    }
    if failed {
        return Err(KinematicsError::NoConvergence {
            iterations: worst.0,
            position_residual: worst.1,
            orientation_residual: worst.2,
        });
    }
    Ok(q)
}

fn solve_chain(
    model: &HandKinematicModel,
    target: &FingerTarget,
    start: &[f64],
    options: &IkOptions,
) -> Result<Vec<f64>, (usize, f64, f64)> {
    let chain = &model.chains()[target.chain];
    let n = chain.joints.len();
    let mut angles = start.to_vec();
    let lambda_sq = options.damping * options.damping;
    let mut residual = (f64::INFINITY, f64::INFINITY);

    for iter in 0..=options.max_iters {
        let frames = model.frames_for(target.chain, &angles);
        let tip = frames[n];
        let dp = target.pose.position - tip.position;
        let dr = orientation_error(&tip.orientation, &target.pose.orientation);
        residual = (dp.norm(), dr.norm());
        if residual.0 <= options.tol_position && residual.1 <= options.tol_orientation {
            return Ok(angles);
        }
        if iter == options.max_iters {
            break;
        }

        let mut jac = DMatrix::<f64>::zeros(6, n);
        for (i, joint) in chain.joints.iter().enumerate() {
            let axis: Vector3<f64> = frames[i].orientation * joint.axis.into_inner();
            let lever = tip.position - frames[i].position;
            let lin = axis.cross(&lever);
            for r in 0..3 {
                jac[(r, i)] = lin[r];
                jac[(r + 3, i)] = axis[r];
            }
        }
        let err = DVector::from_column_slice(&[dp.x, dp.y, dp.z, dr.x, dr.y, dr.z]);
        let jt = jac.transpose();
        let lhs = &jt * &jac + DMatrix::<f64>::identity(n, n) * lambda_sq;
        let rhs = &jt * err;
        let Some(step) = lhs.cholesky().map(|c| c.solve(&rhs)) else {
            break;
        };
        for (i, joint) in chain.joints.iter().enumerate() {
            angles[i] = joint.limits.clamp(angles[i] + step[i]);
        }
    }
    Err((options.max_iters, residual.0, residual.1))
}

/// Applies a fingertip-frame transform to the selected fingertip(s) and solves
/// for new joint angles warm-started at `q`.
///
/// The target for each selected chain is `FK(q) * t_delta`; chains that are
/// not selected keep their joint values.
pub fn adjust_type(
    model: &HandKinematicModel,
    q: &[f64],
    finger: FingerSelector,
    t_delta: &Pose,
    options: &IkOptions,
) -> Result<JointVector, KinematicsError> {
    model.check_limits(q)?;
    let tips = forward_kinematics(model, q)?;
    let chains: Vec<usize> = match finger {
        FingerSelector::One(c) => {
            if c >= model.chains().len() {
                return Err(KinematicsError::UnknownChain(c));
            }
            vec![c]
        }
        FingerSelector::All => (0..model.chains().len()).collect(),
    };
    let targets: Vec<FingerTarget> = chains
        .into_iter()
        .map(|chain| FingerTarget {
            chain,
            pose: tips[chain].compose(t_delta),
        })
        .collect();
    inverse_kinematics(model, &targets, q, options)
}
