//! Damped least-squares inverse kinematics for task-space goals.

use nalgebra::Vector3;

use crate::error::{check_dim, Error, Result};
use crate::kinematics::{damped_pseudo_inverse, forward_kinematics, point_jacobian_with_poses, point_position, KinematicChain, DEFAULT_PSEUDO_INVERSE_DAMPING};
use crate::JointVector;

/// Residual accepted as reaching the goal, in metres.
pub const IK_TOLERANCE: f64 = 1e-4;
pub const IK_MAX_ITERATIONS: usize = 200;

/// Iterations keep polishing below [`IK_TOLERANCE`] until this residual.
const IK_POLISH: f64 = 1e-12;

/// Largest joint change per iteration, in radians.
const IK_MAX_STEP: f64 = 0.5;

/// Finds `q` with `f(q) = x_goal` by iterating `q ← q + J†(x_goal − f(q))`
/// from `q_seed`, with steps capped at 0.5 rad per joint and clamped to the
/// joint limits.
///
/// The damping shrinks with the residual so that goals on the workspace
/// boundary, where `J` loses rank, are still reached to high accuracy.
pub fn resolve_goal_ik(chain: &KinematicChain, x_goal: &Vector3<f64>, q_seed: &JointVector) -> Result<JointVector> {
    check_dim(chain.dof(), q_seed.len())?;
    if x_goal.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("IK goal".into()));
    }
    let tool = chain.tool();
    let clamp = |q: &mut JointVector| {
        for (v, j) in q.iter_mut().zip(chain.joints()) {
            *v = v.clamp(j.lower, j.upper);
        }
    };
    let mut q = q_seed.clone();
    let mut best = (f64::INFINITY, q.clone());
    for _ in 0..=IK_MAX_ITERATIONS {
        let poses = forward_kinematics(chain, &q)?;
        let r = x_goal - point_position(&poses, &tool);
        let res = r.norm();
        if res < best.0 {
            best = (res, q.clone());
        }
        if res < IK_POLISH {
            break;
        }
        let jac = point_jacobian_with_poses(chain, &poses, &tool)?;
        let damping = DEFAULT_PSEUDO_INVERSE_DAMPING.min(res.sqrt());
        let mut step = damped_pseudo_inverse(&jac, damping)? * r;
        let largest = step.amax();
        if largest > IK_MAX_STEP {
            step *= IK_MAX_STEP / largest;
        }
        q += step;
        clamp(&mut q);
    }
    let (residual, q) = best;
    if residual < IK_TOLERANCE {
        Ok(q)
    } else {
        Err(Error::UnreachableGoal {
            residual,
            iterations: IK_MAX_ITERATIONS,
        })
    }
}
