//! Serial kinematic chains with revolute joints.
//!
//! Each joint is described by an offset from the previous link frame and a
//! rotation axis expressed in that frame. Link `i` is rigidly attached to the
//! output of joint `i`, so a chain with `d` joints has `d` links.

use nalgebra::{
    Isometry3, Matrix3, Matrix3xX, Matrix6, MatrixXx3, Translation3, Unit, UnitQuaternion,
    Vector3, Vector6,
};

use crate::error::{check_dim, Error, Result};
use crate::{JointMatrix, JointVector};

/// Default damping of [`damped_pseudo_inverse`] used by the avoidance metrics.
pub const DEFAULT_PSEUDO_INVERSE_DAMPING: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Joint {
    /// Unit rotation axis in the parent frame.
    pub axis: Unit<Vector3<f64>>,
    /// Offset of the joint from the parent link frame, meters.
    pub origin: Vector3<f64>,
    pub lower: f64,
    pub upper: f64,
}

/// Capsule collision geometry expressed in its link frame.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkCapsule {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Link {
    pub mass: f64,
    /// Center of mass in the link frame.
    pub com: Vector3<f64>,
    /// Rotational inertia about the center of mass, link frame.
    pub inertia: Matrix3<f64>,
    pub capsules: Vec<LinkCapsule>,
}

/// A point rigidly attached to a link.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkPoint {
    pub link: usize,
    pub local: Vector3<f64>,
}

impl LinkPoint {
    pub fn new(link: usize, local: Vector3<f64>) -> Self {
        Self { link, local }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    joints: Vec<Joint>,
    links: Vec<Link>,
    tool: LinkPoint,
    planar: bool,
}

impl KinematicChain {
    /// Builds a chain, checking every structural invariant.
    pub fn new(joints: Vec<Joint>, links: Vec<Link>, tool: LinkPoint, planar: bool) -> Result<Self> {
        let mut problems = Vec::new();
        if joints.is_empty() {
            problems.push("chain needs at least one joint".to_string());
        }
        if joints.len() != links.len() {
            problems.push(format!(
                "chain has {} joints but {} links",
                joints.len(),
                links.len()
            ));
        }
        for (i, j) in joints.iter().enumerate() {
            if !(j.lower < j.upper) {
                problems.push(format!("joint {i}: lower limit {} must be below upper {}", j.lower, j.upper));
            }
            if planar && (j.axis.x.abs() > 1e-12 || j.axis.y.abs() > 1e-12) {
                problems.push(format!("joint {i}: planar chains need axes along z"));
            }
            if planar && j.origin.z.abs() > 1e-12 {
                problems.push(format!("joint {i}: planar chains need in-plane offsets"));
            }
        }
        for (i, l) in links.iter().enumerate() {
            if !(l.mass > 0.0) {
                problems.push(format!("link {i}: mass must be positive"));
            }
            let sym = (l.inertia - l.inertia.transpose()).abs().max();
            if sym > 1e-12 * l.inertia.abs().max().max(1.0) {
                problems.push(format!("link {i}: inertia must be symmetric"));
            } else if l.inertia.symmetric_eigenvalues().min() < -1e-12 {
                problems.push(format!("link {i}: inertia must be positive semi-definite"));
            }
            for (c, cap) in l.capsules.iter().enumerate() {
                if !(cap.radius > 0.0) {
                    problems.push(format!("link {i} capsule {c}: radius must be positive"));
                }
            }
        }
        if tool.link >= links.len() {
            problems.push(format!("tool link {} out of range", tool.link));
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            joints,
            links,
            tool,
            planar,
        })
    }

    /// Planar arm in the xy plane with point masses at the link tips and one
    /// capsule along every link. All joints rotate about z.
    pub fn planar_arm(lengths: &[f64], masses: &[f64], capsule_radius: f64, limit: f64) -> Result<Self> {
        check_dim(lengths.len(), masses.len())?;
        let mut joints = Vec::with_capacity(lengths.len());
        let mut links = Vec::with_capacity(lengths.len());
        let mut prev = 0.0;
        for (&len, &m) in lengths.iter().zip(masses) {
            joints.push(Joint {
                axis: Vector3::z_axis(),
                origin: Vector3::new(prev, 0.0, 0.0),
                lower: -limit,
                upper: limit,
            });
            links.push(Link {
                mass: m,
                com: Vector3::new(len, 0.0, 0.0),
                inertia: Matrix3::zeros(),
                capsules: vec![LinkCapsule {
                    a: Vector3::zeros(),
                    b: Vector3::new(len, 0.0, 0.0),
                    radius: capsule_radius,
                }],
            });
            prev = len;
        }
        let last = lengths.len().saturating_sub(1);
        let tool = LinkPoint::new(last, Vector3::new(*lengths.last().unwrap_or(&0.0), 0.0, 0.0));
        Self::new(joints, links, tool, true)
    }

    pub fn dof(&self) -> usize {
        self.joints.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn tool(&self) -> LinkPoint {
        self.tool
    }

    pub fn is_planar(&self) -> bool {
        self.planar
    }

    pub fn lower_limits(&self) -> JointVector {
        JointVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.lower))
    }

    pub fn upper_limits(&self) -> JointVector {
        JointVector::from_iterator(self.dof(), self.joints.iter().map(|j| j.upper))
    }

    pub fn within_limits(&self, q: &JointVector) -> bool {
        self.joints
            .iter()
            .zip(q.iter())
            .all(|(j, &v)| v >= j.lower && v <= j.upper)
    }

    pub fn check_link(&self, link: usize) -> Result<()> {
        if link < self.links.len() {
            Ok(())
        } else {
            Err(Error::InvalidLink {
                index: link,
                links: self.links.len(),
            })
        }
    }
}

/// World pose of every link frame.
pub fn forward_kinematics(chain: &KinematicChain, q: &JointVector) -> Result<Vec<Isometry3<f64>>> {
    check_dim(chain.dof(), q.len())?;
    let mut pose = Isometry3::identity();
    let mut out = Vec::with_capacity(chain.dof());
    for (joint, &angle) in chain.joints.iter().zip(q.iter()) {
        let step = Isometry3::from_parts(
            Translation3::from(joint.origin),
            UnitQuaternion::from_axis_angle(&joint.axis, angle),
        );
        pose *= step;
        out.push(pose);
    }
    Ok(out)
}

/// World position of a link point given precomputed link poses.
pub fn point_position(poses: &[Isometry3<f64>], p: &LinkPoint) -> Vector3<f64> {
    poses[p.link].transform_point(&p.local.into()).coords
}

/// World position of the chain's tool point.
pub fn tool_position(chain: &KinematicChain, q: &JointVector) -> Result<Vector3<f64>> {
    let poses = forward_kinematics(chain, q)?;
    Ok(point_position(&poses, &chain.tool))
}

/// World axis and position of every joint, from the link poses.
fn joint_frames(chain: &KinematicChain, poses: &[Isometry3<f64>]) -> Vec<(Vector3<f64>, Vector3<f64>)> {
    chain
        .joints
        .iter()
        .zip(poses)
        .map(|(j, pose)| (pose.rotation * j.axis.into_inner(), pose.translation.vector))
        .collect()
}

/// Linear-velocity Jacobian of a world point rigidly attached to `p.link`,
/// evaluated with precomputed poses.
pub fn point_jacobian_with_poses(
    chain: &KinematicChain,
    poses: &[Isometry3<f64>],
    p: &LinkPoint,
) -> Result<Matrix3xX<f64>> {
    chain.check_link(p.link)?;
    let x = point_position(poses, p);
    let frames = joint_frames(chain, poses);
    let mut jac = Matrix3xX::zeros(chain.dof());
    for (j, (axis, origin)) in frames.iter().enumerate().take(p.link + 1) {
        jac.set_column(j, &axis.cross(&(x - origin)));
    }
    Ok(jac)
}

/// Linear-velocity Jacobian (3×d) of the world position of `p`.
pub fn point_jacobian(chain: &KinematicChain, q: &JointVector, p: &LinkPoint) -> Result<Matrix3xX<f64>> {
    chain.check_link(p.link)?;
    let poses = forward_kinematics(chain, q)?;
    point_jacobian_with_poses(chain, &poses, p)
}

/// Jacobian of the world position of a point already expressed in world
/// coordinates but moving with `link`.
pub fn world_point_jacobian(
    chain: &KinematicChain,
    poses: &[Isometry3<f64>],
    link: usize,
    x: &Vector3<f64>,
) -> Result<Matrix3xX<f64>> {
    chain.check_link(link)?;
    let local = poses[link].inverse_transform_point(&(*x).into()).coords;
    point_jacobian_with_poses(chain, poses, &LinkPoint::new(link, local))
}

fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// 6×6 spatial inertia about the world origin acting on `[ω; v_origin]`.
fn spatial_inertia(mass: f64, com: &Vector3<f64>, inertia_com: &Matrix3<f64>) -> Matrix6<f64> {
    let c = skew(com);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(inertia_com - c * c * mass));
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(c * mass));
    out.fixed_view_mut::<3, 3>(3, 0)
        .copy_from(&(c.transpose() * mass));
    out.fixed_view_mut::<3, 3>(3, 3)
        .copy_from(&(Matrix3::identity() * mass));
    out
}

/// Joint-space mass matrix `M(q)` by the composite-rigid-body algorithm.
pub fn mass_matrix(chain: &KinematicChain, q: &JointVector) -> Result<JointMatrix> {
    let poses = forward_kinematics(chain, q)?;
    Ok(mass_matrix_with_poses(chain, &poses))
}

pub(crate) fn mass_matrix_with_poses(chain: &KinematicChain, poses: &[Isometry3<f64>]) -> JointMatrix {
    let d = chain.dof();
    let frames = joint_frames(chain, poses);
    let motion: Vec<Vector6<f64>> = frames
        .iter()
        .map(|(axis, origin)| {
            let lin = origin.cross(axis);
            Vector6::new(axis.x, axis.y, axis.z, lin.x, lin.y, lin.z)
        })
        .collect();

    // composite inertias, accumulated from the tip towards the base
    let mut composite = vec![Matrix6::zeros(); d];
    let mut acc = Matrix6::zeros();
    for i in (0..d).rev() {
        let link = &chain.links[i];
        let rot = poses[i].rotation.to_rotation_matrix();
        let com = poses[i].transform_point(&link.com.into()).coords;
        let inertia = rot.matrix() * link.inertia * rot.matrix().transpose();
        acc += spatial_inertia(link.mass, &com, &inertia);
        composite[i] = acc;
    }

    let mut m = JointMatrix::zeros(d, d);
    for i in 0..d {
        let force = composite[i] * motion[i];
        for j in 0..=i {
            let v = motion[j].dot(&force);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// `Jᵀ(JJᵀ + damping²·I)⁻¹`, computed through the smaller Gram matrix.
///
/// For chains with fewer than three joints the equivalent
/// `(JᵀJ + damping²·I)⁻¹Jᵀ` form is used, so an undamped call on a planar
/// 2-DoF Jacobian of full column rank still yields the Moore–Penrose inverse.
pub fn damped_pseudo_inverse(jac: &Matrix3xX<f64>, damping: f64) -> Result<MatrixXx3<f64>> {
    if !(damping >= 0.0) {
        return Err(Error::InvalidArgument("damping must be non-negative".into()));
    }
    let d = jac.ncols();
    let lam2 = damping * damping;
    let jt = jac.transpose();
    if d >= 3 {
        let gram = jac * &jt + Matrix3::identity() * lam2;
        let inv = invert_gram(JointMatrix::from_column_slice(3, 3, gram.as_slice()), damping)?;
        let inv = Matrix3::from_column_slice(inv.as_slice());
        Ok(jt * inv)
    } else {
        let gram = &jt * jac + JointMatrix::identity(d, d) * lam2;
        let inv = invert_gram(gram, damping)?;
        Ok(inv * jt)
    }
}

fn invert_gram(gram: JointMatrix, damping: f64) -> Result<JointMatrix> {
    let scale = gram.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let chol = nalgebra::Cholesky::new(gram.clone()).ok_or(Error::RankDeficient)?;
    if damping == 0.0 {
        let min_pivot = chol
            .l_dirty()
            .diagonal()
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v * v));
        if min_pivot <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::RankDeficient);
        }
    }
    Ok(chol.inverse())
}
