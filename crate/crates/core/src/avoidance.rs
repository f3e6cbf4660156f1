//! Region-avoiding metric terms and the collision-free metric
//! `G = M + G_j + G_s + G_o`.
//!
//! Directions follow the closest-point convention `v = q − q_a` (from the
//! region towards the configuration). The metric terms only depend on `v`
//! through `‖v‖` and `v vᵀ`, so the sign convention never changes a metric.

use std::sync::Arc;

use nalgebra::{Isometry3, Matrix3, Matrix3xX, MatrixXx3, Vector3};

use crate::barriers::{Barrier, DIVERGENCE_CAP};
use crate::error::{check_dim, Error, Result};
use crate::geometry::{
    all_capsules, chain_region_query_with_poses, self_collision_pairs_with_poses, CapsuleRef,
    ClosestPair, Shape, DEFAULT_ACTIVATION_DISTANCE,
};
use crate::kinematics::{
    damped_pseudo_inverse, forward_kinematics, mass_matrix_with_poses, world_point_jacobian,
    KinematicChain, DEFAULT_PSEUDO_INVERSE_DAMPING,
};
use crate::manifold::{quadratic_form, MetricField, Tensor3, DEFAULT_DERIVATIVE_STEP};
use crate::{JointMatrix, JointVector};

/// Norm below which a direction cannot seed an orthonormal basis.
pub const DIRECTION_TOLERANCE: f64 = 1e-12;

/// Pulled-back directions shorter than this fall back to the isotropic term.
pub const PULLBACK_TOLERANCE: f64 = 1e-9;

/// Vector from the closest region point to the current point, with the
/// signed distance (negative inside the region).
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionToRegion {
    pub v: JointVector,
    pub distance: f64,
}

/// How a region's barrier value is shaped into a metric term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TermForm {
    /// `b(‖v‖)·I`.
    Isotropic,
    /// `b(‖v‖)` on the direction of `v` only.
    #[default]
    BasisChange,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RegionGeometry {
    /// Two-sided limits of every joint of the bound chain.
    JointLimits,
    /// Joint-space ball (disk in 2-D); `radius = 0` is a single point.
    JointBall { center: JointVector, radius: f64 },
    /// Axis-aligned joint-space box.
    JointBox {
        center: JointVector,
        half_extents: JointVector,
    },
    /// Task-space obstacle tested against the listed chain capsules.
    Task { shape: Shape, capsules: Vec<CapsuleRef> },
    /// Every pair of non-adjacent links closer than the activation distance.
    SelfCollision { activation_distance: f64 },
}

/// A no-go region with the barrier that keeps geodesics out of it.
#[derive(Clone, Debug, PartialEq)]
pub struct AvoidRegion {
    pub name: String,
    pub geometry: RegionGeometry,
    pub barrier: Barrier,
    pub form: TermForm,
}

impl AvoidRegion {
    pub fn new(name: impl Into<String>, geometry: RegionGeometry, barrier: Barrier) -> Self {
        Self {
            name: name.into(),
            geometry,
            barrier,
            form: TermForm::default(),
        }
    }

    pub fn with_form(mut self, form: TermForm) -> Self {
        self.form = form;
        self
    }

    pub fn joint_limits(barrier: Barrier) -> Self {
        Self::new("joint_limits", RegionGeometry::JointLimits, barrier)
    }

    pub fn self_collision(barrier: Barrier) -> Self {
        Self::new(
            "self_collision",
            RegionGeometry::SelfCollision {
                activation_distance: DEFAULT_ACTIVATION_DISTANCE,
            },
            barrier,
        )
    }

    pub fn is_task_space(&self) -> bool {
        matches!(
            self.geometry,
            RegionGeometry::Task { .. } | RegionGeometry::SelfCollision { .. }
        )
    }

    fn inside(&self, distance: f64) -> Error {
        Error::InsideRegion {
            region: self.name.clone(),
            distance,
        }
    }

    /// Barrier value at a signed distance, mapping divergence to an
    /// inside-region error for strict barriers.
    fn barrier_at(&self, distance: f64) -> Result<f64> {
        if self.barrier.is_strict() && distance <= 0.0 {
            return Err(self.inside(distance));
        }
        let b = self.barrier.value(distance).map_err(|_| self.inside(distance))?;
        if self.barrier.is_strict() && b > DIVERGENCE_CAP {
            return Err(self.inside(distance));
        }
        Ok(b)
    }
}

/// Closest-point direction of `q` with respect to a joint-space ball.
pub fn ball_direction(q: &JointVector, center: &JointVector, radius: f64) -> Result<DirectionToRegion> {
    check_dim(center.len(), q.len())?;
    let w = q - center;
    let rho = w.norm();
    if rho <= DIRECTION_TOLERANCE {
        let mut v = JointVector::zeros(q.len());
        v[0] = -radius;
        return Ok(DirectionToRegion { v, distance: -radius });
    }
    Ok(DirectionToRegion {
        v: &w * (1.0 - radius / rho),
        distance: rho - radius,
    })
}

/// Closest-point direction of `q` with respect to an axis-aligned box.
pub fn box_direction(
    q: &JointVector,
    center: &JointVector,
    half_extents: &JointVector,
) -> Result<DirectionToRegion> {
    check_dim(center.len(), q.len())?;
    check_dim(half_extents.len(), q.len())?;
    let p = q - center;
    let gap = JointVector::from_fn(q.len(), |i, _| p[i].abs() - half_extents[i]);
    if gap.max() > 0.0 {
        let v = JointVector::from_fn(q.len(), |i, _| p[i] - p[i].clamp(-half_extents[i], half_extents[i]));
        let distance = v.norm();
        Ok(DirectionToRegion { v, distance })
    } else {
        let axis = gap.imax();
        let mut v = JointVector::zeros(q.len());
        let face = if p[axis] < 0.0 { -half_extents[axis] } else { half_extents[axis] };
        v[axis] = p[axis] - face;
        Ok(DirectionToRegion {
            v,
            distance: gap[axis],
        })
    }
}

/// `b(‖v‖)·I_d`.
pub fn isotropic_metric(v: &JointVector, barrier: &Barrier) -> Result<JointMatrix> {
    let b = barrier.value(v.norm())?;
    Ok(JointMatrix::identity(v.len(), v.len()) * b)
}

/// Orthonormal basis whose first column is `v/‖v‖`, completed by
/// Gram–Schmidt over the canonical axes with the axis most parallel to `v`
/// dropped (lowest index on ties).
pub fn gram_schmidt_basis(v: &JointVector) -> Result<JointMatrix> {
    let d = v.len();
    let norm = v.norm();
    if !(norm > DIRECTION_TOLERANCE) {
        return Err(Error::DegenerateDirection { norm });
    }
    let mut basis = JointMatrix::zeros(d, d);
    basis.set_column(0, &(v / norm));
    let mut drop = 0;
    for i in 1..d {
        if v[i].abs() > v[drop].abs() {
            drop = i;
        }
    }
    let mut col = 1;
    for seed in (0..d).filter(|&i| i != drop) {
        let mut w = JointVector::zeros(d);
        w[seed] = 1.0;
        // modified Gram–Schmidt, applied twice for orthogonality to 1e-15
        for _ in 0..2 {
            for c in 0..col {
                let b = basis.column(c);
                let proj = b.dot(&w);
                w -= b * proj;
            }
        }
        let n = w.norm();
        if n <= DIRECTION_TOLERANCE {
            return Err(Error::DegenerateDirection { norm: n });
        }
        basis.set_column(col, &(w / n));
        col += 1;
    }
    Ok(basis)
}

/// `B·diag(b(‖v‖), 0, …, 0)·Bᵀ` with `B` from [`gram_schmidt_basis`].
///
/// Only the first column of `B`, `v/‖v‖`, survives the product, so the
/// result is formed directly as `b·v̂v̂ᵀ`.
pub fn basis_change_metric(v: &JointVector, barrier: &Barrier) -> Result<JointMatrix> {
    let b = barrier.value(v.norm())?;
    let u = unit_direction(v)?;
    Ok(&u * u.transpose() * b)
}

fn unit_direction(v: &JointVector) -> Result<JointVector> {
    let norm = v.norm();
    if !(norm > DIRECTION_TOLERANCE) {
        return Err(Error::DegenerateDirection { norm });
    }
    Ok(v / norm)
}

/// One region contribution: `b·I` or the rank-one `b·uuᵀ`.
enum Term {
    Scaled(f64),
    Rank1(f64, JointVector),
}

impl Term {
    fn add_to(&self, g: &mut JointMatrix) {
        match self {
            Term::Scaled(b) => {
                for i in 0..g.nrows() {
                    g[(i, i)] += b;
                }
            }
            Term::Rank1(b, u) => g.ger(*b, u, u, 1.0),
        }
    }

    fn quadratic(&self, v: &JointVector) -> f64 {
        match self {
            Term::Scaled(b) => b * v.norm_squared(),
            Term::Rank1(b, u) => b * u.dot(v).powi(2),
        }
    }
}

/// Diagonal joint-limit metric with `g_ii = b(q_i − lower_i) + b(upper_i − q_i)`.
pub fn joint_limit_metric(
    q: &JointVector,
    lower: &JointVector,
    upper: &JointVector,
    barrier: &Barrier,
) -> Result<JointMatrix> {
    check_dim(q.len(), lower.len())?;
    check_dim(q.len(), upper.len())?;
    let mut g = JointMatrix::zeros(q.len(), q.len());
    for i in 0..q.len() {
        g[(i, i)] = barrier.value(q[i] - lower[i])? + barrier.value(upper[i] - q[i])?;
    }
    Ok(g)
}

/// `Jᵀ G_task J`.
pub fn pullback_metric(jac: &Matrix3xX<f64>, task_metric: &Matrix3<f64>) -> JointMatrix {
    let g = jac.transpose() * task_metric * jac;
    (&g + g.transpose()) * 0.5
}

/// `J† v_x`.
pub fn pullback_direction(jac_pinv: &MatrixXx3<f64>, v_x: &Vector3<f64>) -> JointVector {
    jac_pinv * v_x
}

/// Which ambient metric the avoidance terms are added to.
#[derive(Clone, Debug, PartialEq)]
pub enum Ambient {
    /// The chain's mass matrix `M(q)`.
    Kinetic,
    /// A fixed matrix, e.g. the identity for flat-space studies.
    Constant(JointMatrix),
}

/// Per-region geometry evaluated at one configuration.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionProbe {
    pub name: String,
    /// Minimal signed distance to the region.
    pub distance: f64,
}

/// The summed collision-free metric field of a chain and its regions.
#[derive(Clone, Debug)]
pub struct CombinedMetric {
    chain: Arc<KinematicChain>,
    ambient: Ambient,
    regions: Vec<AvoidRegion>,
    damping: f64,
    step: f64,
}

/// Builds `G(q) = M(q) + Σ region terms`.
pub fn combined_metric(chain: Arc<KinematicChain>, regions: Vec<AvoidRegion>) -> Result<CombinedMetric> {
    CombinedMetric::new(chain, Ambient::Kinetic, regions)
}

impl CombinedMetric {
    pub fn new(chain: Arc<KinematicChain>, ambient: Ambient, regions: Vec<AvoidRegion>) -> Result<Self> {
        let d = chain.dof();
        let mut problems = Vec::new();
        if let Ambient::Constant(m) = &ambient {
            if m.nrows() != d || m.ncols() != d {
                problems.push(format!("ambient metric must be {d}x{d}"));
            }
        }
        let mut regions = regions;
        for r in &mut regions {
            match &mut r.geometry {
                RegionGeometry::JointLimits => {}
                RegionGeometry::JointBall { center, radius } => {
                    if center.len() != d {
                        problems.push(format!("region `{}`: center has dimension {}, chain has {d}", r.name, center.len()));
                    }
                    if !(*radius >= 0.0) {
                        problems.push(format!("region `{}`: radius must be >= 0", r.name));
                    }
                }
                RegionGeometry::JointBox { center, half_extents } => {
                    if center.len() != d || half_extents.len() != d {
                        problems.push(format!("region `{}`: box dimension must be {d}", r.name));
                    }
                    if half_extents.iter().any(|h| !(*h > 0.0)) {
                        problems.push(format!("region `{}`: half-extents must be positive", r.name));
                    }
                }
                RegionGeometry::Task { capsules, .. } => {
                    if capsules.is_empty() {
                        *capsules = all_capsules(&chain);
                    }
                    for c in capsules.iter() {
                        let ok = chain
                            .links()
                            .get(c.link)
                            .is_some_and(|l| c.capsule < l.capsules.len());
                        if !ok {
                            problems.push(format!(
                                "region `{}`: capsule {}/{} does not exist",
                                r.name, c.link, c.capsule
                            ));
                        }
                    }
                    if capsules.is_empty() {
                        problems.push(format!("region `{}`: chain has no collision capsules", r.name));
                    }
                }
                RegionGeometry::SelfCollision { activation_distance } => {
                    if !(*activation_distance > 0.0) {
                        problems.push(format!("region `{}`: activation distance must be > 0", r.name));
                    }
                }
            }
        }
        if !problems.is_empty() {
            return Err(Error::Validation(problems));
        }
        Ok(Self {
            chain,
            ambient,
            regions,
            damping: DEFAULT_PSEUDO_INVERSE_DAMPING,
            step: DEFAULT_DERIVATIVE_STEP,
        })
    }

    /// Flat-space variant, `G(q) = I + Σ region terms`.
    pub fn flat(chain: Arc<KinematicChain>, regions: Vec<AvoidRegion>) -> Result<Self> {
        let d = chain.dof();
        Self::new(chain, Ambient::Constant(JointMatrix::identity(d, d)), regions)
    }

    pub fn with_damping(mut self, damping: f64) -> Self {
        self.damping = damping;
        self
    }

    pub fn with_derivative_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }

    pub fn chain(&self) -> &Arc<KinematicChain> {
        &self.chain
    }

    pub fn regions(&self) -> &[AvoidRegion] {
        &self.regions
    }

    pub fn ambient(&self) -> &Ambient {
        &self.ambient
    }

    /// The same chain and regions with only the ambient term, i.e. `M(q)`
    /// for a kinetic ambient.
    pub fn ambient_only(&self) -> Self {
        Self {
            regions: Vec::new(),
            ..self.clone()
        }
    }

    fn joint_region_term(&self, region: &AvoidRegion, q: &JointVector) -> Result<Term> {
        let dir = match &region.geometry {
            RegionGeometry::JointBall { center, radius } => ball_direction(q, center, *radius)?,
            RegionGeometry::JointBox { center, half_extents } => box_direction(q, center, half_extents)?,
            _ => unreachable!("joint_region_term called for a non joint-space region"),
        };
        let b = region.barrier_at(dir.distance)?;
        Ok(match region.form {
            TermForm::BasisChange if dir.v.norm() > DIRECTION_TOLERANCE => Term::Rank1(b, unit_direction(&dir.v)?),
            _ => Term::Scaled(b),
        })
    }

    fn limit_diagonal(&self, region: &AvoidRegion, q: &JointVector) -> Result<JointVector> {
        let mut g = JointVector::zeros(q.len());
        for (i, joint) in self.chain.joints().iter().enumerate() {
            g[i] = region.barrier_at(q[i] - joint.lower)? + region.barrier_at(joint.upper - q[i])?;
        }
        Ok(g)
    }

    /// Metric term of one closest pair, shaped along the pulled-back
    /// direction `J†v_x` and scaled by `b(‖v_x‖)`.
    fn pair_term(&self, region: &AvoidRegion, poses: &[Isometry3<f64>], pair: &ClosestPair) -> Result<Term> {
        let b = region.barrier_at(pair.distance)?;
        if region.form == TermForm::Isotropic {
            return Ok(Term::Scaled(b));
        }
        let mut jac = world_point_jacobian(&self.chain, poses, pair.robot_point.link, &pair.point_on_robot)?;
        if let Some(other) = pair.region_point {
            jac -= world_point_jacobian(&self.chain, poses, other.link, &pair.point_on_region)?;
        }
        let pinv = damped_pseudo_inverse(&jac, self.damping)?;
        // direction from the unit normal so that it survives distance → 0
        let normal = if pair.direction.norm() > 0.0 {
            pair.direction.normalize()
        } else {
            pair.point_on_robot - pair.point_on_region
        };
        let v = pullback_direction(&pinv, &normal);
        if v.norm() < PULLBACK_TOLERANCE {
            return Ok(Term::Scaled(b));
        }
        Ok(Term::Rank1(b, unit_direction(&v)?))
    }

    /// Every region contribution at `q`, joint limits as a diagonal.
    fn terms(&self, q: &JointVector, poses: &[Isometry3<f64>]) -> Result<(Vec<Term>, Option<JointVector>)> {
        let mut terms = Vec::new();
        let mut diagonal: Option<JointVector> = None;
        for region in &self.regions {
            match &region.geometry {
                RegionGeometry::JointLimits => {
                    let g = self.limit_diagonal(region, q)?;
                    diagonal = Some(match diagonal {
                        Some(acc) => acc + g,
                        None => g,
                    });
                }
                RegionGeometry::JointBall { .. } | RegionGeometry::JointBox { .. } => {
                    terms.push(self.joint_region_term(region, q)?)
                }
                RegionGeometry::Task { shape, capsules } => {
                    let pair = chain_region_query_with_poses(&self.chain, poses, shape, capsules)?;
                    terms.push(self.pair_term(region, poses, &pair)?);
                }
                RegionGeometry::SelfCollision { activation_distance } => {
                    for p in self_collision_pairs_with_poses(&self.chain, poses)? {
                        if p.pair.distance < *activation_distance {
                            terms.push(self.pair_term(region, poses, &p.pair)?);
                        }
                    }
                }
            }
        }
        Ok((terms, diagonal))
    }

    fn checked_poses(&self, q: &JointVector) -> Result<Vec<Isometry3<f64>>> {
        check_dim(self.chain.dof(), q.len())?;
        if q.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("configuration".into()));
        }
        forward_kinematics(&self.chain, q)
    }

    /// Signed minimal distance to every region at `q`.
    pub fn probe(&self, q: &JointVector) -> Result<Vec<RegionProbe>> {
        check_dim(self.chain.dof(), q.len())?;
        let poses = forward_kinematics(&self.chain, q)?;
        self.regions
            .iter()
            .map(|r| {
                let distance = self.region_distance(r, q, &poses)?;
                Ok(RegionProbe {
                    name: r.name.clone(),
                    distance,
                })
            })
            .collect()
    }

    fn region_distance(&self, r: &AvoidRegion, q: &JointVector, poses: &[Isometry3<f64>]) -> Result<f64> {
        Ok(match &r.geometry {
            RegionGeometry::JointLimits => self
                .chain
                .joints()
                .iter()
                .zip(q.iter())
                .map(|(j, &v)| (v - j.lower).min(j.upper - v))
                .fold(f64::INFINITY, f64::min),
            RegionGeometry::JointBall { center, radius } => ball_direction(q, center, *radius)?.distance,
            RegionGeometry::JointBox { center, half_extents } => {
                box_direction(q, center, half_extents)?.distance
            }
            RegionGeometry::Task { shape, capsules } => {
                chain_region_query_with_poses(&self.chain, poses, shape, capsules)?.distance
            }
            RegionGeometry::SelfCollision { .. } => self_collision_pairs_with_poses(&self.chain, poses)?
                .iter()
                .map(|p| p.pair.distance)
                .fold(f64::INFINITY, f64::min),
        })
    }
}

impl MetricField for CombinedMetric {
    fn dim(&self) -> usize {
        self.chain.dof()
    }

    fn derivative_step(&self) -> f64 {
        self.step
    }

    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        let poses = self.checked_poses(q)?;
        let mut g = match &self.ambient {
            Ambient::Kinetic => mass_matrix_with_poses(&self.chain, &poses),
            Ambient::Constant(m) => m.clone(),
        };
        let (terms, diagonal) = self.terms(q, &poses)?;
        if let Some(diag) = diagonal {
            for (i, v) in diag.iter().enumerate() {
                g[(i, i)] += v;
            }
        }
        for t in &terms {
            t.add_to(&mut g);
        }
        Ok(g)
    }

    fn quadratic(&self, q: &JointVector, v: &JointVector) -> Result<f64> {
        check_dim(self.chain.dof(), v.len())?;
        let poses = self.checked_poses(q)?;
        let mut total = match &self.ambient {
            Ambient::Kinetic => quadratic_form(&mass_matrix_with_poses(&self.chain, &poses), v, v),
            Ambient::Constant(m) => quadratic_form(m, v, v),
        };
        let (terms, diagonal) = self.terms(q, &poses)?;
        if let Some(diag) = diagonal {
            total += diag.iter().zip(v.iter()).map(|(g, x)| g * x * x).sum::<f64>();
        }
        total += terms.iter().map(|t| t.quadratic(v)).sum::<f64>();
        Ok(total)
    }

    fn is_feasible(&self, q: &JointVector) -> Result<bool> {
        let poses = self.checked_poses(q)?;
        for r in self.regions.iter().filter(|r| r.barrier.is_strict()) {
            match r.barrier_at(self.region_distance(r, q, &poses)?) {
                Ok(_) => {}
                Err(Error::InsideRegion { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }
}

/// Constant base metric plus one joint-space ball region, with closed-form
/// derivatives. Serves as an analytic reference for the finite-difference
/// derivative path.
#[derive(Clone, Debug)]
pub struct JointBallMetric {
    pub base: JointMatrix,
    pub center: JointVector,
    pub radius: f64,
    pub barrier: Barrier,
    pub form: TermForm,
}

impl JointBallMetric {
    fn parts(&self, q: &JointVector) -> Result<(JointVector, f64, f64)> {
        check_dim(self.center.len(), q.len())?;
        let w = q - &self.center;
        let rho = w.norm();
        if rho <= DIRECTION_TOLERANCE {
            return Err(Error::DegenerateDirection { norm: rho });
        }
        let s = rho - self.radius;
        if self.barrier.is_strict() && s <= 0.0 {
            return Err(Error::InsideRegion {
                region: "ball".into(),
                distance: s,
            });
        }
        Ok((w / rho, rho, s))
    }
}

impl MetricField for JointBallMetric {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        let (u, _, s) = self.parts(q)?;
        let b = self.barrier.value(s)?;
        Ok(match self.form {
            TermForm::Isotropic => &self.base + JointMatrix::identity(q.len(), q.len()) * b,
            TermForm::BasisChange => &self.base + &u * u.transpose() * b,
        })
    }

    fn derivative(&self, q: &JointVector) -> Result<Tensor3> {
        let d = q.len();
        let (u, rho, s) = self.parts(q)?;
        let b = self.barrier.value(s)?;
        let db = self.barrier.gradient(s)?;
        let mut out = Tensor3::zeros(d);
        for k in 0..d {
            for l in 0..d {
                for j in 0..d {
                    let v = match self.form {
                        TermForm::Isotropic => {
                            if l == j {
                                db * u[k]
                            } else {
                                0.0
                            }
                        }
                        TermForm::BasisChange => {
                            let du = |i: usize| ((if i == k { 1.0 } else { 0.0 }) - u[i] * u[k]) / rho;
                            db * u[k] * u[l] * u[j] + b * (du(l) * u[j] + u[l] * du(j))
                        }
                    };
                    out.set(l, j, k, v);
                }
            }
        }
        Ok(out)
    }
}
