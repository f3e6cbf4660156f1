//! Scenario files: schema, loading and validation.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use nalgebra::{Isometry3, Matrix3, Translation3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use crate::avoidance::{Ambient, AvoidRegion, CombinedMetric, RegionGeometry, TermForm};
use crate::barriers::{Barrier, BarrierKind};
use crate::error::{Error, Result};
use crate::geometry::{CapsuleRef, Shape, DEFAULT_ACTIVATION_DISTANCE};
use crate::kinematics::{Joint, KinematicChain, Link, LinkCapsule, LinkPoint};
use crate::solver::SolverOptions;
use crate::JointVector;

use super::ik::resolve_goal_ik;

pub const SCHEMA_VERSION: u32 = 1;

/// Names reserved for the built-in violation checks.
pub const LIMITS_NAME: &str = "joint_limits";
pub const SELF_COLLISION_NAME: &str = "self_collision";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricMode {
    /// The mass matrix alone.
    KineticOnly,
    /// Mass matrix plus every region term.
    #[default]
    CollisionFree,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub metric_mode: MetricMode,
    pub chain: ChainSpec,
    #[serde(default)]
    pub shapes: BTreeMap<String, ShapeSpec>,
    #[serde(default)]
    pub barriers: BTreeMap<String, BarrierSpec>,
    #[serde(default)]
    pub regions: Vec<RegionSpec>,
    pub boundary: BoundarySpec,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub outputs: Outputs,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    #[serde(default)]
    pub planar_arm: Option<PlanarArmSpec>,
    #[serde(default)]
    pub joints: Option<Vec<JointSpec>>,
    #[serde(default)]
    pub tool: Option<ToolSpec>,
    #[serde(default)]
    pub planar: bool,
}

fn default_capsule_radius() -> f64 {
    0.05
}

fn default_limit() -> f64 {
    std::f64::consts::PI
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanarArmSpec {
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    #[serde(default = "default_capsule_radius")]
    pub capsule_radius: f64,
    /// Symmetric joint limit `±limit`.
    #[serde(default = "default_limit")]
    pub limit: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointSpec {
    pub axis: [f64; 3],
    #[serde(default)]
    pub origin: [f64; 3],
    pub lower: f64,
    pub upper: f64,
    pub link: LinkSpec,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub mass: f64,
    #[serde(default)]
    pub com: [f64; 3],
    #[serde(default)]
    pub inertia: [[f64; 3]; 3],
    #[serde(default)]
    pub capsules: Vec<CapsuleSpec>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CapsuleSpec {
    pub a: [f64; 3],
    pub b: [f64; 3],
    pub radius: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToolSpec {
    pub link: usize,
    #[serde(default)]
    pub point: [f64; 3],
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShapeSpec {
    Sphere {
        center: [f64; 3],
        radius: f64,
    },
    Capsule {
        a: [f64; 3],
        b: [f64; 3],
        radius: f64,
    },
    Cuboid {
        half_extents: [f64; 3],
        #[serde(default)]
        position: [f64; 3],
        /// Rotation as a scaled axis (radians).
        #[serde(default)]
        rotation: [f64; 3],
    },
}

fn one() -> f64 {
    1.0
}

fn one_u32() -> u32 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierSpec {
    pub kind: BarrierKind,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "one_u32")]
    pub power: u32,
}

fn default_barrier() -> String {
    "inv".into()
}

fn default_activation() -> f64 {
    DEFAULT_ACTIVATION_DISTANCE
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormSpec {
    Isotropic,
    #[default]
    BasisChange,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegionSpec {
    JointLimits {
        #[serde(default = "default_barrier")]
        barrier: String,
    },
    JointBall {
        name: String,
        center: Vec<f64>,
        #[serde(default)]
        radius: f64,
        #[serde(default = "default_barrier")]
        barrier: String,
        #[serde(default)]
        form: FormSpec,
    },
    JointBox {
        name: String,
        center: Vec<f64>,
        half_extents: Vec<f64>,
        #[serde(default = "default_barrier")]
        barrier: String,
        #[serde(default)]
        form: FormSpec,
    },
    Obstacle {
        /// Defaults to the shape name.
        #[serde(default)]
        name: Option<String>,
        shape: String,
        /// `[link, capsule]` pairs; every capsule when omitted.
        #[serde(default)]
        capsules: Vec<[usize; 2]>,
        #[serde(default = "default_barrier")]
        barrier: String,
        #[serde(default)]
        form: FormSpec,
    },
    SelfCollision {
        #[serde(default = "default_activation")]
        activation_distance: f64,
        #[serde(default = "default_barrier")]
        barrier: String,
    },
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySpec {
    #[serde(default)]
    pub q_i: Option<Vec<f64>>,
    #[serde(default)]
    pub q_f: Option<Vec<f64>>,
    #[serde(default)]
    pub keypoints: Option<Vec<Vec<f64>>>,
    /// Tool goal; the final configuration is found by IK seeded at `q_i`.
    #[serde(default)]
    pub x_goal: Option<[f64; 3]>,
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    #[serde(default = "default_true")]
    pub trajectory: bool,
    #[serde(default = "default_true")]
    pub report: bool,
    /// Include wall-clock solve times in exported reports. Off by default so
    /// that reports are reproducible byte for byte.
    #[serde(default)]
    pub timing: bool,
    /// Duration of each geodesic segment in seconds.
    #[serde(default = "one")]
    pub duration: f64,
}

impl Default for Outputs {
    fn default() -> Self {
        Self {
            trajectory: true,
            report: true,
            timing: false,
            duration: 1.0,
        }
    }
}

/// A validated experiment.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub metric_mode: MetricMode,
    pub chain: Arc<KinematicChain>,
    pub regions: Vec<AvoidRegion>,
    /// Named barrier definitions from the file.
    pub barriers: BTreeMap<String, Barrier>,
    pub keypoints: Vec<JointVector>,
    pub solver: SolverOptions,
    pub outputs: Outputs,
}

impl Scenario {
    /// Scenario with default solver settings and outputs.
    pub fn new(
        name: impl Into<String>,
        chain: Arc<KinematicChain>,
        regions: Vec<AvoidRegion>,
        keypoints: Vec<JointVector>,
    ) -> Self {
        Self {
            name: name.into(),
            seed: 0,
            metric_mode: MetricMode::CollisionFree,
            chain,
            regions,
            barriers: BTreeMap::new(),
            keypoints,
            solver: SolverOptions::default(),
            outputs: Outputs::default(),
        }
    }

    /// The metric the solver uses for this scenario.
    pub fn metric(&self) -> Result<CombinedMetric> {
        let regions = match self.metric_mode {
            MetricMode::KineticOnly => Vec::new(),
            MetricMode::CollisionFree => self.regions.clone(),
        };
        CombinedMetric::new(self.chain.clone(), Ambient::Kinetic, regions)
    }

    /// Replaces every region's barrier with the given family. Exponential
    /// barriers take their parameters from the first exponential definition
    /// in the file.
    pub fn with_barrier_override(mut self, kind: BarrierKind) -> Result<Self> {
        let barrier = match kind {
            BarrierKind::InversePower => Barrier::inverse(),
            BarrierKind::Logarithmic => Barrier::logarithmic(1.0)?,
            BarrierKind::Exponential => *self
                .barriers
                .values()
                .find(|b| b.kind() == BarrierKind::Exponential)
                .ok_or_else(|| {
                    Error::InvalidArgument(
                        "an exponential override needs an exponential barrier defined in the scenario".into(),
                    )
                })?,
        };
        for r in &mut self.regions {
            r.barrier = barrier;
        }
        Ok(self)
    }

    /// Checks every invariant and reports all problems at once.
    pub fn validate(&self) -> Result<()> {
        let d = self.chain.dof();
        let mut problems = Vec::new();
        if let Err(Error::Validation(p)) = self.solver.validate() {
            problems.extend(p);
        }
        if !(self.outputs.duration > 0.0 && self.outputs.duration.is_finite()) {
            problems.push("outputs.duration must be > 0".into());
        }
        if self.keypoints.len() < 2 {
            problems.push("boundary needs at least two configurations".into());
        }
        let mut names = BTreeSet::new();
        for r in &self.regions {
            if !names.insert(r.name.as_str()) {
                problems.push(format!("region name `{}` is used twice", r.name));
            }
            let reserved = match r.geometry {
                RegionGeometry::JointLimits => r.name != LIMITS_NAME,
                RegionGeometry::SelfCollision { .. } => r.name != SELF_COLLISION_NAME,
                _ => r.name == LIMITS_NAME || r.name == SELF_COLLISION_NAME,
            };
            if reserved {
                problems.push(format!("region name `{}` is reserved", r.name));
            }
        }
        let probe = match CombinedMetric::new(self.chain.clone(), Ambient::Kinetic, self.regions.clone()) {
            Ok(m) => Some(m),
            Err(Error::Validation(p)) => {
                problems.extend(p);
                None
            }
            Err(e) => return Err(e),
        };
        let last = self.keypoints.len().saturating_sub(1);
        for (i, q) in self.keypoints.iter().enumerate() {
            let label = match i {
                0 => "q_i".to_string(),
                i if i == last => "q_f".to_string(),
                i => format!("keypoint {i}"),
            };
            if q.len() != d {
                problems.push(format!("{label} has dimension {}, chain has {d}", q.len()));
                continue;
            }
            if q.iter().any(|v| !v.is_finite()) {
                problems.push(format!("{label} is not finite"));
                continue;
            }
            for (j, joint) in self.chain.joints().iter().enumerate() {
                if q[j] < joint.lower || q[j] > joint.upper {
                    problems.push(format!(
                        "{label} joint {j} = {} is outside [{}, {}]",
                        q[j], joint.lower, joint.upper
                    ));
                }
            }
            if let Some(probe) = &probe {
                for (r, p) in self.regions.iter().zip(probe.probe(q)?) {
                    if r.barrier.is_strict() && p.distance <= 0.0 {
                        problems.push(format!(
                            "{label} lies inside region `{}` (distance {})",
                            p.name, p.distance
                        ));
                    }
                }
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

fn v3(a: [f64; 3]) -> Vector3<f64> {
    Vector3::from(a)
}

fn build_chain(spec: &ChainSpec, problems: &mut Vec<String>) -> Option<KinematicChain> {
    let built = match (&spec.planar_arm, &spec.joints) {
        (Some(arm), None) => {
            if spec.tool.is_some() {
                problems.push("chain.tool is implied by chain.planar_arm".into());
                return None;
            }
            KinematicChain::planar_arm(&arm.lengths, &arm.masses, arm.capsule_radius, arm.limit)
        }
        (None, Some(joints)) => {
            let Some(tool) = &spec.tool else {
                problems.push("chain.tool is required with chain.joints".into());
                return None;
            };
            let mut js = Vec::new();
            let mut links = Vec::new();
            for (i, j) in joints.iter().enumerate() {
                let axis = v3(j.axis);
                if !(axis.norm() > 0.0) {
                    problems.push(format!("chain.joints[{i}].axis must be non-zero"));
                    return None;
                }
                js.push(Joint {
                    axis: nalgebra::Unit::new_normalize(axis),
                    origin: v3(j.origin),
                    lower: j.lower,
                    upper: j.upper,
                });
                let inertia = Matrix3::from_fn(|r, c| j.link.inertia[r][c]);
                links.push(Link {
                    mass: j.link.mass,
                    com: v3(j.link.com),
                    inertia,
                    capsules: j
                        .link
                        .capsules
                        .iter()
                        .map(|c| LinkCapsule {
                            a: v3(c.a),
                            b: v3(c.b),
                            radius: c.radius,
                        })
                        .collect(),
                });
            }
            KinematicChain::new(js, links, LinkPoint::new(tool.link, v3(tool.point)), spec.planar)
        }
        _ => {
            problems.push("chain needs exactly one of `planar_arm` or `joints`".into());
            return None;
        }
    };
    match built {
        Ok(c) => Some(c),
        Err(Error::Validation(p)) => {
            problems.extend(p.into_iter().map(|m| format!("chain: {m}")));
            None
        }
        Err(e) => {
            problems.push(format!("chain: {e}"));
            None
        }
    }
}

fn build_shape(spec: &ShapeSpec) -> Result<Shape> {
    match spec {
        ShapeSpec::Sphere { center, radius } => Shape::sphere(v3(*center), *radius),
        ShapeSpec::Capsule { a, b, radius } => Shape::capsule(v3(*a), v3(*b), *radius),
        ShapeSpec::Cuboid {
            half_extents,
            position,
            rotation,
        } => Shape::cuboid(
            v3(*half_extents),
            Isometry3::from_parts(
                Translation3::from(v3(*position)),
                UnitQuaternion::from_scaled_axis(v3(*rotation)),
            ),
        ),
    }
}

fn build_barrier(spec: &BarrierSpec) -> Result<Barrier> {
    match spec.kind {
        BarrierKind::Exponential => {
            let lambda = spec
                .lambda
                .ok_or_else(|| Error::InvalidArgument("exponential barriers need `lambda`".into()))?;
            Barrier::exponential(spec.sigma, lambda)
        }
        BarrierKind::Logarithmic => Barrier::logarithmic(spec.sigma),
        BarrierKind::InversePower => Barrier::inverse_power(spec.sigma, spec.power),
    }
}

fn form(f: FormSpec) -> TermForm {
    match f {
        FormSpec::Isotropic => TermForm::Isotropic,
        FormSpec::BasisChange => TermForm::BasisChange,
    }
}

/// Builds a scenario from a parsed file, resolving names and the IK goal.
pub fn build_scenario(file: ScenarioFile) -> Result<Scenario> {
    build_named(file, "scenario")
}

fn build_named(file: ScenarioFile, default_name: &str) -> Result<Scenario> {
    let mut problems = Vec::new();
    if file.schema_version != SCHEMA_VERSION {
        problems.push(format!(
            "schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        ));
    }
    let chain = build_chain(&file.chain, &mut problems);

    let mut shapes = BTreeMap::new();
    for (name, s) in &file.shapes {
        match build_shape(s) {
            Ok(shape) => {
                shapes.insert(name.clone(), shape);
            }
            Err(e) => problems.push(format!("shapes.{name}: {e}")),
        }
    }
    let mut barriers = BTreeMap::new();
    barriers.insert("inv".to_string(), Barrier::inverse());
    barriers.insert("log".to_string(), Barrier::logarithmic(1.0)?);
    for (name, b) in &file.barriers {
        match build_barrier(b) {
            Ok(bar) => {
                barriers.insert(name.clone(), bar);
            }
            Err(e) => problems.push(format!("barriers.{name}: {e}")),
        }
    }

    let mut regions = Vec::new();
    for (i, r) in file.regions.iter().enumerate() {
        let (name, barrier_name, geometry, f) = match r {
            RegionSpec::JointLimits { barrier } => {
                (LIMITS_NAME.to_string(), barrier, RegionGeometry::JointLimits, FormSpec::default())
            }
            RegionSpec::JointBall {
                name,
                center,
                radius,
                barrier,
                form,
            } => (
                name.clone(),
                barrier,
                RegionGeometry::JointBall {
                    center: JointVector::from_vec(center.clone()),
                    radius: *radius,
                },
                *form,
            ),
            RegionSpec::JointBox {
                name,
                center,
                half_extents,
                barrier,
                form,
            } => (
                name.clone(),
                barrier,
                RegionGeometry::JointBox {
                    center: JointVector::from_vec(center.clone()),
                    half_extents: JointVector::from_vec(half_extents.clone()),
                },
                *form,
            ),
            RegionSpec::Obstacle {
                name,
                shape,
                capsules,
                barrier,
                form,
            } => {
                let Some(s) = shapes.get(shape) else {
                    problems.push(format!("regions[{i}]: unknown shape `{shape}`"));
                    continue;
                };
                (
                    name.clone().unwrap_or_else(|| shape.clone()),
                    barrier,
                    RegionGeometry::Task {
                        shape: s.clone(),
                        capsules: capsules
                            .iter()
                            .map(|&[link, capsule]| CapsuleRef { link, capsule })
                            .collect(),
                    },
                    *form,
                )
            }
            RegionSpec::SelfCollision {
                activation_distance,
                barrier,
            } => (
                SELF_COLLISION_NAME.to_string(),
                barrier,
                RegionGeometry::SelfCollision {
                    activation_distance: *activation_distance,
                },
                FormSpec::default(),
            ),
        };
        let Some(barrier) = barriers.get(barrier_name) else {
            problems.push(format!("regions[{i}]: unknown barrier `{barrier_name}`"));
            continue;
        };
        regions.push(AvoidRegion::new(name, geometry, *barrier).with_form(form(f)));
    }

    let b = &file.boundary;
    let mut keypoints = Vec::new();
    let mut goal = None;
    match (&b.q_i, &b.q_f, &b.keypoints, &b.x_goal) {
        (Some(qi), Some(qf), None, None) => {
            keypoints.push(JointVector::from_vec(qi.clone()));
            keypoints.push(JointVector::from_vec(qf.clone()));
        }
        (None, None, Some(k), None) => {
            keypoints.extend(k.iter().map(|q| JointVector::from_vec(q.clone())));
        }
        (Some(qi), None, None, Some(x)) => {
            keypoints.push(JointVector::from_vec(qi.clone()));
            goal = Some(v3(*x));
        }
        _ => problems.push(
            "boundary needs exactly one of `q_i` + `q_f`, `keypoints`, or `q_i` + `x_goal`".into(),
        ),
    }

    let Some(chain) = chain else {
        return Err(Error::Validation(problems));
    };
    if !problems.is_empty() {
        return Err(Error::Validation(problems));
    }
    if let Some(x) = goal {
        if keypoints[0].len() != chain.dof() {
            return Err(Error::Validation(vec![format!(
                "q_i has dimension {}, chain has {}",
                keypoints[0].len(),
                chain.dof()
            )]));
        }
        let qf = resolve_goal_ik(&chain, &x, &keypoints[0])?;
        keypoints.push(qf);
    }

    let scenario = Scenario {
        name: file.name.unwrap_or_else(|| default_name.into()),
        seed: file.seed,
        metric_mode: file.metric_mode,
        chain: Arc::new(chain),
        regions,
        barriers,
        keypoints,
        solver: file.solver,
        outputs: file.outputs,
    };
    Ok(scenario)
}

/// Parses scenario text. Schema errors name the offending field and line.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    parse_named(text, "scenario")
}

fn parse_named(text: &str, default_name: &str) -> Result<Scenario> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::Schema(e.to_string().trim_end().to_string()))?;
    let file: ScenarioFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let line = inner
            .span()
            .map(|s| text[..s.start.min(text.len())].lines().count().max(1));
        match line {
            Some(l) => Error::Schema(format!("`{path}` (line {l}): {}", inner.message())),
            None => Error::Schema(format!("`{path}`: {}", inner.message())),
        }
    })?;
    let scenario = build_named(file, default_name)?;
    scenario.validate()?;
    Ok(scenario)
}

/// Reads, parses and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("scenario");
    parse_named(&text, stem)
}
