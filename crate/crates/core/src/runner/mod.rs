//! Experiment execution: solve scenarios, check the results for violations
//! and export trajectories and reports.

mod export;
mod field;
mod ik;
mod scenario;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::avoidance::{Ambient, AvoidRegion, CombinedMetric, RegionGeometry};
use crate::barriers::Barrier;
use crate::error::Result;
use crate::kinematics::KinematicChain;
use crate::manifold::{curve_length, Trajectory};
use crate::solver::{sequence_trajectory, solve_sequence, SolveStatus, CHECK_DENSITY};

pub use export::{field_table, report_json, trajectory_table, write_outputs};
pub use field::{sample_acceleration_field, FieldRow, GridAxis, GridSpec, VelocitySet};
pub use ik::{resolve_goal_ik, IK_MAX_ITERATIONS, IK_TOLERANCE};
pub use scenario::{
    build_scenario, load_scenario, parse_scenario, MetricMode, Outputs, Scenario, ScenarioFile, LIMITS_NAME,
    SCHEMA_VERSION, SELF_COLLISION_NAME,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CheckKind {
    Limits,
    SelfCollision,
    Obstacle,
}

/// Distance checks applied to every sample of a solved trajectory,
/// independent of the metric used to solve it.
#[derive(Clone, Debug)]
pub struct ViolationChecker {
    probe: CombinedMetric,
    kinds: Vec<CheckKind>,
}

impl ViolationChecker {
    /// Joint limits, self-collision (when the chain has non-adjacent links)
    /// and every obstacle-like region of the list.
    pub fn new(chain: Arc<KinematicChain>, regions: &[AvoidRegion]) -> Result<Self> {
        let barrier = Barrier::inverse();
        let mut checks = vec![AvoidRegion::joint_limits(barrier)];
        let mut kinds = vec![CheckKind::Limits];
        if chain.links().len() >= 3 && chain.links().iter().filter(|l| !l.capsules.is_empty()).count() >= 2 {
            checks.push(AvoidRegion::self_collision(barrier));
            kinds.push(CheckKind::SelfCollision);
        }
        for r in regions {
            if matches!(r.geometry, RegionGeometry::JointLimits | RegionGeometry::SelfCollision { .. }) {
                continue;
            }
            checks.push(r.clone());
            kinds.push(CheckKind::Obstacle);
        }
        let d = chain.dof();
        let probe = CombinedMetric::new(chain, Ambient::Constant(crate::JointMatrix::identity(d, d)), checks)?;
        Ok(Self { probe, kinds })
    }

    pub fn names(&self) -> Vec<String> {
        self.probe.regions().iter().map(|r| r.name.clone()).collect()
    }

    /// Signed distance per check for every sample, one row per sample.
    pub fn distances(&self, traj: &Trajectory) -> Result<Vec<Vec<f64>>> {
        traj.samples()
            .iter()
            .map(|s| Ok(self.probe.probe(&s.q)?.into_iter().map(|p| p.distance).collect()))
            .collect()
    }
}

/// Violation summary of one trajectory. A sample violates a check when its
/// distance is `<= 0`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Violations {
    pub out_of_limits: bool,
    pub self_collision: bool,
    pub obstacle_collision: bool,
    pub out_of_limits_fraction: f64,
    pub self_collision_fraction: f64,
    pub obstacle_collision_fraction: f64,
    pub min_distances: BTreeMap<String, f64>,
    pub samples_checked: usize,
}

fn summarize(checker: &ViolationChecker, distances: &[Vec<f64>]) -> Violations {
    let names = checker.names();
    let n = distances.len();
    let mut hits = [0usize; 3];
    let mut mins = vec![f64::INFINITY; names.len()];
    for row in distances {
        let mut flags = [false; 3];
        for (c, &dist) in row.iter().enumerate() {
            mins[c] = mins[c].min(dist);
            if dist <= 0.0 {
                let slot = match checker.kinds[c] {
                    CheckKind::Limits => 0,
                    CheckKind::SelfCollision => 1,
                    CheckKind::Obstacle => 2,
                };
                flags[slot] = true;
            }
        }
        for (h, f) in hits.iter_mut().zip(flags) {
            *h += usize::from(f);
        }
    }
    let frac = |h: usize| if n == 0 { 0.0 } else { h as f64 / n as f64 };
    Violations {
        out_of_limits: hits[0] > 0,
        self_collision: hits[1] > 0,
        obstacle_collision: hits[2] > 0,
        out_of_limits_fraction: frac(hits[0]),
        self_collision_fraction: frac(hits[1]),
        obstacle_collision_fraction: frac(hits[2]),
        min_distances: names.into_iter().zip(mins).collect(),
        samples_checked: n,
    }
}

impl Violations {
    pub fn any(&self) -> bool {
        self.out_of_limits || self.self_collision || self.obstacle_collision
    }
}

/// Result of one scenario.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub name: String,
    pub seed: u64,
    pub metric_mode: MetricMode,
    /// Solver error message; the remaining fields are empty when set.
    pub error: Option<String>,
    pub status: Option<SolveStatus>,
    pub iterations: usize,
    pub init_restarts: usize,
    pub violations: Violations,
    /// Length under the kinetic-energy metric, whatever the solve metric.
    pub riemannian_length: f64,
    /// Sum of the optimized segment energies under the solve metric.
    pub energy: f64,
    /// Per interior keypoint, the velocity jump between segments.
    pub velocity_jumps: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solve_time_s: Option<f64>,
}

impl TrajectoryReport {
    pub fn solved(&self) -> bool {
        self.error.is_none()
    }
}

/// Everything produced by one scenario run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: TrajectoryReport,
    pub trajectory: Option<Trajectory>,
    pub check_names: Vec<String>,
    /// Per sample, the signed distance of every check.
    pub distances: Vec<Vec<f64>>,
}

/// Solves a scenario and checks the result at `10 N` samples per segment.
///
/// Solver errors are recorded in the report rather than returned.
pub fn run(scenario: &Scenario) -> RunOutput {
    let start = Instant::now();
    let mut report = TrajectoryReport {
        name: scenario.name.clone(),
        seed: scenario.seed,
        metric_mode: scenario.metric_mode,
        error: None,
        status: None,
        iterations: 0,
        init_restarts: 0,
        violations: Violations::default(),
        riemannian_length: 0.0,
        energy: 0.0,
        velocity_jumps: Vec::new(),
        solve_time_s: None,
    };
    let fail = |mut report: TrajectoryReport, e: crate::Error| {
        report.error = Some(e.to_string());
        RunOutput {
            report,
            trajectory: None,
            check_names: Vec::new(),
            distances: Vec::new(),
        }
    };
    let metric = match scenario.metric() {
        Ok(m) => m,
        Err(e) => return fail(report, e),
    };
    let seq = match solve_sequence(&scenario.keypoints, &metric, &scenario.solver, scenario.seed) {
        Ok(s) => s,
        Err(e) => return fail(report, e),
    };
    let elapsed = start.elapsed().as_secs_f64();
    report.status = seq.segments.iter().map(|s| s.status).find(|s| *s != SolveStatus::Converged).or(Some(SolveStatus::Converged));
    report.iterations = seq.segments.iter().map(|s| s.iterations).sum();
    report.init_restarts = seq.segments.iter().map(|s| s.init_restarts).sum();
    report.energy = seq.segments.iter().map(|s| s.energy).sum();
    report.velocity_jumps = seq.velocity_jumps.iter().map(|v| v.iter().copied().collect()).collect();

    let dense = scenario.solver.samples * CHECK_DENSITY;
    let result = (|| -> Result<(Trajectory, ViolationChecker, Vec<Vec<f64>>, f64)> {
        let traj = sequence_trajectory(&seq, dense, scenario.outputs.duration)?;
        let checker = ViolationChecker::new(scenario.chain.clone(), &scenario.regions)?;
        let distances = checker.distances(&traj)?;
        let kinetic = CombinedMetric::new(scenario.chain.clone(), Ambient::Kinetic, Vec::new())?;
        let length = curve_length(&kinetic, &traj)?;
        Ok((traj, checker, distances, length))
    })();
    match result {
        Ok((traj, checker, distances, length)) => {
            report.violations = summarize(&checker, &distances);
            report.riemannian_length = length;
            if scenario.outputs.timing {
                report.solve_time_s = Some(elapsed);
            }
            RunOutput {
                report,
                trajectory: Some(traj),
                check_names: checker.names(),
                distances,
            }
        }
        Err(e) => fail(report, e),
    }
}

/// Aggregate over a batch. Percentages are over solved trajectories.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub total: usize,
    pub solved: usize,
    pub failed: usize,
    pub out_of_limits_pct: f64,
    pub self_collision_pct: f64,
    pub obstacle_collision_pct: f64,
    /// Mean per-sample fractions, in percent.
    pub out_of_limits_sample_pct: f64,
    pub self_collision_sample_pct: f64,
    pub obstacle_collision_sample_pct: f64,
    pub mean_riemannian_length: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub trajectories: Vec<TrajectoryReport>,
    pub summary: BatchSummary,
}

impl RunReport {
    pub fn from_reports(trajectories: Vec<TrajectoryReport>) -> Self {
        let solved: Vec<&TrajectoryReport> = trajectories.iter().filter(|t| t.solved()).collect();
        let n = solved.len();
        let pct = |f: &dyn Fn(&TrajectoryReport) -> f64| {
            if n == 0 {
                0.0
            } else {
                100.0 * solved.iter().map(|t| f(t)).sum::<f64>() / n as f64
            }
        };
        let summary = BatchSummary {
            total: trajectories.len(),
            solved: n,
            failed: trajectories.len() - n,
            out_of_limits_pct: pct(&|t| f64::from(u8::from(t.violations.out_of_limits))),
            self_collision_pct: pct(&|t| f64::from(u8::from(t.violations.self_collision))),
            obstacle_collision_pct: pct(&|t| f64::from(u8::from(t.violations.obstacle_collision))),
            out_of_limits_sample_pct: pct(&|t| t.violations.out_of_limits_fraction),
            self_collision_sample_pct: pct(&|t| t.violations.self_collision_fraction),
            obstacle_collision_sample_pct: pct(&|t| t.violations.obstacle_collision_fraction),
            mean_riemannian_length: if n == 0 {
                0.0
            } else {
                solved.iter().map(|t| t.riemannian_length).sum::<f64>() / n as f64
            },
        };
        Self { trajectories, summary }
    }
}

/// Runs scenarios concurrently; output order follows input order.
pub fn run_batch(scenarios: &[Scenario]) -> (RunReport, Vec<RunOutput>) {
    let outputs: Vec<RunOutput> = scenarios.par_iter().map(run).collect();
    let report = RunReport::from_reports(outputs.iter().map(|o| o.report.clone()).collect());
    (report, outputs)
}
