//! Geodesic acceleration fields over a 2-D grid, for plotting.

use std::str::FromStr;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{damped_pseudo_inverse, point_jacobian, KinematicChain, DEFAULT_PSEUDO_INVERSE_DAMPING};
use crate::manifold::{geodesic_acceleration, MetricField};
use crate::JointVector;

/// `start:end:count` along one axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridAxis {
    pub start: f64,
    pub end: f64,
    pub count: usize,
}

impl GridAxis {
    pub fn values(&self) -> Vec<f64> {
        if self.count == 1 {
            return vec![self.start];
        }
        (0..self.count)
            .map(|i| self.start + (self.end - self.start) * i as f64 / (self.count - 1) as f64)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x: GridAxis,
    pub y: GridAxis,
}

impl FromStr for GridAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("grid axis `{s}` must look like START:END:COUNT"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let start: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let end: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if count == 0 || !start.is_finite() || !end.is_finite() {
            return Err(bad());
        }
        Ok(Self { start, end, count })
    }
}

impl FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| Error::InvalidArgument(format!("grid `{s}` must look like X0:X1:NX,Y0:Y1:NY")))?;
        Ok(Self {
            x: x.parse()?,
            y: y.parse()?,
        })
    }
}

/// Velocities at which the field is sampled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VelocitySet {
    /// Joint velocities `q̇`.
    #[serde(default)]
    pub joint: Vec<Vec<f64>>,
    /// Tool velocities `ẋ`, mapped to `q̇ = J†ẋ` at every grid point.
    #[serde(default)]
    pub task: Vec<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldRow {
    pub q: [f64; 2],
    pub qdot: [f64; 2],
    /// `None` where the metric cannot be evaluated (inside a strict region).
    pub qddot: Option<[f64; 2]>,
    /// `J·q̈` at the tool when a chain is bound.
    pub task_qddot: Option<Vector3<f64>>,
}

/// Geodesic accelerations at every grid point and velocity.
pub fn sample_acceleration_field<M: MetricField + ?Sized>(
    metric: &M,
    chain: Option<&KinematicChain>,
    grid: &GridSpec,
    velocities: &VelocitySet,
) -> Result<Vec<FieldRow>> {
    if metric.dim() != 2 {
        return Err(Error::InvalidArgument(format!(
            "acceleration fields need a 2-D configuration space, got {}",
            metric.dim()
        )));
    }
    if !velocities.task.is_empty() && chain.is_none() {
        return Err(Error::InvalidArgument("task velocities need a kinematic chain".into()));
    }
    for v in &velocities.joint {
        if v.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: v.len(),
            });
        }
    }
    let mut rows = Vec::new();
    for &y in &grid.y.values() {
        for &x in &grid.x.values() {
            let q = JointVector::from_vec(vec![x, y]);
            let jac = chain.map(|c| point_jacobian(c, &q, &c.tool())).transpose()?;
            let mut qdots: Vec<JointVector> = velocities.joint.iter().map(|v| JointVector::from_vec(v.clone())).collect();
            if let Some(j) = &jac {
                let pinv = damped_pseudo_inverse(j, DEFAULT_PSEUDO_INVERSE_DAMPING)?;
                qdots.extend(velocities.task.iter().map(|v| &pinv * Vector3::from(*v)));
            }
            for qd in qdots {
                let acc = match geodesic_acceleration(metric, &q, &qd) {
                    Ok(a) => Some(a),
                    Err(Error::InsideRegion { .. }) | Err(Error::MetricDegeneracy(_)) => None,
                    Err(e) => return Err(e),
                };
                rows.push(FieldRow {
                    q: [x, y],
                    qdot: [qd[0], qd[1]],
                    qddot: acc.as_ref().map(|a| [a[0], a[1]]),
                    task_qddot: match (&jac, &acc) {
                        (Some(j), Some(a)) => Some(j * a),
                        _ => None,
                    },
                });
            }
        }
    }
    Ok(rows)
}
