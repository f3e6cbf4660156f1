//! Scalar barrier functions of the distance to a no-go region.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distances below this are clamped before evaluating strict barriers.
pub const MIN_DISTANCE: f64 = 1e-9;

/// Barrier values above this are treated as "inside the region".
pub const DIVERGENCE_CAP: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    Exponential,
    Logarithmic,
    InversePower,
}

/// A barrier family with its parameters.
///
/// `lambda` only matters for [`BarrierKind::Exponential`] and `power` only for
/// [`BarrierKind::InversePower`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Barrier {
    kind: BarrierKind,
    sigma: f64,
    lambda: f64,
    power: u32,
}

impl Barrier {
    pub fn exponential(sigma: f64, lambda: f64) -> Result<Self> {
        Self::new(BarrierKind::Exponential, sigma, lambda, 1)
    }

    pub fn logarithmic(sigma: f64) -> Result<Self> {
        Self::new(BarrierKind::Logarithmic, sigma, 1.0, 1)
    }

    pub fn inverse_power(sigma: f64, power: u32) -> Result<Self> {
        Self::new(BarrierKind::InversePower, sigma, 1.0, power)
    }

    /// `σ/s` with `σ = 1`.
    pub fn inverse() -> Self {
        Self {
            kind: BarrierKind::InversePower,
            sigma: 1.0,
            lambda: 1.0,
            power: 1,
        }
    }

    pub fn new(kind: BarrierKind, sigma: f64, lambda: f64, power: u32) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("barrier sigma must be > 0, got {sigma}")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidArgument(format!("barrier lambda must be > 0, got {lambda}")));
        }
        if power < 1 {
            return Err(Error::InvalidArgument("barrier power must be >= 1".into()));
        }
        Ok(Self {
            kind,
            sigma,
            lambda,
            power,
        })
    }

    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn power(&self) -> u32 {
        self.power
    }

    /// Whether the barrier diverges at the region boundary.
    pub fn is_strict(&self) -> bool {
        is_strict(self)
    }

    pub fn value(&self, s: f64) -> Result<f64> {
        barrier_value(self, s)
    }

    pub fn gradient(&self, s: f64) -> Result<f64> {
        barrier_gradient(self, s)
    }

    fn argument(&self, s: f64) -> Result<f64> {
        if s.is_nan() {
            return Err(Error::NonFinite("barrier distance".into()));
        }
        match self.kind {
            BarrierKind::Exponential => Ok(s.max(0.0)),
            _ if s <= 0.0 => Err(Error::InsideRegion {
                region: "barrier".into(),
                distance: s,
            }),
            _ => Ok(s.max(MIN_DISTANCE)),
        }
    }
}

/// True for barriers that go to infinity at the region boundary.
pub fn is_strict(b: &Barrier) -> bool {
    !matches!(b.kind, BarrierKind::Exponential)
}

/// Barrier value at distance `s`.
///
/// Strict barriers reject `s <= 0` and clamp `s` to [`MIN_DISTANCE`]; the
/// exponential barrier is evaluated at `max(s, 0)`.
pub fn barrier_value(b: &Barrier, s: f64) -> Result<f64> {
    let s = b.argument(s)?;
    Ok(match b.kind {
        BarrierKind::Exponential => b.sigma * (-(s * s) / (b.lambda * b.lambda)).exp(),
        BarrierKind::Logarithmic => -b.sigma * s.ln(),
        BarrierKind::InversePower => b.sigma / s.powi(b.power as i32),
    })
}

/// Derivative `db/ds`.
pub fn barrier_gradient(b: &Barrier, s: f64) -> Result<f64> {
    let s = b.argument(s)?;
    Ok(match b.kind {
        BarrierKind::Exponential => {
            let l2 = b.lambda * b.lambda;
            -2.0 * s / l2 * b.sigma * (-(s * s) / l2).exp()
        }
        BarrierKind::Logarithmic => -b.sigma / s,
        BarrierKind::InversePower => {
            let n = b.power as i32;
            -(n as f64) * b.sigma / s.powi(n + 1)
        }
    })
}
