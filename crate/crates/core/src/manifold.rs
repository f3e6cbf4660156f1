//! Riemannian metric fields over configuration space and the geodesic
//! quantities derived from them.

use std::sync::Arc;

use nalgebra::{Cholesky, Dyn};

use crate::error::{check_dim, Error, Result};
use crate::{JointMatrix, JointVector};

/// Default central-difference step for metric derivatives.
pub const DEFAULT_DERIVATIVE_STEP: f64 = 1e-6;

/// Smallest eigenvalue (after symmetrization) a metric may have before it is
/// reported as degenerate.
pub const DEGENERACY_THRESHOLD: f64 = 1e-12;

/// A smoothly varying symmetric positive-definite matrix field `G(q)`.
///
/// Implementors only have to provide [`MetricField::eval`]; derivatives fall
/// back to central finite differences with [`MetricField::derivative_step`].
pub trait MetricField: Send + Sync {
    /// Configuration-space dimension `d`.
    fn dim(&self) -> usize;

    /// Evaluates `G(q)`.
    fn eval(&self, q: &JointVector) -> Result<JointMatrix>;

    fn derivative_step(&self) -> f64 {
        DEFAULT_DERIVATIVE_STEP
    }

    /// Metric derivative tensor, entry `[l][j][k] = ∂g_lj/∂q_k`.
    fn derivative(&self, q: &JointVector) -> Result<Tensor3> {
        finite_difference_derivative(self, q)
    }

    /// `vᵀ G(q) v`.
    fn quadratic(&self, q: &JointVector, v: &JointVector) -> Result<f64> {
        Ok(quadratic_form(&self.eval(q)?, v, v))
    }

    /// Whether `q` lies outside every strict region, i.e. whether
    /// [`eval`](Self::eval) would not report [`Error::InsideRegion`].
    fn is_feasible(&self, q: &JointVector) -> Result<bool> {
        match self.eval(q) {
            Ok(_) => Ok(true),
            Err(Error::InsideRegion { .. }) => Ok(false),
            Err(e) => Err(e),
        }
    }
}

impl<M: MetricField + ?Sized> MetricField for Arc<M> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        (**self).eval(q)
    }
    fn derivative_step(&self) -> f64 {
        (**self).derivative_step()
    }
    fn derivative(&self, q: &JointVector) -> Result<Tensor3> {
        (**self).derivative(q)
    }
    fn quadratic(&self, q: &JointVector, v: &JointVector) -> Result<f64> {
        (**self).quadratic(q, v)
    }
    fn is_feasible(&self, q: &JointVector) -> Result<bool> {
        (**self).is_feasible(q)
    }
}

impl<M: MetricField + ?Sized> MetricField for &M {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        (**self).eval(q)
    }
    fn derivative_step(&self) -> f64 {
        (**self).derivative_step()
    }
    fn derivative(&self, q: &JointVector) -> Result<Tensor3> {
        (**self).derivative(q)
    }
    fn quadratic(&self, q: &JointVector, v: &JointVector) -> Result<f64> {
        (**self).quadratic(q, v)
    }
    fn is_feasible(&self, q: &JointVector) -> Result<bool> {
        (**self).is_feasible(q)
    }
}

/// Dense `d×d×d` tensor stored row-major as `[a][b][c]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor3 {
    dim: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    fn index(&self, a: usize, b: usize, c: usize) -> usize {
        (a * self.dim + b) * self.dim + c
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[self.index(a, b, c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, value: f64) {
        let i = self.index(a, b, c);
        self.data[i] = value;
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Metric that does not depend on the configuration.
#[derive(Clone, Debug)]
pub struct ConstantMetric {
    matrix: JointMatrix,
}

impl ConstantMetric {
    pub fn new(matrix: JointMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::InvalidArgument("metric matrix must be square".into()));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: JointMatrix::identity(dim, dim),
        }
    }
}

impl MetricField for ConstantMetric {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        check_dim(self.dim(), q.len())?;
        Ok(self.matrix.clone())
    }

    fn derivative(&self, q: &JointVector) -> Result<Tensor3> {
        check_dim(self.dim(), q.len())?;
        Ok(Tensor3::zeros(self.dim()))
    }
}

type MetricFn = dyn Fn(&JointVector) -> Result<JointMatrix> + Send + Sync;

/// Metric defined by an arbitrary closure.
#[derive(Clone)]
pub struct FnMetric {
    dim: usize,
    step: f64,
    f: Arc<MetricFn>,
}

impl FnMetric {
    pub fn new<F>(dim: usize, f: F) -> Self
    where
        F: Fn(&JointVector) -> Result<JointMatrix> + Send + Sync + 'static,
    {
        Self {
            dim,
            step: DEFAULT_DERIVATIVE_STEP,
            f: Arc::new(f),
        }
    }

    pub fn with_derivative_step(mut self, step: f64) -> Self {
        self.step = step;
        self
    }
}

impl std::fmt::Debug for FnMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnMetric")
            .field("dim", &self.dim)
            .field("step", &self.step)
            .finish_non_exhaustive()
    }
}

impl MetricField for FnMetric {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, q: &JointVector) -> Result<JointMatrix> {
        check_dim(self.dim, q.len())?;
        (self.f)(q)
    }

    fn derivative_step(&self) -> f64 {
        self.step
    }
}

/// Central finite-difference metric derivative, `[l][j][k] = ∂g_lj/∂q_k`.
pub fn finite_difference_derivative<M: MetricField + ?Sized>(
    metric: &M,
    q: &JointVector,
) -> Result<Tensor3> {
    let d = metric.dim();
    check_dim(d, q.len())?;
    let h = metric.derivative_step();
    let mut out = Tensor3::zeros(d);
    let mut qp = q.clone();
    for k in 0..d {
        qp[k] = q[k] + h;
        let gp = metric.eval(&qp)?;
        qp[k] = q[k] - h;
        let gm = metric.eval(&qp)?;
        qp[k] = q[k];
        for l in 0..d {
            for j in l..d {
                let dv = (gp[(l, j)] - gm[(l, j)] + gp[(j, l)] - gm[(j, l)]) / (4.0 * h);
                if !dv.is_finite() {
                    return Err(Error::NonFinite("metric derivative".into()));
                }
                out.set(l, j, k, dv);
                out.set(j, l, k, dv);
            }
        }
    }
    Ok(out)
}

/// `uᵀ G(q) v`.
pub fn inner_product<M: MetricField + ?Sized>(
    metric: &M,
    q: &JointVector,
    u: &JointVector,
    v: &JointVector,
) -> Result<f64> {
    let d = metric.dim();
    check_dim(d, q.len())?;
    check_dim(d, u.len())?;
    check_dim(d, v.len())?;
    let g = metric.eval(q)?;
    Ok(quadratic_form(&g, u, v))
}

pub(crate) fn quadratic_form(g: &JointMatrix, u: &JointVector, v: &JointVector) -> f64 {
    let mut acc = 0.0;
    for i in 0..g.nrows() {
        let mut row = 0.0;
        for j in 0..g.ncols() {
            row += g[(i, j)] * v[j];
        }
        acc += u[i] * row;
    }
    acc
}

/// `‖v‖_G = √(vᵀ G(q) v)`.
pub fn riemannian_norm<M: MetricField + ?Sized>(
    metric: &M,
    q: &JointVector,
    v: &JointVector,
) -> Result<f64> {
    let sq = inner_product(metric, q, v, v)?;
    norm_from_square(sq)
}

fn norm_from_square(sq: f64) -> Result<f64> {
    if sq < 0.0 {
        return Err(Error::MetricDegeneracy(format!(
            "negative squared norm {sq:e}"
        )));
    }
    Ok(sq.sqrt())
}

/// Metric derivative at `q` (analytic when the metric provides one).
pub fn metric_derivative<M: MetricField + ?Sized>(metric: &M, q: &JointVector) -> Result<Tensor3> {
    metric.derivative(q)
}

fn factorize(g: JointMatrix) -> Result<Cholesky<f64, Dyn>> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("metric evaluation".into()));
    }
    let sym = (&g + g.transpose()) * 0.5;
    let chol = Cholesky::new(sym)
        .ok_or_else(|| Error::MetricDegeneracy("metric is not positive-definite".into()))?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    if min_pivot <= DEGENERACY_THRESHOLD {
        return Err(Error::MetricDegeneracy(format!(
            "pivot {min_pivot:e} below {DEGENERACY_THRESHOLD:e}"
        )));
    }
    Ok(chol)
}

/// Christoffel symbols of the second kind, entry `[i][j][k] = Γ^i_jk`.
pub fn christoffel<M: MetricField + ?Sized>(metric: &M, q: &JointVector) -> Result<Tensor3> {
    let d = metric.dim();
    let dg = metric.derivative(q)?;
    let chol = factorize(metric.eval(q)?)?;
    let ginv = chol.inverse();
    let mut first = Tensor3::zeros(d);
    for l in 0..d {
        for j in 0..d {
            for k in j..d {
                let v = 0.5 * (dg.get(l, j, k) + dg.get(l, k, j) - dg.get(j, k, l));
                first.set(l, j, k, v);
                first.set(l, k, j, v);
            }
        }
    }
    let mut gamma = Tensor3::zeros(d);
    for i in 0..d {
        for j in 0..d {
            for k in j..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += ginv[(i, l)] * first.get(l, j, k);
                }
                gamma.set(i, j, k, acc);
                gamma.set(i, k, j, acc);
            }
        }
    }
    Ok(gamma)
}

/// `q̈_i = −Σ_jk Γ^i_jk q̇_j q̇_k`.
pub fn geodesic_acceleration<M: MetricField + ?Sized>(
    metric: &M,
    q: &JointVector,
    qdot: &JointVector,
) -> Result<JointVector> {
    let d = metric.dim();
    check_dim(d, q.len())?;
    check_dim(d, qdot.len())?;
    let gamma = christoffel(metric, q)?;
    Ok(JointVector::from_fn(d, |i, _| {
        let mut acc = 0.0;
        for j in 0..d {
            for k in 0..d {
                acc += gamma.get(i, j, k) * qdot[j] * qdot[k];
            }
        }
        -acc
    }))
}

/// One sample of a time-parameterized curve.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub q: JointVector,
    pub qdot: JointVector,
    pub qddot: Option<JointVector>,
}

/// Ordered samples with strictly increasing time stamps.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Trajectory {
    samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn new(samples: Vec<TrajectorySample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let d = first.q.len();
            for s in &samples {
                check_dim(d, s.q.len())?;
                check_dim(d, s.qdot.len())?;
                if let Some(a) = &s.qddot {
                    check_dim(d, a.len())?;
                }
                if !s.t.is_finite() || s.q.iter().chain(s.qdot.iter()).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("trajectory sample".into()));
                }
            }
        }
        if samples.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidArgument(
                "trajectory time stamps must be strictly increasing".into(),
            ));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[TrajectorySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.q.len())
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn into_samples(self) -> Vec<TrajectorySample> {
        self.samples
    }
}

/// Result of an initial-value geodesic integration. When the metric became
/// degenerate mid-way, `trajectory` holds the samples computed so far.
#[derive(Clone, Debug)]
pub struct IvpOutcome {
    pub trajectory: Trajectory,
    pub error: Option<Error>,
}

impl IvpOutcome {
    pub fn into_result(self) -> Result<Trajectory> {
        match self.error {
            None => Ok(self.trajectory),
            Some(e) => Err(e),
        }
    }
}

/// Integrates the geodesic equation from `(q0, qdot0)` with classical RK4.
pub fn integrate_geodesic_ivp<M: MetricField + ?Sized>(
    metric: &M,
    q0: &JointVector,
    qdot0: &JointVector,
    horizon: f64,
    dt: f64,
) -> Result<IvpOutcome> {
    let d = metric.dim();
    check_dim(d, q0.len())?;
    check_dim(d, qdot0.len())?;
    if !(dt > 0.0) || !(horizon >= dt) {
        return Err(Error::InvalidArgument(format!(
            "need dt > 0 and horizon >= dt (dt = {dt}, horizon = {horizon})"
        )));
    }
    let steps = (horizon / dt).round() as usize;
    let h = horizon / steps as f64;

    let accel = |q: &JointVector, v: &JointVector| geodesic_acceleration(metric, q, v);

    let mut samples = Vec::with_capacity(steps + 1);
    let mut q = q0.clone();
    let mut v = qdot0.clone();
    let a0 = match accel(&q, &v) {
        Ok(a) => a,
        Err(e) => {
            return Ok(IvpOutcome {
                trajectory: Trajectory::default(),
                error: Some(e),
            })
        }
    };
    samples.push(TrajectorySample {
        t: 0.0,
        q: q.clone(),
        qdot: v.clone(),
        qddot: Some(a0.clone()),
    });
    let mut a = a0;

    for step in 1..=steps {
        let result = (|| -> Result<(JointVector, JointVector, JointVector)> {
            let k1q = v.clone();
            let k1v = a.clone();
            let q2 = &q + &k1q * (0.5 * h);
            let v2 = &v + &k1v * (0.5 * h);
            let k2v = accel(&q2, &v2)?;
            let k2q = v2;
            let q3 = &q + &k2q * (0.5 * h);
            let v3 = &v + &k2v * (0.5 * h);
            let k3v = accel(&q3, &v3)?;
            let k3q = v3;
            let q4 = &q + &k3q * h;
            let v4 = &v + &k3v * h;
            let k4v = accel(&q4, &v4)?;
            let k4q = v4;
            let qn = &q + (k1q + &k2q * 2.0 + &k3q * 2.0 + k4q) * (h / 6.0);
            let vn = &v + (k1v + &k2v * 2.0 + &k3v * 2.0 + k4v) * (h / 6.0);
            let an = accel(&qn, &vn)?;
            Ok((qn, vn, an))
        })();
        match result {
            Ok((qn, vn, an)) => {
                q = qn;
                v = vn;
                a = an;
                samples.push(TrajectorySample {
                    t: step as f64 * h,
                    q: q.clone(),
                    qdot: v.clone(),
                    qddot: Some(a.clone()),
                });
            }
            Err(e) => {
                return Ok(IvpOutcome {
                    trajectory: Trajectory { samples },
                    error: Some(e),
                })
            }
        }
    }

    Ok(IvpOutcome {
        trajectory: Trajectory { samples },
        error: None,
    })
}

fn trapezoid<F>(traj: &Trajectory, mut integrand: F) -> Result<f64>
where
    F: FnMut(&TrajectorySample) -> Result<f64>,
{
    let samples = traj.samples();
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(
            "curve quadrature needs at least two samples".into(),
        ));
    }
    let mut prev = integrand(&samples[0])?;
    let mut total = 0.0;
    for w in samples.windows(2) {
        let next = integrand(&w[1])?;
        total += 0.5 * (w[1].t - w[0].t) * (prev + next);
        prev = next;
    }
    Ok(total)
}

/// Trapezoidal quadrature of `½ ‖q̇‖²_G` along the samples.
pub fn curve_energy<M: MetricField + ?Sized>(metric: &M, traj: &Trajectory) -> Result<f64> {
    trapezoid(traj, |s| {
        let sq = inner_product(metric, &s.q, &s.qdot, &s.qdot)?;
        norm_from_square(sq).map(|n| 0.5 * n * n)
    })
}

/// Trapezoidal quadrature of `‖q̇‖_G` along the samples.
pub fn curve_length<M: MetricField + ?Sized>(metric: &M, traj: &Trajectory) -> Result<f64> {
    trapezoid(traj, |s| riemannian_norm(metric, &s.q, &s.qdot))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dvector;

    fn diag(values: &[f64]) -> ConstantMetric {
        ConstantMetric::new(JointMatrix::from_diagonal(&JointVector::from_row_slice(values)))
            .unwrap()
    }

    fn line(metric_dim: usize, n: usize, speed: impl Fn(f64) -> f64, pos: impl Fn(f64) -> f64) -> Trajectory {
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let mut q = JointVector::zeros(metric_dim);
                let mut v = JointVector::zeros(metric_dim);
                q[0] = pos(t);
                v[0] = speed(t);
                TrajectorySample { t, q, qdot: v, qddot: None }
            })
            .collect();
        Trajectory::new(samples).unwrap()
    }

    #[test]
    fn inner_product_examples() {
        let id = ConstantMetric::identity(2);
        let q = dvector![0.0, 0.0];
        assert_eq!(inner_product(&id, &q, &dvector![1.0, 0.0], &dvector![0.0, 1.0]).unwrap(), 0.0);
        assert_eq!(inner_product(&id, &q, &dvector![3.0, 4.0], &dvector![3.0, 4.0]).unwrap(), 25.0);
        let g = diag(&[2.0, 1.0]);
        assert_eq!(inner_product(&g, &q, &dvector![1.0, 1.0], &dvector![1.0, 1.0]).unwrap(), 3.0);
    }

    #[test]
    fn inner_product_rejects_dimension_mismatch() {
        let id = ConstantMetric::identity(2);
        let err = inner_product(&id, &dvector![0.0, 0.0], &dvector![1.0], &dvector![1.0, 0.0]);
        assert!(matches!(err, Err(Error::DimensionMismatch { expected: 2, found: 1 })));
    }

    #[test]
    fn norm_examples() {
        let id3 = ConstantMetric::identity(3);
        let q3 = JointVector::zeros(3);
        assert_eq!(riemannian_norm(&id3, &q3, &dvector![1.0, 2.0, 2.0]).unwrap(), 3.0);
        assert_eq!(riemannian_norm(&id3, &q3, &JointVector::zeros(3)).unwrap(), 0.0);
        let g = diag(&[4.0, 9.0]);
        assert_relative_eq!(
            riemannian_norm(&g, &dvector![0.0, 0.0], &dvector![1.0, 1.0]).unwrap(),
            13f64.sqrt()
        );
    }

    #[test]
    fn norm_of_indefinite_metric_is_degenerate() {
        let g = diag(&[-1.0, 1.0]);
        let err = riemannian_norm(&g, &dvector![0.0, 0.0], &dvector![1.0, 0.0]);
        assert!(matches!(err, Err(Error::MetricDegeneracy(_))));
    }

    #[test]
    fn derivative_of_quadratic_metric() {
        let m = FnMetric::new(2, |q| {
            Ok(JointMatrix::from_diagonal(&dvector![1.0 + q[0] * q[0], 1.0]))
        });
        let dg = metric_derivative(&m, &dvector![1.0, 0.3]).unwrap();
        assert!((dg.get(0, 0, 0) - 2.0).abs() < 1e-6);
        assert!(dg.get(0, 0, 1).abs() < 1e-9);
        assert!(dg.get(1, 1, 0).abs() < 1e-9);
    }

    #[test]
    fn derivative_of_inverse_barrier_metric_1d() {
        // g(q) = 1 + 1/q  →  g'(2) = -1/4
        let m = FnMetric::new(1, |q| Ok(JointMatrix::from_element(1, 1, 1.0 + 1.0 / q[0])));
        let dg = metric_derivative(&m, &dvector![2.0]).unwrap();
        assert!((dg.get(0, 0, 0) + 0.25).abs() < 1e-8);
    }

    #[test]
    fn constant_metric_has_zero_christoffel() {
        let g = ConstantMetric::new(JointMatrix::from_row_slice(3, 3, &[
            2.0, 0.3, 0.1, 0.3, 1.0, 0.0, 0.1, 0.0, 4.0,
        ]))
        .unwrap();
        let gamma = christoffel(&g, &dvector![0.1, 0.2, 0.3]).unwrap();
        assert!(gamma.max_abs() < 1e-9);
        // the FD route must give zeros too
        let fd = FnMetric::new(3, move |_| Ok(g.matrix.clone()));
        assert!(christoffel(&fd, &dvector![0.1, 0.2, 0.3]).unwrap().max_abs() < 1e-9);
    }

    #[test]
    fn christoffel_1d_matches_closed_form() {
        // g = 1 + b(q), Γ = ½ b'/(1+b) with b = 1/q
        let m = FnMetric::new(1, |q| Ok(JointMatrix::from_element(1, 1, 1.0 + 1.0 / q[0])));
        for &q in &[0.3, 0.5, 1.0, 3.0] {
            let gamma = christoffel(&m, &dvector![q]).unwrap().get(0, 0, 0);
            let expected = 0.5 * (-1.0 / (q * q)) / (1.0 + 1.0 / q);
            assert_relative_eq!(gamma, expected, max_relative = 1e-7);
        }
    }

    #[test]
    fn inverse_barrier_acceleration_at_half() {
        // pure barrier metric b = 1/q gives q̈ = q̇²/(2q) exactly
        let m = FnMetric::new(1, |q| Ok(JointMatrix::from_element(1, 1, 1.0 / q[0])));
        let a = geodesic_acceleration(&m, &dvector![0.5], &dvector![1.0]).unwrap();
        assert_relative_eq!(a[0], 1.0, max_relative = 1e-7);
        // with the unit base metric, q̈ = q̇² / (2q(q + 1))
        let full = FnMetric::new(1, |q| Ok(JointMatrix::from_element(1, 1, 1.0 + 1.0 / q[0])));
        let a = geodesic_acceleration(&full, &dvector![0.5], &dvector![1.0]).unwrap();
        assert_relative_eq!(a[0], 1.0 / (2.0 * 0.5 * 1.5), max_relative = 1e-7);
    }

    #[test]
    fn singular_metric_reports_degeneracy() {
        let g = diag(&[1.0, 0.0]);
        assert!(matches!(
            christoffel(&g, &dvector![0.0, 0.0]),
            Err(Error::MetricDegeneracy(_))
        ));
    }

    #[test]
    fn straight_line_ivp() {
        let id = ConstantMetric::identity(2);
        let out = integrate_geodesic_ivp(&id, &dvector![0.0, 0.0], &dvector![1.0, 0.0], 1.0, 0.01)
            .unwrap()
            .into_result()
            .unwrap();
        let end = &out.samples().last().unwrap().q;
        assert!((end - dvector![1.0, 0.0]).norm() < 1e-9);
        assert_eq!(out.len(), 101);
    }

    #[test]
    fn ivp_rejects_bad_step() {
        let id = ConstantMetric::identity(1);
        assert!(integrate_geodesic_ivp(&id, &dvector![0.0], &dvector![1.0], 1.0, 0.0).is_err());
        assert!(integrate_geodesic_ivp(&id, &dvector![0.0], &dvector![1.0], 0.001, 0.01).is_err());
    }

    #[test]
    fn ivp_stops_with_partial_trajectory_on_degeneracy() {
        // metric becomes singular past q = 0.5
        let m = FnMetric::new(1, |q| {
            Ok(JointMatrix::from_element(1, 1, if q[0] < 0.5 { 1.0 } else { 0.0 }))
        });
        let out = integrate_geodesic_ivp(&m, &dvector![0.0], &dvector![1.0], 1.0, 0.1).unwrap();
        assert!(out.error.is_some());
        assert!(out.trajectory.len() >= 2 && out.trajectory.len() < 11);
    }

    #[test]
    fn energy_and_length_examples() {
        let id = ConstantMetric::identity(2);
        let traj = line(2, 101, |_| 1.0, |t| t);
        assert_relative_eq!(curve_energy(&id, &traj).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(curve_length(&id, &traj).unwrap(), 1.0, epsilon = 1e-12);
        let g2 = diag(&[2.0, 2.0]);
        assert_relative_eq!(curve_energy(&g2, &traj).unwrap(), 1.0, epsilon = 1e-12);
        let rest = line(2, 11, |_| 0.0, |_| 0.3);
        assert_eq!(curve_energy(&id, &rest).unwrap(), 0.0);
    }

    #[test]
    fn length_is_reparameterization_invariant() {
        let id = ConstantMetric::identity(2);
        // q(t) = t², speed 2t, same unit-length path
        let traj = line(2, 2001, |t| 2.0 * t, |t| t * t);
        assert_relative_eq!(curve_length(&id, &traj).unwrap(), 1.0, epsilon = 1e-6);
    }

    #[test]
    fn quarter_circle_length() {
        let id = ConstantMetric::identity(2);
        let n = 1000;
        let samples = (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let th = t * std::f64::consts::FRAC_PI_2;
                TrajectorySample {
                    t,
                    q: dvector![th.cos(), th.sin()],
                    qdot: dvector![-th.sin(), th.cos()] * std::f64::consts::FRAC_PI_2,
                    qddot: None,
                }
            })
            .collect();
        let traj = Trajectory::new(samples).unwrap();
        assert!((curve_length(&id, &traj).unwrap() - std::f64::consts::FRAC_PI_2).abs() < 1e-3);
    }

    #[test]
    fn trajectory_requires_increasing_time() {
        let s = |t: f64| TrajectorySample {
            t,
            q: dvector![0.0],
            qdot: dvector![0.0],
            qddot: None,
        };
        assert!(Trajectory::new(vec![s(0.0), s(0.0)]).is_err());
        assert!(Trajectory::new(vec![s(0.0), s(1.0)]).is_ok());
    }
}
