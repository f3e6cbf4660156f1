//! Spline approximation of geodesic boundary-value problems.
//!
//! A geodesic between fixed endpoints is approximated by a natural cubic
//! spline per joint through `K + 2` uniform knots, the inner `K` values being
//! free control points. The control points minimize the trapezoidal energy
//! `Σ w_n ½ ζ̇ₙᵀ G(ζₙ) ζ̇ₙ` with BFGS.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::manifold::{quadratic_form, MetricField, Trajectory, TrajectorySample};
use crate::{JointMatrix, JointVector};

/// Maximum number of jittered re-initializations.
pub const MAX_INIT_RESTARTS: usize = 100;

/// Samples checked per solver sample when validating a path.
pub const CHECK_DENSITY: usize = 10;

const ARMIJO_C1: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;
/// Updates need `sᵀy > ε‖s‖‖y‖`.
const CURVATURE_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Number of free control points `K`.
    pub control_points: usize,
    /// Quadrature samples `N`.
    pub samples: usize,
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub tolerance: f64,
    /// Step for finite-difference gradients.
    pub fd_step: f64,
    /// Energy charged for each sample inside a strict region.
    pub energy_cap: f64,
    /// Extra jittered starts; the lowest-energy solution is kept.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            control_points: 8,
            samples: 100,
            max_iterations: 500,
            tolerance: 1e-6,
            fd_step: 1e-6,
            energy_cap: 1e6,
            restarts: 0,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.control_points < 1 {
            problems.push("solver.control_points must be >= 1".to_string());
        }
        if self.samples < 10 {
            problems.push("solver.samples must be >= 10".to_string());
        }
        if !(self.tolerance > 0.0) {
            problems.push("solver.tolerance must be > 0".to_string());
        }
        if !(self.fd_step > 0.0) {
            problems.push("solver.fd_step must be > 0".to_string());
        }
        if !(self.energy_cap > 0.0) {
            problems.push("solver.energy_cap must be > 0".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }
}

/// Natural cubic spline through `q_i`, the control points and `q_f`.
#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicSpline {
    q_i: JointVector,
    q_f: JointVector,
    /// One control point per row.
    control: JointMatrix,
}

/// Per-knot weights of a spline value, first and second derivative at one
/// parameter.
#[derive(Clone, Debug)]
struct KnotWeights {
    pos: Vec<f64>,
    vel: Vec<f64>,
    acc: Vec<f64>,
}

/// Second derivatives at the knots as a linear map of the knot values,
/// `(K+2) × (K+2)` with zero first and last rows.
fn moment_matrix(k: usize) -> JointMatrix {
    let n = k + 2;
    let h = 1.0 / (k + 1) as f64;
    let mut a = JointMatrix::zeros(k, k);
    let mut r = JointMatrix::zeros(k, n);
    for i in 0..k {
        a[(i, i)] = 4.0;
        if i > 0 {
            a[(i, i - 1)] = 1.0;
        }
        if i + 1 < k {
            a[(i, i + 1)] = 1.0;
        }
        let c = 6.0 / (h * h);
        r[(i, i)] = c;
        r[(i, i + 1)] = -2.0 * c;
        r[(i, i + 2)] = c;
    }
    // diagonally dominant, LU cannot fail
    let inner = a.lu().solve(&r).expect("tridiagonal spline system is non-singular");
    let mut m = JointMatrix::zeros(n, n);
    m.view_mut((1, 0), (k, n)).copy_from(&inner);
    m
}

fn knot_weights(moments: &JointMatrix, k: usize, tau: f64) -> KnotWeights {
    let n = k + 2;
    let h = 1.0 / (k + 1) as f64;
    let tau = tau.clamp(0.0, 1.0);
    let seg = ((tau / h).floor() as usize).min(k);
    let t = if tau >= 1.0 { 1.0 } else { (tau - seg as f64 * h) / h };
    let a = 1.0 - t;
    let mut w = KnotWeights {
        pos: vec![0.0; n],
        vel: vec![0.0; n],
        acc: vec![0.0; n],
    };
    w.pos[seg] += a;
    w.pos[seg + 1] += t;
    w.vel[seg] -= 1.0 / h;
    w.vel[seg + 1] += 1.0 / h;
    let (ca, cb) = (h * h / 6.0 * (a * a * a - a), h * h / 6.0 * (t * t * t - t));
    let (da, db) = (-h / 6.0 * (3.0 * a * a - 1.0), h / 6.0 * (3.0 * t * t - 1.0));
    for j in 0..n {
        let (mi, mj) = (moments[(seg, j)], moments[(seg + 1, j)]);
        w.pos[j] += ca * mi + cb * mj;
        w.vel[j] += da * mi + db * mj;
        w.acc[j] += a * mi + t * mj;
    }
    w
}

impl GeodesicSpline {
    pub fn new(q_i: JointVector, q_f: JointVector, control: JointMatrix) -> Result<Self> {
        check_dim(q_i.len(), q_f.len())?;
        check_dim(q_i.len(), control.ncols())?;
        if control.nrows() < 1 {
            return Err(Error::InvalidArgument("a spline needs at least one control point".into()));
        }
        if q_i.iter().chain(q_f.iter()).chain(control.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("spline knot".into()));
        }
        Ok(Self { q_i, q_f, control })
    }

    pub fn dim(&self) -> usize {
        self.q_i.len()
    }

    pub fn num_control_points(&self) -> usize {
        self.control.nrows()
    }

    pub fn start(&self) -> &JointVector {
        &self.q_i
    }

    pub fn end(&self) -> &JointVector {
        &self.q_f
    }

    pub fn control_points(&self) -> &JointMatrix {
        &self.control
    }

    /// Uniform knot parameters `k/(K+1)`.
    pub fn knots(&self) -> Vec<f64> {
        let k = self.num_control_points();
        (0..k + 2).map(|i| i as f64 / (k + 1) as f64).collect()
    }

    /// Knot values, one row per knot.
    pub fn knot_values(&self) -> JointMatrix {
        let (k, d) = (self.num_control_points(), self.dim());
        let mut y = JointMatrix::zeros(k + 2, d);
        y.set_row(0, &self.q_i.transpose());
        y.view_mut((1, 0), (k, d)).copy_from(&self.control);
        y.set_row(k + 1, &self.q_f.transpose());
        y
    }

    fn with_control(&self, control: JointMatrix) -> Self {
        Self {
            q_i: self.q_i.clone(),
            q_f: self.q_f.clone(),
            control,
        }
    }

    fn eval_weights(&self, f: impl Fn(&KnotWeights) -> &Vec<f64>, tau: f64) -> JointVector {
        let k = self.num_control_points();
        let w = knot_weights(&moment_matrix(k), k, tau);
        let y = self.knot_values();
        JointVector::from_fn(self.dim(), |j, _| {
            f(&w).iter().enumerate().map(|(r, c)| c * y[(r, j)]).sum()
        })
    }

    pub fn position(&self, tau: f64) -> JointVector {
        self.eval_weights(|w| &w.pos, tau)
    }

    /// Derivative with respect to the spline parameter.
    pub fn velocity(&self, tau: f64) -> JointVector {
        self.eval_weights(|w| &w.vel, tau)
    }

    pub fn acceleration(&self, tau: f64) -> JointVector {
        self.eval_weights(|w| &w.acc, tau)
    }
}

/// Spline basis evaluated at `n` uniform parameters, so that sample
/// positions and velocities are `P·Y` and `V·Y` for knot values `Y`.
#[derive(Clone, Debug)]
pub struct SampleBasis {
    pos: JointMatrix,
    vel: JointMatrix,
    acc: JointMatrix,
    weights: Vec<f64>,
}

impl SampleBasis {
    pub fn new(k: usize, n: usize) -> Self {
        assert!(n >= 2, "at least two samples are required");
        let moments = moment_matrix(k);
        let mut pos = JointMatrix::zeros(n, k + 2);
        let mut vel = JointMatrix::zeros(n, k + 2);
        let mut acc = JointMatrix::zeros(n, k + 2);
        for s in 0..n {
            let tau = if s == n - 1 { 1.0 } else { s as f64 / (n - 1) as f64 };
            let w = knot_weights(&moments, k, tau);
            for j in 0..k + 2 {
                pos[(s, j)] = w.pos[j];
                vel[(s, j)] = w.vel[j];
                acc[(s, j)] = w.acc[j];
            }
        }
        let delta = 1.0 / (n - 1) as f64;
        let weights = (0..n)
            .map(|s| if s == 0 || s == n - 1 { 0.5 * delta } else { delta })
            .collect();
        Self { pos, vel, acc, weights }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Sample positions, one row per sample.
    pub fn positions(&self, spline: &GeodesicSpline) -> JointMatrix {
        &self.pos * spline.knot_values()
    }

    pub fn velocities(&self, spline: &GeodesicSpline) -> JointMatrix {
        &self.vel * spline.knot_values()
    }

    pub fn accelerations(&self, spline: &GeodesicSpline) -> JointMatrix {
        &self.acc * spline.knot_values()
    }
}

/// Straight-chord spline: control points at uniform fractions of `q_f − q_i`.
pub fn init_spline(q_i: &JointVector, q_f: &JointVector, k: usize) -> Result<GeodesicSpline> {
    check_dim(q_i.len(), q_f.len())?;
    if k < 1 {
        return Err(Error::InvalidArgument("K must be >= 1".into()));
    }
    let d = q_i.len();
    let mut control = JointMatrix::zeros(k, d);
    for r in 0..k {
        let f = (r + 1) as f64 / (k + 1) as f64;
        control.set_row(r, &(q_i + (q_f - q_i) * f).transpose());
    }
    GeodesicSpline::new(q_i.clone(), q_f.clone(), control)
}

/// Whether every one of `n` uniform samples of the spline lies outside all
/// strict regions of the metric.
pub fn spline_is_feasible<M: MetricField + ?Sized>(spline: &GeodesicSpline, metric: &M, n: usize) -> Result<bool> {
    basis_feasible(spline, metric, &SampleBasis::new(spline.num_control_points(), n.max(2)))
}

fn basis_feasible<M: MetricField + ?Sized>(spline: &GeodesicSpline, metric: &M, basis: &SampleBasis) -> Result<bool> {
    let pos = basis.positions(spline);
    for s in 0..pos.nrows() {
        if !metric.is_feasible(&pos.row(s).transpose())? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Seeded stream of chord perturbations: a smooth Gaussian bump
/// `sin(πτ)·g` plus small per-point noise, growing with every draw.
struct Jitter {
    chord: GeodesicSpline,
    rng: ChaCha8Rng,
    base: f64,
    draws: usize,
}

impl Jitter {
    fn new(chord: GeodesicSpline, seed: u64) -> Self {
        let base = 0.25 * (chord.end() - chord.start()).norm().max(1.0);
        Self {
            chord,
            rng: ChaCha8Rng::seed_from_u64(seed),
            base,
            draws: 0,
        }
    }

    fn next(&mut self) -> GeodesicSpline {
        self.draws += 1;
        let (k, d) = (self.chord.num_control_points(), self.chord.dim());
        let scale = self.base * (1.0 + 0.1 * self.draws as f64);
        let bump: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut self.rng)).collect();
        let mut control = self.chord.control_points().clone();
        for r in 0..k {
            let tau = (r + 1) as f64 / (k + 1) as f64;
            let shape = (std::f64::consts::PI * tau).sin();
            for j in 0..d {
                let noise: f64 = StandardNormal.sample(&mut self.rng);
                control[(r, j)] += scale * (shape * bump[j] + 0.1 * noise);
            }
        }
        self.chord.with_control(control)
    }

    /// Next perturbation that passes the dense feasibility check.
    fn next_feasible<M: MetricField + ?Sized>(&mut self, metric: &M, n: usize) -> Result<Option<GeodesicSpline>> {
        for _ in 0..MAX_INIT_RESTARTS {
            let candidate = self.next();
            if spline_is_feasible(&candidate, metric, n)? {
                return Ok(Some(candidate));
            }
        }
        Ok(None)
    }
}

/// Chord initialization, jittered with seeded smooth Gaussian bumps until
/// all `CHECK_DENSITY · N` samples are outside every strict region.
///
/// Returns the spline and the number of restarts used.
pub fn init_feasible_spline<M: MetricField + ?Sized>(
    q_i: &JointVector,
    q_f: &JointVector,
    metric: &M,
    opts: &SolverOptions,
    seed: u64,
) -> Result<(GeodesicSpline, usize)> {
    check_dim(metric.dim(), q_i.len())?;
    let chord = init_spline(q_i, q_f, opts.control_points)?;
    let n = opts.samples * CHECK_DENSITY;
    if spline_is_feasible(&chord, metric, n)? {
        return Ok((chord, 0));
    }
    let mut jitter = Jitter::new(chord, seed);
    match jitter.next_feasible(metric, n)? {
        Some(s) => Ok((s, jitter.draws)),
        None => Err(Error::InfeasibleInit {
            restarts: MAX_INIT_RESTARTS,
        }),
    }
}

/// Integrand at one sample, `None` inside a strict region.
fn sample_energy<M: MetricField + ?Sized>(metric: &M, q: &JointVector, qd: &JointVector) -> Result<Option<f64>> {
    match metric.quadratic(q, qd) {
        Ok(sq) => {
            let e = 0.5 * sq;
            Ok(if e.is_finite() { Some(e) } else { None })
        }
        Err(Error::InsideRegion { .. }) | Err(Error::NonFinite(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn energy_with_basis<M: MetricField + ?Sized>(
    spline: &GeodesicSpline,
    metric: &M,
    basis: &SampleBasis,
    cap: f64,
) -> Result<f64> {
    let pos = basis.positions(spline);
    let vel = basis.velocities(spline);
    let mut total = 0.0;
    for s in 0..basis.len() {
        let q = pos.row(s).transpose();
        let qd = vel.row(s).transpose();
        total += match sample_energy(metric, &q, &qd)? {
            Some(e) => basis.weights[s] * e,
            None => cap,
        };
    }
    Ok(total)
}

/// Trapezoidal energy over `n` uniform samples of a unit-duration spline.
/// Samples inside strict regions contribute `cap`.
pub fn discretized_energy<M: MetricField + ?Sized>(
    spline: &GeodesicSpline,
    metric: &M,
    n: usize,
    cap: f64,
) -> Result<f64> {
    check_dim(metric.dim(), spline.dim())?;
    energy_with_basis(spline, metric, &SampleBasis::new(spline.num_control_points(), n.max(2)), cap)
}

/// Central finite differences of [`discretized_energy`] over every control
/// point coordinate, row-major.
pub fn energy_gradient_fd<M: MetricField + ?Sized>(
    spline: &GeodesicSpline,
    metric: &M,
    n: usize,
    cap: f64,
    step: f64,
) -> Result<JointVector> {
    let basis = SampleBasis::new(spline.num_control_points(), n.max(2));
    let (k, d) = (spline.num_control_points(), spline.dim());
    let mut grad = JointVector::zeros(k * d);
    for r in 0..k {
        for j in 0..d {
            let mut plus = spline.control.clone();
            plus[(r, j)] += step;
            let mut minus = spline.control.clone();
            minus[(r, j)] -= step;
            let ep = energy_with_basis(&spline.with_control(plus), metric, &basis, cap)?;
            let em = energy_with_basis(&spline.with_control(minus), metric, &basis, cap)?;
            grad[r * d + j] = (ep - em) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// Energy and its gradient with respect to the control points.
///
/// The spline is linear in its knots, so only `∂G/∂q` needs differencing,
/// once per sample and joint.
fn energy_and_gradient<M: MetricField + ?Sized>(
    spline: &GeodesicSpline,
    metric: &M,
    basis: &SampleBasis,
    opts: &SolverOptions,
) -> Result<(f64, JointVector)> {
    let (k, d) = (spline.num_control_points(), spline.dim());
    let pos = basis.positions(spline);
    let vel = basis.velocities(spline);
    let cap = opts.energy_cap;
    let h = opts.fd_step;
    let mut energy = 0.0;
    // per-sample partials of the integrand w.r.t. position and velocity
    let mut d_pos = JointMatrix::zeros(basis.len(), d);
    let mut d_vel = JointMatrix::zeros(basis.len(), d);
    for s in 0..basis.len() {
        let q = pos.row(s).transpose();
        let qd = vel.row(s).transpose();
        let w = basis.weights[s];
        let g = match metric.eval(&q) {
            Ok(g) => g,
            Err(Error::InsideRegion { .. }) | Err(Error::NonFinite(_)) => {
                energy += cap;
                continue;
            }
            Err(e) => return Err(e),
        };
        energy += w * 0.5 * quadratic_form(&g, &qd, &qd);
        let gqd = &g * &qd;
        for j in 0..d {
            d_vel[(s, j)] = w * gqd[j];
            let mut qp = q.clone();
            qp[j] += h;
            let mut qm = q.clone();
            qm[j] -= h;
            let ep = sample_energy(metric, &qp, &qd)?;
            let em = sample_energy(metric, &qm, &qd)?;
            let e0 = 0.5 * quadratic_form(&g, &qd, &qd);
            let slope = match (ep, em) {
                (Some(p), Some(m)) => (p - m) / (2.0 * h),
                (Some(p), None) => (p - e0) / h,
                (None, Some(m)) => (e0 - m) / h,
                (None, None) => 0.0,
            };
            d_pos[(s, j)] = w * slope;
        }
    }
    // chain rule through the linear knot map; only inner knots are free
    let full = basis.pos.transpose() * d_pos + basis.vel.transpose() * d_vel;
    let mut grad = JointVector::zeros(k * d);
    for r in 0..k {
        for j in 0..d {
            grad[r * d + j] = full[(r + 1, j)];
        }
    }
    Ok((energy, grad))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub spline: GeodesicSpline,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    pub status: SolveStatus,
    /// Energy after every accepted step, starting with the initial energy.
    pub energy_history: Vec<f64>,
    /// Jittered restarts needed for a feasible initialization.
    pub init_restarts: usize,
}

fn flatten(m: &JointMatrix) -> JointVector {
    let (k, d) = (m.nrows(), m.ncols());
    JointVector::from_fn(k * d, |i, _| m[(i / d, i % d)])
}

fn unflatten(x: &JointVector, k: usize, d: usize) -> JointMatrix {
    JointMatrix::from_fn(k, d, |r, c| x[r * d + c])
}

/// `(VᵀWV)⁻¹ ⊗ G⁻¹` over the free knots, the exact inverse Hessian of the
/// energy for a constant metric `G`. `G` is taken at the middle sample of
/// `spline`, falling back to the identity where it cannot be inverted.
fn initial_inverse_hessian<M: MetricField + ?Sized>(spline: &GeodesicSpline, metric: &M, basis: &SampleBasis) -> JointMatrix {
    let (k, d) = (spline.num_control_points(), spline.dim());
    let free = basis.vel.columns(1, k);
    let gram = free.transpose() * JointMatrix::from_diagonal(&JointVector::from_vec(basis.weights.clone())) * free;
    let gram_inv = gram.try_inverse().unwrap_or_else(|| JointMatrix::identity(k, k));
    let mid = spline.position(0.5);
    let g_inv = metric
        .eval(&mid)
        .ok()
        .and_then(|g| g.cholesky())
        .map(|c| c.inverse())
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .unwrap_or_else(|| JointMatrix::identity(d, d));
    gram_inv.kronecker(&g_inv)
}

/// Minimizes the discretized energy over the control points with BFGS and a
/// halving Armijo line search.
pub fn optimize<M: MetricField + ?Sized>(
    spline: &GeodesicSpline,
    metric: &M,
    opts: &SolverOptions,
) -> Result<Solution> {
    opts.validate()?;
    check_dim(metric.dim(), spline.dim())?;
    let (k, d) = (spline.num_control_points(), spline.dim());
    let basis = SampleBasis::new(k, opts.samples);
    let eval = |x: &JointVector| -> Result<(f64, JointVector)> {
        energy_and_gradient(&spline.with_control(unflatten(x, k, d)), metric, &basis, opts)
    };
    let line_energy = |x: &JointVector| -> Result<f64> {
        energy_with_basis(&spline.with_control(unflatten(x, k, d)), metric, &basis, opts.energy_cap)
    };
    // Steps are only accepted if the path stays outside strict regions at
    // the density used by the post-check, which rules out tunneling between
    // quadrature samples. Skipped when the start itself is not feasible.
    let dense = SampleBasis::new(k, opts.samples * CHECK_DENSITY);
    let feasible = |x: &JointVector| -> Result<bool> { basis_feasible(&spline.with_control(unflatten(x, k, d)), metric, &dense) };
    let guarded = feasible(&flatten(spline.control_points()))?;

    let mut x = flatten(spline.control_points());
    let (mut f, mut g) = eval(&x)?;
    let initial_energy = f;
    let mut history = vec![f];
    let h0 = initial_inverse_hessian(spline, metric, &basis);
    let mut hinv = h0.clone();
    let mut fresh = true;
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        if g.amax() < opts.tolerance {
            status = SolveStatus::Converged;
            break;
        }
        let mut p = -(&hinv * &g);
        let mut slope = g.dot(&p);
        if !(slope < 0.0) {
            hinv = h0.clone();
            fresh = true;
            p = -g.clone();
            slope = g.dot(&p);
        }
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..=MAX_HALVINGS {
            let xn = &x + &p * alpha;
            let fn_ = line_energy(&xn)?;
            if fn_ <= f + ARMIJO_C1 * alpha * slope && (!guarded || feasible(&xn)?) {
                accepted = Some((xn, fn_));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, _)) = accepted else {
            if !fresh {
                // retry once from the initial model before giving up
                hinv = h0.clone();
                fresh = true;
                continue;
            }
            if iterations == 0 {
                return Err(Error::OptimizationStalled {
                    iteration: 0,
                    energy: f,
                    gradient_norm: g.norm(),
                });
            }
            status = SolveStatus::LineSearchFailed;
            break;
        };
        let (fn_, gn) = eval(&xn)?;
        let s = &xn - &x;
        let y = &gn - &g;
        let sy = s.dot(&y);
        if sy > CURVATURE_EPS * s.norm() * y.norm() {
            if fresh {
                hinv = &h0 * (sy / y.dot(&(&h0 * &y)));
            }
            let rho = 1.0 / sy;
            let hy = &hinv * &y;
            let yhy = y.dot(&hy);
            // H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ, expanded
            hinv += (&s * s.transpose()) * (rho * rho * yhy + rho) - (&hy * s.transpose() + &s * hy.transpose()) * rho;
            fresh = false;
        }
        x = xn;
        f = fn_;
        g = gn;
        history.push(f);
        iterations += 1;
    }

    Ok(Solution {
        spline: spline.with_control(unflatten(&x, k, d)),
        energy: f,
        initial_energy,
        iterations,
        status,
        energy_history: history,
        init_restarts: 0,
    })
}

/// Feasible initialization followed by [`optimize`], repeated from
/// `opts.restarts` further jittered starts.
pub fn solve<M: MetricField + ?Sized>(
    q_i: &JointVector,
    q_f: &JointVector,
    metric: &M,
    opts: &SolverOptions,
    seed: u64,
) -> Result<Solution> {
    opts.validate()?;
    let (init, restarts) = init_feasible_spline(q_i, q_f, metric, opts, seed)?;
    let mut best = optimize(&init, metric, opts)?;
    best.init_restarts = restarts;
    if opts.restarts > 0 {
        // extra starts continue a stream independent of the first init
        let mut jitter = Jitter::new(init_spline(q_i, q_f, opts.control_points)?, seed ^ 0x9e37_79b9_7f4a_7c15);
        for _ in 0..opts.restarts {
            let Some(start) = jitter.next_feasible(metric, opts.samples * CHECK_DENSITY)? else {
                break;
            };
            if let Ok(sol) = optimize(&start, metric, opts) {
                if sol.energy < best.energy {
                    best = Solution {
                        init_restarts: best.init_restarts,
                        ..sol
                    };
                }
            }
        }
    }
    Ok(best)
}

/// Samples `n` uniform points of the spline mapped onto `[0, duration]`.
pub fn sample_trajectory(spline: &GeodesicSpline, n: usize, duration: f64) -> Result<Trajectory> {
    if n < 2 {
        return Err(Error::InvalidArgument("at least two samples are required".into()));
    }
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument(format!("duration must be > 0, got {duration}")));
    }
    let basis = SampleBasis::new(spline.num_control_points(), n);
    let pos = basis.positions(spline);
    let vel = basis.velocities(spline);
    let acc = basis.accelerations(spline);
    let samples = (0..n)
        .map(|s| {
            let tau = if s == n - 1 { 1.0 } else { s as f64 / (n - 1) as f64 };
            TrajectorySample {
                t: tau * duration,
                q: pos.row(s).transpose(),
                qdot: vel.row(s).transpose() / duration,
                qddot: Some(acc.row(s).transpose() / (duration * duration)),
            }
        })
        .collect();
    Trajectory::new(samples)
}

/// Geodesic segments through ordered keypoints.
#[derive(Clone, Debug)]
pub struct SequenceSolution {
    pub segments: Vec<Solution>,
    /// Per interior keypoint, `ζ̇_next(0) − ζ̇_prev(1)` in parameter units.
    pub velocity_jumps: Vec<JointVector>,
}

/// Solves every consecutive keypoint pair independently (in parallel);
/// segment `s` uses seed `seed + s`.
pub fn solve_sequence<M: MetricField + ?Sized>(
    keypoints: &[JointVector],
    metric: &M,
    opts: &SolverOptions,
    seed: u64,
) -> Result<SequenceSolution> {
    if keypoints.len() < 2 {
        return Err(Error::InvalidArgument("a sequence needs at least two keypoints".into()));
    }
    let results: Vec<Result<Solution>> = (0..keypoints.len() - 1)
        .into_par_iter()
        .map(|s| solve(&keypoints[s], &keypoints[s + 1], metric, opts, seed.wrapping_add(s as u64)))
        .collect();
    let mut segments = Vec::with_capacity(results.len());
    for (segment, r) in results.into_iter().enumerate() {
        segments.push(r.map_err(|e| Error::Segment {
            segment,
            source: Box::new(e),
        })?);
    }
    let velocity_jumps = segments
        .windows(2)
        .map(|w| w[1].spline.velocity(0.0) - w[0].spline.velocity(1.0))
        .collect();
    Ok(SequenceSolution {
        segments,
        velocity_jumps,
    })
}

/// Concatenates the segments on consecutive time intervals of `duration`
/// each, sharing keypoint samples.
pub fn sequence_trajectory(seq: &SequenceSolution, n: usize, duration: f64) -> Result<Trajectory> {
    let mut samples = Vec::new();
    for (i, seg) in seq.segments.iter().enumerate() {
        let part = sample_trajectory(&seg.spline, n, duration)?;
        let offset = i as f64 * duration;
        let skip = usize::from(i > 0);
        samples.extend(part.into_samples().into_iter().skip(skip).map(|mut s| {
            s.t += offset;
            s
        }));
    }
    Trajectory::new(samples)
}
