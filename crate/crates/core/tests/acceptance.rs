//! Acceptance suite. Runs every check in sequence and prints one PASS/FAIL
//! line per check; exits non-zero if any check fails.
//!
//! Pass substrings as arguments to run a subset:
//! `cargo test -p geomotion --test acceptance -- pullback`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use geomotion::avoidance::{
    basis_change_metric, Ambient, AvoidRegion, CombinedMetric, RegionGeometry,
};
use geomotion::barriers::Barrier;
use geomotion::geometry::{closest_point, sdf, CapsuleRef, Shape};
use geomotion::kinematics::{
    damped_pseudo_inverse, mass_matrix, point_jacobian, point_position, forward_kinematics, tool_position,
    Joint, KinematicChain, Link, LinkCapsule, LinkPoint,
};
use geomotion::manifold::{
    christoffel, geodesic_acceleration, integrate_geodesic_ivp, riemannian_norm, ConstantMetric, FnMetric,
    MetricField,
};
use geomotion::runner::{report_json, run, trajectory_table, MetricMode, Scenario};
use geomotion::solver::{init_spline, optimize, solve, GeodesicSpline, SolveStatus, SolverOptions};
use geomotion::{JointMatrix, JointVector};
use nalgebra::{dvector, Isometry3, Matrix3, Unit, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Check = fn() -> (bool, String);

fn main() {
    let checks: [(&str, Check); 10] = [
        ("flat-space geodesics", flat_space_geodesics),
        ("norm conservation", norm_conservation),
        ("spline-shooting agreement", spline_shooting_agreement),
        ("strict avoidance", strict_avoidance),
        ("exponential barrier is soft", exponential_barrier_is_soft),
        ("directional acceleration", directional_acceleration),
        ("pullback-direction behavior", pullback_direction_behavior),
        ("length ordering", length_ordering),
        ("oracle equivalences", oracle_equivalences),
        ("performance and determinism", performance_and_determinism),
    ];
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut ran = 0;
    for (name, check) in checks {
        if !filters.is_empty() && !filters.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        ran += 1;
        let start = Instant::now();
        let (pass, detail) = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            (false, format!("panicked: {msg}"))
        });
        failed += usize::from(!pass);
        println!(
            "{} {name}: {detail} [{:.1} s]",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of {ran} checks passed", ran - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform_vec(r: &mut ChaCha8Rng, d: usize, lo: f64, hi: f64) -> JointVector {
    JointVector::from_fn(d, |_, _| r.random_range(lo..hi))
}

fn gaussian_vec(r: &mut ChaCha8Rng, d: usize) -> JointVector {
    JointVector::from_fn(d, |_, _| r.sample(StandardNormal))
}

fn cosine(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.dot(b) / (a.norm() * b.norm())
}

fn planar2() -> Arc<KinematicChain> {
    Arc::new(KinematicChain::planar_arm(&[1.0, 1.0], &[1.0, 1.0], 0.05, 3.0).unwrap())
}

fn small_solver() -> SolverOptions {
    SolverOptions {
        control_points: 5,
        samples: 40,
        ..SolverOptions::default()
    }
}

fn flat_space_geodesics() -> (bool, String) {
    let start = Instant::now();
    let mut r = rng(1);
    let opts = SolverOptions::default();
    let (mut worst_dev, mut worst_ivp) = (0.0f64, 0.0f64);
    for i in 0..100 {
        let d = [2, 4, 8][i % 3];
        let metric = ConstantMetric::identity(d);
        let q_i = uniform_vec(&mut r, d, -2.0, 2.0);
        let q_f = uniform_vec(&mut r, d, -2.0, 2.0);
        let chord = init_spline(&q_i, &q_f, opts.control_points).unwrap();
        let noise = JointMatrix::from_fn(opts.control_points, d, |_, _| 0.3 * r.sample::<f64, _>(StandardNormal));
        let start_spline = GeodesicSpline::new(q_i.clone(), q_f.clone(), chord.control_points() + noise).unwrap();
        let sol = optimize(&start_spline, &metric, &opts).unwrap();
        for k in 0..=1000 {
            let tau = k as f64 / 1000.0;
            let line = &q_i + (&q_f - &q_i) * tau;
            worst_dev = worst_dev.max((sol.spline.position(tau) - line).amax());
        }
        let ivp = integrate_geodesic_ivp(&metric, &q_i, &(&q_f - &q_i), 1.0, 0.01).unwrap().into_result().unwrap();
        let end = &ivp.samples().last().unwrap().q;
        worst_ivp = worst_ivp.max((end - &q_f).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    (
        worst_dev < 1e-3 && worst_ivp < 1e-8 && secs < 10.0,
        format!("max chord deviation {worst_dev:.2e} (< 1e-3), IVP endpoint error {worst_ivp:.2e} (< 1e-8), {secs:.2} s (< 10 s)"),
    )
}

fn kinetic(chain: &Arc<KinematicChain>) -> CombinedMetric {
    CombinedMetric::new(chain.clone(), Ambient::Kinetic, Vec::new()).unwrap()
}

fn norm_conservation() -> (bool, String) {
    let metric = kinetic(&planar2());
    let mut r = rng(2);
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let q0 = uniform_vec(&mut r, 2, -1.5, 1.5);
        let v0 = gaussian_vec(&mut r, 2).normalize();
        let traj = integrate_geodesic_ivp(&metric, &q0, &v0, 2.0, 1e-3).unwrap().into_result().unwrap();
        let n0 = riemannian_norm(&metric, &q0, &v0).unwrap();
        for s in traj.samples() {
            let n = riemannian_norm(&metric, &s.q, &s.qdot).unwrap();
            worst = worst.max((n - n0).abs() / n0);
        }
    }
    (worst < 1e-4, format!("max relative norm drift {worst:.2e} over 10 geodesics (< 1e-4)"))
}

/// Geodesic from `q_i` to `q_f` in unit time by Newton iteration on the
/// initial velocity. Returns the positions at `steps + 1` uniform times.
fn shoot<M: MetricField>(metric: &M, q_i: &JointVector, q_f: &JointVector, v0: JointVector, steps: usize) -> Option<Vec<JointVector>> {
    let dt = 1.0 / steps as f64;
    let end = |v: &JointVector| -> Option<JointVector> {
        let out = integrate_geodesic_ivp(metric, q_i, v, 1.0, dt).ok()?.into_result().ok()?;
        Some(out.samples().last()?.q.clone())
    };
    let d = q_i.len();
    let mut v = v0;
    for _ in 0..30 {
        let res = end(&v)? - q_f;
        if res.amax() < 1e-11 {
            let traj = integrate_geodesic_ivp(metric, q_i, &v, 1.0, dt).ok()?.into_result().ok()?;
            return Some(traj.samples().iter().map(|s| s.q.clone()).collect());
        }
        let h = 1e-6;
        let mut jac = JointMatrix::zeros(d, d);
        for j in 0..d {
            let mut vp = v.clone();
            let mut vm = v.clone();
            vp[j] += h;
            vm[j] -= h;
            jac.set_column(j, &((end(&vp)? - end(&vm)?) / (2.0 * h)));
        }
        v -= jac.lu().solve(&res)?;
    }
    None
}

fn spline_shooting_agreement() -> (bool, String) {
    let chain = planar2();
    let metric = kinetic(&chain);
    let opts = SolverOptions::default();
    let mut r = rng(3);
    let steps = 500;
    let mut worst = 0.0f64;
    let mut compared = 0;
    for i in 0..20 {
        let q_i = uniform_vec(&mut r, 2, -1.0, 1.0);
        let delta = JointVector::from_fn(2, |_, _| {
            let m: f64 = r.random_range(0.5..1.2);
            if r.random_bool(0.5) { m } else { -m }
        });
        let q_f = &q_i + delta;
        let sol = solve(&q_i, &q_f, &metric, &opts, i).unwrap();
        let reference = shoot(&metric, &q_i, &q_f, &q_f - &q_i, steps)
            .or_else(|| shoot(&metric, &q_i, &q_f, sol.spline.velocity(0.0), steps));
        let Some(reference) = reference else {
            return (false, format!("shooting did not converge for pair {i}"));
        };
        for j in 0..2 {
            let lo = reference.iter().map(|q| q[j]).fold(f64::INFINITY, f64::min);
            let hi = reference.iter().map(|q| q[j]).fold(f64::NEG_INFINITY, f64::max);
            let dev = reference
                .iter()
                .enumerate()
                .map(|(k, q)| (sol.spline.position(k as f64 / steps as f64)[j] - q[j]).abs())
                .fold(0.0, f64::max);
            worst = worst.max(dev / (hi - lo));
        }
        compared += 1;
    }
    (
        worst < 0.02,
        format!("{compared} pairs, max joint deviation {:.3}% of the joint range (< 2%)", 100.0 * worst),
    )
}

// ---- randomized avoidance scenarios ----

fn endpoints_clear(s: &Scenario, margin: f64) -> bool {
    let Ok(probe) = CombinedMetric::new(s.chain.clone(), Ambient::Kinetic, s.regions.clone()) else {
        return false;
    };
    s.keypoints.iter().all(|q| {
        probe
            .probe(q)
            .map(|ps| ps.iter().all(|p| p.distance > margin))
            .unwrap_or(false)
    })
}

fn finish(mut s: Scenario, seed: u64, opts: SolverOptions) -> Option<Scenario> {
    s.seed = seed;
    s.solver = opts;
    (s.validate().is_ok() && endpoints_clear(&s, 0.05)).then_some(s)
}

/// Joint-space disk lying across the chord between the endpoints.
fn blocked_disk(r: &mut ChaCha8Rng, barrier: Barrier, seed: u64) -> Scenario {
    loop {
        let q_i = uniform_vec(r, 2, -1.2, 1.2);
        let ang: f64 = r.random_range(0.0..2.0 * PI);
        let dir = dvector![ang.cos(), ang.sin()];
        let q_f = &q_i + &dir * r.random_range(1.5..2.5);
        if q_f.amax() > 2.5 {
            continue;
        }
        let radius = r.random_range(0.2..0.4);
        let perp = dvector![-dir[1], dir[0]];
        let center = &q_i + (&q_f - &q_i) * r.random_range(0.35..0.65) + perp * (radius * r.random_range(-0.3..0.3));
        let regions = vec![
            AvoidRegion::joint_limits(barrier),
            AvoidRegion::new("disk", RegionGeometry::JointBall { center, radius }, barrier),
        ];
        let s = Scenario::new("disk", planar2(), regions, vec![q_i, q_f]);
        if let Some(s) = finish(s, seed, small_solver()) {
            return s;
        }
    }
}

/// Task-space obstacle placed on the end-effector path of the joint chord.
fn blocked_task(r: &mut ChaCha8Rng, kind: usize, barrier: Barrier, seed: u64) -> Scenario {
    let chain = planar2();
    loop {
        let q_i = uniform_vec(r, 2, -2.0, 2.0);
        let q_f = uniform_vec(r, 2, -2.0, 2.0);
        if (&q_f - &q_i).norm() < 1.0 {
            continue;
        }
        let mid = tool_position(&chain, &((&q_i + &q_f) * 0.5)).unwrap();
        let shape = match kind % 3 {
            0 => Shape::sphere(mid, r.random_range(0.08..0.18)).unwrap(),
            1 => {
                let h = Vector3::new(r.random_range(0.04..0.1), r.random_range(0.04..0.1), r.random_range(0.04..0.1));
                let pose = Isometry3::new(mid, Vector3::z() * r.random_range(0.0..PI));
                Shape::cuboid(h, pose).unwrap()
            }
            _ => Shape::capsule(mid - Vector3::z() * 0.3, mid + Vector3::z() * 0.3, r.random_range(0.05..0.1)).unwrap(),
        };
        let regions = vec![
            AvoidRegion::joint_limits(barrier),
            AvoidRegion::new("obstacle", RegionGeometry::Task { shape, capsules: Vec::new() }, barrier),
        ];
        let s = Scenario::new("task", chain.clone(), regions, vec![q_i, q_f]);
        if let Some(s) = finish(s, seed, small_solver()) {
            return s;
        }
    }
}

fn limits_box(r: &mut ChaCha8Rng, barrier: Barrier, seed: u64) -> Scenario {
    loop {
        let limit = r.random_range(0.8..1.6);
        let chain = Arc::new(KinematicChain::planar_arm(&[1.0, 1.0], &[1.0, 1.0], 0.05, limit).unwrap());
        let q_i = uniform_vec(r, 2, -0.9 * limit, 0.9 * limit);
        let q_f = uniform_vec(r, 2, -0.9 * limit, 0.9 * limit);
        let s = Scenario::new("limits", chain, vec![AvoidRegion::joint_limits(barrier)], vec![q_i, q_f]);
        if let Some(s) = finish(s, seed, small_solver()) {
            return s;
        }
    }
}

fn self_collision(r: &mut ChaCha8Rng, barrier: Barrier, seed: u64) -> Scenario {
    let chain = Arc::new(KinematicChain::planar_arm(&[0.6, 0.5, 0.4], &[1.0, 1.0, 1.0], 0.05, 2.8).unwrap());
    loop {
        let q_i = uniform_vec(r, 3, -2.4, 2.4);
        let q_f = uniform_vec(r, 3, -2.4, 2.4);
        let regions = vec![AvoidRegion::joint_limits(barrier), AvoidRegion::self_collision(barrier)];
        let s = Scenario::new("self", chain.clone(), regions, vec![q_i, q_f]);
        if let Some(s) = finish(s, seed, small_solver()) {
            return s;
        }
    }
}

fn strict_avoidance() -> (bool, String) {
    let mut r = rng(4);
    let barrier = Barrier::inverse();
    let (mut solved, mut violating, mut failed) = (0, 0, 0);
    for i in 0..200u64 {
        let s = match i % 5 {
            0 => limits_box(&mut r, barrier, i),
            1 => blocked_disk(&mut r, barrier, i),
            2 => blocked_task(&mut r, (i / 5) as usize, barrier, i),
            3 => blocked_task(&mut r, (i / 5) as usize + 1, barrier, i),
            _ => self_collision(&mut r, barrier, i),
        };
        let out = run(&s);
        if !out.report.solved() {
            failed += 1;
            continue;
        }
        solved += 1;
        violating += usize::from(out.report.violations.any());
    }
    (
        violating == 0 && solved > 0,
        format!("{violating} of {solved} solved trajectories violate a region at 10x density ({failed} of 200 failed to solve)"),
    )
}

fn exponential_barrier_is_soft() -> (bool, String) {
    let n = 50;
    let mut r = rng(5);
    let seeds: Vec<u64> = (0..n).map(|_| r.random()).collect();
    let suite = |barrier: Barrier| -> (usize, usize) {
        let mut solved = 0;
        let mut violating = 0;
        for (i, &seed) in seeds.iter().enumerate() {
            let s = blocked_disk(&mut rng(seed), barrier, i as u64);
            let out = run(&s);
            if out.report.solved() {
                solved += 1;
                violating += usize::from(out.report.violations.any());
            }
        }
        (violating, solved)
    };
    let pct = |(v, s): (usize, usize)| if s == 0 { f64::NAN } else { 100.0 * v as f64 / s as f64 };
    let inv = suite(Barrier::inverse());
    let mut ok = inv.1 > 0 && inv.0 == 0;
    let mut cells = Vec::new();
    for sigma in [0.1, 0.5, 1.0] {
        for lambda in [0.05, 0.1, 0.2] {
            let exp = suite(Barrier::exponential(sigma, lambda).unwrap());
            ok &= exp.1 > 0 && exp.0 > 0;
            cells.push(format!("{:.0}", pct(exp)));
        }
    }
    (
        ok,
        format!(
            "{n} blocked chords: inverse {:.0}% violating; exponential % over sigma x lambda grid [{}]",
            pct(inv),
            cells.join(" ")
        ),
    )
}

fn directional_acceleration() -> (bool, String) {
    // half-plane region with an oblique boundary; `v` points from the
    // current position to the region
    let normal = dvector![0.6f64.cos(), 0.6f64.sin()];
    let n = normal.clone();
    let barrier = Barrier::inverse();
    let metric = FnMetric::new(2, move |q: &JointVector| {
        let away = &n * q.dot(&n);
        Ok(JointMatrix::identity(2, 2) + basis_change_metric(&away, &barrier)?)
    });
    let q = normal.clone();
    let v = -&normal;
    let perp = dvector![-normal[1], normal[0]];
    let mut mags = Vec::new();
    let mut worst_cos = 1.0f64;
    for k in 0..8 {
        let theta = k as f64 * PI / 8.0;
        let qdot = &v * theta.cos() + &perp * theta.sin();
        let a = geodesic_acceleration(&metric, &q, &qdot).unwrap();
        if a.norm() > 1e-6 {
            worst_cos = worst_cos.min(-a.dot(&v) / a.norm());
        }
        mags.push((theta, a.norm()));
    }
    let monotone = mags.windows(2).filter(|w| w[1].0 <= FRAC_PI_2 + 1e-12).all(|w| w[1].1 <= w[0].1);
    let at_right = mags.iter().find(|m| (m.0 - FRAC_PI_2).abs() < 1e-12).unwrap().1;
    (
        monotone && at_right < 1e-8 && worst_cos > 0.999,
        format!(
            "magnitude non-increasing on [0, pi/2]: {monotone}, |a| at pi/2 = {at_right:.1e} (< 1e-8), min cosine with -v {worst_cos:.6} (> 0.999)"
        ),
    )
}

fn pullback_direction_behavior() -> (bool, String) {
    // link lengths and elbow angle with J Jᵀ = I at the end-effector
    let chain = Arc::new(KinematicChain::planar_arm(&[2f64.sqrt(), 1.0], &[1.0, 1.0], 0.05, 3.0).unwrap());
    let q = dvector![0.3, 3.0 * FRAC_PI_4];
    let tip = tool_position(&chain, &q).unwrap();
    let jac = point_jacobian(&chain, &q, &chain.tool()).unwrap();
    let jinv = damped_pseudo_inverse(&jac, 0.0).unwrap();
    let reach = q[0] + q[1];
    // v_x from the end-effector towards the obstacle
    let v_x = Vector3::new(reach.cos(), reach.sin(), 0.0);
    let (radius, gap) = (1.0, 0.1);
    let sphere = Shape::sphere(tip + v_x * (radius + gap + 0.05), radius).unwrap();
    let region = AvoidRegion::new(
        "sphere",
        RegionGeometry::Task {
            shape: sphere,
            capsules: vec![CapsuleRef { link: 1, capsule: 0 }],
        },
        Barrier::exponential(1.0, 0.05).unwrap(),
    );
    let metric = CombinedMetric::flat(chain.clone(), vec![region]).unwrap();
    let mut rows = Vec::new();
    for k in 0..8 {
        let theta = k as f64 * FRAC_PI_4;
        let xdot = Vector3::new((reach + theta).cos(), (reach + theta).sin(), 0.0);
        let a = geodesic_acceleration(&metric, &q, &(&jinv * xdot)).unwrap();
        rows.push((k, &jac * a));
    }
    let max = rows.iter().map(|r| r.1.norm()).fold(0.0, f64::max);
    let parallel_cos = rows.iter().filter(|r| r.0 % 4 == 0).map(|r| cosine(&r.1, &-v_x)).fold(1.0, f64::min);
    let perp_ratio = rows.iter().filter(|r| r.0 % 4 == 2).map(|r| r.1.norm() / max).fold(0.0, f64::max);
    (
        parallel_cos > 0.9 && perp_ratio < 0.05,
        format!("cosine(J qdd, -v_x) for xdot || v_x: {parallel_cos:.4} (> 0.9); |J qdd| for xdot perp v_x: {perp_ratio:.4} of max (< 0.05)"),
    )
}

fn length_ordering() -> (bool, String) {
    let mut r = rng(8);
    let exp = Barrier::exponential(1.0, 0.1).unwrap();
    let opts = SolverOptions {
        restarts: 2,
        ..small_solver()
    };
    let (mut counted, mut ordered, mut minimal) = (0, 0, 0);
    for i in 0..20u64 {
        let seed: u64 = r.random();
        let build = |barrier: Barrier| {
            let mut s = if i % 2 == 0 {
                blocked_disk(&mut rng(seed), barrier, i)
            } else {
                blocked_task(&mut rng(seed), 0, barrier, i)
            };
            s.solver = opts;
            s
        };
        let mut m = build(exp);
        m.metric_mode = MetricMode::KineticOnly;
        let outs: Vec<_> = [m, build(exp), build(Barrier::inverse())].iter().map(run).collect();
        if !outs.iter().all(|o| o.report.status == Some(SolveStatus::Converged)) {
            continue;
        }
        let [lm, le, li] = [0, 1, 2].map(|k| outs[k].report.riemannian_length);
        counted += 1;
        // lengths of converged solves agree only to solver precision
        let tol = 1e-6;
        ordered += usize::from(lm <= le + tol && le <= li + tol);
        minimal += usize::from(lm <= le + tol && lm <= li + tol);
    }
    let frac = |k: usize| if counted == 0 { 0.0 } else { 100.0 * k as f64 / counted as f64 };
    (
        counted > 0 && frac(ordered) >= 90.0 && minimal == counted,
        format!(
            "{counted} of 20 scenarios converged in all modes; ordered {:.0}% (>= 90%), kinetic geodesic shortest {:.0}% (100%)",
            frac(ordered),
            frac(minimal)
        ),
    )
}

fn synthetic_chain(d: usize, r: &mut ChaCha8Rng) -> KinematicChain {
    let mut joints = Vec::new();
    let mut links = Vec::new();
    let mut prev = Vector3::new(0.0, 0.0, 0.2);
    for _ in 0..d {
        let axis = Unit::new_normalize(Vector3::new(r.sample(StandardNormal), r.sample(StandardNormal), r.sample(StandardNormal)));
        joints.push(Joint { axis, origin: prev, lower: -2.5, upper: 2.5 });
        let len = r.random_range(0.15..0.4);
        let end = Vector3::new(len, r.random_range(-0.05..0.05), r.random_range(-0.05..0.05));
        links.push(Link {
            mass: r.random_range(0.5..2.0),
            com: end * 0.5,
            inertia: Matrix3::from_diagonal(&Vector3::new(0.01, 0.02, 0.02)),
            capsules: vec![LinkCapsule { a: Vector3::zeros(), b: end, radius: 0.04 }],
        });
        prev = end;
    }
    KinematicChain::new(joints, links, LinkPoint::new(d - 1, prev), false).unwrap()
}

fn oracle_equivalences() -> (bool, String) {
    let mut r = rng(9);

    // two-link point-mass arm in closed form
    let mut mass_err = 0.0f64;
    for _ in 0..50 {
        let (l1, l2) = (r.random_range(0.3..2.0), r.random_range(0.3..2.0));
        let (m1, m2) = (r.random_range(0.2..3.0), r.random_range(0.2..3.0));
        let chain = KinematicChain::planar_arm(&[l1, l2], &[m1, m2], 0.05, 3.0).unwrap();
        let q = uniform_vec(&mut r, 2, -3.0, 3.0);
        let c2 = q[1].cos();
        let m12 = m2 * (l2 * l2 + l1 * l2 * c2);
        let expected = nalgebra::dmatrix![
            m1 * l1 * l1 + m2 * (l1 * l1 + l2 * l2 + 2.0 * l1 * l2 * c2), m12;
            m12, m2 * l2 * l2
        ];
        let got = mass_matrix(&chain, &q).unwrap();
        mass_err = mass_err.max((got - &expected).norm() / expected.norm());
    }

    let mut jac_err = 0.0f64;
    for d in 4..=8 {
        let chain = synthetic_chain(d, &mut r);
        for _ in 0..10 {
            let q = uniform_vec(&mut r, d, -2.0, 2.0);
            let link = r.random_range(0..d);
            let p = LinkPoint::new(link, Vector3::new(r.random_range(-0.2..0.2), r.random_range(-0.2..0.2), 0.1));
            let jac = point_jacobian(&chain, &q, &p).unwrap();
            let h = 1e-6;
            for j in 0..d {
                let mut qp = q.clone();
                let mut qm = q.clone();
                qp[j] += h;
                qm[j] -= h;
                let xp = point_position(&forward_kinematics(&chain, &qp).unwrap(), &p);
                let xm = point_position(&forward_kinematics(&chain, &qm).unwrap(), &p);
                jac_err = jac_err.max(((xp - xm) / (2.0 * h) - jac.column(j)).amax());
            }
        }
    }

    let mut sdf_err = 0.0f64;
    for i in 0..300 {
        let center = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
        let shape = match i % 3 {
            0 => Shape::sphere(center, r.random_range(0.1..0.8)).unwrap(),
            1 => Shape::capsule(center, center + Vector3::new(0.5, -0.3, 0.2), r.random_range(0.05..0.4)).unwrap(),
            _ => {
                let h = Vector3::new(r.random_range(0.1..0.6), r.random_range(0.1..0.6), r.random_range(0.1..0.6));
                let rot = Vector3::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0));
                Shape::cuboid(h, Isometry3::new(center, rot)).unwrap()
            }
        };
        let x = Vector3::new(r.random_range(-2.5..2.5), r.random_range(-2.5..2.5), r.random_range(-2.5..2.5));
        let cp = closest_point(&shape, &x);
        let s = sdf(&shape, &x);
        sdf_err = sdf_err.max(((x - cp).norm() - s.abs()).abs()).max(sdf(&shape, &cp).abs());
    }

    let mut barrier_err = 0.0f64;
    for _ in 0..200 {
        let sigma = r.random_range(0.1..3.0);
        let lambda = r.random_range(0.05..1.0);
        for (b, s) in [
            (Barrier::exponential(sigma, lambda).unwrap(), lambda * r.random_range(0.2..2.5)),
            (Barrier::logarithmic(sigma).unwrap(), r.random_range(0.05..3.0)),
            (Barrier::inverse_power(sigma, r.random_range(1..4)).unwrap(), r.random_range(0.05..3.0)),
        ] {
            let h = 1e-5 * s;
            let fd = (b.value(s + h).unwrap() - b.value(s - h).unwrap()) / (2.0 * h);
            let g = b.gradient(s).unwrap();
            barrier_err = barrier_err.max((fd - g).abs() / g.abs());
        }
    }

    let mut gamma_max = 0.0f64;
    for d in 2..=8 {
        let a = JointMatrix::from_fn(d, d, |_, _| r.random_range(-1.0..1.0));
        let spd = &a * a.transpose() + JointMatrix::identity(d, d);
        let q = uniform_vec(&mut r, d, -2.0, 2.0);
        let constant = ConstantMetric::new(spd.clone()).unwrap();
        let through_fd = FnMetric::new(d, move |_| Ok(spd.clone()));
        gamma_max = gamma_max
            .max(christoffel(&constant, &q).unwrap().max_abs())
            .max(christoffel(&through_fd, &q).unwrap().max_abs());
    }

    (
        mass_err < 1e-8 && jac_err < 1e-6 && sdf_err < 1e-10 && barrier_err < 1e-6 && gamma_max < 1e-9,
        format!(
            "mass matrix rel {mass_err:.1e} (< 1e-8), Jacobian {jac_err:.1e} (< 1e-6), SDF/closest point {sdf_err:.1e} (< 1e-10), barrier gradient rel {barrier_err:.1e} (< 1e-6), constant-metric Christoffel {gamma_max:.1e} (< 1e-9)"
        ),
    )
}

fn eight_dof_scenario() -> Scenario {
    let mut r = rng(10);
    let chain = Arc::new(synthetic_chain(8, &mut r));
    let q_i = JointVector::from_fn(8, |i, _| 0.4 * (i as f64).sin());
    let q_f = JointVector::from_fn(8, |i, _| 0.6 * (i as f64 + 1.0).cos());
    let mid = tool_position(&chain, &((&q_i + &q_f) * 0.5)).unwrap();
    let barrier = Barrier::inverse();
    let regions = vec![
        AvoidRegion::joint_limits(barrier),
        AvoidRegion::new(
            "sphere",
            RegionGeometry::Task { shape: Shape::sphere(mid, 0.08).unwrap(), capsules: Vec::new() },
            barrier,
        ),
        AvoidRegion::new(
            "ball",
            RegionGeometry::JointBall { center: (&q_i + &q_f) * 0.5 + JointVector::repeat(8, 0.05), radius: 0.2 },
            barrier,
        ),
    ];
    let mut s = Scenario::new("eight_dof", chain, regions, vec![q_i, q_f]);
    s.seed = 42;
    s
}

fn performance_and_determinism() -> (bool, String) {
    let s = eight_dof_scenario();
    if let Err(e) = s.validate() {
        return (false, format!("invalid benchmark scenario: {e}"));
    }
    let metric = s.metric().unwrap();
    let start = Instant::now();
    let sol = solve(&s.keypoints[0], &s.keypoints[1], &metric, &s.solver, s.seed);
    let secs = start.elapsed().as_secs_f64();
    let sol = match sol {
        Ok(sol) => sol,
        Err(e) => return (false, format!("solve failed: {e}")),
    };

    let render = || {
        let out = run(&s);
        let traj = out.trajectory.as_ref().map(|t| trajectory_table(t, &out.check_names, &out.distances));
        (report_json(&geomotion::runner::RunReport::from_reports(vec![out.report.clone()])), traj)
    };
    let identical = render() == render();
    (
        secs < 5.0 && identical,
        format!(
            "d=8, K=8, N=100, 3 regions: {secs:.2} s (< 5 s), {} iterations, status {:?}; repeated runs bit-identical: {identical}",
            sol.iterations, sol.status
        ),
    )
}
