//! Signed distance functions of collision primitives and closest-point
//! queries between a posed chain and obstacles or between its own links.

use nalgebra::{Isometry3, Point3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{forward_kinematics, KinematicChain, LinkPoint};
use crate::JointVector;

/// Default distance below which self-collision pairs are reported.
pub const DEFAULT_ACTIVATION_DISTANCE: f64 = 0.5;

const DEGENERATE: f64 = 1e-14;

#[derive(Clone, Debug, PartialEq)]
pub enum ShapeKind {
    Sphere { radius: f64 },
    /// Segment endpoints in the shape frame.
    Capsule { a: Vector3<f64>, b: Vector3<f64>, radius: f64 },
    Cuboid { half_extents: Vector3<f64> },
}

/// A collision primitive placed in the world.
#[derive(Clone, Debug, PartialEq)]
pub struct Shape {
    pub kind: ShapeKind,
    pub pose: Isometry3<f64>,
}

impl Shape {
    pub fn new(kind: ShapeKind, pose: Isometry3<f64>) -> Result<Self> {
        let ok = match &kind {
            ShapeKind::Sphere { radius } | ShapeKind::Capsule { radius, .. } => *radius > 0.0,
            ShapeKind::Cuboid { half_extents } => half_extents.iter().all(|h| *h > 0.0),
        };
        if !ok {
            return Err(Error::InvalidArgument(
                "shape radius and half-extents must be positive".into(),
            ));
        }
        Ok(Self { kind, pose })
    }

    pub fn sphere(center: Vector3<f64>, radius: f64) -> Result<Self> {
        Self::new(ShapeKind::Sphere { radius }, Isometry3::translation(center.x, center.y, center.z))
    }

    pub fn capsule(a: Vector3<f64>, b: Vector3<f64>, radius: f64) -> Result<Self> {
        Self::new(ShapeKind::Capsule { a, b, radius }, Isometry3::identity())
    }

    pub fn cuboid(half_extents: Vector3<f64>, pose: Isometry3<f64>) -> Result<Self> {
        Self::new(ShapeKind::Cuboid { half_extents }, pose)
    }
}

/// Closest point on segment `[a, b]` to `p` and its parameter.
pub fn closest_on_segment(a: &Vector3<f64>, b: &Vector3<f64>, p: &Vector3<f64>) -> (f64, Vector3<f64>) {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 <= DEGENERATE {
        return (0.0, *a);
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (t, a + ab * t)
}

/// Closest points between segments `[p1, q1]` and `[p2, q2]`.
pub fn closest_between_segments(
    p1: &Vector3<f64>,
    q1: &Vector3<f64>,
    p2: &Vector3<f64>,
    q2: &Vector3<f64>,
) -> (Vector3<f64>, Vector3<f64>) {
    let d1 = q1 - p1;
    let d2 = q2 - p2;
    let r = p1 - p2;
    let a = d1.norm_squared();
    let e = d2.norm_squared();
    let f = d2.dot(&r);
    let (s, t);
    if a <= DEGENERATE && e <= DEGENERATE {
        return (*p1, *p2);
    }
    if a <= DEGENERATE {
        s = 0.0;
        t = (f / e).clamp(0.0, 1.0);
    } else {
        let c = d1.dot(&r);
        if e <= DEGENERATE {
            t = 0.0;
            s = (-c / a).clamp(0.0, 1.0);
        } else {
            let b = d1.dot(&d2);
            let denom = a * e - b * b;
            let mut s0 = if denom > DEGENERATE * a * e {
                ((b * f - c * e) / denom).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let mut t0 = (b * s0 + f) / e;
            if t0 < 0.0 {
                t0 = 0.0;
                s0 = (-c / a).clamp(0.0, 1.0);
            } else if t0 > 1.0 {
                t0 = 1.0;
                s0 = ((b - c) / a).clamp(0.0, 1.0);
            }
            s = s0;
            t = t0;
        }
    }
    (p1 + d1 * s, p2 + d2 * t)
}

fn cuboid_sdf_local(h: &Vector3<f64>, p: &Vector3<f64>) -> f64 {
    let q = p.abs() - h;
    let outside = q.sup(&Vector3::zeros()).norm();
    let inside = q.max().min(0.0);
    outside + inside
}

/// Signed distance from `x` to the shape surface (negative inside).
pub fn sdf(shape: &Shape, x: &Vector3<f64>) -> f64 {
    let p = shape.pose.inverse_transform_point(&Point3::from(*x)).coords;
    match &shape.kind {
        ShapeKind::Sphere { radius } => p.norm() - radius,
        ShapeKind::Capsule { a, b, radius } => {
            let (_, c) = closest_on_segment(a, b, &p);
            (p - c).norm() - radius
        }
        ShapeKind::Cuboid { half_extents } => cuboid_sdf_local(half_extents, &p),
    }
}

fn any_perpendicular(axis: &Vector3<f64>) -> Vector3<f64> {
    let n = axis.norm();
    if n <= DEGENERATE {
        return Vector3::x();
    }
    let u = axis / n;
    let seed = if u.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    (seed - u * u.dot(&seed)).normalize()
}

/// Nearest point on the shape surface to `x`.
///
/// Degenerate ties (a sphere center, a point on a capsule axis) resolve
/// towards +x, or the first axis perpendicular to the capsule segment.
pub fn closest_point(shape: &Shape, x: &Vector3<f64>) -> Vector3<f64> {
    let p = shape.pose.inverse_transform_point(&Point3::from(*x)).coords;
    let local = match &shape.kind {
        ShapeKind::Sphere { radius } => {
            let n = p.norm();
            if n <= DEGENERATE {
                Vector3::x() * *radius
            } else {
                p * (radius / n)
            }
        }
        ShapeKind::Capsule { a, b, radius } => {
            let (_, c) = closest_on_segment(a, b, &p);
            let off = p - c;
            let n = off.norm();
            let dir = if n <= DEGENERATE {
                any_perpendicular(&(b - a))
            } else {
                off / n
            };
            c + dir * *radius
        }
        ShapeKind::Cuboid { half_extents: h } => {
            let q = p.abs() - h;
            if q.max() > 0.0 {
                Vector3::new(
                    p.x.clamp(-h.x, h.x),
                    p.y.clamp(-h.y, h.y),
                    p.z.clamp(-h.z, h.z),
                )
            } else {
                // inside: project onto the nearest face, lowest axis on ties
                let mut axis = 0;
                for i in 1..3 {
                    if q[i] > q[axis] {
                        axis = i;
                    }
                }
                let mut out = p;
                out[axis] = if p[axis] < 0.0 { -h[axis] } else { h[axis] };
                out
            }
        }
    };
    shape.pose.transform_point(&Point3::from(local)).coords
}

/// Parameter and signed distance of the point of segment `[a, b]` with the
/// smallest signed distance to `shape`.
pub fn segment_shape_distance(shape: &Shape, a: &Vector3<f64>, b: &Vector3<f64>) -> (f64, f64) {
    match &shape.kind {
        ShapeKind::Sphere { radius } => {
            let c = shape.pose.translation.vector;
            let (t, p) = closest_on_segment(a, b, &c);
            (t, (p - c).norm() - radius)
        }
        ShapeKind::Capsule { a: ca, b: cb, radius } => {
            let wa = shape.pose * Point3::from(*ca);
            let wb = shape.pose * Point3::from(*cb);
            let (p, c) = closest_between_segments(a, b, &wa.coords, &wb.coords);
            let ab = b - a;
            let len2 = ab.norm_squared();
            let t = if len2 <= DEGENERATE { 0.0 } else { (p - a).dot(&ab) / len2 };
            (t.clamp(0.0, 1.0), (p - c).norm() - radius)
        }
        ShapeKind::Cuboid { .. } => {
            // the signed distance of a convex set is convex along a line
            let f = |t: f64| sdf(shape, &(a + (b - a) * t));
            golden_section_min(f, 0.0, 1.0, 1e-12)
        }
    }
}

fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - (b - a) * INV_PHI;
    let mut d = a + (b - a) * INV_PHI;
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * INV_PHI;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * INV_PHI;
            fd = f(d);
        }
    }
    // endpoints may beat the interior bracket when the minimum sits on them
    let mut best = (0.5 * (a + b), f(0.5 * (a + b)));
    for t in [lo, hi] {
        let v = f(t);
        if v < best.1 {
            best = (t, v);
        }
    }
    best
}

/// Closest pair between robot geometry and a region.
#[derive(Clone, Debug, PartialEq)]
pub struct ClosestPair {
    pub point_on_robot: Vector3<f64>,
    pub robot_point: LinkPoint,
    pub point_on_region: Vector3<f64>,
    /// Set when the region is itself a moving link (self-collision).
    pub region_point: Option<LinkPoint>,
    /// `point_on_robot − point_on_region`.
    pub direction: Vector3<f64>,
    /// Signed distance, negative when penetrating.
    pub distance: f64,
}

/// Reference to one collision capsule of a chain link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CapsuleRef {
    pub link: usize,
    pub capsule: usize,
}

/// Every collision capsule of the chain.
pub fn all_capsules(chain: &KinematicChain) -> Vec<CapsuleRef> {
    chain
        .links()
        .iter()
        .enumerate()
        .flat_map(|(link, l)| (0..l.capsules.len()).map(move |capsule| CapsuleRef { link, capsule }))
        .collect()
}

fn posed_capsule(
    chain: &KinematicChain,
    poses: &[Isometry3<f64>],
    c: CapsuleRef,
) -> Result<(Vector3<f64>, Vector3<f64>, f64)> {
    chain.check_link(c.link)?;
    let cap = chain.links()[c.link].capsules.get(c.capsule).ok_or_else(|| {
        Error::InvalidArgument(format!("link {} has no capsule {}", c.link, c.capsule))
    })?;
    let pose = &poses[c.link];
    Ok((
        pose.transform_point(&Point3::from(cap.a)).coords,
        pose.transform_point(&Point3::from(cap.b)).coords,
        cap.radius,
    ))
}

fn outward_normal(shape: &Shape, p: &Vector3<f64>, surface: &Vector3<f64>, signed: f64) -> Vector3<f64> {
    let off = p - surface;
    let n = off.norm();
    if n > DEGENERATE {
        if signed < 0.0 {
            -off / n
        } else {
            off / n
        }
    } else {
        // on the surface: fall back to the numerical gradient of the sdf
        let h = 1e-7;
        let g = Vector3::from_fn(|i, _| {
            let mut e = Vector3::zeros();
            e[i] = h;
            sdf(shape, &(p + e)) - sdf(shape, &(p - e))
        });
        let gn = g.norm();
        if gn > 0.0 {
            g / gn
        } else {
            Vector3::x()
        }
    }
}

/// Closest pair between a region shape and the chain's candidate capsules,
/// using precomputed link poses.
pub fn chain_region_query_with_poses(
    chain: &KinematicChain,
    poses: &[Isometry3<f64>],
    shape: &Shape,
    candidates: &[CapsuleRef],
) -> Result<ClosestPair> {
    let mut best: Option<(f64, CapsuleRef, Vector3<f64>, f64)> = None;
    for &c in candidates {
        let (a, b, radius) = posed_capsule(chain, poses, c)?;
        let (t, dist) = segment_shape_distance(shape, &a, &b);
        let dist = dist - radius;
        if best.as_ref().is_none_or(|(d, ..)| dist < *d) {
            best = Some((dist, c, a + (b - a) * t, radius));
        }
    }
    let (distance, cref, axis_point, radius) =
        best.ok_or_else(|| Error::InvalidArgument("region has no candidate capsules".into()))?;
    let surface = closest_point(shape, &axis_point);
    let n = outward_normal(shape, &axis_point, &surface, distance + radius);
    let on_robot = axis_point - n * radius;
    let local = poses[cref.link]
        .inverse_transform_point(&Point3::from(on_robot))
        .coords;
    Ok(ClosestPair {
        point_on_robot: on_robot,
        robot_point: LinkPoint::new(cref.link, local),
        point_on_region: surface,
        region_point: None,
        direction: n * distance,
        distance,
    })
}

/// Closest pair between a region shape and the chain posed at `q`.
pub fn chain_region_query(
    chain: &KinematicChain,
    q: &JointVector,
    shape: &Shape,
    candidates: &[CapsuleRef],
) -> Result<ClosestPair> {
    let poses = forward_kinematics(chain, q)?;
    chain_region_query_with_poses(chain, &poses, shape, candidates)
}

/// Minimal capsule distance between two non-adjacent links.
#[derive(Clone, Debug, PartialEq)]
pub struct SelfCollisionPair {
    /// Proximal link index.
    pub link_a: usize,
    /// Distal link index, `link_b >= link_a + 2`.
    pub link_b: usize,
    /// Robot side is `link_b`, region side is `link_a`.
    pub pair: ClosestPair,
}

/// Closest pairs of every non-adjacent link pair, without activation pruning.
pub fn self_collision_pairs_with_poses(
    chain: &KinematicChain,
    poses: &[Isometry3<f64>],
) -> Result<Vec<SelfCollisionPair>> {
    let links = chain.links();
    let mut out = Vec::new();
    for la in 0..links.len() {
        for lb in (la + 2)..links.len() {
            let mut best: Option<(f64, Vector3<f64>, Vector3<f64>, f64, f64)> = None;
            for ca in 0..links[la].capsules.len() {
                let (a0, a1, ra) = posed_capsule(chain, poses, CapsuleRef { link: la, capsule: ca })?;
                for cb in 0..links[lb].capsules.len() {
                    let (b0, b1, rb) =
                        posed_capsule(chain, poses, CapsuleRef { link: lb, capsule: cb })?;
                    let (pa, pb) = closest_between_segments(&a0, &a1, &b0, &b1);
                    let dist = (pb - pa).norm() - ra - rb;
                    if best.as_ref().is_none_or(|(d, ..)| dist < *d) {
                        best = Some((dist, pa, pb, ra, rb));
                    }
                }
            }
            if let Some((distance, pa, pb, ra, rb)) = best {
                let off = pb - pa;
                let n = if off.norm() > DEGENERATE {
                    off.normalize()
                } else {
                    Vector3::x()
                };
                let on_a = pa + n * ra;
                let on_b = pb - n * rb;
                let local_a = poses[la].inverse_transform_point(&Point3::from(on_a)).coords;
                let local_b = poses[lb].inverse_transform_point(&Point3::from(on_b)).coords;
                out.push(SelfCollisionPair {
                    link_a: la,
                    link_b: lb,
                    pair: ClosestPair {
                        point_on_robot: on_b,
                        robot_point: LinkPoint::new(lb, local_b),
                        point_on_region: on_a,
                        region_point: Some(LinkPoint::new(la, local_a)),
                        direction: n * distance,
                        distance,
                    },
                });
            }
        }
    }
    Ok(out)
}

/// Non-adjacent link pairs closer than `activation_distance`.
pub fn self_collision_query(
    chain: &KinematicChain,
    q: &JointVector,
    activation_distance: f64,
) -> Result<Vec<SelfCollisionPair>> {
    let poses = forward_kinematics(chain, q)?;
    Ok(self_collision_pairs_with_poses(chain, &poses)?
        .into_iter()
        .filter(|p| p.pair.distance < activation_distance)
        .collect())
}
