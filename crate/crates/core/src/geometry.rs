//! Point/line/plane primitives behind the per-frame geometric features.
//!
//! All angles come from `arccos` of a dot product of unit vectors, with the
//! dot clamped to [-1, 1] first (floating-point dots of unit vectors can
//! exceed 1 by ulps). Degenerate configurations (coincident joints,
//! collinear plane vertices) are reported as errors here; the feature
//! assembly layer maps them to 0 so a noisy tracker cannot stall the
//! pipeline.

use crate::error::{Error, Result};

pub type Point = [f64; 3];

const DEGENERATE_EPS: f64 = 1e-12;

#[inline]
pub(crate) fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub(crate) fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub(crate) fn cross(a: Point, b: Point) -> Point {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
pub(crate) fn norm(a: Point) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn distance(a: Point, b: Point) -> f64 {
    norm(sub(a, b))
}

fn unit(v: Point, what: &'static str) -> Result<Point> {
    let n = norm(v);
    if n < DEGENERATE_EPS {
        return Err(Error::DegenerateGeometry(what));
    }
    Ok([v[0] / n, v[1] / n, v[2] / n])
}

fn clamped_acos(x: f64) -> f64 {
    x.clamp(-1.0, 1.0).acos()
}

/// Unit normal of the plane through `p1`, `p2`, `p3`:
/// `unit((p2-p1) x (p3-p1))`. Orientation follows the vertex order.
pub fn plane_normal(p1: Point, p2: Point, p3: Point) -> Result<Point> {
    unit(cross(sub(p2, p1), sub(p3, p1)), "collinear plane vertices")
}

/// Unit direction from `g1` to `g2`.
pub fn joint_orientation(g1: Point, g2: Point) -> Result<Point> {
    unit(sub(g2, g1), "coincident joints")
}

/// Perpendicular distance from `g` to the infinite line through `a` and `b`
/// (twice the triangle area over the base length).
pub fn joint_line_distance(g: Point, a: Point, b: Point) -> Result<f64> {
    let base = sub(b, a);
    let len = norm(base);
    if len < DEGENERATE_EPS {
        return Err(Error::DegenerateGeometry("degenerate line"));
    }
    Ok(norm(cross(sub(g, a), base)) / len)
}

/// Angle in [0, pi] between the directed lines `a1 -> b1` and `a2 -> b2`.
pub fn line_line_angle(a1: Point, b1: Point, a2: Point, b2: Point) -> Result<f64> {
    let u = joint_orientation(a1, b1)?;
    let v = joint_orientation(a2, b2)?;
    Ok(clamped_acos(dot(u, v)))
}

/// Signed distance from `g` to the plane through `p1`, `p2`, `p3`; the sign
/// follows the plane normal, so it carries body-side information.
pub fn joint_plane_distance(g: Point, p1: Point, p2: Point, p3: Point) -> Result<f64> {
    let n = plane_normal(p1, p2, p3)?;
    Ok(dot(sub(g, p1), n))
}

/// Angle in [0, pi] between a directed line and the plane NORMAL (0 when
/// the line is parallel to the normal, pi/2 when it lies in the plane).
pub fn line_plane_angle(
    a: Point,
    b: Point,
    p1: Point,
    p2: Point,
    p3: Point,
) -> Result<f64> {
    let u = joint_orientation(a, b)?;
    let n = plane_normal(p1, p2, p3)?;
    Ok(clamped_acos(dot(u, n)))
}

/// Angle in [0, pi] between the two plane normals. Sensitive to vertex
/// order: reordering vertices flips a normal and maps the angle to its
/// supplement.
pub fn plane_plane_angle(
    p1: Point,
    p2: Point,
    p3: Point,
    q1: Point,
    q2: Point,
    q3: Point,
) -> Result<f64> {
    let n1 = plane_normal(p1, p2, p3)?;
    let n2 = plane_normal(q1, q2, q3)?;
    Ok(clamped_acos(dot(n1, n2)))
}
