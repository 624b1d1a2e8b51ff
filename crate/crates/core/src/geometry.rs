//! Planar shapes, rigid poses, collision/containment tests and swept footprints.
//!
//! All tests treat shapes as closed sets: touching boundaries count as contact.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Default spacing between interpolated waypoints of a swept volume, in meters.
pub const DEFAULT_INTERP_STEP: f64 = 0.05;

// Absorbs float noise when a length is an exact multiple of the step.
const STEP_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("shape extent must be strictly positive and finite, got {0}")]
    BadExtent(f64),
    #[error("pose component is not finite")]
    NonFinitePose,
}

/// Wraps an angle into `[-π, π)`.
pub fn normalize_angle(a: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut r = a - two_pi * ((a + PI) / two_pi).floor();
    if r >= PI {
        r -= two_pi;
    }
    if r < -PI {
        r += two_pi;
    }
    r
}

/// Signed shortest angular difference `b - a`, in `[-π, π)`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    normalize_angle(b - a)
}

/// A rigid planar pose. `theta` is kept in `[-π, π)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Pose2 {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn try_new(x: f64, y: f64, theta: f64) -> Result<Self, GeometryError> {
        if !(x.is_finite() && y.is_finite() && theta.is_finite()) {
            return Err(GeometryError::NonFinitePose);
        }
        Ok(Self::new(x, y, theta))
    }

    pub fn identity() -> Self {
        Pose2 {
            x: 0.0,
            y: 0.0,
            theta: 0.0,
        }
    }

    /// `self ∘ other`: `other` expressed in the frame of `self`, mapped to the world.
    pub fn compose(&self, other: &Pose2) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            self.x + c * other.x - s * other.y,
            self.y + s * other.x + c * other.y,
            self.theta + other.theta,
        )
    }

    pub fn inverse(&self) -> Pose2 {
        let (s, c) = self.theta.sin_cos();
        Pose2::new(
            -(c * self.x + s * self.y),
            s * self.x - c * self.y,
            -self.theta,
        )
    }

    /// Pose of `other` relative to `self`.
    pub fn relative(&self, other: &Pose2) -> Pose2 {
        self.inverse().compose(other)
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Pose2 {
        Pose2 {
            x: self.x + dx,
            y: self.y + dy,
            theta: self.theta,
        }
    }

    pub fn distance(&self, other: &Pose2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn xy(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    /// Maps a point from this pose's local frame to the world.
    pub fn transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        [self.x + c * p[0] - s * p[1], self.y + s * p[0] + c * p[1]]
    }

    /// Maps a world point into this pose's local frame.
    pub fn inverse_transform_point(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.theta.sin_cos();
        let dx = p[0] - self.x;
        let dy = p[1] - self.y;
        [c * dx + s * dy, -s * dx + c * dy]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    /// Bitwise identity, used for cache stamps.
    pub fn bits(&self) -> [u64; 3] {
        [self.x.to_bits(), self.y.to_bits(), self.theta.to_bits()]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    Disc { radius: f64 },
    Rectangle { half_width: f64, half_height: f64 },
}

fn check_extent(v: f64) -> Result<f64, GeometryError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(GeometryError::BadExtent(v))
    }
}

impl Shape {
    pub fn disc(radius: f64) -> Result<Shape, GeometryError> {
        Ok(Shape::Disc {
            radius: check_extent(radius)?,
        })
    }

    pub fn rectangle(half_width: f64, half_height: f64) -> Result<Shape, GeometryError> {
        Ok(Shape::Rectangle {
            half_width: check_extent(half_width)?,
            half_height: check_extent(half_height)?,
        })
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        match *self {
            Shape::Disc { radius } => check_extent(radius).map(|_| ()),
            Shape::Rectangle {
                half_width,
                half_height,
            } => {
                check_extent(half_width)?;
                check_extent(half_height).map(|_| ())
            }
        }
    }

    /// Radius of the smallest origin-centered disc covering the shape.
    pub fn circumradius(&self) -> f64 {
        match *self {
            Shape::Disc { radius } => radius,
            Shape::Rectangle {
                half_width,
                half_height,
            } => half_width.hypot(half_height),
        }
    }

    pub fn at(&self, pose: Pose2) -> Footprint {
        Footprint { shape: *self, pose }
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn new(min: [f64; 2], max: [f64; 2]) -> Self {
        Aabb { min, max }
    }

    pub fn empty() -> Self {
        Aabb {
            min: [f64::INFINITY; 2],
            max: [f64::NEG_INFINITY; 2],
        }
    }

    pub fn overlaps(&self, o: &Aabb) -> bool {
        self.min[0] <= o.max[0]
            && o.min[0] <= self.max[0]
            && self.min[1] <= o.max[1]
            && o.min[1] <= self.max[1]
    }

    pub fn union(&self, o: &Aabb) -> Aabb {
        Aabb {
            min: [self.min[0].min(o.min[0]), self.min[1].min(o.min[1])],
            max: [self.max[0].max(o.max[0]), self.max[1].max(o.max[1])],
        }
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            min: [self.min[0] - r, self.min[1] - r],
            max: [self.max[0] + r, self.max[1] + r],
        }
    }

    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }
}

/// Workspace occupancy of one body.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub shape: Shape,
    pub pose: Pose2,
}

impl Footprint {
    pub fn new(shape: Shape, pose: Pose2) -> Self {
        Footprint { shape, pose }
    }

    pub fn aabb(&self) -> Aabb {
        let p = self.pose;
        match self.shape {
            Shape::Disc { radius } => {
                Aabb::new([p.x - radius, p.y - radius], [p.x + radius, p.y + radius])
            }
            Shape::Rectangle {
                half_width,
                half_height,
            } => {
                let (s, c) = p.theta.sin_cos();
                let ex = c.abs() * half_width + s.abs() * half_height;
                let ey = s.abs() * half_width + c.abs() * half_height;
                Aabb::new([p.x - ex, p.y - ey], [p.x + ex, p.y + ey])
            }
        }
    }

    /// Rectangle corners in counter-clockwise order; a disc yields its center.
    pub fn corners(&self) -> Vec<[f64; 2]> {
        match self.shape {
            Shape::Disc { .. } => vec![self.pose.xy()],
            Shape::Rectangle {
                half_width: w,
                half_height: h,
            } => [[-w, -h], [w, -h], [w, h], [-w, h]]
                .iter()
                .map(|&c| self.pose.transform_point(c))
                .collect(),
        }
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Footprint {
        Footprint {
            shape: self.shape,
            pose: self.pose.translated(dx, dy),
        }
    }

    /// Closed point-membership test.
    pub fn contains_point(&self, p: [f64; 2]) -> bool {
        match self.shape {
            Shape::Disc { radius } => {
                let dx = p[0] - self.pose.x;
                let dy = p[1] - self.pose.y;
                dx * dx + dy * dy <= radius * radius
            }
            Shape::Rectangle {
                half_width,
                half_height,
            } => {
                let l = self.pose.inverse_transform_point(p);
                l[0].abs() <= half_width && l[1].abs() <= half_height
            }
        }
    }
}

fn disc_rect(center: [f64; 2], radius: f64, rect: &Footprint, hw: f64, hh: f64) -> bool {
    let l = rect.pose.inverse_transform_point(center);
    let cx = l[0].clamp(-hw, hw);
    let cy = l[1].clamp(-hh, hh);
    let dx = l[0] - cx;
    let dy = l[1] - cy;
    dx * dx + dy * dy <= radius * radius
}

fn project(corners: &[[f64; 2]], axis: [f64; 2]) -> (f64, f64) {
    corners
        .iter()
        .map(|c| c[0] * axis[0] + c[1] * axis[1])
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        })
}

fn rect_rect(a: &Footprint, b: &Footprint) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    for pose in [a.pose, b.pose] {
        let (s, c) = pose.theta.sin_cos();
        for axis in [[c, s], [-s, c]] {
            let (alo, ahi) = project(&ca, axis);
            let (blo, bhi) = project(&cb, axis);
            if ahi < blo || bhi < alo {
                return false;
            }
        }
    }
    true
}

/// True iff the two closed footprints intersect.
pub fn collides(a: &Footprint, b: &Footprint) -> bool {
    match (a.shape, b.shape) {
        (Shape::Disc { radius: ra }, Shape::Disc { radius: rb }) => {
            let dx = a.pose.x - b.pose.x;
            let dy = a.pose.y - b.pose.y;
            let r = ra + rb;
            dx * dx + dy * dy <= r * r
        }
        (
            Shape::Disc { radius },
            Shape::Rectangle {
                half_width,
                half_height,
            },
        ) => disc_rect(a.pose.xy(), radius, b, half_width, half_height),
        (
            Shape::Rectangle {
                half_width,
                half_height,
            },
            Shape::Disc { radius },
        ) => disc_rect(b.pose.xy(), radius, a, half_width, half_height),
        (Shape::Rectangle { .. }, Shape::Rectangle { .. }) => rect_rect(a, b),
    }
}

/// True iff every point of `obj` lies inside `region`.
pub fn contains(region: &Footprint, obj: &Footprint) -> bool {
    match region.shape {
        Shape::Rectangle {
            half_width,
            half_height,
        } => match obj.shape {
            Shape::Disc { radius } => {
                let l = region.pose.inverse_transform_point(obj.pose.xy());
                l[0].abs() + radius <= half_width && l[1].abs() + radius <= half_height
            }
            Shape::Rectangle { .. } => obj.corners().iter().all(|&c| region.contains_point(c)),
        },
        Shape::Disc { radius } => match obj.shape {
            Shape::Disc { radius: r } => {
                region.pose.distance(&obj.pose) + r <= radius
            }
            Shape::Rectangle { .. } => obj.corners().iter().all(|&c| region.contains_point(c)),
        },
    }
}

/// Number of interpolation intervals needed to cover `length` at `step`.
pub fn interp_intervals(length: f64, step: f64) -> usize {
    if length <= 0.0 {
        return 0;
    }
    ((length / step) - STEP_SLACK).ceil().max(1.0) as usize
}

/// Evenly spaced points on `a → b`, endpoints included.
pub fn interpolate_segment(a: [f64; 2], b: [f64; 2], step: f64) -> Vec<[f64; 2]> {
    let len = (b[0] - a[0]).hypot(b[1] - a[1]);
    let n = interp_intervals(len, step);
    if n == 0 {
        return vec![a];
    }
    (0..=n)
        .map(|i| {
            let t = i as f64 / n as f64;
            [a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t]
        })
        .collect()
}

/// An object rigidly held by the robot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Attachment {
    pub shape: Shape,
    /// Object pose in the robot frame.
    pub grasp: Pose2,
}

impl Attachment {
    /// Farthest distance any point of the object reaches from the robot center.
    pub fn lever(&self) -> f64 {
        self.grasp.x.hypot(self.grasp.y) + self.shape.circumradius()
    }

    pub fn footprint_at(&self, robot: &Pose2) -> Footprint {
        Footprint::new(self.shape, robot.compose(&self.grasp))
    }
}

/// Robot (plus optional held object) footprints at every interpolated waypoint of a path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweptVolume {
    pub robot: Shape,
    pub attached: Option<Attachment>,
    /// Robot poses at each waypoint.
    pub poses: Vec<Pose2>,
    bounds: Aabb,
}

impl SweptVolume {
    pub fn waypoint_count(&self) -> usize {
        self.poses.len()
    }

    /// Footprints contributed by waypoint `i`: robot first, then the held object.
    pub fn footprints_at(&self, i: usize) -> Vec<Footprint> {
        let p = self.poses[i];
        let mut v = vec![Footprint::new(self.robot, p)];
        if let Some(a) = &self.attached {
            v.push(a.footprint_at(&p));
        }
        v
    }

    pub fn footprints(&self) -> impl Iterator<Item = Footprint> + '_ {
        self.poses.iter().flat_map(move |p| {
            let robot = Footprint::new(self.robot, *p);
            let held = self.attached.map(|a| a.footprint_at(p));
            std::iter::once(robot).chain(held)
        })
    }

    pub fn aabb(&self) -> Aabb {
        self.bounds
    }

    /// True iff any waypoint footprint intersects `other`.
    pub fn collides_with(&self, other: &Footprint) -> bool {
        let ob = other.aabb();
        if !self.bounds.overlaps(&ob) {
            return false;
        }
        self.footprints()
            .any(|f| f.aabb().overlaps(&ob) && collides(&f, other))
    }

    /// Minimum euclidean distance between robot waypoint positions and `p`.
    pub fn min_waypoint_distance(&self, p: [f64; 2]) -> f64 {
        self.poses
            .iter()
            .map(|q| (q.x - p[0]).hypot(q.y - p[1]))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Interpolates `path` so consecutive waypoint footprints move by at most `step`.
pub fn sweep(path: &[Pose2], robot: Shape, attached: Option<Attachment>, step: f64) -> SweptVolume {
    assert!(!path.is_empty(), "sweep requires a nonempty path");
    let lever = attached.map_or(0.0, |a| a.lever());
    let mut poses = vec![path[0]];
    for w in path.windows(2) {
        let (a, b) = (w[0], w[1]);
        let lin = a.distance(&b);
        let dth = angle_diff(a.theta, b.theta);
        let n = interp_intervals(lin.max(dth.abs() * lever), step);
        if n == 0 {
            if a != b {
                poses.push(b);
            }
            continue;
        }
        for i in 1..=n {
            let t = i as f64 / n as f64;
            poses.push(Pose2::new(
                a.x + (b.x - a.x) * t,
                a.y + (b.y - a.y) * t,
                a.theta + dth * t,
            ));
        }
    }
    let mut bounds = Aabb::empty();
    for p in &poses {
        bounds = bounds.union(&Footprint::new(robot, *p).aabb());
        if let Some(a) = &attached {
            bounds = bounds.union(&a.footprint_at(p).aabb());
        }
    }
    SweptVolume {
        robot,
        attached,
        poses,
        bounds,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn disc(r: f64, x: f64, y: f64) -> Footprint {
        Shape::disc(r).unwrap().at(Pose2::new(x, y, 0.0))
    }

    fn rect(w: f64, h: f64, x: f64, y: f64, th: f64) -> Footprint {
        Shape::rectangle(w / 2.0, h / 2.0)
            .unwrap()
            .at(Pose2::new(x, y, th))
    }

    // Grid sampling of both areas at the given resolution.
    fn sampled_overlap(a: &Footprint, b: &Footprint, res: f64) -> bool {
        let bb = a.aabb();
        let nx = (bb.width() / res).ceil() as usize + 1;
        let ny = (bb.height() / res).ceil() as usize + 1;
        for i in 0..nx {
            for j in 0..ny {
                let p = [bb.min[0] + i as f64 * res, bb.min[1] + j as f64 * res];
                if a.contains_point(p) && b.contains_point(p) {
                    return true;
                }
            }
        }
        false
    }

    #[test]
    fn disc_disc_separation_and_tangency() {
        assert!(!collides(&disc(1.0, 0.0, 0.0), &disc(1.0, 3.0, 0.0)));
        assert!(collides(&disc(1.0, 0.0, 0.0), &disc(1.0, 2.0, 0.0)));
    }

    #[test]
    fn rotated_square_vs_small_disc() {
        // Corner of the rotated 2x2 square reaches sqrt(2) ≈ 1.4142 on the x axis.
        let r = rect(2.0, 2.0, 0.0, 0.0, PI / 4.0);
        let d = disc(0.1, 1.35, 0.0);
        let oracle = sampled_overlap(&d, &r, 1e-3);
        assert!(oracle);
        assert_eq!(collides(&r, &d), oracle);
        let far = disc(0.1, 1.55, 0.0);
        assert!(!sampled_overlap(&far, &r, 1e-3));
        assert!(!collides(&r, &far));
    }

    #[test]
    fn rect_rect_sat() {
        let a = rect(2.0, 2.0, 0.0, 0.0, 0.0);
        assert!(collides(&a, &rect(2.0, 2.0, 2.0, 0.0, 0.0)));
        assert!(!collides(&a, &rect(2.0, 2.0, 2.01, 0.0, 0.0)));
        // Diamond just clear of the square's corner.
        let diamond = rect(2.0, 2.0, 1.0 + 2f64.sqrt() + 0.01, 0.0, PI / 4.0);
        assert!(!collides(&a, &diamond));
        let diamond = rect(2.0, 2.0, 1.0 + 2f64.sqrt() - 0.01, 0.0, PI / 4.0);
        assert!(collides(&a, &diamond));
    }

    #[test]
    fn containment_examples() {
        let region = rect(10.0, 10.0, 0.0, 0.0, 0.0);
        assert!(contains(&region, &disc(1.0, 0.0, 0.0)));
        assert!(!contains(&region, &disc(1.0, 4.5, 0.0)));
        assert!(contains(&region, &disc(1.0, 4.0, 0.0)));
    }

    #[test]
    fn rotated_rectangle_near_corner() {
        let region = rect(10.0, 10.0, 0.0, 0.0, 0.0);
        let obj = rect(1.0, 0.4, 4.3, 4.3, 0.3);
        let oracle = obj.corners().iter().all(|&c| region.contains_point(c));
        assert_eq!(contains(&region, &obj), oracle);
        let obj = rect(1.0, 0.4, 4.6, 4.3, 0.3);
        let oracle = obj.corners().iter().all(|&c| region.contains_point(c));
        assert!(!oracle);
        assert_eq!(contains(&region, &obj), oracle);
    }

    #[test]
    fn containment_is_not_collision() {
        let region = rect(10.0, 10.0, 0.0, 0.0, 0.0);
        let obj = disc(0.5, 1.0, 1.0);
        assert!(contains(&region, &obj));
        // The region overlaps the object as an area but is not an obstacle;
        // the two predicates answer different questions.
        assert!(collides(&region, &obj));
        let outside = disc(0.5, 20.0, 0.0);
        assert!(!contains(&region, &outside) && !collides(&region, &outside));
    }

    #[test]
    fn sweep_waypoint_counts() {
        let robot = Shape::disc(0.3).unwrap();
        let v = sweep(&[Pose2::new(1.0, 1.0, 0.0)], robot, None, DEFAULT_INTERP_STEP);
        assert_eq!(v.waypoint_count(), 1);
        let l = 1.03;
        let v = sweep(
            &[Pose2::new(0.0, 0.0, 0.0), Pose2::new(l, 0.0, 0.0)],
            robot,
            None,
            DEFAULT_INTERP_STEP,
        );
        assert_eq!(v.waypoint_count(), (l / DEFAULT_INTERP_STEP).ceil() as usize + 1);
    }

    #[test]
    fn sweep_with_attachment_places_object_by_grasp() {
        let robot = Shape::disc(0.3).unwrap();
        let att = Attachment {
            shape: Shape::disc(0.2).unwrap(),
            grasp: Pose2::new(0.55, 0.0, 0.0),
        };
        let v = sweep(&[Pose2::new(1.0, 1.0, PI / 2.0)], robot, Some(att), 0.05);
        let fps = v.footprints_at(0);
        assert_eq!(fps.len(), 2);
        assert!((fps[1].pose.x - 1.0).abs() < 1e-12);
        assert!((fps[1].pose.y - 1.55).abs() < 1e-12);
    }

    #[test]
    fn angle_normalization_range() {
        assert_eq!(normalize_angle(PI), -PI);
        assert!((normalize_angle(3.0 * PI + 0.1) - (-PI + 0.1)).abs() < 1e-12);
        for k in -50..50 {
            let a = normalize_angle(k as f64 * 0.37);
            assert!((-PI..PI).contains(&a));
        }
    }

    fn arb_shape() -> impl Strategy<Value = Shape> {
        prop_oneof![
            (0.05f64..2.0).prop_map(|r| Shape::Disc { radius: r }),
            (0.05f64..2.0, 0.05f64..2.0).prop_map(|(w, h)| Shape::Rectangle {
                half_width: w,
                half_height: h
            }),
        ]
    }

    fn arb_fp() -> impl Strategy<Value = Footprint> {
        (arb_shape(), -3.0f64..3.0, -3.0f64..3.0, -4.0f64..4.0)
            .prop_map(|(s, x, y, t)| s.at(Pose2::new(x, y, t)))
    }

    proptest! {
        #[test]
        fn collides_is_symmetric(a in arb_fp(), b in arb_fp()) {
            prop_assert_eq!(collides(&a, &b), collides(&b, &a));
        }

        #[test]
        fn collides_is_translation_invariant(a in arb_fp(), b in arb_fp(), dx in -5.0f64..5.0, dy in -5.0f64..5.0) {
            // Skip configurations within float noise of tangency.
            let base = collides(&a, &b);
            let moved = collides(&a.translated(dx, dy), &b.translated(dx, dy));
            let nudged_in = collides(&a, &b.translated(1e-9, 0.0)) == base
                && collides(&a, &b.translated(-1e-9, 0.0)) == base
                && collides(&a, &b.translated(0.0, 1e-9)) == base
                && collides(&a, &b.translated(0.0, -1e-9)) == base;
            if nudged_in {
                prop_assert_eq!(base, moved);
            }
        }

        #[test]
        fn sweep_collision_equals_any_waypoint(
            xs in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..5),
            obs in arb_fp(),
        ) {
            let path: Vec<Pose2> = xs.iter().map(|&(x, y)| Pose2::new(x, y, 0.0)).collect();
            let att = Attachment { shape: Shape::Disc { radius: 0.2 }, grasp: Pose2::new(0.55, 0.0, 0.0) };
            let v = sweep(&path, Shape::Disc { radius: 0.3 }, Some(att), 0.05);
            let brute = (0..v.waypoint_count())
                .any(|i| v.footprints_at(i).iter().any(|f| collides(f, &obs)));
            prop_assert_eq!(v.collides_with(&obs), brute);
        }
    }
}
