//! Planar two-link arm kinematics and exact link-versus-obstacle tests.
//!
//! Angles are in degrees. `theta1` is measured counter-clockwise from the +x
//! axis, `theta2` is the elbow angle measured counter-clockwise relative to
//! the first link. Both links have unit length and the base sits at the
//! origin, so `(0°, 90°)` is an L-shape with the tip at `(1, 1)`.
//!
//! Touching counts as intersecting everywhere in this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LINK_LENGTH: f64 = 1.0;
pub const THETA1_MIN: f64 = -90.0;
pub const THETA1_MAX: f64 = 90.0;
pub const THETA2_MIN: f64 = 5.0;
pub const THETA2_MAX: f64 = 150.0;

/// Workspace bounds that obstacles must stay within.
pub const WORKSPACE_X: (f64, f64) = (-1.0, 2.0);
pub const WORKSPACE_Y: (f64, f64) = (-2.0, 2.0);

/// Smallest permitted obstacle extent along either axis.
pub const MIN_OBSTACLE_SIZE: f64 = 0.15;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Linear interpolation; `t = 0` gives `self`.
    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub const fn new(a: Point, b: Point) -> Self {
        Segment { a, b }
    }

    pub fn reversed(self) -> Self {
        Segment::new(self.b, self.a)
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Euclidean distance from `p` to the closest point of the segment.
    pub fn distance_to_point(&self, p: Point) -> f64 {
        let dx = self.b.x - self.a.x;
        let dy = self.b.y - self.a.y;
        let len2 = dx * dx + dy * dy;
        if len2 == 0.0 {
            return self.a.distance(p);
        }
        let t = (((p.x - self.a.x) * dx + (p.y - self.a.y) * dy) / len2).clamp(0.0, 1.0);
        self.a.lerp(self.b, t).distance(p)
    }

    /// Closed segment-segment intersection (shared endpoints and collinear
    /// overlap both count).
    pub fn intersects(&self, other: &Segment) -> bool {
        let (p1, p2, p3, p4) = (self.a, self.b, other.a, other.b);
        let d1 = orientation(p3, p4, p1);
        let d2 = orientation(p3, p4, p2);
        let d3 = orientation(p1, p2, p3);
        let d4 = orientation(p1, p2, p4);

        if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
            && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
        {
            return true;
        }
        (d1 == 0.0 && on_segment(p3, p4, p1))
            || (d2 == 0.0 && on_segment(p3, p4, p2))
            || (d3 == 0.0 && on_segment(p1, p2, p3))
            || (d4 == 0.0 && on_segment(p1, p2, p4))
    }
}

fn orientation(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

// Assumes `p` is collinear with `a`-`b`.
fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// A two-joint arm configuration in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointAngles {
    pub theta1: f64,
    pub theta2: f64,
}

impl JointAngles {
    /// Checked constructor; rejects angles outside the joint limits.
    pub fn new(theta1: f64, theta2: f64) -> Result<Self> {
        let q = JointAngles { theta1, theta2 };
        q.check_range()?;
        Ok(q)
    }

    /// Builds angles without range checking, e.g. for probing beyond the limits.
    pub const fn new_unchecked(theta1: f64, theta2: f64) -> Self {
        JointAngles { theta1, theta2 }
    }

    pub fn in_range(&self) -> bool {
        (THETA1_MIN..=THETA1_MAX).contains(&self.theta1)
            && (THETA2_MIN..=THETA2_MAX).contains(&self.theta2)
    }

    pub fn check_range(&self) -> Result<()> {
        if self.in_range() {
            Ok(())
        } else {
            Err(Error::Range(format!(
                "joint angles ({}, {}) outside [{THETA1_MIN}, {THETA1_MAX}] x [{THETA2_MIN}, {THETA2_MAX}]",
                self.theta1, self.theta2
            )))
        }
    }

    pub fn distance(&self, other: &JointAngles) -> f64 {
        (self.theta1 - other.theta1).hypot(self.theta2 - other.theta2)
    }

    pub fn lerp(&self, other: &JointAngles, t: f64) -> JointAngles {
        JointAngles {
            theta1: self.theta1 + (other.theta1 - self.theta1) * t,
            theta2: self.theta2 + (other.theta2 - self.theta2) * t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArmPose {
    pub base: Point,
    pub elbow: Point,
    pub tip: Point,
}

impl ArmPose {
    pub fn links(&self) -> [Segment; 2] {
        [
            Segment::new(self.base, self.elbow),
            Segment::new(self.elbow, self.tip),
        ]
    }
}

pub fn forward_kinematics(q: JointAngles) -> Result<ArmPose> {
    q.check_range()?;
    Ok(pose_unchecked(q))
}

fn pose_unchecked(q: JointAngles) -> ArmPose {
    let t1 = q.theta1.to_radians();
    let t12 = t1 + q.theta2.to_radians();
    let base = Point::new(0.0, 0.0);
    let elbow = Point::new(LINK_LENGTH * t1.cos(), LINK_LENGTH * t1.sin());
    let tip = Point::new(
        elbow.x + LINK_LENGTH * t12.cos(),
        elbow.y + LINK_LENGTH * t12.sin(),
    );
    ArmPose { base, elbow, tip }
}

/// Circle or axis-aligned rectangle in workspace coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Obstacle {
    Circle { cx: f64, cy: f64, r: f64 },
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
}

impl Obstacle {
    pub fn circle(center: Point, radius: f64) -> Self {
        Obstacle::Circle {
            cx: center.x,
            cy: center.y,
            r: radius,
        }
    }

    /// Rectangle from two opposite corners, in any order.
    pub fn rect(a: Point, b: Point) -> Self {
        Obstacle::Rect {
            x0: a.x.min(b.x),
            y0: a.y.min(b.y),
            x1: a.x.max(b.x),
            y1: a.y.max(b.y),
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Obstacle::Circle { r, .. } => std::f64::consts::PI * r * r,
            Obstacle::Rect { x0, y0, x1, y1 } => (x1 - x0) * (y1 - y0),
        }
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounds(&self) -> (Point, Point) {
        match *self {
            Obstacle::Circle { cx, cy, r } => {
                (Point::new(cx - r, cy - r), Point::new(cx + r, cy + r))
            }
            Obstacle::Rect { x0, y0, x1, y1 } => (Point::new(x0, y0), Point::new(x1, y1)),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            Obstacle::Circle { cx, cy, r } => Point::new(cx, cy).distance(p) <= r,
            Obstacle::Rect { x0, y0, x1, y1 } => p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1,
        }
    }

    /// Distance from `p` to the obstacle region; zero inside.
    pub fn distance_to_point(&self, p: Point) -> f64 {
        match *self {
            Obstacle::Circle { cx, cy, r } => (Point::new(cx, cy).distance(p) - r).max(0.0),
            Obstacle::Rect { x0, y0, x1, y1 } => {
                let dx = (x0 - p.x).max(0.0).max(p.x - x1);
                let dy = (y0 - p.y).max(0.0).max(p.y - y1);
                dx.hypot(dy)
            }
        }
    }

    /// Checks the size and placement constraints for generated obstacles.
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.bounds();
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        if !(w.is_finite() && h.is_finite()) || w < MIN_OBSTACLE_SIZE || h < MIN_OBSTACLE_SIZE {
            return Err(Error::Range(format!(
                "obstacle {self:?} smaller than {MIN_OBSTACLE_SIZE}"
            )));
        }
        if lo.x < WORKSPACE_X.0 || hi.x > WORKSPACE_X.1 || lo.y < WORKSPACE_Y.0 || hi.y > WORKSPACE_Y.1
        {
            return Err(Error::Range(format!(
                "obstacle {self:?} leaves the workspace"
            )));
        }
        Ok(())
    }
}

pub fn segment_intersects_obstacle(seg: &Segment, ob: &Obstacle) -> bool {
    match *ob {
        Obstacle::Circle { cx, cy, r } => seg.distance_to_point(Point::new(cx, cy)) <= r,
        Obstacle::Rect { x0, y0, x1, y1 } => {
            // A segment wholly inside crosses no edge, hence the containment check.
            if ob.contains(seg.a) || ob.contains(seg.b) {
                return true;
            }
            let c = [
                Point::new(x0, y0),
                Point::new(x1, y0),
                Point::new(x1, y1),
                Point::new(x0, y1),
            ];
            (0..4).any(|i| seg.intersects(&Segment::new(c[i], c[(i + 1) % 4])))
        }
    }
}

pub fn pose_collides(pose: &ArmPose, obstacles: &[Obstacle]) -> bool {
    let links = pose.links();
    obstacles
        .iter()
        .any(|ob| links.iter().any(|l| segment_intersects_obstacle(l, ob)))
}

/// True iff either link touches any obstacle.
pub fn collides(q: JointAngles, obstacles: &[Obstacle]) -> Result<bool> {
    let pose = forward_kinematics(q)?;
    Ok(pose_collides(&pose, obstacles))
}
