//! Latent-space path planning.
//!
//! A plan starts from requested joint configurations, snaps them to latent
//! lattice nodes by generated-joint proximity, connects them in the latent
//! square (a straight line or an A* path over the lattice graph) and maps
//! the latent path through the Generator. Validation consults only the
//! geometry, never the networks.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::cgan::Generator;
use crate::dataset::denormalize_clamped;
use crate::error::{Error, Result};
use crate::geometry::{collides, JointAngles, Obstacle, THETA1_MAX, THETA1_MIN, THETA2_MAX, THETA2_MIN};
use crate::scenarios::ObstacleScenario;

/// Maximum joint step (degrees, per joint) between validated configurations.
pub const VALIDATION_STEP_DEG: f64 = 1.0;
/// A colliding configuration within this joint-space (Chebyshev) distance of
/// a collision-free one counts as boundary contact: one training-grid step.
pub const BOUNDARY_CONTACT_DEG: f64 = 5.0;
const DEPTH_SEARCH_STEP_DEG: f64 = 0.5;
const DEPTH_SEARCH_MAX_DEG: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentPath {
    pub waypoints: Vec<[f64; 2]>,
}

fn check_latent(z: [f64; 2]) -> Result<()> {
    if z.iter().all(|v| (0.0..=1.0).contains(v)) {
        Ok(())
    } else {
        Err(Error::Range(format!("latent point {z:?} outside [0,1]^2")))
    }
}

/// `steps` evenly spaced points from `start` to `goal`, both included.
pub fn straight_line_path(start: [f64; 2], goal: [f64; 2], steps: usize) -> Result<LatentPath> {
    check_latent(start)?;
    check_latent(goal)?;
    if steps < 2 {
        return Err(Error::Usage(format!("a line needs at least 2 steps, got {steps}")));
    }
    let last = (steps - 1) as f64;
    let waypoints = (0..steps)
        .map(|k| {
            let t = k as f64 / last;
            // t = 0 and t = 1 reproduce the endpoints exactly
            [0, 1].map(|a| ((1.0 - t) * start[a] + t * goal[a]).clamp(0.0, 1.0))
        })
        .collect();
    Ok(LatentPath { waypoints })
}

/// `n x n` latent lattice with the generated joint configuration (degrees)
/// of every node. Node `(i, j)` sits at `z = (i/(n-1), j/(n-1))` and has
/// index `i * n + j`; edges join 8-neighbours.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGridGraph {
    pub n: usize,
    pub joints: Vec<JointAngles>,
}

const NEIGHBOURS: [(isize, isize); 8] = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)];

impl LatentGridGraph {
    pub fn lattice(n: usize) -> Result<Vec<[f64; 2]>> {
        if n < 2 {
            return Err(Error::Usage(format!("lattice size {n} < 2")));
        }
        let s = (n - 1) as f64;
        Ok((0..n).flat_map(|i| (0..n).map(move |j| [i as f64 / s, j as f64 / s])).collect())
    }

    /// Generates every node in one batch.
    pub fn build(g: &Generator<f32>, scenario: &ObstacleScenario, n: usize) -> Result<Self> {
        let zs = Self::lattice(n)?;
        let out = g.generate_batch(&zs, &scenario.mask)?;
        Self::from_joints(n, out.into_iter().map(denormalize_clamped).collect())
    }

    pub fn from_joints(n: usize, joints: Vec<JointAngles>) -> Result<Self> {
        if n < 2 || joints.len() != n * n {
            return Err(Error::Shape(format!("{} joint values for a {n}x{n} lattice", joints.len())));
        }
        Ok(LatentGridGraph { n, joints })
    }

    pub fn node_count(&self) -> usize {
        self.n * self.n
    }

    pub fn edge_count(&self) -> usize {
        let m = self.n - 1;
        2 * self.n * m + 2 * m * m
    }

    pub fn z_of(&self, node: usize) -> [f64; 2] {
        let s = (self.n - 1) as f64;
        [(node / self.n) as f64 / s, (node % self.n) as f64 / s]
    }

    pub fn weight(&self, a: usize, b: usize) -> f64 {
        self.joints[a].distance(&self.joints[b])
    }

    pub fn neighbours(&self, node: usize) -> impl Iterator<Item = usize> {
        lattice_neighbours(self.n, node)
    }

    /// Node whose generated configuration is closest to `q`; ties go to the
    /// smaller index.
    pub fn snap(&self, q: JointAngles) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (k, p) in self.joints.iter().enumerate() {
            let d = p.distance(&q);
            if d < best.0 {
                best = (d, k);
            }
        }
        best.1
    }

    /// Sum of edge weights along consecutive nodes.
    pub fn path_cost(&self, nodes: &[usize]) -> f64 {
        nodes.windows(2).fold(0.0, |acc, w| acc + self.weight(w[0], w[1]))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraphPath {
    pub nodes: Vec<usize>,
    pub cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Open {
    f: f64,
    node: usize,
}

impl Eq for Open {}

impl Ord for Open {
    // BinaryHeap is a max-heap: smallest f first, then smallest index
    fn cmp(&self, other: &Self) -> Ordering {
        other.f.total_cmp(&self.f).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Open {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Neighbours of `node` in an `n x n` 8-connected lattice, in a fixed order.
pub fn lattice_neighbours(n: usize, node: usize) -> impl Iterator<Item = usize> {
    let m = n as isize;
    let (i, j) = ((node / n) as isize, (node % n) as isize);
    NEIGHBOURS.iter().filter_map(move |&(di, dj)| {
        let (a, b) = (i + di, j + dj);
        (a >= 0 && b >= 0 && a < m && b < m).then_some((a * m + b) as usize)
    })
}

/// A* over the lattice with the Euclidean joint-space distance to the
/// goal's generated configuration as heuristic.
pub fn astar(graph: &LatentGridGraph, start: usize, goal: usize) -> Result<GraphPath> {
    lattice_astar(graph.n, |v| graph.joints[v], |_| Ok(true), start, goal)
}

/// A* over an `n x n` 8-connected lattice whose node `v` sits at joint
/// configuration `at(v)`. Edge weights and the heuristic are joint-space
/// distances; nodes with `passable(v) == false` are never entered.
/// `passable` is queried at most once per node.
pub fn lattice_astar(
    n: usize,
    at: impl Fn(usize) -> JointAngles,
    mut passable: impl FnMut(usize) -> Result<bool>,
    start: usize,
    goal: usize,
) -> Result<GraphPath> {
    let count = n * n;
    if start >= count || goal >= count {
        return Err(Error::Planning(format!("node {} outside a graph of {count}", start.max(goal))));
    }
    let target = at(goal);
    let h = |v: usize| at(v).distance(&target);
    let mut g_cost = vec![f64::INFINITY; count];
    let mut parent = vec![usize::MAX; count];
    let mut closed = vec![false; count];
    // 0 unknown, 1 passable, 2 blocked
    let mut state = vec![0u8; count];
    state[start] = 1;
    let mut open = BinaryHeap::new();
    g_cost[start] = 0.0;
    open.push(Open { f: h(start), node: start });
    while let Some(Open { node, .. }) = open.pop() {
        if closed[node] {
            continue;
        }
        if node == goal {
            let mut nodes = vec![goal];
            while *nodes.last().expect("non-empty") != start {
                nodes.push(parent[*nodes.last().expect("non-empty")]);
            }
            nodes.reverse();
            return Ok(GraphPath {
                cost: g_cost[goal],
                nodes,
            });
        }
        closed[node] = true;
        let here = at(node);
        for v in lattice_neighbours(n, node) {
            if state[v] == 0 {
                state[v] = if passable(v)? { 1 } else { 2 };
            }
            if state[v] == 2 {
                continue;
            }
            let cand = g_cost[node] + here.distance(&at(v));
            if cand < g_cost[v] {
                g_cost[v] = cand;
                parent[v] = node;
                // reopening guards against rounding-level inconsistency of h
                closed[v] = false;
                open.push(Open { f: cand + h(v), node: v });
            }
        }
    }
    Err(Error::Planning(format!("no path from node {start} to node {goal}")))
}

/// Inserts `densify - 1` evenly spaced points inside every segment.
pub fn densify(path: &LatentPath, densify: usize) -> Result<Vec<[f64; 2]>> {
    if densify == 0 {
        return Err(Error::Usage("densify must be at least 1".into()));
    }
    let mut out = Vec::with_capacity(path.waypoints.len() * densify);
    for w in path.waypoints.windows(2) {
        for k in 0..densify {
            let t = k as f64 / densify as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    if let Some(&last) = path.waypoints.last() {
        out.push(last);
    }
    Ok(out)
}

/// Maps a (densified) latent path through the Generator to degrees.
pub fn map_to_joint_trajectory(
    g: &Generator<f32>,
    scenario: &ObstacleScenario,
    path: &LatentPath,
    steps_per_segment: usize,
) -> Result<Vec<JointAngles>> {
    let zs = densify(path, steps_per_segment)?;
    Ok(g.generate_batch(&zs, &scenario.mask)?.into_iter().map(denormalize_clamped).collect())
}

pub fn trajectory_length(traj: &[JointAngles]) -> f64 {
    traj.windows(2).map(|w| w[0].distance(&w[1])).sum()
}

/// First colliding configuration found while validating.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    /// Trajectory segment (or waypoint, when `fraction == 0`) index.
    pub segment: usize,
    pub fraction: f64,
    pub angles: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub waypoint_collisions: Vec<bool>,
    pub first_violation: Option<Violation>,
    pub configurations_checked: usize,
    pub colliding_configurations: usize,
    /// Largest joint-space distance from a colliding configuration to free
    /// space; 0 for a valid trajectory, infinite beyond the search radius.
    pub max_depth_deg: f64,
}

impl ValidationReport {
    /// Valid, or every collision within `BOUNDARY_CONTACT_DEG` of free space.
    pub fn boundary_contact_only(&self) -> bool {
        self.max_depth_deg <= BOUNDARY_CONTACT_DEG
    }
}

/// Chebyshev distance in degrees from `q` to the nearest collision-free
/// configuration on a `0.5°` lattice around it, or infinity beyond `20°`.
pub fn collision_depth_deg(q: JointAngles, obstacles: &[Obstacle]) -> Result<f64> {
    if !collides(q, obstacles)? {
        return Ok(0.0);
    }
    let rings = (DEPTH_SEARCH_MAX_DEG / DEPTH_SEARCH_STEP_DEG).round() as i64;
    for r in 1..=rings {
        for a in -r..=r {
            for b in -r..=r {
                if a.abs() != r && b.abs() != r {
                    continue;
                }
                let p = JointAngles::new_unchecked(
                    q.theta1 + a as f64 * DEPTH_SEARCH_STEP_DEG,
                    q.theta2 + b as f64 * DEPTH_SEARCH_STEP_DEG,
                );
                if p.in_range() && !collides(p, obstacles)? {
                    return Ok(r as f64 * DEPTH_SEARCH_STEP_DEG);
                }
            }
        }
    }
    Ok(f64::INFINITY)
}

/// Checks every waypoint and linearly interpolated configurations so that
/// consecutive checks differ by at most `VALIDATION_STEP_DEG` per joint.
pub fn validate_trajectory(traj: &[JointAngles], obstacles: &[Obstacle]) -> Result<ValidationReport> {
    let mut report = ValidationReport {
        valid: true,
        waypoint_collisions: Vec::with_capacity(traj.len()),
        first_violation: None,
        configurations_checked: 0,
        colliding_configurations: 0,
        max_depth_deg: 0.0,
    };
    let record = |report: &mut ValidationReport, q: JointAngles, segment: usize, fraction: f64| -> Result<bool> {
        report.configurations_checked += 1;
        if !collides(q, obstacles)? {
            return Ok(false);
        }
        report.valid = false;
        report.colliding_configurations += 1;
        report.max_depth_deg = report.max_depth_deg.max(collision_depth_deg(q, obstacles)?);
        report.first_violation.get_or_insert(Violation {
            segment,
            fraction,
            angles: [q.theta1, q.theta2],
        });
        Ok(true)
    };
    for (k, &q) in traj.iter().enumerate() {
        let hit = record(&mut report, q, k, 0.0)?;
        report.waypoint_collisions.push(hit);
        if let Some(&next) = traj.get(k + 1) {
            let span = (next.theta1 - q.theta1).abs().max((next.theta2 - q.theta2).abs());
            let pieces = (span / VALIDATION_STEP_DEG).ceil().max(1.0) as usize;
            for s in 1..pieces {
                let t = s as f64 / pieces as f64;
                record(&mut report, q.lerp(&next, t), k, t)?;
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Line,
    Astar,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "line" => Ok(Method::Line),
            "astar" => Ok(Method::Astar),
            other => Err(Error::Usage(format!("unknown method {other:?} (expected line or astar)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Lattice size per axis.
    pub grid_n: usize,
    /// Points per straight latent line, endpoints included.
    pub line_steps: usize,
    /// Generator samples per latent path segment.
    pub densify: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            grid_n: 128,
            line_steps: 128,
            densify: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub scenario_id: u32,
    pub method: Method,
    pub start_deg: [f64; 2],
    pub goal_deg: [f64; 2],
    /// Joint distance from the requested endpoints to the snapped nodes' configurations.
    pub snap_error_deg: [f64; 2],
    pub latent_waypoints: Vec<[f64; 2]>,
    pub joint_trajectory_deg: Vec<[f64; 2]>,
    pub valid: bool,
    pub joint_path_length_deg: f64,
    pub validation: ValidationReport,
}

/// A Generator bound to one scenario with its lattice graph built.
pub struct Planner<'a> {
    pub generator: &'a Generator<f32>,
    pub scenario: &'a ObstacleScenario,
    pub graph: LatentGridGraph,
    pub config: PlannerConfig,
}

impl<'a> Planner<'a> {
    pub fn new(generator: &'a Generator<f32>, scenario: &'a ObstacleScenario, config: PlannerConfig) -> Result<Self> {
        if config.line_steps < 2 || config.densify == 0 {
            return Err(Error::Config(format!("invalid planner settings {config:?}")));
        }
        let graph = LatentGridGraph::build(generator, scenario, config.grid_n)?;
        Ok(Planner {
            generator,
            scenario,
            graph,
            config,
        })
    }

    /// Latent path between the snapped endpoints.
    pub fn latent_path(&self, start: usize, goal: usize, method: Method) -> Result<LatentPath> {
        match method {
            Method::Line => straight_line_path(self.graph.z_of(start), self.graph.z_of(goal), self.config.line_steps),
            Method::Astar => Ok(LatentPath {
                waypoints: astar(&self.graph, start, goal)?.nodes.iter().map(|&v| self.graph.z_of(v)).collect(),
            }),
        }
    }

    pub fn plan(&self, start: JointAngles, goal: JointAngles, method: Method) -> Result<Plan> {
        start.check_range()?;
        goal.check_range()?;
        let (s, g) = (self.graph.snap(start), self.graph.snap(goal));
        let path = self.latent_path(s, g, method)?;
        let traj = map_to_joint_trajectory(self.generator, self.scenario, &path, self.config.densify)?;
        let validation = validate_trajectory(&traj, &self.scenario.obstacles)?;
        Ok(Plan {
            scenario_id: self.scenario.id,
            method,
            start_deg: [start.theta1, start.theta2],
            goal_deg: [goal.theta1, goal.theta2],
            snap_error_deg: [self.graph.joints[s].distance(&start), self.graph.joints[g].distance(&goal)],
            latent_waypoints: path.waypoints,
            joint_path_length_deg: trajectory_length(&traj),
            joint_trajectory_deg: traj.iter().map(|q| [q.theta1, q.theta2]).collect(),
            valid: validation.valid,
            validation,
        })
    }
}

/// Uniformly random collision-free configuration.
pub fn random_free_configuration<R: rand::Rng + ?Sized>(obstacles: &[Obstacle], rng: &mut R) -> Result<JointAngles> {
    for _ in 0..100_000 {
        let q = JointAngles::new_unchecked(rng.gen_range(THETA1_MIN..=THETA1_MAX), rng.gen_range(THETA2_MIN..=THETA2_MAX));
        if !collides(q, obstacles)? {
            return Ok(q);
        }
    }
    Err(Error::Planning("no collision-free configuration found".into()))
}
