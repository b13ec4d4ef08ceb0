//! Planning-time scalability benchmark.
//!
//! The baseline plans with A* over a 128x128 joint-space lattice and checks
//! every node it touches against the geometry. The generator method builds
//! the 16,384-node latent graph with one inference batch and plans with A*
//! on it; it performs no collision checks. Both answer the same queries.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use cfree_core::cgan::Generator;
use cfree_core::geometry::{collides, JointAngles, Obstacle, THETA1_MAX, THETA1_MIN, THETA2_MAX, THETA2_MIN};
use cfree_core::planner::{lattice_astar, map_to_joint_trajectory, validate_trajectory, LatentGridGraph, LatentPath};
use cfree_core::scenarios::{sample_scenario, scenario_seed, GenerationConfig, ObstacleScenario};
use cfree_core::svg::{line_chart, Series};
use cfree_core::{Error, Result};

pub const GRID_N: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BenchMethod {
    #[serde(rename = "baseline-collision-check")]
    Baseline,
    #[serde(rename = "generator-inference")]
    Generator,
}

impl BenchMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchMethod::Baseline => "baseline-collision-check",
            BenchMethod::Generator => "generator-inference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub scenario_id: u32,
    pub obstacle_count: usize,
    pub total_obstacle_area: f64,
    pub method: BenchMethod,
    /// Median over repetitions of the time to answer the whole query set.
    pub seconds: f64,
    /// `seconds` over the same method's simplest-condition time.
    pub ratio: f64,
    /// Fraction of queries whose path passes validation.
    pub valid_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Timed repetitions after one discarded warm-up run.
    pub repetitions: usize,
    pub queries: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            repetitions: 5,
            queries: 10,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.repetitions < 5 || self.queries == 0 {
            return Err(Error::Config(format!(
                "benchmark needs at least 5 repetitions and one query, got {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Query {
    pub start: JointAngles,
    pub goal: JointAngles,
}

/// Uniform queries over the joint ranges, independent of any scenario.
pub fn random_queries(count: usize, seed: u64) -> Vec<Query> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        JointAngles::new_unchecked(
            rng.gen_range(THETA1_MIN..=THETA1_MAX),
            rng.gen_range(THETA2_MIN..=THETA2_MAX),
        )
    };
    (0..count).map(|_| Query { start: draw(), goal: draw() }).collect()
}

/// Nested scenarios: the one with `counts[k]` obstacles holds the first
/// `counts[k]` obstacles of a single draw with `max(counts)` obstacles.
pub fn nested_sweep(counts: &[usize], seed: u64) -> Result<Vec<ObstacleScenario>> {
    let max = counts
        .iter()
        .copied()
        .max()
        .ok_or_else(|| Error::Config("empty obstacle-count sweep".into()))?;
    let full = sample_scenario(scenario_seed(seed, max as u32), max as u32, &GenerationConfig::default().with_obstacle_count(max))?;
    Ok(counts
        .iter()
        .map(|&c| ObstacleScenario::new(c as u32, full.obstacles[..c].to_vec()))
        .collect())
}

/// Joint configuration of node `v` of the `GRID_N x GRID_N` joint lattice.
pub fn joint_node(v: usize) -> JointAngles {
    let s = (GRID_N - 1) as f64;
    JointAngles::new_unchecked(
        THETA1_MIN + (v / GRID_N) as f64 / s * (THETA1_MAX - THETA1_MIN),
        THETA2_MIN + (v % GRID_N) as f64 / s * (THETA2_MAX - THETA2_MIN),
    )
}

/// Collision-free lattice node nearest to `q`, scanning rings outwards.
fn nearest_free_node(q: JointAngles, obstacles: &[Obstacle]) -> Result<Option<usize>> {
    let s = (GRID_N - 1) as f64;
    let ci = ((q.theta1 - THETA1_MIN) / (THETA1_MAX - THETA1_MIN) * s).round() as isize;
    let cj = ((q.theta2 - THETA2_MIN) / (THETA2_MAX - THETA2_MIN) * s).round() as isize;
    let n = GRID_N as isize;
    for r in 0..n {
        let mut best: Option<(f64, usize)> = None;
        for a in -r..=r {
            for b in -r..=r {
                let (i, j) = (ci + a, cj + b);
                if (a.abs() != r && b.abs() != r) || i < 0 || j < 0 || i >= n || j >= n {
                    continue;
                }
                let v = (i * n + j) as usize;
                let p = joint_node(v);
                if !collides(p, obstacles)? {
                    let d = p.distance(&q);
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, v));
                    }
                }
            }
        }
        if let Some((_, v)) = best {
            return Ok(Some(v));
        }
    }
    Ok(None)
}

/// Collision-checked A* for one query; `None` when no path exists.
pub fn baseline_plan(obstacles: &[Obstacle], query: &Query) -> Result<Option<Vec<JointAngles>>> {
    let (Some(s), Some(g)) = (nearest_free_node(query.start, obstacles)?, nearest_free_node(query.goal, obstacles)?) else {
        return Ok(None);
    };
    match lattice_astar(GRID_N, joint_node, |v| Ok(!collides(joint_node(v), obstacles)?), s, g) {
        Ok(path) => Ok(Some(path.nodes.into_iter().map(joint_node).collect())),
        Err(Error::Planning(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Builds the latent graph and plans every query on it.
pub fn generator_plan(g: &Generator<f32>, scenario: &ObstacleScenario, query: &Query) -> Result<LatentPath> {
    let graph = LatentGridGraph::build(g, scenario, GRID_N)?;
    let path = cfree_core::planner::astar(&graph, graph.snap(query.start), graph.snap(query.goal))?;
    Ok(LatentPath {
        waypoints: path.nodes.iter().map(|&v| graph.z_of(v)).collect(),
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Median wall time of `run` over `repetitions` after one warm-up call.
pub fn time_median<T>(repetitions: usize, mut run: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut last = run()?;
    let mut times = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let t = Instant::now();
        last = run()?;
        times.push(t.elapsed().as_secs_f64());
    }
    Ok((median(times), last))
}

fn record(scenario: &ObstacleScenario, method: BenchMethod, seconds: f64, valid: usize, total: usize) -> BenchRecord {
    BenchRecord {
        scenario_id: scenario.id,
        obstacle_count: scenario.obstacles.len(),
        total_obstacle_area: scenario.total_area(),
        method,
        seconds,
        ratio: f64::NAN,
        valid_fraction: valid as f64 / total.max(1) as f64,
    }
}

pub fn run_baseline(scenario: &ObstacleScenario, queries: &[Query], cfg: &BenchConfig) -> Result<BenchRecord> {
    cfg.validate()?;
    let (seconds, paths) = time_median(cfg.repetitions, || baseline_paths(scenario, queries))?;
    let valid = baseline_valid(scenario, &paths)?;
    Ok(record(scenario, BenchMethod::Baseline, seconds, valid, queries.len()))
}

pub fn run_generator(g: &Generator<f32>, scenario: &ObstacleScenario, queries: &[Query], cfg: &BenchConfig) -> Result<BenchRecord> {
    cfg.validate()?;
    let (seconds, paths) = time_median(cfg.repetitions, || generator_paths(g, scenario, queries))?;
    let valid = generator_valid(g, scenario, &paths)?;
    Ok(record(scenario, BenchMethod::Generator, seconds, valid, queries.len()))
}

fn baseline_paths(scenario: &ObstacleScenario, queries: &[Query]) -> Result<Vec<Option<Vec<JointAngles>>>> {
    queries.iter().map(|q| baseline_plan(&scenario.obstacles, q)).collect()
}

fn generator_paths(g: &Generator<f32>, scenario: &ObstacleScenario, queries: &[Query]) -> Result<Vec<LatentPath>> {
    queries.iter().map(|q| generator_plan(g, scenario, q)).collect()
}

fn baseline_valid(scenario: &ObstacleScenario, paths: &[Option<Vec<JointAngles>>]) -> Result<usize> {
    let mut valid = 0;
    for path in paths.iter().flatten() {
        valid += usize::from(validate_trajectory(path, &scenario.obstacles)?.valid);
    }
    Ok(valid)
}

fn generator_valid(g: &Generator<f32>, scenario: &ObstacleScenario, paths: &[LatentPath]) -> Result<usize> {
    let mut valid = 0;
    for path in paths {
        let traj = map_to_joint_trajectory(g, scenario, path, 4)?;
        valid += usize::from(validate_trajectory(&traj, &scenario.obstacles)?.valid);
    }
    Ok(valid)
}

fn seconds<T>(run: impl FnOnce() -> Result<T>) -> Result<f64> {
    let t = Instant::now();
    std::hint::black_box(run()?);
    Ok(t.elapsed().as_secs_f64())
}

/// Divides each method's times by its simplest condition (fewest
/// obstacles, then smallest area, then first listed).
pub fn normalize(records: &mut [BenchRecord]) {
    for method in [BenchMethod::Baseline, BenchMethod::Generator] {
        let anchor = records
            .iter()
            .filter(|r| r.method == method)
            .min_by(|a, b| {
                a.obstacle_count
                    .cmp(&b.obstacle_count)
                    .then(a.total_obstacle_area.total_cmp(&b.total_obstacle_area))
            })
            .map(|r| r.seconds);
        if let Some(t) = anchor {
            for r in records.iter_mut().filter(|r| r.method == method) {
                r.ratio = r.seconds / t;
            }
        }
    }
}

/// Runs both methods on every scenario with the same queries, normalized.
/// Repetitions are interleaved across conditions so slow drift in machine
/// speed affects every condition alike; the first pass is the warm-up and
/// supplies the paths scored for validity.
pub fn run_suite(g: &Generator<f32>, scenarios: &[ObstacleScenario], cfg: &BenchConfig) -> Result<Vec<BenchRecord>> {
    cfg.validate()?;
    let queries = random_queries(cfg.queries, cfg.seed);
    let mut valid = Vec::with_capacity(scenarios.len());
    for scn in scenarios {
        valid.push([
            baseline_valid(scn, &baseline_paths(scn, &queries)?)?,
            generator_valid(g, scn, &generator_paths(g, scn, &queries)?)?,
        ]);
    }
    let mut times = vec![[Vec::new(), Vec::new()]; scenarios.len()];
    for _ in 0..cfg.repetitions {
        for (scn, t) in scenarios.iter().zip(&mut times) {
            t[0].push(seconds(|| baseline_paths(scn, &queries))?);
            t[1].push(seconds(|| generator_paths(g, scn, &queries))?);
        }
    }
    let mut out = Vec::with_capacity(2 * scenarios.len());
    for ((scn, [tb, tg]), [vb, vg]) in scenarios.iter().zip(times).zip(valid) {
        out.push(record(scn, BenchMethod::Baseline, median(tb), vb, queries.len()));
        out.push(record(scn, BenchMethod::Generator, median(tg), vg, queries.len()));
    }
    normalize(&mut out);
    Ok(out)
}

/// Population standard deviation over mean.
pub fn coefficient_of_variation(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    var.sqrt() / mean
}

pub const CSV_HEADER: &str = "scenario_id,obstacle_count,total_obstacle_area,method,seconds,ratio,valid_fraction";

pub fn to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{:.6},{},{:.6e},{:.6},{:.4}\n",
            r.scenario_id,
            r.obstacle_count,
            r.total_obstacle_area,
            r.method.as_str(),
            r.seconds,
            r.ratio,
            r.valid_fraction
        ));
    }
    out
}

/// Mean ratio per obstacle count for one method, ordered by count.
pub fn ratio_series(records: &[BenchRecord], method: BenchMethod) -> Vec<(f64, f64)> {
    let mut by_count = std::collections::BTreeMap::<usize, (f64, usize)>::new();
    for r in records.iter().filter(|r| r.method == method) {
        let e = by_count.entry(r.obstacle_count).or_default();
        e.0 += r.ratio;
        e.1 += 1;
    }
    by_count.into_iter().map(|(c, (s, n))| (c as f64, s / n as f64)).collect()
}

/// Time ratio against obstacle count, one line per method.
pub fn chart(records: &[BenchRecord]) -> String {
    let series: Vec<Series> = [BenchMethod::Baseline, BenchMethod::Generator]
        .into_iter()
        .map(|m| Series {
            name: m.as_str().into(),
            points: ratio_series(records, m),
        })
        .collect();
    line_chart(&series, "planning time vs. obstacles", "obstacle count", "time ratio")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(count: usize, method: BenchMethod, seconds: f64) -> BenchRecord {
        BenchRecord {
            scenario_id: count as u32,
            obstacle_count: count,
            total_obstacle_area: count as f64,
            method,
            seconds,
            ratio: f64::NAN,
            valid_fraction: 1.0,
        }
    }

    #[test]
    fn normalization_anchors_the_simplest_condition() {
        let mut r = vec![
            rec(2, BenchMethod::Baseline, 4.0),
            rec(1, BenchMethod::Baseline, 2.0),
            rec(1, BenchMethod::Generator, 0.5),
            rec(2, BenchMethod::Generator, 0.55),
        ];
        normalize(&mut r);
        assert_eq!(r.iter().map(|r| r.ratio).collect::<Vec<_>>(), vec![2.0, 1.0, 1.0, 1.1]);
        assert_eq!(ratio_series(&r, BenchMethod::Baseline), vec![(1.0, 1.0), (2.0, 2.0)]);
    }

    #[test]
    fn statistics() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(coefficient_of_variation(&[2.0, 2.0, 2.0]), 0.0);
        assert!((coefficient_of_variation(&[1.0, 3.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn sweep_is_nested() {
        let s = nested_sweep(&[1, 2, 4, 8], 3).unwrap();
        assert_eq!(s.iter().map(|s| s.obstacles.len()).collect::<Vec<_>>(), vec![1, 2, 4, 8]);
        for w in s.windows(2) {
            assert_eq!(w[0].obstacles[..], w[1].obstacles[..w[0].obstacles.len()]);
        }
    }

    #[test]
    fn baseline_paths_avoid_collisions() {
        let scn = &nested_sweep(&[4], 5).unwrap()[0];
        for q in random_queries(5, 2) {
            if let Some(path) = baseline_plan(&scn.obstacles, &q).unwrap() {
                for p in &path {
                    assert!(!collides(*p, &scn.obstacles).unwrap());
                }
                assert!(path.windows(2).all(|w| w[0].distance(&w[1]) < 2.0));
            }
        }
        let free = baseline_plan(&[], &random_queries(1, 9)[0]).unwrap().unwrap();
        assert!(!free.is_empty());
    }

    #[test]
    fn csv_layout() {
        let mut r = vec![rec(1, BenchMethod::Baseline, 0.25)];
        normalize(&mut r);
        let csv = to_csv(&r);
        assert_eq!(csv.lines().next(), Some(CSV_HEADER));
        assert_eq!(csv.lines().nth(1), Some("1,1,1.000000,baseline-collision-check,2.500000e-1,1.000000,1.0000"));
        assert!(chart(&r).starts_with("<svg"));
    }

    #[test]
    fn config_requires_five_repetitions() {
        assert!(BenchConfig { repetitions: 4, ..Default::default() }.validate().is_err());
        assert!(BenchConfig::default().validate().is_ok());
    }
}
