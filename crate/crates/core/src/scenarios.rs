//! Random obstacle scenarios and their 32x24 occupancy masks.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::training_grid;
use crate::error::{Error, Result};
use crate::geometry::{collides, Obstacle, Point, MIN_OBSTACLE_SIZE, WORKSPACE_X, WORKSPACE_Y};

pub const MASK_ROWS: usize = 32;
pub const MASK_COLS: usize = 24;
pub const CELL_SIZE: f64 = 0.125;

/// Version of the scenario-set JSON document.
pub const SCENARIO_FORMAT_VERSION: u32 = 1;

/// Id reserved for the obstacle-free condition.
pub const EMPTY_SCENARIO_ID: u32 = 0;

/// Binary occupancy grid. Row `r` covers `y ∈ [-2 + r/8, -2 + (r+1)/8)`,
/// column `c` covers `x ∈ [-1 + c/8, -1 + (c+1)/8)`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct ConditionMask {
    cells: Vec<u8>,
}

impl Default for ConditionMask {
    fn default() -> Self {
        ConditionMask {
            cells: vec![0; MASK_ROWS * MASK_COLS],
        }
    }
}

impl fmt::Debug for ConditionMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConditionMask({} occupied)", self.occupied())
    }
}

impl ConditionMask {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * MASK_COLS + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.cells[row * MASK_COLS + col] = value as u8;
    }

    pub fn occupied(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    /// Row-major cell values (row 0 at y = -2).
    pub fn as_slice(&self) -> &[u8] {
        &self.cells
    }

    /// Lower-left corner of a cell.
    pub fn cell_origin(row: usize, col: usize) -> Point {
        Point::new(
            WORKSPACE_X.0 + col as f64 * CELL_SIZE,
            WORKSPACE_Y.0 + row as f64 * CELL_SIZE,
        )
    }

    pub fn cell_center(row: usize, col: usize) -> Point {
        let o = Self::cell_origin(row, col);
        Point::new(o.x + CELL_SIZE / 2.0, o.y + CELL_SIZE / 2.0)
    }

    pub fn to_rows(&self) -> Vec<String> {
        self.cells
            .chunks(MASK_COLS)
            .map(|row| row.iter().map(|&c| if c != 0 { '1' } else { '0' }).collect())
            .collect()
    }

    pub fn from_rows<S: AsRef<str>>(rows: &[S]) -> Result<Self> {
        if rows.len() != MASK_ROWS {
            return Err(Error::Data(format!(
                "mask has {} rows, expected {MASK_ROWS}",
                rows.len()
            )));
        }
        let mut cells = Vec::with_capacity(MASK_ROWS * MASK_COLS);
        for row in rows {
            let row = row.as_ref();
            if row.len() != MASK_COLS {
                return Err(Error::Data(format!(
                    "mask row has {} columns, expected {MASK_COLS}",
                    row.len()
                )));
            }
            for ch in row.chars() {
                cells.push(match ch {
                    '0' => 0,
                    '1' => 1,
                    other => return Err(Error::Data(format!("invalid mask character {other:?}"))),
                });
            }
        }
        Ok(ConditionMask { cells })
    }
}

impl Serialize for ConditionMask {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConditionMask {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<String>::deserialize(d)?;
        ConditionMask::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// True when the obstacle overlaps the open cell with positive area.
fn overlaps_cell(ob: &Obstacle, row: usize, col: usize) -> bool {
    let lo = ConditionMask::cell_origin(row, col);
    let hi = Point::new(lo.x + CELL_SIZE, lo.y + CELL_SIZE);
    match *ob {
        Obstacle::Rect { x0, y0, x1, y1 } => x0 < hi.x && x1 > lo.x && y0 < hi.y && y1 > lo.y,
        Obstacle::Circle { cx, cy, r } => {
            let dx = (lo.x - cx).max(0.0).max(cx - hi.x);
            let dy = (lo.y - cy).max(0.0).max(cy - hi.y);
            dx.hypot(dy) < r
        }
    }
}

pub fn rasterize(obstacles: &[Obstacle]) -> ConditionMask {
    let mut mask = ConditionMask::default();
    for ob in obstacles {
        let (lo, hi) = ob.bounds();
        let row_lo = cell_index(lo.y, WORKSPACE_Y.0, MASK_ROWS);
        let row_hi = cell_index(hi.y, WORKSPACE_Y.0, MASK_ROWS);
        let col_lo = cell_index(lo.x, WORKSPACE_X.0, MASK_COLS);
        let col_hi = cell_index(hi.x, WORKSPACE_X.0, MASK_COLS);
        for row in row_lo..=row_hi {
            for col in col_lo..=col_hi {
                if overlaps_cell(ob, row, col) {
                    mask.set(row, col, true);
                }
            }
        }
    }
    mask
}

fn cell_index(v: f64, origin: f64, n: usize) -> usize {
    (((v - origin) / CELL_SIZE).floor().max(0.0) as usize).min(n - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleScenario {
    pub id: u32,
    pub obstacles: Vec<Obstacle>,
    pub mask: ConditionMask,
}

impl ObstacleScenario {
    pub fn new(id: u32, obstacles: Vec<Obstacle>) -> Self {
        let mask = rasterize(&obstacles);
        ObstacleScenario {
            id,
            obstacles,
            mask,
        }
    }

    pub fn empty() -> Self {
        Self::new(EMPTY_SCENARIO_ID, Vec::new())
    }

    pub fn total_area(&self) -> f64 {
        self.obstacles.iter().map(Obstacle::area).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    pub min_obstacles: usize,
    pub max_obstacles: usize,
    pub min_size: f64,
    pub max_size: f64,
    /// Probability that a drawn obstacle is a circle.
    pub circle_probability: f64,
    /// No obstacle may touch the disk of this radius around the base.
    pub forbidden_radius: f64,
    /// Fraction of the 37x30 training grid that must stay collision-free.
    pub min_free_fraction: f64,
    pub max_attempts: usize,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            min_obstacles: 1,
            max_obstacles: 4,
            min_size: MIN_OBSTACLE_SIZE,
            max_size: 0.5,
            circle_probability: 0.5,
            forbidden_radius: 0.5,
            min_free_fraction: 0.05,
            max_attempts: 10_000,
        }
    }
}

impl GenerationConfig {
    pub fn with_obstacle_count(mut self, n: usize) -> Self {
        self.min_obstacles = n;
        self.max_obstacles = n;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_obstacles == 0 || self.min_obstacles > self.max_obstacles {
            return Err(Error::Config(format!(
                "obstacle count range {}..={} is invalid",
                self.min_obstacles, self.max_obstacles
            )));
        }
        if self.min_size < MIN_OBSTACLE_SIZE || self.max_size < self.min_size {
            return Err(Error::Config(format!(
                "obstacle size range {}..={} is invalid",
                self.min_size, self.max_size
            )));
        }
        if self.max_size > 3.0 {
            return Err(Error::Config("obstacles cannot exceed the workspace".into()));
        }
        if !(0.0..=1.0).contains(&self.circle_probability)
            || !(0.0..=1.0).contains(&self.min_free_fraction)
            || self.forbidden_radius < 0.0
        {
            return Err(Error::Config("probabilities and radii must be non-negative fractions".into()));
        }
        Ok(())
    }
}

fn intersects_forbidden_zone(ob: &Obstacle, radius: f64) -> bool {
    ob.distance_to_point(Point::new(0.0, 0.0)) <= radius
}

fn draw_obstacle(rng: &mut ChaCha8Rng, cfg: &GenerationConfig) -> Obstacle {
    if rng.gen_bool(cfg.circle_probability) {
        let r = rng.gen_range(cfg.min_size..=cfg.max_size) / 2.0;
        let cx = rng.gen_range(WORKSPACE_X.0 + r..=WORKSPACE_X.1 - r);
        let cy = rng.gen_range(WORKSPACE_Y.0 + r..=WORKSPACE_Y.1 - r);
        Obstacle::Circle { cx, cy, r }
    } else {
        let w = rng.gen_range(cfg.min_size..=cfg.max_size);
        let h = rng.gen_range(cfg.min_size..=cfg.max_size);
        let x0 = rng.gen_range(WORKSPACE_X.0..=WORKSPACE_X.1 - w);
        let y0 = rng.gen_range(WORKSPACE_Y.0..=WORKSPACE_Y.1 - h);
        Obstacle::Rect {
            x0,
            y0,
            x1: x0 + w,
            y1: y0 + h,
        }
    }
}

/// Fraction of the 37x30 training grid that does not collide.
pub fn free_fraction(obstacles: &[Obstacle]) -> f64 {
    let grid = training_grid();
    let free = grid
        .iter()
        .filter(|q| !collides(**q, obstacles).expect("grid points are in range"))
        .count();
    free as f64 / grid.len() as f64
}

/// Draws one scenario. Deterministic in `(seed, id, cfg)`.
pub fn sample_scenario(seed: u64, id: u32, cfg: &GenerationConfig) -> Result<ObstacleScenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut attempts = 0usize;
    loop {
        let count = rng.gen_range(cfg.min_obstacles..=cfg.max_obstacles);
        let mut obstacles = Vec::with_capacity(count);
        while obstacles.len() < count {
            attempts += 1;
            if attempts > cfg.max_attempts {
                return Err(Error::Generation(format!(
                    "no valid placement after {} attempts (seed {seed})",
                    cfg.max_attempts
                )));
            }
            let ob = draw_obstacle(&mut rng, cfg);
            if !intersects_forbidden_zone(&ob, cfg.forbidden_radius) {
                obstacles.push(ob);
            }
        }
        if free_fraction(&obstacles) >= cfg.min_free_fraction {
            return Ok(ObstacleScenario::new(id, obstacles));
        }
        attempts += 1;
    }
}

/// Seed for scenario `id` within a set generated from `seed`.
pub fn scenario_seed(seed: u64, id: u32) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ (u64::from(id).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// On-disk collection of scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub version: u32,
    pub seed: u64,
    #[serde(default)]
    pub tool_version: String,
    #[serde(default)]
    pub config_hash: String,
    pub scenarios: Vec<ObstacleScenario>,
}

impl ScenarioSet {
    /// The empty scenario (id 0) followed by `count` random ones (ids 1..=count).
    pub fn generate(count: usize, seed: u64, cfg: &GenerationConfig) -> Result<Self> {
        let mut scenarios = Vec::with_capacity(count + 1);
        scenarios.push(ObstacleScenario::empty());
        for id in 1..=count as u32 {
            scenarios.push(sample_scenario(scenario_seed(seed, id), id, cfg)?);
        }
        Ok(ScenarioSet {
            version: SCENARIO_FORMAT_VERSION,
            seed,
            tool_version: crate::VERSION.to_string(),
            config_hash: crate::config_hash(cfg),
            scenarios,
        })
    }

    pub fn get(&self, id: u32) -> Option<&ObstacleScenario> {
        self.scenarios.iter().find(|s| s.id == id)
    }

    /// Scenario ids excluding the empty condition.
    pub fn obstacle_ids(&self) -> Vec<u32> {
        self.scenarios
            .iter()
            .map(|s| s.id)
            .filter(|&id| id != EMPTY_SCENARIO_ID)
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: ScenarioSet = serde_json::from_str(text)?;
        if set.version != SCENARIO_FORMAT_VERSION {
            return Err(Error::Data(format!(
                "unsupported scenario format version {}",
                set.version
            )));
        }
        for s in &set.scenarios {
            if rasterize(&s.obstacles) != s.mask {
                return Err(Error::Data(format!(
                    "scenario {} mask does not match its obstacles",
                    s.id
                )));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
