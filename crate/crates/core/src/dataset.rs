//! Labeled joint grids, normalization, cross-validation folds and the
//! on-disk dataset layout.
//!
//! A dataset directory holds `scenarios.json`, one `grid_<id>.bin` per
//! scenario and a `manifest.json` with provenance. Each grid file is:
//!
//! ```text
//! b"CFPDSET1" | scenario id: u32 LE | 1110 x (θ1_norm: f32 LE, θ2_norm: f32 LE, label: u8)
//! ```
//!
//! Records follow the canonical grid order (θ1 major, θ2 minor) and
//! `label` is 1 for a colliding configuration, 0 otherwise.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{collides, JointAngles, THETA1_MAX, THETA1_MIN, THETA2_MAX, THETA2_MIN};
use crate::scenarios::{ObstacleScenario, ScenarioSet};

pub const GRID_STEP_DEG: f64 = 5.0;
pub const THETA1_COUNT: usize = 37;
pub const THETA2_COUNT: usize = 30;
pub const GRID_POINTS: usize = THETA1_COUNT * THETA2_COUNT;

pub const DATASET_MAGIC: &[u8; 8] = b"CFPDSET1";

const THETA1_SPAN: f64 = THETA1_MAX - THETA1_MIN;
const THETA2_SPAN: f64 = THETA2_MAX - THETA2_MIN;

/// Joint grid with the given step, θ1 major. Endpoints are inclusive.
pub fn joint_grid(step_deg: f64) -> Vec<JointAngles> {
    let n1 = (THETA1_SPAN / step_deg).round() as usize + 1;
    let n2 = (THETA2_SPAN / step_deg).round() as usize + 1;
    let mut out = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        for j in 0..n2 {
            out.push(JointAngles::new_unchecked(
                THETA1_MIN + i as f64 * step_deg,
                THETA2_MIN + j as f64 * step_deg,
            ));
        }
    }
    out
}

/// The 37x30 training grid at 5° spacing.
pub fn training_grid() -> Vec<JointAngles> {
    joint_grid(GRID_STEP_DEG)
}

/// Min-max scales each joint onto `[0, 1]`.
pub fn normalize(q: JointAngles) -> Result<[f64; 2]> {
    q.check_range()?;
    Ok([
        (q.theta1 - THETA1_MIN) / THETA1_SPAN,
        (q.theta2 - THETA2_MIN) / THETA2_SPAN,
    ])
}

pub fn denormalize(u: [f64; 2]) -> Result<JointAngles> {
    if !u.iter().all(|v| (0.0..=1.0).contains(v)) {
        return Err(Error::Range(format!("normalized point {u:?} outside [0,1]^2")));
    }
    Ok(denormalize_clamped(u))
}

/// Denormalizes after clamping to the unit square.
pub fn denormalize_clamped(u: [f64; 2]) -> JointAngles {
    JointAngles::new_unchecked(
        THETA1_MIN + u[0].clamp(0.0, 1.0) * THETA1_SPAN,
        THETA2_MIN + u[1].clamp(0.0, 1.0) * THETA2_SPAN,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Free,
    Collision,
}

impl Label {
    pub fn as_u8(self) -> u8 {
        match self {
            Label::Free => 0,
            Label::Collision => 1,
        }
    }

    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Free),
            1 => Ok(Label::Collision),
            other => Err(Error::Data(format!("invalid label byte {other}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridPoint {
    pub angles: JointAngles,
    pub normalized: [f32; 2],
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledGrid {
    pub scenario_id: u32,
    pub points: Vec<GridPoint>,
}

impl LabeledGrid {
    pub fn count(&self, label: Label) -> usize {
        self.points.iter().filter(|p| p.label == label).count()
    }

    pub fn normalized_with(&self, label: Label) -> Vec<[f32; 2]> {
        self.points
            .iter()
            .filter(|p| p.label == label)
            .map(|p| p.normalized)
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LittleEndian>(self.scenario_id)?;
        for p in &self.points {
            w.write_f32::<LittleEndian>(p.normalized[0])?;
            w.write_f32::<LittleEndian>(p.normalized[1])?;
            w.write_u8(p.label.as_u8())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(Error::Data("bad dataset magic".into()));
        }
        let scenario_id = r.read_u32::<LittleEndian>()?;
        let grid = training_grid();
        let mut points = Vec::with_capacity(GRID_POINTS);
        for angles in grid {
            let n0 = r.read_f32::<LittleEndian>()?;
            let n1 = r.read_f32::<LittleEndian>()?;
            let label = Label::from_u8(r.read_u8()?)?;
            let expected = normalize(angles)?;
            if (f64::from(n0) - expected[0]).abs() > 1e-6 || (f64::from(n1) - expected[1]).abs() > 1e-6 {
                return Err(Error::Data(format!(
                    "record ({n0}, {n1}) does not follow the canonical grid order"
                )));
            }
            points.push(GridPoint {
                angles,
                normalized: [n0, n1],
                label,
            });
        }
        let mut rest = Vec::new();
        r.read_to_end(&mut rest)?;
        if !rest.is_empty() {
            return Err(Error::Data(format!("{} trailing bytes in dataset file", rest.len())));
        }
        Ok(LabeledGrid {
            scenario_id,
            points,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + GRID_POINTS * 9);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}

/// Labels every training-grid configuration against the scenario's obstacles.
pub fn build_labeled_grid(scn: &ObstacleScenario) -> LabeledGrid {
    let points = training_grid()
        .into_iter()
        .map(|q| {
            let hit = collides(q, &scn.obstacles).expect("grid points are in range");
            let n = normalize(q).expect("grid points are in range");
            GridPoint {
                angles: q,
                normalized: [n[0] as f32, n[1] as f32],
                label: if hit { Label::Collision } else { Label::Free },
            }
        })
        .collect();
    LabeledGrid {
        scenario_id: scn.id,
        points,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub fold_index: usize,
    pub train: Vec<u32>,
    pub test: Vec<u32>,
}

/// Shuffles `ids` with `seed` and cuts them into `folds` equal test sets.
pub fn make_folds(ids: &[u32], folds: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if folds < 2 || ids.is_empty() || !ids.len().is_multiple_of(folds) {
        return Err(Error::Config(format!(
            "{} ids cannot be split into {folds} equal folds",
            ids.len()
        )));
    }
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::Config("scenario ids must be unique".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let size = ids.len() / folds;
    Ok((0..folds)
        .map(|k| {
            let mut test = sorted[k * size..(k + 1) * size].to_vec();
            let mut train: Vec<u32> = sorted[..k * size]
                .iter()
                .chain(&sorted[(k + 1) * size..])
                .copied()
                .collect();
            test.sort_unstable();
            train.sort_unstable();
            FoldSplit {
                fold_index: k,
                train,
                test,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub tool_version: String,
    pub seed: u64,
    pub config_hash: String,
    pub scenario_ids: Vec<u32>,
}

/// Scenarios plus their labeled grids, keyed by scenario id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenarios: ScenarioSet,
    pub grids: BTreeMap<u32, LabeledGrid>,
}

impl Dataset {
    pub fn build(scenarios: ScenarioSet) -> Self {
        let grids = scenarios
            .scenarios
            .iter()
            .map(|s| (s.id, build_labeled_grid(s)))
            .collect();
        Dataset { scenarios, grids }
    }

    pub fn scenario(&self, id: u32) -> Result<&ObstacleScenario> {
        self.scenarios
            .get(id)
            .ok_or_else(|| Error::Data(format!("scenario {id} not in dataset")))
    }

    pub fn grid(&self, id: u32) -> Result<&LabeledGrid> {
        self.grids
            .get(&id)
            .ok_or_else(|| Error::Data(format!("no labeled grid for scenario {id}")))
    }

    pub fn grid_file_name(id: u32) -> String {
        format!("grid_{id:05}.bin")
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.scenarios.save(&dir.join("scenarios.json"))?;
        for (id, grid) in &self.grids {
            fs::write(dir.join(Self::grid_file_name(*id)), grid.to_bytes())?;
        }
        let manifest = DatasetManifest {
            tool_version: crate::VERSION.to_string(),
            seed: self.scenarios.seed,
            config_hash: self.scenarios.config_hash.clone(),
            scenario_ids: self.grids.keys().copied().collect(),
        };
        fs::write(
            dir.join("manifest.json"),
            serde_json::to_string_pretty(&manifest)? + "\n",
        )?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let scenarios = ScenarioSet::load(&dir.join("scenarios.json"))?;
        let mut grids = BTreeMap::new();
        for s in &scenarios.scenarios {
            let bytes = fs::read(dir.join(Self::grid_file_name(s.id)))?;
            let grid = LabeledGrid::read_from(bytes.as_slice())?;
            if grid.scenario_id != s.id {
                return Err(Error::Data(format!(
                    "grid file for scenario {} carries id {}",
                    s.id, grid.scenario_id
                )));
            }
            grids.insert(s.id, grid);
        }
        Ok(Dataset { scenarios, grids })
    }
}
