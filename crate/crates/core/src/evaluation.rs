//! Grid-based IoU and precision of the generated region.
//!
//! Joint space is discretized at `Δθ` into cells centered on the grid
//! `θ1 = -90 + iΔθ`, `θ2 = 5 + jΔθ`. The latent square is divided into the
//! same number of cells and the Generator is sampled once at each latent
//! cell center. A joint cell is *generated* when at least one sample lands
//! in it (nearest grid point). With `free` the cells whose center is
//! collision-free:
//!
//! - TP = generated and free
//! - FP = generated and colliding
//! - FN = free and not generated

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cgan::Generator;
use crate::dataset::{normalize, Dataset, FoldSplit};
use crate::error::{Error, Result};
use crate::geometry::{collides, JointAngles, Obstacle, THETA1_MAX, THETA1_MIN, THETA2_MAX, THETA2_MIN};
use crate::scenarios::ObstacleScenario;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub dtheta: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { dtheta: 1.0 }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dtheta.is_finite() && self.dtheta > 0.0 && self.dtheta <= 145.0) {
            return Err(Error::Config(format!("Δθ must be in (0, 145], got {}", self.dtheta)));
        }
        Ok(())
    }

    /// Grid sizes along θ1 and θ2.
    pub fn dims(&self) -> (usize, usize) {
        let count = |span: f64| (span / self.dtheta + 1e-9).floor() as usize + 1;
        (count(THETA1_MAX - THETA1_MIN), count(THETA2_MAX - THETA2_MIN))
    }

    pub fn cells(&self) -> usize {
        let (a, b) = self.dims();
        a * b
    }

    /// Latent cell centers, θ1-axis major.
    pub fn latent_centers(&self) -> Vec<[f64; 2]> {
        let (n1, n2) = self.dims();
        (0..n1)
            .flat_map(|i| (0..n2).map(move |j| [(i as f64 + 0.5) / n1 as f64, (j as f64 + 0.5) / n2 as f64]))
            .collect()
    }
}

/// Collision-free flags of every joint cell for one obstacle set.
#[derive(Debug, Clone, PartialEq)]
pub struct JointCellMap {
    pub dtheta: f64,
    pub dims: (usize, usize),
    pub free: Vec<bool>,
}

impl JointCellMap {
    pub fn from_obstacles(obstacles: &[Obstacle], cfg: &EvalConfig) -> Result<Self> {
        cfg.validate()?;
        let (n1, n2) = cfg.dims();
        let mut free = Vec::with_capacity(n1 * n2);
        for i in 0..n1 {
            for j in 0..n2 {
                let q = JointAngles::new(THETA1_MIN + i as f64 * cfg.dtheta, THETA2_MIN + j as f64 * cfg.dtheta)?;
                free.push(!collides(q, obstacles)?);
            }
        }
        Ok(JointCellMap {
            dtheta: cfg.dtheta,
            dims: (n1, n2),
            free,
        })
    }

    pub fn free_count(&self) -> usize {
        self.free.iter().filter(|&&f| f).count()
    }

    /// Cell index of the grid point nearest to joint angles in degrees.
    pub fn cell_of(&self, q: JointAngles) -> usize {
        let (n1, n2) = self.dims;
        let snap = |v: f64, lo: f64, n: usize| (((v - lo) / self.dtheta).round().max(0.0) as usize).min(n - 1);
        snap(q.theta1, THETA1_MIN, n1) * n2 + snap(q.theta2, THETA2_MIN, n2)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl EvalCounts {
    /// `TP / (TP + FP + FN)`, 0 when the denominator is 0.
    pub fn iou(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp + self.fn_)
    }

    /// `TP / (TP + FP)`, 0 when nothing was generated.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Counts for generated joint angles (degrees) against a cell map.
pub fn count_generated(generated: &[JointAngles], map: &JointCellMap) -> EvalCounts {
    let mut hit = vec![false; map.free.len()];
    for &q in generated {
        hit[map.cell_of(q)] = true;
    }
    let mut c = EvalCounts::default();
    for (&h, &f) in hit.iter().zip(&map.free) {
        match (h, f) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionEval {
    pub scenario_id: u32,
    pub counts: EvalCounts,
    pub iou: f64,
    pub precision: f64,
}

/// Runs the grid protocol for one scenario.
pub fn evaluate_condition(g: &Generator<f32>, scenario: &ObstacleScenario, cfg: &EvalConfig) -> Result<ConditionEval> {
    let map = JointCellMap::from_obstacles(&scenario.obstacles, cfg)?;
    let out = g.generate_batch(&cfg.latent_centers(), &scenario.mask)?;
    let generated: Vec<JointAngles> = out.into_iter().map(crate::dataset::denormalize_clamped).collect();
    let counts = count_generated(&generated, &map);
    Ok(ConditionEval {
        scenario_id: scenario.id,
        counts,
        iou: counts.iou(),
        precision: counts.precision(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Stats {
    /// Population statistics; `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Stats> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Some(Stats {
            mean,
            std: var.sqrt(),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub conditions: usize,
    pub iou: Stats,
    pub precision: Stats,
}

impl SplitSummary {
    pub fn of(evals: &[ConditionEval]) -> Option<SplitSummary> {
        let ious: Vec<f64> = evals.iter().map(|e| e.iou).collect();
        let precs: Vec<f64> = evals.iter().map(|e| e.precision).collect();
        Some(SplitSummary {
            conditions: evals.len(),
            iou: Stats::of(&ious)?,
            precision: Stats::of(&precs)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEval {
    pub fold: usize,
    pub train: Vec<ConditionEval>,
    pub test: Vec<ConditionEval>,
}

/// Train/test aggregates over all folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub folds: usize,
    pub train: SplitSummary,
    pub test: SplitSummary,
}

pub fn summarize(folds: &[FoldEval]) -> Result<CvSummary> {
    let train: Vec<ConditionEval> = folds.iter().flat_map(|f| f.train.iter().cloned()).collect();
    let test: Vec<ConditionEval> = folds.iter().flat_map(|f| f.test.iter().cloned()).collect();
    let missing = |what: &str| Error::Config(format!("no {what} conditions to summarize"));
    Ok(CvSummary {
        folds: folds.len(),
        train: SplitSummary::of(&train).ok_or_else(|| missing("train"))?,
        test: SplitSummary::of(&test).ok_or_else(|| missing("test"))?,
    })
}

/// Evaluates each fold's model on its train and test scenarios.
///
/// `train_extra` lists scenarios trained on by every fold (the obstacle-free
/// one) that count toward the train split.
pub fn cross_validate(
    models: &BTreeMap<usize, &Generator<f32>>,
    folds: &[FoldSplit],
    train_extra: &[u32],
    ds: &Dataset,
    cfg: &EvalConfig,
) -> Result<(Vec<FoldEval>, CvSummary)> {
    let mut out = Vec::with_capacity(folds.len());
    for fold in folds {
        let g = models
            .get(&fold.fold_index)
            .ok_or_else(|| Error::Config(format!("no model for fold {}", fold.fold_index)))?;
        let eval_ids = |ids: &[u32]| -> Result<Vec<ConditionEval>> {
            ids.iter().map(|&id| evaluate_condition(g, ds.scenario(id)?, cfg)).collect()
        };
        let train_ids: Vec<u32> = train_extra.iter().chain(&fold.train).copied().collect();
        out.push(FoldEval {
            fold: fold.fold_index,
            train: eval_ids(&train_ids)?,
            test: eval_ids(&fold.test)?,
        });
    }
    let summary = summarize(&out)?;
    Ok((out, summary))
}

pub const EVAL_CSV_HEADER: &str = "scenario_id,split,TP,FP,FN,IoU,Precision";

pub fn eval_csv_rows(split: Split, evals: &[ConditionEval]) -> String {
    evals
        .iter()
        .map(|e| {
            format!(
                "{},{},{},{},{},{},{}\n",
                e.scenario_id,
                split.as_str(),
                e.counts.tp,
                e.counts.fp,
                e.counts.fn_,
                e.iou,
                e.precision
            )
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub lo: f64,
    pub hi: f64,
    pub frequency: f64,
}

/// Relative-frequency histogram of values in `[0, 1]` over equal bins;
/// 1.0 falls in the last bin.
pub fn iou_histogram(values: &[f64], bins: usize) -> Result<Vec<HistBin>> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Usage("histogram needs values and at least one bin".into()));
    }
    if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::Range(format!("IoU {v} outside [0, 1]")));
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        counts[((v * bins as f64) as usize).min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .iter()
        .enumerate()
        .map(|(i, &c)| HistBin {
            lo: i as f64 / bins as f64,
            hi: (i + 1) as f64 / bins as f64,
            frequency: c as f64 / n,
        })
        .collect())
}

/// Normalized centers of the free cells; a generator that outputs exactly
/// these covers the free region.
pub fn free_cell_targets(map: &JointCellMap) -> Vec<[f64; 2]> {
    let (_, n2) = map.dims;
    map.free
        .iter()
        .enumerate()
        .filter(|(_, &f)| f)
        .map(|(k, _)| {
            let q = JointAngles::new_unchecked(
                THETA1_MIN + (k / n2) as f64 * map.dtheta,
                THETA2_MIN + (k % n2) as f64 * map.dtheta,
            );
            normalize(q).expect("grid points are in range")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::denormalize;
    use crate::geometry::Point;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn map() -> JointCellMap {
        let obs = [Obstacle::rect(Point::new(0.4, -0.075), Point::new(0.6, 0.075))];
        JointCellMap::from_obstacles(&obs, &EvalConfig { dtheta: 5.0 }).unwrap()
    }

    #[test]
    fn metric_arithmetic() {
        let c = EvalCounts { tp: 3, fp: 1, fn_: 2 };
        assert_eq!(c.iou(), 0.5);
        assert_eq!(c.precision(), 0.75);
        assert_eq!(EvalCounts::default().precision(), 0.0);
    }

    #[test]
    fn grid_dimensions() {
        assert_eq!(EvalConfig::default().dims(), (181, 146));
        assert_eq!(EvalConfig::default().cells(), 26_426);
        assert_eq!(EvalConfig { dtheta: 5.0 }.dims(), (37, 30));
        assert_eq!(EvalConfig { dtheta: 2.0 }.dims(), (91, 73));
        assert!(EvalConfig { dtheta: 0.0 }.validate().is_err());
        let centers = EvalConfig { dtheta: 5.0 }.latent_centers();
        assert_eq!(centers.len(), 1110);
        assert!(centers.iter().flatten().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn ideal_generator_scores_one() {
        let m = map();
        let ideal: Vec<JointAngles> = free_cell_targets(&m).into_iter().map(|u| denormalize(u).unwrap()).collect();
        let c = count_generated(&ideal, &m);
        assert_eq!((c.iou(), c.precision()), (1.0, 1.0));
        assert_eq!(c.tp + c.fn_, m.free_count());
    }

    #[test]
    fn counts_are_conserved_and_monotone() {
        let m = map();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut generated = Vec::new();
        let mut prev = count_generated(&generated, &m);
        assert_eq!(prev.fn_, m.free_count());
        for _ in 0..40 {
            for _ in 0..25 {
                generated.push(JointAngles::new_unchecked(rng.gen_range(-90.0..=90.0), rng.gen_range(5.0..=150.0)));
            }
            let c = count_generated(&generated, &m);
            assert_eq!(c.tp + c.fn_, m.free_count());
            assert!(c.tp >= prev.tp && c.fp >= prev.fp && c.fn_ <= prev.fn_);
            prev = c;
        }
    }

    #[test]
    fn nearest_cell_assignment() {
        let m = map();
        let n2 = m.dims.1;
        assert_eq!(m.cell_of(JointAngles::new_unchecked(-90.0, 5.0)), 0);
        assert_eq!(m.cell_of(JointAngles::new_unchecked(-87.4, 7.6)), n2 + 1);
        assert_eq!(m.cell_of(JointAngles::new_unchecked(90.0, 150.0)), m.free.len() - 1);
    }

    fn eval(id: u32, iou: f64, precision: f64) -> ConditionEval {
        ConditionEval {
            scenario_id: id,
            counts: EvalCounts::default(),
            iou,
            precision,
        }
    }

    #[test]
    fn single_condition_summary() {
        let folds = [FoldEval {
            fold: 0,
            train: vec![eval(1, 0.4, 0.9)],
            test: vec![eval(2, 0.3, 0.8)],
        }];
        let s = summarize(&folds).unwrap();
        assert_eq!(s.train.iou, Stats { mean: 0.4, std: 0.0, min: 0.4, max: 0.4 });
        assert_eq!(s.test.precision.mean, 0.8);
        assert!(summarize(&[]).is_err());
    }

    #[test]
    fn summary_mean_matches_independent_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let folds: Vec<FoldEval> = (0..5)
            .map(|f| FoldEval {
                fold: f,
                train: (0..16).map(|i| eval(i, rng.gen(), rng.gen())).collect(),
                test: (0..4).map(|i| eval(i, rng.gen(), rng.gen())).collect(),
            })
            .collect();
        let s = summarize(&folds).unwrap();
        let mut acc = 0.0;
        let mut n = 0;
        for f in &folds {
            for e in &f.test {
                acc += e.iou;
                n += 1;
            }
        }
        assert!((s.test.iou.mean - acc / n as f64).abs() < 1e-12);
        assert_eq!(s.train.conditions, 80);
    }

    #[test]
    fn histogram_properties() {
        let h = iou_histogram(&[0.42; 7], 10).unwrap();
        assert_eq!(h.iter().filter(|b| b.frequency > 0.0).count(), 1);
        assert_eq!(h[4].frequency, 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f64> = (0..20_000).map(|_| rng.gen()).collect();
        let h = iou_histogram(&values, 10).unwrap();
        assert!((h.iter().map(|b| b.frequency).sum::<f64>() - 1.0).abs() < 1e-9);
        // binomial standard error at n = 20000, p = 0.1 is about 0.0021
        assert!(h.iter().all(|b| (b.frequency - 0.1).abs() < 0.01));
        assert_eq!(iou_histogram(&[1.0], 4).unwrap()[3].frequency, 1.0);
        assert!(iou_histogram(&[], 4).is_err());
        assert!(iou_histogram(&[1.5], 4).is_err());
    }
}
