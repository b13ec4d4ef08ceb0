use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use cfree_bench::{chart, nested_sweep, run_suite, to_csv};
use cfree_core::cgan::train::log_csv;
use cfree_core::cgan::{train, CganModel, TrainingSet};
use cfree_core::dataset::{make_folds, Dataset};
use cfree_core::evaluation::{
    evaluate_condition, eval_csv_rows, iou_histogram, summarize, ConditionEval, CvSummary, EvalConfig, FoldEval,
    JointCellMap, Split, EVAL_CSV_HEADER,
};
use cfree_core::geometry::JointAngles;
use cfree_core::planner::{Method, Plan, Planner};
use cfree_core::scenarios::{ObstacleScenario, ScenarioSet, EMPTY_SCENARIO_ID};
use cfree_core::svg::{histogram, plan_figure};
use cfree_core::{Error, Result, VERSION};

use crate::config::RunConfig;
use crate::{Cli, Command};

/// Resolution of the collision map drawn behind plan figures.
const FIGURE_DTHETA: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Provenance {
    tool_version: String,
    seed: u64,
    config_hash: String,
}

impl Provenance {
    fn of(cfg: &RunConfig) -> Self {
        Provenance {
            tool_version: VERSION.into(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
        }
    }

    fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("tool_version", self.tool_version.clone()),
            ("seed", self.seed.to_string()),
            ("config_hash", self.config_hash.clone()),
        ]
    }

    fn csv_header(&self) -> String {
        self.pairs().iter().map(|(k, v)| format!("# {k}: {v}\n")).collect()
    }

    /// Inserts a comment right after the opening `<svg ...>` tag.
    fn stamp_svg(&self, svg: &str) -> String {
        let comment = format!(
            "<!-- tool_version={} seed={} config_hash={} -->\n",
            self.tool_version, self.seed, self.config_hash
        );
        match svg.find(">\n") {
            Some(i) => format!("{}{comment}{}", &svg[..i + 2], &svg[i + 2..]),
            None => svg.to_string(),
        }
    }
}

/// How a checkpoint's training scenarios were chosen; stored as its note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TrainNote {
    fold: String,
    folds: usize,
    fold_seed: u64,
    train_ids: Vec<u32>,
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn parse_angles(text: &str) -> Result<JointAngles> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let bad = || Error::Usage(format!("expected θ1,θ2 in degrees, got {text:?}"));
    if parts.len() != 2 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    JointAngles::new(a, b)
}

/// `(train ids, test ids)` for a fold index or `empty`.
fn split_ids(fold: &str, ds: &Dataset, cfg: &RunConfig) -> Result<(Vec<u32>, Vec<u32>)> {
    let obstacle_ids = ds.scenarios.obstacle_ids();
    if fold == "empty" {
        return Ok((vec![EMPTY_SCENARIO_ID], obstacle_ids));
    }
    let k: usize = fold
        .parse()
        .map_err(|_| Error::Usage(format!("fold must be an index or `empty`, got {fold:?}")))?;
    let folds = make_folds(&obstacle_ids, cfg.folds, cfg.fold_seed)?;
    let split = folds
        .get(k)
        .ok_or_else(|| Error::Usage(format!("fold {k} out of {}", cfg.folds)))?;
    let mut train = vec![EMPTY_SCENARIO_ID];
    train.extend(&split.train);
    Ok((train, split.test.clone()))
}

fn load_scenario(id: u32, scenarios: Option<&Path>, data: Option<&Path>) -> Result<ObstacleScenario> {
    let file = match (scenarios, data) {
        (Some(f), _) => Some(f.to_path_buf()),
        (None, Some(d)) => Some(d.join("scenarios.json")),
        (None, None) => None,
    };
    match file {
        Some(f) => ScenarioSet::load(&f)?
            .get(id)
            .cloned()
            .ok_or_else(|| Error::Data(format!("scenario {id} not in {}", f.display()))),
        None if id == EMPTY_SCENARIO_ID => Ok(ObstacleScenario::empty()),
        None => Err(Error::Usage(format!("scenario {id} needs --scenarios or --data"))),
    }
}

fn log_path(ckpt: &Path) -> PathBuf {
    ckpt.with_extension("log.csv")
}

pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    cfg.apply_overrides(&cli.set)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    match cli.command {
        Command::GenScenarios { count, out } => {
            if let Some(n) = count {
                cfg.count = n;
            }
            let mut set = ScenarioSet::generate(cfg.count, cfg.seed, &cfg.generation)?;
            set.config_hash = cfg.hash();
            set.save(&out)
        }
        Command::GenDataset { scenarios, out } => {
            let set = ScenarioSet::load(&scenarios)?;
            Dataset::build(set).save(&out)
        }
        Command::Train { data, fold, out, epochs } => {
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            train_command(&cfg, &data, &fold, &out)
        }
        Command::Eval {
            ckpt,
            data,
            dtheta,
            fold,
            out,
        } => {
            if let Some(d) = dtheta {
                cfg.eval.dtheta = d;
            }
            eval_command(&cfg, &ckpt, &data, fold, &out)
        }
        Command::Plan {
            ckpt,
            scenario,
            start,
            goal,
            method,
            scenarios,
            data,
            out,
        } => {
            let method: Method = method.parse()?;
            let (start, goal) = (parse_angles(&start)?, parse_angles(&goal)?);
            let scn = load_scenario(scenario, scenarios.as_deref(), data.as_deref())?;
            plan_command(&cfg, &ckpt, &scn, start, goal, method, &out)
        }
        Command::Bench {
            ckpt,
            scenarios,
            sweep,
            out,
        } => {
            let scns = match scenarios {
                Some(f) => ScenarioSet::load(&f)?.scenarios,
                None => {
                    let counts = sweep
                        .split(',')
                        .map(|c| c.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| Error::Usage(format!("invalid sweep {sweep:?}")))?;
                    nested_sweep(&counts, cfg.seed)?
                }
            };
            bench_command(&cfg, &ckpt, &scns, &out)
        }
    }
}

fn train_command(cfg: &RunConfig, data: &Path, fold: &str, out: &Path) -> Result<()> {
    let ds = Dataset::load(data)?;
    let (train_ids, _) = split_ids(fold, &ds, cfg)?;
    let set = TrainingSet::from_dataset(&ds, &train_ids)?;
    let tcfg = cfg.train_config();
    let note = serde_json::to_string(&TrainNote {
        fold: fold.to_string(),
        folds: cfg.folds,
        fold_seed: cfg.fold_seed,
        train_ids,
    })?;
    let prov = Provenance::of(cfg);
    let diagnostic = out.with_extension("diverged.ckpt");
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let epochs = tcfg.epochs;
    let every = tcfg.checkpoint_every;
    let outcome = train(&set, &cfg.arch, &tcfg, Some(&diagnostic), |e, trainer| {
        eprintln!("{}", e.csv_row());
        if e.epoch == epochs || (every > 0 && e.epoch % every == 0) {
            trainer.save(out, &note)?;
        }
        Ok(())
    })?;
    if epochs == 0 {
        let mut meta = outcome.meta.clone();
        meta.note = note;
        let mut model = outcome.model;
        model.save(out, &meta, None)?;
    }
    write(&log_path(out), log_csv(&outcome.log, &prov.pairs()))
}

fn load_model(path: &Path) -> Result<(CganModel, Option<TrainNote>)> {
    let (model, meta, _) = CganModel::load(path)?;
    Ok((model, serde_json::from_str(&meta.note).ok()))
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    fold: String,
    dtheta: f64,
    #[serde(flatten)]
    summary: &'a CvSummary,
}

fn eval_command(cfg: &RunConfig, ckpt: &Path, data: &Path, fold: Option<String>, out: &Path) -> Result<()> {
    cfg.eval.validate()?;
    let (model, note) = load_model(ckpt)?;
    let ds = Dataset::load(data)?;
    let fold = fold.or(note.map(|n| n.fold)).unwrap_or_else(|| "empty".into());
    let (train_ids, test_ids) = split_ids(&fold, &ds, cfg)?;
    let g = &model.generator;
    let eval = |ids: &[u32]| -> Result<Vec<ConditionEval>> {
        ids.iter().map(|&id| evaluate_condition(g, ds.scenario(id)?, &cfg.eval)).collect()
    };
    let fe = FoldEval {
        fold: fold.parse().unwrap_or(0),
        train: eval(&train_ids)?,
        test: eval(&test_ids)?,
    };
    let summary = summarize(std::slice::from_ref(&fe))?;
    let prov = Provenance::of(cfg);
    fs::create_dir_all(out)?;
    let csv = format!(
        "{}{EVAL_CSV_HEADER}\n{}{}",
        prov.csv_header(),
        eval_csv_rows(Split::Train, &fe.train),
        eval_csv_rows(Split::Test, &fe.test)
    );
    write(&out.join("eval.csv"), csv)?;
    let report = EvalSummary {
        provenance: &prov,
        fold,
        dtheta: cfg.eval.dtheta,
        summary: &summary,
    };
    write(&out.join("eval_summary.json"), json(&report)?)?;
    let ious: Vec<f64> = fe.train.iter().chain(&fe.test).map(|e| e.iou).collect();
    let bins = iou_histogram(&ious, cfg.hist_bins)?;
    write(
        &out.join("iou_histogram.svg"),
        prov.stamp_svg(&histogram(&bins, "IoU over conditions", "IoU")),
    )?;
    println!(
        "train IoU {:.3} precision {:.3} | test IoU {:.3} precision {:.3}",
        summary.train.iou.mean, summary.train.precision.mean, summary.test.iou.mean, summary.test.precision.mean
    );
    Ok(())
}

#[derive(Serialize)]
struct PlanArtifact<'a> {
    #[serde(flatten)]
    provenance: &'a Provenance,
    #[serde(flatten)]
    plan: &'a Plan,
}

fn plan_command(
    cfg: &RunConfig,
    ckpt: &Path,
    scn: &ObstacleScenario,
    start: JointAngles,
    goal: JointAngles,
    method: Method,
    out: &Path,
) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let planner = Planner::new(&model.generator, scn, cfg.planner)?;
    let plan = planner.plan(start, goal, method)?;
    let prov = Provenance::of(cfg);
    write(out, json(&PlanArtifact { provenance: &prov, plan: &plan })?)?;
    let map = JointCellMap::from_obstacles(&scn.obstacles, &EvalConfig { dtheta: FIGURE_DTHETA })?;
    write(&out.with_extension("svg"), prov.stamp_svg(&plan_figure(&plan, scn, &map)))?;
    match plan.validation.first_violation {
        None => Ok(()),
        Some(v) => Err(Error::Planning(format!(
            "trajectory collides at ({:.2}, {:.2}) deg on segment {}; plan written to {}",
            v.angles[0],
            v.angles[1],
            v.segment,
            out.display()
        ))),
    }
}

fn bench_command(cfg: &RunConfig, ckpt: &Path, scns: &[ObstacleScenario], out: &Path) -> Result<()> {
    let (model, _) = load_model(ckpt)?;
    let records = run_suite(&model.generator, scns, &cfg.bench_config())?;
    let prov = Provenance::of(cfg);
    fs::create_dir_all(out)?;
    write(&out.join("bench.csv"), prov.csv_header() + &to_csv(&records))?;
    write(&out.join("bench.svg"), prov.stamp_svg(&chart(&records)))?;
    for r in &records {
        println!(
            "{:>3} obstacles  {:<26} {:.4} s  ratio {:.3}  valid {:.2}",
            r.obstacle_count,
            r.method.as_str(),
            r.seconds,
            r.ratio,
            r.valid_fraction
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn angle_parsing() {
        let q = parse_angles("-30.5, 40").unwrap();
        assert_eq!((q.theta1, q.theta2), (-30.5, 40.0));
        assert!(matches!(parse_angles("1,2,3"), Err(Error::Usage(_))));
        assert!(matches!(parse_angles("0,200"), Err(Error::Range(_))));
    }

    #[test]
    fn svg_stamp_follows_the_root_tag() {
        let p = Provenance {
            tool_version: "1".into(),
            seed: 2,
            config_hash: "ab".into(),
        };
        let s = p.stamp_svg("<svg a=\"b\">\n<rect/>\n</svg>\n");
        assert_eq!(s, "<svg a=\"b\">\n<!-- tool_version=1 seed=2 config_hash=ab -->\n<rect/>\n</svg>\n");
    }
}
