//! The end-to-end commands. Stages exchange data only through files under
//! the run's output directory:
//!
//! | file                              | written by         |
//! |-----------------------------------|--------------------|
//! | `config.toml`                     | every command      |
//! | `world.json`                      | simulate           |
//! | `logs.ndjson`                     | simulate           |
//! | `data/{train,validation,test}.csv`| prepare            |
//! | `models/<label>.json`             | train              |
//! | `models/<label>.trials.csv`       | train              |
//! | `reports/matrix.{csv,txt}`        | evaluate-offline   |
//! | `reports/online_*.csv`, `reports/online.txt` | evaluate-online |
//!
//! Every artifact carries the tool version, master seed and config hash.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{stage, RunConfig};
use crate::error::{Error, Result};
use crate::evaluation::{build_matrix, online_compare, EvaluationMatrix, OnlineReport};
use crate::labeling::{
    build_examples, negative_sample, read_dataset, stratified_split, write_dataset,
    RankingDataset, Split,
};
use crate::primitives::LabelKind;
use crate::ranker::{hyperparameter_search, write_trial_log, BoostedRanker, TrainConfig};
use crate::seeding;
use crate::simulator::{build_world, read_logs, simulate_logs, write_logs, World};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Notice printed instead of the ordering checks when the world has no L2 feed.
pub const DEGENERATE_NOTICE: &str =
    "degenerate world (l2_size = 0): S1, S2 and S3 coincide, ordering checks skipped";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub master_seed: u64,
    pub config_hash: String,
}

impl Provenance {
    pub fn of(config: &RunConfig) -> Result<Self> {
        Ok(Self {
            tool_version: TOOL_VERSION.to_string(),
            master_seed: config.seed,
            config_hash: config.hash()?,
        })
    }

    pub fn comment(&self) -> String {
        format!(
            "nestedrank {} master_seed={} config={}",
            self.tool_version, self.master_seed, self.config_hash
        )
    }

    pub fn to_map(&self) -> BTreeMap<String, String> {
        BTreeMap::from([
            ("tool_version".to_string(), self.tool_version.clone()),
            ("master_seed".to_string(), self.master_seed.to_string()),
            ("config_hash".to_string(), self.config_hash.clone()),
        ])
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct WorldFile {
    provenance: Provenance,
    world: World,
}

/// Artifact locations under an output directory.
#[derive(Debug, Clone)]
pub struct RunPaths {
    pub root: PathBuf,
}

impl RunPaths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.toml")
    }

    pub fn world(&self) -> PathBuf {
        self.root.join("world.json")
    }

    pub fn logs(&self) -> PathBuf {
        self.root.join("logs.ndjson")
    }

    pub fn dataset(&self, split: Split) -> PathBuf {
        self.root.join("data").join(format!("{}.csv", split.name()))
    }

    pub fn model(&self, label: LabelKind) -> PathBuf {
        self.root.join("models").join(format!("{}.json", label.name()))
    }

    pub fn trial_log(&self, label: LabelKind) -> PathBuf {
        self.root.join("models").join(format!("{}.trials.csv", label.name()))
    }

    pub fn report(&self, name: &str) -> PathBuf {
        self.root.join("reports").join(name)
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_config(config: &RunConfig, paths: &RunPaths, prov: &Provenance) -> Result<()> {
    write_text(&paths.config(), &format!("# {}\n{}", prov.comment(), config.to_toml()?))
}

fn staged<T>(name: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| e.in_stage(name))
}

pub fn load_world(path: &Path) -> Result<World> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: WorldFile = serde_json::from_str(&text)?;
    file.world.validate()?;
    Ok(file.world)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateSummary {
    pub n_sessions: u64,
    pub impressions: u64,
    /// Share of L1 impressions with at least one raw signal.
    pub positive_rate: f64,
    /// Clicks per L1 impression.
    pub click_through_rate: f64,
}

impl SimulateSummary {
    pub fn render(&self) -> String {
        format!(
            "sessions {}  impressions {}  positive rate {:.4}  click-through rate {:.4}",
            self.n_sessions, self.impressions, self.positive_rate, self.click_through_rate
        )
    }
}

/// Builds the world and simulates logging sessions.
pub fn cmd_simulate(config: &RunConfig) -> Result<SimulateSummary> {
    staged("simulate", || {
        let paths = RunPaths::new(&config.out);
        let prov = Provenance::of(config)?;
        write_config(config, &paths, &prov)?;
        let world = build_world(&config.world, config.world_seed())?;
        let logs = simulate_logs(&world, config.simulation.n_sessions, config.stage_seed(stage::SIMULATE));
        let file = WorldFile {
            provenance: prov.clone(),
            world,
        };
        write_text(&paths.world(), &(serde_json::to_string(&file)? + "\n"))?;
        write_logs(&paths.logs(), &logs, Some(&prov.comment()))?;

        let (mut impressions, mut positives, mut clicks) = (0u64, 0u64, 0u64);
        for log in &logs {
            for i in 0..log.l1_len() {
                let y = log.l1_signals(i);
                impressions += 1;
                positives += u64::from(!y.is_zero());
                clicks += u64::from(y.clicks);
            }
        }
        let rate = |x: u64| if impressions == 0 { 0.0 } else { x as f64 / impressions as f64 };
        Ok(SimulateSummary {
            n_sessions: logs.len() as u64,
            impressions,
            positive_rate: rate(positives),
            click_through_rate: rate(clicks),
        })
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split: Split,
    pub groups: usize,
    pub rows: usize,
    pub positive_rate: f64,
}

/// Labels the logs, subsamples negatives and writes the three splits.
pub fn cmd_prepare(config: &RunConfig) -> Result<Vec<SplitSummary>> {
    staged("prepare", || {
        let paths = RunPaths::new(&config.out);
        let prov = Provenance::of(config)?;
        write_config(config, &paths, &prov)?;
        let world = load_world(&paths.world())?;
        let logs = read_logs(&paths.logs())?;
        if world.config.l2_size == 0 {
            log::warn!("{DEGENERATE_NOTICE}");
        }
        let examples = build_examples(
            &world,
            &logs,
            &config.weights.l1,
            &config.weights.l2,
            config.labeling.options(),
        )?;
        let seed = config.stage_seed(stage::PREPARE);
        let examples = negative_sample(
            examples,
            config.labeling.target_positive_rate,
            seeding::derive(seed, &[seeding::tag("negative_sample")]),
        )?;
        let splits = stratified_split(
            examples,
            config.labeling.split_ratios,
            seeding::derive(seed, &[seeding::tag("split")]),
        )?;
        let mut out = Vec::with_capacity(3);
        for ds in &splits {
            let path = paths.dataset(ds.split);
            ensure_parent(&path)?;
            write_dataset(&path, ds, Some(&prov.comment()))?;
            out.push(SplitSummary {
                split: ds.split,
                groups: ds.n_groups(),
                rows: ds.len(),
                positive_rate: ds.positive_rate(),
            });
        }
        Ok(out)
    })
}

pub fn load_split(paths: &RunPaths, split: Split) -> Result<RankingDataset> {
    read_dataset(&paths.dataset(split), split)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub label: LabelKind,
    pub trials: usize,
    pub best_trial: usize,
    pub trees: usize,
    pub validation_dcg: f64,
}

fn train_label(
    config: &RunConfig,
    paths: &RunPaths,
    prov: &Provenance,
    train: &RankingDataset,
    validation: &RankingDataset,
    label: LabelKind,
) -> Result<(BoostedRanker, TrainSummary)> {
    let seed = config.train_seed();
    let base = TrainConfig {
        seed,
        ..config.training.clone()
    };
    let outcome = hyperparameter_search(
        train,
        validation,
        label,
        &base,
        &config.search.space,
        config.search.n_trials,
        seed,
    )?;
    let mut model = outcome.best_model;
    model.meta.provenance = prov.to_map();
    let path = paths.model(label);
    ensure_parent(&path)?;
    model.save(&path)?;
    write_trial_log(&paths.trial_log(label), &outcome.trials, Some(&prov.comment()))?;
    let summary = TrainSummary {
        label,
        trials: outcome.trials.len(),
        best_trial: outcome.best_trial,
        trees: model.trees.len(),
        validation_dcg: model.meta.best_validation_dcg,
    };
    Ok((model, summary))
}

/// Runs the hyperparameter search for each of `labels` and saves the best models.
pub fn cmd_train(config: &RunConfig, labels: &[LabelKind]) -> Result<Vec<TrainSummary>> {
    staged("train", || {
        let paths = RunPaths::new(&config.out);
        let prov = Provenance::of(config)?;
        write_config(config, &paths, &prov)?;
        let train = load_split(&paths, Split::Train)?;
        let validation = load_split(&paths, Split::Validation)?;
        labels
            .iter()
            .map(|label| {
                train_label(config, &paths, &prov, &train, &validation, *label).map(|(_, s)| s)
            })
            .collect()
    })
}

fn load_models(paths: &RunPaths, labels: &[LabelKind]) -> Result<BTreeMap<LabelKind, BoostedRanker>> {
    labels
        .iter()
        .map(|l| Ok((*l, BoostedRanker::load(&paths.model(*l))?)))
        .collect()
}

fn header(prov: &Provenance) -> String {
    format!("# {}\n", prov.comment())
}

/// Builds the percent-loss matrix on the test split from the saved models.
pub fn cmd_evaluate_offline(config: &RunConfig) -> Result<EvaluationMatrix> {
    staged("evaluate-offline", || {
        let paths = RunPaths::new(&config.out);
        let prov = Provenance::of(config)?;
        write_config(config, &paths, &prov)?;
        let test = load_split(&paths, Split::Test)?;
        let models = load_models(&paths, &LabelKind::ALL)?;
        let matrix = build_matrix(
            &models,
            &test,
            &LabelKind::SYNTHETIC,
            &LabelKind::TRUTHS,
            &config.evaluation.ks,
        )?;
        let csv = paths.report("matrix.csv");
        ensure_parent(&csv)?;
        matrix.write_csv(&csv, Some(&prov.comment()))?;
        write_text(
            &paths.report("matrix.txt"),
            &format!(
                "{}% loss in DCG of the predictor label against the model trained on the true label\n\n{}",
                header(&prov),
                matrix.render()
            ),
        )?;
        Ok(matrix)
    })
}

/// Compares the S1/S2/S3 models in the simulator.
pub fn cmd_evaluate_online(config: &RunConfig) -> Result<OnlineReport> {
    staged("evaluate-online", || {
        let paths = RunPaths::new(&config.out);
        let prov = Provenance::of(config)?;
        write_config(config, &paths, &prov)?;
        let world = load_world(&paths.world())?;
        let models = load_models(&paths, &LabelKind::SYNTHETIC)?;
        let report = online_compare(
            &world,
            &models,
            &config.weights.l1,
            &config.weights.l2,
            config.evaluation.n_sessions,
            &config.online_seeds(),
            config.evaluation.alpha,
        )?;
        let variants = paths.report("online_variants.csv");
        ensure_parent(&variants)?;
        report.write_variants_csv(&variants, Some(&prov.comment()))?;
        report.write_comparisons_csv(&paths.report("online_comparisons.csv"), Some(&prov.comment()))?;
        write_text(&paths.report("online.txt"), &format!("{}{}", header(&prov), report.render()))?;
        Ok(report)
    })
}

/// Outcome of the ordering checks; `None` when they were skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderingChecks {
    pub offline: Option<bool>,
    pub online: Option<bool>,
}

impl OrderingChecks {
    pub fn skipped(&self) -> bool {
        self.offline.is_none() && self.online.is_none()
    }

    pub fn passed(&self) -> bool {
        self.offline != Some(false) && self.online != Some(false)
    }
}

#[derive(Debug, Clone)]
pub struct ReproduceOutcome {
    pub simulate: SimulateSummary,
    pub splits: Vec<SplitSummary>,
    pub training: Vec<TrainSummary>,
    pub matrix: EvaluationMatrix,
    pub online: OnlineReport,
    pub checks: OrderingChecks,
}

impl ReproduceOutcome {
    pub fn render_checks(&self) -> String {
        if self.checks.skipped() {
            return DEGENERATE_NOTICE.to_string();
        }
        let verdict = |v: Option<bool>| match v {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "skipped",
        };
        format!(
            "offline ordering (S3 loses less than S1 on S2/S3 truths, zero diagonal): {}\n\
             online ordering (Q(S3) > Q(S2) > Q(S1), Bonferroni-significant): {}",
            verdict(self.checks.offline),
            verdict(self.checks.online)
        )
    }
}

/// simulate -> prepare -> train every label -> offline matrix -> online comparison.
pub fn cmd_reproduce(config: &RunConfig) -> Result<ReproduceOutcome> {
    let simulate = cmd_simulate(config)?;
    log::info!("simulate: {}", simulate.render());
    let splits = cmd_prepare(config)?;
    let training = cmd_train(config, &LabelKind::ALL)?;
    let matrix = cmd_evaluate_offline(config)?;
    let online = cmd_evaluate_online(config)?;
    let checks = if config.world.l2_size == 0 {
        log::warn!("{DEGENERATE_NOTICE}");
        OrderingChecks {
            offline: None,
            online: None,
        }
    } else {
        OrderingChecks {
            offline: Some(matrix.ordering_holds()),
            online: Some(online.ordering_holds()),
        }
    };
    Ok(ReproduceOutcome {
        simulate,
        splits,
        training,
        matrix,
        online,
        checks,
    })
}
