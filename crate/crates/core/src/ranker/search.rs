use std::fs::File;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::booster::{fit, BoostedRanker, TrainConfig, TrainStatus};
use crate::error::{create_with_comment, ensure, Error, Result};
use crate::labeling::RankingDataset;
use crate::primitives::LabelKind;
use crate::seeding::{self, StreamRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FloatDim {
    Fixed(f64),
    Choice(Vec<f64>),
    Uniform { low: f64, high: f64 },
    LogUniform { low: f64, high: f64 },
}

impl FloatDim {
    fn validate(&self, name: &str) -> Result<()> {
        match self {
            FloatDim::Fixed(_) => {}
            FloatDim::Choice(v) => ensure!(!v.is_empty(), Config, "{name}: empty choice list"),
            FloatDim::Uniform { low, high } => ensure!(
                low.is_finite() && high.is_finite() && low <= high,
                Config,
                "{name}: empty range [{low}, {high}]"
            ),
            FloatDim::LogUniform { low, high } => ensure!(
                *low > 0.0 && high.is_finite() && low <= high,
                Config,
                "{name}: log-uniform range [{low}, {high}] must be positive and non-empty"
            ),
        }
        Ok(())
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            FloatDim::Fixed(v) => *v,
            FloatDim::Choice(v) => *v.choose(rng).expect("validated non-empty"),
            FloatDim::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            FloatDim::LogUniform { low, high } => {
                (low.ln() + (high.ln() - low.ln()) * rng.random::<f64>()).exp()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum IntDim {
    Fixed(usize),
    Choice(Vec<usize>),
    /// Inclusive on both ends.
    Range { low: usize, high: usize },
}

impl IntDim {
    fn validate(&self, name: &str) -> Result<()> {
        match self {
            IntDim::Fixed(_) => {}
            IntDim::Choice(v) => ensure!(!v.is_empty(), Config, "{name}: empty choice list"),
            IntDim::Range { low, high } => {
                ensure!(low <= high, Config, "{name}: empty range [{low}, {high}]")
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut StreamRng) -> usize {
        match self {
            IntDim::Fixed(v) => *v,
            IntDim::Choice(v) => *v.choose(rng).expect("validated non-empty"),
            IntDim::Range { low, high } => rng.random_range(*low..=*high),
        }
    }
}

/// Ranges for the searched hyperparameters; everything else comes from the
/// base [`TrainConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub learning_rate: FloatDim,
    pub max_depth: IntDim,
    pub num_trees_max: IntDim,
    pub min_examples_per_leaf: IntDim,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rate: FloatDim::LogUniform {
                low: 0.03,
                high: 0.3,
            },
            max_depth: IntDim::Range { low: 3, high: 8 },
            num_trees_max: IntDim::Fixed(300),
            min_examples_per_leaf: IntDim::Choice(vec![10, 20, 50, 100]),
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        self.learning_rate.validate("learning_rate")?;
        self.max_depth.validate("max_depth")?;
        self.num_trees_max.validate("num_trees_max")?;
        self.min_examples_per_leaf.validate("min_examples_per_leaf")
    }

    /// A space with every dimension fixed to the values of `config`.
    pub fn point(config: &TrainConfig) -> Self {
        Self {
            learning_rate: FloatDim::Fixed(config.learning_rate),
            max_depth: IntDim::Fixed(config.max_depth),
            num_trees_max: IntDim::Fixed(config.num_trees_max),
            min_examples_per_leaf: IntDim::Fixed(config.min_examples_per_leaf),
        }
    }

    fn sample(&self, base: &TrainConfig, rng: &mut StreamRng) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate.sample(rng),
            max_depth: self.max_depth.sample(rng),
            num_trees_max: self.num_trees_max.sample(rng),
            min_examples_per_leaf: self.min_examples_per_leaf.sample(rng),
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub num_trees_max: usize,
    pub min_examples_per_leaf: usize,
    pub trees: usize,
    pub iterations_run: usize,
    pub status: TrainStatus,
    pub validation_dcg: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub best_config: TrainConfig,
    pub best_model: BoostedRanker,
    pub best_trial: usize,
    pub trials: Vec<TrialRecord>,
}

/// Trains one model per sampled configuration and keeps the one with the
/// highest validation DCG; ties go to fewer trees, then lower depth, then
/// the earlier trial. Every trial trains with `base.seed`.
pub fn hyperparameter_search(
    train: &RankingDataset,
    validation: &RankingDataset,
    label: LabelKind,
    base: &TrainConfig,
    space: &SearchSpace,
    n_trials: usize,
    seed: u64,
) -> Result<SearchOutcome> {
    ensure!(n_trials >= 1, Config, "n_trials must be >= 1");
    space.validate()?;
    let mut rng = seeding::rng(seed, &[seeding::tag("hyperparameter_search")]);
    let mut trials = Vec::with_capacity(n_trials);
    let mut best: Option<(usize, TrainConfig, BoostedRanker)> = None;
    for trial in 0..n_trials {
        let config = space.sample(base, &mut rng);
        let model = fit(train, validation, label, &config)?;
        let record = TrialRecord {
            trial,
            learning_rate: config.learning_rate,
            max_depth: config.max_depth,
            num_trees_max: config.num_trees_max,
            min_examples_per_leaf: config.min_examples_per_leaf,
            trees: model.trees.len(),
            iterations_run: model.meta.iterations_run,
            status: model.meta.status,
            validation_dcg: model.meta.best_validation_dcg,
        };
        log::info!(
            "{label} trial {trial}: lr {:.4} depth {} leaf {} -> {} trees, val DCG {:.5}",
            record.learning_rate,
            record.max_depth,
            record.min_examples_per_leaf,
            record.trees,
            record.validation_dcg
        );
        let better = match &best {
            None => true,
            Some((i, _, _)) => {
                let b: &TrialRecord = &trials[*i];
                record.validation_dcg > b.validation_dcg
                    || (record.validation_dcg == b.validation_dcg
                        && (record.trees, record.max_depth) < (b.trees, b.max_depth))
            }
        };
        trials.push(record);
        if better {
            best = Some((trial, config, model));
        }
    }
    let (best_trial, best_config, best_model) = best.expect("at least one trial");
    Ok(SearchOutcome {
        best_config,
        best_model,
        best_trial,
        trials,
    })
}

/// Writes one CSV row per trial. `comment`, when given, becomes a leading `# ` line.
pub fn write_trial_log(path: &Path, trials: &[TrialRecord], comment: Option<&str>) -> Result<()> {
    let file = create_with_comment(path, comment)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record([
        "trial",
        "learning_rate",
        "max_depth",
        "num_trees_max",
        "min_examples_per_leaf",
        "trees",
        "iterations_run",
        "status",
        "validation_dcg",
    ])?;
    for t in trials {
        let status = serde_json::to_value(t.status)?;
        w.write_record([
            t.trial.to_string(),
            format!("{:?}", t.learning_rate),
            t.max_depth.to_string(),
            t.num_trees_max.to_string(),
            t.min_examples_per_leaf.to_string(),
            t.trees.to_string(),
            t.iterations_run.to_string(),
            status.as_str().unwrap_or_default().to_string(),
            format!("{:?}", t.validation_dcg),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_trial_log(path: &Path) -> Result<Vec<TrialRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let bad = |what: &str| Error::Dataset(format!("{}: bad {what} in trial log", path.display()));
        let int = |i: usize, what: &str| rec[i].parse::<usize>().map_err(|_| bad(what));
        let float = |i: usize, what: &str| rec[i].parse::<f64>().map_err(|_| bad(what));
        out.push(TrialRecord {
            trial: int(0, "trial")?,
            learning_rate: float(1, "learning_rate")?,
            max_depth: int(2, "max_depth")?,
            num_trees_max: int(3, "num_trees_max")?,
            min_examples_per_leaf: int(4, "min_examples_per_leaf")?,
            trees: int(5, "trees")?,
            iterations_run: int(6, "iterations_run")?,
            status: serde_json::from_value(serde_json::Value::String(rec[7].to_string()))
                .map_err(|_| bad("status"))?,
            validation_dcg: float(8, "validation_dcg")?,
        });
    }
    Ok(out)
}
