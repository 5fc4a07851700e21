use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::binning::BinMapper;
use super::flat::FlatEnsemble;
use super::lambda::{accumulate_lambdas, PairWeights};
use super::tree::{GrowParams, Tree, TreeGrower};
use crate::error::{ensure, Error, Result};
use crate::evaluation::mean_group_dcg_of_scores;
use crate::labeling::RankingDataset;
use crate::primitives::LabelKind;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Scores beyond this magnitude are treated as divergence.
const MAX_SCORE: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    /// Weighted squared error on the label.
    Pointwise,
    /// Pairwise logistic loss weighted by |dDCG|.
    LambdaRank,
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Pointwise => "pointwise",
            Objective::LambdaRank => "lambdarank",
        })
    }
}

/// Weight of positive examples: `"auto"` means #negatives / #positives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PosWeight {
    Auto,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PosWeightRepr {
    Number(f64),
    Text(String),
}

impl Serialize for PosWeight {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            PosWeight::Auto => PosWeightRepr::Text("auto".into()),
            PosWeight::Fixed(w) => PosWeightRepr::Number(*w),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PosWeight {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PosWeightRepr::deserialize(d)? {
            PosWeightRepr::Number(w) => Ok(PosWeight::Fixed(w)),
            PosWeightRepr::Text(t) if t == "auto" => Ok(PosWeight::Auto),
            PosWeightRepr::Text(t) => Err(serde::de::Error::custom(format!(
                "scale_pos_weight must be a number or \"auto\", got \"{t}\""
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    pub num_trees_max: usize,
    pub max_depth: usize,
    pub min_examples_per_leaf: usize,
    pub learning_rate: f64,
    pub histogram_bins: usize,
    pub scale_pos_weight: PosWeight,
    pub early_stopping_patience: usize,
    /// Cutoff of the validation DCG used for early stopping.
    pub early_stopping_k: usize,
    pub sigma: f64,
    pub l2_reg: f64,
    /// Cutoff of the dDCG weights in the pairwise objective.
    pub lambda_k: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::LambdaRank,
            num_trees_max: 300,
            max_depth: 6,
            min_examples_per_leaf: 20,
            learning_rate: 0.1,
            histogram_bins: 64,
            scale_pos_weight: PosWeight::Auto,
            early_stopping_patience: 50,
            early_stopping_k: 10,
            sigma: 1.0,
            l2_reg: 1.0,
            lambda_k: 10,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.num_trees_max >= 1, Config, "num_trees_max must be >= 1");
        ensure!(self.max_depth >= 1, Config, "max_depth must be >= 1");
        ensure!(self.max_depth <= 16, Config, "max_depth must be <= 16");
        ensure!(self.min_examples_per_leaf >= 1, Config, "min_examples_per_leaf must be >= 1");
        ensure!(
            self.learning_rate > 0.0 && self.learning_rate.is_finite(),
            Config,
            "learning_rate must be positive, got {}",
            self.learning_rate
        );
        ensure!(
            (2..=256).contains(&self.histogram_bins),
            Config,
            "histogram_bins must be in 2..=256, got {}",
            self.histogram_bins
        );
        if let PosWeight::Fixed(w) = self.scale_pos_weight {
            ensure!(
                w > 0.0 && w.is_finite(),
                Config,
                "scale_pos_weight must be positive or \"auto\", got {w}"
            );
        }
        ensure!(self.early_stopping_patience >= 1, Config, "early_stopping_patience must be >= 1");
        ensure!(self.early_stopping_k >= 1, Config, "early_stopping_k must be >= 1");
        ensure!(self.lambda_k >= 1, Config, "lambda_k must be >= 1");
        ensure!(
            self.sigma > 0.0 && self.sigma.is_finite(),
            Config,
            "sigma must be positive, got {}",
            self.sigma
        );
        ensure!(
            self.l2_reg >= 0.0 && self.l2_reg.is_finite(),
            Config,
            "l2_reg must be non-negative, got {}",
            self.l2_reg
        );
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    /// Validation metric stopped improving for `patience` iterations.
    EarlyStopped,
    /// `num_trees_max` reached.
    MaxTrees,
    /// All training labels identical; the model is constant.
    DegenerateLabels,
    /// Scores became non-finite or exploded; the best earlier snapshot was kept.
    Diverged,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub seed: u64,
    pub label: LabelKind,
    pub iterations_run: usize,
    pub best_iteration: usize,
    pub best_validation_dcg: f64,
    pub status: TrainStatus,
    pub config: TrainConfig,
    /// Free-form key/value pairs stamped by the caller (tool version, seeds, config hash).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub provenance: BTreeMap<String, String>,
}

/// `score(x) = base_score + learning_rate * sum_t tree_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostedRanker {
    pub format_version: u32,
    pub objective: Objective,
    pub n_features: usize,
    pub bin_edges: Vec<Vec<f64>>,
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
    pub meta: TrainingMeta,
}

impl BoostedRanker {
    pub fn score(&self, features: &[f64]) -> Result<f64> {
        ensure!(
            features.len() == self.n_features,
            InvalidArgument,
            "model expects {} features, got {}",
            self.n_features,
            features.len()
        );
        Ok(self.score_unchecked(features))
    }

    #[inline]
    pub(crate) fn score_unchecked(&self, features: &[f64]) -> f64 {
        // Same accumulation order as training, so scores match bit for bit.
        self.trees
            .iter()
            .fold(self.base_score, |s, t| s + self.learning_rate * t.predict(features))
    }

    pub fn score_dataset(&self, dataset: &RankingDataset) -> Result<Vec<f64>> {
        ensure!(
            dataset.is_empty() || dataset.n_features() == self.n_features,
            InvalidArgument,
            "model expects {} features, {} split has {}",
            self.n_features,
            dataset.split,
            dataset.n_features()
        );
        let rows: Vec<&[f64]> = dataset.examples().iter().map(|e| e.features.as_slice()).collect();
        Ok(FlatEnsemble::new(self).score_rows(&rows))
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.format_version == MODEL_FORMAT_VERSION,
            Model,
            "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
            self.format_version
        );
        ensure!(
            self.base_score.is_finite() && self.learning_rate.is_finite() && self.learning_rate > 0.0,
            Model,
            "non-finite base score or learning rate"
        );
        for (i, t) in self.trees.iter().enumerate() {
            ensure!(t.is_well_formed(self.n_features), Model, "tree {i} is malformed");
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::Model(format!("{}: {e}", path.display())))
    }
}

fn positive_weight(config: &TrainConfig, positive: &[bool]) -> f64 {
    match config.scale_pos_weight {
        PosWeight::Fixed(w) => w,
        PosWeight::Auto => {
            let pos = positive.iter().filter(|p| **p).count();
            let neg = positive.len() - pos;
            if pos == 0 || neg == 0 {
                1.0
            } else {
                neg as f64 / pos as f64
            }
        }
    }
}

fn all_finite_and_bounded(scores: &[f64]) -> bool {
    scores.iter().all(|s| s.is_finite() && s.abs() <= MAX_SCORE)
}

/// Boosts trees on `label` of `train`, early-stopping on mean validation
/// DCG at `config.early_stopping_k` gained by the same label. Returns the
/// snapshot with the best validation metric (ties keep the earlier one).
pub fn fit(
    train: &RankingDataset,
    validation: &RankingDataset,
    label: LabelKind,
    config: &TrainConfig,
) -> Result<BoostedRanker> {
    config.validate()?;
    ensure!(!train.is_empty(), Dataset, "empty training split");
    ensure!(!validation.is_empty(), Dataset, "empty validation split");
    ensure!(
        train.n_features() == validation.n_features(),
        Dataset,
        "train has {} features, validation {}",
        train.n_features(),
        validation.n_features()
    );
    let n_features = train.n_features();
    let y = train.label_column(label);
    let positive: Vec<bool> = train.examples().iter().map(|e| e.is_positive()).collect();
    let pos_weight = positive_weight(config, &positive);

    let rows: Vec<&[f64]> = train.examples().iter().map(|e| e.features.as_slice()).collect();
    let mapper = BinMapper::fit(&rows, config.histogram_bins)?;

    let weights: Vec<f64> = positive.iter().map(|p| if *p { pos_weight } else { 1.0 }).collect();
    let base_score = match config.objective {
        Objective::Pointwise => {
            let wsum: f64 = weights.iter().sum();
            weights.iter().zip(&y).map(|(w, v)| w * v).sum::<f64>() / wsum
        }
        Objective::LambdaRank => 0.0,
    };

    let mut model = BoostedRanker {
        format_version: MODEL_FORMAT_VERSION,
        objective: config.objective,
        n_features,
        bin_edges: mapper.edges.clone(),
        base_score,
        learning_rate: config.learning_rate,
        trees: Vec::new(),
        meta: TrainingMeta {
            seed: config.seed,
            label,
            iterations_run: 0,
            best_iteration: 0,
            best_validation_dcg: 0.0,
            status: TrainStatus::MaxTrees,
            config: config.clone(),
            provenance: BTreeMap::new(),
        },
    };

    let mut val_scores = vec![base_score; validation.len()];
    let val_dcg = |scores: &[f64]| {
        mean_group_dcg_of_scores(validation, scores, label, config.early_stopping_k)
    };
    let mut best_dcg = val_dcg(&val_scores)?;
    model.meta.best_validation_dcg = best_dcg;

    if y.iter().all(|v| *v == y[0]) {
        log::warn!("all {label} training labels equal {}; returning a constant model", y[0]);
        model.meta.status = TrainStatus::DegenerateLabels;
        return Ok(model);
    }

    let binned = mapper.transform(&rows);
    let grower = TreeGrower::new(
        &mapper,
        &binned,
        GrowParams {
            max_depth: config.max_depth,
            min_examples_per_leaf: config.min_examples_per_leaf,
            l2_reg: config.l2_reg,
        },
    );
    let n = train.len();
    let mut scores = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut best_iteration = 0;

    for iteration in 1..=config.num_trees_max {
        match config.objective {
            Objective::Pointwise => {
                for i in 0..n {
                    grad[i] = weights[i] * (scores[i] - y[i]);
                    hess[i] = weights[i];
                }
            }
            Objective::LambdaRank => {
                grad.fill(0.0);
                hess.fill(0.0);
                for r in train.group_ranges() {
                    accumulate_lambdas(
                        &scores[r.clone()],
                        &y[r.clone()],
                        Some(PairWeights {
                            positive: &positive[r.clone()],
                            weight: pos_weight,
                        }),
                        config.lambda_k,
                        config.sigma,
                        &mut grad[r.clone()],
                        &mut hess[r.clone()],
                    );
                }
            }
        }
        let (tree, row_values) = grower.grow(&grad, &hess);
        for (s, v) in scores.iter_mut().zip(&row_values) {
            *s += config.learning_rate * v;
        }
        for (s, e) in val_scores.iter_mut().zip(validation.examples()) {
            *s += config.learning_rate * tree.predict(&e.features);
        }
        model.trees.push(tree);
        model.meta.iterations_run = iteration;

        if !all_finite_and_bounded(&scores) || !all_finite_and_bounded(&val_scores) {
            log::warn!("training on {label} diverged at iteration {iteration}");
            model.meta.status = TrainStatus::Diverged;
            break;
        }
        let dcg = val_dcg(&val_scores)?;
        if dcg > best_dcg {
            best_dcg = dcg;
            best_iteration = iteration;
        } else if iteration - best_iteration >= config.early_stopping_patience {
            model.meta.status = TrainStatus::EarlyStopped;
            break;
        }
    }

    model.trees.truncate(best_iteration);
    model.meta.best_iteration = best_iteration;
    model.meta.best_validation_dcg = best_dcg;
    Ok(model)
}
