//! Run configuration: one TOML file drives every pipeline stage.
//!
//! Unknown keys are errors at every level. All sections are optional and
//! default to the desk-scale profile.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{ensure, Error, Result};
use crate::labeling::{LabelOptions, SplitRatios};
use crate::primitives::ScalarizationWeights;
use crate::ranker::{SearchSpace, TrainConfig};
use crate::seeding;
use crate::simulator::WorldConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    pub l1: ScalarizationWeights,
    pub l2: ScalarizationWeights,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            l1: ScalarizationWeights {
                likes: 1.0,
                shares: 2.0,
                favs: 1.5,
                clicks: 0.5,
            },
            l2: ScalarizationWeights {
                likes: 1.0,
                shares: 2.0,
                favs: 1.5,
                clicks: 0.0,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub n_sessions: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self { n_sessions: 20_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LabelingConfig {
    /// Negatives are subsampled until positives make up at least this share.
    pub target_positive_rate: f64,
    pub split_ratios: SplitRatios,
    pub debias_l1: bool,
}

impl Default for LabelingConfig {
    fn default() -> Self {
        Self {
            target_positive_rate: 0.05,
            split_ratios: SplitRatios::default(),
            debias_l1: false,
        }
    }
}

impl LabelingConfig {
    pub fn options(&self) -> LabelOptions {
        LabelOptions {
            debias_l1: self.debias_l1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchConfig {
    pub n_trials: usize,
    pub space: SearchSpace,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            n_trials: 10,
            space: SearchSpace::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationConfig {
    pub ks: Vec<usize>,
    /// Sessions per seed in the online comparison.
    pub n_sessions: u64,
    pub n_seeds: usize,
    pub alpha: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            ks: vec![3, 5, 10],
            n_sessions: 200_000,
            n_seeds: 5,
            alpha: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Master seed; every stage seed is derived from it.
    pub seed: u64,
    /// Output directory for all artifacts.
    pub out: PathBuf,
    pub world: WorldConfig,
    pub weights: WeightsConfig,
    pub simulation: SimulationConfig,
    pub labeling: LabelingConfig,
    pub training: TrainConfig,
    pub search: SearchConfig,
    pub evaluation: EvaluationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            out: PathBuf::from("runs/desk"),
            world: WorldConfig::default(),
            weights: WeightsConfig::default(),
            simulation: SimulationConfig::default(),
            labeling: LabelingConfig::default(),
            training: TrainConfig::default(),
            search: SearchConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

/// Stage tags fed to [`seeding::derive`] together with the master seed.
pub mod stage {
    pub const WORLD: &str = "world";
    pub const SIMULATE: &str = "simulate";
    pub const PREPARE: &str = "prepare";
    pub const TRAIN: &str = "train";
    pub const ONLINE: &str = "online";
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.world.validate()?;
        self.weights.l1.validate()?;
        self.weights.l2.validate()?;
        let lab = &self.labeling;
        ensure!(
            lab.target_positive_rate > 0.0 && lab.target_positive_rate < 1.0,
            Config,
            "labeling.target_positive_rate must be in (0, 1), got {}",
            lab.target_positive_rate
        );
        lab.split_ratios.validate()?;
        self.training.validate()?;
        ensure!(self.search.n_trials >= 1, Config, "search.n_trials must be >= 1");
        self.search.space.validate()?;
        let ev = &self.evaluation;
        ensure!(!ev.ks.is_empty(), Config, "evaluation.ks is empty");
        ensure!(ev.ks.iter().all(|k| *k >= 1), Config, "evaluation.ks must be >= 1");
        ensure!(ev.n_seeds >= 2, Config, "evaluation.n_seeds must be >= 2");
        ensure!(ev.n_sessions >= 1, Config, "evaluation.n_sessions must be >= 1");
        ensure!(
            ev.alpha > 0.0 && ev.alpha < 1.0,
            Config,
            "evaluation.alpha must be in (0, 1), got {}",
            ev.alpha
        );
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML rendering,
    /// excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let canonical = RunConfig {
            out: PathBuf::new(),
            ..self.clone()
        }
        .to_toml()?;
        let digest = Sha256::digest(canonical.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        seeding::derive(self.seed, &[seeding::tag(stage)])
    }

    pub fn world_seed(&self) -> u64 {
        self.stage_seed(stage::WORLD)
    }

    /// Seed of every training run and hyperparameter search. Shared by all
    /// labels so each label is tuned over the same sampled configurations.
    pub fn train_seed(&self) -> u64 {
        self.stage_seed(stage::TRAIN)
    }

    pub fn online_seeds(&self) -> Vec<u64> {
        (0..self.evaluation.n_seeds as u64)
            .map(|i| seeding::derive(self.seed, &[seeding::tag(stage::ONLINE), i]))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn toml_round_trip() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = "seed = 1\n\n[world]\nn_userz = 5\n";
        let err = RunConfig::from_toml(text).unwrap_err().to_string();
        assert!(err.contains("line 4"), "{err}");
        assert!(err.contains("n_userz"), "{err}");
        assert!(RunConfig::from_toml("[training]\nobjectiv = \"pointwise\"\n").is_err());
        assert!(RunConfig::from_toml("[search]\nn_trial = 3\n").is_err());
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[training]\nmax_depth = 0\n").is_err());
        assert!(RunConfig::from_toml("[evaluation]\nn_seeds = 1\n").is_err());
        assert!(RunConfig::from_toml("[labeling]\nsplit_ratios = [0.5, 0.5, 0.5]\n").is_err());
    }

    #[test]
    fn search_dimensions_parse() {
        let text = r#"
[search]
n_trials = 2

[search.space]
learning_rate = { choice = [0.05, 0.1] }
max_depth = { range = { low = 2, high = 4 } }
num_trees_max = { fixed = 50 }
min_examples_per_leaf = { fixed = 5 }

[training]
scale_pos_weight = 3.0
"#;
        let c = RunConfig::from_toml(text).unwrap();
        assert_eq!(c.search.n_trials, 2);
        assert_eq!(c.search.space.num_trees_max, crate::ranker::IntDim::Fixed(50));
        assert_eq!(c.training.scale_pos_weight, crate::ranker::PosWeight::Fixed(3.0));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::default();
        let b = RunConfig {
            out: PathBuf::from("elsewhere"),
            ..a.clone()
        };
        let c = RunConfig { seed: 7, ..a.clone() };
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_ne!(a.hash().unwrap(), c.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 16);
    }

    #[test]
    fn stage_seeds_differ() {
        let c = RunConfig::default();
        assert_ne!(c.world_seed(), c.stage_seed(stage::SIMULATE));
        assert_ne!(c.train_seed(), c.stage_seed(stage::PREPARE));
        let seeds = c.online_seeds();
        assert_eq!(seeds.len(), 5);
        assert_ne!(seeds[0], seeds[1]);
    }
}
