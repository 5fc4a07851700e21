//! Gradient-boosted regression trees over quantile-binned features, with a
//! pointwise squared-error objective and a pairwise LambdaRank objective.

mod binning;
mod booster;
mod flat;
mod lambda;
mod search;
mod tree;

pub use binning::BinMapper;
pub use booster::{
    fit, BoostedRanker, Objective, PosWeight, TrainConfig, TrainStatus, TrainingMeta,
    MODEL_FORMAT_VERSION,
};
pub use flat::FlatEnsemble;
pub use lambda::{delta_dcg, lambda_gradients};
pub use search::{
    hyperparameter_search, read_trial_log, write_trial_log, FloatDim, IntDim, SearchOutcome,
    SearchSpace, TrialRecord,
};
pub use tree::{Tree, TreeNode};
