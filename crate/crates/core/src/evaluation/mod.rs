//! Offline cross-evaluation (percent DCG loss matrix) and simulated online
//! comparison of rankers trained on different labels.

mod offline;
mod online;

pub use offline::{
    build_matrix, mean_group_dcg, mean_group_dcg_of_scores, percent_loss, EvaluationMatrix,
    MATRIX_KS,
};
pub use online::{
    compare_policies, online_compare, welch_t_test, Comparison, ModelPolicy, OnlineReport,
    VariantResult, ONLINE_TESTS,
};
