//! From nested session logs to ranking datasets: label construction, feature
//! extraction, negative sampling and group-level stratified splitting.

mod dataset;
mod features;
mod labels;

pub use dataset::{
    build_examples, negative_sample, read_dataset, stratified_split, write_dataset,
    LabeledExample, RankingDataset, Split, SplitRatios,
};
pub use features::{extract_features, feature_count, feature_names};
pub use labels::{make_labels, LabelOptions, Labels};
