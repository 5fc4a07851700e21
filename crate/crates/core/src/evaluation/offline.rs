use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{create_with_comment, ensure, Error, Result};
use crate::labeling::RankingDataset;
use crate::primitives::{dcg_unchecked, LabelKind};
use crate::ranker::BoostedRanker;

/// Mean over groups of DCG@k when each group is ranked by descending
/// `scores` (one per example, ties broken by ascending item id) and gained by
/// the `gain_label` column.
pub fn mean_group_dcg_of_scores(
    dataset: &RankingDataset,
    scores: &[f64],
    gain_label: LabelKind,
    k: usize,
) -> Result<f64> {
    ensure!(dataset.n_groups() > 0, Dataset, "cannot evaluate an empty {} split", dataset.split);
    ensure!(
        scores.len() == dataset.len(),
        InvalidArgument,
        "{} scores for {} examples",
        scores.len(),
        dataset.len()
    );
    ensure!(k >= 1, InvalidArgument, "dcg cutoff must be >= 1, got {k}");
    let examples = dataset.examples();
    let mut order = Vec::new();
    let mut gains = Vec::new();
    let mut total = 0.0;
    for range in dataset.group_ranges() {
        order.clear();
        order.extend(range.clone());
        order.sort_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then(examples[a].item_id.cmp(&examples[b].item_id))
        });
        gains.clear();
        gains.extend(order.iter().map(|&i| examples[i].labels.get(gain_label)));
        total += dcg_unchecked(&gains, k);
    }
    Ok(total / dataset.n_groups() as f64)
}

/// [`mean_group_dcg_of_scores`] with the scores of `model`.
pub fn mean_group_dcg(
    model: &BoostedRanker,
    dataset: &RankingDataset,
    gain_label: LabelKind,
    k: usize,
) -> Result<f64> {
    let scores = model.score_dataset(dataset)?;
    mean_group_dcg_of_scores(dataset, &scores, gain_label, k)
}

pub fn percent_loss(dcg_base: f64, dcg_pred: f64) -> Result<f64> {
    ensure!(
        dcg_base > 0.0 && dcg_base.is_finite(),
        InvalidArgument,
        "baseline dcg must be positive, got {dcg_base}"
    );
    ensure!(
        dcg_pred >= 0.0 && dcg_pred.is_finite(),
        InvalidArgument,
        "predicted dcg must be non-negative, got {dcg_pred}"
    );
    // Written as a ratio so that zero and equal predictions give exactly 100 and 0.
    Ok(100.0 * (1.0 - dcg_pred / dcg_base))
}

pub const MATRIX_KS: [usize; 3] = [3, 5, 10];

/// Percent DCG loss of each predictor model against the model trained on the
/// true label, for every cutoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationMatrix {
    pub ks: Vec<usize>,
    pub predictors: Vec<LabelKind>,
    pub truths: Vec<LabelKind>,
    /// `entries[k_index][predictor_index][truth_index]`.
    pub entries: Vec<Vec<Vec<f64>>>,
}

impl EvaluationMatrix {
    pub fn get(&self, k: usize, predictor: LabelKind, truth: LabelKind) -> Option<f64> {
        let ki = self.ks.iter().position(|x| *x == k)?;
        let pi = self.predictors.iter().position(|x| *x == predictor)?;
        let ti = self.truths.iter().position(|x| *x == truth)?;
        Some(self.entries[ki][pi][ti])
    }

    /// Diagonal entries (predictor = truth) are exactly zero.
    pub fn diagonal_is_zero(&self) -> bool {
        self.ks.iter().all(|k| {
            self.predictors
                .iter()
                .filter(|p| self.truths.contains(p))
                .all(|p| self.get(*k, *p, *p) == Some(0.0))
        })
    }

    /// For every cutoff, the S3 predictor loses strictly less DCG than the S1
    /// predictor against both truths that carry L2 feedback (S2 and S3), and
    /// the diagonal is zero.
    pub fn ordering_holds(&self) -> bool {
        let l2_truths = [LabelKind::S2, LabelKind::S3];
        self.diagonal_is_zero()
            && self.ks.iter().all(|k| {
                l2_truths.iter().all(|t| {
                    match (self.get(*k, LabelKind::S3, *t), self.get(*k, LabelKind::S1, *t)) {
                        (Some(s3), Some(s1)) => s3 < s1,
                        _ => false,
                    }
                })
            })
    }

    /// One row per (k, predictor), one column per true label.
    pub fn write_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let file = create_with_comment(path, comment)?;
        let mut w = csv::Writer::from_writer(file);
        let mut head = vec!["k".to_string(), "predictor".to_string()];
        head.extend(self.truths.iter().map(|t| t.to_string()));
        w.write_record(&head)?;
        for (ki, k) in self.ks.iter().enumerate() {
            for (pi, p) in self.predictors.iter().enumerate() {
                let mut row = vec![k.to_string(), p.to_string()];
                row.extend(self.entries[ki][pi].iter().map(|v| format!("{v:?}")));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Fixed-width text table with one decimal, rows grouped by cutoff.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:<8} {:<9}", "metric", "predictor");
        for t in &self.truths {
            let _ = write!(out, " {:>8}", t.to_string());
        }
        out.push('\n');
        for (ki, k) in self.ks.iter().enumerate() {
            for (pi, p) in self.predictors.iter().enumerate() {
                let metric = if pi == 0 { format!("DCG@{k}") } else { String::new() };
                let _ = write!(out, "{metric:<8} {:<9}", p.to_string());
                for v in &self.entries[ki][pi] {
                    let _ = write!(out, " {v:>8.1}");
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Builds the loss matrix over `predictors` x `truths`. `models` must hold a
/// model for every predictor and every truth; the model of a label is its own
/// baseline, so diagonal entries are exactly zero.
pub fn build_matrix(
    models: &BTreeMap<LabelKind, BoostedRanker>,
    test: &RankingDataset,
    predictors: &[LabelKind],
    truths: &[LabelKind],
    ks: &[usize],
) -> Result<EvaluationMatrix> {
    let lookup = |kind: LabelKind| {
        models
            .get(&kind)
            .ok_or_else(|| Error::Model(format!("no model trained on {kind}")))
    };
    let mut scores = BTreeMap::new();
    for kind in predictors.iter().chain(truths) {
        if !scores.contains_key(kind) {
            scores.insert(*kind, lookup(*kind)?.score_dataset(test)?);
        }
    }
    let mut entries = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut rows = Vec::with_capacity(predictors.len());
        for p in predictors {
            let mut row = Vec::with_capacity(truths.len());
            for t in truths {
                let base = mean_group_dcg_of_scores(test, &scores[t], *t, k)?;
                let pred = mean_group_dcg_of_scores(test, &scores[p], *t, k)?;
                let loss = if base == 0.0 && pred == 0.0 {
                    0.0
                } else {
                    percent_loss(base, pred).map_err(|e| {
                        Error::Model(format!("DCG@{k} of the {t} baseline: {e}"))
                    })?
                };
                row.push(loss);
            }
            rows.push(row);
        }
        entries.push(rows);
    }
    Ok(EvaluationMatrix {
        ks: ks.to_vec(),
        predictors: predictors.to_vec(),
        truths: truths.to_vec(),
        entries,
    })
}
