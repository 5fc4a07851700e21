mod common;

use std::collections::BTreeMap;

use common::{dcg_oracle, disc, example, ideal_dcg};
use nestedrank::evaluation::{
    build_matrix, compare_policies, mean_group_dcg, mean_group_dcg_of_scores, online_compare,
    percent_loss, welch_t_test,
};
use nestedrank::labeling::{LabeledExample, Labels, RankingDataset, Split};
use nestedrank::primitives::{LabelKind, ScalarizationWeights};
use nestedrank::ranker::{fit, BoostedRanker, TrainConfig, Tree, TreeNode};
use nestedrank::simulator::{build_world, AsDrawn, ExpectedLabelPolicy, ItemId, Policy, WorldConfig};
use proptest::prelude::*;

fn row(group: u64, item: u32, x: f64, gains: &[(LabelKind, f64)]) -> LabeledExample {
    let mut labels = Labels::default();
    for (k, g) in gains {
        labels.set(*k, *g);
    }
    LabeledExample {
        group_id: group,
        item_id: ItemId(item),
        features: vec![x],
        labels,
    }
}

/// A one-feature model with the given trees, learning rate 1 and base 0.
fn model_with(trees: Vec<Tree>) -> BoostedRanker {
    let rows: Vec<_> = (0..6).map(|i| example(i / 3, (i % 3) as u32, vec![i as f64], LabelKind::S1, 1.0)).collect();
    let ds = RankingDataset::new(Split::Train, rows).unwrap();
    let mut model = fit(&ds, &ds, LabelKind::S1, &TrainConfig::default()).unwrap();
    model.base_score = 0.0;
    model.learning_rate = 1.0;
    model.trees = trees;
    model.validate().unwrap();
    model
}

fn split(threshold: f64, left: usize, right: usize) -> TreeNode {
    TreeNode::Internal {
        feature: 0,
        threshold,
        left,
        right,
    }
}

fn leaf(value: f64) -> TreeNode {
    TreeNode::Leaf { value }
}

#[test]
fn mean_group_dcg_hand_fixture() {
    let s3 = |g| [(LabelKind::S3, g)];
    let rows = vec![
        row(0, 0, 0.0, &s3(1.0)),
        row(0, 1, 0.0, &s3(2.0)),
        row(0, 2, 0.0, &s3(0.0)),
        row(1, 5, 0.0, &s3(0.0)),
        row(1, 3, 0.0, &s3(3.0)),
        row(1, 4, 0.0, &s3(1.0)),
    ];
    let ds = RankingDataset::new(Split::Test, rows).unwrap();
    let scores = [0.9, 0.1, 0.5, 0.2, 0.2, 0.7];
    // Group 0 ranks gains (1, 0, 2); group 1 ranks item 4, then the tie 3 before 5: (1, 3, 0).
    let hand = ((1.0 + 0.0 + 2.0 / 2.0) + (1.0 + 3.0 / 3f64.log2() + 0.0)) / 2.0;
    let got = mean_group_dcg_of_scores(&ds, &scores, LabelKind::S3, 3).unwrap();
    assert!((got - hand).abs() < 1e-12);
    assert!((got - 2.44639).abs() < 1e-5);
    assert!(mean_group_dcg_of_scores(&ds, &scores[..5], LabelKind::S3, 3).is_err());
    assert!(mean_group_dcg_of_scores(&ds, &scores, LabelKind::S3, 0).is_err());
}

#[test]
fn constant_model_ranks_by_item_id() {
    let rows = vec![
        row(0, 2, 0.3, &[(LabelKind::S1, 2.0)]),
        row(0, 0, 0.1, &[(LabelKind::S1, 0.0)]),
        row(0, 1, 0.2, &[(LabelKind::S1, 1.0)]),
    ];
    let ds = RankingDataset::new(Split::Test, rows).unwrap();
    let got = mean_group_dcg(&model_with(Vec::new()), &ds, LabelKind::S1, 3).unwrap();
    assert!((got - dcg_oracle(&[0.0, 1.0, 2.0], 3)).abs() < 1e-12);
}

#[test]
fn percent_loss_fixtures() {
    assert_eq!(percent_loss(1.7, 1.7).unwrap(), 0.0);
    assert!((percent_loss(1.0, 0.793).unwrap() - 20.7).abs() < 1e-9);
    assert!((percent_loss(2.0, 1.5).unwrap() - 25.0).abs() < 1e-12);
    assert_eq!(percent_loss(3.0, 0.0).unwrap(), 100.0);
    assert!(percent_loss(1.0, 1.5).unwrap() < 0.0);
    assert!(percent_loss(0.0, 1.0).is_err());
    assert!(percent_loss(1.0, -0.1).is_err());
    assert!(percent_loss(f64::NAN, 1.0).is_err());
}

/// Three groups; the S3 baseline is a stump on the feature, the S1 predictor is constant.
fn matrix_fixture() -> (RankingDataset, BTreeMap<LabelKind, BoostedRanker>) {
    let s3 = |g| [(LabelKind::S3, g)];
    let rows = vec![
        row(0, 0, 0.9, &s3(2.0)),
        row(0, 1, 0.1, &s3(0.0)),
        row(0, 2, 0.2, &s3(1.0)),
        row(1, 3, 0.2, &s3(0.0)),
        row(1, 4, 0.8, &s3(3.0)),
        row(1, 5, 0.1, &s3(1.0)),
        row(2, 6, 0.3, &s3(1.0)),
        row(2, 7, 0.4, &s3(0.0)),
        row(2, 8, 0.7, &s3(2.0)),
    ];
    let ds = RankingDataset::new(Split::Test, rows).unwrap();
    let stump = Tree {
        nodes: vec![split(0.5, 1, 2), leaf(0.0), leaf(1.0)],
    };
    let mut models = BTreeMap::new();
    models.insert(LabelKind::S3, model_with(vec![stump]));
    models.insert(LabelKind::S1, model_with(Vec::new()));
    (ds, models)
}

#[test]
fn build_matrix_hand_fixture() {
    let (ds, models) = matrix_fixture();
    let m = build_matrix(&models, &ds, &[LabelKind::S1, LabelKind::S3], &[LabelKind::S3], &[1, 3]).unwrap();
    // DCG@3 with the stump: (2,0,1), (3,0,1), (2,1,0); by item id: (2,0,1), (0,3,1), (1,0,2).
    let base3 = ((2.0 + 0.5) + (3.0 + 0.5) + (2.0 + disc(2))) / 3.0;
    let pred3 = ((2.0 + 0.5) + (3.0 * disc(2) + 0.5) + (1.0 + 1.0)) / 3.0;
    let loss3 = 100.0 * (base3 - pred3) / base3;
    let loss1 = 100.0 * (7.0 / 3.0 - 1.0) / (7.0 / 3.0);
    assert!((m.get(3, LabelKind::S1, LabelKind::S3).unwrap() - loss3).abs() < 1e-9);
    assert!((m.get(3, LabelKind::S1, LabelKind::S3).unwrap() - 20.13851).abs() < 1e-5);
    assert!((m.get(1, LabelKind::S1, LabelKind::S3).unwrap() - loss1).abs() < 1e-9);
    assert_eq!(m.get(3, LabelKind::S3, LabelKind::S3).unwrap(), 0.0);
    assert_eq!(m.get(1, LabelKind::S3, LabelKind::S3).unwrap(), 0.0);
    assert!(m.diagonal_is_zero());

    let mut missing = models.clone();
    missing.remove(&LabelKind::S1);
    assert!(build_matrix(&missing, &ds, &[LabelKind::S1], &[LabelKind::S3], &[3]).is_err());
}

#[test]
fn oracle_models_give_an_all_zero_matrix() {
    let mut rows = Vec::new();
    let gains = [0.0, 2.0, 1.0, 1.0, 0.0, 2.0, 0.0, 1.0, 2.0, 0.0, 0.0, 1.0];
    for (i, g) in gains.iter().enumerate() {
        let all: Vec<_> = LabelKind::SYNTHETIC.iter().map(|k| (*k, *g)).collect();
        rows.push(row(i as u64 / 4, i as u32, *g, &all));
    }
    let ds = RankingDataset::new(Split::Test, rows).unwrap();
    let oracle = Tree {
        nodes: vec![split(0.5, 1, 2), leaf(0.0), split(1.5, 3, 4), leaf(1.0), leaf(2.0)],
    };
    let models: BTreeMap<_, _> = LabelKind::SYNTHETIC
        .iter()
        .map(|k| (*k, model_with(vec![oracle.clone()])))
        .collect();
    let m = build_matrix(&models, &ds, &LabelKind::SYNTHETIC, &LabelKind::SYNTHETIC, &[1, 3, 5]).unwrap();
    assert!(m.entries.iter().flatten().flatten().all(|v| *v == 0.0));
    assert!(!m.ordering_holds(), "strict ordering cannot hold on a tie");
    let ideal: f64 = ds
        .groups()
        .map(|g| ideal_dcg(&g.iter().map(|e| e.labels.get(LabelKind::S1)).collect::<Vec<_>>(), 3))
        .sum::<f64>()
        / ds.n_groups() as f64;
    let got = mean_group_dcg(&models[&LabelKind::S1], &ds, LabelKind::S1, 3).unwrap();
    assert!((got - ideal).abs() < 1e-12);
}

#[test]
fn matrix_files_are_written() {
    let (ds, models) = matrix_fixture();
    let m = build_matrix(&models, &ds, &[LabelKind::S1, LabelKind::S3], &[LabelKind::S3], &[1, 3]).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("matrix.csv");
    m.write_csv(&path, Some("seed 9")).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# seed 9\n"));
    assert_eq!(text.lines().count(), 1 + 1 + 4);
    assert!(m.render().contains("DCG@3"));
}

#[test]
fn welch_test_known_values() {
    let (t, df, p) = welch_t_test(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 4.0, 6.0, 8.0, 10.0]).unwrap();
    assert!((t + 1.8973665961010275).abs() < 1e-12);
    assert!((df - 5.882352941176471).abs() < 1e-12);
    assert!((p - 0.10753119493062718).abs() < 1e-9);
    let (t, df, p) = welch_t_test(&[20.1, 20.3, 19.9, 20.2, 20.0], &[19.5, 19.6, 19.4, 19.7, 19.3]).unwrap();
    assert!((t - 6.0).abs() < 1e-9);
    assert!((df - 8.0).abs() < 1e-9);
    assert!((p - 0.0003233932218851478).abs() < 1e-9);
    let (_, _, p) = welch_t_test(&[1.0, 1.0], &[1.0, 1.0]).unwrap();
    assert_eq!(p, 1.0);
    assert!(welch_t_test(&[1.0], &[1.0, 2.0]).is_err());
}

fn unit() -> ScalarizationWeights {
    ScalarizationWeights::unit()
}

fn small_world() -> nestedrank::simulator::World {
    build_world(
        &WorldConfig {
            n_users: 50,
            n_items: 400,
            slate_size: 10,
            l2_size: 5,
            ..WorldConfig::default()
        },
        2,
    )
    .unwrap()
}

#[test]
fn identical_policies_are_indistinguishable() {
    let world = small_world();
    let a = ExpectedLabelPolicy {
        kind: LabelKind::S1,
        w_l1: unit(),
        w_l2: unit(),
    };
    let policies: Vec<(&str, &dyn Policy)> = vec![("a", &a), ("b", &a)];
    let report = compare_policies(&world, &policies, &[("a", "b")], &unit(), &unit(), 2_000, &[1, 2, 3], 0.05).unwrap();
    let (va, vb) = (report.variant("a").unwrap(), report.variant("b").unwrap());
    assert_eq!(va.per_seed, vb.per_seed);
    let c = report.comparison("a", "b").unwrap();
    assert_eq!(c.difference, 0.0);
    assert!(!c.significant);
    assert_eq!(c.p_value, 1.0);
}

#[test]
fn oracle_policy_beats_random_logging() {
    let world = build_world(&WorldConfig::default(), 3).unwrap();
    let (w1, w2) = (
        ScalarizationWeights::new(1.0, 2.0, 1.5, 0.5).unwrap(),
        ScalarizationWeights::new(1.0, 2.0, 1.5, 0.0).unwrap(),
    );
    let oracle = ExpectedLabelPolicy {
        kind: LabelKind::S3,
        w_l1: w1,
        w_l2: w2,
    };
    let policies: Vec<(&str, &dyn Policy)> = vec![("oracle", &oracle), ("random", &AsDrawn)];
    let report = compare_policies(&world, &policies, &[("oracle", "random")], &w1, &w2, 50_000, &[1, 2, 3, 4, 5], 0.05)
        .unwrap();
    assert!(report.comparison("oracle", "random").unwrap().confirms());
    for v in &report.variants {
        assert!((v.q_mean - (v.l1_mean + v.l2_mean)).abs() < 1e-9);
        for q in &v.per_seed {
            assert!((q.mean - (q.l1_mean + q.l2_mean)).abs() < 1e-9);
        }
    }
}

#[test]
fn online_compare_reports_three_variants() {
    let world = small_world();
    let model = model_with(Vec::new());
    let models: BTreeMap<_, _> = LabelKind::SYNTHETIC.iter().map(|k| (*k, model.clone())).collect();
    // The one-feature model does not match the world's features.
    assert!(online_compare(&world, &models, &unit(), &unit(), 10, &[1, 2], 0.05).is_err());
}

proptest! {
    #[test]
    fn percent_loss_is_antitone(base in 0.01..100.0f64, a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(percent_loss(base, lo).unwrap() >= percent_loss(base, hi).unwrap());
        prop_assert_eq!(percent_loss(base, 0.0).unwrap(), 100.0);
    }

    #[test]
    fn oracle_scores_maximize_mean_dcg(
        gains in prop::collection::vec(0u8..4, 12),
        other in prop::collection::vec(-1.0..1.0f64, 12),
        k in 1usize..6,
    ) {
        let rows: Vec<_> = gains
            .iter()
            .enumerate()
            .map(|(i, g)| row(i as u64 / 4, i as u32, 0.0, &[(LabelKind::S2, *g as f64)]))
            .collect();
        let ds = RankingDataset::new(Split::Test, rows).unwrap();
        let oracle: Vec<f64> = gains.iter().map(|g| *g as f64).collect();
        let best = mean_group_dcg_of_scores(&ds, &oracle, LabelKind::S2, k).unwrap();
        prop_assert!(mean_group_dcg_of_scores(&ds, &other, LabelKind::S2, k).unwrap() <= best + 1e-12);
    }
}
