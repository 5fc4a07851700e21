//! Shared fixtures and independent oracles for the integration tests.
//!
//! The oracles here are written from the model definitions, not from the
//! library code: discounts use natural logarithms, DCG is a plain loop, and
//! closed-form session values are summed explicitly.

#![allow(dead_code)]

use nestedrank::labeling::{LabeledExample, Labels, RankingDataset, Split};
use nestedrank::primitives::{LabelKind, ScalarizationWeights};
use nestedrank::simulator::{
    GroundTruth, ItemId, ItemProfile, SignalProbs, TableTruth, UserId, UserProfile, World,
    WorldConfig,
};

/// `ln 2 / ln(1 + i)` for a 1-based position.
pub fn disc(i: usize) -> f64 {
    std::f64::consts::LN_2 / ((i + 1) as f64).ln()
}

pub fn dcg_oracle(gains: &[f64], k: usize) -> f64 {
    let mut total = 0.0;
    for i in 0..gains.len().min(k) {
        total += gains[i] * disc(i + 1);
    }
    total
}

pub fn ideal_dcg(gains: &[f64], k: usize) -> f64 {
    let mut sorted = gains.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    dcg_oracle(&sorted, k)
}

pub fn expected_reward(p: &SignalProbs, w: &ScalarizationWeights) -> f64 {
    p.likes * w.likes + p.shares * w.shares + p.favs * w.favs + p.clicks * w.clicks
}

/// A world where every probability comes from explicit per-item tables.
/// Item `a`'s L2 list is `attachment[a]`; one user; slate covers `slate` items.
pub fn table_world(
    l1: Vec<SignalProbs>,
    l2: Vec<SignalProbs>,
    attachment: Vec<Vec<ItemId>>,
    slate: usize,
) -> World {
    let n_items = l1.len();
    let m = attachment.first().map_or(0, Vec::len);
    let config = WorldConfig {
        n_users: 1,
        n_items,
        slate_size: slate,
        l2_size: m,
        latent_dim: 2,
        n_genres: 1,
        n_languages: 1,
        ..WorldConfig::default()
    };
    let users = vec![UserProfile {
        id: UserId(0),
        latent: vec![0.0, 0.0],
        signup_recency: 0.0,
        language: 0,
        genre_pref: 0,
        fatigue: 0.0,
    }];
    let items = (0..n_items)
        .map(|a| ItemProfile {
            id: ItemId(a as u32),
            latent: vec![0.0, 0.0],
            genre: 0,
            popularity: 0.0,
            gateway: false,
        })
        .collect();
    World::from_parts(config, 11, users, items, attachment, GroundTruth::Table(TableTruth { l1, l2 }))
        .expect("valid table world")
}

pub fn probs(likes: f64, shares: f64, favs: f64, clicks: f64) -> SignalProbs {
    SignalProbs {
        likes,
        shares,
        favs,
        clicks,
    }
}

/// Three items; each item's L2 list is the other two.
pub fn three_item_world() -> World {
    let l1 = vec![
        probs(0.3, 0.1, 0.2, 0.6),
        probs(0.5, 0.05, 0.1, 0.2),
        probs(0.1, 0.2, 0.05, 0.4),
    ];
    let l2 = vec![
        probs(0.4, 0.2, 0.3, 0.0),
        probs(0.1, 0.05, 0.1, 0.0),
        probs(0.6, 0.3, 0.2, 0.0),
    ];
    let attachment = vec![
        vec![ItemId(1), ItemId(2)],
        vec![ItemId(2), ItemId(0)],
        vec![ItemId(0), ItemId(1)],
    ];
    table_world(l1, l2, attachment, 3)
}

/// Closed-form contribution of the item at 1-based L1 position `i`, including
/// its examination probability: P(view i) * [E R_A + P(click) * sum_j P(view j) E R_B].
pub fn item_contribution(
    world: &World,
    ranking: &[ItemId],
    i: usize,
    w1: &ScalarizationWeights,
    w2: &ScalarizationWeights,
) -> f64 {
    let GroundTruth::Table(t) = &world.truth else {
        panic!("oracle needs a table world");
    };
    let a = ranking[i - 1].index();
    let p = &t.l1[a];
    let mut nested = 0.0;
    for (j, b) in world.l2_attachment[a].iter().enumerate() {
        nested += disc(j + 1) * expected_reward(&t.l2[b.index()], w2);
    }
    disc(i) * (expected_reward(p, w1) + p.clicks * nested)
}

pub fn session_value(
    world: &World,
    ranking: &[ItemId],
    w1: &ScalarizationWeights,
    w2: &ScalarizationWeights,
) -> f64 {
    (1..=ranking.len())
        .map(|i| item_contribution(world, ranking, i, w1, w2))
        .sum()
}

/// Running mean and standard error.
#[derive(Debug, Default, Clone, Copy)]
pub struct Moments {
    pub n: f64,
    sum: f64,
    sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1.0;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        self.sum / self.n
    }

    pub fn stderr(&self) -> f64 {
        let m = self.mean();
        let var = (self.sum_sq - self.n * m * m) / (self.n - 1.0);
        (var.max(0.0) / self.n).sqrt()
    }

    /// `|mean - target|` in standard errors.
    pub fn z(&self, target: f64) -> f64 {
        (self.mean() - target).abs() / self.stderr()
    }
}

pub fn example(group: u64, item: u32, features: Vec<f64>, kind: LabelKind, gain: f64) -> LabeledExample {
    let mut labels = Labels::default();
    labels.set(kind, gain);
    if gain > 0.0 {
        labels.set(LabelKind::Likes, 1.0);
    }
    LabeledExample {
        group_id: group,
        item_id: ItemId(item),
        features,
        labels,
    }
}

/// Groups of `size` examples whose single feature equals the S1 gain.
/// Gains are 0 with probability 1/2, otherwise uniform on (0, 4).
pub fn perfect_feature_dataset(split: Split, n_groups: u64, size: u32, seed: u64) -> RankingDataset {
    use rand::Rng;
    let mut rng = nestedrank::seeding::rng(seed, &[]);
    let mut rows = Vec::new();
    for g in 0..n_groups {
        for i in 0..size {
            let gain = if rng.random::<bool>() { 0.0 } else { 4.0 * rng.random::<f64>() };
            rows.push(example(g, i, vec![gain], LabelKind::S1, gain));
        }
    }
    RankingDataset::new(split, rows).expect("valid dataset")
}

/// Central finite-difference check helpers for the pairwise surrogate
/// `sum_{g_i > g_j} delta_ij * ln(1 + exp(-sigma (s_i - s_j)))`, with `delta_ij`
/// frozen at the ordering of the reference scores.
pub struct Surrogate {
    pub gains: Vec<f64>,
    pub sigma: f64,
    pub delta: Vec<Vec<f64>>,
}

impl Surrogate {
    pub fn new(scores: &[f64], gains: &[f64], k: usize, sigma: f64) -> Self {
        let n = scores.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let mut rank = vec![0; n];
        for (r, &i) in order.iter().enumerate() {
            rank[i] = r + 1;
        }
        let d = |r: usize| if r <= k { disc(r) } else { 0.0 };
        let mut delta = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                // Swapping i and j changes DCG by exactly this amount.
                delta[i][j] = (gains[i] - gains[j]).abs() * (d(rank[i]) - d(rank[j])).abs();
            }
        }
        Self {
            gains: gains.to_vec(),
            sigma,
            delta,
        }
    }

    pub fn loss(&self, s: &[f64]) -> f64 {
        let n = s.len();
        let mut total = 0.0;
        for i in 0..n {
            for j in 0..n {
                if self.gains[i] > self.gains[j] {
                    let z = -self.sigma * (s[i] - s[j]);
                    total += self.delta[i][j] * z.exp().ln_1p();
                }
            }
        }
        total
    }

    pub fn grad_fd(&self, s: &[f64], i: usize, h: f64) -> f64 {
        let (mut up, mut down) = (s.to_vec(), s.to_vec());
        up[i] += h;
        down[i] -= h;
        (self.loss(&up) - self.loss(&down)) / (2.0 * h)
    }

    pub fn hess_fd(&self, s: &[f64], i: usize, h: f64) -> f64 {
        let (mut up, mut down) = (s.to_vec(), s.to_vec());
        up[i] += h;
        down[i] -= h;
        (self.loss(&up) - 2.0 * self.loss(s) + self.loss(&down)) / (h * h)
    }
}
