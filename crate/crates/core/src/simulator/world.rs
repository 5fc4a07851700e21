use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::primitives::{discount, ScalarizationWeights};
use crate::seeding;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Per-signal logistic intercepts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalBiases {
    pub likes: f64,
    pub shares: f64,
    pub favs: f64,
    pub clicks: f64,
}

/// Intercepts for the L2 feed, which has no click signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngagementBiases {
    pub likes: f64,
    pub shares: f64,
    pub favs: f64,
}

/// Coefficients of the logistic ground truth.
///
/// For user `u` and item `a` the logit of signal `s` is
/// `bias_s + affinity * <u, a> + genre * [genre match] + popularity * ln(1 + pop_a)
///  - fatigue * fatigue_u + appeal`, where `appeal` is `-gateway_l1_penalty` for
/// engagement signals of gateway items on the L1 feed and 0 otherwise.
/// L2 items never emit clicks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthParams {
    pub l1_bias: SignalBiases,
    pub l2_bias: EngagementBiases,
    pub affinity: f64,
    pub genre: f64,
    pub popularity: f64,
    pub fatigue: f64,
    pub gateway_l1_penalty: f64,
    pub gateway_click_boost: f64,
}

impl Default for TruthParams {
    fn default() -> Self {
        Self {
            l1_bias: SignalBiases {
                likes: -2.6,
                shares: -3.6,
                favs: -3.3,
                clicks: -2.2,
            },
            l2_bias: EngagementBiases {
                likes: -1.7,
                shares: -2.7,
                favs: -2.4,
            },
            affinity: 3.0,
            genre: 0.8,
            popularity: 1.0,
            fatigue: 0.8,
            gateway_l1_penalty: 2.0,
            gateway_click_boost: 2.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldConfig {
    pub n_users: usize,
    pub n_items: usize,
    /// L1 slate size `n`.
    pub slate_size: usize,
    /// L2 list length `m`.
    pub l2_size: usize,
    pub latent_dim: usize,
    pub n_genres: usize,
    pub n_languages: usize,
    /// Fraction of items with low L1 appeal but high-relevance L2 lists.
    pub gateway_fraction: f64,
    /// Fraction of L2 lists whose strongest items sit at the bottom.
    pub deep_l2_fraction: f64,
    pub truth: TruthParams,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            n_users: 1_000,
            n_items: 5_000,
            slate_size: 20,
            l2_size: 10,
            latent_dim: 8,
            n_genres: 6,
            n_languages: 4,
            gateway_fraction: 0.4,
            deep_l2_fraction: 0.5,
            truth: TruthParams::default(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.slate_size >= 1, Config, "slate_size must be >= 1");
        ensure!(self.n_users >= 1, Config, "user pool is empty");
        ensure!(self.n_items >= 1, Config, "item pool is empty");
        ensure!(
            self.n_items >= self.slate_size,
            Config,
            "n_items ({}) smaller than slate_size ({})",
            self.n_items,
            self.slate_size
        );
        ensure!(
            self.l2_size == 0 || self.n_items > self.l2_size,
            Config,
            "n_items ({}) must exceed l2_size ({})",
            self.n_items,
            self.l2_size
        );
        ensure!(self.latent_dim >= 1, Config, "latent_dim must be >= 1");
        ensure!(self.n_genres >= 1, Config, "n_genres must be >= 1");
        ensure!(self.n_languages >= 1, Config, "n_languages must be >= 1");
        for (name, v) in [
            ("gateway_fraction", self.gateway_fraction),
            ("deep_l2_fraction", self.deep_l2_fraction),
        ] {
            ensure!((0.0..=1.0).contains(&v), Config, "{name} must be in [0, 1], got {v}");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub id: UserId,
    pub latent: Vec<f64>,
    pub signup_recency: f64,
    pub language: u32,
    pub genre_pref: u32,
    pub fatigue: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemProfile {
    pub id: ItemId,
    pub latent: Vec<f64>,
    pub genre: u32,
    pub popularity: f64,
    pub gateway: bool,
}

/// Per-signal probabilities for one (user, item) pair, conditional on examination.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SignalProbs {
    pub likes: f64,
    pub shares: f64,
    pub favs: f64,
    pub clicks: f64,
}

impl SignalProbs {
    pub const ZERO: SignalProbs = SignalProbs {
        likes: 0.0,
        shares: 0.0,
        favs: 0.0,
        clicks: 0.0,
    };

    /// Expected scalarized reward given examination.
    pub fn expected_reward(&self, w: &ScalarizationWeights) -> f64 {
        self.likes * w.likes + self.shares * w.shares + self.favs * w.favs + self.clicks * w.clicks
    }

    fn all_in_unit_interval(&self) -> bool {
        [self.likes, self.shares, self.favs, self.clicks]
            .iter()
            .all(|p| (0.0..=1.0).contains(p))
    }
}

/// Explicit per-item probabilities that ignore the user. Used for small analytic worlds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableTruth {
    pub l1: Vec<SignalProbs>,
    pub l2: Vec<SignalProbs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundTruth {
    Logistic(TruthParams),
    Table(TableTruth),
}

/// A simulated nested-feed world. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: WorldConfig,
    pub seed: u64,
    pub users: Vec<UserProfile>,
    pub items: Vec<ItemProfile>,
    /// `l2_attachment[a]` is the fixed L2 ranking shown after clicking item `a`.
    pub l2_attachment: Vec<Vec<ItemId>>,
    pub truth: GroundTruth,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn build_world(config: &WorldConfig, seed: u64) -> Result<World> {
    config.validate()?;
    let mut rng = seeding::rng(seed, &[seeding::tag("world")]);
    let d = config.latent_dim;
    let coord = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid normal");
    let pop = LogNormal::new(0.0, 1.0).expect("valid lognormal");

    let users: Vec<UserProfile> = (0..config.n_users)
        .map(|i| UserProfile {
            id: UserId(i as u32),
            latent: (0..d).map(|_| coord.sample(&mut rng)).collect(),
            signup_recency: rng.random::<f64>(),
            language: rng.random_range(0..config.n_languages as u32),
            genre_pref: rng.random_range(0..config.n_genres as u32),
            fatigue: rng.random::<f64>(),
        })
        .collect();

    let items: Vec<ItemProfile> = (0..config.n_items)
        .map(|i| ItemProfile {
            id: ItemId(i as u32),
            latent: (0..d).map(|_| coord.sample(&mut rng)).collect(),
            genre: rng.random_range(0..config.n_genres as u32),
            popularity: pop.sample(&mut rng),
            gateway: rng.random_bool(config.gateway_fraction),
        })
        .collect();

    let l2_attachment = attach_l2_lists(config, &items, &mut rng);

    Ok(World {
        config: config.clone(),
        seed,
        users,
        items,
        l2_attachment,
        truth: GroundTruth::Logistic(config.truth.clone()),
    })
}

/// Regular items get `m` uniformly drawn items. Gateway items get `ceil(m / 2)`
/// items from the most popular quarter of their own genre, padded with items
/// from the less popular half of the whole pool. Each list is then ordered by
/// popularity, descending, or ascending for the `deep_l2_fraction` share of
/// lists, so the strongest content of a deep list sits at the bottom.
fn attach_l2_lists(
    config: &WorldConfig,
    items: &[ItemProfile],
    rng: &mut impl Rng,
) -> Vec<Vec<ItemId>> {
    let m = config.l2_size;
    if m == 0 {
        return vec![Vec::new(); items.len()];
    }
    let by_popularity = |ids: &mut Vec<ItemId>| {
        ids.sort_by(|a, b| {
            items[b.index()]
                .popularity
                .total_cmp(&items[a.index()].popularity)
                .then(a.cmp(b))
        })
    };
    let mut by_genre: Vec<Vec<ItemId>> = vec![Vec::new(); config.n_genres];
    for item in items {
        by_genre[item.genre as usize].push(item.id);
    }
    let top_quarter: Vec<Vec<ItemId>> = by_genre
        .into_iter()
        .map(|mut ids| {
            by_popularity(&mut ids);
            ids.truncate(ids.len().div_ceil(4));
            ids
        })
        .collect();
    let mut lower_half: Vec<ItemId> = items.iter().map(|it| it.id).collect();
    by_popularity(&mut lower_half);
    let lower_half = lower_half.split_off(items.len() / 2);
    let all: Vec<ItemId> = items.iter().map(|it| it.id).collect();

    items
        .iter()
        .map(|item| {
            let good = m.div_ceil(2);
            let strong = &top_quarter[item.genre as usize];
            let mut list = if item.gateway && strong.len() > good && lower_half.len() > m {
                let mut list = sample_distinct(strong, good, &[item.id], rng);
                let mut exclude = list.clone();
                exclude.push(item.id);
                list.extend(sample_distinct(&lower_half, m - good, &exclude, rng));
                list
            } else {
                sample_distinct(&all, m, &[item.id], rng)
            };
            let deep = rng.random_bool(config.deep_l2_fraction);
            list.sort_by(|a, b| {
                let (pa, pb) = (items[a.index()].popularity, items[b.index()].popularity);
                let ord = if deep { pa.total_cmp(&pb) } else { pb.total_cmp(&pa) };
                ord.then(a.cmp(b))
            });
            list
        })
        .collect()
}

/// `k` distinct ids from `pool`, none in `exclude`. The pool must hold enough
/// eligible ids.
fn sample_distinct(
    pool: &[ItemId],
    k: usize,
    exclude: &[ItemId],
    rng: &mut impl Rng,
) -> Vec<ItemId> {
    let mut chosen = Vec::with_capacity(k);
    let mut seen: HashSet<ItemId> = exclude.iter().copied().collect();
    while chosen.len() < k {
        let id = *pool.choose(rng).expect("non-empty pool");
        if seen.insert(id) {
            chosen.push(id);
        }
    }
    chosen
}

impl World {
    /// Assembles a world from explicit parts, checking structural invariants.
    pub fn from_parts(
        config: WorldConfig,
        seed: u64,
        users: Vec<UserProfile>,
        items: Vec<ItemProfile>,
        l2_attachment: Vec<Vec<ItemId>>,
        truth: GroundTruth,
    ) -> Result<Self> {
        let world = Self {
            config,
            seed,
            users,
            items,
            l2_attachment,
            truth,
        };
        world.validate()?;
        Ok(world)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        ensure!(c.slate_size >= 1, Config, "slate_size must be >= 1");
        ensure!(!self.users.is_empty(), Config, "user pool is empty");
        ensure!(!self.items.is_empty(), Config, "item pool is empty");
        ensure!(
            self.items.len() >= c.slate_size,
            Config,
            "item pool smaller than the slate"
        );
        for (i, u) in self.users.iter().enumerate() {
            ensure!(u.id.index() == i, Config, "user ids must be dense, got {:?} at {i}", u.id);
            ensure!(u.latent.len() == c.latent_dim, Config, "user {i} latent dimension");
        }
        for (i, it) in self.items.iter().enumerate() {
            ensure!(it.id.index() == i, Config, "item ids must be dense, got {:?} at {i}", it.id);
            ensure!(it.latent.len() == c.latent_dim, Config, "item {i} latent dimension");
        }
        ensure!(
            self.l2_attachment.len() == self.items.len(),
            Config,
            "every item needs an L2 attachment"
        );
        for (a, list) in self.l2_attachment.iter().enumerate() {
            ensure!(
                list.len() == c.l2_size,
                Config,
                "item {a} has {} L2 items, expected {}",
                list.len(),
                c.l2_size
            );
            ensure!(
                list.iter().all(|b| b.index() < self.items.len()),
                Config,
                "item {a} references an unknown L2 item"
            );
        }
        if let GroundTruth::Table(t) = &self.truth {
            ensure!(
                t.l1.len() == self.items.len() && t.l2.len() == self.items.len(),
                Config,
                "probability table must cover every item"
            );
            ensure!(
                t.l1.iter().chain(&t.l2).all(SignalProbs::all_in_unit_interval),
                Config,
                "table probabilities must lie in [0, 1]"
            );
        }
        Ok(())
    }

    pub fn user(&self, id: UserId) -> Result<&UserProfile> {
        self.users
            .get(id.index())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown user {}", id.0)))
    }

    pub fn item(&self, id: ItemId) -> Result<&ItemProfile> {
        self.items
            .get(id.index())
            .ok_or_else(|| Error::InvalidArgument(format!("unknown item {}", id.0)))
    }

    pub fn l2_list(&self, item: ItemId) -> &[ItemId] {
        &self.l2_attachment[item.index()]
    }

    /// Signal probabilities for `item` shown on the L1 feed. Ids must exist.
    pub fn l1_probs(&self, user: UserId, item: ItemId) -> SignalProbs {
        match &self.truth {
            GroundTruth::Table(t) => t.l1[item.index()],
            GroundTruth::Logistic(p) => {
                let it = &self.items[item.index()];
                let base = self.shared_logit(p, user, item);
                let appeal = if it.gateway { -p.gateway_l1_penalty } else { 0.0 };
                let click = if it.gateway { p.gateway_click_boost } else { 0.0 };
                SignalProbs {
                    likes: sigmoid(p.l1_bias.likes + base + appeal),
                    shares: sigmoid(p.l1_bias.shares + base + appeal),
                    favs: sigmoid(p.l1_bias.favs + base + appeal),
                    clicks: sigmoid(p.l1_bias.clicks + base + click),
                }
            }
        }
    }

    /// Signal probabilities for `item` shown inside an L2 feed. Ids must exist.
    pub fn l2_probs(&self, user: UserId, item: ItemId) -> SignalProbs {
        match &self.truth {
            GroundTruth::Table(t) => t.l2[item.index()],
            GroundTruth::Logistic(p) => {
                let base = self.shared_logit(p, user, item);
                SignalProbs {
                    likes: sigmoid(p.l2_bias.likes + base),
                    shares: sigmoid(p.l2_bias.shares + base),
                    favs: sigmoid(p.l2_bias.favs + base),
                    clicks: 0.0,
                }
            }
        }
    }

    fn shared_logit(&self, p: &TruthParams, user: UserId, item: ItemId) -> f64 {
        let u = &self.users[user.index()];
        let it = &self.items[item.index()];
        let genre = if u.genre_pref == it.genre { p.genre } else { 0.0 };
        p.affinity * dot(&u.latent, &it.latent) + genre + p.popularity * it.popularity.ln_1p()
            - p.fatigue * u.fatigue
    }

    /// Expected L2 reward collected after entering the feed of `item`, each L2
    /// position weighted by `pos_weight(j)`.
    fn l2_value(
        &self,
        user: UserId,
        item: ItemId,
        w_l2: &ScalarizationWeights,
        pos_weight: impl Fn(usize) -> f64,
    ) -> f64 {
        self.l2_list(item)
            .iter()
            .enumerate()
            .map(|(j, b)| pos_weight(j + 1) * self.l2_probs(user, *b).expected_reward(w_l2))
            .sum()
    }

    /// Closed-form contribution of `item` to the online metric, given that its
    /// L1 position is examined: `E[R_A] + P(click) * sum_j P(view j) * E[R_B(b_j)]`.
    pub fn expected_item_value(
        &self,
        user: UserId,
        item: ItemId,
        w_l1: &ScalarizationWeights,
        w_l2: &ScalarizationWeights,
    ) -> f64 {
        let l1 = self.l1_probs(user, item);
        l1.expected_reward(w_l1) + l1.clicks * self.l2_value(user, item, w_l2, discount)
    }

    /// Expected value of a synthetic label for `item` given its L1 position was examined.
    pub fn expected_label(
        &self,
        user: UserId,
        item: ItemId,
        kind: crate::primitives::LabelKind,
        w_l1: &ScalarizationWeights,
        w_l2: &ScalarizationWeights,
    ) -> f64 {
        use crate::primitives::LabelKind;
        let l1 = self.l1_probs(user, item);
        match kind {
            LabelKind::S1 => l1.expected_reward(w_l1),
            LabelKind::S2 => {
                l1.expected_reward(w_l1)
                    + l1.clicks * self.l2_value(user, item, w_l2, |j| discount(j) * discount(j))
            }
            LabelKind::S3 => self.expected_item_value(user, item, w_l1, w_l2),
            LabelKind::Likes => l1.likes,
            LabelKind::Shares => l1.shares,
            LabelKind::Favs => l1.favs,
            LabelKind::Clicks => l1.clicks,
        }
    }

    /// Exact expected session reward for a fixed L1 ranking.
    pub fn expected_session_value(
        &self,
        user: UserId,
        ranking: &[ItemId],
        w_l1: &ScalarizationWeights,
        w_l2: &ScalarizationWeights,
    ) -> f64 {
        ranking
            .iter()
            .enumerate()
            .map(|(i, a)| discount(i + 1) * self.expected_item_value(user, *a, w_l1, w_l2))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> WorldConfig {
        WorldConfig {
            n_users: 50,
            n_items: 200,
            ..WorldConfig::default()
        }
    }

    #[test]
    fn default_world_shape() {
        let w = build_world(&WorldConfig::default(), 42).unwrap();
        assert_eq!(w.users.len(), 1_000);
        assert_eq!(w.items.len(), 5_000);
        assert_eq!(w.l2_attachment.len(), 5_000);
        assert_eq!(w.l2_attachment.iter().map(Vec::len).sum::<usize>(), 50_000);
        for (a, list) in w.l2_attachment.iter().enumerate() {
            assert!(!list.contains(&ItemId(a as u32)));
            let uniq: HashSet<_> = list.iter().collect();
            assert_eq!(uniq.len(), list.len());
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = build_world(&small(), 7).unwrap();
        let b = build_world(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = build_world(&small(), 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_l2_size_is_allowed() {
        let w = build_world(&WorldConfig { l2_size: 0, ..small() }, 1).unwrap();
        assert!(w.l2_attachment.iter().all(Vec::is_empty));
    }

    #[test]
    fn rejects_degenerate_configs() {
        assert!(build_world(&WorldConfig { slate_size: 0, ..small() }, 1).is_err());
        assert!(build_world(&WorldConfig { n_users: 0, ..small() }, 1).is_err());
        assert!(build_world(&WorldConfig { n_items: 0, ..small() }, 1).is_err());
        assert!(build_world(&WorldConfig { gateway_fraction: 1.5, ..small() }, 1).is_err());
    }

    #[test]
    fn probabilities_are_valid_and_deterministic() {
        let w = build_world(&small(), 3).unwrap();
        for u in 0..10 {
            for a in 0..50 {
                let (u, a) = (UserId(u), ItemId(a));
                let p1 = w.l1_probs(u, a);
                let p2 = w.l2_probs(u, a);
                assert!(p1.all_in_unit_interval() && p2.all_in_unit_interval());
                assert_eq!(p2.clicks, 0.0);
                assert_eq!(p1, w.l1_probs(u, a));
            }
        }
    }

    #[test]
    fn json_snapshot_round_trip() {
        let w = build_world(&small(), 11).unwrap();
        let json = serde_json::to_string(&w).unwrap();
        let back: World = serde_json::from_str(&json).unwrap();
        assert_eq!(w, back);
    }
}
