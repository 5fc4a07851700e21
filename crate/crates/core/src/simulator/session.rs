use std::collections::HashSet;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::world::{ItemId, SignalProbs, UserId, World};
use crate::error::{ensure, Error, Result};
use crate::primitives::{
    examination_probability, scalarize, Position, ScalarizationWeights, SignalVector,
};
use crate::seeding::{self, StreamRng};

/// One logged session: the L1 slate, the fixed L2 lists behind it, and every
/// observed signal. `observations[i][0]` is the L1 feedback for `l1_slate[i]`;
/// `observations[i][j]` for `j >= 1` is the feedback on `l2_slates[i][j - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NestedSessionLog {
    pub session_id: u64,
    pub user_id: UserId,
    pub l1_slate: Vec<ItemId>,
    pub l2_slates: Vec<Vec<ItemId>>,
    pub observations: Vec<Vec<SignalVector>>,
    pub examined_l1: Vec<Position>,
    pub entered_l2: Vec<Position>,
    /// For each L1 position, the L2 positions examined (empty unless entered).
    pub examined_l2: Vec<Vec<Position>>,
}

impl NestedSessionLog {
    pub fn l1_len(&self) -> usize {
        self.l1_slate.len()
    }

    pub fn l1_signals(&self, offset: usize) -> &SignalVector {
        &self.observations[offset][0]
    }

    pub fn l2_signals(&self, offset: usize) -> &[SignalVector] {
        &self.observations[offset][1..]
    }

    /// Checks structural consistency and the three observation invariants:
    /// nothing is observed at unexamined L1 positions, nothing on L2 unless
    /// the feed was entered, and a click implies examination.
    pub fn validate(&self) -> Result<()> {
        let n = self.l1_slate.len();
        ensure!(n >= 1, InvalidLog, "session {} has an empty slate", self.session_id);
        ensure!(
            self.l2_slates.len() == n && self.observations.len() == n && self.examined_l2.len() == n,
            InvalidLog,
            "session {}: per-position arrays disagree with slate length {n}",
            self.session_id
        );
        let mut seen = HashSet::with_capacity(n);
        ensure!(
            self.l1_slate.iter().all(|a| seen.insert(*a)),
            InvalidLog,
            "session {}: duplicate L1 item",
            self.session_id
        );
        let within = |p: &Position| p.index() <= n;
        ensure!(
            self.examined_l1.iter().all(within) && self.entered_l2.iter().all(within),
            InvalidLog,
            "session {}: position out of range",
            self.session_id
        );
        let examined: HashSet<usize> = self.examined_l1.iter().map(|p| p.index()).collect();
        let entered: HashSet<usize> = self.entered_l2.iter().map(|p| p.index()).collect();
        for i in 0..n {
            let pos = i + 1;
            let row = &self.observations[i];
            let m = self.l2_slates[i].len();
            ensure!(
                row.len() == m + 1,
                InvalidLog,
                "session {}: position {pos} has {} observations for {m} L2 items",
                self.session_id,
                row.len()
            );
            ensure!(
                row.iter().all(SignalVector::is_binary),
                InvalidLog,
                "session {}: non-binary signal at position {pos}",
                self.session_id
            );
            let y0 = &row[0];
            if !examined.contains(&pos) {
                ensure!(
                    y0.is_zero(),
                    InvalidLog,
                    "session {}: feedback at unexamined position {pos}",
                    self.session_id
                );
            }
            ensure!(
                (y0.clicks == 1) == entered.contains(&pos),
                InvalidLog,
                "session {}: click and L2 entry disagree at position {pos}",
                self.session_id
            );
            let l2_seen: HashSet<usize> = self.examined_l2[i].iter().map(|p| p.index()).collect();
            ensure!(
                l2_seen.iter().all(|j| *j <= m),
                InvalidLog,
                "session {}: L2 position out of range at {pos}",
                self.session_id
            );
            if !entered.contains(&pos) {
                ensure!(
                    l2_seen.is_empty() && row[1..].iter().all(SignalVector::is_zero),
                    InvalidLog,
                    "session {}: L2 feedback behind position {pos} without entry",
                    self.session_id
                );
            }
            for (j, y) in row[1..].iter().enumerate() {
                ensure!(
                    l2_seen.contains(&(j + 1)) || y.is_zero(),
                    InvalidLog,
                    "session {}: feedback at unexamined L2 position {} behind {pos}",
                    self.session_id,
                    j + 1
                );
            }
        }
        Ok(())
    }

    /// Scalarized (L1, L2) reward totals realized in this session.
    pub fn realized_rewards(
        &self,
        w_l1: &ScalarizationWeights,
        w_l2: &ScalarizationWeights,
    ) -> (f64, f64) {
        self.observations.iter().fold((0.0, 0.0), |(l1, l2), row| {
            (
                l1 + scalarize(&row[0], w_l1),
                l2 + row[1..].iter().map(|y| scalarize(y, w_l2)).sum::<f64>(),
            )
        })
    }
}

/// Draws one signal vector. Always consumes four uniforms so that streams
/// stay aligned across policies that put different items at a position.
fn draw_signals(probs: &SignalProbs, rng: &mut StreamRng) -> SignalVector {
    let mut fire = |p: f64| u32::from(rng.random::<f64>() < p);
    SignalVector {
        likes: fire(probs.likes),
        shares: fire(probs.shares),
        favs: fire(probs.favs),
        clicks: fire(probs.clicks),
    }
}

/// Simulates one position-based-model session over `l1_ranking`.
///
/// Randomness is consumed per position in a fixed pattern (L1 examination,
/// four L1 signals, then for every L2 slot an examination and four signals)
/// regardless of outcomes, so two rankings simulated with the same seed see
/// the same uniforms at every position.
pub fn simulate_session(
    world: &World,
    user: UserId,
    l1_ranking: &[ItemId],
    seed: u64,
) -> Result<NestedSessionLog> {
    world.user(user)?;
    ensure!(
        l1_ranking.len() == world.config.slate_size,
        InvalidArgument,
        "ranking has {} items, slate size is {}",
        l1_ranking.len(),
        world.config.slate_size
    );
    let mut seen = HashSet::with_capacity(l1_ranking.len());
    for a in l1_ranking {
        world.item(*a)?;
        ensure!(seen.insert(*a), InvalidArgument, "duplicate item {} in ranking", a.0);
    }
    Ok(simulate_unchecked(world, user, l1_ranking, seed, 0))
}

pub(crate) fn simulate_unchecked(
    world: &World,
    user: UserId,
    l1_ranking: &[ItemId],
    seed: u64,
    session_id: u64,
) -> NestedSessionLog {
    let mut rng = seeding::rng(seed, &[]);
    let n = l1_ranking.len();
    let mut log = NestedSessionLog {
        session_id,
        user_id: user,
        l1_slate: l1_ranking.to_vec(),
        l2_slates: Vec::with_capacity(n),
        observations: Vec::with_capacity(n),
        examined_l1: Vec::new(),
        entered_l2: Vec::new(),
        examined_l2: Vec::with_capacity(n),
    };
    for (i, item) in l1_ranking.iter().enumerate() {
        let pos = Position::from_offset(i);
        let l2 = world.l2_list(*item);
        let mut row = vec![SignalVector::ZERO; l2.len() + 1];
        let mut l2_seen = Vec::new();

        let examined = rng.random::<f64>() < examination_probability(pos);
        let y0 = draw_signals(&world.l1_probs(user, *item), &mut rng);
        let clicked = examined && y0.clicks == 1;
        if examined {
            log.examined_l1.push(pos);
            row[0] = y0;
        }
        if clicked {
            log.entered_l2.push(pos);
        }
        for (j, b) in l2.iter().enumerate() {
            let l2_pos = Position::from_offset(j);
            let seen = rng.random::<f64>() < examination_probability(l2_pos);
            let y = draw_signals(&world.l2_probs(user, *b), &mut rng);
            if clicked && seen {
                l2_seen.push(l2_pos);
                row[j + 1] = y;
            }
        }
        log.l2_slates.push(l2.to_vec());
        log.observations.push(row);
        log.examined_l2.push(l2_seen);
    }
    log
}

/// An L1 ranking policy: orders a candidate slate for a user.
pub trait Policy {
    fn rank(&self, world: &World, user: UserId, candidates: &[ItemId]) -> Vec<ItemId>;
}

/// Keeps the candidates in the order drawn, i.e. a uniformly random ranking.
#[derive(Debug, Clone, Copy, Default)]
pub struct AsDrawn;

impl Policy for AsDrawn {
    fn rank(&self, _world: &World, _user: UserId, candidates: &[ItemId]) -> Vec<ItemId> {
        candidates.to_vec()
    }
}

/// Ranks by the closed-form expectation of a label given examination.
#[derive(Debug, Clone, Copy)]
pub struct ExpectedLabelPolicy {
    pub kind: crate::primitives::LabelKind,
    pub w_l1: ScalarizationWeights,
    pub w_l2: ScalarizationWeights,
}

impl Policy for ExpectedLabelPolicy {
    fn rank(&self, world: &World, user: UserId, candidates: &[ItemId]) -> Vec<ItemId> {
        let mut scored: Vec<(f64, ItemId)> = candidates
            .iter()
            .map(|a| (world.expected_label(user, *a, self.kind, &self.w_l1, &self.w_l2), *a))
            .collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.into_iter().map(|(_, a)| a).collect()
    }
}

/// Draws the user and the candidate slate for one session of an evaluation stream.
pub fn session_context(world: &World, seed: u64, session: u64) -> (UserId, Vec<ItemId>) {
    let mut rng = seeding::rng(seed, &[seeding::tag("context"), session]);
    let user = UserId(rng.random_range(0..world.users.len() as u32));
    let candidates = index::sample(&mut rng, world.items.len(), world.config.slate_size)
        .into_iter()
        .map(|i| ItemId(i as u32))
        .collect();
    (user, candidates)
}

/// Seed of the session stream for `(world seed, stream seed, user, session)`.
pub fn session_seed(world: &World, seed: u64, user: UserId, session: u64) -> u64 {
    seeding::derive(world.seed, &[seed, user.0 as u64, session])
}

/// Monte-Carlo estimate of the online metric with its per-feed decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub l1_mean: f64,
    pub l2_mean: f64,
    pub clicks_mean: f64,
    pub n_sessions: u64,
}

/// Accumulates per-session totals into a [`QEstimate`].
#[derive(Debug, Default, Clone)]
pub(crate) struct QAccumulator {
    n: u64,
    sum: f64,
    sum_sq: f64,
    l1: f64,
    l2: f64,
    clicks: f64,
}

impl QAccumulator {
    pub(crate) fn push(&mut self, l1: f64, l2: f64, clicks: f64) {
        let q = l1 + l2;
        self.n += 1;
        self.sum += q;
        self.sum_sq += q * q;
        self.l1 += l1;
        self.l2 += l2;
        self.clicks += clicks;
    }

    pub(crate) fn finish(&self) -> QEstimate {
        let n = self.n.max(1) as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 {
            ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0)
        } else {
            0.0
        };
        let l1_mean = self.l1 / n;
        QEstimate {
            mean: l1_mean + self.l2 / n,
            stderr: (var / n).sqrt(),
            l1_mean,
            l2_mean: self.l2 / n,
            clicks_mean: self.clicks / n,
            n_sessions: self.n,
        }
    }
}

/// Monte-Carlo estimate of `E_u sum_i (R_A(u, a_i) + sum_j R_B(u, b_ij))` under `policy`.
pub fn true_q(
    world: &World,
    policy: &dyn Policy,
    w_l1: &ScalarizationWeights,
    w_l2: &ScalarizationWeights,
    n_sessions: u64,
    seed: u64,
) -> Result<QEstimate> {
    ensure!(n_sessions >= 1, InvalidArgument, "n_sessions must be >= 1");
    let mut acc = QAccumulator::default();
    for s in 0..n_sessions {
        let (user, candidates) = session_context(world, seed, s);
        let ranking = policy.rank(world, user, &candidates);
        let log = simulate_session(world, user, &ranking, session_seed(world, seed, user, s))
            .map_err(|e| Error::InvalidArgument(format!("policy produced a bad ranking: {e}")))?;
        let (l1, l2) = log.realized_rewards(w_l1, w_l2);
        acc.push(l1, l2, log.entered_l2.len() as f64);
    }
    Ok(acc.finish())
}
