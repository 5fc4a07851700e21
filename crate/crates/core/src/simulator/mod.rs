//! Synthetic nested-feed worlds with known ground truth, position-based-model
//! session simulation, and the Monte-Carlo online metric.

mod logio;
mod session;
mod world;

pub use logio::{read_logs, write_logs};
pub use session::{
    session_context, session_seed, simulate_session, true_q, AsDrawn, ExpectedLabelPolicy,
    NestedSessionLog, Policy, QEstimate,
};
pub(crate) use session::simulate_unchecked;
pub use world::{
    build_world, EngagementBiases, GroundTruth, ItemId, ItemProfile, SignalBiases, SignalProbs,
    TableTruth, TruthParams, UserId, UserProfile, World, WorldConfig,
};

/// Simulates `n_sessions` sessions under the uniformly random logging policy.
/// Session `s` gets id `s`.
pub fn simulate_logs(world: &World, n_sessions: u64, seed: u64) -> Vec<NestedSessionLog> {
    (0..n_sessions)
        .map(|s| {
            let (user, candidates) = session_context(world, seed, s);
            simulate_unchecked(world, user, &candidates, session_seed(world, seed, user, s), s)
        })
        .collect()
}
