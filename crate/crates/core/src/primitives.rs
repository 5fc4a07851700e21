//! Signals, scalarization weights, and the closed-form ranking math shared by
//! every other module: position-based examination probabilities, DCG, and
//! inverse-propensity debiasing.
//!
//! Positions are 1-based throughout. [`Position`] cannot hold 0.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Raw engagement counts for one impression.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SignalVector {
    pub likes: u32,
    pub shares: u32,
    pub favs: u32,
    pub clicks: u32,
}

impl SignalVector {
    pub const ZERO: SignalVector = SignalVector {
        likes: 0,
        shares: 0,
        favs: 0,
        clicks: 0,
    };

    pub fn new(likes: u32, shares: u32, favs: u32, clicks: u32) -> Self {
        Self {
            likes,
            shares,
            favs,
            clicks,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == Self::ZERO
    }

    /// True when every field is 0 or 1, as required for a single impression.
    pub fn is_binary(&self) -> bool {
        self.likes <= 1 && self.shares <= 1 && self.favs <= 1 && self.clicks <= 1
    }

    pub fn get(&self, signal: RawSignal) -> u32 {
        match signal {
            RawSignal::Likes => self.likes,
            RawSignal::Shares => self.shares,
            RawSignal::Favs => self.favs,
            RawSignal::Clicks => self.clicks,
        }
    }
}

/// The four raw engagement signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RawSignal {
    Likes,
    Shares,
    Favs,
    Clicks,
}

impl RawSignal {
    pub const ALL: [RawSignal; 4] = [
        RawSignal::Likes,
        RawSignal::Shares,
        RawSignal::Favs,
        RawSignal::Clicks,
    ];
}

/// Non-negative linear weights turning a [`SignalVector`] into a scalar reward.
///
/// L1 and L2 feeds each carry their own instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalarizationWeights {
    pub likes: f64,
    pub shares: f64,
    pub favs: f64,
    pub clicks: f64,
}

impl ScalarizationWeights {
    pub fn new(likes: f64, shares: f64, favs: f64, clicks: f64) -> Result<Self> {
        let w = Self {
            likes,
            shares,
            favs,
            clicks,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn unit() -> Self {
        Self {
            likes: 1.0,
            shares: 1.0,
            favs: 1.0,
            clicks: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ws = [self.likes, self.shares, self.favs, self.clicks];
        ensure!(
            ws.iter().all(|w| w.is_finite() && *w >= 0.0),
            InvalidArgument,
            "scalarization weights must be finite and non-negative, got {ws:?}"
        );
        ensure!(
            ws.iter().any(|w| *w > 0.0),
            InvalidArgument,
            "at least one scalarization weight must be positive"
        );
        Ok(())
    }

    pub fn get(&self, signal: RawSignal) -> f64 {
        match signal {
            RawSignal::Likes => self.likes,
            RawSignal::Shares => self.shares,
            RawSignal::Favs => self.favs,
            RawSignal::Clicks => self.clicks,
        }
    }
}

/// A 1-based rank position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Position(usize);

impl Position {
    pub fn new(index: usize) -> Result<Self> {
        ensure!(index >= 1, InvalidArgument, "positions are 1-based, got {index}");
        Ok(Self(index))
    }

    /// Position of the zero-based slot `offset`.
    pub fn from_offset(offset: usize) -> Self {
        Self(offset + 1)
    }

    pub fn index(self) -> usize {
        self.0
    }
}

impl TryFrom<usize> for Position {
    type Error = Error;

    fn try_from(index: usize) -> Result<Self> {
        Position::new(index)
    }
}

impl From<Position> for usize {
    fn from(p: Position) -> usize {
        p.0
    }
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// A label column: one of the three nested-feed labels or a raw L1 signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelKind {
    /// L1 reward only.
    S1,
    /// L1 reward plus position-discounted L2 rewards.
    S2,
    /// L1 reward plus the plain sum of L2 rewards.
    S3,
    Likes,
    Shares,
    Favs,
    Clicks,
}

impl LabelKind {
    /// Column order used by datasets and reports.
    pub const ALL: [LabelKind; 7] = [
        LabelKind::S1,
        LabelKind::S2,
        LabelKind::S3,
        LabelKind::Likes,
        LabelKind::Shares,
        LabelKind::Favs,
        LabelKind::Clicks,
    ];

    pub const SYNTHETIC: [LabelKind; 3] = [LabelKind::S1, LabelKind::S2, LabelKind::S3];

    /// Report column order: raw signals first, then the synthetic labels.
    pub const TRUTHS: [LabelKind; 7] = [
        LabelKind::Likes,
        LabelKind::Shares,
        LabelKind::Favs,
        LabelKind::Clicks,
        LabelKind::S1,
        LabelKind::S2,
        LabelKind::S3,
    ];

    pub fn column(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            LabelKind::S1 => "s1",
            LabelKind::S2 => "s2",
            LabelKind::S3 => "s3",
            LabelKind::Likes => "likes",
            LabelKind::Shares => "shares",
            LabelKind::Favs => "favs",
            LabelKind::Clicks => "clicks",
        }
    }

    pub fn raw_signal(self) -> Option<RawSignal> {
        match self {
            LabelKind::Likes => Some(RawSignal::Likes),
            LabelKind::Shares => Some(RawSignal::Shares),
            LabelKind::Favs => Some(RawSignal::Favs),
            LabelKind::Clicks => Some(RawSignal::Clicks),
            _ => None,
        }
    }
}

impl fmt::Display for LabelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelKind::S1 => f.write_str("S1"),
            LabelKind::S2 => f.write_str("S2"),
            LabelKind::S3 => f.write_str("S3"),
            other => f.write_str(other.name()),
        }
    }
}

impl FromStr for LabelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LabelKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown label kind `{s}`")))
    }
}

/// `1 / log2(1 + i)` for a 1-based index. Callers guarantee `index >= 1`.
#[inline]
pub(crate) fn discount(index: usize) -> f64 {
    1.0 / ((index as f64) + 1.0).log2()
}

/// Probability that a user examines `pos` under the position-based model.
pub fn examination_probability(pos: Position) -> f64 {
    discount(pos.index())
}

/// Discounted cumulative gain over the first `k` entries of `gains`, which are
/// taken in rank order. Natural gains; no normalization.
pub fn dcg_at_k(gains: &[f64], k: usize) -> Result<f64> {
    ensure!(k >= 1, InvalidArgument, "dcg cutoff must be >= 1, got {k}");
    ensure!(!gains.is_empty(), InvalidArgument, "dcg of an empty list");
    ensure!(
        gains.iter().all(|g| *g >= 0.0),
        InvalidArgument,
        "dcg gains must be non-negative"
    );
    Ok(dcg_unchecked(gains, k))
}

/// [`dcg_at_k`] without argument validation, for hot loops over trusted data.
pub(crate) fn dcg_unchecked(gains: &[f64], k: usize) -> f64 {
    gains
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, g)| g * discount(i + 1))
        .sum()
}

pub fn scalarize(signals: &SignalVector, weights: &ScalarizationWeights) -> f64 {
    signals.likes as f64 * weights.likes
        + signals.shares as f64 * weights.shares
        + signals.favs as f64 * weights.favs
        + signals.clicks as f64 * weights.clicks
}

/// Inverse-propensity estimate of the relevance behind `observed_reward` seen at `pos`.
pub fn debias(observed_reward: f64, pos: Position) -> Result<f64> {
    ensure!(
        observed_reward >= 0.0,
        InvalidArgument,
        "observed reward must be non-negative, got {observed_reward}"
    );
    Ok(observed_reward / examination_probability(pos))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(i: usize) -> Position {
        Position::new(i).unwrap()
    }

    #[test]
    fn examination_fixtures() {
        assert_eq!(examination_probability(pos(1)), 1.0);
        assert!((examination_probability(pos(3)) - 0.5).abs() < 1e-12);
        assert!((examination_probability(pos(7)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn position_zero_is_rejected() {
        assert!(Position::new(0).is_err());
        assert!(serde_json::from_str::<Position>("0").is_err());
        assert_eq!(serde_json::from_str::<Position>("4").unwrap(), pos(4));
    }

    #[test]
    fn examination_strictly_decreasing() {
        let mut prev = f64::INFINITY;
        for i in 1..=1000 {
            let p = examination_probability(pos(i));
            assert!(p > 0.0 && p <= 1.0);
            assert!(p < prev);
            prev = p;
        }
    }

    #[test]
    fn dcg_fixtures() {
        assert_eq!(dcg_at_k(&[1.0, 0.0, 0.0], 3).unwrap(), 1.0);
        assert_eq!(dcg_at_k(&[0.0; 4], 4).unwrap(), 0.0);
        let v = dcg_at_k(&[3.0, 2.0, 3.0, 0.0, 1.0, 2.0], 6).unwrap();
        assert!((v - 6.86113).abs() < 1e-5, "{v}");
    }

    #[test]
    fn dcg_rejects_bad_input() {
        assert!(dcg_at_k(&[1.0], 0).is_err());
        assert!(dcg_at_k(&[1.0, -0.5], 2).is_err());
        assert!(dcg_at_k(&[], 2).is_err());
    }

    #[test]
    fn dcg_cutoff_beyond_length_uses_whole_list() {
        assert_eq!(
            dcg_at_k(&[1.0, 1.0], 10).unwrap(),
            dcg_at_k(&[1.0, 1.0], 2).unwrap()
        );
    }

    #[test]
    fn scalarize_fixtures() {
        let unit = ScalarizationWeights::unit();
        assert_eq!(scalarize(&SignalVector::new(1, 0, 1, 0), &unit), 2.0);
        assert_eq!(scalarize(&SignalVector::ZERO, &unit), 0.0);
        let w = ScalarizationWeights::new(1.0, 2.0, 1.5, 0.5).unwrap();
        assert_eq!(scalarize(&SignalVector::new(1, 1, 0, 1), &w), 3.5);
    }

    #[test]
    fn weights_validation() {
        assert!(ScalarizationWeights::new(0.0, 0.0, 0.0, 0.0).is_err());
        assert!(ScalarizationWeights::new(-1.0, 1.0, 0.0, 0.0).is_err());
        assert!(ScalarizationWeights::new(f64::NAN, 1.0, 0.0, 0.0).is_err());
        assert!(ScalarizationWeights::new(0.0, 0.0, 0.0, 0.1).is_ok());
    }

    #[test]
    fn debias_fixtures() {
        assert_eq!(debias(1.0, pos(1)).unwrap(), 1.0);
        assert_eq!(debias(0.0, pos(9)).unwrap(), 0.0);
        assert!((debias(1.0, pos(3)).unwrap() - 2.0).abs() < 1e-12);
        assert!(debias(-1.0, pos(1)).is_err());
    }

    #[test]
    fn label_kind_parsing() {
        assert_eq!("S3".parse::<LabelKind>().unwrap(), LabelKind::S3);
        assert_eq!("favs".parse::<LabelKind>().unwrap(), LabelKind::Favs);
        assert!("dwell".parse::<LabelKind>().is_err());
        for (i, k) in LabelKind::ALL.iter().enumerate() {
            assert_eq!(k.column(), i);
        }
    }
}
