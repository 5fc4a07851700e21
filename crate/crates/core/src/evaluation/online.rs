use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{create_with_comment, ensure, Error, Result};
use crate::labeling::{extract_features, feature_count};
use crate::primitives::{LabelKind, ScalarizationWeights};
use crate::ranker::{BoostedRanker, FlatEnsemble};
use crate::simulator::{true_q, ItemId, Policy, QEstimate, UserId, World};

/// Ranks candidates by descending model score, ties by ascending item id.
#[derive(Debug, Clone)]
pub struct ModelPolicy {
    model: FlatEnsemble,
}

impl ModelPolicy {
    pub fn new(model: &BoostedRanker) -> Self {
        Self {
            model: FlatEnsemble::new(model),
        }
    }
}

impl Policy for ModelPolicy {
    fn rank(&self, world: &World, user: UserId, candidates: &[ItemId]) -> Vec<ItemId> {
        let rows: Vec<Vec<f64>> = candidates
            .iter()
            .map(|a| extract_features(world, user, *a).expect("candidate drawn from the world"))
            .collect();
        let rows: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let scores = self.model.score_rows(&rows);
        let mut scored: Vec<(f64, ItemId)> = scores.into_iter().zip(candidates.iter().copied()).collect();
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
        scored.into_iter().map(|(_, a)| a).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantResult {
    pub name: String,
    pub per_seed: Vec<QEstimate>,
    /// Mean over seeds of the per-seed Q estimates.
    pub q_mean: f64,
    /// Standard error of `q_mean` across seeds.
    pub q_stderr: f64,
    pub l1_mean: f64,
    pub l2_mean: f64,
    pub clicks_mean: f64,
}

/// Two-sided Welch t-test of `higher` against `lower` over per-seed means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub higher: String,
    pub lower: String,
    pub difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
    /// `p_value` times the number of comparisons, capped at 1.
    pub p_adjusted: f64,
    pub significant: bool,
}

impl Comparison {
    /// The expected direction holds and is significant.
    pub fn confirms(&self) -> bool {
        self.difference > 0.0 && self.significant
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineReport {
    pub n_sessions: u64,
    pub seeds: Vec<u64>,
    pub alpha: f64,
    pub variants: Vec<VariantResult>,
    pub comparisons: Vec<Comparison>,
}

/// Welch's two-sided test. Returns `(t, df, p)`.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<(f64, f64, f64)> {
    ensure!(
        a.len() >= 2 && b.len() >= 2,
        InvalidArgument,
        "welch test needs at least two samples per arm"
    );
    let stats = |x: &[f64]| {
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
        (n, m, v)
    };
    let (na, ma, va) = stats(a);
    let (nb, mb, vb) = stats(b);
    let se2 = va / na + vb / nb;
    let diff = ma - mb;
    if se2 == 0.0 {
        let p = if diff == 0.0 { 1.0 } else { 0.0 };
        let t = if diff == 0.0 { 0.0 } else { diff.signum() * f64::INFINITY };
        return Ok((t, na + nb - 2.0, p));
    }
    let t = diff / se2.sqrt();
    let df = se2.powi(2)
        / ((va / na).powi(2) / (na - 1.0) + (vb / nb).powi(2) / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, df)
        .map_err(|e| Error::InvalidArgument(format!("t distribution with df {df}: {e}")))?;
    let p = (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0);
    Ok((t, df, p))
}

fn summarize(name: &str, per_seed: Vec<QEstimate>) -> VariantResult {
    let n = per_seed.len() as f64;
    let mean = |f: fn(&QEstimate) -> f64| per_seed.iter().map(f).sum::<f64>() / n;
    let l1_mean = mean(|q| q.l1_mean);
    let l2_mean = mean(|q| q.l2_mean);
    let q_var = if per_seed.len() > 1 {
        let m = l1_mean + l2_mean;
        per_seed.iter().map(|q| (q.mean - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    VariantResult {
        name: name.to_string(),
        q_mean: l1_mean + l2_mean,
        q_stderr: (q_var / n).sqrt(),
        l1_mean,
        l2_mean,
        clicks_mean: mean(|q| q.clicks_mean),
        per_seed,
    }
}

/// Runs every policy on the same sessions of every seed and tests each
/// `(higher, lower)` pair in `tests`, Bonferroni-corrected over `tests.len()`.
#[allow(clippy::too_many_arguments)]
pub fn compare_policies(
    world: &World,
    policies: &[(&str, &dyn Policy)],
    tests: &[(&str, &str)],
    w_l1: &ScalarizationWeights,
    w_l2: &ScalarizationWeights,
    n_sessions: u64,
    seeds: &[u64],
    alpha: f64,
) -> Result<OnlineReport> {
    ensure!(seeds.len() >= 2, InvalidArgument, "need at least two seeds, got {}", seeds.len());
    ensure!(
        alpha > 0.0 && alpha < 1.0,
        InvalidArgument,
        "alpha must be in (0, 1), got {alpha}"
    );
    let mut variants = Vec::with_capacity(policies.len());
    for (name, policy) in policies {
        let per_seed = seeds
            .iter()
            .map(|s| true_q(world, *policy, w_l1, w_l2, n_sessions, *s))
            .collect::<Result<Vec<_>>>()?;
        let v = summarize(name, per_seed);
        log::info!("online {name}: Q {:.5} +- {:.5}", v.q_mean, v.q_stderr);
        variants.push(v);
    }
    let family = tests.len() as f64;
    let mut comparisons = Vec::with_capacity(tests.len());
    for (hi, lo) in tests {
        let find = |name: &str| {
            variants
                .iter()
                .find(|v| v.name == name)
                .ok_or_else(|| Error::InvalidArgument(format!("no variant named {name}")))
        };
        let (a, b) = (find(hi)?, find(lo)?);
        let qa: Vec<f64> = a.per_seed.iter().map(|q| q.mean).collect();
        let qb: Vec<f64> = b.per_seed.iter().map(|q| q.mean).collect();
        let (t, df, p) = welch_t_test(&qa, &qb)?;
        let p_adjusted = (p * family).min(1.0);
        comparisons.push(Comparison {
            higher: hi.to_string(),
            lower: lo.to_string(),
            difference: a.q_mean - b.q_mean,
            t,
            df,
            p_value: p,
            p_adjusted,
            significant: p_adjusted < alpha,
        });
    }
    Ok(OnlineReport {
        n_sessions,
        seeds: seeds.to_vec(),
        alpha,
        variants,
        comparisons,
    })
}

/// Comparisons tested by [`online_compare`], each as (expected higher, expected lower).
pub const ONLINE_TESTS: [(LabelKind, LabelKind); 3] = [
    (LabelKind::S3, LabelKind::S2),
    (LabelKind::S2, LabelKind::S1),
    (LabelKind::S3, LabelKind::S1),
];

/// Compares the S1/S2/S3 models online at significance level `alpha`.
pub fn online_compare(
    world: &World,
    models: &BTreeMap<LabelKind, BoostedRanker>,
    w_l1: &ScalarizationWeights,
    w_l2: &ScalarizationWeights,
    n_sessions: u64,
    seeds: &[u64],
    alpha: f64,
) -> Result<OnlineReport> {
    let n_features = feature_count(world);
    let mut policies = Vec::new();
    for kind in LabelKind::SYNTHETIC {
        let model = models
            .get(&kind)
            .ok_or_else(|| Error::Model(format!("no model trained on {kind}")))?;
        ensure!(
            model.n_features == n_features,
            Model,
            "{kind} model expects {} features, the world produces {n_features}",
            model.n_features
        );
        policies.push((kind.to_string(), ModelPolicy::new(model)));
    }
    let dyn_policies: Vec<(&str, &dyn Policy)> =
        policies.iter().map(|(n, p)| (n.as_str(), p as &dyn Policy)).collect();
    let names: Vec<(String, String)> =
        ONLINE_TESTS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    let tests: Vec<(&str, &str)> = names.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    compare_policies(world, &dyn_policies, &tests, w_l1, w_l2, n_sessions, seeds, alpha)
}

impl OnlineReport {
    pub fn variant(&self, name: &str) -> Option<&VariantResult> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn comparison(&self, higher: &str, lower: &str) -> Option<&Comparison> {
        self.comparisons
            .iter()
            .find(|c| c.higher == higher && c.lower == lower)
    }

    /// Every tested pair confirms its expected direction.
    pub fn ordering_holds(&self) -> bool {
        self.comparisons.iter().all(Comparison::confirms)
    }

    /// Per-variant summary, one row per variant and seed plus one `all` row per variant.
    pub fn write_variants_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let file = create_with_comment(path, comment)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(["variant", "seed", "q", "q_stderr", "l1", "l2", "clicks", "sessions"])?;
        for v in &self.variants {
            for (seed, q) in self.seeds.iter().zip(&v.per_seed) {
                w.write_record([
                    v.name.clone(),
                    seed.to_string(),
                    format!("{:?}", q.mean),
                    format!("{:?}", q.stderr),
                    format!("{:?}", q.l1_mean),
                    format!("{:?}", q.l2_mean),
                    format!("{:?}", q.clicks_mean),
                    q.n_sessions.to_string(),
                ])?;
            }
            w.write_record([
                v.name.clone(),
                "all".to_string(),
                format!("{:?}", v.q_mean),
                format!("{:?}", v.q_stderr),
                format!("{:?}", v.l1_mean),
                format!("{:?}", v.l2_mean),
                format!("{:?}", v.clicks_mean),
                (self.n_sessions * self.seeds.len() as u64).to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_comparisons_csv(&self, path: &Path, comment: Option<&str>) -> Result<()> {
        let file = create_with_comment(path, comment)?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record([
            "higher", "lower", "difference", "t", "df", "p_value", "p_adjusted", "significant",
        ])?;
        for c in &self.comparisons {
            w.write_record([
                c.higher.clone(),
                c.lower.clone(),
                format!("{:?}", c.difference),
                format!("{:?}", c.t),
                format!("{:?}", c.df),
                format!("{:?}", c.p_value),
                format!("{:?}", c.p_adjusted),
                c.significant.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Text tables; comparisons that are not significant are marked with `*`.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} sessions x {} seeds, alpha {} (Bonferroni over {} comparisons)",
            self.n_sessions,
            self.seeds.len(),
            self.alpha,
            self.comparisons.len()
        );
        let _ = writeln!(
            out,
            "{:<8} {:>10} {:>9} {:>10} {:>10} {:>8}",
            "variant", "Q", "stderr", "L1", "L2", "clicks"
        );
        for v in &self.variants {
            let _ = writeln!(
                out,
                "{:<8} {:>10.4} {:>9.4} {:>10.4} {:>10.4} {:>8.4}",
                v.name, v.q_mean, v.q_stderr, v.l1_mean, v.l2_mean, v.clicks_mean
            );
        }
        out.push('\n');
        let _ = writeln!(
            out,
            "{:<12} {:>10} {:>8} {:>10} {:>10}",
            "comparison", "diff", "t", "p", "p_adj"
        );
        for c in &self.comparisons {
            let mark = if c.significant { "" } else { " *" };
            let _ = writeln!(
                out,
                "{:<12} {:>+10.4} {:>8.2} {:>10.2e} {:>10.2e}{mark}",
                format!("{} > {}", c.higher, c.lower),
                c.difference,
                c.t,
                c.p_value,
                c.p_adjusted
            );
        }
        if self.comparisons.iter().any(|c| !c.significant) {
            out.push_str("* not significant\n");
        }
        out
    }
}
