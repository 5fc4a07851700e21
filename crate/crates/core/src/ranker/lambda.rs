//! Pairwise LambdaRank pseudo-gradients weighted by the DCG change of a swap.

use crate::error::{ensure, Result};
use crate::primitives::{discount, Position};

#[inline]
fn truncated_discount(pos: usize, k: usize) -> f64 {
    if pos <= k {
        discount(pos)
    } else {
        0.0
    }
}

/// `|gain_a - gain_b| * |disc(pos_a) - disc(pos_b)|` where `disc` is zero past `k`.
///
/// `gains` is in rank order; the positions index into it.
pub fn delta_dcg(gains: &[f64], pos_a: Position, pos_b: Position, k: usize) -> Result<f64> {
    let n = gains.len();
    ensure!(
        pos_a.index() <= n && pos_b.index() <= n,
        InvalidArgument,
        "positions ({pos_a}, {pos_b}) outside a list of {n}"
    );
    ensure!(pos_a != pos_b, InvalidArgument, "swap needs two distinct positions");
    ensure!(k >= 1, InvalidArgument, "cutoff must be >= 1");
    let (ga, gb) = (gains[pos_a.index() - 1], gains[pos_b.index() - 1]);
    Ok(swap_delta(ga, gb, pos_a.index(), pos_b.index(), k))
}

#[inline]
fn swap_delta(ga: f64, gb: f64, pa: usize, pb: usize, k: usize) -> f64 {
    (ga - gb).abs() * (truncated_discount(pa, k) - truncated_discount(pb, k)).abs()
}

/// Per-item `(gradient, hessian)` of the pairwise surrogate
/// `sum_{g_i > g_j} dDCG_ij * log(1 + exp(-sigma * (s_i - s_j)))`, with
/// `dDCG_ij` taken at the positions of the current score ordering (descending
/// score, ties by index).
pub fn lambda_gradients(
    scores: &[f64],
    gains: &[f64],
    k: usize,
    sigma: f64,
) -> Result<Vec<(f64, f64)>> {
    ensure!(
        scores.len() == gains.len(),
        InvalidArgument,
        "{} scores for {} gains",
        scores.len(),
        gains.len()
    );
    ensure!(sigma > 0.0, InvalidArgument, "sigma must be positive");
    ensure!(k >= 1, InvalidArgument, "cutoff must be >= 1");
    let n = scores.len();
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    accumulate_lambdas(scores, gains, None, k, sigma, &mut grad, &mut hess);
    Ok(grad.into_iter().zip(hess).collect())
}

/// Pair weighting for class imbalance: pairs with exactly one positive item
/// are multiplied by `weight`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PairWeights<'a> {
    pub positive: &'a [bool],
    pub weight: f64,
}

/// Gradients are accumulated in fixed point with this many fractional units,
/// so each pair adds exactly `+q` and `-q` and a group's gradients sum to
/// exactly zero.
const LAMBDA_SCALE: f64 = (1u64 << 40) as f64;

/// Per-pair lambdas are clamped to this magnitude so their fixed-point value fits an `i64`.
const MAX_PAIR_LAMBDA: f64 = (1u64 << 22) as f64;

/// Adds the group's lambdas into `grad` / `hess`, which must be the group's length.
pub(crate) fn accumulate_lambdas(
    scores: &[f64],
    gains: &[f64],
    pair_weights: Option<PairWeights<'_>>,
    k: usize,
    sigma: f64,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    let n = scores.len();
    if n < 2 {
        return;
    }
    let min_gain = gains.iter().copied().fold(f64::INFINITY, f64::min);
    if gains.iter().all(|g| *g == min_gain) {
        return;
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut disc = vec![0.0; n];
    for (r, &i) in order.iter().enumerate() {
        disc[i] = truncated_discount(r + 1, k);
    }
    // rho_ij = 1 / (1 + exp(sigma (s_i - s_j))) = e_j / (e_i + e_j) with e = exp(sigma (s - max)).
    let max = scores[order[0]];
    let e: Vec<f64> = scores.iter().map(|s| (sigma * (s - max)).exp()).collect();
    let mut fixed = vec![0i128; n];
    for i in 0..n {
        if gains[i] == min_gain {
            continue;
        }
        for j in 0..n {
            if gains[i] <= gains[j] {
                continue;
            }
            let mut delta = (gains[i] - gains[j]).abs() * (disc[i] - disc[j]).abs();
            if delta == 0.0 {
                continue;
            }
            if let Some(pw) = pair_weights {
                if pw.positive[i] != pw.positive[j] {
                    delta *= pw.weight;
                }
            }
            let denom = e[i] + e[j];
            let rho = if denom > 0.0 {
                e[j] / denom
            } else {
                1.0 / (1.0 + (sigma * (scores[i] - scores[j])).exp())
            };
            let lambda = (sigma * rho * delta).min(MAX_PAIR_LAMBDA);
            let q = (lambda * LAMBDA_SCALE).round() as i64 as i128;
            fixed[i] -= q;
            fixed[j] += q;
            let h = sigma * sigma * rho * (1.0 - rho) * delta;
            hess[i] += h;
            hess[j] += h;
        }
    }
    for (g, q) in grad.iter_mut().zip(fixed) {
        *g += q as f64 / LAMBDA_SCALE;
    }
}
