use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Per-feature split thresholds. Bin `b` of a feature holds values in
/// `(edges[b - 1], edges[b]]`; the last bin holds everything above the last edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinMapper {
    pub edges: Vec<Vec<f64>>,
}

/// Row-major bin indices of a feature matrix.
#[derive(Debug, Clone)]
pub(crate) struct BinnedMatrix {
    pub bins: Vec<u8>,
    pub n_rows: usize,
    pub n_features: usize,
}

impl BinnedMatrix {
    #[inline]
    pub fn row(&self, r: usize) -> &[u8] {
        &self.bins[r * self.n_features..(r + 1) * self.n_features]
    }

    #[inline]
    pub fn get(&self, r: usize, feature: usize) -> u8 {
        self.bins[r * self.n_features + feature]
    }
}

impl BinMapper {
    /// Quantile edges computed from the rows of `features`, at most `max_bins` bins per feature.
    pub fn fit(features: &[&[f64]], max_bins: usize) -> Result<Self> {
        ensure!(
            (2..=256).contains(&max_bins),
            InvalidArgument,
            "histogram bins must be in 2..=256, got {max_bins}"
        );
        let n_features = features.first().map_or(0, |r| r.len());
        let mut column = Vec::with_capacity(features.len());
        let edges = (0..n_features)
            .map(|f| {
                column.clear();
                column.extend(features.iter().map(|r| r[f]));
                column.sort_by(f64::total_cmp);
                quantile_edges(&column, max_bins)
            })
            .collect();
        Ok(Self { edges })
    }

    pub fn n_features(&self) -> usize {
        self.edges.len()
    }

    pub fn n_bins(&self, feature: usize) -> usize {
        self.edges[feature].len() + 1
    }

    #[inline]
    pub fn bin(&self, feature: usize, value: f64) -> u8 {
        self.edges[feature].partition_point(|e| *e < value) as u8
    }

    pub(crate) fn transform(&self, features: &[&[f64]]) -> BinnedMatrix {
        let n_features = self.n_features();
        let mut bins = Vec::with_capacity(features.len() * n_features);
        for row in features {
            bins.extend((0..n_features).map(|f| self.bin(f, row[f])));
        }
        BinnedMatrix {
            bins,
            n_rows: features.len(),
            n_features,
        }
    }
}

fn quantile_edges(sorted: &[f64], max_bins: usize) -> Vec<f64> {
    let mut distinct: Vec<f64> = sorted.to_vec();
    distinct.dedup();
    if distinct.len() <= max_bins {
        distinct.pop();
        return distinct;
    }
    let n = sorted.len();
    let max = *sorted.last().expect("non-empty column");
    let mut edges: Vec<f64> = (1..max_bins)
        .map(|k| sorted[(k * n / max_bins).min(n - 1)])
        .filter(|e| *e < max)
        .collect();
    edges.dedup();
    edges
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_own_bins() {
        let rows: Vec<Vec<f64>> = [3.0, 1.0, 2.0, 1.0, 3.0].iter().map(|v| vec![*v]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = BinMapper::fit(&refs, 8).unwrap();
        assert_eq!(m.edges[0], vec![1.0, 2.0]);
        assert_eq!(m.bin(0, 1.0), 0);
        assert_eq!(m.bin(0, 2.0), 1);
        assert_eq!(m.bin(0, 3.0), 2);
        assert_eq!(m.bin(0, 100.0), 2);
        assert_eq!(m.bin(0, -5.0), 0);
    }

    #[test]
    fn many_values_are_capped() {
        let rows: Vec<Vec<f64>> = (0..10_000).map(|i| vec![i as f64 * 0.37]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = BinMapper::fit(&refs, 64).unwrap();
        assert!(m.n_bins(0) <= 64);
        assert!(m.edges[0].windows(2).all(|w| w[0] < w[1]));
        let binned = m.transform(&refs);
        // Roughly equal occupancy.
        let mut counts = vec![0usize; m.n_bins(0)];
        for r in 0..binned.n_rows {
            counts[binned.get(r, 0) as usize] += 1;
        }
        assert!(counts.iter().all(|c| *c > 100 && *c < 200), "{counts:?}");
    }

    #[test]
    fn bin_threshold_consistency() {
        let rows: Vec<Vec<f64>> = (0..500).map(|i| vec![((i * 7919) % 500) as f64 / 7.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let m = BinMapper::fit(&refs, 16).unwrap();
        for r in &rows {
            let b = m.bin(0, r[0]) as usize;
            for (t, e) in m.edges[0].iter().enumerate() {
                assert_eq!(r[0] <= *e, b <= t);
            }
        }
    }

    #[test]
    fn rejects_bad_bin_counts() {
        let rows = [vec![1.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        assert!(BinMapper::fit(&refs, 1).is_err());
        assert!(BinMapper::fit(&refs, 257).is_err());
    }
}
