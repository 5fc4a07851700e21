use std::collections::{HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::ops::Range;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use super::features::extract_features;
use super::labels::{make_labels, LabelOptions, Labels};
use crate::error::{create_with_comment, ensure, Error, Result};
use crate::primitives::{LabelKind, ScalarizationWeights};
use crate::seeding;
use crate::simulator::{ItemId, NestedSessionLog, World};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub group_id: u64,
    pub item_id: ItemId,
    pub features: Vec<f64>,
    pub labels: Labels,
}

impl LabeledExample {
    pub fn is_positive(&self) -> bool {
        self.labels.is_positive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Labeled examples of one split, stored contiguously by group.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingDataset {
    pub split: Split,
    examples: Vec<LabeledExample>,
    groups: Vec<Range<usize>>,
    n_features: usize,
    positive_rate: f64,
}

impl RankingDataset {
    /// Validates and indexes `examples`. Each group must occupy one contiguous run.
    pub fn new(split: Split, examples: Vec<LabeledExample>) -> Result<Self> {
        let n_features = examples.first().map_or(0, |e| e.features.len());
        let mut groups: Vec<Range<usize>> = Vec::new();
        let mut closed = HashSet::new();
        let mut items = HashSet::new();
        for (i, ex) in examples.iter().enumerate() {
            ensure!(
                ex.features.len() == n_features,
                Dataset,
                "row {i}: {} features, expected {n_features}",
                ex.features.len()
            );
            ensure!(
                ex.features.iter().all(|x| x.is_finite()),
                Dataset,
                "row {i}: non-finite feature value"
            );
            ensure!(
                ex.labels.0.iter().all(|v| v.is_finite() && *v >= 0.0),
                Dataset,
                "row {i}: labels must be finite and non-negative"
            );
            ensure!(
                LabelKind::ALL
                    .iter()
                    .filter(|k| k.raw_signal().is_some())
                    .all(|k| matches!(ex.labels.get(*k), v if v == 0.0 || v == 1.0)),
                Dataset,
                "row {i}: raw-signal labels must be 0 or 1"
            );
            let starts_group = i == 0 || examples[i - 1].group_id != ex.group_id;
            if starts_group {
                ensure!(
                    closed.insert(ex.group_id),
                    Dataset,
                    "group {} is not contiguous",
                    ex.group_id
                );
                groups.push(i..i + 1);
                items.clear();
            } else {
                groups.last_mut().expect("open group").end = i + 1;
            }
            ensure!(
                items.insert(ex.item_id),
                Dataset,
                "group {}: duplicate item {}",
                ex.group_id,
                ex.item_id.0
            );
        }
        let positives = examples.iter().filter(|e| e.is_positive()).count();
        let positive_rate = if examples.is_empty() {
            0.0
        } else {
            positives as f64 / examples.len() as f64
        };
        Ok(Self {
            split,
            examples,
            groups,
            n_features,
            positive_rate,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn into_examples(self) -> Vec<LabeledExample> {
        self.examples
    }

    pub fn group_ranges(&self) -> &[Range<usize>] {
        &self.groups
    }

    pub fn groups(&self) -> impl Iterator<Item = &[LabeledExample]> + '_ {
        self.groups.iter().map(|r| &self.examples[r.clone()])
    }

    pub fn group_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.groups.iter().map(|r| self.examples[r.start].group_id)
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn positive_rate(&self) -> f64 {
        self.positive_rate
    }

    pub fn label_column(&self, kind: LabelKind) -> Vec<f64> {
        self.examples.iter().map(|e| e.labels.get(kind)).collect()
    }
}

/// Labels every L1 impression of every log, one group per session.
pub fn build_examples(
    world: &World,
    logs: &[NestedSessionLog],
    w_l1: &ScalarizationWeights,
    w_l2: &ScalarizationWeights,
    options: LabelOptions,
) -> Result<Vec<LabeledExample>> {
    let mut out = Vec::with_capacity(logs.len() * world.config.slate_size);
    for log in logs {
        let labels = make_labels(log, w_l1, w_l2, options)?;
        for (item, labels) in log.l1_slate.iter().zip(labels) {
            out.push(LabeledExample {
                group_id: log.session_id,
                item_id: *item,
                features: extract_features(world, log.user_id, *item)?,
                labels,
            });
        }
    }
    Ok(out)
}

/// Keeps every positive example and a uniform subsample of the rest, so the
/// positive rate reaches at least `target_positive_rate`. Never upsamples.
/// Relative order of surviving examples is preserved.
pub fn negative_sample(
    examples: Vec<LabeledExample>,
    target_positive_rate: f64,
    seed: u64,
) -> Result<Vec<LabeledExample>> {
    ensure!(
        target_positive_rate > 0.0 && target_positive_rate < 1.0,
        InvalidArgument,
        "target positive rate must be in (0, 1), got {target_positive_rate}"
    );
    let positives = examples.iter().filter(|e| e.is_positive()).count();
    ensure!(positives > 0, Dataset, "no positive examples to anchor negative sampling");
    let negatives = examples.len() - positives;
    let rate = positives as f64 / examples.len() as f64;
    if rate >= target_positive_rate {
        return Ok(examples);
    }
    // Largest x with positives / (positives + x) >= target.
    let budget = (positives as f64 * (1.0 - target_positive_rate) / target_positive_rate + 1e-9)
        .floor() as usize;
    let budget = budget.min(negatives);
    let mut rng = seeding::rng(seed, &[seeding::tag("negative_sample")]);
    let mut keep = vec![false; negatives];
    for i in index::sample(&mut rng, negatives, budget) {
        keep[i] = true;
    }
    let mut neg_index = 0;
    Ok(examples
        .into_iter()
        .filter(|e| {
            if e.is_positive() {
                return true;
            }
            neg_index += 1;
            keep[neg_index - 1]
        })
        .collect())
}

/// Train/validation/test shares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios(pub [f64; 3]);

impl Default for SplitRatios {
    fn default() -> Self {
        Self([0.70, 0.15, 0.15])
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.0.iter().all(|r| *r > 0.0),
            InvalidArgument,
            "split ratios must be positive, got {:?}",
            self.0
        );
        ensure!(
            (self.0.iter().sum::<f64>() - 1.0).abs() <= 1e-9,
            InvalidArgument,
            "split ratios must sum to 1, got {:?}",
            self.0
        );
        Ok(())
    }

    /// Group counts per split for a stratum of `n` groups; every split gets at
    /// least one group when `n >= 3`.
    fn allocate(&self, n: usize) -> [usize; 3] {
        let mut train = (n as f64 * self.0[0]).round() as usize;
        let mut val = (n as f64 * self.0[1]).round() as usize;
        train = train.clamp(1, n.saturating_sub(2).max(1));
        val = val.clamp(1, (n - train).saturating_sub(1).max(1));
        [train, val, n - train - val]
    }
}

/// Splits at group level, stratified by whether a group contains a positive example.
pub fn stratified_split(
    examples: Vec<LabeledExample>,
    ratios: SplitRatios,
    seed: u64,
) -> Result<[RankingDataset; 3]> {
    ratios.validate()?;
    let mut order: Vec<u64> = Vec::new();
    let mut by_group: HashMap<u64, Vec<LabeledExample>> = HashMap::new();
    for ex in examples {
        by_group
            .entry(ex.group_id)
            .or_insert_with(|| {
                order.push(ex.group_id);
                Vec::new()
            })
            .push(ex);
    }
    ensure!(
        order.len() >= 3,
        Dataset,
        "need at least 3 groups to split, got {}",
        order.len()
    );
    let (mut positive, mut negative): (Vec<u64>, Vec<u64>) = order
        .iter()
        .partition(|g| by_group[g].iter().any(LabeledExample::is_positive));

    let mut rng = seeding::rng(seed, &[seeding::tag("stratified_split")]);
    let mut assigned: [Vec<u64>; 3] = Default::default();
    for (name, stratum) in [("positive", &mut positive), ("negative", &mut negative)] {
        if stratum.is_empty() {
            continue;
        }
        ensure!(
            stratum.len() >= 3,
            Dataset,
            "{name} stratum has {} groups, need at least 3",
            stratum.len()
        );
        stratum.shuffle(&mut rng);
        let [train, val, _] = ratios.allocate(stratum.len());
        assigned[0].extend_from_slice(&stratum[..train]);
        assigned[1].extend_from_slice(&stratum[train..train + val]);
        assigned[2].extend_from_slice(&stratum[train + val..]);
    }
    let rank: HashMap<u64, usize> = order.iter().enumerate().map(|(i, g)| (*g, i)).collect();
    let mut out = Vec::with_capacity(3);
    for (split, mut ids) in Split::ALL.into_iter().zip(assigned) {
        ids.sort_by_key(|g| rank[g]);
        let rows = ids
            .iter()
            .flat_map(|g| by_group.remove(g).expect("group assigned once"))
            .collect();
        out.push(RankingDataset::new(split, rows)?);
    }
    Ok(out.try_into().expect("three splits"))
}

fn header(n_features: usize) -> Vec<String> {
    let mut h = vec!["group_id".to_string(), "item_id".to_string()];
    h.extend((0..n_features).map(|i| format!("feature_{i}")));
    h.extend(LabelKind::ALL.iter().map(|k| format!("label_{}", k.name())));
    h
}

/// Writes a split as CSV. `comment`, when given, becomes a leading `# ` line.
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_dataset(path: &Path, dataset: &RankingDataset, comment: Option<&str>) -> Result<()> {
    let file = create_with_comment(path, comment)?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header(dataset.n_features()))?;
    let mut row = Vec::new();
    for ex in dataset.examples() {
        row.clear();
        row.push(ex.group_id.to_string());
        row.push(ex.item_id.0.to_string());
        row.extend(ex.features.iter().map(|x| format!("{x:?}")));
        row.extend(ex.labels.0.iter().map(|x| format!("{x:?}")));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: &Path, split: Split) -> Result<RankingDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(file);
    let head = r.headers()?.clone();
    ensure!(head.len() >= 2 + 7, Dataset, "{}: too few columns", path.display());
    let n_features = head.len() - 2 - 7;
    let expected = header(n_features);
    ensure!(
        head.iter().eq(expected.iter().map(String::as_str)),
        Dataset,
        "{}: unexpected header",
        path.display()
    );
    let parse_f = |s: &str, line: u64| {
        s.parse::<f64>()
            .map_err(|e| Error::Dataset(format!("{} line {line}: {e}", path.display())))
    };
    let mut examples = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let int = |s: &str| {
            s.parse::<u64>()
                .map_err(|e| Error::Dataset(format!("{} line {line}: {e}", path.display())))
        };
        let group_id = int(&rec[0])?;
        let item_id = ItemId(int(&rec[1])? as u32);
        let features = (0..n_features)
            .map(|i| parse_f(&rec[2 + i], line))
            .collect::<Result<Vec<_>>>()?;
        let mut labels = Labels::default();
        for (j, slot) in labels.0.iter_mut().enumerate() {
            *slot = parse_f(&rec[2 + n_features + j], line)?;
        }
        examples.push(LabeledExample {
            group_id,
            item_id,
            features,
            labels,
        });
    }
    RankingDataset::new(split, examples)
        .map_err(|e| Error::Dataset(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example(group: u64, item: u32, positive: bool) -> LabeledExample {
        let mut labels = Labels::default();
        if positive {
            labels.set(LabelKind::Likes, 1.0);
            labels.set(LabelKind::S1, 1.0);
            labels.set(LabelKind::S2, 1.0);
            labels.set(LabelKind::S3, 1.0);
        }
        LabeledExample {
            group_id: group,
            item_id: ItemId(item),
            features: vec![group as f64, item as f64 * 0.1],
            labels,
        }
    }

    #[test]
    fn negative_sampling_budget() {
        let mut xs: Vec<_> = (0..100).map(|i| example(i, 0, true)).collect();
        xs.extend((0..9_900).map(|i| example(1_000 + i, 1, false)));
        let out = negative_sample(xs, 0.05, 1).unwrap();
        let pos = out.iter().filter(|e| e.is_positive()).count();
        assert_eq!(pos, 100);
        assert!(out.len() - pos <= 1_900);
        assert_eq!(out.len() - pos, 1_900);
    }

    #[test]
    fn negative_sampling_leaves_rich_inputs_alone() {
        let xs: Vec<_> = (0..10).map(|i| example(i, 0, i % 2 == 0)).collect();
        assert_eq!(negative_sample(xs.clone(), 0.05, 3).unwrap(), xs);
        let all: Vec<_> = (0..10).map(|i| example(i, 0, true)).collect();
        assert_eq!(negative_sample(all.clone(), 0.05, 3).unwrap(), all);
    }

    #[test]
    fn negative_sampling_errors() {
        let none: Vec<_> = (0..10).map(|i| example(i, 0, false)).collect();
        assert!(negative_sample(none, 0.05, 3).is_err());
        let one = vec![example(0, 0, true)];
        assert!(negative_sample(one.clone(), 0.0, 3).is_err());
        assert!(negative_sample(one, 1.0, 3).is_err());
    }

    #[test]
    fn stratified_split_counts() {
        let mut xs = Vec::new();
        for g in 0..200u64 {
            xs.push(example(g, 0, g < 100));
            xs.push(example(g, 1, false));
        }
        let [train, val, test] = stratified_split(xs, SplitRatios::default(), 9).unwrap();
        let count = |d: &RankingDataset, pos: bool| {
            d.groups()
                .filter(|g| g.iter().any(LabeledExample::is_positive) == pos)
                .count()
        };
        for pos in [true, false] {
            assert_eq!(count(&train, pos), 70);
            assert_eq!(count(&val, pos), 15);
            assert_eq!(count(&test, pos), 15);
        }
        let mut all: Vec<u64> = train.group_ids().chain(val.group_ids()).chain(test.group_ids()).collect();
        all.sort_unstable();
        assert_eq!(all, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn stratified_split_errors() {
        let two: Vec<_> = (0..2).map(|g| example(g, 0, true)).collect();
        assert!(stratified_split(two, SplitRatios::default(), 1).is_err());
        let mut small_stratum: Vec<_> = (0..10).map(|g| example(g, 0, true)).collect();
        small_stratum.push(example(50, 0, false));
        assert!(stratified_split(small_stratum, SplitRatios::default(), 1).is_err());
        let xs: Vec<_> = (0..10).map(|g| example(g, 0, true)).collect();
        assert!(stratified_split(xs, SplitRatios([0.5, 0.5, 0.1]), 1).is_err());
    }

    #[test]
    fn dataset_rejects_broken_groups() {
        let xs = vec![example(1, 0, true), example(2, 0, false), example(1, 1, false)];
        assert!(RankingDataset::new(Split::Train, xs).is_err());
        let dup = vec![example(1, 0, true), example(1, 0, false)];
        assert!(RankingDataset::new(Split::Train, dup).is_err());
        let mut nan = example(1, 0, true);
        nan.features[0] = f64::NAN;
        assert!(RankingDataset::new(Split::Train, vec![nan]).is_err());
    }

    #[test]
    fn csv_round_trip_is_bit_exact() {
        let mut xs = Vec::new();
        for g in 0..5u64 {
            for i in 0..3u32 {
                let mut e = example(g, i, i == 0);
                e.features = vec![0.1 + g as f64 / 3.0, -1e-300, 12345.678901234567];
                e.labels.set(LabelKind::S2, 1.0 + 1.0 / 3f64.log2());
                xs.push(e);
            }
        }
        let ds = RankingDataset::new(Split::Test, xs).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.csv");
        write_dataset(&path, &ds, Some("meta line")).unwrap();
        let back = read_dataset(&path, Split::Test).unwrap();
        assert_eq!(back, ds);
    }
}
