use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{
    debias, discount, scalarize, LabelKind, Position, RawSignal, ScalarizationWeights,
};
use crate::simulator::NestedSessionLog;

/// One value per [`LabelKind`], indexed by [`LabelKind::column`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Labels(pub [f64; 7]);

impl Labels {
    pub fn get(&self, kind: LabelKind) -> f64 {
        self.0[kind.column()]
    }

    pub fn set(&mut self, kind: LabelKind, value: f64) {
        self.0[kind.column()] = value;
    }

    /// Union of the raw signals.
    pub fn is_positive(&self) -> bool {
        RawSignal::ALL
            .iter()
            .any(|s| self.0[raw_column(*s)] > 0.0)
    }
}

fn raw_column(signal: RawSignal) -> usize {
    match signal {
        RawSignal::Likes => LabelKind::Likes,
        RawSignal::Shares => LabelKind::Shares,
        RawSignal::Favs => LabelKind::Favs,
        RawSignal::Clicks => LabelKind::Clicks,
    }
    .column()
}

/// Label options beyond the scalarization weights.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelOptions {
    /// Replace the L1 reward by its inverse-propensity estimate at the logged position.
    pub debias_l1: bool,
}

/// Builds the label row for every L1 item of `log`, in slate order.
///
/// `S1` is the scalarized L1 reward, `S3` adds the plain sum of scalarized L2
/// rewards behind the item, and `S2` adds those rewards discounted by
/// `1 / log2(1 + j)` at L2 position `j`.
pub fn make_labels(
    log: &NestedSessionLog,
    w_l1: &ScalarizationWeights,
    w_l2: &ScalarizationWeights,
    options: LabelOptions,
) -> Result<Vec<Labels>> {
    log.validate()?;
    (0..log.l1_len())
        .map(|i| {
            let y0 = log.l1_signals(i);
            let mut r_a = scalarize(y0, w_l1);
            if options.debias_l1 {
                r_a = debias(r_a, Position::from_offset(i))
                    .map_err(|e| Error::InvalidLog(e.to_string()))?;
            }
            let (mut summed, mut discounted) = (0.0, 0.0);
            for (j, y) in log.l2_signals(i).iter().enumerate() {
                let r_b = scalarize(y, w_l2);
                summed += r_b;
                discounted += r_b * discount(j + 1);
            }
            let mut labels = Labels::default();
            labels.set(LabelKind::S1, r_a);
            labels.set(LabelKind::S2, r_a + discounted);
            labels.set(LabelKind::S3, r_a + summed);
            for s in RawSignal::ALL {
                labels.0[raw_column(s)] = y0.get(s) as f64;
            }
            Ok(labels)
        })
        .collect()
}
