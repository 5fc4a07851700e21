use super::booster::BoostedRanker;
use super::tree::{Tree, TreeNode};

/// An ensemble laid out for fast batch scoring. Every tree is walked for
/// exactly its depth; leaves point back at themselves so the walk has no
/// data-dependent exit. Produces the same scores, bit for bit, as the tree form.
#[derive(Debug, Clone)]
pub struct FlatEnsemble {
    base_score: f64,
    learning_rate: f64,
    trees: Vec<FlatTree>,
}

#[derive(Debug, Clone)]
struct FlatTree {
    depth: usize,
    feature: Vec<u32>,
    threshold: Vec<f64>,
    /// `[left, right]` per node.
    children: Vec<[u32; 2]>,
    value: Vec<f64>,
}

impl FlatTree {
    fn new(tree: &Tree) -> Self {
        let n = tree.nodes.len();
        let mut flat = Self {
            depth: tree.depth(),
            feature: vec![0; n],
            threshold: vec![f64::INFINITY; n],
            children: vec![[0, 0]; n],
            value: vec![0.0; n],
        };
        for (i, node) in tree.nodes.iter().enumerate() {
            match node {
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    flat.feature[i] = *feature as u32;
                    flat.threshold[i] = *threshold;
                    flat.children[i] = [*left as u32, *right as u32];
                }
                TreeNode::Leaf { value } => {
                    flat.children[i] = [i as u32, i as u32];
                    flat.value[i] = *value;
                }
            }
        }
        flat
    }

    /// Walks up to `LANES` rows in lockstep so their independent loads overlap.
    #[inline]
    fn predict_lanes(&self, rows: &[&[f64]], out: &mut [f64; LANES]) {
        let mut node = [0usize; LANES];
        for _ in 0..self.depth {
            for (i, x) in node.iter_mut().zip(rows) {
                // `x <= threshold` goes left; NaN goes right, as in `Tree::predict`.
                let right = !(x[self.feature[*i] as usize] <= self.threshold[*i]);
                *i = self.children[*i][usize::from(right)] as usize;
            }
        }
        for ((o, i), _) in out.iter_mut().zip(node).zip(rows) {
            *o = self.value[i];
        }
    }
}

const LANES: usize = 8;

impl FlatEnsemble {
    pub fn new(model: &BoostedRanker) -> Self {
        Self {
            base_score: model.base_score,
            learning_rate: model.learning_rate,
            trees: model.trees.iter().map(FlatTree::new).collect(),
        }
    }

    /// Scores rows tree by tree. Each row sees the additions in the same order
    /// as [`BoostedRanker::score`]. Rows must have the model's feature count.
    pub fn score_rows(&self, rows: &[&[f64]]) -> Vec<f64> {
        let mut scores = vec![self.base_score; rows.len()];
        let mut leaf = [0.0; LANES];
        for (chunk, out) in rows.chunks(LANES).zip(scores.chunks_mut(LANES)) {
            for t in &self.trees {
                t.predict_lanes(chunk, &mut leaf);
                for (s, v) in out.iter_mut().zip(&leaf) {
                    *s += self.learning_rate * v;
                }
            }
        }
        scores
    }
}
