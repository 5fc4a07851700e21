use serde::{Deserialize, Serialize};

use super::binning::{BinMapper, BinnedMatrix};

/// A node of a regression tree stored in a flat array; the root is at index 0.
/// Routing: `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![TreeNode::Leaf { value }],
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { value } => return *value,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Internal { left, right, .. } => {
                    1 + walk(nodes, *left).max(walk(nodes, *right))
                }
            }
        }
        walk(&self.nodes, 0)
    }

    /// Checks child indices and that every internal node has two children.
    pub fn is_well_formed(&self, n_features: usize) -> bool {
        let n = self.nodes.len();
        let mut referenced = vec![false; n];
        for (i, node) in self.nodes.iter().enumerate() {
            if let TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if *feature >= n_features
                    || !threshold.is_finite()
                    || *left >= n
                    || *right >= n
                    || *left <= i
                    || *right <= i
                    || left == right
                    || referenced[*left]
                    || referenced[*right]
                {
                    return false;
                }
                referenced[*left] = true;
                referenced[*right] = true;
            }
        }
        n > 0 && referenced.iter().skip(1).all(|r| *r)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct GrowParams {
    pub max_depth: usize,
    pub min_examples_per_leaf: usize,
    pub l2_reg: f64,
}

#[derive(Clone, Copy, Default)]
struct Bin {
    grad: f64,
    hess: f64,
    count: u32,
}

/// Gradient/hessian histograms of one node, one block of bins per feature.
struct Histogram {
    bins: Vec<Bin>,
}

struct Split {
    feature: usize,
    bin: u8,
    gain: f64,
}

const MIN_HESS: f64 = 1e-12;

fn score(g: f64, h: f64, reg: f64) -> f64 {
    if h + reg <= MIN_HESS {
        0.0
    } else {
        g * g / (h + reg)
    }
}

fn leaf_value(g: f64, h: f64, reg: f64) -> f64 {
    if h + reg <= MIN_HESS {
        0.0
    } else {
        -g / (h + reg)
    }
}

/// Depth-wise greedy tree growth over pre-binned features.
pub(crate) struct TreeGrower<'a> {
    mapper: &'a BinMapper,
    data: &'a BinnedMatrix,
    offsets: Vec<usize>,
    total_bins: usize,
    params: GrowParams,
}

impl<'a> TreeGrower<'a> {
    pub fn new(mapper: &'a BinMapper, data: &'a BinnedMatrix, params: GrowParams) -> Self {
        let mut offsets = Vec::with_capacity(mapper.n_features() + 1);
        let mut total = 0;
        for f in 0..mapper.n_features() {
            offsets.push(total);
            total += mapper.n_bins(f);
        }
        offsets.push(total);
        Self {
            mapper,
            data,
            offsets,
            total_bins: total,
            params,
        }
    }

    /// Grows one tree. Returns it with the leaf value of every training row.
    pub fn grow(&self, grad: &[f64], hess: &[f64]) -> (Tree, Vec<f64>) {
        let rows: Vec<u32> = (0..self.data.n_rows as u32).collect();
        let hist = self.histogram(&rows, grad, hess);
        let mut nodes = Vec::new();
        let mut row_values = vec![0.0; self.data.n_rows];
        self.grow_node(&mut nodes, rows, hist, 0, grad, hess, &mut row_values);
        (Tree { nodes }, row_values)
    }

    fn histogram(&self, rows: &[u32], grad: &[f64], hess: &[f64]) -> Histogram {
        let mut bins = vec![Bin::default(); self.total_bins];
        let offsets = &self.offsets[..self.data.n_features];
        for r in rows {
            let r = *r as usize;
            let (g, h) = (grad[r], hess[r]);
            for (offset, bin) in offsets.iter().zip(self.data.row(r)) {
                let b = &mut bins[offset + *bin as usize];
                b.grad += g;
                b.hess += h;
                b.count += 1;
            }
        }
        Histogram { bins }
    }

    fn subtract(parent: &Histogram, child: &Histogram) -> Histogram {
        Histogram {
            bins: parent
                .bins
                .iter()
                .zip(&child.bins)
                .map(|(p, c)| Bin {
                    grad: p.grad - c.grad,
                    hess: p.hess - c.hess,
                    count: p.count - c.count,
                })
                .collect(),
        }
    }

    fn best_split(&self, hist: &Histogram, g: f64, h: f64, n: usize) -> Option<Split> {
        let reg = self.params.l2_reg;
        let min_leaf = self.params.min_examples_per_leaf.max(1);
        let parent = score(g, h, reg);
        let mut best: Option<Split> = None;
        for f in 0..self.mapper.n_features() {
            let block = &hist.bins[self.offsets[f]..self.offsets[f + 1]];
            let (mut gl, mut hl, mut nl) = (0.0, 0.0, 0usize);
            for (b, bin) in block.iter().enumerate().take(block.len() - 1) {
                gl += bin.grad;
                hl += bin.hess;
                nl += bin.count as usize;
                if nl < min_leaf {
                    continue;
                }
                if n - nl < min_leaf {
                    break;
                }
                let gain = score(gl, hl, reg) + score(g - gl, h - hl, reg) - parent;
                if gain > 1e-12 && best.as_ref().is_none_or(|s| gain > s.gain) {
                    best = Some(Split {
                        feature: f,
                        bin: b as u8,
                        gain,
                    });
                }
            }
        }
        best
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_node(
        &self,
        nodes: &mut Vec<TreeNode>,
        rows: Vec<u32>,
        hist: Histogram,
        depth: usize,
        grad: &[f64],
        hess: &[f64],
        row_values: &mut [f64],
    ) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), r| {
            (g + grad[*r as usize], h + hess[*r as usize])
        });
        let id = nodes.len();
        let split = if depth < self.params.max_depth
            && rows.len() >= 2 * self.params.min_examples_per_leaf.max(1)
        {
            self.best_split(&hist, g, h, rows.len())
        } else {
            None
        };
        let Some(split) = split else {
            let value = leaf_value(g, h, self.params.l2_reg);
            for r in &rows {
                row_values[*r as usize] = value;
            }
            nodes.push(TreeNode::Leaf { value });
            return id;
        };

        let (left, right): (Vec<u32>, Vec<u32>) = rows
            .into_iter()
            .partition(|r| self.data.get(*r as usize, split.feature) <= split.bin);
        let (small, small_is_left) = if left.len() <= right.len() {
            (&left, true)
        } else {
            (&right, false)
        };
        let small_hist = self.histogram(small, grad, hess);
        let large_hist = Self::subtract(&hist, &small_hist);
        drop(hist);
        let (left_hist, right_hist) = if small_is_left {
            (small_hist, large_hist)
        } else {
            (large_hist, small_hist)
        };

        nodes.push(TreeNode::Internal {
            feature: split.feature,
            threshold: self.mapper.edges[split.feature][split.bin as usize],
            left: 0,
            right: 0,
        });
        let l = self.grow_node(nodes, left, left_hist, depth + 1, grad, hess, row_values);
        let r = self.grow_node(nodes, right, right_hist, depth + 1, grad, hess, row_values);
        if let TreeNode::Internal { left, right, .. } = &mut nodes[id] {
            *left = l;
            *right = r;
        }
        id
    }
}
