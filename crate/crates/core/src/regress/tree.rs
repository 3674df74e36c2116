//! Weighted CART regression trees with variance-reduction splits.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf(f64),
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn constant(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf(value)],
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    /// Minimum number of distinct rows per leaf.
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

/// Column-major copy of a design matrix with each feature's row order.
pub struct Presorted {
    pub n_rows: usize,
    pub cols: Vec<Vec<f64>>,
    pub order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &Array2<f64>) -> Self {
        let n_rows = x.nrows();
        let cols: Vec<Vec<f64>> = x.columns().into_iter().map(|c| c.to_vec()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut o: Vec<u32> = (0..n_rows as u32).collect();
                o.sort_by(|&a, &b| c[a as usize].total_cmp(&c[b as usize]).then(a.cmp(&b)));
                o
            })
            .collect();
        Self { n_rows, cols, order }
    }

    pub fn n_features(&self) -> usize {
        self.cols.len()
    }
}

struct Builder<'a, R> {
    data: &'a Presorted,
    y: &'a [f64],
    w: &'a [f64],
    params: TreeParams,
    rng: &'a mut R,
    idx: Vec<Vec<u32>>,
    buf: Vec<u32>,
    go_left: Vec<bool>,
    nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn build(&mut self, lo: usize, hi: usize, depth: usize) -> usize {
        let (mut sw, mut sy) = (0.0, 0.0);
        for &r in &self.idx[0][lo..hi] {
            let r = r as usize;
            sw += self.w[r];
            sy += self.w[r] * self.y[r];
        }
        let value = sy / sw;
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(value));
        let pure = self.idx[0][lo..hi].iter().all(|&r| self.y[r as usize] == self.y[self.idx[0][lo] as usize]);
        let leaf = self.params.min_samples_leaf.max(1);
        if pure || hi - lo < 2 * leaf || self.params.max_depth.is_some_and(|d| depth >= d) {
            return id;
        }
        let Some(best) = self.best_split(lo, hi, sw, sy) else {
            return id;
        };
        let col = &self.data.cols[best.feature];
        for &r in &self.idx[0][lo..hi] {
            self.go_left[r as usize] = col[r as usize] <= best.threshold;
        }
        let mut n_left = 0;
        for f in 0..self.idx.len() {
            self.buf.clear();
            let seg = &mut self.idx[f][lo..hi];
            let mut k = 0;
            for i in 0..seg.len() {
                let r = seg[i];
                if self.go_left[r as usize] {
                    seg[k] = r;
                    k += 1;
                } else {
                    self.buf.push(r);
                }
            }
            seg[k..].copy_from_slice(&self.buf);
            n_left = k;
        }
        let mid = lo + n_left;
        let left = self.build(lo, mid, depth + 1);
        let right = self.build(mid, hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.data.n_features();
        match self.params.max_features {
            Some(k) if k < p => {
                let mut f = rand::seq::index::sample(self.rng, p, k.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        }
    }

    /// Highest `S_L²/W_L + S_R²/W_R`; ties keep the lowest feature index and
    /// then the lowest threshold.
    fn best_split(&mut self, lo: usize, hi: usize, sw: f64, sy: f64) -> Option<Best> {
        let parent = sy * sy / sw;
        let leaf = self.params.min_samples_leaf.max(1);
        let mut best: Option<Best> = None;
        for f in self.candidate_features() {
            let col = &self.data.cols[f];
            let seg = &self.idx[f][lo..hi];
            let (mut wl, mut sl) = (0.0, 0.0);
            for i in 0..seg.len() - 1 {
                let r = seg[i] as usize;
                wl += self.w[r];
                sl += self.w[r] * self.y[r];
                let (a, b) = (col[r], col[seg[i + 1] as usize]);
                if i + 1 < leaf || seg.len() - i - 1 < leaf || a >= b {
                    continue;
                }
                let (wr, sr) = (sw - wl, sy - sl);
                let score = sl * sl / wl + sr * sr / wr;
                if best.as_ref().is_none_or(|bst| score > bst.score) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Best { feature: f, threshold, score });
                }
            }
        }
        best.filter(|b| b.score > parent + 1e-12 * parent.abs().max(1.0))
    }
}

/// Fits one tree on the rows with positive weight.
pub fn fit_tree<R: Rng>(data: &Presorted, y: &[f64], weights: &[f64], params: TreeParams, rng: &mut R) -> Tree {
    let idx: Vec<Vec<u32>> = data
        .order
        .iter()
        .map(|o| o.iter().copied().filter(|&r| weights[r as usize] > 0.0).collect())
        .collect();
    let m = idx.first().map_or(0, Vec::len);
    if m == 0 {
        return Tree::constant(0.0);
    }
    if data.n_features() == 0 {
        let (sw, sy) = (0..data.n_rows).fold((0.0, 0.0), |(a, b), r| (a + weights[r], b + weights[r] * y[r]));
        return Tree::constant(sy / sw);
    }
    let mut b = Builder {
        data,
        y,
        w: weights,
        params,
        rng,
        idx,
        buf: Vec::with_capacity(m),
        go_left: vec![false; data.n_rows],
        nodes: Vec::new(),
    };
    b.build(0, m, 0);
    Tree { nodes: b.nodes }
}
