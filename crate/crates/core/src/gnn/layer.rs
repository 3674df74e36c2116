//! Message-passing layers with explicit backward passes.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::kg::{GraphView, Relation};

/// Row-normalized sparse propagation operator: `(A x)_i = Σ_j a_ij x_j`.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    pub rows: Vec<Vec<(usize, f64)>>,
}

impl SparseOp {
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), x.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            let mut o = out.row_mut(i);
            for &(j, a) in row {
                o.scaled_add(a, &x.row(j));
            }
        }
        out
    }

    pub fn apply_transpose(&self, g: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros((self.rows.len(), g.ncols()));
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, a) in row {
                let gi = g.row(i);
                out.row_mut(j).scaled_add(a, &gi);
            }
        }
        out
    }

    /// Weights `m_ij / Σ_j m_ij` over the neighbor entries accepted by
    /// `keep`; nodes without accepted neighbors get an empty row.
    fn normalized(view: &GraphView, keep: impl Fn(Relation) -> bool) -> Self {
        let rows = (0..view.node_count())
            .map(|i| {
                let entries: Vec<(usize, f64)> = view
                    .neighbors(i)
                    .iter()
                    .filter(|&&(_, r, _)| keep(r))
                    .map(|&(j, _, m)| (j, m as f64))
                    .collect();
                let c: f64 = entries.iter().map(|e| e.1).sum();
                entries.into_iter().map(|(j, m)| (j, m / c)).collect()
            })
            .collect();
        Self { rows }
    }

    pub fn mean(view: &GraphView) -> Self {
        Self::normalized(view, |_| true)
    }

    pub fn relation(view: &GraphView, relation: Relation) -> Self {
        Self::normalized(view, |r| r == relation)
    }
}

/// Single mean operator for the mean aggregator, one per relation (in
/// `relations` order) for the relation-typed layer.
pub fn operators(view: &GraphView, relations: Option<&[Relation]>) -> Result<Vec<SparseOp>> {
    match relations {
        None => Ok(vec![SparseOp::mean(view)]),
        Some(rels) => {
            if let Some(r) = view.relations().into_iter().find(|r| !rels.contains(r)) {
                return Err(Error::Graph(format!("relation {r} has no weight matrix")));
            }
            Ok(rels.iter().map(|&r| SparseOp::relation(view, r)).collect())
        }
    }
}

/// `out = relu(X·W_self + Σ_k (A_k X)·W_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerWeights {
    pub w_self: Array2<f64>,
    pub w_ops: Vec<Array2<f64>>,
}

impl LayerWeights {
    pub fn zeros_like(&self) -> Self {
        Self {
            w_self: Array2::zeros(self.w_self.raw_dim()),
            w_ops: self.w_ops.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w_self.nrows()
    }

    pub fn out_dim(&self) -> usize {
        self.w_self.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.w_self.len() + self.w_ops.iter().map(Array2::len).sum::<usize>()
    }

    pub fn matrices(&self) -> impl Iterator<Item = &Array2<f64>> {
        std::iter::once(&self.w_self).chain(self.w_ops.iter())
    }

    pub fn matrices_mut(&mut self) -> impl Iterator<Item = &mut Array2<f64>> {
        std::iter::once(&mut self.w_self).chain(self.w_ops.iter_mut())
    }
}

#[derive(Clone, Debug)]
pub struct LayerCache {
    pub input: Array2<f64>,
    pub aggregated: Vec<Array2<f64>>,
    pub pre: Array2<f64>,
    pub out: Array2<f64>,
}

fn check_shapes(w: &LayerWeights, ops: &[SparseOp], x: &Array2<f64>) -> Result<()> {
    if w.w_ops.len() != ops.len() {
        return Err(Error::InvalidInput(format!("{} operators but {} weight matrices", ops.len(), w.w_ops.len())));
    }
    if x.ncols() != w.in_dim() || w.w_ops.iter().any(|m| m.raw_dim() != w.w_self.raw_dim()) {
        return Err(Error::InvalidInput(format!(
            "feature width {} does not match layer input {}",
            x.ncols(),
            w.in_dim()
        )));
    }
    if ops.iter().any(|op| op.rows.len() != x.nrows()) {
        return Err(Error::InvalidInput("operator size differs from node count".into()));
    }
    Ok(())
}

pub fn layer_forward(w: &LayerWeights, ops: &[SparseOp], x: &Array2<f64>) -> Result<LayerCache> {
    check_shapes(w, ops, x)?;
    let aggregated: Vec<Array2<f64>> = ops.iter().map(|op| op.apply(x)).collect();
    let mut pre = x.dot(&w.w_self);
    for (h, wk) in aggregated.iter().zip(&w.w_ops) {
        pre += &h.dot(wk);
    }
    let out = pre.mapv(|v| v.max(0.0));
    Ok(LayerCache {
        input: x.clone(),
        aggregated,
        pre,
        out,
    })
}

/// Gradients of the layer weights and the layer input given `∂L/∂out`.
pub fn layer_backward(w: &LayerWeights, ops: &[SparseOp], cache: &LayerCache, d_out: &Array2<f64>) -> (LayerWeights, Array2<f64>) {
    let mut d_pre = d_out.clone();
    d_pre.zip_mut_with(&cache.pre, |g, &p| {
        if p <= 0.0 {
            *g = 0.0;
        }
    });
    let grad = LayerWeights {
        w_self: cache.input.t().dot(&d_pre),
        w_ops: cache.aggregated.iter().map(|h| h.t().dot(&d_pre)).collect(),
    };
    let mut d_x = d_pre.dot(&w.w_self.t());
    for (op, wk) in ops.iter().zip(&w.w_ops) {
        d_x += &op.apply_transpose(&d_pre.dot(&wk.t()));
    }
    (grad, d_x)
}

/// Mean-aggregator layer over all neighbors of the view.
pub fn sage_layer(features: &Array2<f64>, view: &GraphView, w: &LayerWeights) -> Result<Array2<f64>> {
    Ok(layer_forward(w, &operators(view, None)?, features)?.out)
}

/// Relation-typed layer; `w.w_ops[k]` belongs to `relations[k]`.
pub fn rgcn_layer(features: &Array2<f64>, view: &GraphView, relations: &[Relation], w: &LayerWeights) -> Result<Array2<f64>> {
    Ok(layer_forward(w, &operators(view, Some(relations))?, features)?.out)
}

/// Mean of each column over rows; empty input yields zeros.
pub fn column_mean(x: &Array2<f64>) -> ndarray::Array1<f64> {
    x.mean_axis(Axis(0)).unwrap_or_else(|| ndarray::Array1::zeros(x.ncols()))
}
