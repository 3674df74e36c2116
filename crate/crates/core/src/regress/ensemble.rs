//! Bagged random forest and least-squares gradient boosting.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{fit_tree, Presorted, Tree, TreeParams};
use crate::embed::mix_seed;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    /// Fraction of features tried per split, rounded up.
    pub feature_fraction: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 500,
            min_samples_leaf: 2,
            max_depth: None,
            feature_fraction: 1.0 / 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict_row(row)).sum::<f64>() / self.trees.len() as f64
    }
}

pub(crate) fn check_xy(x: &Array2<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::InvalidInput(format!("{} rows but {} targets", x.nrows(), y.len())));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("design matrix or target contains non-finite values".into()));
    }
    Ok(())
}

fn max_features(p: usize, fraction: f64) -> usize {
    ((p as f64 * fraction).ceil() as usize).clamp(1, p.max(1))
}

/// Trees are fit in parallel; tree `t` draws its bootstrap and feature
/// subsets from a generator seeded by `(seed, t)`.
pub fn fit_random_forest(x: &Array2<f64>, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    check_xy(x, y)?;
    if x.nrows() < 2 {
        return Err(Error::InvalidInput("random forest needs at least 2 rows".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Config("n_trees must be >= 1".into()));
    }
    let data = Presorted::new(x);
    let n = x.nrows();
    let tp = TreeParams {
        max_depth: params.max_depth,
        min_samples_leaf: params.min_samples_leaf,
        max_features: Some(max_features(x.ncols(), params.feature_fraction)),
    };
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, t as u64, 0x5246]));
            let mut w = vec![0.0; n];
            for _ in 0..n {
                w[rng.gen_range(0..n)] += 1.0;
            }
            fit_tree(&data, y, &w, tp, &mut rng)
        })
        .collect();
    Ok(ForestModel {
        params: *params,
        seed,
        trees,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtParams {
    pub lr: f64,
    pub max_depth: usize,
    pub max_rounds: usize,
    pub patience: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbtParams {
    fn default() -> Self {
        Self {
            lr: 0.03,
            max_depth: 6,
            max_rounds: 2000,
            patience: 50,
            min_samples_leaf: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GbtModel {
    pub params: GbtParams,
    pub init: f64,
    /// Trees up to and including the best iteration.
    pub trees: Vec<Tree>,
    /// Number of boosting rounds kept (0 = constant model).
    pub best_iteration: usize,
    /// Validation RMSE after each round; index 0 is the constant model.
    pub val_rmse: Vec<f64>,
    pub train_rmse: Vec<f64>,
}

impl GbtModel {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.predict_row_truncated(row, self.trees.len())
    }

    pub fn predict_row_truncated(&self, row: &[f64], rounds: usize) -> f64 {
        self.init + self.params.lr * self.trees[..rounds].iter().map(|t| t.predict_row(row)).sum::<f64>()
    }
}

fn rmse(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64).sqrt()
}

/// Stagewise boosting on residuals with early stopping: the kept model is
/// the first round attaining the minimum validation RMSE.
pub fn fit_gbt(x: &Array2<f64>, y: &[f64], x_val: &Array2<f64>, y_val: &[f64], params: &GbtParams) -> Result<GbtModel> {
    check_xy(x, y)?;
    check_xy(x_val, y_val)?;
    if !(params.lr > 0.0 && params.lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {}", params.lr)));
    }
    if y.is_empty() || y_val.is_empty() {
        return Err(Error::InvalidInput("boosting needs non-empty train and validation sets".into()));
    }
    if x.ncols() != x_val.ncols() {
        return Err(Error::InvalidInput("train and validation widths differ".into()));
    }
    let data = Presorted::new(x);
    let init = y.iter().sum::<f64>() / y.len() as f64;
    let mut f = vec![init; y.len()];
    let mut fv = vec![init; y_val.len()];
    let ones = vec![1.0; y.len()];
    let tp = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    // Trees do not subsample features, so the generator is never drawn from.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut trees = Vec::new();
    let mut val_rmse = vec![rmse(&fv, y_val)];
    let mut train_rmse = vec![rmse(&f, y)];
    let mut best = 0usize;
    let mut resid = vec![0.0; y.len()];
    for round in 1..=params.max_rounds {
        for i in 0..y.len() {
            resid[i] = y[i] - f[i];
        }
        let tree = fit_tree(&data, &resid, &ones, tp, &mut rng);
        for (i, fi) in f.iter_mut().enumerate() {
            *fi += params.lr * tree.predict_row(&x.row(i).to_vec());
        }
        for (i, fi) in fv.iter_mut().enumerate() {
            *fi += params.lr * tree.predict_row(&x_val.row(i).to_vec());
        }
        trees.push(tree);
        let v = rmse(&fv, y_val);
        val_rmse.push(v);
        train_rmse.push(rmse(&f, y));
        if v < val_rmse[best] {
            best = round;
        } else if round - best >= params.patience {
            break;
        }
    }
    trees.truncate(best);
    Ok(GbtModel {
        params: *params,
        init,
        trees,
        best_iteration: best,
        val_rmse,
        train_rmse,
    })
}
