//! Bagged CART regression trees with variance-reduction splits.

use std::time::Instant;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{score_parts, Matrix, PreparedData, Preprocessor, Target, TrainReport};
use crate::error::{Error, Result};

/// Rows with GPP below this value get the low-GPP sample weight.
pub const LOW_GPP_LIMIT: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub trees: usize,
    /// `None` grows trees until leaves are pure or minimal.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    /// Bootstrap weight of rows with GPP below [`LOW_GPP_LIMIT`] (others weigh 1).
    pub low_gpp_weight: Option<f64>,
    pub seed: u64,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            low_gpp_weight: None,
            seed: 0,
        }
    }
}

impl ForestHyper {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::Argument("max_depth must be at least 1".into()));
        }
        if self.trees == 0 || self.min_leaf == 0 {
            return Err(Error::Argument("tree count and min_leaf must be at least 1".into()));
        }
        if let Some(w) = self.low_gpp_weight {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Argument(format!("sample weight must be positive, got {w}")));
            }
        }
        Ok(())
    }
}

/// One tree in columnar form. `feature[k] < 0` marks a leaf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub feature: Vec<i32>,
    pub threshold: Vec<f64>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    /// `n_nodes × n_outputs`; meaningful on leaves.
    pub value: Vec<f64>,
}

impl Tree {
    fn n_nodes(&self) -> usize {
        self.feature.len()
    }

    pub fn predict_into(&self, x: &[f64], n_out: usize, acc: &mut [f64]) {
        let mut k = 0;
        while self.feature[k] >= 0 {
            k = if x[self.feature[k] as usize] <= self.threshold[k] {
                self.left[k]
            } else {
                self.right[k]
            } as usize;
        }
        for (a, v) in acc.iter_mut().zip(&self.value[k * n_out..(k + 1) * n_out]) {
            *a += v;
        }
    }

    fn validate(&self, n_features: usize, n_out: usize) -> Result<()> {
        let n = self.n_nodes();
        let ok = n > 0
            && self.threshold.len() == n
            && self.left.len() == n
            && self.right.len() == n
            && self.value.len() == n * n_out
            && (0..n).all(|k| {
                self.feature[k] < 0
                    || ((self.feature[k] as usize) < n_features
                        && (self.left[k] as usize) < n
                        && (self.right[k] as usize) < n
                        && self.left[k] as usize > k
                        && self.right[k] as usize > k)
            });
        if ok {
            Ok(())
        } else {
            Err(Error::ModelLoad("malformed tree".into()))
        }
    }
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a Matrix,
    hyper: &'a ForestHyper,
    tree: Tree,
}

struct Split {
    feature: usize,
    threshold: f64,
    /// Number of samples going left after sorting on `feature`.
    n_left: usize,
}

impl Builder<'_> {
    fn push_node(&mut self) -> usize {
        let t = &mut self.tree;
        t.feature.push(-1);
        t.threshold.push(0.0);
        t.left.push(0);
        t.right.push(0);
        t.value.extend(std::iter::repeat_n(0.0, self.y.cols));
        t.feature.len() - 1
    }

    fn set_leaf(&mut self, node: usize, idx: &[usize]) {
        let m = self.y.cols;
        let v = &mut self.tree.value[node * m..(node + 1) * m];
        for &i in idx {
            for (a, b) in v.iter_mut().zip(self.y.row(i)) {
                *a += b;
            }
        }
        v.iter_mut().for_each(|a| *a /= idx.len() as f64);
    }

    fn best_split(&self, idx: &mut [usize]) -> Option<Split> {
        let m = self.y.cols;
        let n = idx.len();
        let min_leaf = self.hyper.min_leaf;
        let mut total = vec![0.0; m];
        for &i in idx.iter() {
            for (t, v) in total.iter_mut().zip(self.y.row(i)) {
                *t += v;
            }
        }
        let parent: f64 = total.iter().map(|s| s * s).sum::<f64>() / n as f64;
        let mut best: Option<(f64, Split)> = None;
        let mut left = vec![0.0; m];
        for f in 0..self.x.cols {
            idx.sort_unstable_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]).then(a.cmp(&b)));
            left.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..n - 1 {
                for (l, v) in left.iter_mut().zip(self.y.row(idx[k])) {
                    *l += v;
                }
                let nl = k + 1;
                let (xa, xb) = (self.x.row(idx[k])[f], self.x.row(idx[k + 1])[f]);
                if nl < min_leaf || n - nl < min_leaf || xa >= xb {
                    continue;
                }
                let nr = (n - nl) as f64;
                let score: f64 = left
                    .iter()
                    .zip(&total)
                    .map(|(l, t)| l * l / nl as f64 + (t - l) * (t - l) / nr)
                    .sum::<f64>();
                let gain = score - parent;
                if gain > 1e-12 * parent.abs().max(1.0) && best.as_ref().is_none_or(|(g, _)| gain > *g) {
                    best = Some((
                        gain,
                        Split {
                            feature: f,
                            threshold: 0.5 * (xa + xb),
                            n_left: nl,
                        },
                    ));
                }
            }
        }
        best.map(|(_, s)| s)
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let node = self.push_node();
        let depth_ok = self.hyper.max_depth.is_none_or(|d| depth < d);
        let split = if depth_ok && idx.len() >= 2 * self.hyper.min_leaf {
            self.best_split(idx)
        } else {
            None
        };
        match split {
            None => self.set_leaf(node, idx),
            Some(s) => {
                let f = s.feature;
                idx.sort_unstable_by(|&a, &b| self.x.row(a)[f].total_cmp(&self.x.row(b)[f]).then(a.cmp(&b)));
                let (l, r) = idx.split_at_mut(s.n_left);
                let left = self.build(l, depth + 1);
                let right = self.build(r, depth + 1);
                let t = &mut self.tree;
                t.feature[node] = f as i32;
                t.threshold[node] = s.threshold;
                t.left[node] = left as u32;
                t.right[node] = right as u32;
            }
        }
        node
    }
}

fn grow_tree(x: &Matrix, y: &Matrix, weights: Option<&WeightedIndex<f64>>, hyper: &ForestHyper, seed: u64) -> Tree {
    let n = x.rows;
    let mut idx: Vec<usize> = if hyper.bootstrap {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match weights {
            Some(w) => (0..n).map(|_| w.sample(&mut rng)).collect(),
            None => (0..n).map(|_| rng.random_range(0..n)).collect(),
        }
    } else {
        (0..n).collect()
    };
    let mut b = Builder {
        x,
        y,
        hyper,
        tree: Tree {
            feature: Vec::new(),
            threshold: Vec::new(),
            left: Vec::new(),
            right: Vec::new(),
            value: Vec::new(),
        },
    };
    b.build(&mut idx, 0);
    b.tree
}

/// Grow the ensemble. `weights` sets each row's bootstrap probability.
pub fn forest_train(x: &Matrix, y: &Matrix, weights: Option<&[f64]>, hyper: &ForestHyper) -> Result<Vec<Tree>> {
    hyper.validate()?;
    if x.rows == 0 || x.rows != y.rows {
        return Err(Error::Argument("training data is empty or misaligned".into()));
    }
    let dist = match weights {
        Some(w) if w.len() != x.rows => {
            return Err(Error::Shape {
                expected: x.rows,
                got: w.len(),
            })
        }
        Some(w) => Some(WeightedIndex::new(w).map_err(|e| Error::Argument(format!("sample weights: {e}")))?),
        None => None,
    };
    Ok((0..hyper.trees)
        .into_par_iter()
        .map(|t| {
            let seed = hyper.seed ^ (t as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            grow_tree(x, y, dist.as_ref(), hyper, seed)
        })
        .collect())
}

/// Mean over trees for already scaled features.
pub fn forest_predict(trees: &[Tree], x: &Matrix, n_out: usize) -> Matrix {
    let mut out = Matrix::zeros(x.rows, n_out);
    out.data
        .par_chunks_mut(n_out.max(1))
        .enumerate()
        .for_each(|(i, acc)| {
            for t in trees {
                t.predict_into(x.row(i), n_out, acc);
            }
            acc.iter_mut().for_each(|a| *a /= trees.len() as f64);
        });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub preprocessor: Preprocessor,
    pub hyper: ForestHyper,
    pub trees: Vec<Tree>,
}

impl ForestModel {
    pub fn predict_scaled(&self, x: &Matrix) -> Matrix {
        forest_predict(&self.trees, x, self.preprocessor.targets.len())
    }

    pub fn predict(&self, features: &Matrix) -> Result<Matrix> {
        let x = self.preprocessor.transform(features)?;
        Ok(self.preprocessor.finish(self.predict_scaled(&x)))
    }

    pub(crate) fn validate(&self, n_features: usize, n_out: usize) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::ModelLoad("forest has no trees".into()));
        }
        self.trees.iter().try_for_each(|t| t.validate(n_features, n_out))
    }
}

/// Train on a prepared corpus and score both parts.
pub fn fit_forest(data: &PreparedData, hyper: &ForestHyper) -> Result<(ForestModel, TrainReport)> {
    let start = Instant::now();
    let p = &data.preprocessor;
    let weights = match hyper.low_gpp_weight {
        None => None,
        Some(w) => {
            let j = p.targets.iter().position(|&t| t == Target::Gpp).ok_or_else(|| {
                Error::Argument("low-GPP sample weights need gpp among the targets".into())
            })?;
            Some(
                data.y_train
                    .column(j)
                    .iter()
                    .map(|&g| if g < LOW_GPP_LIMIT { w } else { 1.0 })
                    .collect::<Vec<f64>>(),
            )
        }
    };
    let trees = forest_train(&data.x_train, &data.y_train, weights.as_deref(), hyper)?;
    let model = ForestModel {
        preprocessor: p.clone(),
        hyper: hyper.clone(),
        trees,
    };
    let pred_train = p.finish(model.predict_scaled(&data.x_train));
    let pred_test = p.finish(model.predict_scaled(&data.x_test));
    let scores = score_parts(&p.targets, &pred_train, &data.y_train, &pred_test, &data.y_test);
    let report = TrainReport {
        n_train: data.x_train.rows,
        n_test: data.x_test.rows,
        seed: hyper.seed,
        epochs_run: 0,
        best_epoch: 0,
        train_loss: Vec::new(),
        test_loss: Vec::new(),
        scores,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, seed: u64) -> (Matrix, Matrix) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
        let ys: Vec<Vec<f64>> = xs
            .iter()
            .map(|x| vec![(6.0 * x[0]).sin() + x[1], x[0] * x[1]])
            .collect();
        (Matrix::from_rows(&xs).unwrap(), Matrix::from_rows(&ys).unwrap())
    }

    #[test]
    fn single_tree_memorizes() {
        let (x, y) = data(300, 1);
        let hyper = ForestHyper {
            trees: 1,
            bootstrap: false,
            ..ForestHyper::default()
        };
        let trees = forest_train(&x, &y, None, &hyper).unwrap();
        assert_eq!(forest_predict(&trees, &x, 2), y);
    }

    #[test]
    fn constant_targets() {
        let (x, _) = data(100, 2);
        let y = Matrix::from_rows(&vec![vec![3.5]; 100]).unwrap();
        let trees = forest_train(&x, &y, None, &ForestHyper { trees: 5, ..Default::default() }).unwrap();
        let (xt, _) = data(20, 3);
        assert!(forest_predict(&trees, &xt, 1).data.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn zero_depth_is_rejected() {
        let (x, y) = data(10, 1);
        let hyper = ForestHyper {
            max_depth: Some(0),
            ..ForestHyper::default()
        };
        assert!(matches!(forest_train(&x, &y, None, &hyper), Err(Error::Argument(_))));
    }

    #[test]
    fn depth_and_leaf_limits() {
        let (x, y) = data(200, 4);
        let hyper = ForestHyper {
            trees: 1,
            max_depth: Some(2),
            bootstrap: false,
            ..ForestHyper::default()
        };
        let t = &forest_train(&x, &y, None, &hyper).unwrap()[0];
        assert!(t.n_nodes() <= 7);
        let hyper = ForestHyper {
            trees: 1,
            min_leaf: 50,
            bootstrap: false,
            ..ForestHyper::default()
        };
        let t = &forest_train(&x, &y, None, &hyper).unwrap()[0];
        assert!(t.feature.iter().filter(|&&f| f < 0).count() <= 4);
    }

    #[test]
    fn seeded_and_thread_independent() {
        let (x, y) = data(200, 5);
        let hyper = ForestHyper {
            trees: 8,
            seed: 3,
            ..ForestHyper::default()
        };
        let a = forest_train(&x, &y, None, &hyper).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| forest_train(&x, &y, None, &hyper).unwrap());
        assert_eq!(a, b);
    }

    #[test]
    fn weights_shift_the_bootstrap() {
        let (x, y) = data(100, 6);
        let mut w = vec![1e-9; 100];
        w[7] = 1.0;
        let hyper = ForestHyper {
            trees: 3,
            ..ForestHyper::default()
        };
        let trees = forest_train(&x, &y, Some(&w), &hyper).unwrap();
        let p = forest_predict(&trees, &x, 2);
        for i in 0..100 {
            for (a, b) in p.row(i).iter().zip(y.row(7)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        assert!(forest_train(&x, &y, Some(&w[..5]), &hyper).is_err());
    }
}
