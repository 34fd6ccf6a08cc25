use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{argmax_smallest, Classifier, LabelledMatrix, MlError};
use crate::testbed::rng_stream;

/// Features considered at each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaxFeatures {
    /// floor(sqrt(p)), at least 1.
    Sqrt,
    All,
    Fixed(usize),
}

impl MaxFeatures {
    fn resolve(self, p: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => ((p as f64).sqrt().floor() as usize).max(1),
            MaxFeatures::All => p,
            MaxFeatures::Fixed(n) => n.clamp(1, p.max(1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    pub bootstrap: bool,
    pub max_features: MaxFeatures,
    pub seed: u64,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_leaf: 1,
            bootstrap: true,
            max_features: MaxFeatures::Sqrt,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf { counts: Vec<u32> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    /// Root is `nodes[0]`.
    pub nodes: Vec<Node>,
    pub seed_stream: u64,
    /// Weighted Gini decrease per feature, before normalization.
    pub gini_decrease: Vec<f64>,
}

impl Tree {
    pub fn leaf_for(&self, row: ArrayView1<f64>) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict_row(&self, row: ArrayView1<f64>) -> usize {
        argmax_smallest(self.leaf_for(row))
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: RfParams,
    pub n_features: usize,
    pub n_classes: usize,
}

fn gini_sum(counts: &[u32], n: u32) -> f64 {
    // n * gini impurity
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    n - sq / n
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    params: &'a RfParams,
    mtry: usize,
    nodes: Vec<Node>,
    decrease: Vec<f64>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_split_on(&self, idx: &mut [usize], f: usize, parent: &[u32], parent_g: f64) -> Option<BestSplit> {
        idx.sort_by(|&a, &b| self.x[[a, f]].total_cmp(&self.x[[b, f]]).then(a.cmp(&b)));
        let n = idx.len();
        let min_leaf = self.params.min_leaf.max(1);
        let mut left = vec![0u32; self.n_classes];
        let mut right = parent.to_vec();
        let mut best: Option<BestSplit> = None;
        for pos in 0..n - 1 {
            let c = self.y[idx[pos]];
            left[c] += 1;
            right[c] -= 1;
            let a = self.x[[idx[pos], f]];
            let b = self.x[[idx[pos + 1], f]];
            let n_left = pos + 1;
            if a == b || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let gain = parent_g - gini_sum(&left, n_left as u32) - gini_sum(&right, (n - n_left) as u32);
            if gain > 1e-12 && best.as_ref().is_none_or(|bs| gain > bs.gain) {
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some(BestSplit {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let counts = self.counts(idx);
        let me = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let n = idx.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || n < 2 * self.params.min_leaf.max(1) {
            return me;
        }
        let parent_g = gini_sum(&counts, n as u32);
        let p = self.x.ncols();
        // Draw features in random order; keep drawing past the first `mtry`
        // only while no valid split has been found.
        let order = sample(rng, p, p).into_vec();
        let mut best: Option<BestSplit> = None;
        for (tried, &f) in order.iter().enumerate() {
            if tried >= self.mtry && best.is_some() {
                break;
            }
            if let Some(s) = self.best_split_on(idx, f, &counts, parent_g) {
                if best.as_ref().is_none_or(|b| s.gain > b.gain) {
                    best = Some(s);
                }
            }
        }
        let Some(best) = best else {
            return me;
        };
        self.decrease[best.feature] += best.gain;
        let x = self.x;
        idx.sort_by(|&a, &b| {
            let la = x[[a, best.feature]] <= best.threshold;
            let lb = x[[b, best.feature]] <= best.threshold;
            lb.cmp(&la).then(a.cmp(&b))
        });
        let split_at = idx.iter().take_while(|&&i| x[[i, best.feature]] <= best.threshold).count();
        let (l, r) = idx.split_at_mut(split_at);
        let left = self.build(l, depth + 1, rng);
        let right = self.build(r, depth + 1, rng);
        self.nodes[me] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        me
    }
}

fn fit_tree(train: &LabelledMatrix, params: &RfParams, stream: u64) -> Tree {
    let mut rng = rng_stream(params.seed, stream);
    let n = train.n_rows();
    let mut idx: Vec<usize> = if params.bootstrap {
        (0..n).map(|_| rng.random_range(0..n)).collect()
    } else {
        (0..n).collect()
    };
    let p = train.features.ncols();
    let mut b = Builder {
        x: train.features.view(),
        y: &train.labels,
        n_classes: train.n_classes(),
        params,
        mtry: params.max_features.resolve(p),
        nodes: Vec::new(),
        decrease: vec![0.0; p],
    };
    b.build(&mut idx, 0, &mut rng);
    Tree {
        nodes: b.nodes,
        seed_stream: stream,
        gini_decrease: b.decrease,
    }
}

/// Fits a random forest with Gini splits. Trees are independent and seeded
/// by index, so the result does not depend on thread scheduling.
pub fn rf_fit(train: &LabelledMatrix, params: &RfParams) -> Result<ForestModel, MlError> {
    if train.n_rows() == 0 {
        return Err(MlError::EmptyTrainingSet);
    }
    if params.n_trees == 0 {
        return Err(MlError::InvalidParam("n_trees must be at least 1".into()));
    }
    if train.features.iter().any(|v| v.is_nan()) {
        return Err(MlError::InvalidParam("training features contain NaN".into()));
    }
    let trees = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| fit_tree(train, params, t))
        .collect();
    Ok(ForestModel {
        trees,
        params: *params,
        n_features: train.features.ncols(),
        n_classes: train.n_classes(),
    })
}

/// Majority vote of per-tree predictions; ties go to the smallest class id.
pub fn rf_predict(model: &ForestModel, x: ArrayView2<f64>) -> Result<Vec<usize>, MlError> {
    if x.ncols() != model.n_features {
        return Err(MlError::Shape(format!(
            "model has {} features, query has {}",
            model.n_features,
            x.ncols()
        )));
    }
    Ok((0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row = x.row(i);
            let mut votes = vec![0u32; model.n_classes];
            for t in &model.trees {
                votes[t.predict_row(row)] += 1;
            }
            argmax_smallest(&votes)
        })
        .collect())
}

/// Mean decrease in Gini impurity per feature, normalized within each tree
/// and then across the forest so the values sum to 1 (or are all 0 when no
/// tree split). Returned in feature order.
pub fn rf_importance_raw(model: &ForestModel) -> Vec<f64> {
    let mut total = vec![0.0; model.n_features];
    for t in &model.trees {
        let s: f64 = t.gini_decrease.iter().sum();
        if s > 0.0 {
            for (acc, d) in total.iter_mut().zip(&t.gini_decrease) {
                *acc += d / s;
            }
        }
    }
    let s: f64 = total.iter().sum();
    if s > 0.0 {
        total.iter_mut().for_each(|v| *v /= s);
    }
    total
}

/// `(feature_name, importance)` sorted by descending importance; ties keep column order.
pub fn rf_importance(model: &ForestModel, feature_names: &[String]) -> Vec<(String, f64)> {
    let mut v: Vec<(String, f64)> = feature_names
        .iter()
        .cloned()
        .zip(rf_importance_raw(model))
        .collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v
}

/// [`Classifier`] adapter for the random forest.
#[derive(Clone, Debug)]
pub struct RandomForest {
    pub params: RfParams,
    model: Option<ForestModel>,
}

impl RandomForest {
    pub fn new(params: RfParams) -> Self {
        Self { params, model: None }
    }

    pub fn model(&self) -> Option<&ForestModel> {
        self.model.as_ref()
    }
}

impl Classifier for RandomForest {
    fn name(&self) -> String {
        "Random Forest".into()
    }

    fn fit(&mut self, train: &LabelledMatrix) -> Result<(), MlError> {
        self.model = Some(rf_fit(train, &self.params)?);
        Ok(())
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, MlError> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| MlError::InvalidParam("predict before fit".into()))?;
        rf_predict(model, x)
    }

    fn importance(&self) -> Option<Vec<f64>> {
        self.model.as_ref().map(rf_importance_raw)
    }
}
