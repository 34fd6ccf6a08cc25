use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use super::{argmax_smallest, Classifier, LabelledMatrix, MlError, Standardizer};

/// Brute-force k-nearest-neighbour model over standardized features.
#[derive(Clone, Debug, PartialEq)]
pub struct KnnModel {
    pub k: usize,
    pub scaler: Standardizer,
    pub train: Array2<f64>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

pub fn knn_fit(train: &LabelledMatrix, k: usize) -> Result<KnnModel, MlError> {
    if train.n_rows() == 0 {
        return Err(MlError::EmptyTrainingSet);
    }
    if k == 0 || k > train.n_rows() {
        return Err(MlError::InvalidParam(format!(
            "k = {k} must lie in 1..={}",
            train.n_rows()
        )));
    }
    let scaler = Standardizer::fit(train.features.view());
    Ok(KnnModel {
        k,
        train: scaler.transform(train.features.view()),
        scaler,
        labels: train.labels.clone(),
        n_classes: train.n_classes(),
    })
}

/// Majority label among the `k` nearest training rows (Euclidean, standardized).
/// Equal distances resolve to the earlier training row; vote ties to the smallest class id.
pub fn knn_predict(model: &KnnModel, x: ArrayView2<f64>) -> Result<Vec<usize>, MlError> {
    if x.ncols() != model.train.ncols() {
        return Err(MlError::Shape(format!(
            "model has {} features, query has {}",
            model.train.ncols(),
            x.ncols()
        )));
    }
    let q = model.scaler.transform(x);
    Ok((0..q.nrows())
        .into_par_iter()
        .map(|i| {
            let row = q.row(i);
            let mut d: Vec<(f64, usize)> = model
                .train
                .outer_iter()
                .enumerate()
                .map(|(i, t)| {
                    let s: f64 = t.iter().zip(row.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
                    (s, i)
                })
                .collect();
            let k = model.k;
            if k < d.len() {
                d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            }
            let mut votes = vec![0u32; model.n_classes];
            for &(_, i) in &d[..k] {
                votes[model.labels[i]] += 1;
            }
            argmax_smallest(&votes)
        })
        .collect())
}

/// [`Classifier`] adapter for KNN.
#[derive(Clone, Debug)]
pub struct Knn {
    pub k: usize,
    model: Option<KnnModel>,
}

impl Knn {
    pub fn new(k: usize) -> Self {
        Self { k, model: None }
    }
}

impl Classifier for Knn {
    fn name(&self) -> String {
        format!("KNN (k = {})", self.k)
    }

    fn fit(&mut self, train: &LabelledMatrix) -> Result<(), MlError> {
        self.model = Some(knn_fit(train, self.k)?);
        Ok(())
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, MlError> {
        let model = self
            .model
            .as_ref()
            .ok_or_else(|| MlError::InvalidParam("predict before fit".into()))?;
        knn_predict(model, x)
    }
}
