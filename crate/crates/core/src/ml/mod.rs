//! Flow classifiers (k-nearest neighbours, random forest), macro-averaged
//! metrics and the train/test benchmark.

mod bench;
mod forest;
mod knn;
mod metrics;

use ndarray::{Array1, Array2, ArrayView2, Axis};

pub use bench::{benchmark, benchmark_with, BenchConfig, BenchReport, LabelTarget, ModelResult};
pub use forest::{rf_fit, rf_importance, rf_importance_raw, rf_predict, ForestModel, MaxFeatures, Node, RandomForest, RfParams, Tree};
pub use knn::{knn_fit, knn_predict, Knn, KnnModel};
pub use metrics::{evaluate, ClassMetrics, MetricsReport};

#[derive(Debug, thiserror::Error)]
pub enum MlError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("invalid parameter: {0}")]
    InvalidParam(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("class id {id} out of range for {n_classes} classes")]
    UnknownClass { id: usize, n_classes: usize },
    #[error("feature schema mismatch; divergent columns: {}", .0.join(", "))]
    SchemaMismatch(Vec<String>),
    #[error("no labelled rows in the {0} set")]
    NoRows(&'static str),
}

/// Numerical features with dense class ids `0..K`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledMatrix {
    pub features: Array2<f64>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl LabelledMatrix {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<usize>,
        class_names: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self, MlError> {
        if features.nrows() != labels.len() {
            return Err(MlError::Shape(format!(
                "{} rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(MlError::Shape(format!(
                "{} columns but {} feature names",
                features.ncols(),
                feature_names.len()
            )));
        }
        if let Some(&id) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(MlError::UnknownClass {
                id,
                n_classes: class_names.len(),
            });
        }
        Ok(Self {
            features,
            labels,
            class_names,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }
}

/// Per-column z-score fitted on training data. Zero-variance columns keep scale 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Array1<f64>,
    pub scale: Array1<f64>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean = x.sum_axis(Axis(0)) / n;
        let mut scale = Array1::zeros(x.ncols());
        for (j, col) in x.axis_iter(Axis(1)).enumerate() {
            let var = col.iter().map(|v| (v - mean[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            scale[j] = if sd > 0.0 && sd.is_finite() { sd } else { 1.0 };
        }
        Self { mean, scale }
    }

    pub fn transform(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.scale
    }
}

/// Common interface so further models can join the benchmark.
pub trait Classifier: Send + Sync {
    fn name(&self) -> String;
    fn fit(&mut self, train: &LabelledMatrix) -> Result<(), MlError>;
    fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<usize>, MlError>;
    /// Per-feature importance in the training column order, if the model has one.
    fn importance(&self) -> Option<Vec<f64>> {
        None
    }
}

/// Smallest index of the largest count.
pub(crate) fn argmax_smallest(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}
