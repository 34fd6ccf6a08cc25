use ndarray::Array2;

use super::MlError;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// `confusion[[truth, pred]]`.
    pub confusion: Array2<u64>,
    pub per_class: Vec<ClassMetrics>,
    pub macro_recall: f64,
    pub macro_precision: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro-averaged recall, precision and F1.
///
/// Precision with no predictions for a class is 0. Macro means run over
/// classes that have test support only; F1 is per class, then averaged.
pub fn evaluate(pred: &[usize], truth: &[usize], class_names: &[String]) -> Result<MetricsReport, MlError> {
    if pred.len() != truth.len() {
        return Err(MlError::Shape(format!(
            "{} predictions for {} labels",
            pred.len(),
            truth.len()
        )));
    }
    let k = class_names.len();
    let mut confusion = Array2::<u64>::zeros((k, k));
    for (&p, &t) in pred.iter().zip(truth) {
        for id in [p, t] {
            if id >= k {
                return Err(MlError::UnknownClass { id, n_classes: k });
            }
        }
        confusion[[t, p]] += 1;
    }
    let per_class: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = confusion[[c, c]];
            let support = confusion.row(c).sum();
            let predicted = confusion.column(c).sum();
            let recall = ratio(tp, support);
            let precision = ratio(tp, predicted);
            let f1 = if recall + precision > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                name: class_names[c].clone(),
                support,
                recall,
                precision,
                f1,
            }
        })
        .collect();
    let present: Vec<&ClassMetrics> = per_class.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| {
        if present.is_empty() {
            0.0
        } else {
            present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64
        }
    };
    let correct: u64 = (0..k).map(|c| confusion[[c, c]]).sum();
    Ok(MetricsReport {
        macro_recall: mean(|c| c.recall),
        macro_precision: mean(|c| c.precision),
        macro_f1: mean(|c| c.f1),
        accuracy: ratio(correct, truth.len() as u64),
        confusion,
        per_class,
    })
}
