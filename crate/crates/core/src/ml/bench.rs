use std::collections::BTreeSet;
use std::fmt::Write as _;

use super::forest::{RandomForest, RfParams};
use super::knn::Knn;
use super::{evaluate, Classifier, LabelledMatrix, MetricsReport, MlError};
use crate::dataset::{Dataset, DatasetRow};

/// Which label column the benchmark predicts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum LabelTarget {
    #[default]
    App,
    Os,
}

impl LabelTarget {
    fn label(self, r: &DatasetRow) -> &str {
        match self {
            LabelTarget::App => &r.app_label,
            LabelTarget::Os => &r.os_label,
        }
    }
}

impl std::str::FromStr for LabelTarget {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "app" => Ok(Self::App),
            "os" => Ok(Self::Os),
            _ => Err(format!("unknown label target {s:?} (expected app|os)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub target: LabelTarget,
    pub knn_k: usize,
    pub rf: RfParams,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            target: LabelTarget::App,
            knn_k: 1,
            rf: RfParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub name: String,
    pub metrics: MetricsReport,
    /// Per-feature importance in column order, when the model provides it.
    pub importance: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
    /// Classes seen in the test set but never in training.
    pub test_only_classes: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelResult>,
}

fn to_matrix(ds: &Dataset, target: LabelTarget, classes: &[String]) -> Result<LabelledMatrix, MlError> {
    let rows: Vec<&DatasetRow> = ds.rows.iter().filter(|r| r.is_labelled()).collect();
    let labels = rows
        .iter()
        .map(|r| classes.binary_search_by(|c| c.as_str().cmp(target.label(r))).expect("class in union"))
        .collect();
    LabelledMatrix::new(ds.matrix(rows), labels, classes.to_vec(), ds.numerical_columns.clone())
}

/// Trains every model on `train` and scores it on `test`, using labelled rows
/// and numerical features only.
pub fn benchmark(train: &Dataset, test: &Dataset, config: &BenchConfig) -> Result<BenchReport, MlError> {
    let mut models: Vec<Box<dyn Classifier>> = vec![
        Box::new(RandomForest::new(config.rf)),
        Box::new(Knn::new(config.knn_k)),
    ];
    benchmark_with(train, test, config.target, &mut models)
}

pub fn benchmark_with(
    train: &Dataset,
    test: &Dataset,
    target: LabelTarget,
    models: &mut [Box<dyn Classifier>],
) -> Result<BenchReport, MlError> {
    if train.numerical_columns != test.numerical_columns {
        let a: BTreeSet<&String> = train.numerical_columns.iter().collect();
        let b: BTreeSet<&String> = test.numerical_columns.iter().collect();
        let mut diff: Vec<String> = a.symmetric_difference(&b).map(|s| s.to_string()).collect();
        if diff.is_empty() {
            diff.push("(column order differs)".into());
        }
        return Err(MlError::SchemaMismatch(diff));
    }
    let labels = |ds: &Dataset| -> BTreeSet<String> {
        ds.rows
            .iter()
            .filter(|r| r.is_labelled())
            .map(|r| target.label(r).to_string())
            .collect()
    };
    let train_classes = labels(train);
    let test_classes = labels(test);
    if train_classes.is_empty() {
        return Err(MlError::NoRows("training"));
    }
    if test_classes.is_empty() {
        return Err(MlError::NoRows("test"));
    }
    let test_only_classes: Vec<String> = test_classes.difference(&train_classes).cloned().collect();
    let class_names: Vec<String> = train_classes.union(&test_classes).cloned().collect();
    let train_m = to_matrix(train, target, &class_names)?;
    let test_m = to_matrix(test, target, &class_names)?;

    let mut results = Vec::new();
    for m in models.iter_mut() {
        m.fit(&train_m)?;
        let pred = m.predict(test_m.features.view())?;
        results.push(ModelResult {
            name: m.name(),
            metrics: evaluate(&pred, &test_m.labels, &class_names)?,
            importance: m.importance(),
        });
    }
    Ok(BenchReport {
        class_names,
        feature_names: train.numerical_columns.clone(),
        test_only_classes,
        n_train: train_m.n_rows(),
        n_test: test_m.n_rows(),
        models: results,
    })
}

impl BenchReport {
    /// One row per model: Technique, Macro-Recall, Macro-Precision, Macro-F1.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let w = self.models.iter().map(|m| m.name.len()).max().unwrap_or(0).max(9);
        let _ = writeln!(out, "{:<w$}  {:>12}  {:>15}  {:>8}", "Technique", "Macro-Recall", "Macro-Precision", "Macro-F1");
        for m in &self.models {
            let r = &m.metrics;
            let _ = writeln!(
                out,
                "{:<w$}  {:>12.3}  {:>15.3}  {:>8.3}",
                m.name, r.macro_recall, r.macro_precision, r.macro_f1
            );
        }
        out
    }

    /// Per-class recall, precision and F1 for one model, with test support.
    pub fn per_class_table(&self, model: usize) -> String {
        let mut out = String::new();
        let Some(m) = self.models.get(model) else {
            return out;
        };
        let w = self.class_names.iter().map(String::len).max().unwrap_or(0).max(11);
        let _ = writeln!(out, "{:<w$}  {:>7}  {:>9}  {:>6}  {:>7}", "Class", "Recall", "Precision", "F1", "Support");
        for c in &m.metrics.per_class {
            let flag = if self.test_only_classes.contains(&c.name) {
                "  (absent from training)"
            } else if c.support == 0 {
                "  (absent from test)"
            } else {
                ""
            };
            let _ = writeln!(
                out,
                "{:<w$}  {:>7.3}  {:>9.3}  {:>6.3}  {:>7}{flag}",
                c.name, c.recall, c.precision, c.f1, c.support
            );
        }
        out
    }

    /// Features by descending importance for the first model that has them.
    pub fn importance_ranking(&self) -> Vec<(String, f64)> {
        let Some(imp) = self.models.iter().find_map(|m| m.importance.as_ref()) else {
            return Vec::new();
        };
        let mut v: Vec<(String, f64)> = self.feature_names.iter().cloned().zip(imp.iter().copied()).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1));
        v
    }

    pub fn importance_table(&self) -> String {
        let mut out = String::new();
        for (rank, (name, v)) in self.importance_ranking().iter().enumerate() {
            let _ = writeln!(out, "{:>2}  {:<22}  {:.4}", rank + 1, name, v);
        }
        out
    }

    /// Full text report: summary, per-class table for each model, importance.
    pub fn render(&self) -> String {
        let mut out = format!(
            "train rows: {}  test rows: {}  classes: {}\n\n",
            self.n_train,
            self.n_test,
            self.class_names.len()
        );
        if !self.test_only_classes.is_empty() {
            let _ = writeln!(out, "classes absent from training: {}\n", self.test_only_classes.join(", "));
        }
        out.push_str(&self.summary_table());
        for (i, m) in self.models.iter().enumerate() {
            let _ = write!(out, "\n{}\n{}", m.name, self.per_class_table(i));
        }
        let imp = self.importance_table();
        if !imp.is_empty() {
            let _ = write!(out, "\nFeature importance (mean decrease in Gini)\n{imp}");
        }
        out
    }

    /// `model,class,recall,precision,f1,support` rows, with a `macro` row per model.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["model", "class", "recall", "precision", "f1", "support"])
            .expect("in-memory write");
        for m in &self.models {
            let r = &m.metrics;
            let support: u64 = r.per_class.iter().map(|c| c.support).sum();
            w.write_record([
                m.name.clone(),
                "macro".into(),
                r.macro_recall.to_string(),
                r.macro_precision.to_string(),
                r.macro_f1.to_string(),
                support.to_string(),
            ])
            .expect("in-memory write");
            for c in &r.per_class {
                w.write_record([
                    m.name.clone(),
                    c.name.clone(),
                    c.recall.to_string(),
                    c.precision.to_string(),
                    c.f1.to_string(),
                    c.support.to_string(),
                ])
                .expect("in-memory write");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::LabelConfidence;

    fn ds(rows: &[(f64, &str)]) -> Dataset {
        Dataset {
            rows: rows
                .iter()
                .map(|&(x, app)| DatasetRow {
                    numerical: std::array::from_fn(|i| if i == 3 { x } else { 1.0 }),
                    categorical: Default::default(),
                    app_label: app.into(),
                    os_label: "Android".into(),
                    device_id: "d".into(),
                    label_confidence: LabelConfidence::Exact,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn separable_train_equals_test() {
        let d = ds(&[(1.0, "a"), (2.0, "a"), (10.0, "b"), (11.0, "b"), (20.0, "c")]);
        let r = benchmark(&d, &d, &BenchConfig::default()).unwrap();
        for m in &r.models {
            assert_eq!(m.metrics.macro_f1, 1.0, "{}", m.name);
        }
        assert_eq!(r.importance_ranking()[0].0, "local_pkt_len_min");
        assert!(r.render().contains("Macro-F1"));
        assert!(r.to_csv().starts_with("model,class,recall"));
    }

    #[test]
    fn unlabelled_rows_are_skipped_and_test_only_flagged() {
        let train = ds(&[(1.0, "a"), (5.0, "b")]);
        let mut test = ds(&[(1.0, "a"), (9.0, "z"), (3.0, "unknown")]);
        test.rows[2].label_confidence = LabelConfidence::Unlabelled;
        let r = benchmark(&train, &test, &BenchConfig::default()).unwrap();
        assert_eq!(r.n_test, 2);
        assert_eq!(r.test_only_classes, vec!["z".to_string()]);
        assert!(r.render().contains("absent from training"));
    }

    #[test]
    fn schema_mismatch_names_columns() {
        let train = ds(&[(1.0, "a")]);
        let mut test = train.clone();
        test.numerical_columns[0] = "dur".into();
        match benchmark(&train, &test, &BenchConfig::default()) {
            Err(MlError::SchemaMismatch(cols)) => assert_eq!(cols, vec!["dur".to_string(), "duration_s".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
