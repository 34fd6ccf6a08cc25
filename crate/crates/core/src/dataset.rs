//! Labelled-flow datasets as CSV: 36 feature columns followed by
//! `app_label`, `os_label`, `device_id` and `label_confidence`.
//!
//! Numerical cells use the shortest decimal form that parses back to the same
//! `f64`, so export followed by import is lossless.

use std::collections::{BTreeMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use ndarray::Array2;

use crate::features::{CATEGORICAL_NAMES, NUMERICAL_NAMES, N_CATEGORICAL, N_NUMERICAL};
use crate::label::{LabelConfidence, LabelledFlow, UNKNOWN_APP};

pub const LABEL_COLUMNS: [&str; 4] = ["app_label", "os_label", "device_id", "label_confidence"];

/// Best-effort column aliases for Tranalyzer-style flow exports.
pub const TRANALYZER_ALIASES_CSV: &str = include_str!("../data/tranalyzer_aliases.csv");

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error in {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: missing numerical columns: {}", .missing.join(", "))]
    MissingColumns { path: String, missing: Vec<String> },
    #[error("{path}: missing label column app_label")]
    MissingLabel { path: String },
    #[error("{path}: duplicate column {column:?}")]
    DuplicateColumn { path: String, column: String },
    #[error("{path}: row {row}, column {column}: {value:?} is not a finite number")]
    BadNumber {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("{path}: row {row}: bad label_confidence {value:?}")]
    BadConfidence { path: String, row: usize, value: String },
    #[error("alias table: {0}")]
    Alias(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetRow {
    pub numerical: [f64; N_NUMERICAL],
    /// Empty strings where the source file had no such column.
    pub categorical: [String; N_CATEGORICAL],
    pub app_label: String,
    pub os_label: String,
    pub device_id: String,
    pub label_confidence: LabelConfidence,
}

impl DatasetRow {
    pub fn is_labelled(&self) -> bool {
        self.label_confidence != LabelConfidence::Unlabelled && self.app_label != UNKNOWN_APP
    }
}

impl From<&LabelledFlow> for DatasetRow {
    fn from(f: &LabelledFlow) -> Self {
        DatasetRow {
            numerical: f.features.numerical,
            categorical: f.features.categorical.clone(),
            app_label: f.app_label.clone(),
            os_label: f.os_label.to_string(),
            device_id: f.device_id.clone(),
            label_confidence: f.label_confidence,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    /// Numerical column names in matrix order.
    pub numerical_columns: Vec<String>,
    pub rows: Vec<DatasetRow>,
}

impl Default for Dataset {
    fn default() -> Self {
        Self {
            numerical_columns: NUMERICAL_NAMES.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }
}

impl Dataset {
    pub fn from_labelled(flows: &[LabelledFlow]) -> Self {
        Self {
            rows: flows.iter().map(DatasetRow::from).collect(),
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Numerical features of the given rows as an `n x 20` matrix.
    pub fn matrix<'a>(&self, rows: impl IntoIterator<Item = &'a DatasetRow>) -> Array2<f64> {
        let flat: Vec<f64> = rows.into_iter().flat_map(|r| r.numerical).collect();
        Array2::from_shape_vec((flat.len() / N_NUMERICAL, N_NUMERICAL), flat).expect("rows are 20 wide")
    }
}

pub fn header() -> Vec<&'static str> {
    NUMERICAL_NAMES
        .iter()
        .chain(CATEGORICAL_NAMES.iter())
        .chain(LABEL_COLUMNS.iter())
        .copied()
        .collect()
}

pub fn write_dataset<W: Write>(ds: &Dataset, w: W) -> Result<W, csv::Error> {
    let mut w = csv::Writer::from_writer(w);
    w.write_record(header())?;
    let mut rec: Vec<String> = Vec::with_capacity(40);
    for r in &ds.rows {
        rec.clear();
        rec.extend(r.numerical.iter().map(|v| v.to_string()));
        rec.extend(r.categorical.iter().cloned());
        rec.push(r.app_label.clone());
        rec.push(r.os_label.clone());
        rec.push(r.device_id.clone());
        rec.push(r.label_confidence.as_str().to_string());
        w.write_record(&rec)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

pub fn export_csv(flows: &[LabelledFlow], path: impl AsRef<Path>) -> Result<(), DatasetError> {
    export_dataset(&Dataset::from_labelled(flows), path)
}

pub fn export_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let file = std::fs::File::create(path).map_err(|source| DatasetError::Io { path: p.clone(), source })?;
    let mut w = write_dataset(ds, std::io::BufWriter::new(file)).map_err(|source| DatasetError::Csv { path: p.clone(), source })?;
    w.flush().map_err(|source| DatasetError::Io { path: p, source })
}

/// Column renames applied on import, `alias -> canonical`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AliasTable(pub BTreeMap<String, String>);

impl AliasTable {
    /// Reads a two-column CSV with header `alias,canonical`.
    pub fn from_csv<R: Read>(r: R) -> Result<Self, DatasetError> {
        let mut rd = csv::Reader::from_reader(r);
        let mut map = BTreeMap::new();
        for rec in rd.records() {
            let rec = rec.map_err(|e| DatasetError::Alias(e.to_string()))?;
            if rec.len() != 2 {
                return Err(DatasetError::Alias(format!("expected 2 fields, got {}", rec.len())));
            }
            if map.insert(rec[0].trim().to_string(), rec[1].trim().to_string()).is_some() {
                return Err(DatasetError::Alias(format!("duplicate alias {:?}", &rec[0])));
            }
        }
        Ok(Self(map))
    }

    pub fn tranalyzer() -> Self {
        Self::from_csv(TRANALYZER_ALIASES_CSV.as_bytes()).expect("bundled alias table parses")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_csv(f)
    }

    fn canonical<'a>(&'a self, name: &'a str) -> &'a str {
        self.0.get(name).map(String::as_str).unwrap_or(name)
    }
}

/// Reads a dataset, renaming columns through `aliases` first.
///
/// All 20 numerical columns and `app_label` are required. `os_label` and
/// `device_id` default to empty, `label_confidence` to `exact`, categorical
/// columns to empty. Unknown columns are ignored with a warning.
pub fn read_dataset<R: Read>(r: R, aliases: Option<&AliasTable>, source: &str) -> Result<Dataset, DatasetError> {
    let csv_err = |e: csv::Error| DatasetError::Csv {
        path: source.to_string(),
        source: e,
    };
    let mut rd = csv::ReaderBuilder::new().flexible(false).from_reader(r);
    let raw = rd.headers().map_err(csv_err)?.clone();
    let default_aliases = AliasTable::default();
    let aliases = aliases.unwrap_or(&default_aliases);
    let names: Vec<&str> = raw.iter().map(|h| aliases.canonical(h.trim())).collect();

    let mut seen = HashSet::new();
    for n in &names {
        if !seen.insert(*n) {
            return Err(DatasetError::DuplicateColumn {
                path: source.to_string(),
                column: n.to_string(),
            });
        }
    }
    let pos = |name: &str| names.iter().position(|n| *n == name);
    let num_idx: Vec<Option<usize>> = NUMERICAL_NAMES.iter().map(|n| pos(n)).collect();
    let missing: Vec<String> = NUMERICAL_NAMES
        .iter()
        .zip(&num_idx)
        .filter(|(_, i)| i.is_none())
        .map(|(n, _)| n.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(DatasetError::MissingColumns {
            path: source.to_string(),
            missing,
        });
    }
    let Some(app_idx) = pos("app_label") else {
        return Err(DatasetError::MissingLabel { path: source.to_string() });
    };
    let cat_idx: Vec<Option<usize>> = CATEGORICAL_NAMES.iter().map(|n| pos(n)).collect();
    let os_idx = pos("os_label");
    let dev_idx = pos("device_id");
    let conf_idx = pos("label_confidence");
    let known: HashSet<&str> = header().into_iter().collect();
    let extra: Vec<&str> = names.iter().copied().filter(|n| !known.contains(n)).collect();
    if !extra.is_empty() {
        warn!("{source}: ignoring {} unknown columns: {}", extra.len(), extra.join(", "));
    }

    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        // 1-based data row number, header excluded
        let row = i + 1;
        let mut numerical = [0.0; N_NUMERICAL];
        for (j, idx) in num_idx.iter().enumerate() {
            let cell = rec[idx.expect("checked")].trim();
            numerical[j] = cell
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| DatasetError::BadNumber {
                    path: source.to_string(),
                    row,
                    column: NUMERICAL_NAMES[j].to_string(),
                    value: cell.to_string(),
                })?;
        }
        let categorical: [String; N_CATEGORICAL] =
            std::array::from_fn(|j| cat_idx[j].map(|c| rec[c].to_string()).unwrap_or_default());
        let label_confidence = match conf_idx {
            None => LabelConfidence::Exact,
            Some(c) => rec[c].parse().map_err(|_| DatasetError::BadConfidence {
                path: source.to_string(),
                row,
                value: rec[c].to_string(),
            })?,
        };
        rows.push(DatasetRow {
            numerical,
            categorical,
            app_label: rec[app_idx].to_string(),
            os_label: os_idx.map(|c| rec[c].to_string()).unwrap_or_default(),
            device_id: dev_idx.map(|c| rec[c].to_string()).unwrap_or_default(),
            label_confidence,
        });
    }
    Ok(Dataset {
        numerical_columns: NUMERICAL_NAMES.iter().map(|s| s.to_string()).collect(),
        rows,
    })
}

pub fn import_csv(path: impl AsRef<Path>, aliases: Option<&AliasTable>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let p = path.display().to_string();
    let f = std::fs::File::open(path).map_err(|source| DatasetError::Io { path: p.clone(), source })?;
    read_dataset(std::io::BufReader::new(f), aliases, &p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(app: &str, x: f64) -> DatasetRow {
        DatasetRow {
            numerical: std::array::from_fn(|i| x * (i as f64 + 1.0) / 3.0),
            categorical: std::array::from_fn(|i| format!("c,{i}")),
            app_label: app.into(),
            os_label: "Android".into(),
            device_id: "moto-g4".into(),
            label_confidence: LabelConfidence::NearestInTime,
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let out = write_dataset(&Dataset::default(), Vec::new()).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 1);
        assert_eq!(text.trim_end().split(',').count(), 40);
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = Dataset {
            rows: vec![row("Spotify", 0.1), row("WhatsApp", 1e-7), row("YouTube", 123456.789)],
            ..Default::default()
        };
        let bytes = write_dataset(&ds, Vec::new()).unwrap();
        assert_eq!(String::from_utf8_lossy(&bytes).lines().count(), 4);
        let back = read_dataset(bytes.as_slice(), None, "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn missing_duration_is_named() {
        let hdr: Vec<&str> = header().into_iter().filter(|h| *h != "duration_s").collect();
        let text = hdr.join(",") + "\n";
        match read_dataset(text.as_bytes(), None, "x.csv") {
            Err(DatasetError::MissingColumns { missing, .. }) => assert_eq!(missing, vec!["duration_s"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let mut text = NUMERICAL_NAMES.join(",") + ",app_label\n";
        text += &(vec!["1"; 20].join(",") + ",a\n");
        let mut cells = vec!["1"; 20];
        cells[7] = "abc";
        text += &(cells.join(",") + ",b\n");
        match read_dataset(text.as_bytes(), None, "x.csv") {
            Err(DatasetError::BadNumber { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "local_iat_mean_s");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn minimal_file_gets_defaults_and_aliases_apply() {
        let mut names: Vec<String> = NUMERICAL_NAMES.iter().map(|s| s.to_string()).collect();
        names[0] = "dur".into();
        let text = names.join(",") + ",application,extra\n" + &vec!["2"; 20].join(",") + ",Chrome,z\n";
        let aliases = AliasTable::from_csv("alias,canonical\ndur,duration_s\napplication,app_label\n".as_bytes()).unwrap();
        let ds = read_dataset(text.as_bytes(), Some(&aliases), "x.csv").unwrap();
        assert_eq!(ds.rows.len(), 1);
        assert_eq!(ds.rows[0].app_label, "Chrome");
        assert_eq!(ds.rows[0].numerical[0], 2.0);
        assert_eq!(ds.rows[0].label_confidence, LabelConfidence::Exact);
        assert!(ds.rows[0].categorical.iter().all(String::is_empty));
    }

    #[test]
    fn non_finite_rejected() {
        let text = NUMERICAL_NAMES.join(",") + ",app_label\n" + &vec!["NaN"; 20].join(",") + ",a\n";
        assert!(matches!(
            read_dataset(text.as_bytes(), None, "x.csv"),
            Err(DatasetError::BadNumber { row: 1, .. })
        ));
    }

    #[test]
    fn bundled_aliases_parse() {
        let t = AliasTable::tranalyzer();
        assert!(t.0.values().all(|c| header().contains(&c.as_str())));
    }
}
