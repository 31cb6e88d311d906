use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind, FeatureSpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sidecar schema: `{"column": {"kind": "numeric" | "categorical"}, ...}`.
///
/// Columns not listed are numeric.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CsvSchema(pub BTreeMap<String, ColumnDecl>);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnDecl {
    pub kind: FeatureKind,
}

impl CsvSchema {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_reader(file)?)
    }

    fn kind_of(&self, column: &str) -> FeatureKind {
        self.0.get(column).map_or(FeatureKind::Numeric, |d| d.kind)
    }
}

pub fn load_csv<T: Scalar>(
    path: impl AsRef<Path>,
    target_column: &str,
    schema: Option<&CsvSchema>,
) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    read_csv(file, target_column, schema)
}

/// Parses a headed CSV. Feature ranges are observed from the data; categorical
/// levels are coded by their sorted order.
pub fn read_csv<T: Scalar, R: Read>(
    reader: R,
    target_column: &str,
    schema: Option<&CsvSchema>,
) -> Result<Dataset<T>> {
    let default_schema = CsvSchema::default();
    let schema = schema.unwrap_or(&default_schema);
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(Error::EmptyDataset);
    }
    let target_idx = headers
        .iter()
        .position(|h| h == target_column)
        .ok_or_else(|| Error::MissingColumn(target_column.to_string()))?;
    for declared in schema.0.keys() {
        if !headers.contains(declared) {
            return Err(Error::MissingColumn(declared.clone()));
        }
    }
    if schema.kind_of(target_column) == FeatureKind::Categorical {
        return Err(Error::InvalidConfig(format!(
            "target column `{target_column}` cannot be categorical"
        )));
    }

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        records.push((line, rec));
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let feature_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != target_idx).collect();
    let mut specs = Vec::with_capacity(feature_cols.len());
    let mut level_maps: Vec<Option<BTreeMap<String, usize>>> = Vec::with_capacity(feature_cols.len());
    for &c in &feature_cols {
        let name = &headers[c];
        match schema.kind_of(name) {
            FeatureKind::Numeric => {
                specs.push(FeatureSpec::numeric(name.clone(), T::zero(), T::zero()));
                level_maps.push(None);
            }
            FeatureKind::Categorical => {
                let levels: BTreeSet<&str> = records.iter().map(|(_, r)| &r[c]).collect();
                let levels: Vec<String> = levels.into_iter().map(str::to_string).collect();
                let map = levels.iter().enumerate().map(|(i, l)| (l.clone(), i)).collect();
                specs.push(FeatureSpec::categorical(name.clone(), levels));
                level_maps.push(Some(map));
            }
        }
    }

    let parse = |line: usize, col: usize, cell: &str| -> Result<T> {
        let v: f64 = cell.parse().map_err(|_| Error::ParseCell {
            row: line,
            column: headers[col].clone(),
            value: cell.to_string(),
        })?;
        if !v.is_finite() {
            return Err(Error::ParseCell {
                row: line,
                column: headers[col].clone(),
                value: cell.to_string(),
            });
        }
        Ok(T::lit(v))
    };

    let n = feature_cols.len();
    let mut features = Array2::<T>::zeros((records.len(), n));
    let mut targets = Array1::<T>::zeros(records.len());
    for (j, (line, rec)) in records.iter().enumerate() {
        for (f, &c) in feature_cols.iter().enumerate() {
            features[[j, f]] = match &level_maps[f] {
                Some(map) => T::from_usize_lossy(map[&rec[c]]),
                None => parse(*line, c, &rec[c])?,
            };
        }
        targets[j] = parse(*line, target_idx, &rec[target_idx])?;
    }

    let mut ds = Dataset::new(features, targets, specs)?;
    ds.refresh_ranges();
    Ok(ds)
}

/// Writes features (categorical codes as their level names) followed by the target.
pub fn write_csv<T: Scalar, W: Write>(dataset: &Dataset<T>, writer: W, target_name: &str) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = dataset.feature_names();
    header.push(target_name.to_string());
    wtr.write_record(&header)?;
    let x = dataset.features();
    let y = dataset.targets();
    let mut row = Vec::with_capacity(header.len());
    for j in 0..dataset.len() {
        row.clear();
        for (i, spec) in dataset.specs().iter().enumerate() {
            let v = x[[j, i]];
            if spec.is_categorical() {
                let code = v.as_f64() as usize;
                row.push(spec.levels.get(code).cloned().unwrap_or_else(|| code.to_string()));
            } else {
                row.push(v.as_f64().to_string());
            }
        }
        row.push(y[j].as_f64().to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows() {
        let ds: Dataset<f64> = read_csv("a,b,y\n1,2,3\n4,5,6\n7,8,9\n".as_bytes(), "y", None).unwrap();
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.targets().to_vec(), vec![3.0, 6.0, 9.0]);
        assert_eq!(ds.specs()[1].observed_min, 2.0);
        assert_eq!(ds.specs()[1].observed_max, 8.0);
    }

    #[test]
    fn missing_target_names_column() {
        let err = read_csv::<f64, _>("a,b\n1,2\n".as_bytes(), "y", None).unwrap_err();
        assert!(matches!(&err, Error::MissingColumn(c) if c == "y"));
        assert!(err.to_string().contains("`y`"));
    }

    #[test]
    fn header_only_is_empty() {
        let err = read_csv::<f64, _>("a,b,y\n".as_bytes(), "y", None).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset));
        let err = read_csv::<f64, _>("".as_bytes(), "y", None).unwrap_err();
        assert!(matches!(err, Error::EmptyDataset | Error::MissingColumn(_)));
    }

    #[test]
    fn bad_cell_reports_location() {
        let err = read_csv::<f64, _>("a,y\n1,2\nfoo,3\n".as_bytes(), "y", None).unwrap_err();
        match err {
            Error::ParseCell { row, column, value } => {
                assert_eq!(row, 3);
                assert_eq!(column, "a");
                assert_eq!(value, "foo");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn categorical_schema() {
        let schema: CsvSchema = serde_json::from_str(r#"{"soil": {"kind": "categorical"}}"#).unwrap();
        let ds: Dataset<f64> =
            read_csv("soil,a,y\nloam,1,0\nclay,2,1\nloam,3,2\n".as_bytes(), "y", Some(&schema)).unwrap();
        assert!(ds.specs()[0].is_categorical());
        assert_eq!(ds.specs()[0].levels, vec!["clay", "loam"]);
        assert_eq!(ds.features().column(0).to_vec(), vec![1.0, 0.0, 1.0]);

        let mut buf = Vec::new();
        write_csv(&ds, &mut buf, "y").unwrap();
        let back: Dataset<f64> = read_csv(buf.as_slice(), "y", Some(&schema)).unwrap();
        assert_eq!(back, ds);
    }
}
