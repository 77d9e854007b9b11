//! Dataset ingestion: tabular CSV and IDX image files.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bandit::{standardize, LabeledData};
use crate::continual::ImageSet;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Environment variable naming the directory relative dataset paths resolve against.
pub const DATA_ROOT_ENV: &str = "NTK_LENS_DATA";

/// Absolute paths pass through; relative ones resolve against
/// `$NTK_LENS_DATA` when set, else the working directory.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(DATA_ROOT_ENV) {
        Some(root) => Path::new(&root).join(path),
        None => path.to_path_buf(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSchema {
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// All other columns when absent.
    #[serde(default)]
    pub feature_columns: Option<Vec<String>>,
}

fn default_label_column() -> String {
    "label".into()
}

impl Default for TabularSchema {
    fn default() -> Self {
        TabularSchema {
            label_column: default_label_column(),
            feature_columns: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularDataset {
    /// Standardized features.
    pub features: Matrix,
    /// Features as read.
    pub raw_features: Matrix,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Raw label value of each class index.
    pub classes: Vec<String>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl TabularDataset {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn to_labeled(&self) -> Result<LabeledData> {
        LabeledData::new(self.features.clone(), self.labels.clone(), self.num_classes())
    }
}

fn parse_err(line: u64, column: &str, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Reads a headered CSV. Class indices follow the sorted distinct label
/// values (numerically when every label is an integer). Features are
/// z-scored with the statistics stored alongside.
pub fn load_tabular_csv(path: &Path, schema: &TabularSchema) -> Result<TabularDataset> {
    let text = fs::read(path)?;
    parse_tabular_csv(&text, schema)
}

pub fn parse_tabular_csv(bytes: &[u8], schema: &TabularSchema) -> Result<TabularDataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(parse_err(1, "", "empty file or missing header row"));
    }
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(1, name, format!("missing column '{name}'")))
    };
    let label_idx = find(&schema.label_column)?;
    let feature_names: Vec<String> = match &schema.feature_columns {
        Some(cols) => cols.clone(),
        None => header.iter().filter(|h| **h != schema.label_column).cloned().collect(),
    };
    let feature_idx = feature_names.iter().map(|n| find(n)).collect::<Result<Vec<_>>>()?;
    if feature_idx.is_empty() {
        return Err(parse_err(1, "", "no feature columns"));
    }
    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for (row, rec) in reader.records().enumerate() {
        let line = row as u64 + 2;
        let rec = rec.map_err(|e| parse_err(line, "", e.to_string()))?;
        if rec.len() != header.len() {
            return Err(parse_err(line, "", format!("{} fields, header has {}", rec.len(), header.len())));
        }
        for (&j, name) in feature_idx.iter().zip(&feature_names) {
            let cell = rec[j].trim();
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(line, name, format!("non-numeric value '{cell}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line, name, format!("non-finite value '{cell}'")));
            }
            data.push(v);
        }
        let label = rec[label_idx].trim();
        if label.is_empty() {
            return Err(parse_err(line, &schema.label_column, "empty label"));
        }
        raw_labels.push(label.to_string());
    }
    if raw_labels.is_empty() {
        return Err(parse_err(2, "", "no data rows"));
    }
    let distinct: BTreeSet<&str> = raw_labels.iter().map(String::as_str).collect();
    let mut classes: Vec<String> = distinct.into_iter().map(str::to_string).collect();
    if classes.iter().all(|c| c.parse::<u64>().is_ok()) {
        classes.sort_by_key(|c| c.parse::<u64>().expect("checked"));
    }
    let labels = raw_labels
        .iter()
        .map(|l| classes.iter().position(|c| c == l).expect("collected above"))
        .collect();
    let raw_features = Matrix::from_vec(raw_labels.len(), feature_idx.len(), data)?;
    let mut features = raw_features.clone();
    let (means, stds) = standardize(&mut features);
    Ok(TabularDataset {
        features,
        raw_features,
        labels,
        feature_names,
        classes,
        means,
        stds,
    })
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

/// `(count, rows, cols, pixels / 255)` from an unsigned-byte IDX3 file.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<f64>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let (n, r, c) = (be_u32(bytes, 4)? as usize, be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    let need = n.checked_mul(r).and_then(|v| v.checked_mul(c)).ok_or_else(|| Error::Format("IDX dimensions overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != need {
        return Err(Error::Format(format!("IDX image body has {} bytes, header promises {need}", body.len())));
    }
    Ok((n, r, c, body.iter().map(|&b| b as f64 / 255.0).collect()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!("IDX label body has {} bytes, header promises {n}", body.len())));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Square images plus labels from an IDX3/IDX1 pair.
pub fn load_idx_images(images: &Path, labels: &Path) -> Result<ImageSet> {
    let (n, r, c, pixels) = parse_idx_images(&fs::read(images)?)?;
    let labels = parse_idx_labels(&fs::read(labels)?)?;
    if r != c {
        return Err(Error::Shape(format!("{r}x{c} images are not square")));
    }
    if labels.len() != n {
        return Err(Error::Format(format!("{n} images but {} labels", labels.len())));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    ImageSet::new(r, Matrix::from_vec(n, r * c, pixels)?, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn idx_round_trip_and_truncation() {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend([0u8, 255, 51, 102, 1, 2, 3, 4]);
        let (n, r, c, px) = parse_idx_images(&img).unwrap();
        assert_eq!((n, r, c), (2, 2, 2));
        assert_eq!(&px[..4], &[0.0, 1.0, 0.2, 0.4]);
        assert!(matches!(parse_idx_images(&img[..20]), Err(Error::Format(_))));
        assert!(matches!(parse_idx_labels(&img), Err(Error::Format(_))));
    }

    #[test]
    fn csv_errors_name_location() {
        let s = TabularSchema::default();
        match parse_tabular_csv(b"a,b,label\n1,2,x\n3,NaN,y\n", &s) {
            Err(Error::Parse { line, column, .. }) => assert_eq!((line, column.as_str()), (3, "b")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_tabular_csv(b"a,b\n1,2\n", &s), Err(Error::Parse { .. })));
        assert!(matches!(parse_tabular_csv(b"", &s), Err(Error::Parse { .. })));
    }
}
