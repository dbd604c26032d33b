//! Tabular ingestion: raw CSV tables, column schemas, and one-hot encoding.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ProbeError, Result};
use crate::math::argmax;
use crate::types::{DataPoint, Dataset, Task};

/// How a raw column maps into model units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ColumnKind {
    Numeric,
    /// Ordered levels encoded as their rank; without levels the column is parsed as a number.
    Ordinal {
        #[serde(default)]
        levels: Vec<String>,
    },
    Categorical {
        categories: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    #[serde(flatten)]
    pub kind: ColumnKind,
}

/// Label column; `classes` present means classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub column: String,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
}

/// Sidecar description of a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default = "schema_version")]
    pub version: u32,
    pub columns: Vec<ColumnSchema>,
    #[serde(default)]
    pub label: Option<LabelSchema>,
}

fn schema_version() -> u32 {
    1
}

impl Schema {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(s).map_err(|e| ProbeError::Format(e.to_string()))?;
        if schema.version != 1 {
            return Err(ProbeError::Format(format!(
                "unsupported schema version {}",
                schema.version
            )));
        }
        Ok(schema)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// All-numeric schema over the given column names.
    pub fn numeric(names: &[&str]) -> Self {
        Self {
            version: 1,
            columns: names
                .iter()
                .map(|n| ColumnSchema {
                    name: n.to_string(),
                    kind: ColumnKind::Numeric,
                })
                .collect(),
            label: None,
        }
    }
}

/// One column's slot in the encoded feature vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub offset: usize,
    pub width: usize,
}

/// Records how raw columns expanded so samples can be decoded back.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EncodingMap {
    pub columns: Vec<EncodedColumn>,
}

impl EncodingMap {
    pub fn numeric(names: &[String]) -> Self {
        Self {
            columns: names
                .iter()
                .enumerate()
                .map(|(i, n)| EncodedColumn {
                    name: n.clone(),
                    kind: ColumnKind::Numeric,
                    offset: i,
                    width: 1,
                })
                .collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.columns.iter().map(|c| c.width).sum()
    }
}

/// A decoded cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RawValue {
    Number(f64),
    Category(String),
}

/// Header plus string cells, as read from CSV.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut rows = Vec::new();
        for rec in rdr.records() {
            rows.push(rec?.iter().map(|c| c.trim().to_string()).collect());
        }
        Ok(Self { headers, rows })
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    fn column_index(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ProbeError::Format(format!("CSV has no column named `{name}`")))
    }
}

fn is_missing(cell: &str) -> bool {
    matches!(cell, "" | "NA" | "N/A" | "NaN" | "nan" | "?" | "null")
}

/// Expands categorical columns into indicator blocks and passes numerics through.
///
/// Rows with a missing value in any schema column are dropped and the count is logged.
pub fn one_hot_encode(table: &RawTable, schema: &Schema) -> Result<Dataset> {
    let mut encoded = Vec::with_capacity(schema.columns.len());
    let mut feature_names = Vec::new();
    let mut offset = 0;
    for col in &schema.columns {
        let width = match &col.kind {
            ColumnKind::Numeric | ColumnKind::Ordinal { .. } => {
                feature_names.push(col.name.clone());
                1
            }
            ColumnKind::Categorical { categories } => {
                if categories.is_empty() {
                    return Err(ProbeError::Spec(format!(
                        "categorical column `{}` has no categories",
                        col.name
                    )));
                }
                feature_names.extend(categories.iter().map(|c| format!("{}={}", col.name, c)));
                categories.len()
            }
        };
        encoded.push(EncodedColumn {
            name: col.name.clone(),
            kind: col.kind.clone(),
            offset,
            width,
        });
        offset += width;
    }
    let map = EncodingMap { columns: encoded };

    let indices: Vec<usize> = schema
        .columns
        .iter()
        .map(|c| table.column_index(&c.name))
        .collect::<Result<_>>()?;
    let label_idx = match &schema.label {
        Some(l) => Some(table.column_index(&l.column)?),
        None => None,
    };
    let class_lookup: Option<HashMap<&str, usize>> = schema
        .label
        .as_ref()
        .and_then(|l| l.classes.as_ref())
        .map(|cs| cs.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect());
    let task = match (&schema.label, &class_lookup) {
        (Some(_), Some(lookup)) => Task::Classification {
            n_classes: lookup.len(),
        },
        _ => Task::Regression,
    };

    let mut points = Vec::with_capacity(table.rows.len());
    let mut dropped = 0usize;
    'rows: for (r, row) in table.rows.iter().enumerate() {
        let mut x = vec![0.0; offset];
        for (col, &ci) in map.columns.iter().zip(&indices) {
            let cell = row.get(ci).map(String::as_str).unwrap_or("");
            if is_missing(cell) {
                dropped += 1;
                continue 'rows;
            }
            let err = |message: String| ProbeError::Encoding {
                row: r,
                column: col.name.clone(),
                message,
            };
            match &col.kind {
                ColumnKind::Numeric => {
                    x[col.offset] = cell.parse().map_err(|_| err(format!("`{cell}` is not a number")))?;
                }
                ColumnKind::Ordinal { levels } if levels.is_empty() => {
                    x[col.offset] = cell.parse().map_err(|_| err(format!("`{cell}` is not a number")))?;
                }
                ColumnKind::Ordinal { levels } => {
                    let k = levels
                        .iter()
                        .position(|l| l == cell)
                        .ok_or_else(|| err(format!("unknown level `{cell}`")))?;
                    x[col.offset] = k as f64;
                }
                ColumnKind::Categorical { categories } => {
                    let k = categories
                        .iter()
                        .position(|c| c == cell)
                        .ok_or_else(|| err(format!("unknown category `{cell}`")))?;
                    x[col.offset + k] = 1.0;
                }
            }
        }
        let label = match label_idx {
            None => None,
            Some(li) => {
                let cell = row.get(li).map(String::as_str).unwrap_or("");
                if is_missing(cell) {
                    dropped += 1;
                    continue 'rows;
                }
                let column = schema.label.as_ref().map(|l| l.column.clone()).unwrap_or_default();
                Some(match &class_lookup {
                    Some(lookup) => *lookup.get(cell).ok_or_else(|| ProbeError::Encoding {
                        row: r,
                        column: column.clone(),
                        message: format!("unknown class `{cell}`"),
                    })? as f64,
                    None => cell.parse().map_err(|_| ProbeError::Encoding {
                        row: r,
                        column,
                        message: format!("`{cell}` is not a number"),
                    })?,
                })
            }
        };
        points.push(DataPoint::new(x, label));
    }
    if dropped > 0 {
        log::info!("dropped {dropped} rows with missing values");
    }
    Dataset::with_encoding(points, feature_names, map, task)
}

/// Maps an encoded vector back to raw cells.
///
/// Each categorical block decodes to its largest coordinate (lowest index on ties);
/// ordinal levels round to the nearest rank.
pub fn decode_sample(x: &[f64], map: &EncodingMap) -> Vec<RawValue> {
    map.columns
        .iter()
        .map(|col| match &col.kind {
            ColumnKind::Numeric => RawValue::Number(x[col.offset]),
            ColumnKind::Ordinal { levels } if levels.is_empty() => RawValue::Number(x[col.offset]),
            ColumnKind::Ordinal { levels } => {
                let k = x[col.offset].round().clamp(0.0, (levels.len() - 1) as f64) as usize;
                RawValue::Category(levels[k].clone())
            }
            ColumnKind::Categorical { categories } => {
                let block = &x[col.offset..col.offset + col.width];
                RawValue::Category(categories[argmax(block)].clone())
            }
        })
        .collect()
}
