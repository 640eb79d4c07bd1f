//! CSV ingestion.
//!
//! Two formats: the native dataset layout written by [`write_dataset`]
//! (header `x1..xd,g1..gk,y`, all numeric), and arbitrary tabular files read
//! through a [`CsvSchema`].

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, GroupMask, Row, MAX_GROUPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Numeric feature columns.
    pub feature_cols: Vec<String>,
    /// Feature columns to one-hot encode.
    #[serde(default)]
    pub categorical_cols: Vec<String>,
    /// 0/1 group-membership columns, in group order.
    pub group_cols: Vec<String>,
    pub label_col: String,
    /// Label value counted as positive; when absent the label must be 0/1.
    #[serde(default)]
    pub positive_label: Option<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "?")
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::SchemaMismatch(format!("column {name:?} not in header")))
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    load_csv_from(std::fs::File::open(path)?, schema)
}

/// Reads a tabular file: drops rows with any missing cell in a schema
/// column, one-hot encodes categorical columns (levels in order of first
/// appearance among kept rows), and appends the one-hot blocks after the
/// numeric features.
pub fn load_csv_from<R: Read>(reader: R, schema: &CsvSchema) -> Result<Dataset> {
    let k = schema.group_cols.len();
    if k == 0 || k > MAX_GROUPS {
        return Err(Error::SchemaMismatch(format!("need 1..={MAX_GROUPS} group columns, got {k}")));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let num_idx: Vec<usize> = schema.feature_cols.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;
    let cat_idx: Vec<usize> = schema.categorical_cols.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;
    let grp_idx: Vec<usize> = schema.group_cols.iter().map(|c| column(&headers, c)).collect::<Result<_>>()?;
    let label_idx = column(&headers, &schema.label_col)?;
    let used: Vec<usize> = num_idx.iter().chain(&cat_idx).chain(&grp_idx).copied().chain([label_idx]).collect();

    struct Parsed {
        numeric: Vec<f64>,
        levels: Vec<usize>,
        mask: GroupMask,
        label: bool,
    }
    let mut levels: Vec<HashMap<String, usize>> = vec![HashMap::new(); cat_idx.len()];
    let mut parsed = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let cell = |i: usize| rec.get(i).unwrap_or("").trim();
        if used.iter().any(|&i| is_missing(cell(i))) {
            continue;
        }
        let numeric = num_idx
            .iter()
            .zip(&schema.feature_cols)
            .map(|(&i, name)| {
                cell(i).parse::<f64>().map_err(|_| {
                    Error::SchemaMismatch(format!("row {}: column {name:?} value {:?} is not numeric", line + 1, cell(i)))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mask = GroupMask::EMPTY;
        for (g, (&i, name)) in grp_idx.iter().zip(&schema.group_cols).enumerate() {
            match cell(i) {
                "1" => mask.0 |= 1 << g,
                "0" => {}
                other => return Err(Error::NonBinaryGroupColumn { column: name.clone(), value: other.to_string() }),
            }
        }
        let raw = cell(label_idx);
        let label = match &schema.positive_label {
            Some(pos) => raw == pos.as_str(),
            None => match raw {
                "1" => true,
                "0" => false,
                other => {
                    return Err(Error::SchemaMismatch(format!(
                        "label {other:?} is not 0/1; set positive_label"
                    )))
                }
            },
        };
        let row_levels = cat_idx
            .iter()
            .zip(levels.iter_mut())
            .map(|(&i, map)| {
                let n = map.len();
                *map.entry(cell(i).to_string()).or_insert(n)
            })
            .collect();
        parsed.push(Parsed { numeric, levels: row_levels, mask, label });
    }
    if parsed.is_empty() {
        return Err(Error::EmptyAfterCleaning);
    }
    let widths: Vec<usize> = levels.iter().map(HashMap::len).collect();
    let dim = num_idx.len() + widths.iter().sum::<usize>();
    let rows = parsed
        .into_iter()
        .map(|p| {
            let mut features = p.numeric;
            for (&level, &width) in p.levels.iter().zip(&widths) {
                features.extend((0..width).map(|j| if j == level { 1.0 } else { 0.0 }));
            }
            Row::new(features, p.mask, p.label)
        })
        .collect();
    Dataset::with_ids(k, dim, rows)
}

/// Header of the native layout.
pub fn dataset_header(feature_dim: usize, k: usize) -> Vec<String> {
    (1..=feature_dim)
        .map(|j| format!("x{j}"))
        .chain((1..=k).map(|g| format!("g{g}")))
        .chain(["y".to_string()])
        .collect()
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(dataset_header(data.feature_dim(), data.k()))?;
    let mut fields = Vec::with_capacity(data.feature_dim() + data.k() + 1);
    for row in data.rows() {
        fields.clear();
        fields.extend(row.features.iter().map(|x| x.to_string()));
        fields.extend((0..data.k()).map(|g| if row.mask.contains(g) { "1" } else { "0" }.to_string()));
        fields.push(if row.label { "1" } else { "0" }.to_string());
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Reads the native layout; the feature and group counts come from the header.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    let d = names.iter().take_while(|h| h.starts_with('x')).count();
    let k = names[d..].iter().take_while(|h| h.starts_with('g')).count();
    let expected = dataset_header(d, k);
    if names != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::SchemaMismatch(format!("expected header {}", expected.join(","))));
    }
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::SchemaMismatch(format!("row {}: {what}", line + 1));
        let features = (0..d)
            .map(|j| rec[j].trim().parse::<f64>().map_err(|_| bad("non-numeric feature")))
            .collect::<Result<Vec<_>>>()?;
        let mut mask = GroupMask::EMPTY;
        for g in 0..k {
            match rec[d + g].trim() {
                "1" => mask.0 |= 1 << g,
                "0" => {}
                other => {
                    return Err(Error::NonBinaryGroupColumn { column: format!("g{}", g + 1), value: other.to_string() })
                }
            }
        }
        let label = match rec[d + k].trim() {
            "1" => true,
            "0" => false,
            _ => return Err(bad("label must be 0/1")),
        };
        rows.push(Row::new(features, mask, label));
    }
    Dataset::with_ids(k, d, rows)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    read_dataset(std::fs::File::open(path)?)
}
