//! CSV reading and writing for [`Dataset`]s.
//!
//! Numeric columns are parsed as `f64`. Columns named in
//! [`CsvOptions::categorical`] are one-hot encoded with categories in
//! lexicographic order, producing one `name=category` column each.

use std::collections::BTreeSet;
use std::io::{Read, Write};

use super::dataset::{Dataset, DatasetSchema};
use super::ModelError;
use crate::payload::{FeatureSchema, FeatureVector, Labels};

#[derive(Debug, Clone)]
pub struct CsvOptions {
    pub schema_id: String,
    /// Label column name; the last column when `None`.
    pub label_column: Option<String>,
    pub categorical: Vec<String>,
    /// Expected (encoded) feature names, checked after encoding.
    pub expected_features: Option<Vec<String>>,
    /// Class order; sorted unique labels when `None`.
    pub classes: Option<Vec<String>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        CsvOptions {
            schema_id: "dataset".into(),
            label_column: None,
            categorical: Vec::new(),
            expected_features: None,
            classes: None,
        }
    }
}

enum Column {
    Numeric { name: String, source: usize },
    OneHot { name: String, source: usize, category: String },
}

pub fn load_csv<R: Read>(reader: R, source: &str, opts: &CsvOptions) -> Result<Dataset, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(String::is_empty) {
        return Err(ModelError::SchemaMismatch("missing header row".into()));
    }
    let label_col = match &opts.label_column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelError::SchemaMismatch(format!("no label column `{name}`")))?,
        None => header.len() - 1,
    };
    for c in &opts.categorical {
        if !header.contains(c) {
            return Err(ModelError::SchemaMismatch(format!("no categorical column `{c}`")));
        }
    }

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) as usize;
        if rec.len() != header.len() {
            return Err(ModelError::Parse {
                line,
                column: rec.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), rec.len()),
            });
        }
        records.push((line, rec));
    }

    let mut columns = Vec::new();
    for (j, name) in header.iter().enumerate() {
        if j == label_col {
            continue;
        }
        if opts.categorical.contains(name) {
            let cats: BTreeSet<&str> = records.iter().map(|(_, r)| &r[j]).collect();
            for cat in cats {
                columns.push(Column::OneHot {
                    name: format!("{name}={cat}"),
                    source: j,
                    category: cat.to_string(),
                });
            }
        } else {
            columns.push(Column::Numeric {
                name: name.clone(),
                source: j,
            });
        }
    }
    let names: Vec<String> = columns
        .iter()
        .map(|c| match c {
            Column::Numeric { name, .. } | Column::OneHot { name, .. } => name.clone(),
        })
        .collect();
    if let Some(expected) = &opts.expected_features {
        if *expected != names {
            return Err(ModelError::SchemaMismatch(format!(
                "expected features {expected:?}, found {names:?}"
            )));
        }
    }
    let features = FeatureSchema::new(opts.schema_id.clone(), names)?;

    let classes: Labels = match &opts.classes {
        Some(c) => c.iter().cloned().collect(),
        None => records
            .iter()
            .map(|(_, r)| r[label_col].to_string())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let schema = DatasetSchema::new(features.clone(), classes)?;

    let mut rows = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (line, rec) in &records {
        let mut values = Vec::with_capacity(columns.len());
        for col in &columns {
            match col {
                Column::Numeric { source, .. } => {
                    let raw = &rec[*source];
                    let v: f64 = raw.parse().map_err(|_| ModelError::Parse {
                        line: *line,
                        column: source + 1,
                        message: format!("`{raw}` is not a number"),
                    })?;
                    if !v.is_finite() {
                        return Err(ModelError::Parse {
                            line: *line,
                            column: source + 1,
                            message: format!("`{raw}` is not finite"),
                        });
                    }
                    values.push(v);
                }
                Column::OneHot {
                    source, category, ..
                } => values.push(if &rec[*source] == category { 1.0 } else { 0.0 }),
            }
        }
        rows.push(FeatureVector::new(features.clone(), values)?);
        let label = &rec[label_col];
        labels.push(
            schema
                .class_index(label)
                .ok_or_else(|| ModelError::SchemaMismatch(format!("unknown label `{label}` on line {line}")))?,
        );
    }
    Dataset::from_indices(schema, rows, labels, source)
}

/// Reads feature-only rows (an optional label column is ignored) for inference.
pub fn load_instances<R: Read>(
    reader: R,
    schema: &std::sync::Arc<FeatureSchema>,
    label_column: Option<&str>,
) -> Result<Vec<FeatureVector>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| csv_error(e, 1))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut positions = Vec::with_capacity(schema.len());
    for name in &schema.names {
        let pos = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ModelError::SchemaMismatch(format!("missing column `{name}`")))?;
        positions.push(pos);
    }
    for h in &header {
        if schema.index_of(h).is_none() && Some(h.as_str()) != label_column {
            return Err(ModelError::SchemaMismatch(format!("unexpected column `{h}`")));
        }
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_error(e, 0))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0) as usize;
        let values = positions
            .iter()
            .map(|&p| {
                let raw = rec.get(p).unwrap_or("");
                raw.parse::<f64>().map_err(|_| ModelError::Parse {
                    line,
                    column: p + 1,
                    message: format!("`{raw}` is not a number"),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        out.push(FeatureVector::new(schema.clone(), values)?);
    }
    Ok(out)
}

/// Writes features followed by a `label` column.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<(), ModelError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.features().names.iter().map(String::as_str).collect();
    header.push("label");
    w.write_record(&header).map_err(|e| csv_error(e, 0))?;
    for (i, row) in data.rows().iter().enumerate() {
        let mut rec: Vec<String> = row.values().iter().map(|v| v.to_string()).collect();
        rec.push(data.label(i).to_string());
        w.write_record(&rec).map_err(|e| csv_error(e, 0))?;
    }
    w.flush().map_err(|e| ModelError::Io(e.to_string()))?;
    Ok(())
}

fn csv_error(e: csv::Error, fallback_line: usize) -> ModelError {
    let line = e
        .position()
        .map(|p| p.line() as usize)
        .unwrap_or(fallback_line);
    ModelError::Parse {
        line,
        column: 0,
        message: e.to_string(),
    }
}
